"""
This module implements metric fields and the differential geometry computed from them.
"""

# ruff: noqa: F401, F403

from .curvature import *
from .fields import *
from .geodesic import *
from .metric import *
