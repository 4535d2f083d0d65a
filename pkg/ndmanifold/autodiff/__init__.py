"""
This module implements tape-based reverse-mode differentiation on numpy arrays.
"""

# ruff: noqa: F401, F403

from .array import *
from .enums import *
from .gradcheck import *
from .params import *
from .primitives import *
from .tape import *
