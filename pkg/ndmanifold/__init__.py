# ruff: noqa: F401, F403

from .autodiff import *
from .checkpoint import *
from .checks import *
from .config import *
from .coupling import *
from .datasets import *
from .exceptions import *
from .geometry import *
from .losses import *
from .mlp import *
from .model import *
from .optim import *
from .report import *
from .train import *
from .types import *
