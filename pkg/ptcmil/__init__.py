"""
ptcmil
~~~~~~

Prompt token clustering for multiple instance learning, on a small reverse-mode
tensor core.
"""

__version__: str = "0.1.0a"

from .enums import GramSide, PoolingMode, Task
from .errors import *
from .flags import ParamGroup
from .heads import SurvivalLabel
from .model import PTCMIL, ForwardOutput, ModelConfig, parameter_count
