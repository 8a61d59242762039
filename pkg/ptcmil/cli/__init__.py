"""
ptcmil.cli
~~~~~~~~~~

The ``ptcmil`` command line: data generation, training, evaluation, few-shot
adaptation, cluster export and the gradient check, configured by flat
``key = value`` files.
"""

from .app import main, setup_logging, tree
from .commands import Command, CommandTree, Context, Option
from .config import FIELDS, SEED_ENV, RunConfig

__all__ = (
    "main",
    "setup_logging",
    "tree",
    "Command",
    "CommandTree",
    "Context",
    "Option",
    "FIELDS",
    "SEED_ENV",
    "RunConfig",
)
