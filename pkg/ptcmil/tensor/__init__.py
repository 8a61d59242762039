"""
ptcmil.tensor
~~~~~~~~~~~~~

Dense tensors with a reverse-mode tape and a finite-difference gradient oracle.
"""

from . import ops
from .core import Graph, Node, Parameter, Tensor, as_tensor, backward, get_default_dtype, set_default_dtype
from .gradcheck import finite_diff_check, finite_diff_errors

__all__ = (
    "Tensor",
    "Parameter",
    "Node",
    "Graph",
    "as_tensor",
    "backward",
    "get_default_dtype",
    "set_default_dtype",
    "finite_diff_check",
    "finite_diff_errors",
    "ops",
)
