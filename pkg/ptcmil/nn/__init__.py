"""
ptcmil.nn
~~~~~~~~~

Building blocks shared by the global and the local encoder: linear maps, layer
normalization, multi-head self-attention and the parameter registry.
"""

from .init import xavier_bound, xavier_uniform_init
from .layers import MLP, EncoderLayer, LayerNorm, Linear, Module, MultiHeadSelfAttention, encoder_forward
from .params import ModelParams, ParamEntry

__all__ = (
    "xavier_bound",
    "xavier_uniform_init",
    "Module",
    "Linear",
    "LayerNorm",
    "MultiHeadSelfAttention",
    "MLP",
    "EncoderLayer",
    "encoder_forward",
    "ModelParams",
    "ParamEntry",
)
