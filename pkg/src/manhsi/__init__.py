"""manhsi: mixed-attention hyperspectral image denoising at desk scale.

Subpackages: ``tensor`` (autodiff engine), ``mhrsa``/``psca``/``asc``
(the attention blocks), ``network`` (the encoder-decoder), ``noise``,
``metrics``, ``hsidata``, ``trainer``, ``checkpoint``, and ``cli``.
"""

from .errors import (ConfigError, ContractError, DimensionError, FormatError,
                     GeometryError, ManhsiError, NumericError, TrainingDivergence)
from .tensor import Tape, Tensor, backward, gradcheck

__all__ = [
    "Tape", "Tensor", "backward", "gradcheck",
    "ManhsiError", "DimensionError", "GeometryError", "ContractError",
    "ConfigError", "NumericError", "FormatError", "TrainingDivergence",
]

__version__ = "0.1.0"
