"""seqstruct: joint design of protein sequences and C-alpha backbones.

A small numpy/float64 research library built around stacked layers that mix
global sequence attention with rotation- and translation-equivariant
coordinate updates over k-nearest-neighbor graphs.
"""

from .alphabet import ALPHABET
from .data import ProteinRecord
from .layers import Variant
from .model import ModelConfig, Prediction, forward, init_params
from .training import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "ALPHABET",
    "ModelConfig",
    "Prediction",
    "ProteinRecord",
    "TrainConfig",
    "Variant",
    "fit",
    "forward",
    "init_params",
    "__version__",
]
