"""Multi-hop label-wise attention for long-document multi-label classification.

Documents are split into fixed-length chunks, encoded with a shared
transformer, stitched back to full length, and refined by N hops of
bidirectional label-token attention; label-specific classifiers score the
final label representations. Built on a minimal float64 autodiff core with
compiled hot kernels and a pure-Python fallback.
"""

from mhlat.backend import backend_name
from mhlat.model import Model, ModelConfig
from mhlat.params import ParamStore, partition_for_mode
from mhlat.tensor import Tape, Tensor, finite_diff_check

__version__ = "0.1.0"

__all__ = [
    "Model",
    "ModelConfig",
    "ParamStore",
    "Tape",
    "Tensor",
    "backend_name",
    "finite_diff_check",
    "partition_for_mode",
    "__version__",
]
