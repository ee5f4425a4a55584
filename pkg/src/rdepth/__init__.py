"""Recurrent dense depth + ego-motion estimation with a built-in synthetic renderer."""

import os as _os

# Bound BLAS thread pools before numpy is first imported anywhere in the
# package; intra-op parallelism beyond 1 thread is opt-in via RDEPTH_THREADS
# because bit-level determinism is part of the contract.
_threads = _os.environ.get("RDEPTH_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, _threads)

from .errors import (  # noqa: E402
    CheckpointError,
    ConfigError,
    ContractError,
    NumericError,
    ParseError,
    ShapeError,
)
from .tensor import Tensor  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "ShapeError",
    "ContractError",
    "NumericError",
    "ConfigError",
    "ParseError",
    "CheckpointError",
    "__version__",
]
