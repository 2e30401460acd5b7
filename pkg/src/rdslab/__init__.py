"""Numerical laboratory for random expanding circle maps.

Builds Fourier-Galerkin transfer operator cocycles over a driving system,
computes equivariant densities by pullback, response derivatives of the
densities and of the CLT variance, and runs the associated diagnostics
(decay rates, top Lyapunov exponent, empirical CLT).
"""

import os

# Keep BLAS single-threaded so results are reproducible byte-for-byte
# regardless of how many worker threads the runner uses.  Must happen
# before numpy is first imported.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

from .errors import (  # noqa: E402
    ConfigError,
    CrossCheckError,
    DegenerateVarianceError,
    HypothesisFailureError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CrossCheckError",
    "DegenerateVarianceError",
    "HypothesisFailureError",
    "__version__",
]
