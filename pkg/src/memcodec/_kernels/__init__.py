"""Hot inner loops with two interchangeable backends.

The numba backend is used by default. Set ``MEMCODEC_DISABLE_NUMBA=1`` to
force the pure-numpy path (it is also used if numba cannot be imported).
Both backends are importable directly as ``numpy_backend`` and
``numba_backend`` for testing and benchmarking.
"""

import os

from . import _numpy as numpy_backend

try:
    from . import _numba as numba_backend
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_backend = None

_disabled = os.environ.get("MEMCODEC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

if numba_backend is None or _disabled:
    backend = numpy_backend
    BACKEND = "numpy"
else:
    backend = numba_backend
    BACKEND = "numba"

sq_distances = backend.sq_distances
gaussian_density = backend.gaussian_density
evaluate_encodings = backend.evaluate_encodings

__all__ = [
    "BACKEND",
    "evaluate_encodings",
    "gaussian_density",
    "numba_backend",
    "numpy_backend",
    "sq_distances",
]
