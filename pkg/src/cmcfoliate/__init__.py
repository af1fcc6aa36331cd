"""Free-boundary CMC hemispheres near a nondegenerate critical point of the
boundary mean curvature: series, metric expansion, spectral hemisphere,
mean curvature, Lyapunov-Schmidt solver and command line."""

import os as _os

# CMC_THREADS caps BLAS worker threads; it must be applied before numpy loads.
_threads = _os.environ.get("CMC_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .errors import CMCError  # noqa: E402

__version__ = "0.1.0"
SCHEMA = "cmcfoliate/1"

__all__ = ["CMCError", "SCHEMA", "__version__"]
