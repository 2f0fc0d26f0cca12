"""End-to-end palmprint recognition on a small numpy autodiff engine."""
import os as _os

# PALMW_THREADS caps BLAS/OpenCV worker threads; must precede the numpy import.
_threads = _os.environ.get("PALMW_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
