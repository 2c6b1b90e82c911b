"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``SEMPATH_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels as python_backend

try:
    if os.environ.get("SEMPATH_PURE_PYTHON") == "1":
        raise ImportError("pure python requested")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

NONE, LASSO, RIDGE, ENET, ALASSO, SCAD, MCP = range(7)

ml_value_grad = backend.ml_value_grad
prox_vec = backend.prox_vec
penalty_value = backend.penalty_value
fill_matrices = backend.fill_matrices
