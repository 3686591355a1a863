"""Backend selection for the hot loops.

The compiled extension is used when it imports and ``RDMERR_PURE_PYTHON``
is not set to ``1``. ``BACKEND`` reports which one is active.
"""

import os

from . import _kernels_py

if os.environ.get("RDMERR_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

window_sweep = _impl.window_sweep

# plain cumulative sums; fast enough in NumPy for both backends
pilot_variance_sweep = _kernels_py.pilot_variance_sweep
