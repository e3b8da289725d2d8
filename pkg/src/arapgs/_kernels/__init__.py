"""Kernel backend selection.

The compiled Cython kernels are used when available; the pure-numpy twins are
the fallback.  Set ARAPGS_FORCE_NUMPY=1 to force the fallback (used by the
benchmark and by tests that compare the two backends).
"""

import os

from . import _rast_np

if os.environ.get("ARAPGS_FORCE_NUMPY"):
    _impl = _rast_np
else:
    try:
        from . import _rast_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _rast_np

composite = _impl.composite
composite_weights = _impl.composite_weights
fill_ellipses = _impl.fill_ellipses

Q_MAX = _rast_np.Q_MAX
MIN_CONTRIB = _rast_np.MIN_CONTRIB
T_STOP = _rast_np.T_STOP


def backend() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    return "cython" if _impl.__name__.endswith("_rast_cy") else "numpy"
