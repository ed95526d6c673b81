"""Backend selection for the hot kernels.

The compiled extension ``dcsolve._kernels`` is used when it imports
cleanly; otherwise (or when ``DCSOLVE_PURE_PYTHON`` is set to a non-empty
value) the NumPy implementations in ``dcsolve._kernels_py`` are used.
Both expose the same functions with the same signatures.
"""

import os

from . import _kernels_py

_compiled = None
if not os.environ.get("DCSOLVE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

_active = _compiled if _compiled is not None else _kernels_py

BACKEND = "compiled" if _compiled is not None else "python"

soft_threshold = _active.soft_threshold
sfs_value_grad = _active.sfs_value_grad
dykstra_ball_halfspace = _active.dykstra_ball_halfspace


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    else:
        try:
            from . import _kernels
        except ImportError:
            pass
        else:
            out["compiled"] = _kernels
    return out
