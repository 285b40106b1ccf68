"""Hot-loop kernels with a compiled backend and a pure numpy fallback.

The compiled extension is used when it imports; set ``V2XSCHED_PURE_PYTHON=1`` to
force the fallback. ``BACKEND`` names the active one.
"""
import importlib
import os

from . import _pykernels


def _load_compiled(respect_env=True):
    if respect_env and os.environ.get("V2XSCHED_PURE_PYTHON", "") in ("1", "true", "yes"):
        return None
    try:
        return importlib.import_module(__name__ + "._ckernels")
    except ImportError:  # extension not built
        return None


_compiled = _load_compiled()
_impl = _compiled if _compiled is not None else _pykernels
BACKEND = "cython" if _compiled is not None else "python"

cam_scan = _impl.cam_scan
gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward
candidate_mask = _impl.candidate_mask


def backends():
    """Available kernel modules keyed by name (for equivalence tests and benchmarks)."""
    out = {"python": _pykernels}
    compiled = _compiled or _load_compiled(respect_env=False)
    if compiled is not None:
        out["cython"] = compiled
    return out

