"""Backend selection for the hot loops.

The compiled extension ``rilab._core`` is used when it imports; otherwise the
pure-Python twins from :mod:`rilab._pycore` are used. Setting the environment
variable ``RILAB_PURE_PYTHON=1`` forces the fallback. Both backends consume
the bit generator identically, so results do not depend on the backend.
"""
import os

from . import _pycore

BACKEND = "python"
_impl = _pycore

if os.environ.get("RILAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pycore

escape_walks = _impl.escape_walks
return_counts = _impl.return_counts
trace_chain = _impl.trace_chain
killed_chain = _impl.killed_chain
label_components = _impl.label_components


def backend(name=None):
    """Return the kernel namespace for ``name`` (``"cython"``, ``"python"`` or the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _pycore
    if name == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
