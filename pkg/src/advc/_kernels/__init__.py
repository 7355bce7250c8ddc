"""Hot-loop kernels with backend selection.

The compiled Cython extension is used when available; a pure-numpy
fallback otherwise.  ADVC_BACKEND=python forces the fallback and
ADVC_BACKEND=compiled fails loudly if the extension is missing.
"""

import os

_requested = os.environ.get("ADVC_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "python"):
    raise ImportError(f"ADVC_BACKEND must be auto, compiled or python, got {_requested!r}")

if _requested == "python":
    from . import _ref as _impl

    BACKEND = "python"
else:
    try:
        from . import _fast as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _ref as _impl

        BACKEND = "python"

rbf_field = _impl.rbf_field
splat = _impl.splat

__all__ = ["BACKEND", "rbf_field", "splat"]
