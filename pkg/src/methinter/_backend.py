"""Select the smoothing kernel implementation at import time.

The compiled extension is used when it is importable; setting the
environment variable ``METHINTER_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

COMPILED = False
kernels = _kernels_py

if os.environ.get("METHINTER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        COMPILED = True

BACKEND = "compiled" if COMPILED else "python"
