"""Select the Euler-Maruyama kernel implementation at import time.

The compiled extension is preferred. Set ``FEPLAB_BACKEND=python`` to force
the numpy fallback (useful for benchmarking and for checking agreement).
"""
import os

from . import _fallback

fallback = _fallback

try:
    from . import _emkernel as compiled
except ImportError:  # extension not built
    compiled = None

if os.environ.get("FEPLAB_BACKEND", "").lower() == "python" or compiled is None:
    kernels = _fallback
    BACKEND = "python"
else:
    kernels = compiled
    BACKEND = "compiled"
