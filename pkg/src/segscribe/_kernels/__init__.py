"""Semi-Markov chart kernels: compiled extension with numpy fallback.

The compiled backend is used when available; set SEGSCRIBE_PURE_PYTHON=1
to force the fallback (useful for benchmarking and debugging).  Both
backends implement the same contract, documented in _numpy_impl.
"""

import os

from . import _numpy_impl

if os.environ.get("SEGSCRIBE_PURE_PYTHON", "0") not in ("0", ""):
    _impl = _numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import _semimarkov as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _numpy_impl
        BACKEND = "numpy"

forward_log = _impl.forward_log
backward_log = _impl.backward_log
viterbi = _impl.viterbi

__all__ = ["forward_log", "backward_log", "viterbi", "BACKEND"]
