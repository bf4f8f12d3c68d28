"""Hot inner loops with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time.  Set ``CSLID_DISABLE_NUMBA=1`` to
force the numpy path (useful for debugging, or where numba is not
installed).  Both implementations stay importable so tests and
``benchmarks/bench_kernels.py`` can compare them directly.
"""

import importlib
import os

import numpy as np

from . import numpy_impl

_disabled = os.environ.get("CSLID_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

numba_impl = None
if not _disabled:
    try:
        numba_impl = importlib.import_module(".numba_impl", __name__)
    except ImportError:  # numba missing
        numba_impl = None

_impl = numba_impl if numba_impl is not None else numpy_impl
BACKEND = "numba" if numba_impl is not None else "numpy"


def ctc_alpha(log_probs, ext, blank=0):
    return _impl.ctc_alpha(_f64(log_probs), _i64(ext), int(blank))


def ctc_beta(log_probs, ext, blank=0):
    return _impl.ctc_beta(_f64(log_probs), _i64(ext), int(blank))


def ctc_viterbi(log_probs, ext, blank=0):
    symbols, score = _impl.ctc_viterbi(_f64(log_probs), _i64(ext), int(blank))
    return symbols, float(score)


def ema_scan(z, decay, reverse=False):
    return _impl.ema_scan(_f64(z), float(decay), bool(reverse))


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


__all__ = ["BACKEND", "ctc_alpha", "ctc_beta", "ctc_viterbi", "ema_scan", "numba_impl", "numpy_impl"]
