"""Backend selection for the hot kernels.

Two interchangeable kernel implementations exist for every inner loop: a
numba ``@njit`` build and a pure-numpy fallback. The active backend is
chosen once at import time from the environment:

    EVLIGN_NUMBA=auto   use numba when importable (default)
    EVLIGN_NUMBA=0      force the pure-numpy path
    EVLIGN_NUMBA=1      require numba; raise if it cannot be imported

``EVLIGN_THREADS`` caps the numba threading layer (0 or unset = library
default). The shipped kernels run single-threaded for bit-exact
accumulation order, so this is an upper bound, not a request.
"""

from __future__ import annotations

import os
import warnings

_FLAG = os.environ.get("EVLIGN_NUMBA", "auto").strip().lower()

if _FLAG in ("0", "off", "false", "no"):
    NUMBA_ENABLED = False
    njit = None
elif _FLAG in ("1", "on", "true", "yes", "force"):
    from numba import njit  # hard requirement in this mode

    NUMBA_ENABLED = True
else:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised only without numba
        warnings.warn("numba unavailable; falling back to pure-numpy kernels")
        NUMBA_ENABLED = False
        njit = None

if NUMBA_ENABLED:
    _threads = os.environ.get("EVLIGN_THREADS", "0").strip()
    if _threads.isdigit() and int(_threads) > 0:
        import numba

        numba.set_num_threads(min(int(_threads), numba.config.NUMBA_NUM_THREADS))


def backend_name() -> str:
    """Name of the active kernel backend, for config echoes and benchmarks."""
    return "numba" if NUMBA_ENABLED else "numpy"
