"""Optional numba acceleration.

Kernels are written as plain Python over numpy arrays; when numba is present
they are JIT-compiled (cached on disk), otherwise the same functions run
interpreted with identical results.  Long horizons at OCS scale effectively
require numba; the pure-Python path exists for portability and for tiny test
configurations.
"""

from __future__ import annotations

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap
