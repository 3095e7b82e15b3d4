"""Optional numba acceleration. Without numba the decorated functions run as
plain Python over numpy arrays, with identical results but much slower."""

import os

try:  # pragma: no cover - exercised implicitly by the environment
    if os.environ.get("DVRPSR_NO_NUMBA"):
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)

except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco
