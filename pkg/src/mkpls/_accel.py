"""Backend switch for the compiled inner loops.

Set ``MKPLS_BACKEND=numpy`` to skip numba entirely and run every hot kernel
through its vectorized numpy twin. Any other value (or unset) uses numba when
it imports cleanly.
"""

import os

BACKEND_ENV = "MKPLS_BACKEND"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get(BACKEND_ENV, "numba").strip().lower() != "numpy"


def njit(func=None, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return _numba.njit(**kwargs)(f)

    if func is None:
        return wrap
    return wrap(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"


def default_threads():
    """``MKPLS_THREADS`` if set, else the machine's CPU count."""
    env = os.environ.get("MKPLS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
