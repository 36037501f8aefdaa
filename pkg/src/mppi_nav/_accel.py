"""Backend selection for the hot kernels.

Every kernel in the package exists twice: a scalar-loop version compiled with
numba (``parallel=True`` where the loop is over rollouts) and a vectorized
pure-numpy version.  Set ``MPPI_NAV_NO_NUMBA=1`` before import to force the
numpy path; it is also used automatically when numba is not importable.
"""

import os
import warnings

# numba probes TBB on first parallel launch and warns when the installed
# version is too old; it then falls back to another layer, which is fine.
warnings.filterwarnings("ignore", message="The TBB threading layer")

_FLAG = os.environ.get("MPPI_NAV_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # bare @njit or @njit(...) both return the undecorated function
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrapper(func):
            return func

        return wrapper

    prange = range


BACKEND = "numba" if HAVE_NUMBA else "numpy"

JIT_OPTS = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")
# small helpers called from inside the rollout loop
INLINE_OPTS = dict(JIT_OPTS, inline="always")


def max_workers():
    """Upper bound on rollout workers for the active backend."""
    if HAVE_NUMBA:
        return numba.config.NUMBA_NUM_THREADS
    # numpy path chunks over rollouts in a thread pool; allow oversubscription
    return max(os.cpu_count() or 1, 8)


_numpy_workers = 1


def set_workers(n):
    """Set the rollout worker count; returns the count actually in effect."""
    global _numpy_workers
    n = max(1, min(int(n), max_workers()))
    if HAVE_NUMBA:
        numba.set_num_threads(n)
    else:
        _numpy_workers = n
    return n


def get_workers():
    if HAVE_NUMBA:
        return numba.get_num_threads()
    return _numpy_workers
