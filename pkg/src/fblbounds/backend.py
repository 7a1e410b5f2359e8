"""Backend selection for the hot Monte-Carlo kernels.

Two implementations of every hot kernel exist: a numba ``@njit`` version and
a vectorized pure-numpy fallback.  The active backend is chosen once at
import time from the ``FBLBOUNDS_BACKEND`` environment variable
(``numba`` | ``numpy``); default is numba when importable.

Both backends consume identical pre-generated random variates, so they agree
to floating-point roundoff; see ``benchmarks/bench_backends.py`` for the
speed comparison.
"""

from __future__ import annotations

import os

__all__ = ["BACKEND", "using_numba", "njit"]

_requested = os.environ.get("FBLBOUNDS_BACKEND", "numba").lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(
        f"FBLBOUNDS_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numba":
    try:
        from numba import njit as _numba_njit
        BACKEND = "numba"
    except ImportError:  # pragma: no cover
        BACKEND = "numpy"
else:
    BACKEND = "numpy"


def using_numba() -> bool:
    return BACKEND == "numba"


if BACKEND == "numba":
    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _numba_njit(*args, **kwargs)
else:
    def njit(*args, **kwargs):  # noqa: ARG001 - signature parity with numba
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap
