"""BLAS threadpool control.

The engine's matrices are small (tens to a few hundred rows); multithreaded
BLAS kernels lose far more to synchronization than they gain, so drivers
pin the pools to one thread for their duration.
"""

from __future__ import annotations

import contextlib

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - declared dependency
    threadpool_limits = None


@contextlib.contextmanager
def single_threaded_blas():
    if threadpool_limits is None:
        yield
        return
    with threadpool_limits(limits=1):
        yield
