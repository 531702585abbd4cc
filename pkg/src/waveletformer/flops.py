"""Multiply-accumulate counting for convolutions and matrix products."""
from __future__ import annotations

import threading
from contextlib import contextmanager

_local = threading.local()


def add_macs(n: int) -> None:
    counter = getattr(_local, "counter", None)
    if counter is not None:
        counter[0] += int(n)


@contextmanager
def count_macs():
    """Yield a one-element list that accumulates MACs issued inside the block."""
    prev = getattr(_local, "counter", None)
    counter = [0]
    _local.counter = counter
    try:
        yield counter
    finally:
        _local.counter = prev
