"""
Tests for ordered parallel mapping.
"""

import threading
import time

import pytest

from lincrack.utils.concurrency import ordered_map


@pytest.mark.parametrize("workers", [1, 2, 8])
def test_input_order_kept(workers):
    def slow_square(x):
        time.sleep(0.001 * (10 - x))
        return x * x

    assert ordered_map(slow_square, range(10), workers=workers) == [x * x for x in range(10)]


def test_single_worker_runs_inline():
    threads = ordered_map(lambda _: threading.current_thread(), range(3), workers=1)
    assert all(t is threading.current_thread() for t in threads)


def test_empty_input():
    assert ordered_map(lambda x: x, [], workers=4) == []


def test_generator_input():
    assert ordered_map(str, (i for i in range(3)), workers=2) == ['0', '1', '2']


def test_exception_propagates():
    def fail(x):
        if x == 2:
            raise ValueError("boom")
        return x

    with pytest.raises(ValueError):
        ordered_map(fail, range(4), workers=2)
