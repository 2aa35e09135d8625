import time

import pytest

from dropescape.workers import CellWorker, WorkerPool


def _slow_square(x):
    time.sleep(0.001 * (5 - x))
    return x * x


def _fail_on_three(x):
    if x == 3:
        raise ValueError("three")
    return x


def test_map_keeps_input_order():
    assert WorkerPool(threads=4).map(_slow_square, range(5)) == [0, 1, 4, 9, 16]
    assert WorkerPool(threads=1).map(_slow_square, range(5)) == [0, 1, 4, 9, 16]


def test_failures_are_captured():
    outcomes = WorkerPool(threads=2).run([CellWorker(i, _fail_on_three, i) for i in range(5)])
    assert [o.ok for o in outcomes] == [True, True, True, False, True]
    assert outcomes[3].error == "three"
    assert isinstance(outcomes[3].exception, ValueError)
    assert [o.key for o in outcomes] == list(range(5))


def test_strict_reraises_first_failure():
    with pytest.raises(ValueError, match="three"):
        WorkerPool(threads=1).map(_fail_on_three, range(6))


def test_strict_cancels_remaining_serial_jobs():
    calls = []

    def record(x):
        calls.append(x)
        return _fail_on_three(x)

    with pytest.raises(ValueError):
        WorkerPool(threads=1).map(record, range(6))
    assert calls == [0, 1, 2, 3]


def test_cancelled_worker_reports_cancelled():
    w = CellWorker("k", _slow_square, 2)
    w.cancel()
    outcome = w.run()
    assert not outcome.ok and outcome.error == "cancelled"
