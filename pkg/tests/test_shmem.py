import random
import threading

import pytest

from fsnap.checker import HistoryEvent, check
from fsnap.fcore import initial_memory
from fsnap.functions import FFunction
from fsnap.harness import ExhaustiveCursor, RandomSchedule, alternating_programs, simulate
from fsnap.shmem import (
    Access,
    AccessStats,
    DistinctValueOverflow,
    LockedSnapshotObject,
    MisuseError,
    SnapshotObject,
    reset_backend,
)

SUM10 = FFunction("sum-mod", 2, 10)


def _memory(n=2, x0=0):
    return reset_backend("simulated", n, initial_memory(n, FFunction("sum-mod", n, 10), x0),
                         RandomSchedule(0)).memory


def test_update_then_scan_solo():
    mem = _memory()
    mem.perform(0, Access("V", "update", (1, 42)))
    assert mem.perform(0, Access("V", "scan"))[0] == (1, 42)


def test_initial_scan():
    mem = _memory(n=3, x0=7)
    assert mem.perform(1, Access("V", "scan")) == ((0, 7),) * 3
    assert mem.perform(1, Access("ViewSum", "scan")) == ((0, None, None),) * 3


def test_pid_out_of_range():
    obj = SnapshotObject("V", [0, 0])
    with pytest.raises(MisuseError):
        obj.update(2, 1)
    with pytest.raises(MisuseError):
        obj.scan(-1)


def test_unknown_object_and_kind():
    mem = _memory()
    with pytest.raises(MisuseError):
        mem.perform(0, Access("W", "scan"))
    with pytest.raises(MisuseError):
        mem.perform(0, Access("V", "write"))


def test_concurrent_updates_every_interleaving():
    def writer(pid):
        yield Access("V", "update", (1, 10 + pid))

    cursor = ExhaustiveCursor()
    finals = []
    while True:
        cursor.start()
        backend = reset_backend("simulated", 2, initial_memory(2, SUM10, 0), cursor)
        backend.run([writer(0), writer(1)])
        finals.append(backend.memory.objects["V"].scan(0))
        if not cursor.advance():
            break
    assert len(finals) == 2
    assert all(final == ((1, 10), (1, 11)) for final in finals)


def test_trace_steps_dense_and_single_writer():
    run = simulate(alternating_programs(2, 3), SUM10, 0, RandomSchedule(3))
    assert [ev.step for ev in run.trace] == list(range(len(run.trace)))
    assert len(run.trace) == 2 * (7 + 1 + 7)


def test_simulated_determinism():
    a = simulate(alternating_programs(2, 4), SUM10, 0, RandomSchedule(11))
    b = simulate(alternating_programs(2, 4), SUM10, 0, RandomSchedule(11))
    assert a.trace_lines() == b.trace_lines()
    assert a.schedule == b.schedule


def test_single_process_trace_is_program_order():
    f = FFunction("sum-mod", 1, 10)
    run = simulate(alternating_programs(1, 3), f, 0, RandomSchedule(5))
    assert run.schedule == [0] * 15
    assert [ev.hl_op for ev in run.trace] == [0] * 7 + [1] + [2] * 7


def test_native_backend_completes():
    f = FFunction("sum-mod", 4, 5)
    from fsnap.harness import run_native

    run = run_native(alternating_programs(4, 4), f)
    assert sum(1 for ev in run.history if ev.kind == "respond") == 16


def test_native_snapshot_histories_linearizable():
    # a raw snapshot object is an F-snapshot with F = identity
    n = 3
    identity = FFunction("identity", n)
    for seed in range(20):
        obj = LockedSnapshotObject("V", [0] * n)
        history = []
        lock = threading.Lock()
        ids = iter(range(10**6))

        def worker(pid, rng):
            for k in range(4):
                with lock:
                    hl = next(ids)
                if rng.random() < 0.5:
                    v = pid + n * (k + 1)
                    with lock:
                        history.append(HistoryEvent("invoke", pid, "update", hl, arg=v))
                    obj.update(pid, v)
                    with lock:
                        history.append(HistoryEvent("respond", pid, "update", hl))
                else:
                    with lock:
                        history.append(HistoryEvent("invoke", pid, "fscan", hl))
                    got = obj.scan(pid)
                    with lock:
                        history.append(HistoryEvent("respond", pid, "fscan", hl, ret=got))

        threads = [threading.Thread(target=worker, args=(p, random.Random(seed * 10 + p))) for p in range(n)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert check(history, identity, n, 0)


def test_access_stats_counts_and_distinct():
    stats = AccessStats(2)
    stats.record(0, (0, "update"), "V", "update", (1, 5))
    stats.record(0, (0, "update"), "V", "scan", ((1, 5), (0, 0)))
    stats.record(1, (1, "update"), "V", "update", (1, 6))
    stats.record(1, (2, "update"), "V", "update", (1, 6))
    assert stats.per_op == {0: 2, 1: 1, 2: 1}
    assert stats.by_op_kind[0, "update"] == {("V", "update"): 1, ("V", "scan"): 1}
    assert stats.distinct_counts("V") == [1, 1]
    assert stats.writes["V"] == 3
    assert stats.new_value_at["V"] == [1, 2]
    assert stats.new_values_after("V", 1) == 1


def test_distinct_cap_fails_loudly():
    stats = AccessStats(1, distinct_cap=3)
    for v in range(3):
        stats.record(0, None, "V", "update", v)
    with pytest.raises(DistinctValueOverflow):
        stats.record(0, None, "V", "update", 99)


def test_reset_backend_validation():
    init = initial_memory(2, SUM10, 0)
    with pytest.raises(ValueError):
        reset_backend("simulated", 0, init, RandomSchedule(0))
    with pytest.raises(ValueError):
        reset_backend("simulated", 2, init)
    with pytest.raises(ValueError):
        reset_backend("quantum", 2, init, RandomSchedule(0))
    with pytest.raises(ValueError):
        reset_backend("simulated", 3, init, RandomSchedule(0))
