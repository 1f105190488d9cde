import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsnap.checker import (
    HistoryEvent,
    MalformedHistory,
    PendingOperations,
    check,
    complete_pending,
    dump_history,
    load_history,
    operations,
    validate_witness,
)
from fsnap.functions import FFunction
from fsnap.oracle import OracleState

SUM10 = FFunction("sum-mod", 2, 10)


def inv(pid, op, hl, arg=None):
    return HistoryEvent("invoke", pid, op, hl, arg=arg)


def resp(pid, op, hl, ret=None):
    return HistoryEvent("respond", pid, op, hl, ret=ret)


def brute_force(history, f, n, x0=0):
    """Try every permutation of the operations; the reference verdict."""
    ops = operations(history)
    for perm in itertools.permutations(ops):
        pos = {o.hl_op: k for k, o in enumerate(perm)}
        if any(a.responded < b.invoked and pos[a.hl_op] > pos[b.hl_op] for a in ops for b in ops):
            continue
        state = OracleState(f, x0)
        for o in perm:
            if o.op == "update":
                state.update(o.pid, o.arg)
            elif state.fscan() != o.ret:
                break
        else:
            return True
    return False


def test_empty_history():
    verdict = check([], SUM10, 2)
    assert verdict and verdict.witness == []


def test_update_then_fscan():
    h = [inv(0, "update", 0, 3), resp(0, "update", 0), inv(1, "fscan", 1), resp(1, "fscan", 1, 3)]
    verdict = check(h, SUM10, 2)
    assert verdict.witness == [0, 1]
    bad = h[:3] + [resp(1, "fscan", 1, 9)]
    assert not check(bad, SUM10, 2)
    assert not brute_force(bad, SUM10, 2)


@pytest.mark.parametrize("ret", [0, 3])
def test_concurrent_update_and_fscan(ret):
    h = [inv(0, "update", 0, 3), inv(1, "fscan", 1), resp(1, "fscan", 1, ret), resp(0, "update", 0)]
    verdict = check(h, SUM10, 2)
    assert verdict
    assert validate_witness(h, verdict.witness, SUM10, 2) == []


def test_stale_read_after_completed_update_rejected():
    h = [inv(0, "update", 0, 3), resp(0, "update", 0), inv(1, "fscan", 1), resp(1, "fscan", 1, 0)]
    assert not check(h, SUM10, 2)


def test_complete_pending():
    h = [inv(0, "update", 0, 3), resp(0, "update", 0)]
    assert complete_pending(h) == h
    with pytest.raises(PendingOperations):
        complete_pending([inv(1, "fscan", 0)])
    with pytest.raises(PendingOperations):
        complete_pending(h + [inv(0, "update", 1, 5)])
    with pytest.raises(PendingOperations):
        check([inv(1, "fscan", 0)], SUM10, 2)


@pytest.mark.parametrize(
    "history",
    [
        [resp(0, "update", 0)],
        [inv(0, "update", 0, 1), inv(0, "update", 1, 2)],
        [inv(0, "update", 0, 1), resp(0, "fscan", 0)],
        [inv(0, "update", 0, 1), resp(0, "update", 0), inv(1, "update", 0, 2), resp(1, "update", 0)],
        [HistoryEvent("invoke", 0, "delete", 0)],
        [HistoryEvent("start", 0, "update", 0)],
    ],
)
def test_malformed(history):
    with pytest.raises(MalformedHistory):
        check(history, SUM10, 2)


def test_pid_out_of_range():
    with pytest.raises(MalformedHistory):
        check([inv(2, "fscan", 0), resp(2, "fscan", 0, 0)], SUM10, 2)


def test_validator_catches_bad_witness():
    h = [inv(0, "update", 0, 3), resp(0, "update", 0), inv(1, "fscan", 1), resp(1, "fscan", 1, 3)]
    assert validate_witness(h, [1, 0], SUM10, 2)
    assert validate_witness(h, [0], SUM10, 2)


def test_history_roundtrip():
    h = [inv(0, "update", 0, 3), inv(1, "fscan", 1), resp(1, "fscan", 1, (3, 0)), resp(0, "update", 0)]
    back = load_history(dump_history(h))
    assert [e.kind for e in back] == [e.kind for e in h]
    ident = FFunction("identity", 2)
    assert check(back, ident, 2)
    with pytest.raises(MalformedHistory):
        load_history('{"kind": "invoke"}\n')
    with pytest.raises(MalformedHistory):
        load_history("not json\n")


@st.composite
def histories(draw):
    """Random well-formed complete histories over 2 processes with guessed fscan results."""
    n_ops = draw(st.integers(0, 5))
    ops = []
    for hl in range(n_ops):
        pid = draw(st.integers(0, 1))
        if draw(st.booleans()):
            ops.append((pid, "update", hl, draw(st.integers(1, 4))))
        else:
            ops.append((pid, "fscan", hl, draw(st.integers(0, 4))))
    # per-process program order, arbitrary interleaving of invoke/respond points
    queues = {0: [o for o in ops if o[0] == 0], 1: [o for o in ops if o[0] == 1]}
    open_ = {}
    events = []
    while queues[0] or queues[1] or open_:
        choices = [p for p in (0, 1) if p in open_ or queues[p]]
        pid = draw(st.sampled_from(choices))
        if pid in open_:
            o = open_.pop(pid)
            events.append(resp(pid, o[1], o[2], o[3] if o[1] == "fscan" else None))
        else:
            o = queues[pid].pop(0)
            open_[pid] = o
            events.append(inv(pid, o[1], o[2], o[3] if o[1] == "update" else None))
    return events


@settings(max_examples=300, deadline=None)
@given(histories())
def test_agrees_with_brute_force(h):
    f = FFunction("sum-mod", 2, 5)
    verdict = check(h, f, 2)
    assert bool(verdict) == brute_force(h, f, 2)
    if verdict:
        assert validate_witness(h, verdict.witness, f, 2) == []


@given(st.lists(st.one_of(st.tuples(st.just("u"), st.integers(0, 2), st.integers(0, 9)), st.tuples(st.just("f"), st.integers(0, 2))), max_size=12))
def test_sequential_histories_agree_with_replay(seq):
    f = FFunction("sum-mod", 3, 4)
    state = OracleState(f)
    events = []
    for hl, op in enumerate(seq):
        if op[0] == "u":
            state.update(op[1], op[2])
            events += [inv(op[1], "update", hl, op[2]), resp(op[1], "update", hl)]
        else:
            events += [inv(op[1], "fscan", hl), resp(op[1], "fscan", hl, state.fscan())]
    verdict = check(events, f, 3)
    assert verdict and verdict.witness == list(range(len(seq)))
