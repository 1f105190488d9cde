from hypothesis import given
from hypothesis import strategies as st

from fsnap.functions import FFunction
from fsnap.oracle import OracleState, oracle_fscan, oracle_update


def test_update_sets_slot():
    st_ = OracleState(FFunction("identity", 3), x0=0)
    oracle_update(st_, 0, 9)
    assert st_.slots == (9, 0, 0)


def test_last_update_wins():
    st_ = OracleState(FFunction("identity", 2))
    oracle_update(st_, 1, 4)
    oracle_update(st_, 1, 6)
    assert oracle_fscan(st_) == (0, 6)


def test_sum_mod_example():
    st_ = OracleState(FFunction("sum-mod", 2, 10))
    oracle_update(st_, 0, 3)
    oracle_update(st_, 1, 4)
    assert oracle_fscan(st_) == 7


def test_initial_fscan():
    assert oracle_fscan(OracleState(FFunction("sum-mod", 3, 5))) == 0
    assert oracle_fscan(OracleState(FFunction("identity", 3), x0=2)) == (2, 2, 2)


def test_copies_are_independent():
    a = OracleState(FFunction("identity", 2))
    b = a.copy()
    b.update(0, 1)
    assert a.slots == (0, 0) and b.slots == (1, 0)
    assert a != b and a == OracleState(FFunction("identity", 2))


ops = st.lists(st.one_of(st.tuples(st.just("u"), st.integers(0, 2), st.integers(0, 50)), st.just(("f",))), max_size=20)


@given(ops)
def test_fscan_is_f_of_last_updates(seq):
    f = FFunction("sum-mod", 3, 7)
    state = OracleState(f)
    last = [0, 0, 0]
    for op in seq:
        if op[0] == "u":
            state.update(op[1], op[2])
            last[op[1]] = op[2]
        else:
            before = state.slots
            assert state.fscan() == sum(last) % 7
            assert state.fscan() == state.fscan() and state.slots == before
