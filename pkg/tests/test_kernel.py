import threading

import pytest
from hypothesis import given, settings, strategies as st

from arromatic import sigma as sg
from arromatic.errors import (Buried, Consumed, DifferentArrays, DisjointnessViolation,
                              HasSiblings, InvalidSplit, OutOfBounds, OutOfDomain,
                              Overlap, Partial, ReadOnly, ScopeClosed)
from arromatic.kernel import ArrayStore, Mode
from arromatic.sigma import IndexMap

ABCDE = list("ABCDE")


@pytest.fixture
def store():
    return ArrayStore(debug=True)


def test_new_array(store):
    a = store.new_array(3, 0)
    assert len(a) == 3 and a.to_list() == [0, 0, 0]
    assert a.mode is Mode.UNIQUE and not a.borrowed and a.sigma.is_identity()
    assert len(store.new_array(0, "x")) == 0
    assert store.new_array(1).array_id != a.array_id


def test_get_translates_through_split(store):
    a = store.from_list([10, 20, 30, 40, 50])
    first, second = store.split(a, 2)
    assert len(first) == 3 and len(second) == 2
    assert second[0] == 40
    with pytest.raises(OutOfBounds):
        second[2]
    with pytest.raises(Consumed):
        a[0]


def test_set(store):
    a = store.new_array(4, 0)
    a[2] = 9
    assert a[2] == 9 and store.physical(a.array_id) == [0, 0, 9, 0]
    ev, od = store.split(a, 2, strided=True)
    od[0] = "x"
    assert store.physical(a.array_id)[1] == "x"
    with pytest.raises(OutOfBounds):
        od[5] = 1


def test_split_one_is_full_alias(store):
    a = store.from_list(ABCDE)
    (b,) = store.split(a, 1)
    assert b.view() == a.view() and not a.valid and b.valid
    with pytest.raises(InvalidSplit):
        store.split(b, 6)


def test_split_with_forgets_middle(store):
    a = store.from_list(ABCDE)
    l, r = store.split_with(a, [IndexMap([0, 1]), IndexMap([4])])
    assert l.to_list() == ["A", "B"] and r.to_list() == ["E"]
    assert (l.sigma.range | r.sigma.range) == {0, 1, 4}
    with pytest.raises(Overlap):
        store.split_with(l, [IndexMap([0]), IndexMap([0, 1])])
    with pytest.raises(OutOfDomain):
        store.split_with(r, [IndexMap([1])])
    (full,) = store.split_with(l, [sg.identity(2)])
    assert full.sigma == l.sigma and not l.valid


def test_merge_concat_and_interleave(store):
    a = store.from_list(ABCDE)
    ev, od = store.split(a, 2, strided=True)
    assert ev.to_list() == list("ACE") and od.to_list() == list("BD")
    cat = store.merge([ev, od], concat=True)
    assert cat.to_list() == list("ACEBD")
    ev, od = store.split(cat, 2)
    inter = store.merge([ev, od], concat=False)
    assert inter.to_list() == ABCDE
    with pytest.raises(Consumed):
        store.merge([ev, od])


def test_merge_different_arrays(store):
    a, b = store.new_array(2), store.new_array(2)
    with pytest.raises(DifferentArrays):
        store.merge([a, b])


def test_merge_same_cap_twice(store):
    a = store.new_array(2)
    with pytest.raises(Overlap):
        store.merge([a, a])


def test_align_permutes_physical(store):
    a = store.from_list(ABCDE)
    ev, od = store.split(a, 2, strided=True)
    cat = store.merge([ev, od])
    aligned = store.align(cat)
    assert store.physical(a.array_id) == list("ACEBD")
    assert aligned.sigma.is_identity() and aligned.to_list() == list("ACEBD")
    again = store.align(aligned)
    assert store.physical(a.array_id) == list("ACEBD") and again.sigma.is_identity()


def test_align_preconditions(store):
    a = store.from_list(ABCDE)
    l, r = store.split(a, 2)
    with pytest.raises(HasSiblings):
        store.align(l)
    (part,) = store.split_with(store.merge([l, r]), [IndexMap([1, 0])])
    with pytest.raises(Partial):
        store.align(part)


def test_borrow_buries_original(store):
    a = store.from_list([1, 2, 3])
    scope, b = store.borrow(a)
    assert b.borrowed and b.mode is Mode.UNIQUE
    with pytest.raises(Buried):
        a[0]
    b[0] = 7
    restored = store.end_borrow(scope)
    assert restored is a and a[0] == 7
    with pytest.raises(Consumed):
        b[0]
    with pytest.raises(ScopeClosed):
        store.end_borrow(scope)


def test_read_borrow_then_write_again(store):
    a = store.from_list([1, 2, 3])
    scope, r = store.borrow(a, as_read=True)
    with pytest.raises(ReadOnly):
        r[0] = 0
    assert r[2] == 3
    store.end_borrow(scope)
    a[0] = 0
    assert a.to_list() == [0, 2, 3]


def test_borrow_split_four_then_restore(store):
    a = store.from_list(list(range(8)))
    scope, b = store.borrow(a)
    parts = store.split(b, 4)
    assert all(p.borrowed for p in parts)
    for p in parts:
        p[0] = -p[0]
    store.end_borrow(scope)
    assert all(not p.valid for p in parts)
    assert a.sigma == sg.identity(8) and a.to_list() == [0, 1, -2, 3, -4, 5, -6, 7]


def test_nested_borrows_unwind_innermost_first(store):
    a = store.from_list([0, 0, 0, 0])
    outer, b = store.borrow(a)
    l, r = store.split(b, 2)
    inner, c = store.borrow(l, as_read=True)
    assert not l.valid and c.valid
    store.end_borrow(outer)
    # closing the outer scope revokes the inner one too
    assert not inner.open and not c.valid and not l.valid and a.valid
    assert store.live_count(a.array_id) == 1


def test_buried_original_blocks_align(store):
    a = store.from_list([1, 2])
    scope, b = store.borrow(a)
    with pytest.raises(HasSiblings):
        store.align(b)
    store.end_borrow(scope)
    assert store.align(a).to_list() == [1, 2]


def test_debug_disjointness_detects_forged_overlap(store):
    a = store.from_list([1, 2, 3])
    l, r = store.split(a, 2)
    # forge a second writer on slot 0 behind the store's back
    store._issue(a.array_id, IndexMap([0]), Mode.UNIQUE, False, None)
    with pytest.raises(DisjointnessViolation):
        store.check_disjointness()


def test_read_aliases_may_overlap(store):
    a = store.from_list([1, 2])
    _, r = store.borrow(a, as_read=True)
    store._issue(a.array_id, r.sigma, Mode.READ, True, None)
    store.check_disjointness()


def test_concurrent_disjoint_writes(store):
    a = store.new_array(4000, 0)
    parts = store.split(a, 8, strided=True)

    def work(k, p):
        for i in range(len(p)):
            p[i] = k

    ts = [threading.Thread(target=work, args=(k, p)) for k, p in enumerate(parts)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert store.physical(a.array_id) == [i % 8 for i in range(4000)]


def test_dump_golden():
    s = ArrayStore()
    a = s.from_list([1, None, True])
    l, r = s.split(a, 2, strided=True)
    assert s.dump() == (
        "ι0: [1, null, true] caps=2\n"
        "cap(ι0, σ={0->0, 1->2}, unique, owned)\n"
        "cap(ι0, σ={0->1}, unique, owned)"
    )


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 12), st.data())
def test_split_merge_round_trip(n, data):
    store = ArrayStore(debug=True)
    a = store.from_list(list(range(n)))
    k = data.draw(st.integers(1, n))
    before = a.view()
    b = store.merge(store.split(a, k))
    assert b.view() == before
    if n >= 2:
        ev, od = store.split(b, 2, strided=True)
        assert store.merge([ev, od], concat=False).view() == before


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 12), st.data())
def test_align_preserves_logical_contents(n, data):
    store = ArrayStore(debug=True)
    a = store.from_list([f"v{i}" for i in range(n)])
    perm = data.draw(st.permutations(list(range(n))))
    # reach an arbitrary full σ by splitting into singletons and merging in perm order
    singles = store.split(a, n)
    cap = store.merge([singles[i] for i in perm])
    logical = cap.to_list()
    aligned = store.align(cap)
    assert aligned.to_list() == logical == [f"v{i}" for i in perm]
    assert store.physical(a.array_id) == logical and aligned.sigma.is_identity()


@given(st.sampled_from(["get", "set", "split", "merge", "align", "borrow"]))
def test_consumed_is_permanent(op):
    store = ArrayStore()
    a = store.from_list([1, 2, 3])
    store.split(a, 1)
    calls = {
        "get": lambda: a[0], "set": lambda: a.__setitem__(0, 1),
        "split": lambda: store.split(a, 1), "merge": lambda: store.merge([a]),
        "align": lambda: store.align(a), "borrow": lambda: store.borrow(a),
    }
    with pytest.raises(Consumed):
        calls[op]()
