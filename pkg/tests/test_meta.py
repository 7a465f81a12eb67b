from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from arromatic.errors import BoundExceeded
from arromatic.evaluator import (ERROR, Config, Fork, Leaf, StackEntry,
                                 enabled_choices, initial_config, run, step)
from arromatic.generator import generate
from arromatic.lang import parse_type
from arromatic.meta import (MOVE_RULES, array_disjointness, canonical, canonical_outcome, caps,
                            check_preservation, check_progress, check_run, dump_config, explore)
from arromatic.sigma import IndexMap, identity
from arromatic.syntax import Lookup, Ref, Value

from conftest import load, source

UVB = parse_type("unique [var bool]")
UVALB = parse_type("unique [val bool]")
BVB = parse_type("borrowed [var bool]")
BURIED = parse_type("buried [var bool]")
PROG = source("fun main(x: bool): bool true")


def cfg(activity, heap=((False,) * 4,), tags=(UVB,)):
    return Config(heap, tags, activity, PROG)


def leaf(*entries, expr=Value(True)):
    return Leaf(tuple(StackEntry(*e) for e in entries), expr)


# -- caps -----------------------------------------------------------------

def test_caps_single_unique():
    c = cfg(leaf(("a", UVB, Ref(0, identity(4)))))
    occs = caps(c)
    assert len(occs) == 1 and occs[0].array_id == 0 and not occs[0].read


def test_caps_fork_subtracts_benign_alias():
    r = Ref(0, IndexMap([0, 1]))
    child = leaf(("a", UVB, r))
    f = Fork(child, leaf(), leaf(("a", UVB, r)))
    assert len(caps(cfg(f))) == 1


def test_caps_skip_buried_names():
    a = Ref(0, identity(4))
    c = cfg(leaf(("a", UVB, a), ("a", BURIED, None, True), ("b", BVB, a)))
    occs = caps(c)
    assert [o.ty for o in occs] == [BVB]


def test_caps_recurse_into_heap():
    outer_t = parse_type("unique [var unique [var bool]]")
    heap = ((Ref(1, IndexMap([0])), Ref(1, IndexMap([1]))), (False, False))
    c = cfg(leaf(("o", outer_t, Ref(0, IndexMap([1])))), heap, (outer_t, UVB))
    assert Counter(o.array_id for o in caps(c)) == {0: 1, 1: 1}


def test_caps_error_is_empty():
    assert caps(cfg(ERROR)) == []


# -- disjointness ---------------------------------------------------------

def test_split_siblings_disjoint():
    res = run(load("split34.arrc"), max_steps=4, raise_on_budget=False)
    assert array_disjointness(res.config) == (True, None)


def test_duplicated_unique_ref_violates():
    r = Ref(0, IndexMap([0, 1]))
    c = cfg(Fork(leaf(("a", UVB, r)), leaf(("b", UVB, r)), leaf()))
    ok, pair = array_disjointness(c)
    assert not ok and pair[0].sigma == pair[1].sigma == r.sigma


def test_read_caps_may_share():
    r = Ref(0, identity(2))
    tags = (UVALB,)
    vb = parse_type("borrowed [val bool]")
    c = cfg(Fork(leaf(("a", vb, r)), leaf(("b", vb, r)), leaf()), ((False, False),), tags)
    assert array_disjointness(c)[0]


# -- progress and preservation --------------------------------------------

def test_progress():
    assert check_progress(cfg(leaf()))
    assert check_progress(cfg(ERROR))
    mid = run(load("fork.arrc"), max_steps=5, raise_on_budget=False).config
    assert check_progress(mid)
    stuck = cfg(leaf(("x", parse_type("bool"), True), expr=Lookup("x", 0)))
    assert not check_progress(stuck)


def test_preservation_along_trace():
    p = load("borrow.arrc")
    c = initial_config(p)
    seen = []
    while enabled_choices(c):
        before = c
        c = step(c, enabled_choices(c)[-1])
        assert check_preservation(before, c)
        seen.append(len(c.tags) - len(before.tags))
    assert 1 in seen  # DYN-ARRAY-NEW grew the array type map
    grown = run(p, max_steps=1, raise_on_budget=False).config
    assert not check_preservation(grown, initial_config(p))


def test_check_run_reports():
    rep = check_run(load("borrow.arrc"), seed=4)
    assert rep.ok and rep.line().endswith("invariants=ok") and rep.result.startswith("ι0")
    assert "DYN-SPAWN" in MOVE_RULES


def test_check_run_reports_first_failing_step(monkeypatch):
    import arromatic.meta as meta
    real = meta.wf_config
    calls = {"n": 0}

    def flaky(c):
        calls["n"] += 1
        rep = real(c)
        if calls["n"] == 4:
            rep.ok, rep.reason = False, "forced"
        return rep

    monkeypatch.setattr(meta, "wf_config", flaky)
    rep = check_run(load("fork.arrc"))
    assert not rep.ok and rep.failure == ("wf_config", 3)
    assert rep.line().endswith("invariants=FAIL(wf_config,3)")


# -- canonical forms and exploration --------------------------------------

def test_canonical_invariant_under_renaming():
    t2 = parse_type("unique [var unique [var bool]]")
    a = Config(((Ref(1, identity(1)),), (True,)), (t2, UVB),
               leaf(("o", t2, Ref(0, identity(1)))), PROG)
    b = Config(((True,), (Ref(0, identity(1)),)), (UVB, t2),
               leaf(("o", t2, Ref(1, identity(1)))), PROG)
    assert canonical(a) == canonical(b)
    c = replace(b, heap=((False,), b.heap[1]))
    assert canonical(a) != canonical(c)
    assert canonical_outcome(cfg(ERROR)) == "Error"


def test_canonical_garbage_is_multiset():
    a = Config(((True,), (False,)), (UVB, UVB), leaf(), PROG)
    b = Config(((False,), (True,)), (UVB, UVB), leaf(), PROG)
    assert canonical(a) == canonical(b)


def test_explore_fork_single_outcome():
    r = explore(load("fork.arrc"))
    assert r.complete and r.deterministic and r.schedules > 1


def test_explore_sequential():
    r = explore(load("split34.arrc"))
    assert r.complete and r.schedules == 1 and len(r.outcomes) == 1


def test_explore_bounds():
    r = explore(load("fork.arrc"), max_steps=3)
    assert not r.complete
    with pytest.raises(BoundExceeded):
        explore(load("fork.arrc"), max_schedules=2, strict=True)


def test_explore_error_outcome():
    assert explore(load("error/merge_cross.arrc")).outcomes == {"Error"}


def test_dump_config():
    c = initial_config(load("split34.arrc"))
    while not any(s.name == "r" and s.value for s in c.activity.stack):
        c = step(c, enabled_choices(c)[0])
    text = dump_config(c)
    assert text.splitlines()[0] == "ι0: [false, false, false, true, false] caps=2"
    assert "cap(ι0, σ={0->3, 1->4}, unique, owned)" in text


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_safe_programs_pass_gauntlet(seed):
    p = generate(seed, 40, "safe")
    rep = check_run(p, seed)
    assert rep.ok, rep.detail
    assert rep.result != "error"
