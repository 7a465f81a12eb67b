from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from arromatic.errors import BudgetExceeded
from arromatic.evaluator import (ERROR, Choice, FixedScheduler, Fork, Leaf, SeededScheduler,
                                 StackEntry, borrow_depth_ok, enabled_choices, initial_config,
                                 is_terminal, run, step, step_traced, wf_config)
from arromatic.generator import generate
from arromatic.meta import canonical_outcome
from arromatic.sigma import IndexMap, identity
from arromatic.syntax import BorrowFrame, Ref, Value, free_vars

from conftest import PROGRAMS, load, source


def steps_until(cfg, pred, limit=200):
    for _ in range(limit):
        if pred(cfg):
            return cfg
        cfg = step(cfg, enabled_choices(cfg)[0])
    raise AssertionError("predicate never held")


def test_trivial_main():
    res = run(source("fun main(x: bool): bool true"))
    assert res.status == "value" and res.value is True and res.config.heap == ()
    assert res.steps == 0 and enabled_choices(res.config) == []


def test_new_allocates_false_array():
    p = source("fun main(x: bool): unique [var bool] new unique [var bool](2)")
    cfg = initial_config(p)
    new, rule, _ = step_traced(cfg, enabled_choices(cfg)[0])
    assert rule == "DYN-ARRAY-NEW"
    assert new.heap == ((False, False),)
    assert new.activity.expr.v == Ref(0, identity(2))


def test_nested_new_defaults_to_null():
    p = source("fun main(x: bool): unique [var unique [var bool]] new unique [var unique [var bool]](3)")
    assert run(p).config.heap == ((None, None, None),)


def test_unique_lookup_nullifies_element():
    res = run(load("nested.arrc"))
    assert res.status == "value" and res.value is True
    rules = [t.rule for t in res.trace]
    assert "DYN-ARRAY-LOOKUP-UNIQUE" in rules
    # outer[1] was moved into `inner` then into outer[0], then moved out again
    assert res.config.heap[0] == (None, None)


def test_bool_lookup_is_non_destructive():
    res = run(source("""
    fun main(x: bool): bool
      let a = new unique [var bool](1) in
      let w = (a[0] = true) in
      let c = a[0] in
      a[0]
    """))
    assert res.value is True and res.config.heap == ((True,),)


def test_split_program_reads_physical_index_three():
    res = run(load("split34.arrc"))
    assert res.value is True
    assert res.config.heap == ((False, False, False, True, False),)
    assert "DYN-ARRAY-SPLIT" in [t.rule for t in res.trace]


def test_split_composes_sigma():
    p = source("""
    fun main(x: bool): unique [var bool]
      let a = new unique [var bool](6) in
      let ev{stride(0, 2, 3)} ++ od{stride(1, 2, 3)} = a in
      let l{0->2} ++ r{0->0, 1->1} = od in
      l
    """)
    assert run(p).value == Ref(0, IndexMap([5]))


def test_merge_concatenates():
    p = source("""
    fun main(x: bool): unique [var bool]
      let a = new unique [var bool](5) in
      let ev{stride(0, 2, 3)} ++ od{stride(1, 2, 2)} = a in
      ev ++ od
    """)
    assert run(p).value == Ref(0, IndexMap([0, 2, 4, 1, 3]))


def test_oob_lookup_errors():
    res = run(load("error/lookup_oob.arrc"))
    assert res.status == "error" and res.config.activity is ERROR
    assert res.trace[-1].rule == "DYN-ARRAY-LOOKUP-FAIL"


@pytest.mark.parametrize("path", sorted((PROGRAMS / "error").glob("*.arrc")), ids=lambda p: p.stem)
def test_error_suite(path):
    rule = path.read_text().splitlines()[0].removeprefix("// RULE: ").strip()
    for seed in range(3):
        res = run(load(f"error/{path.name}"), SeededScheduler(seed))
        assert res.status == "error" and res.trace[-1].rule == rule


def test_enabled_choices_at_fork():
    p = load("fork.arrc")
    cfg = steps_until(initial_config(p), lambda c: isinstance(c.activity, Fork))
    assert [c.path for c in enabled_choices(cfg)] == [("L",), ("R",)]
    done = steps_until(cfg, lambda c: isinstance(c.activity, Fork)
                       and isinstance(c.activity.left.expr, Value)
                       and isinstance(c.activity.right.expr, Value))
    assert enabled_choices(done) == [Choice((), "finish")]
    after, rule, _ = step_traced(done, Choice((), "finish"))
    assert rule == "DYN-FINISH" and isinstance(after.activity, Leaf)


def test_spawn_substacks_hold_exactly_free_variables():
    p = load("fork.arrc")
    cfg = steps_until(initial_config(p), lambda c: isinstance(c.activity, Fork))
    f = cfg.activity
    for child in (f.left, f.right):
        assert {s.name for s in child.stack} == free_vars(child.expr)
    assert not ({s.name for s in f.left.stack} & {s.name for s in f.right.stack})
    # lent variables are nulled in the waiting thread while the children run
    assert set(f.lent) == {"l", "r"}
    assert all(s.value is None for s in f.waiting.stack if s.name in f.lent)


def test_fork_program_all_schedules_agree():
    p = load("fork.arrc")
    outs = {canonical_outcome(run(p, SeededScheduler(s)).config) for s in range(10)}
    assert len(outs) == 1
    res = run(p, SeededScheduler(3))
    assert res.value is True and res.config.heap == ((True, False, False, True),)


def test_borrow_done_yields_true_and_drops_scope():
    res = run(load("borrow.arrc"))
    assert res.status == "value" and res.value == Ref(0, identity(4))
    assert res.config.heap == ((True, True, False, False),)
    rules = [t.rule for t in res.trace]
    assert "DYN-BORROW" in rules and "DYN-BORROW-DONE" in rules
    p = load("borrow.arrc")
    cfg = steps_until(initial_config(p), lambda c: isinstance(c.activity, Leaf)
                      and any(s.marked for s in c.activity.stack))
    assert borrow_depth_ok(cfg.activity)
    marker = [s for s in cfg.activity.stack if s.marked]
    assert len(marker) == 1 and marker[0].name == "a" and marker[0].value is None


def test_borrow_done_rule_result():
    p = source("""
    fun main(x: bool): bool
      let a = new unique [var bool](1) in
      borrow a as b in b
    """)
    cfg = steps_until(initial_config(p), lambda c: isinstance(c.activity.expr, BorrowFrame)
                      and isinstance(c.activity.expr.body, Value))
    after, rule, _ = step_traced(cfg, enabled_choices(cfg)[0])
    assert rule == "DYN-BORROW-DONE" and after.activity.expr.v is True
    assert not any(s.marked for s in after.activity.stack)
    assert [s.name for s in after.activity.stack] == [s.name for s in cfg.activity.stack
                                                      if not s.marked][:2]


def test_ten_seeds_same_canonical_outcome():
    p = load("split34.arrc")
    assert len({canonical_outcome(run(p, SeededScheduler(s)).config) for s in range(10)}) == 1


def test_fixed_scheduler_replays():
    p = load("fork.arrc")
    a = run(p, FixedScheduler([1, 1, 0, 1]))
    b = run(p, FixedScheduler([1, 1, 0, 1]))
    assert [str(t) for t in a.trace] == [str(t) for t in b.trace]
    with pytest.raises(ValueError):
        run(p, FixedScheduler([Choice(("L",))]))


def test_budget():
    p = load("fork.arrc")
    with pytest.raises(BudgetExceeded):
        run(p, max_steps=3)
    assert run(p, max_steps=3, raise_on_budget=False).status == "budget"


def test_step_rejects_disabled_choice():
    cfg = initial_config(load("fork.arrc"))
    with pytest.raises(ValueError):
        step(cfg, Choice((), "finish"))
    with pytest.raises(ValueError):
        step(cfg, Choice(("L",)))


def test_trace_format():
    res = run(load("fork.arrc"))
    lines = [str(t) for t in res.trace]
    assert lines[0].startswith("#1 DYN-")
    assert any(" @L " in ln for ln in lines) and any(" @R " in ln for ln in lines)
    assert any(ln.startswith(f"#{k} DYN-FINISH @root") for k, ln in enumerate(lines, 1))


# -- runtime well-formedness ----------------------------------------------

def test_wf_initial_and_error():
    for path in PROGRAMS.glob("*.arrc"):
        assert wf_config(initial_config(load(path.name)))
    res = run(load("error/lookup_oob.arrc"))
    assert wf_config(res.config)


def test_wf_detects_mistyped_stack_value():
    p = load("split34.arrc")
    cfg = steps_until(initial_config(p), lambda c: any(s.name == "a" and s.value is not None
                                                       for s in c.activity.stack))
    assert wf_config(cfg)
    leaf = cfg.activity
    bad = tuple(replace(s, value=True) if s.name == "a" else s for s in leaf.stack)
    rep = wf_config(replace(cfg, activity=replace(leaf, stack=bad)))
    assert not rep and "a" in rep.reason
    dangling = tuple(replace(s, value=Ref(0, IndexMap([9]))) if s.name == "a" else s
                     for s in leaf.stack)
    assert not wf_config(replace(cfg, activity=replace(leaf, stack=dangling)))
    assert not wf_config(replace(cfg, heap=((Ref(0, identity(1)),) * 5,)))


def test_wf_detects_stray_marker():
    cfg = initial_config(load("split34.arrc"))
    leaf = cfg.activity
    extra = leaf.stack + (StackEntry("ghost", leaf.stack[0].ty, None, marked=True),)
    assert not wf_config(replace(cfg, activity=replace(leaf, stack=extra)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["safe", "wild"]))
def test_heap_monotone_and_step_is_function(seed, mode):
    p = generate(seed, 40, mode)
    cfg = initial_config(p)
    sched = SeededScheduler(seed)
    for _ in range(500):
        choices = enabled_choices(cfg)
        if not choices:
            assert is_terminal(cfg)
            break
        ch = sched.choose(choices)
        new = step(cfg, ch)
        assert new == step(cfg, ch)
        if new.activity is not ERROR:
            assert new.tags[:len(cfg.tags)] == cfg.tags
            assert len(new.heap) >= len(cfg.heap)
        cfg = new
