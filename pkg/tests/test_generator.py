import pytest

from arromatic.errors import GenerationExhausted
from arromatic.evaluator import Fork, SeededScheduler, run
from arromatic.generator import generate
from arromatic.lang import pretty
from arromatic.syntax import FinishAsync, count_nodes, subexprs
from arromatic.typecheck import check_program


def fork_depth(e):
    """Static nesting of finish blocks (sequential blocks do not nest)."""
    if isinstance(e, FinishAsync):
        return max(1 + max(fork_depth(e.first), fork_depth(e.second)), fork_depth(e.then))
    return max((fork_depth(s) for s in subexprs(e)), default=0)


def runtime_fork_depth(a):
    if isinstance(a, Fork):
        return 1 + max(runtime_fork_depth(a.left), runtime_fork_depth(a.right))
    return 0


def size(p):
    return sum(count_nodes(f.body) for f in p.functions)


def test_thousand_seeds_type_check():
    for seed in range(1000):
        p = generate(seed, 40, ("safe", "wild")[seed % 2])
        check_program(p)
        assert size(p) <= 40


def test_small_budget():
    p = generate(1, 20)
    assert size(p) <= 20 and p.get("main") is not None


def test_deterministic():
    for seed in range(20):
        assert pretty(generate(seed, 40, "wild")) == pretty(generate(seed, 40, "wild"))


def test_safe_mode_never_errors():
    for seed in range(300):
        res = run(generate(seed, 40, "safe"), SeededScheduler(seed))
        assert res.status == "value", seed


def test_wild_mode_reaches_error():
    errs = sum(run(generate(s, 40, "wild"), SeededScheduler(s)).status == "error"
               for s in range(200))
    assert 0 < errs < 200


def test_force_fork():
    for seed in range(100):
        p = generate(seed, 40, "safe", force_fork=True)
        assert fork_depth(p.get("main").body) >= 1
        assert all(fork_depth(f.body) <= 2 for f in p.functions)
        deepest = [0]

        def watch(before, after, ts):
            deepest[0] = max(deepest[0], runtime_fork_depth(after.activity))

        run(p, SeededScheduler(seed), observer=watch)
        assert 1 <= deepest[0] <= 2


def test_exhaustion_and_bad_mode():
    with pytest.raises(GenerationExhausted):
        generate(0, 0, tries=5)
    with pytest.raises(ValueError):
        generate(0, 40, "reckless")
