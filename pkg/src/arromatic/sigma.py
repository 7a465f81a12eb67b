"""Index translation maps.

An :class:`IndexMap` sends the dense logical indices ``0..n-1`` of an array
view to physical indices of the underlying storage.  Maps are immutable and
stored extensionally as the tuple of their targets, so equality, hashing and
range queries are all direct.
"""

from __future__ import annotations

import re
from functools import reduce
from typing import Iterable, Iterator, Sequence

from .errors import InvalidSplit, OutOfDomain, Overlap, SigmaSyntaxError

__all__ = [
    "IndexMap", "identity", "compose", "split_consecutive", "split_strided",
    "split_at", "concat", "interleave", "disjoint", "parse_sigma",
    "format_sigma", "seq", "stride",
]


class IndexMap:
    """Injective map from ``[0, n)`` to non-negative integers."""

    __slots__ = ("_targets", "_range")

    def __init__(self, targets: Iterable[int] = ()):
        ts = tuple(targets)
        for t in ts:
            if not isinstance(t, int) or isinstance(t, bool) or t < 0:
                raise ValueError(f"index map target must be a non-negative int, got {t!r}")
        rng = frozenset(ts)
        if len(rng) != len(ts):
            raise ValueError(f"index map is not injective: {ts}")
        self._targets = ts
        self._range = rng

    @property
    def targets(self) -> tuple[int, ...]:
        return self._targets

    @property
    def range(self) -> frozenset[int]:
        return self._range

    def __len__(self) -> int:
        return len(self._targets)

    def __call__(self, i: int) -> int:
        if not 0 <= i < len(self._targets):
            raise OutOfDomain(f"index {i} outside domain of size {len(self._targets)}")
        return self._targets[i]

    def __contains__(self, i: object) -> bool:
        """Domain membership (``i in sigma`` means ``i in dom(sigma)``)."""
        return isinstance(i, int) and 0 <= i < len(self._targets)

    def __iter__(self) -> Iterator[int]:
        return iter(self._targets)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexMap):
            return NotImplemented
        return self._targets == other._targets

    def __hash__(self) -> int:
        return hash(self._targets)

    def __repr__(self) -> str:
        return f"IndexMap({list(self._targets)})"

    def __str__(self) -> str:
        return format_sigma(self)

    def is_identity(self) -> bool:
        return all(i == t for i, t in enumerate(self._targets))


def identity(n: int) -> IndexMap:
    if n < 0:
        raise ValueError("identity needs n >= 0")
    return IndexMap(range(n))


def seq(lo: int, hi: int) -> IndexMap:
    """``{0->lo, 1->lo+1, ...}`` covering the half-open range ``[lo, hi)``."""
    if lo < 0 or hi < lo:
        raise ValueError(f"bad seq bounds ({lo}, {hi})")
    return IndexMap(range(lo, hi))


def stride(start: int, step: int, count: int) -> IndexMap:
    if count < 0:
        raise ValueError("stride count must be >= 0")
    if step == 0 and count > 1:
        raise ValueError("stride step 0 is not injective")
    return IndexMap(start + i * step for i in range(count))


def compose(outer: IndexMap, inner: IndexMap) -> IndexMap:
    """``outer ∘ inner``: logical index of the inner view to physical index."""
    n = len(outer)
    out = outer.targets
    for t in inner:
        if t >= n:
            raise OutOfDomain(f"target {t} outside domain of size {n}")
    return IndexMap(out[t] for t in inner)


def _check_split(n: int, k: int) -> None:
    if k < 1 or k > n:
        raise InvalidSplit(f"cannot split {n} elements into {k} non-empty parts")


def split_consecutive(n: int, k: int) -> list[IndexMap]:
    """Cut ``[0, n)`` into ``k`` blocks; the first ``n mod k`` get one extra."""
    _check_split(n, k)
    base, extra = divmod(n, k)
    parts = []
    offset = 0
    for j in range(k):
        size = base + (1 if j < extra else 0)
        parts.append(IndexMap(range(offset, offset + size)))
        offset += size
    return parts


def split_strided(n: int, k: int) -> list[IndexMap]:
    """Deal ``[0, n)`` round-robin into ``k`` parts: part j holds j, j+k, ..."""
    _check_split(n, k)
    return [IndexMap(range(j, n, k)) for j in range(k)]


def split_at(n: int, i: int) -> tuple[IndexMap, IndexMap]:
    """Cut at ``i``; either side may be empty."""
    if not 0 <= i <= n:
        raise InvalidSplit(f"split point {i} outside [0, {n}]")
    return IndexMap(range(i)), IndexMap(range(i, n))


def disjoint(a: IndexMap, b: IndexMap) -> bool:
    return a.range.isdisjoint(b.range)


def concat(a: IndexMap, b: IndexMap) -> IndexMap:
    if not disjoint(a, b):
        raise Overlap(f"ranges of {a} and {b} intersect")
    return IndexMap(a.targets + b.targets)


def interleave(a: IndexMap, b: IndexMap) -> IndexMap:
    """Alternate ``a(0), b(0), a(1), b(1), ...`` then append the longer tail."""
    if not disjoint(a, b):
        raise Overlap(f"ranges of {a} and {b} intersect")
    m = min(len(a), len(b))
    out: list[int] = []
    for i in range(m):
        out.append(a.targets[i])
        out.append(b.targets[i])
    out.extend(a.targets[m:])
    out.extend(b.targets[m:])
    return IndexMap(out)


def merge_all(maps: Sequence[IndexMap], concatenate: bool = True) -> IndexMap:
    """Left fold of :func:`concat` (or :func:`interleave`) over ``maps``."""
    if not maps:
        return IndexMap()
    return reduce(concat if concatenate else interleave, maps)


# -- textual form ---------------------------------------------------------

_EXPLICIT = re.compile(r"\{\s*(.*?)\s*\}\Z", re.S)
_PAIR = re.compile(r"(\d+)\s*->\s*(\d+)\Z")
_CALL = re.compile(r"(seq|stride)\s*\(\s*([^)]*)\)\Z")


def format_sigma(m: IndexMap) -> str:
    """Canonical explicit form, e.g. ``{0->3, 1->4}``."""
    return "{" + ", ".join(f"{i}->{t}" for i, t in enumerate(m.targets)) + "}"


def parse_sigma(text: str) -> IndexMap:
    """Parse ``{0->3, 1->4}``, ``seq(lo, hi)`` or ``stride(start, step, count)``."""
    s = text.strip()
    m = _EXPLICIT.match(s)
    if m:
        body = m.group(1)
        if not body:
            return IndexMap()
        pairs = {}
        for item in body.split(","):
            pm = _PAIR.match(item.strip())
            if not pm:
                raise SigmaSyntaxError(f"bad index map entry {item.strip()!r}")
            k, v = int(pm.group(1)), int(pm.group(2))
            if k in pairs:
                raise SigmaSyntaxError(f"index {k} mapped twice")
            pairs[k] = v
        return from_pairs(pairs)
    m = _CALL.match(s)
    if m:
        try:
            args = [int(a) for a in m.group(2).split(",")]
        except ValueError:
            raise SigmaSyntaxError(f"bad arguments in {s!r}") from None
        try:
            if m.group(1) == "seq" and len(args) == 2:
                return seq(*args)
            if m.group(1) == "stride" and len(args) == 3:
                return stride(*args)
        except ValueError as exc:
            raise SigmaSyntaxError(str(exc)) from None
        raise SigmaSyntaxError(f"wrong number of arguments in {s!r}")
    raise SigmaSyntaxError(f"cannot parse index map {text!r}")


def from_pairs(pairs: dict[int, int]) -> IndexMap:
    """Build a map from explicit ``{i: target}`` pairs covering ``[0, n)``."""
    n = len(pairs)
    if set(pairs) != set(range(n)):
        raise SigmaSyntaxError(f"domain {sorted(pairs)} is not 0..{n - 1}")
    try:
        return IndexMap(pairs[i] for i in range(n))
    except ValueError as exc:
        raise SigmaSyntaxError(str(exc)) from None
