"""Capability store: physical arrays plus split/merge/align/borrow.

Every capability handed out by an :class:`ArrayStore` carries an epoch stamp.
The store keeps the set of valid stamps; consuming operations (split, merge,
align, end of a borrow scope) retire stamps so stale handles fail loudly.

Metadata changes happen under a re-entrant lock.  Element reads and writes
only validate the stamp and touch a single payload slot, so tasks holding
capabilities with disjoint ranges can run concurrently.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from . import sigma as sg
from .errors import (Buried, Consumed, DifferentArrays, DisjointnessViolation,
                     HasSiblings, IncompatibleCapabilities, OutOfBounds,
                     Overlap, Partial, ReadOnly, ScopeClosed)
from .sigma import IndexMap

__all__ = ["Mode", "Capability", "BorrowScope", "ArrayStore"]


class Mode(Enum):
    UNIQUE = "unique"
    READ = "read"


@dataclass(frozen=True, eq=False)
class Capability:
    """Handle on a view of one physical array.

    Equality is identity; use :meth:`view` for extensional comparison.
    """

    store: "ArrayStore" = field(repr=False)
    array_id: int
    sigma: IndexMap
    mode: Mode
    borrowed: bool
    epoch: int

    def __len__(self) -> int:
        return len(self.sigma)

    def __getitem__(self, i: int) -> Any:
        return self.store.get(self, i)

    def __setitem__(self, i: int, v: Any) -> None:
        self.store.set(self, i, v)

    def view(self) -> tuple[int, IndexMap]:
        return self.array_id, self.sigma

    def to_list(self) -> list:
        return [self.store.get(self, i) for i in range(len(self.sigma))]

    @property
    def valid(self) -> bool:
        return self.store.is_valid(self)


@dataclass(eq=False)
class BorrowScope:
    original: Capability
    parent: "BorrowScope | None" = None
    issued: set[int] = field(default_factory=set)
    children: list["BorrowScope"] = field(default_factory=list)
    open: bool = True


@dataclass
class _Array:
    payload: list
    kind: Any
    live: int = 0


@dataclass
class _CapState:
    cap: Capability
    scope: BorrowScope | None
    buried: bool = False

    @property
    def array_id(self) -> int:
        return self.cap.array_id


class ArrayStore:
    """Heap of physical arrays with capability bookkeeping.

    With ``debug=True`` the disjointness invariant is asserted for the
    affected array after every metadata operation.
    """

    def __init__(self, debug: bool = False):
        self.debug = debug
        self._arrays: dict[int, _Array] = {}
        self._caps: dict[int, _CapState] = {}
        self._ids = itertools.count()
        self._epochs = itertools.count()
        self._lock = threading.RLock()

    # -- bookkeeping ------------------------------------------------------

    def _issue(self, array_id: int, sigma: IndexMap, mode: Mode, borrowed: bool,
               scope: BorrowScope | None) -> Capability:
        epoch = next(self._epochs)
        cap = Capability(self, array_id, sigma, mode, borrowed, epoch)
        self._caps[epoch] = _CapState(cap, scope)
        self._arrays[array_id].live += 1
        if scope is not None:
            scope.issued.add(epoch)
        return cap

    def _retire(self, epoch: int) -> None:
        st = self._caps.pop(epoch, None)
        if st is not None:
            self._arrays[st.array_id].live -= 1

    def _state(self, cap: Capability) -> _CapState:
        if cap.store is not self:
            raise Consumed("capability belongs to a different store")
        st = self._caps.get(cap.epoch)
        if st is None:
            raise Consumed(f"capability on ι{cap.array_id} is no longer valid")
        if st.buried:
            raise Buried(f"capability on ι{cap.array_id} is buried by a borrow")
        return st

    def is_valid(self, cap: Capability) -> bool:
        st = self._caps.get(cap.epoch)
        return cap.store is self and st is not None and not st.buried

    def live_count(self, array_id: int) -> int:
        return self._arrays[array_id].live

    def physical(self, array_id: int) -> list:
        """Copy of the raw payload, for inspection and tests."""
        return list(self._arrays[array_id].payload)

    # -- element access ---------------------------------------------------

    def new_array(self, length: int, init: Any = None, kind: Any = None) -> Capability:
        if length < 0:
            raise ValueError("array length must be >= 0")
        with self._lock:
            aid = next(self._ids)
            self._arrays[aid] = _Array([init] * length, kind)
            return self._issue(aid, sg.identity(length), Mode.UNIQUE, False, None)

    def from_list(self, values: Sequence, kind: Any = None) -> Capability:
        cap = self.new_array(len(values), None, kind)
        self._arrays[cap.array_id].payload[:] = list(values)
        return cap

    def get(self, cap: Capability, i: int) -> Any:
        self._state(cap)
        if not 0 <= i < len(cap.sigma):
            raise OutOfBounds(f"index {i} outside view of length {len(cap.sigma)}")
        return self._arrays[cap.array_id].payload[cap.sigma.targets[i]]

    def set(self, cap: Capability, i: int, v: Any) -> None:
        self._state(cap)
        if cap.mode is Mode.READ:
            raise ReadOnly(f"write through read capability on ι{cap.array_id}")
        if not 0 <= i < len(cap.sigma):
            raise OutOfBounds(f"index {i} outside view of length {len(cap.sigma)}")
        self._arrays[cap.array_id].payload[cap.sigma.targets[i]] = v

    # -- structural operations --------------------------------------------

    def split(self, cap: Capability, k: int, strided: bool = False) -> list[Capability]:
        parts = (sg.split_strided if strided else sg.split_consecutive)(len(cap.sigma), k)
        return self.split_with(cap, parts)

    def split_at(self, cap: Capability, i: int) -> tuple[Capability, Capability]:
        left, right = self.split_with(cap, sg.split_at(len(cap.sigma), i))
        return left, right

    def split_with(self, cap: Capability, parts: Sequence[IndexMap]) -> list[Capability]:
        with self._lock:
            st = self._state(cap)
            seen: set[int] = set()
            for p in parts:
                if not seen.isdisjoint(p.range):
                    raise Overlap("split parts overlap")
                seen |= p.range
            sigmas = [sg.compose(cap.sigma, p) for p in parts]
            self._retire(cap.epoch)
            out = [self._issue(cap.array_id, s, cap.mode, cap.borrowed, st.scope) for s in sigmas]
            self._check(cap.array_id)
            return out

    def merge(self, caps: Sequence[Capability], concat: bool = True) -> Capability:
        if not caps:
            raise ValueError("merge needs at least one capability")
        with self._lock:
            states = [self._state(c) for c in caps]
            if len({c.epoch for c in caps}) != len(caps):
                raise Overlap("the same capability appears twice in a merge")
            first = caps[0]
            if any(c.array_id != first.array_id for c in caps):
                raise DifferentArrays("cannot merge capabilities of different arrays")
            if any(c.mode is not first.mode or c.borrowed != first.borrowed for c in caps) \
                    or any(s.scope is not states[0].scope for s in states):
                raise IncompatibleCapabilities("merge inputs differ in mode, borrowedness or scope")
            sigma = sg.merge_all([c.sigma for c in caps], concat)
            for c in caps:
                self._retire(c.epoch)
            out = self._issue(first.array_id, sigma, first.mode, first.borrowed, states[0].scope)
            self._check(first.array_id)
            return out

    def align(self, cap: Capability) -> Capability:
        with self._lock:
            st = self._state(cap)
            arr = self._arrays[cap.array_id]
            if arr.live > 1:
                raise HasSiblings(f"ι{cap.array_id} has {arr.live} live capabilities")
            n = len(arr.payload)
            if len(cap.sigma) != n:
                raise Partial(f"view covers {len(cap.sigma)} of {n} elements")
            _permute_in_place(arr.payload, cap.sigma.targets)
            self._retire(cap.epoch)
            return self._issue(cap.array_id, sg.identity(n), cap.mode, cap.borrowed, st.scope)

    # -- borrowing --------------------------------------------------------

    def borrow(self, cap: Capability, as_read: bool = False) -> tuple[BorrowScope, Capability]:
        with self._lock:
            st = self._state(cap)
            scope = BorrowScope(original=cap, parent=st.scope)
            if st.scope is not None:
                st.scope.children.append(scope)
            st.buried = True
            mode = Mode.READ if as_read else cap.mode
            alias = self._issue(cap.array_id, cap.sigma, mode, True, scope)
            self._check(cap.array_id)
            return scope, alias

    def end_borrow(self, scope: BorrowScope) -> Capability:
        with self._lock:
            if not scope.open:
                raise ScopeClosed("borrow scope already ended")
            for child in scope.children:
                if child.open:
                    self.end_borrow(child)
            for epoch in list(scope.issued):
                self._retire(epoch)
            scope.issued.clear()
            scope.open = False
            st = self._caps.get(scope.original.epoch)
            if st is not None:
                st.buried = False
            self._check(scope.original.array_id)
            return scope.original

    # -- invariants and inspection ----------------------------------------

    def live_capabilities(self) -> list[Capability]:
        """Valid, non-buried capabilities in issue order."""
        return [s.cap for s in self._caps.values() if not s.buried]

    def check_disjointness(self, array_id: int | None = None) -> None:
        """Raise :class:`DisjointnessViolation` if a writer overlaps another view."""
        with self._lock:
            ids = [array_id] if array_id is not None else list(self._arrays)
            for aid in ids:
                writers: set[int] = set()
                readers: set[int] = set()
                bad: set[int] = set()
                for st in self._caps.values():
                    if st.array_id != aid or st.buried:
                        continue
                    rng = st.cap.sigma.range
                    bad |= writers & rng
                    if st.cap.mode is Mode.READ:
                        readers |= rng
                    else:
                        bad |= readers & rng
                        writers |= rng
                if bad:
                    raise DisjointnessViolation(f"ι{aid}: physical slots {sorted(bad)} shared with a writer")

    def _check(self, array_id: int) -> None:
        if self.debug:
            self.check_disjointness(array_id)

    def dump(self) -> str:
        """Debug listing: one line per array, then one per live capability."""
        with self._lock:
            lines = []
            for aid, arr in self._arrays.items():
                vals = ", ".join(_fmt(v) for v in arr.payload)
                lines.append(f"ι{aid}: [{vals}] caps={arr.live}")
            for st in self._caps.values():
                if st.buried:
                    continue
                cap = st.cap
                flag = "borrowed" if cap.borrowed else "owned"
                lines.append(f"cap(ι{cap.array_id}, σ={sg.format_sigma(cap.sigma)}, {cap.mode.value}, {flag})")
            return "\n".join(lines)


def _fmt(v: Any) -> str:
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    return repr(v)


def _permute_in_place(payload: list, targets: Sequence[int]) -> None:
    """Set ``payload[i] = old_payload[targets[i]]`` by walking cycles."""
    done = [False] * len(targets)
    for start in range(len(targets)):
        if done[start]:
            continue
        tmp = payload[start]
        j = start
        while True:
            done[j] = True
            k = targets[j]
            if k == start:
                payload[j] = tmp
                break
            payload[j] = payload[k]
            j = k
