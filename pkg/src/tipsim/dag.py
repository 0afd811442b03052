"""Block DAG domain model: blocks, the append-only store, and the global tip pool.

The tip pool is maintained as two structures:

* ``visible``  -- blocks that issuers can currently select as parents.  A block
  enters this set a network delay ``h`` after its issuance and leaves it when a
  block approving it becomes visible, or when it sits unapproved for the
  expiration window ``delta``.
* ``hidden``   -- blocks issued less than ``h`` ago, queued for promotion.

Approval bookkeeping follows the spammer semantics of the tip-inflation
attack: only honest blocks approve their parents.  A spammer's references are
recorded as DAG edges (they matter for ancestry) but never knock a block out
of the pool, so each spam block inflates the pool by exactly one tip.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

GENESIS_ID = 0
_INF = float("inf")


class Issuer(IntEnum):
    GENESIS = 0
    HONEST = 1
    ADVERSARY = 2


class RemovalCause(IntEnum):
    REFERENCED = 1
    EXPIRED = 2


@dataclass(slots=True)
class Block:
    """One mark of the arrival process.

    ``parents`` keeps the k draws as selected (duplicates allowed); the DAG
    edge set is the distinct elements.  ``referenced_at`` is the issuance time
    of the first honest block that approved this one; it is the moment the
    block's time as a tip ends in the analytic accounting, while the pool
    removal happens h later, when that approver becomes visible.
    """

    id: int
    issued_at: float
    parents: list[int]
    issuer: Issuer
    visible_at: float
    referenced_at: float | None = None
    removed_at: float | None = None
    removal_cause: RemovalCause | None = None

    @property
    def parent_set(self) -> frozenset[int]:
        return frozenset(self.parents)


class DagStore:
    """Append-only block store with the inverse (children) adjacency."""

    def __init__(self) -> None:
        self.blocks: list[Block] = []
        self.children: list[list[int]] = []

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, block_id: int) -> Block:
        return self.blocks[block_id]

    def __iter__(self):
        return iter(self.blocks)

    def add(self, block: Block) -> None:
        if block.id != len(self.blocks):
            raise ValueError(f"block id {block.id} is not the next id {len(self.blocks)}")
        for p in block.parents:
            if not 0 <= p < len(self.blocks):
                raise ValueError(f"block {block.id} references unknown parent {p}")
        self.blocks.append(block)
        self.children.append([])
        seen: set[int] = set()
        for p in block.parents:  # draw order, deduplicated
            if p not in seen:
                seen.add(p)
                self.children[p].append(block.id)


class TipPool:
    """Global tip pool: selectable blocks plus the in-flight (hidden) queue.

    Event queues are plain FIFOs; monotone issuance with a constant delay h
    makes promotion, referenced-removal, and expiry times each non-decreasing
    in schedule order, so no heap is needed.  Ties between event kinds resolve
    removals first (referenced before expired), promotions last.
    """

    def __init__(self, delta: float | None = None, trace: bool = False) -> None:
        if delta is not None and delta <= 0:
            raise ValueError("delta must be positive or None")
        self.delta = delta
        self.now = 0.0
        self.selectable: list[int] = []            # swap-remove order
        self._pos: dict[int, int] = {}
        self.hidden: deque[tuple[float, int]] = deque()
        self._removals: deque[tuple[float, int]] = deque()
        self._expiries: deque[tuple[float, int]] = deque()
        self._genesis_expiry_deferred = False
        # optional (time, |visible|) log of every pool-size change
        self.trace: list[tuple[float, int]] | None = [] if trace else None

    # -- membership ------------------------------------------------------

    def __contains__(self, block_id: int) -> bool:
        return block_id in self._pos or any(b == block_id for _, b in self.hidden)

    @property
    def visible(self) -> set[int]:
        return set(self.selectable)

    @property
    def visible_count(self) -> int:
        return len(self.selectable)

    @property
    def hidden_count(self) -> int:
        return len(self.hidden)

    @property
    def size(self) -> int:
        return len(self.selectable) + len(self.hidden)

    # -- internal mutations -----------------------------------------------

    def _log(self, t: float) -> None:
        if self.trace is not None:
            self.trace.append((t, len(self.selectable)))

    def _add_visible(self, block_id: int, t: float) -> None:
        self._pos[block_id] = len(self.selectable)
        self.selectable.append(block_id)
        self._log(t)

    def _drop_visible(self, block_id: int, t: float) -> None:
        i = self._pos.pop(block_id)
        last = self.selectable.pop()
        if last != block_id:
            self.selectable[i] = last
            self._pos[last] = i
        self._log(t)


def new_dag(delta: float | None = None, trace: bool = False) -> tuple[DagStore, TipPool]:
    """Store and pool seeded with a genesis block visible from t=0."""
    store = DagStore()
    pool = TipPool(delta=delta, trace=trace)
    genesis = Block(GENESIS_ID, 0.0, [], Issuer.GENESIS, visible_at=0.0)
    store.add(genesis)
    pool._add_visible(GENESIS_ID, 0.0)
    if delta is not None:
        pool._expiries.append((delta, GENESIS_ID))
    return store, pool


def insert_block(store: DagStore, pool: TipPool, block: Block) -> None:
    """Append a block, queue its visibility, and register approvals.

    Honest references approve: the first approval of a parent stamps
    ``referenced_at`` and schedules the parent's pool removal for the moment
    this block becomes visible.  Adversary references are structural only.
    """
    if block.issued_at < pool.now:
        raise ValueError("insertions must be time-ordered")
    store.add(block)
    pool.hidden.append((block.visible_at, block.id))
    if block.issuer != Issuer.ADVERSARY:
        seen: set[int] = set()
        for p in block.parents:  # draw order: removal scheduling is order-sensitive
            if p in seen:
                continue
            seen.add(p)
            parent = store[p]
            if parent.referenced_at is None and parent.removed_at is None:
                parent.referenced_at = block.issued_at
                pool._removals.append((block.visible_at, p))


def advance_time(pool: TipPool, store: DagStore, to: float) -> list[tuple[int, RemovalCause]]:
    """Apply all promotions, referenced removals, and expirations up to ``to``.

    Returns the removed blocks with causes in firing order.  At equal
    timestamps removals fire before promotions, and a referenced removal
    beats an expiry for the same instant.
    """
    if to < pool.now:
        raise ValueError("time must not move backwards")
    removed: list[tuple[int, RemovalCause]] = []
    while True:
        rt = pool._removals[0][0] if pool._removals else _INF
        et = pool._expiries[0][0] if pool._expiries else _INF
        pt = pool.hidden[0][0] if pool.hidden else _INF
        t = min(rt, et, pt)
        if t > to:
            break
        if rt == t:
            _, b = pool._removals.popleft()
            block = store[b]
            if block.removed_at is None:
                if b in pool._pos:
                    pool._drop_visible(b, t)
                else:  # referenced while still hidden (manual DAGs only)
                    pool.hidden = deque(x for x in pool.hidden if x[1] != b)
                block.removed_at = t
                block.removal_cause = RemovalCause.REFERENCED
                removed.append((b, RemovalCause.REFERENCED))
        elif et == t:
            _, b = pool._expiries.popleft()
            block = store[b]
            if block.removed_at is not None or block.referenced_at is not None:
                pass  # already gone, or an approver is in flight
            elif b == GENESIS_ID and len(pool.selectable) == 1:
                pool._genesis_expiry_deferred = True
            elif b in pool._pos:
                pool._drop_visible(b, t)
                block.removed_at = t
                block.removal_cause = RemovalCause.EXPIRED
                removed.append((b, RemovalCause.EXPIRED))
        else:
            _, b = pool.hidden.popleft()
            if store[b].removed_at is None:
                pool._add_visible(b, t)
                if pool.delta is not None:
                    pool._expiries.append((t + pool.delta, b))
                if pool._genesis_expiry_deferred and len(pool.selectable) >= 2:
                    g = store[GENESIS_ID]
                    if GENESIS_ID in pool._pos and g.referenced_at is None:
                        pool._drop_visible(GENESIS_ID, t)
                        g.removed_at = t
                        g.removal_cause = RemovalCause.EXPIRED
                        removed.append((GENESIS_ID, RemovalCause.EXPIRED))
                    pool._genesis_expiry_deferred = False
    pool.now = to
    return removed


def ancestors_of(store: DagStore, roots: set[int]) -> set[int]:
    """Union of past cones of ``roots``, roots included."""
    for r in roots:
        if not 0 <= r < len(store):
            raise ValueError(f"unknown root {r}")
    seen = set(roots)
    stack = list(roots)
    while stack:
        b = stack.pop()
        for p in store[b].parent_set:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


_ISSUER_NAMES = {Issuer.GENESIS: "genesis", Issuer.HONEST: "honest", Issuer.ADVERSARY: "adversary"}
_CAUSE_NAMES = {RemovalCause.REFERENCED: "referenced", RemovalCause.EXPIRED: "expired"}

DUMP_HEADER = ["id", "issued_at", "visible_at", "parent_ids", "issuer", "removed_at", "cause"]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_dag_csv(store: DagStore, path: str) -> None:
    """One block per line; parent ids ';'-separated, empty fields for unset."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DUMP_HEADER)
        for b in store:
            w.writerow(
                [
                    b.id,
                    _fmt(b.issued_at),
                    _fmt(b.visible_at),
                    ";".join(str(p) for p in b.parents),
                    _ISSUER_NAMES[b.issuer],
                    "" if b.removed_at is None else _fmt(b.removed_at),
                    "" if b.removal_cause is None else _CAUSE_NAMES[b.removal_cause],
                ]
            )
