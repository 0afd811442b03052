"""Parent-selection strategies: honest uniform-k and the tip-avoiding spammer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dag import GENESIS_ID, DagStore


class EmptyTipPool(Exception):
    """Raised when an honest issuer finds no selectable tips and no fallback."""


@dataclass(frozen=True)
class SelectionParams:
    """k parent references per block; mu the honest share of the total rate."""

    k: int
    mu: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must be in [0, 1]")


@dataclass
class AdversaryState:
    """The spammer's private chain anchor: its most recently issued block."""

    last_own_block: int | None = None

    def note_issued(self, block_id: int) -> None:
        self.last_own_block = block_id


def pick_uniform(selectable: Sequence[int], unit_draws: Sequence[float]) -> list[int]:
    """Map unit-interval draws onto a sequence: index = floor(u * len).

    This mapping is the single sampling primitive shared by the interactive
    API and the batched engine, so both consume identical random streams.
    """
    n = len(selectable)
    out = []
    for u in unit_draws:
        i = int(u * n)
        if i >= n:  # guard the u -> 1.0 rounding edge
            i = n - 1
        out.append(selectable[i])
    return out


def select_honest(
    pool_visible: Sequence[int], k: int, rng: np.random.Generator
) -> list[int]:
    """k independent uniform draws with replacement from the visible pool.

    Duplicates are allowed in the returned list; the block's parent set is
    the distinct elements.  Raises EmptyTipPool when nothing is selectable.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(pool_visible) == 0:
        raise EmptyTipPool("no selectable tips")
    return pick_uniform(pool_visible, rng.random(k))


def select_adversary(state: AdversaryState, store: DagStore, k: int) -> list[int]:
    """k copies of the spammer's last own block (genesis before any exist).

    The spammer never approves tips: callers record these references as DAG
    edges only.  The caller updates ``state`` with the new block's id after
    issuance.
    """
    if len(store) == 0:
        raise ValueError("store must contain at least genesis")
    anchor = state.last_own_block if state.last_own_block is not None else GENESIS_ID
    return [anchor] * k
