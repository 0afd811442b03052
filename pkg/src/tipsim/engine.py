"""Continuous-time simulation engine: Poisson arrivals, issuer coin, delays.

One run draws all randomness up front from a PCG64 generator seeded with
``SeedSequence(seed, spawn_key=(run_index,))`` -- the documented seed-mixing
function -- in a fixed order: inter-arrival times, issuer coins, selection
draws.  Everything after that is deterministic, so identical configs and
seeds give bit-identical results regardless of backend or worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .dag import Block, DagStore, Issuer, RemovalCause, TipPool, advance_time, insert_block, new_dag
from .selection import AdversaryState, pick_uniform, select_adversary


@dataclass(frozen=True)
class SimConfig:
    """Full parameterization of one run; defaults follow the standard table."""

    mu: float
    k: int
    lam: float = 100.0          # blocks per unit h
    h: float = 1.0
    delta: float | None = 100.0  # expiration window in units of h; None disables
    total_blocks: int = 300_000
    warmup_fraction: float = 0.2
    seed: int = 0
    record_series: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must be in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive or None")
        if self.total_blocks < 1:
            raise ValueError("total_blocks must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")


@dataclass
class SimDag:
    """Completed-run block arrays (index = block id, 0 = genesis)."""

    issued_at: np.ndarray
    visible_at: np.ndarray
    issuer: np.ndarray
    parents: np.ndarray        # (B, k), -1 padding on the genesis row
    referenced_at: np.ndarray  # nan = never approved by an honest block
    removed_at: np.ndarray     # nan = still in the pool at run end
    cause: np.ndarray

    def __len__(self) -> int:
        return self.issued_at.shape[0]

    def to_store(self) -> DagStore:
        """Materialize the object model (small runs; tests and inspection)."""
        store = DagStore()
        for b in range(len(self)):
            parents = [int(p) for p in self.parents[b] if p >= 0]
            blk = Block(
                id=b,
                issued_at=float(self.issued_at[b]),
                parents=parents,
                issuer=Issuer(int(self.issuer[b])),
                visible_at=float(self.visible_at[b]),
            )
            if not np.isnan(self.referenced_at[b]):
                blk.referenced_at = float(self.referenced_at[b])
            if not np.isnan(self.removed_at[b]):
                blk.removed_at = float(self.removed_at[b])
                blk.removal_cause = RemovalCause(int(self.cause[b]))
            store.add(blk)
        return store


@dataclass
class SimSeries:
    """Per-arrival samples taken just before each insertion."""

    t: np.ndarray
    pool: np.ndarray    # |visible|
    hidden: np.ndarray  # |hidden|
    false_: np.ndarray  # visible tips already approved by a hidden block


@dataclass
class SimResult:
    config: SimConfig
    run_index: int
    t_end: float
    warmup_end: float
    censor_end: float
    mean_tip_pool: float
    q25: float
    q75: float
    growth_slope: float
    honest_issued: int
    honest_expired: int
    adversary_issued: int
    empty_pool_events: int
    mean_tip_time: float
    tip_time_count: int
    series: SimSeries | None = None
    dag: SimDag | None = None


def _draw_randomness(config: SimConfig, run_index: int):
    """The documented stream: exponentials, coins, selection draws."""
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(run_index,))
    rng = np.random.default_rng(ss)
    n = config.total_blocks
    dts = rng.exponential(scale=config.h / config.lam, size=n)
    coins = rng.random(n) < config.mu
    sel_u = rng.random((n, config.k))
    return np.cumsum(dts), coins, sel_u


def _censor_end(config: SimConfig, t_end: float) -> float:
    if config.delta is None:
        return t_end
    return t_end - (config.h + config.delta)


def run(
    config: SimConfig,
    run_index: int = 0,
    *,
    keep_dag: bool = True,
    backend: str = "auto",
) -> SimResult:
    """Simulate one run.  ``backend``: auto | python | reference.

    "auto" uses the jitted kernel when available, "python" forces the
    interpreted kernel, "reference" drives the object model block by block
    (slow; used to cross-check the kernel).
    """
    t_arr, coins, sel_u = _draw_randomness(config, run_index)
    n = config.total_blocks
    b = n + 1
    k = config.k
    warmup_t = config.warmup_fraction * float(t_arr[-1])

    if backend == "reference":
        arrays, pool_s, hidden_s, false_s, theta, empty_events = _run_reference(
            config, t_arr, coins, sel_u, warmup_t
        )
    elif backend in ("auto", "python"):
        arrays = SimDag(
            issued_at=np.empty(b),
            visible_at=np.empty(b),
            issuer=np.empty(b, dtype=np.uint8),
            parents=np.empty((b, k), dtype=np.int32),
            referenced_at=np.full(b, np.nan),
            removed_at=np.full(b, np.nan),
            cause=np.zeros(b, dtype=np.uint8),
        )
        pool_s = np.empty(n, dtype=np.int32)
        hidden_s = np.empty(n, dtype=np.int32)
        false_s = np.empty(n, dtype=np.int32)
        theta, empty_events = _kernel.simulate_kernel(
            t_arr,
            coins,
            sel_u,
            config.h,
            -1.0 if config.delta is None else config.delta,
            warmup_t,
            arrays.issued_at,
            arrays.visible_at,
            arrays.issuer,
            arrays.parents,
            arrays.referenced_at,
            arrays.removed_at,
            arrays.cause,
            pool_s,
            hidden_s,
            false_s,
            jit=(backend == "auto"),
        )
    else:
        raise ValueError(f"unknown backend {backend!r}")

    t_end = float(t_arr[-1])
    censor = _censor_end(config, t_end)
    post = t_arr >= warmup_t
    pool_post = pool_s[post]
    t_post = t_arr[post]

    mean_pool = theta / (t_end - warmup_t)
    q25, q75 = np.quantile(pool_post, [0.25, 0.75], method="linear")
    slope = float(np.polyfit(t_post, pool_post.astype(np.float64), 1)[0])

    window = (arrays.issued_at >= warmup_t) & (arrays.issued_at <= censor)
    honest_mask = arrays.issuer == _kernel.ISSUER_HONEST
    honest_issued = int(np.count_nonzero(window & honest_mask))
    honest_expired = int(
        np.count_nonzero(window & honest_mask & (arrays.cause == _kernel.CAUSE_EXPIRED))
    )
    adversary_issued = int(
        np.count_nonzero(window & (arrays.issuer == _kernel.ISSUER_ADVERSARY))
    )

    mean_tau, tau_count = _mean_tip_time(config, arrays, warmup_t, t_end)

    series = None
    if config.record_series:
        series = SimSeries(t=t_arr, pool=pool_s, hidden=hidden_s, false_=false_s)
    return SimResult(
        config=config,
        run_index=run_index,
        t_end=t_end,
        warmup_end=warmup_t,
        censor_end=censor,
        mean_tip_pool=float(mean_pool),
        q25=float(q25),
        q75=float(q75),
        growth_slope=slope,
        honest_issued=honest_issued,
        honest_expired=honest_expired,
        adversary_issued=adversary_issued,
        empty_pool_events=int(empty_events),
        mean_tip_time=mean_tau,
        tip_time_count=tau_count,
        series=series,
        dag=arrays if keep_dag else None,
    )


def _mean_tip_time(config: SimConfig, dag: SimDag, warmup_t: float, t_end: float):
    """Average per-block tip time over decided blocks in the censored window.

    A block's tip time ends at its first honest approval (the approver's
    issuance time) or, failing that, at expiry h + delta after issuance.
    Without expiration the window end is pulled in by 20h so that slow
    approvals do not bias the sample through censoring.
    """
    if config.delta is None:
        hi = t_end - 20.0 * config.h
    else:
        hi = t_end - (config.h + config.delta)
    sel = (dag.issued_at >= warmup_t) & (dag.issued_at <= hi)
    approved = sel & ~np.isnan(dag.referenced_at)
    expired = sel & (dag.cause == _kernel.CAUSE_EXPIRED)
    taus = np.concatenate(
        [
            dag.referenced_at[approved] - dag.issued_at[approved],
            dag.removed_at[expired] - dag.issued_at[expired],
        ]
    )
    if taus.size == 0:
        return float("nan"), 0
    return float(np.mean(taus)), int(taus.size)


def _run_reference(config: SimConfig, t_arr, coins, sel_u, warmup_t):
    """Object-model backend consuming the same random stream as the kernel."""
    n = config.total_blocks
    k = config.k
    store, pool = new_dag(delta=config.delta, trace=True)
    adversary = AdversaryState()
    pool_s = np.empty(n, dtype=np.int32)
    hidden_s = np.empty(n, dtype=np.int32)
    false_s = np.empty(n, dtype=np.int32)
    empty_events = 0

    for i in range(n):
        t = float(t_arr[i])
        bid = i + 1
        advance_time(pool, store, t)
        pool_s[i] = pool.visible_count
        hidden_s[i] = pool.hidden_count
        false_s[i] = sum(
            1 for x in pool.selectable if store[x].referenced_at is not None
        )
        if coins[i]:
            if pool.visible_count == 0:
                empty_events += 1
                parents = [max(bid - 1 - j, 0) for j in range(k)]
            else:
                parents = pick_uniform(pool.selectable, sel_u[i])
            block = Block(bid, t, parents, Issuer.HONEST, visible_at=t + config.h)
        else:
            parents = select_adversary(adversary, store, k)
            block = Block(bid, t, parents, Issuer.ADVERSARY, visible_at=t + config.h)
            adversary.note_issued(bid)
        insert_block(store, pool, block)

    b = n + 1
    arrays = SimDag(
        issued_at=np.array([blk.issued_at for blk in store]),
        visible_at=np.array([blk.visible_at for blk in store]),
        issuer=np.array([int(blk.issuer) for blk in store], dtype=np.uint8),
        parents=np.full((b, k), -1, dtype=np.int32),
        referenced_at=np.array(
            [np.nan if blk.referenced_at is None else blk.referenced_at for blk in store]
        ),
        removed_at=np.array(
            [np.nan if blk.removed_at is None else blk.removed_at for blk in store]
        ),
        cause=np.array(
            [0 if blk.removal_cause is None else int(blk.removal_cause) for blk in store],
            dtype=np.uint8,
        ),
    )
    for blk in store:
        for j, p in enumerate(blk.parents):
            arrays.parents[blk.id, j] = p

    t_end = float(t_arr[-1])
    theta = _theta_from_trace(pool.trace, warmup_t, t_end)
    return arrays, pool_s, hidden_s, false_s, theta, empty_events


def _theta_from_trace(trace, warmup_t: float, t_end: float) -> float:
    """Exact integral of the |visible| step function over [warmup_t, t_end]."""
    theta = 0.0
    t_prev = 0.0
    n_prev = 0
    for t, n in trace:
        if t > warmup_t:
            theta += n_prev * (t - max(t_prev, warmup_t))
        t_prev, n_prev = t, n
    if t_end > warmup_t:
        theta += n_prev * (t_end - max(t_prev, warmup_t))
    return theta


def _run_job(args) -> SimResult:
    config, idx, keep_dag, backend = args
    return run(config, idx, keep_dag=keep_dag, backend=backend)


def run_replicated(
    config: SimConfig,
    runs: int,
    *,
    workers: int = 1,
    keep_dags: bool = False,
    backend: str = "auto",
) -> list[SimResult]:
    """Independent replicated runs; run i is seeded by mixing (seed, i).

    The returned list is ordered by run index whatever the worker count, so
    parallel and sequential execution aggregate identically.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    jobs = [(config, i, keep_dags, backend) for i in range(runs)]
    if workers <= 1 or runs == 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, runs)) as pool:
        results = list(pool.map(_run_job, jobs))
    return sorted(results, key=lambda r: r.run_index)
