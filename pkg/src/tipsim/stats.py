"""Per-run and cross-run statistics: pool means, tip classes, orphanage.

Orphanage rates are censored: only blocks issued early enough that their
fate (approval or expiry) is decided by the end of the run are counted.
Future-cone orphanage is measured as the fraction of old honest blocks that
are unreachable from the final tips and the recent blocks; it is a lower
bound on the true rate because young cones may still die later.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernel
from .dag import DagStore, TipPool
from .engine import SimConfig, SimDag, SimResult


def time_weighted_mean(
    times: Sequence[float], values: Sequence[float], t0: float, t1: float
) -> float:
    """Mean of a piecewise-constant series over [t0, t1], exact.

    ``values[i]`` holds on [times[i], times[i+1]); the last value extends to
    t1.  The series must start at or before t0.
    """
    if t1 <= t0:
        raise ValueError("window must have positive length")
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.shape != values.shape or times.size == 0:
        raise ValueError("times and values must be equal-length and non-empty")
    if times[0] > t0:
        raise ValueError("series does not cover the window start")
    edges = np.concatenate([times, [t1]])
    lo = np.clip(edges[:-1], t0, t1)
    hi = np.clip(edges[1:], t0, t1)
    return float(np.sum(values * (hi - lo)) / (t1 - t0))


def classify_tips(store: DagStore, pool: TipPool, t: float) -> tuple[int, int, int]:
    """(hidden, real, false) partition of the pool at time t.

    Hidden: issued within the last h (still in the hidden queue).  False:
    visible but already approved by a block that is itself still hidden.
    Real: visible and not yet approved at all.
    """
    if t != pool.now:
        raise ValueError("advance the pool to t before classifying")
    hidden = pool.hidden_count
    false_ = sum(1 for b in pool.selectable if store[b].referenced_at is not None)
    real = pool.visible_count - false_
    return hidden, real, false_


def recompute_tip_classes(dag: SimDag, sample_times: np.ndarray):
    """(hidden, real, false) at each sample time, recomputed from block arrays.

    Independent of the engine's incremental counters; sample times are the
    arrival instants, where the arriving block itself is not yet inserted
    (its issuance time is strictly the sample time, and intervals below are
    open on that side).
    """
    t = np.asarray(sample_times, dtype=np.float64)
    issued = np.sort(dag.issued_at)
    visible = np.sort(dag.visible_at)
    removed = np.sort(dag.removed_at[~np.isnan(dag.removed_at)])
    referenced = np.sort(dag.referenced_at[~np.isnan(dag.referenced_at)])
    h = float(np.min(dag.visible_at[1:] - dag.issued_at[1:])) if len(dag) > 1 else 0.0

    n_issued = np.searchsorted(issued, t, side="left")      # issued strictly before t
    n_visible = np.searchsorted(visible, t, side="right")   # promotions at <= t applied
    hidden = n_issued - n_visible
    n_removed = np.searchsorted(removed, t, side="right")
    vis = n_visible - n_removed
    # approved in [t-h, t): the arriving block's own approvals carry the
    # sample timestamp itself and are excluded, matching pre-insertion samples
    false_ = np.searchsorted(referenced, t, side="left") - np.searchsorted(
        referenced, t - h, side="right"
    )
    real = vis - false_
    return hidden, real, false_


@dataclass(frozen=True)
class RunStats:
    config: SimConfig
    mean_L: float
    q25: float
    q75: float
    growth_slope: float
    mean_tip_time: float
    orphanage_rate: float | None
    honest_eligible: int


def run_stats(result: SimResult) -> RunStats:
    rate, eligible = orphanage_rate(result)
    return RunStats(
        config=result.config,
        mean_L=result.mean_tip_pool,
        q25=result.q25,
        q75=result.q75,
        growth_slope=result.growth_slope,
        mean_tip_time=result.mean_tip_time,
        orphanage_rate=rate,
        honest_eligible=eligible,
    )


def orphanage_rate(result: SimResult) -> tuple[float | None, int]:
    """Expired fraction of honest blocks whose fate is decided (censored).

    Undefined (None) when expiration is disabled or no honest block falls in
    the censoring window.
    """
    if result.config.delta is None:
        return None, 0
    if result.honest_issued == 0:
        return None, 0
    return result.honest_expired / result.honest_issued, result.honest_issued


def reachable_from(dag: SimDag, roots: np.ndarray) -> np.ndarray:
    """Boolean mask of blocks reachable from ``roots`` via parent edges.

    Parents always have smaller ids, so one descending sweep suffices.
    """
    mark = np.zeros(len(dag), dtype=bool)
    mark[roots] = True
    parents = dag.parents
    for b in range(len(dag) - 1, 0, -1):
        if mark[b]:
            for p in parents[b]:
                if p >= 0:
                    mark[p] = True
    return mark


def future_cone_from_dag(
    dag: SimDag, t_end: float, warmup_end: float, tau: float
) -> tuple[float | None, int]:
    """Fraction of old honest blocks whose whole future cone died.

    Roots are the end-of-run pool plus every block issued in the last
    ``tau``; eligible are honest blocks issued at least ``tau`` before the
    end (and after warmup).  A lower bound on the true future-cone
    orphanage, since even surviving cones may still die later.
    """
    in_pool = np.isnan(dag.removed_at)
    recent = dag.issued_at > t_end - tau
    roots = np.flatnonzero(in_pool | recent)
    reach = reachable_from(dag, roots)
    eligible = (
        (dag.issuer == _kernel.ISSUER_HONEST)
        & (dag.issued_at >= warmup_end)
        & (dag.issued_at <= t_end - tau)
    )
    n_eligible = int(np.count_nonzero(eligible))
    if n_eligible == 0:
        return None, 0
    orphaned = int(np.count_nonzero(eligible & ~reach))
    return orphaned / n_eligible, n_eligible


def future_cone_orphanage(
    result: SimResult, tau: float | None = None
) -> tuple[float | None, int]:
    """``future_cone_from_dag`` for a completed run; tau defaults to 3*delta."""
    cfg = result.config
    if cfg.delta is None:
        raise ValueError("future-cone orphanage requires expiration")
    if result.dag is None:
        raise ValueError("run the simulation with keep_dag=True")
    if tau is None:
        tau = 3.0 * cfg.delta
    return future_cone_from_dag(result.dag, result.t_end, result.warmup_end, tau)


@dataclass(frozen=True)
class AggregateStats:
    """Across-run mean / stddev (n-1) / stderr per metric, permutation-invariant."""

    runs: int
    mean: dict[str, float]
    stddev: dict[str, float]
    stderr: dict[str, float]


_AGG_METRICS = (
    "mean_tip_pool",
    "q25",
    "q75",
    "growth_slope",
    "mean_tip_time",
    "orphanage_rate",
)


def _summary(values: list[float]) -> tuple[float, float, float]:
    v = np.sort(np.asarray(values, dtype=np.float64))  # fixed summation order
    mean = float(np.mean(v))
    if v.size == 1:
        return mean, 0.0, 0.0
    sd = float(np.std(v, ddof=1))
    return mean, sd, sd / float(np.sqrt(v.size))


def aggregate(results: list[SimResult]) -> AggregateStats:
    """Cross-run summary; all runs must share one config (seeds aside)."""
    if not results:
        raise ValueError("no runs to aggregate")
    ref = results[0].config
    for r in results[1:]:
        if r.config != ref:
            raise ValueError("runs with heterogeneous configs cannot be aggregated")
    mean: dict[str, float] = {}
    sd: dict[str, float] = {}
    se: dict[str, float] = {}
    for name in _AGG_METRICS:
        if name == "orphanage_rate":
            vals = [orphanage_rate(r)[0] for r in results]
        else:
            vals = [getattr(r, name) for r in results]
        if any(v is None or not np.isfinite(v) for v in vals):
            continue  # metric undefined for these runs
        mean[name], sd[name], se[name] = _summary(vals)
    return AggregateStats(runs=len(results), mean=mean, stddev=sd, stderr=se)
