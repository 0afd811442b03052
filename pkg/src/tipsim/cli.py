"""Experiment runner: simulate / sweep / analytic / validate.

Sweep cells are written as one CSV row per (mu, k) with analytic reference
columns, the machine-checkable backing for tip-pool and orphanage figures.
Every command honors --seed; without one a fresh 64-bit seed is generated
and printed so the run can be reproduced.
"""

from __future__ import annotations

import argparse
import csv
import math
import secrets
import sys

import numpy as np

from .dag import write_dag_csv
from .engine import SimConfig, SimResult, run_replicated
from .model import (
    RegimeParams,
    Stability,
    UnstableRegimeError,
    classify_stability,
    expiration_probability,
    solve_l0,
    tip_pool_no_expiration,
)
from .stats import aggregate, future_cone_orphanage, orphanage_rate

SWEEP_HEADER = (
    "mu,k,lambda,h,delta,runs,blocks,mean_tip_pool,stderr_tip_pool,q25,q75,"
    "growth_slope,orphanage_rate,orphanage_stderr,analytic_pool_noexp,"
    "analytic_l0_exp,analytic_pool_exp,analytic_orphanage,"
    "analytic_orphanage_noexp_l0,stability"
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.10g}"
    return str(x)


def _positive_int(label):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"{label} must be an integer") from exc
        if value < 1:
            raise argparse.ArgumentTypeError(f"{label} must be >= 1")
        return value

    return parse


def _mu_value(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("mu must be a real number") from exc
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("mu must be in [0, 1]")
    return value


def _positive_float(label):
    def parse(text: str) -> float:
        try:
            value = float(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"{label} must be a real number") from exc
        if value <= 0:
            raise argparse.ArgumentTypeError(f"{label} must be positive")
        return value

    return parse


def _delta_value(text: str) -> float | None:
    if text.lower() == "none":
        return None
    return _positive_float("delta")(text)


def _warmup_value(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("warmup must be a real number") from exc
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError("warmup must be in [0, 1)")
    return value


def _mu_grid(text: str) -> list[float]:
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("mu grid must be a:b:step") from exc
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError("mu grid must satisfy a <= b, step > 0")
    out = []
    i = 0
    while True:
        v = round(a + i * step, 10)
        if v > b + 1e-9:
            break
        out.append(min(v, 1.0))
        i += 1
    if not out or any(not 0.0 <= v <= 1.0 for v in out):
        raise argparse.ArgumentTypeError("mu grid values must lie in [0, 1]")
    return out


def _k_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("k list must be comma-separated integers") from exc
    if not out or any(k < 1 for k in out):
        raise argparse.ArgumentTypeError("k values must be >= 1")
    return out


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=_positive_float("lambda"), default=100.0,
                   help="arrival rate in blocks per h (default 100)")
    p.add_argument("--h", type=_positive_float("h"), default=1.0,
                   help="network delay (default 1.0; the time unit)")
    p.add_argument("--delta", type=_delta_value, default=100.0,
                   help="expiration window in units of h, or 'none' (default 100)")
    p.add_argument("--blocks", type=_positive_int("blocks"), default=None,
                   help="blocks per run (default 100000; 300000 with --paper-scale)")
    p.add_argument("--runs", type=_positive_int("runs"), default=None,
                   help="replicated runs (default 10; 100 with --paper-scale)")
    p.add_argument("--warmup", type=_warmup_value, default=0.2,
                   help="fraction of simulated time discarded (default 0.2)")
    p.add_argument("--seed", type=int, default=None,
                   help="64-bit seed; generated and printed when omitted")
    p.add_argument("--paper-scale", action="store_true",
                   help="full-scale defaults: 100 runs of 300000 blocks")
    p.add_argument("--workers", type=_positive_int("workers"), default=1,
                   help="parallel worker processes (results are identical either way)")


def _resolve_scale(args) -> tuple[int, int]:
    blocks = args.blocks if args.blocks is not None else (300_000 if args.paper_scale else 100_000)
    runs = args.runs if args.runs is not None else (100 if args.paper_scale else 10)
    return blocks, runs


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbits(64)
    print(f"seed: {seed} (generated; pass --seed {seed} to reproduce)")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tipsim",
        description="Tip-pool simulation and analytic models for DAG ledgers under tip-inflation attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one replicated experiment and summarize it")
    p_sim.add_argument("--mu", type=_mu_value, required=True, help="honest fraction of the rate")
    p_sim.add_argument("--k", type=_positive_int("k"), required=True, help="parent references per block")
    _add_run_flags(p_sim)
    p_sim.add_argument("--out", default=None, help="write the per-arrival series of run 0 as CSV")
    p_sim.add_argument("--dump-dag", default=None, help="write the block DAG of run 0 as CSV")
    p_sim.add_argument("--tau-factor", type=_positive_float("tau-factor"), default=3.0,
                       help="future-cone horizon as a multiple of delta (default 3)")

    p_sweep = sub.add_parser("sweep", help="run a (mu, k) grid and write the sweep CSV")
    p_sweep.add_argument("--mu", type=_mu_value, default=None, help="single mu instead of a grid")
    p_sweep.add_argument("--mu-grid", type=_mu_grid, default=None, help="mu grid a:b:step (default 0:1:0.05)")
    p_sweep.add_argument("--k", type=_positive_int("k"), default=None, help="single k instead of a list")
    p_sweep.add_argument("--k-list", type=_k_list, default=None, help="comma-separated k values (default 1..8)")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--out", required=True, help="output CSV path")

    p_an = sub.add_parser("analytic", help="print analytic predictions for a parameter grid")
    p_an.add_argument("--mu", type=_mu_value, default=None)
    p_an.add_argument("--mu-grid", type=_mu_grid, default=None)
    p_an.add_argument("--k", type=_positive_int("k"), default=None)
    p_an.add_argument("--k-list", type=_k_list, default=None)
    p_an.add_argument("--lambda", dest="lam", type=_positive_float("lambda"), default=100.0)
    p_an.add_argument("--h", type=_positive_float("h"), default=1.0)
    p_an.add_argument("--delta", type=_delta_value, default=100.0)

    p_val = sub.add_parser("validate", help="sweep and compare simulation against the analytic model")
    p_val.add_argument("--mu", type=_mu_value, default=None)
    p_val.add_argument("--mu-grid", type=_mu_grid, default=None)
    p_val.add_argument("--k", type=_positive_int("k"), default=None)
    p_val.add_argument("--k-list", type=_k_list, default=None)
    _add_run_flags(p_val)
    p_val.add_argument("--out", default=None, help="also write the sweep CSV here")
    p_val.add_argument("--pool-tol", type=_positive_float("pool-tol"), default=0.10,
                       help="relative tolerance for pool-size cells (default 0.10)")
    p_val.add_argument("--orph-factor", type=_positive_float("orph-factor"), default=2.0,
                       help="allowed ratio between simulated and analytic orphanage (default 2)")
    return parser


class SystemExit2(Exception):
    """Usage error discovered after argparse (exit code 2)."""


def _grid(args) -> tuple[list[float], list[int]]:
    if args.mu is not None and args.mu_grid is not None:
        raise SystemExit2("--mu and --mu-grid are mutually exclusive")
    if args.k is not None and args.k_list is not None:
        raise SystemExit2("--k and --k-list are mutually exclusive")
    mus = [args.mu] if args.mu is not None else (args.mu_grid or _mu_grid("0:1:0.05"))
    ks = [args.k] if args.k is not None else (args.k_list or list(range(1, 9)))
    return mus, ks


def _cell_row(config: SimConfig, runs: int, results: list[SimResult]) -> dict:
    """One sweep-CSV row: simulation aggregates plus analytic references."""
    agg = aggregate(results)
    params = RegimeParams(mu=config.mu, k=config.k, h=config.h, lam=config.lam, delta=config.delta)
    stability, _ = classify_stability(params)
    stable = stability is Stability.STABLE
    unstable_free = config.delta is None and not stable

    try:
        pool_noexp = tip_pool_no_expiration(params)
    except UnstableRegimeError:
        pool_noexp = None

    l0_exp = pool_exp = orph = orph_noexp = None
    if config.delta is not None:
        l0_exp = solve_l0(params)
        pool_exp = l0_exp * config.lam
        orph = expiration_probability(params)[0]
        orph_noexp = expiration_probability(params, use_no_expiration_l0=True)[0]

    expired = sum(r.honest_expired for r in results)
    eligible = sum(r.honest_issued for r in results)
    rates = [orphanage_rate(r)[0] for r in results]
    have_rates = config.delta is not None and all(x is not None for x in rates)

    return {
        "mu": config.mu,
        "k": config.k,
        "lambda": config.lam,
        "h": config.h,
        "delta": "none" if config.delta is None else config.delta,
        "runs": runs,
        "blocks": config.total_blocks,
        "mean_tip_pool": None if unstable_free else agg.mean["mean_tip_pool"],
        "stderr_tip_pool": None if unstable_free else agg.stderr["mean_tip_pool"],
        "q25": None if unstable_free else agg.mean["q25"],
        "q75": None if unstable_free else agg.mean["q75"],
        "growth_slope": agg.mean["growth_slope"] if unstable_free else None,
        "orphanage_rate": (expired / eligible) if have_rates and eligible else None,
        "orphanage_stderr": agg.stderr.get("orphanage_rate") if have_rates else None,
        "analytic_pool_noexp": pool_noexp,
        "analytic_l0_exp": l0_exp,
        "analytic_pool_exp": pool_exp,
        "analytic_orphanage": orph,
        "analytic_orphanage_noexp_l0": orph_noexp,
        "stability": stability.value,
        "_eligible": eligible,  # carried for validate; not a CSV column
    }


def _run_grid(args, mus: list[float], ks: list[int], seed: int) -> list[dict]:
    blocks, runs = _resolve_scale(args)
    rows = []
    for k in sorted(ks):
        for mu in sorted(mus):
            config = SimConfig(
                mu=mu, k=k, lam=args.lam, h=args.h, delta=args.delta,
                total_blocks=blocks, warmup_fraction=args.warmup, seed=seed,
            )
            results = run_replicated(config, runs, workers=args.workers)
            rows.append(_cell_row(config, runs, results))
    return rows


def _write_rows(path: str, rows: list[dict]) -> None:
    columns = SWEEP_HEADER.split(",")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    blocks, runs = _resolve_scale(args)
    config = SimConfig(
        mu=args.mu, k=args.k, lam=args.lam, h=args.h, delta=args.delta,
        total_blocks=blocks, warmup_fraction=args.warmup, seed=seed,
        record_series=args.out is not None,
    )
    keep = args.delta is not None or args.dump_dag is not None
    results = run_replicated(config, runs, workers=args.workers, keep_dags=keep)
    agg = aggregate(results)
    params = RegimeParams(mu=args.mu, k=args.k, h=args.h, lam=args.lam, delta=args.delta)
    stability, drift = classify_stability(params)

    print(f"tipsim simulate: mu={args.mu:g} k={args.k} lambda={args.lam:g} h={args.h:g} "
          f"delta={'none' if args.delta is None else f'{args.delta:g}'} "
          f"blocks={blocks} runs={runs} seed={seed}")
    print(f"regime: {stability.value} (per-arrival drift bound {drift:g})")
    m = agg.mean["mean_tip_pool"]
    print(f"tip pool: mean {m:.4f} +- {agg.stderr['mean_tip_pool']:.4f} "
          f"(q25 {agg.mean['q25']:.2f}, q75 {agg.mean['q75']:.2f})")
    print(f"growth slope: {agg.mean['growth_slope']:.4f} tips per h")
    print(f"tip time: lambda*mean(tau) = {args.lam / args.h * agg.mean['mean_tip_time']:.4f} "
          f"(Little's law check against the pool mean)")
    if args.delta is not None:
        l0 = solve_l0(params)
        prob, bound = expiration_probability(params)
        expired = sum(r.honest_expired for r in results)
        eligible = sum(r.honest_issued for r in results)
        rate = expired / eligible if eligible else float("nan")
        print(f"analytic pool: {l0 * args.lam:.4f} (L0 {l0:.6f}); sim/analytic = {m / (l0 * args.lam):.4f}")
        print(f"orphanage: sim {rate:.6g} ({expired}/{eligible}); analytic {prob:.6g}"
              + (f"; bound {bound:.6g}" if bound is not None else ""))
        fc = [future_cone_orphanage(r, tau=args.tau_factor * args.delta) for r in results]
        fc_rates = [x[0] for x in fc if x[0] is not None]
        if fc_rates:
            print(f"future-cone orphanage (tau={args.tau_factor:g}*delta): "
                  f"{float(np.mean(fc_rates)):.6g} over {sum(x[1] for x in fc)} blocks")
    elif stability is Stability.STABLE:
        pool = tip_pool_no_expiration(params)
        print(f"analytic pool: {pool:.4f}; sim/analytic = {m / pool:.4f}")
    else:
        print(f"analytic: unstable without expiration; drift lower bound {drift:g} "
              f"per block, expected slope ~ {args.lam / args.h * drift:.4g} tips per h")
    if results[0].empty_pool_events:
        print(f"warning: {results[0].empty_pool_events} empty-pool fallback selections in run 0")
    if args.out:
        series = results[0].series
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "pool", "hidden", "real", "false"])
            for i in range(series.t.shape[0]):
                w.writerow([
                    _fmt(float(series.t[i])), int(series.pool[i]), int(series.hidden[i]),
                    int(series.pool[i] - series.false_[i]), int(series.false_[i]),
                ])
        print(f"series written to {args.out}")
    if args.dump_dag:
        write_dag_csv(results[0].dag.to_store(), args.dump_dag)
        print(f"dag written to {args.dump_dag}")
    return 0


def cmd_sweep(args) -> int:
    seed = _resolve_seed(args)
    mus, ks = _grid(args)
    rows = _run_grid(args, mus, ks, seed)
    _write_rows(args.out, rows)
    print(f"wrote {len(rows)} cells to {args.out}")
    return 0


def cmd_analytic(args) -> int:
    mus = [args.mu] if args.mu is not None else (args.mu_grid or _mu_grid("0:1:0.05"))
    ks = [args.k] if args.k is not None else (args.k_list or list(range(1, 9)))
    header = (f"{'mu':>6} {'k':>2} {'stability':>9} {'pool_noexp':>12} "
              f"{'L0_exp':>12} {'pool_exp':>12} {'orphanage':>12} {'bound':>12}")
    print(header)
    for k in sorted(ks):
        for mu in sorted(mus):
            params = RegimeParams(mu=mu, k=k, h=args.h, lam=args.lam, delta=args.delta)
            stability, _ = classify_stability(params)
            try:
                noexp = f"{tip_pool_no_expiration(params):.6g}"
            except UnstableRegimeError:
                noexp = "-"
            if args.delta is not None:
                l0 = solve_l0(params)
                prob, bound = expiration_probability(params)
                print(f"{mu:>6g} {k:>2} {stability.value:>9} {noexp:>12} "
                      f"{l0:>12.6g} {l0 * args.lam:>12.6g} {prob:>12.6g} "
                      f"{'-' if bound is None else f'{bound:.6g}':>12}")
            else:
                print(f"{mu:>6g} {k:>2} {stability.value:>9} {noexp:>12} "
                      f"{'-':>12} {'-':>12} {'-':>12} {'-':>12}")
    return 0


def cmd_validate(args) -> int:
    seed = _resolve_seed(args)
    mus, ks = _grid(args)
    rows = _run_grid(args, mus, ks, seed)
    if args.out:
        _write_rows(args.out, rows)
    failures = 0
    print(f"{'mu':>6} {'k':>2} {'pool check':>24} {'orphanage check':>30} {'verdict':>8}")
    for row in rows:
        pool_msgs, ok = [], True
        target = row["analytic_pool_exp"] if row["delta"] != "none" else row["analytic_pool_noexp"]
        if row["mean_tip_pool"] is None or target is None:
            pool_msgs.append("skipped (unstable)")
        else:
            rel = abs(row["mean_tip_pool"] - target) / target
            good = rel <= args.pool_tol
            ok &= good
            pool_msgs.append(f"rel err {rel:.3%} {'<=' if good else '>'} {args.pool_tol:.0%}")
        orph_msg = "n/a"
        if row["delta"] != "none":
            rate, target_p = row["orphanage_rate"], row["analytic_orphanage"]
            expected_events = target_p * row["_eligible"]
            if rate is None:
                orph_msg = "no eligible blocks"
            elif rate == 0.0:
                good = expected_events <= 3.0
                ok &= good
                orph_msg = f"0 observed, {expected_events:.3g} expected"
            else:
                ratio = max(rate / target_p, target_p / rate)
                good = ratio <= args.orph_factor
                ok &= good
                orph_msg = f"ratio {ratio:.3f} {'<=' if good else '>'} {args.orph_factor:g}"
        verdict = "pass" if ok else "FAIL"
        failures += 0 if ok else 1
        print(f"{row['mu']:>6g} {row['k']:>2} {pool_msgs[0]:>24} {orph_msg:>30} {verdict:>8}")
    if failures:
        print(f"{failures} cell(s) failed")
        return 1
    print("all cells pass")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "analytic": cmd_analytic,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except SystemExit2 as exc:
        parser.error(str(exc))  # exits 2
        return 2
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
