"""Analytic models: stability classification, fixed point, orphanage."""

import math

import numpy as np
import pytest

from tipsim import (
    RegimeParams,
    Stability,
    UnstableRegimeError,
    classify_stability,
    expiration_probability,
    predict,
    selection_probability,
    solve_l0,
    tip_pool_no_expiration,
)

# Frozen outputs of an independent 50-digit bisection oracle
# (see the repository notes; computed before this module was written).
L0_ORACLE = {
    (1.0, 2, 1.0, 100.0): 2.0,
    (0.6, 2, 1.0, 100.0): 5.9999999381654058,
    (0.8, 2, 1.0, 100.0): 2.6666666666666664,
    (0.5, 2, 1.0, 100.0): 29.536599054329338,
    (0.55, 2, 1.0, 20.0): 7.3385503686612532,
    (0.4, 2, 1.0, 100.0): 52.101348523294559,
    (0.3, 2, 1.0, 100.0): 67.100405678302651,
    (0.45, 2, 1.0, 100.0): 42.632777107795003,
}

GRID_MU = [round(0.05 * i, 2) for i in range(1, 21)]
GRID_K = list(range(1, 9))
GRID_DELTA = [10.0, 100.0, 1000.0]


def test_classify_stability_boundary_and_bound():
    s, d = classify_stability(RegimeParams(mu=1.0, k=1, delta=None))
    assert s is Stability.UNSTABLE and d == 0.0
    s, d = classify_stability(RegimeParams(mu=0.5, k=2, delta=None))
    assert s is Stability.UNSTABLE and d == 0.0
    s, d = classify_stability(RegimeParams(mu=0.75, k=4, delta=None))
    assert s is Stability.STABLE and d == -2.0
    s, d = classify_stability(RegimeParams(mu=0.3, k=2, delta=None))
    assert s is Stability.UNSTABLE and d == pytest.approx(0.4)


def test_no_expiration_pool_closed_form():
    assert tip_pool_no_expiration(RegimeParams(mu=1.0, k=2, delta=None)) == pytest.approx(200.0)
    assert tip_pool_no_expiration(RegimeParams(mu=0.75, k=4, delta=None)) == pytest.approx(150.0)
    with pytest.raises(UnstableRegimeError):
        tip_pool_no_expiration(RegimeParams(mu=0.5, k=2, delta=None))


def test_solve_l0_against_independent_oracle():
    for (mu, k, h, delta), expected in L0_ORACLE.items():
        got = solve_l0(RegimeParams(mu=mu, k=k, h=h, lam=100.0, delta=delta))
        assert got == pytest.approx(expected, rel=1e-9)


def test_solve_l0_limits():
    # delta -> infinity reduces to the no-expiration value
    p = RegimeParams(mu=1.0, k=2, h=1.0, lam=100.0, delta=1e6)
    assert solve_l0(p) == pytest.approx(2.0, rel=1e-6)
    # mu = 0: every block lives exactly h + delta as a tip
    assert solve_l0(RegimeParams(mu=0.0, k=2, h=1.0, delta=100.0)) == 101.0
    assert solve_l0(RegimeParams(mu=0.0, k=5, h=2.0, delta=30.0)) == 32.0


def test_fixed_point_residual_on_grid():
    for mu in GRID_MU:
        for k in GRID_K:
            for delta in GRID_DELTA:
                p = RegimeParams(mu=mu, k=k, h=1.0, delta=delta)
                l0 = solve_l0(p)
                mk = mu * k
                residual = abs(l0 * (mk - 1.0 + math.exp(-delta * mk / l0)) - mk * p.h)
                assert residual < 1e-9 * mk * p.h


def test_l0_monotone_in_mu_and_k():
    for delta in (10.0, 100.0):
        for k in GRID_K:
            vals = [solve_l0(RegimeParams(mu=mu, k=k, delta=delta)) for mu in GRID_MU]
            assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
        for mu in GRID_MU:
            vals = [solve_l0(RegimeParams(mu=mu, k=k, delta=delta)) for k in GRID_K]
            assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_l0_converges_to_no_expiration_for_stable_cells():
    for mu in GRID_MU:
        for k in GRID_K:
            if mu * k <= 1.0:
                continue
            p_inf = RegimeParams(mu=mu, k=k, delta=1e6)
            target = tip_pool_no_expiration(p_inf) / p_inf.lam
            assert abs(solve_l0(p_inf) - target) / target < 1e-6


def test_expiration_probability_and_bound():
    p = RegimeParams(mu=1.0, k=2, h=1.0, delta=100.0)
    prob, bound = expiration_probability(p)
    assert prob == pytest.approx(math.exp(-100.0), rel=1e-6)
    assert bound == pytest.approx(math.exp(-100.0), rel=1e-6)
    prob, bound = expiration_probability(RegimeParams(mu=0.0, k=2, delta=100.0))
    assert prob == 1.0 and bound is None
    prob, _ = expiration_probability(RegimeParams(mu=0.5, k=2, delta=100.0))
    assert prob == pytest.approx(0.0338563014029, rel=1e-8)  # oracle value


def test_bound_dominates_probability_for_stable_grid():
    for mu in GRID_MU:
        for k in GRID_K:
            if mu * k <= 1.0:
                continue
            for delta in GRID_DELTA:
                prob, bound = expiration_probability(RegimeParams(mu=mu, k=k, delta=delta))
                assert bound is not None and prob <= bound * (1 + 1e-12)


def test_expiration_probability_strictly_decreasing_in_delta():
    deltas = [5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0]
    for mu, k in [(0.4, 2), (0.55, 2), (0.8, 2), (0.5, 4)]:
        probs = [expiration_probability(RegimeParams(mu=mu, k=k, delta=d))[0] for d in deltas]
        assert all(a > b for a, b in zip(probs, probs[1:]))


def test_no_expiration_l0_variant_saturates_below_threshold():
    p, _ = expiration_probability(
        RegimeParams(mu=0.3, k=2, delta=100.0), use_no_expiration_l0=True
    )
    assert p == 1.0
    p, _ = expiration_probability(
        RegimeParams(mu=0.8, k=2, delta=100.0), use_no_expiration_l0=True
    )
    # no-expiration L0 = mu*k*h/(mu*k-1) = 8/3
    assert p == pytest.approx(math.exp(-100.0 * 1.6 / (8.0 / 3.0)), rel=1e-9)


def test_selection_probability_values_and_domain():
    assert selection_probability(1, 3) == 1.0
    assert selection_probability(10, 1) == pytest.approx(0.1)
    assert selection_probability(2, 2) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        selection_probability(0.5, 2)
    # monotone: decreasing in L, increasing in k
    assert selection_probability(5, 2) > selection_probability(50, 2)
    assert selection_probability(10, 4) > selection_probability(10, 2)


def test_predict_bundles_consistent_fields():
    pred = predict(RegimeParams(mu=0.6, k=2, lam=100.0, delta=100.0))
    assert pred.stability is Stability.STABLE
    assert pred.tip_pool_size == pytest.approx(pred.l0_per_lambda * 100.0)
    assert pred.expiration_probability <= pred.expiration_upper_bound
    pred = predict(RegimeParams(mu=0.4, k=2, delta=None))
    assert pred.stability is Stability.UNSTABLE
    assert pred.l0_per_lambda is None and pred.expiration_probability is None
    assert pred.drift_lower_bound == pytest.approx(0.2)


def test_params_validation():
    with pytest.raises(ValueError):
        RegimeParams(mu=-0.1, k=2)
    with pytest.raises(ValueError):
        RegimeParams(mu=0.5, k=0)
    with pytest.raises(ValueError):
        RegimeParams(mu=0.5, k=2, delta=-1.0)
    with pytest.raises(ValueError):
        solve_l0(RegimeParams(mu=0.5, k=2, delta=None))
