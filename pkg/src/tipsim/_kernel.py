"""Array-based simulation loop, identical under plain Python and numba.

All randomness is drawn up front (inter-arrival times, issuer coins, unit
selection draws), so the loop itself is deterministic bookkeeping and the
jitted and interpreted paths produce bit-identical results.

Block ids: 0 is genesis, arrival i creates block i+1.  Event queues are plain
ring-free FIFOs over preallocated arrays; promotion, referenced-removal, and
expiry times are each non-decreasing in schedule order because issuance is
time-ordered and h and delta are constant.  Each block is scheduled at most
once per queue.

Tie rule at equal timestamps: referenced removal, then expiry, then
promotion.
"""

from __future__ import annotations

import os

import numpy as np

INF = np.inf
CAUSE_NONE = 0
CAUSE_REFERENCED = 1
CAUSE_EXPIRED = 2
ISSUER_GENESIS = 0
ISSUER_HONEST = 1
ISSUER_ADVERSARY = 2


def _simulate(
    t_arr,          # f8[N]  arrival times, strictly increasing
    honest,         # b1[N]  issuer coin per arrival
    sel_u,          # f8[N,k] unit draws for honest selection
    h,              # f8     network delay
    delta,          # f8     expiration window, negative = disabled
    warmup_t,       # f8     measurement window start
    # outputs, preallocated for B = N + 1 blocks:
    issued_at,      # f8[B]
    visible_at,     # f8[B]
    issuer,         # u1[B]
    parents,        # i4[B,k], -1 for genesis
    referenced_at,  # f8[B], nan until first honest approval (issuance time)
    removed_at,     # f8[B], nan while in the pool
    cause,          # u1[B]
    pool_sample,    # i4[N]  |visible| at each arrival, pre-insertion
    hidden_sample,  # i4[N]  |hidden| at each arrival, pre-insertion
    false_sample,   # i4[N]  visible-and-approved count at each arrival
):
    """Fill the per-block arrays; return (theta_post, empty_pool_events).

    theta_post is the exact integral of |visible(t)| over [warmup_t, t_end]
    with t_end the last arrival time.
    """
    N = t_arr.shape[0]
    B = N + 1
    k = sel_u.shape[1]
    expiry_on = delta >= 0.0

    # visible set with O(1) uniform indexing (swap-remove)
    vis_ids = np.empty(B, dtype=np.int64)
    vis_pos = np.full(B, -1, dtype=np.int64)
    vis_n = 0
    false_n = 0

    # FIFOs: hidden promotions, referenced removals, expiries
    hid_ids = np.empty(B, dtype=np.int64)
    hid_head = 0
    hid_tail = 0
    rem_t = np.empty(B, dtype=np.float64)
    rem_id = np.empty(B, dtype=np.int64)
    rem_head = 0
    rem_tail = 0
    exp_t = np.empty(B, dtype=np.float64)
    exp_id = np.empty(B, dtype=np.int64)
    exp_head = 0
    exp_tail = 0

    # genesis: visible from t=0
    issued_at[0] = 0.0
    visible_at[0] = 0.0
    issuer[0] = ISSUER_GENESIS
    for j in range(k):
        parents[0, j] = -1
    vis_ids[0] = 0
    vis_pos[0] = 0
    vis_n = 1
    if expiry_on:
        exp_t[exp_tail] = delta
        exp_id[exp_tail] = 0
        exp_tail += 1
    genesis_deferred = False

    theta = 0.0
    t_prev = 0.0
    t_end = t_arr[N - 1]
    adv_last = 0
    empty_pool_events = 0

    for i in range(N):
        t = t_arr[i]
        bid = i + 1

        # apply every event with time <= t
        while True:
            rt = rem_t[rem_head] if rem_head < rem_tail else INF
            et = exp_t[exp_head] if exp_head < exp_tail else INF
            pt = visible_at[hid_ids[hid_head]] if hid_head < hid_tail else INF
            ev = min(rt, min(et, pt))
            if ev > t:
                break
            if ev > warmup_t:
                lo = t_prev if t_prev > warmup_t else warmup_t
                theta += vis_n * (ev - lo)
            t_prev = ev
            if rt == ev:
                b = rem_id[rem_head]
                rem_head += 1
                # scheduled only for in-pool blocks; promotion precedes removal
                p = vis_pos[b]
                vis_n -= 1
                last = vis_ids[vis_n]
                vis_ids[p] = last
                vis_pos[last] = p
                vis_pos[b] = -1
                false_n -= 1
                removed_at[b] = ev
                cause[b] = CAUSE_REFERENCED
            elif et == ev:
                b = exp_id[exp_head]
                exp_head += 1
                if vis_pos[b] >= 0 and np.isnan(referenced_at[b]):
                    if b == 0 and vis_n == 1:
                        genesis_deferred = True
                    else:
                        p = vis_pos[b]
                        vis_n -= 1
                        last = vis_ids[vis_n]
                        vis_ids[p] = last
                        vis_pos[last] = p
                        vis_pos[b] = -1
                        removed_at[b] = ev
                        cause[b] = CAUSE_EXPIRED
            else:
                b = hid_ids[hid_head]
                hid_head += 1
                vis_ids[vis_n] = b
                vis_pos[b] = vis_n
                vis_n += 1
                if not np.isnan(referenced_at[b]):
                    false_n += 1
                if expiry_on:
                    exp_t[exp_tail] = ev + delta
                    exp_id[exp_tail] = b
                    exp_tail += 1
                if genesis_deferred and vis_n >= 2 and vis_pos[0] >= 0:
                    if np.isnan(referenced_at[0]):
                        p = vis_pos[0]
                        vis_n -= 1
                        last = vis_ids[vis_n]
                        vis_ids[p] = last
                        vis_pos[last] = p
                        vis_pos[0] = -1
                        removed_at[0] = ev
                        cause[0] = CAUSE_EXPIRED
                    genesis_deferred = False

        pool_sample[i] = vis_n
        hidden_sample[i] = hid_tail - hid_head
        false_sample[i] = false_n

        if honest[i]:
            issuer[bid] = ISSUER_HONEST
            if vis_n == 0:
                empty_pool_events += 1
                for j in range(k):
                    p = bid - 1 - j
                    if p < 0:
                        p = 0
                    parents[bid, j] = p
            else:
                for j in range(k):
                    idx = int(sel_u[i, j] * vis_n)
                    if idx >= vis_n:
                        idx = vis_n - 1
                    parents[bid, j] = vis_ids[idx]
            for j in range(k):
                p = parents[bid, j]
                dup = False
                for jj in range(j):
                    if parents[bid, jj] == p:
                        dup = True
                        break
                if dup:
                    continue
                if np.isnan(referenced_at[p]) and np.isnan(removed_at[p]):
                    referenced_at[p] = t
                    rem_t[rem_tail] = t + h
                    rem_id[rem_tail] = p
                    rem_tail += 1
                    if vis_pos[p] >= 0:
                        false_n += 1
        else:
            issuer[bid] = ISSUER_ADVERSARY
            for j in range(k):
                parents[bid, j] = adv_last
            adv_last = bid

        issued_at[bid] = t
        visible_at[bid] = t + h
        hid_ids[hid_tail] = bid
        hid_tail += 1

    if t_end > warmup_t:
        lo = t_prev if t_prev > warmup_t else warmup_t
        theta += vis_n * (t_end - lo)
    return theta, empty_pool_events


_simulate_py = _simulate

if os.environ.get("TIPSIM_NO_NUMBA"):
    _simulate_jit = None
else:
    try:
        import numba

        _simulate_jit = numba.njit(cache=True)(_simulate)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _simulate_jit = None


def simulate_kernel(*args, jit: bool = True):
    if jit and _simulate_jit is not None:
        return _simulate_jit(*args)
    return _simulate_py(*args)
