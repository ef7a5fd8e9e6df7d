"""Compiled hot loops: instrumented runs and the two-process coupling.

Everything here mirrors the pure-Python path step for step -- same
xoshiro256** stream, same Fenwick descent, same draw order -- so a kernel
run and a reference run from one seed are bit-identical.  The tests rely on
that to validate these loops against the readable implementations.

Stop codes: 0 consensus, 1 cap exhausted, 2 requested phase reached.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

@njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True, nogil=True, inline="always")
def _next_u64(state):
    result = _rotl(state[1] * np.uint64(5), 7) * np.uint64(9)
    t = state[1] << np.uint64(17)
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = _rotl(state[3], 45)
    return result


@njit(cache=True, nogil=True, inline="always")
def _rand_below(state, bound):
    # unbiased rejection: accept x >= 2**64 mod bound
    b = np.uint64(bound)
    threshold = (np.uint64(0) - b) % b
    while True:
        x = _next_u64(state)
        if x >= threshold:
            return np.int64(x % b)


@njit(cache=True, nogil=True, inline="always")
def _rand_f64(state):
    return (_next_u64(state) >> np.uint64(11)) * 1.1102230246251565e-16  # 2**-53


@njit(cache=True, nogil=True)
def _fenwick_build(weights):
    size = weights.shape[0]
    tree = np.zeros(size + 1, dtype=np.int64)
    for i in range(size):
        j = i + 1
        while j <= size:
            tree[j] += weights[i]
            j += j & (-j)
    return tree


@njit(cache=True, nogil=True, inline="always")
def _fenwick_update(tree, index, delta):
    size = tree.shape[0] - 1
    j = index + 1
    while j <= size:
        tree[j] += delta
        j += j & (-j)


@njit(cache=True, nogil=True, inline="always")
def _fenwick_find(tree, r):
    # smallest 0-based index whose cumulative weight exceeds r
    size = tree.shape[0] - 1
    half = 1
    while half * 2 <= size:
        half *= 2
    idx = 0
    while half > 0:
        nxt = idx + half
        if nxt <= size and tree[nxt] <= r:
            idx = nxt
            r -= tree[nxt]
        half //= 2
    return idx


@njit(cache=True, nogil=True)
def run_usd(
    counts0,
    u0,
    cap,
    skip_mode,
    state,
    alpha,
    sig_margin,
    env_slack,
    audit,
    sample_every,
    stop_phase,
    trace_buf_len,
):
    """One instrumented run of the undecided-state chain.

    Phase hitting times, the undecided-count envelope, and trace samples are
    maintained on productive steps only (nothing they depend on changes in
    between).  ``sig_margin`` is alpha*sqrt(n)*log(n) in the configured base;
    ``env_slack`` is the 8*sqrt(n*ln n) term of the lower envelope.
    """
    k = counts0.shape[0]
    counts = counts0.copy()
    u = np.int64(u0)
    n = u
    r2 = np.int64(0)
    for i in range(k):
        n += counts[i]
        r2 += counts[i] * counts[i]
    nn = n * n

    # type sampler over [u, x_1 .. x_k] for exact mode
    type_weights = np.empty(k + 1, dtype=np.int64)
    type_weights[0] = u
    for i in range(k):
        type_weights[i + 1] = counts[i]
    tree = _fenwick_build(type_weights)

    # productive-event weights, adoption block then abandonment block
    pweights = np.empty(2 * k, dtype=np.int64)

    times = np.full(5, -1, dtype=np.int64)
    trace_t = np.empty(trace_buf_len, dtype=np.int64)
    trace_u = np.empty(trace_buf_len, dtype=np.int64)
    trace_xmax = np.empty(trace_buf_len, dtype=np.int64)
    trace_maxidx = np.empty(trace_buf_len, dtype=np.int64)
    trace_z = np.empty(trace_buf_len, dtype=np.float64)
    trace_add = np.empty(trace_buf_len, dtype=np.int64)
    trace_mult = np.empty(trace_buf_len, dtype=np.float64)
    trace_sig = np.empty(trace_buf_len, dtype=np.int64)
    n_trace = 0

    t = np.int64(0)
    productive_steps = np.int64(0)
    winner = np.int64(0)
    initial_max_idx = np.int64(0)
    t2_idx = np.int64(0)
    max_u = u
    min_u_post_t1 = np.int64(-1)
    upper_viol = np.int64(0)
    lower_viol = np.int64(0)
    stop_code = np.int64(1)  # assume cap unless something fires

    next_sample = np.int64(-1)
    if sample_every > 0:
        next_sample = sample_every

    # one O(k) scan: leader, runner-up, significant count
    def _scan(counts_):
        x_max = np.int64(-1)
        mi = np.int64(0)
        for i in range(k):
            if counts_[i] > x_max:
                x_max = counts_[i]
                mi = i + 1
        second = np.int64(0)
        for i in range(k):
            if i + 1 != mi and counts_[i] > second:
                second = counts_[i]
        cut = x_max - sig_margin
        sig = np.int64(0)
        for i in range(k):
            if counts_[i] > cut:
                sig += 1
        return x_max, mi, second, sig

    x_max, mi, second, sig = _scan(counts)
    initial_max_idx = mi

    def _record_trace(idx, tt, uu, xm, mixx, add, mult, sg):
        trace_t[idx] = tt
        trace_u[idx] = uu
        trace_xmax[idx] = xm
        trace_maxidx[idx] = mixx
        trace_z[idx] = n - 2.0 * uu - alpha * xm
        trace_add[idx] = add
        trace_mult[idx] = mult
        trace_sig[idx] = sg

    # --- bookkeeping shared by t=0 and every productive step ----------
    # (manually inlined below because closures cost in numba's typing)

    done = False
    # initial sample at t = 0
    if sample_every > 0 and n_trace < trace_buf_len:
        multb = np.inf if second == 0 else x_max / second
        _record_trace(n_trace, t, u, x_max, mi, x_max - second, multb, sig)
        n_trace += 1

    # initial phase/envelope evaluation
    while True:  # single-pass block, break-able
        if 2 * u >= n:
            upper_viol += 1
        if u > max_u:
            max_u = u
        end_vals = np.zeros(4, dtype=np.int64)
        end_vals[0] = 1 if 2 * u >= n - x_max else 0
        if x_max > 0:
            end_vals[1] = 1 if sig == 1 else 0
            end_vals[2] = 1 if 2 * second <= x_max else 0
            end_vals[3] = 1 if 3 * x_max >= 2 * n else 0
        for m in range(4):
            if times[m] >= 0:
                continue
            if end_vals[m] == 0:
                break
            times[m] = t
            if m == 1:
                t2_idx = mi
        # consensus records t5 regardless of the t1..t4 gate
        if x_max == n and times[4] < 0:
            times[4] = t
            winner = mi
        if times[0] >= 0:
            min_u_post_t1 = u
            if audit:
                if u < 0.5 * (n - x_max) - env_slack:
                    lower_viol += 1
        if winner != 0:
            stop_code = 0
            done = True
        elif stop_phase > 0 and times[stop_phase - 1] >= 0:
            stop_code = 2
            done = True
        break

    while not done and t < cap:
        if skip_mode:
            w_minus = u * (n - u)
            w_plus = (n - u) * (n - u) - r2
            w_prod = w_minus + w_plus
            if w_prod == 0:
                # all-undecided trap: nothing can ever change
                while next_sample > 0 and next_sample <= cap and n_trace < trace_buf_len:
                    multb = np.inf if second == 0 else x_max / second
                    _record_trace(n_trace, next_sample, u, x_max, mi,
                                  x_max - second, multb, sig)
                    n_trace += 1
                    next_sample += sample_every
                t = cap
                break
            p_prod = w_prod / nn
            urand = 1.0 - _rand_f64(state)
            if p_prod >= 1.0:
                skipped = np.int64(0)
            else:
                skipped = np.int64(math.log(urand) / math.log1p(-p_prod))
            t_next = t + skipped + 1
            if t_next > cap or t_next < 0:  # < 0 guards int64 overflow
                while next_sample > 0 and next_sample <= cap and n_trace < trace_buf_len:
                    multb = np.inf if second == 0 else x_max / second
                    _record_trace(n_trace, next_sample, u, x_max, mi,
                                  x_max - second, multb, sig)
                    n_trace += 1
                    next_sample += sample_every
                t = cap
                break
            # trace boundaries strictly inside the skip block
            while next_sample > 0 and next_sample < t_next and n_trace < trace_buf_len:
                multb = np.inf if second == 0 else x_max / second
                _record_trace(n_trace, next_sample, u, x_max, mi,
                              x_max - second, multb, sig)
                n_trace += 1
                next_sample += sample_every
            # draw the productive event from the exact conditional weights
            r = _rand_below(state, w_prod)
            acc = np.int64(0)
            opinion = np.int64(-1)
            delta_u = np.int64(0)
            for i in range(k):
                pweights[i] = u * counts[i]
            for i in range(k):
                pweights[k + i] = counts[i] * (n - u - counts[i])
            for e in range(2 * k):
                acc += pweights[e]
                if r < acc:
                    if e < k:
                        opinion = e + 1
                        delta_u = -1
                    else:
                        opinion = e - k + 1
                        delta_u = 1
                    break
            i0 = opinion - 1
            old_x = counts[i0]
            counts[i0] -= delta_u
            u += delta_u
            r2 += (counts[i0] * counts[i0]) - (old_x * old_x)
            _fenwick_update(tree, 0, delta_u)
            _fenwick_update(tree, opinion, -delta_u)
            t = t_next
            produced = True
        else:
            responder = _fenwick_find(tree, _rand_below(state, n))
            initiator = _fenwick_find(tree, _rand_below(state, n))
            produced = False
            if responder == 0:
                if initiator != 0:
                    i0 = initiator - 1
                    old_x = counts[i0]
                    counts[i0] += 1
                    u -= 1
                    r2 += counts[i0] * counts[i0] - old_x * old_x
                    _fenwick_update(tree, 0, -1)
                    _fenwick_update(tree, initiator, 1)
                    produced = True
            elif initiator != 0 and initiator != responder:
                i0 = responder - 1
                old_x = counts[i0]
                counts[i0] -= 1
                u += 1
                r2 += counts[i0] * counts[i0] - old_x * old_x
                _fenwick_update(tree, 0, 1)
                _fenwick_update(tree, responder, -1)
                produced = True
            t += 1

        if produced:
            productive_steps += 1
            x_max, mi, second, sig = _scan(counts)
            if 2 * u >= n:
                upper_viol += 1
            if u > max_u:
                max_u = u
            end1 = 1 if 2 * u >= n - x_max else 0
            for m in range(4):
                if times[m] >= 0:
                    continue
                ok = False
                if m == 0:
                    ok = end1 == 1
                elif x_max > 0:
                    if m == 1:
                        ok = sig == 1
                    elif m == 2:
                        ok = 2 * second <= x_max
                    else:
                        ok = 3 * x_max >= 2 * n
                if not ok:
                    break
                times[m] = t
                if m == 1:
                    t2_idx = mi
            if x_max == n and times[4] < 0:
                times[4] = t
                winner = mi
            if times[0] >= 0:
                if min_u_post_t1 < 0 or u < min_u_post_t1:
                    min_u_post_t1 = u
                if audit:
                    if u < 0.5 * (n - x_max) - env_slack:
                        lower_viol += 1

        # trace at (or past) the cadence boundary
        while next_sample > 0 and next_sample <= t and n_trace < trace_buf_len:
            multb = np.inf if second == 0 else x_max / second
            _record_trace(n_trace, next_sample, u, x_max, mi,
                          x_max - second, multb, sig)
            n_trace += 1
            next_sample += sample_every

        if winner != 0:
            stop_code = 0
            break
        if stop_phase > 0 and times[stop_phase - 1] >= 0:
            stop_code = 2
            break

    return (
        counts,
        u,
        t,
        stop_code,
        productive_steps,
        times,
        initial_max_idx,
        t2_idx,
        winner,
        max_u,
        min_u_post_t1,
        upper_viol,
        lower_viol,
        n_trace,
        trace_t,
        trace_u,
        trace_xmax,
        trace_maxidx,
        trace_z,
        trace_add,
        trace_mult,
        trace_sig,
    )


@njit(cache=True, nogil=True)
def sample_type_pairs(counts, u, state, draws):
    """Tally ``draws`` independent one-step type-pair samples from one state.

    Uses the same Fenwick descent and draw order as a single exact-mode
    step, so cell (a, b) counts interactions with responder type a and
    initiator type b (0 = undecided).  Feeds the chi-square comparison of
    simulated one-step frequencies against the enumerated law.
    """
    k = counts.shape[0]
    n = u
    type_weights = np.empty(k + 1, dtype=np.int64)
    type_weights[0] = u
    for i in range(k):
        type_weights[i + 1] = counts[i]
        n += counts[i]
    tree = _fenwick_build(type_weights)
    mat = np.zeros((k + 1, k + 1), dtype=np.int64)
    for _ in range(draws):
        a = _fenwick_find(tree, _rand_below(state, n))
        b = _fenwick_find(tree, _rand_below(state, n))
        mat[a, b] += 1
    return mat


@njit(cache=True, nogil=True, inline="always")
def _usd_transition(responder, initiator):
    if responder != 0 and initiator != 0 and responder != initiator:
        return 0
    if responder == 0 and initiator != 0:
        return initiator
    return responder


@njit(cache=True, nogil=True)
def _build_layout(counts, u, tw1, tu, seg_end, seg_v, seg_tv):
    """Canonical agent layout of the coupled pair, as segment boundaries.

    Returns the number of segments.  Segment s covers positions
    [seg_end[s-1], seg_end[s]) and holds agents of type seg_v[s] in the
    k-opinion process and seg_tv[s] in the 2-opinion process (0 = undecided).
    """
    k = counts.shape[0]
    x1 = counts[0]
    m = 0
    pos = np.int64(0)

    # leader block shared by both processes
    if tw1 > 0:
        pos += tw1
        seg_end[m] = pos
        seg_v[m] = 1
        seg_tv[m] = 1
        m += 1
    both_u = min(u, tu)
    if both_u > 0:
        pos += both_u
        seg_end[m] = pos
        seg_v[m] = 0
        seg_tv[m] = 0
        m += 1
    for j in range(1, k):
        if counts[j] > 0:
            pos += counts[j]
            seg_end[m] = pos
            seg_v[m] = j + 1
            seg_tv[m] = 2
            m += 1
    if tu >= u:
        if tu - u > 0:
            pos += tu - u
            seg_end[m] = pos
            seg_v[m] = 1
            seg_tv[m] = 0
            m += 1
        tail = x1 + u - tw1 - tu
        if tail > 0:
            pos += tail
            seg_end[m] = pos
            seg_v[m] = 1
            seg_tv[m] = 2
            m += 1
    else:
        if x1 - tw1 > 0:
            pos += x1 - tw1
            seg_end[m] = pos
            seg_v[m] = 1
            seg_tv[m] = 2
            m += 1
        if u - tu > 0:
            pos += u - tu
            seg_end[m] = pos
            seg_v[m] = 0
            seg_tv[m] = 2
            m += 1
    return m


@njit(cache=True, nogil=True, inline="always")
def _lookup(seg_end, seg_v, seg_tv, m, pos):
    for s in range(m):
        if pos < seg_end[s]:
            return seg_v[s], seg_tv[s]
    return np.int64(-1), np.int64(-1)  # unreachable for valid layouts


@njit(cache=True, nogil=True)
def run_coupled(counts0, u0, cap, state):
    """Identity-coupled run of the k-process and its 2-opinion projection.

    Both processes see the same uniformly random ordered position pair each
    step.  The majorization invariant x_1 >= x~_1 and x_1 + u >= x~_1 + u~
    is checked after every step; the first violating step is reported (and
    the run stops there, since the layout construction needs the invariant).

    Returns (held, first_violation, t_cons_k, t_cons_2, t, counts, u,
    tw1, tw2, tu).
    """
    k = counts0.shape[0]
    counts = counts0.copy()
    u = np.int64(u0)
    n = u
    for i in range(k):
        n += counts[i]
    tw1 = counts[0]
    tw2 = n - counts[0] - u
    tu = u

    seg_end = np.empty(k + 4, dtype=np.int64)
    seg_v = np.empty(k + 4, dtype=np.int64)
    seg_tv = np.empty(k + 4, dtype=np.int64)
    m = _build_layout(counts, u, tw1, tu, seg_end, seg_v, seg_tv)

    first_violation = np.int64(-1)
    t_cons_k = np.int64(-1)
    t_cons_2 = np.int64(-1)

    x_max = np.int64(0)
    for i in range(k):
        if counts[i] > x_max:
            x_max = counts[i]
    if x_max == n:
        t_cons_k = 0
    if tw1 == n or tw2 == n:
        t_cons_2 = 0

    t = np.int64(0)
    while t < cap and (t_cons_k < 0 or t_cons_2 < 0):
        t += 1
        i = _rand_below(state, n)
        j = _rand_below(state, n)
        vi, tvi = _lookup(seg_end, seg_v, seg_tv, m, i)
        vj, tvj = _lookup(seg_end, seg_v, seg_tv, m, j)
        new_vi = _usd_transition(vi, vj)
        new_tvi = _usd_transition(tvi, tvj)
        changed = False
        if new_vi != vi:
            changed = True
            if vi == 0:
                u -= 1
            else:
                counts[vi - 1] -= 1
            if new_vi == 0:
                u += 1
            else:
                counts[new_vi - 1] += 1
        if new_tvi != tvi:
            changed = True
            if tvi == 0:
                tu -= 1
            elif tvi == 1:
                tw1 -= 1
            else:
                tw2 -= 1
            if new_tvi == 0:
                tu += 1
            elif new_tvi == 1:
                tw1 += 1
            else:
                tw2 += 1
        if changed:
            if counts[0] < tw1 or counts[0] + u < tw1 + tu:
                first_violation = t
                break
            m = _build_layout(counts, u, tw1, tu, seg_end, seg_v, seg_tv)
            if t_cons_k < 0:
                x_max = np.int64(0)
                for a in range(k):
                    if counts[a] > x_max:
                        x_max = counts[a]
                if x_max == n:
                    t_cons_k = t
            if t_cons_2 < 0 and (tw1 == n or tw2 == n):
                t_cons_2 = t

    held = first_violation < 0
    return held, first_violation, t_cons_k, t_cons_2, t, counts, u, tw1, tw2, tu
