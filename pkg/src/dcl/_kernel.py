"""Compiled event loop for plain vector problems.

Semantics mirror the interpreted loop in :mod:`dcl.engine` exactly: same
per-agent timing streams, same tie-breaking, same update formulas.  All
mutable state (iterates, mailboxes, snapshots, heap, payload slabs, draw
buffers) lives in arrays owned by the Python wrapper, so the kernel can
return for a buffer refill or growth and resume mid-run.

Supported oracles: least-squares / logistic / zero gradients and
identity / soft-threshold / distance-ball proximal maps, which covers every
benchmark family.  Anything else runs on the interpreted path.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .solvers import SolverState

# exit codes of _run_chunk
DONE_HORIZON = 0
DONE_MAX_UPDATES = 1
NEED_COMPUTE = 2
NEED_COMM = 3
REC_FULL = 4
SLAB_FULL = 5
HEAP_FULL = 6
DONE_STOPPED = 7

_GRAD_ZERO, _GRAD_LS, _GRAD_LOGISTIC = 0, 1, 2
_PROX_ID, _PROX_L1, _PROX_BALL = 0, 1, 2


@njit(cache=True, nogil=True)
def _heap_swap(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, a, b):
    hp_t[a], hp_t[b] = hp_t[b], hp_t[a]
    hp_seq[a], hp_seq[b] = hp_seq[b], hp_seq[a]
    hp_kind[a], hp_kind[b] = hp_kind[b], hp_kind[a]
    hp_agent[a], hp_agent[b] = hp_agent[b], hp_agent[a]
    hp_slab[a], hp_slab[b] = hp_slab[b], hp_slab[a]


@njit(cache=True, nogil=True)
def _before(t1, s1, t2, s2):
    return t1 < t2 or (t1 == t2 and s1 < s2)


@njit(cache=True, nogil=True)
def _heap_push(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, size, t, seq, kind, agent, slab):
    i = size
    hp_t[i] = t
    hp_seq[i] = seq
    hp_kind[i] = kind
    hp_agent[i] = agent
    hp_slab[i] = slab
    while i > 0:
        parent = (i - 1) >> 1
        if not _before(hp_t[i], hp_seq[i], hp_t[parent], hp_seq[parent]):
            break
        _heap_swap(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, parent, i)
        i = parent
    return size + 1


@njit(cache=True, nogil=True)
def _heap_pop(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, size):
    out_t = hp_t[0]
    out_seq = hp_seq[0]
    out_kind = hp_kind[0]
    out_agent = hp_agent[0]
    out_slab = hp_slab[0]
    size -= 1
    if size > 0:
        hp_t[0] = hp_t[size]
        hp_seq[0] = hp_seq[size]
        hp_kind[0] = hp_kind[size]
        hp_agent[0] = hp_agent[size]
        hp_slab[0] = hp_slab[size]
        i = 0
        while True:
            left = 2 * i + 1
            if left >= size:
                break
            smallest = left
            right = left + 1
            if right < size and _before(hp_t[right], hp_seq[right], hp_t[left], hp_seq[left]):
                smallest = right
            if not _before(hp_t[smallest], hp_seq[smallest], hp_t[i], hp_seq[i]):
                break
            _heap_swap(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, i, smallest)
            i = smallest
    return out_t, out_seq, out_kind, out_agent, out_slab, size


@njit(cache=True, nogil=True)
def _stable_expit(t):
    if t >= 0.0:
        return 1.0 / (1.0 + np.exp(-t))
    e = np.exp(t)
    return e / (1.0 + e)


@njit(cache=True, fastmath=True, nogil=True)
def _run_chunk(
    # iterates
    X, Y,
    # per-agent scalars
    alphas, etas, w_self, thetas, centers,
    # mixing / incidence wiring
    deg, nbr_ids, nbr_w,
    own_cnt, own_eid, own_vei, own_vej, own_slot,
    ne_cnt, ne_eid, ne_vei,
    msg_edge, slot_x, slot_y,
    # oracles
    grad_kind, prox_kind,
    ls_off, ls_rows, ls_A, ls_b,
    lg_off, lg_rows, lg_H, lg_d,
    # mailboxes and snapshots
    mb_x, mb_xs, mb_y, mb_ys, sn_x, sn_xs, sn_y, sn_ys,
    # heap
    hp_t, hp_seq, hp_kind, hp_agent, hp_slab,
    # payload slabs
    sl_x, sl_y, sl_stamp, sl_src, sl_edge, sl_free,
    # timing buffers (chunked)
    comp_buf, comp_ptr, comp_len, comm_buf, comm_ptr, comm_len,
    # recording
    rec_k, rec_t, rec_X, rec_Y, xstar_rows, rel_den, stop_below,
    # scratch
    u, grad, y_tilde,
    # runtime counters: [k, seq, heap_size, free_top, rec_count, max_delay]
    counters, counts,
    # limits
    horizon, max_updates, record_every, has_duals, timing_only,
):
    n, p = X.shape
    k = counters[0]
    seq = counters[1]
    heap_size = counters[2]
    free_top = counters[3]
    rec_count = counters[4]
    max_delay = counters[5]
    code = DONE_HORIZON
    ret_agent = -1
    t_last = 0.0

    while heap_size > 0:
        t, _sq, kind, agent, slab, heap_size = _heap_pop(
            hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size
        )
        if t > horizon:
            code = DONE_HORIZON
            break
        t_last = t

        if kind == 1:  # message arrival: keep only fresher values
            src = sl_src[slab]
            stamp = sl_stamp[slab]
            sx = slot_x[agent, src]
            if stamp > mb_xs[agent, sx]:
                for c in range(p):
                    mb_x[agent, sx, c] = sl_x[slab, c]
                mb_xs[agent, sx] = stamp
            e = sl_edge[slab]
            if e >= 0:
                sy = slot_y[agent, e]
                if stamp > mb_ys[agent, sy]:
                    for c in range(p):
                        mb_y[agent, sy, c] = sl_y[slab, c]
                    mb_ys[agent, sy] = stamp
            sl_free[free_top] = slab
            free_top += 1
            continue

        i = agent
        # need draws for deg[i] messages plus the next round before committing
        if comp_ptr[i] >= comp_len[i]:
            _heap_push(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size, t, _sq, kind, agent, slab)
            heap_size += 1
            code = NEED_COMPUTE
            ret_agent = i
            break
        if comm_ptr[i] + deg[i] > comm_len[i]:
            _heap_push(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size, t, _sq, kind, agent, slab)
            heap_size += 1
            code = NEED_COMM
            ret_agent = i
            break
        if free_top < deg[i]:
            _heap_push(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size, t, _sq, kind, agent, slab)
            heap_size += 1
            code = SLAB_FULL
            break
        if heap_size + deg[i] + 1 > hp_t.shape[0]:
            _heap_push(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size, t, _sq, kind, agent, slab)
            heap_size += 1
            code = HEAP_FULL
            break
        if rec_count >= rec_k.shape[0]:
            _heap_push(hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size, t, _sq, kind, agent, slab)
            heap_size += 1
            code = REC_FULL
            break

        if not timing_only:
            ai = alphas[i]
            # gradient of the smooth term at the agent's own (fresh) row
            if grad_kind[i] == _GRAD_LS:
                for c in range(p):
                    grad[c] = 0.0
                for r in range(ls_off[i], ls_off[i] + ls_rows[i]):
                    acc = -ls_b[r]
                    for c in range(p):
                        acc += ls_A[r, c] * X[i, c]
                    for c in range(p):
                        grad[c] += ls_A[r, c] * acc
            elif grad_kind[i] == _GRAD_LOGISTIC:
                for c in range(p):
                    grad[c] = 0.0
                mi = lg_rows[i]
                for r in range(lg_off[i], lg_off[i] + mi):
                    margin = 0.0
                    for c in range(p):
                        margin += lg_H[r, c] * X[i, c]
                    margin *= lg_d[r]
                    coef = -lg_d[r] * _stable_expit(-margin) / mi
                    for c in range(p):
                        grad[c] += coef * lg_H[r, c]
            else:
                for c in range(p):
                    grad[c] = 0.0

            for c in range(p):
                u[c] = w_self[i] * X[i, c] - ai * grad[c]
            for s in range(deg[i]):
                wv = nbr_w[i, s]
                for c in range(p):
                    u[c] += wv * sn_x[i, s, c]
            if has_duals:
                for o in range(own_cnt[i]):
                    e = own_eid[i, o]
                    v = own_vei[i, o]
                    for c in range(p):
                        u[c] -= v * Y[e, c]
                for s in range(ne_cnt[i]):
                    v = ne_vei[i, s]
                    for c in range(p):
                        u[c] -= v * sn_y[i, s, c]

            # proximal map of the nonsmooth term
            if prox_kind[i] == _PROX_L1:
                lam = ai * thetas[i]
                for c in range(p):
                    z = u[c]
                    if z > lam:
                        u[c] = z - lam
                    elif z < -lam:
                        u[c] = z + lam
                    else:
                        u[c] = 0.0
            elif prox_kind[i] == _PROX_BALL:
                nrm = 0.0
                for c in range(p):
                    diff = u[c] - centers[i, c]
                    nrm += diff * diff
                nrm = np.sqrt(nrm)
                if nrm <= ai:
                    for c in range(p):
                        u[c] = centers[i, c]
                else:
                    shrink = ai / nrm
                    for c in range(p):
                        u[c] -= shrink * (u[c] - centers[i, c])

            if has_duals:
                for o in range(own_cnt[i]):
                    e = own_eid[i, o]
                    vei = own_vei[i, o]
                    vej = own_vej[i, o]
                    s = own_slot[i, o]
                    for c in range(p):
                        y_tilde[o, c] = Y[e, c] + vei * X[i, c] + vej * sn_x[i, s, c]
            ei = etas[i]
            for c in range(p):
                X[i, c] += ei * (u[c] - X[i, c])
            if has_duals:
                for o in range(own_cnt[i]):
                    e = own_eid[i, o]
                    for c in range(p):
                        Y[e, c] += ei * (y_tilde[o, c] - Y[e, c])

        # staleness of everything read at this update
        for s in range(deg[i]):
            d = k - sn_xs[i, s]
            if d > max_delay:
                max_delay = d
        if has_duals:
            for s in range(ne_cnt[i]):
                d = k - sn_ys[i, s]
                if d > max_delay:
                    max_delay = d

        k += 1
        counts[i] += 1
        stamp = k

        for s in range(deg[i]):
            free_top -= 1
            slab = sl_free[free_top]
            sl_src[slab] = i
            sl_stamp[slab] = stamp
            if not timing_only:
                for c in range(p):
                    sl_x[slab, c] = X[i, c]
            e = msg_edge[i, s]
            sl_edge[slab] = e
            if e >= 0 and not timing_only:
                for c in range(p):
                    sl_y[slab, c] = Y[e, c]
            delay = comm_buf[i, comm_ptr[i]]
            comm_ptr[i] += 1
            heap_size = _heap_push(
                hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size,
                t + delay, seq, 1, nbr_ids[i, s], slab,
            )
            seq += 1

        for s in range(deg[i]):
            for c in range(p):
                sn_x[i, s, c] = mb_x[i, s, c]
            sn_xs[i, s] = mb_xs[i, s]
        for s in range(ne_cnt[i]):
            for c in range(p):
                sn_y[i, s, c] = mb_y[i, s, c]
            sn_ys[i, s] = mb_ys[i, s]

        dur = comp_buf[i, comp_ptr[i]]
        comp_ptr[i] += 1
        heap_size = _heap_push(
            hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size, t + dur, seq, 0, i, -1
        )
        seq += 1

        if k % record_every == 0:
            rec_k[rec_count] = k
            rec_t[rec_count] = t
            if not timing_only:
                for a in range(n):
                    for c in range(p):
                        rec_X[rec_count, a, c] = X[a, c]
                for e in range(Y.shape[0]):
                    for c in range(p):
                        rec_Y[rec_count, e, c] = Y[e, c]
            rec_count += 1
            if stop_below >= 0.0 and rel_den > 0.0 and not timing_only:
                frob = 0.0
                for a in range(n):
                    for c in range(p):
                        d = X[a, c] - xstar_rows[a, c]
                        frob += d * d
                if np.sqrt(frob) / rel_den < stop_below:
                    code = DONE_STOPPED
                    break

        if k >= max_updates:
            code = DONE_MAX_UPDATES
            break

    counters[0] = k
    counters[1] = seq
    counters[2] = heap_size
    counters[3] = free_top
    counters[4] = rec_count
    counters[5] = max_delay
    return code, ret_agent, t_last


def _pack_oracles(prob):
    n, p = len(prob.objectives), prob.p
    grad_kind = np.zeros(n, dtype=np.int8)
    prox_kind = np.zeros(n, dtype=np.int8)
    thetas = np.zeros(n)
    centers = np.zeros((n, p))
    ls_blocks, lg_blocks = [], []
    ls_off = np.zeros(n, dtype=np.int64)
    ls_rows = np.zeros(n, dtype=np.int64)
    lg_off = np.zeros(n, dtype=np.int64)
    lg_rows = np.zeros(n, dtype=np.int64)
    ls_total = lg_total = 0
    for i, o in enumerate(prob.objectives):
        if o.kind == "least_squares_l1":
            A, b, theta = o.data["A"], o.data["b"], o.data["theta"]
            grad_kind[i] = _GRAD_LS
            ls_off[i], ls_rows[i] = ls_total, A.shape[0]
            ls_total += A.shape[0]
            ls_blocks.append((A, b))
            prox_kind[i] = _PROX_L1 if theta > 0 else _PROX_ID
            thetas[i] = theta
        elif o.kind == "logistic_l1":
            H, d, theta = o.data["H"], o.data["d"], o.data["theta"]
            grad_kind[i] = _GRAD_LOGISTIC
            lg_off[i], lg_rows[i] = lg_total, H.shape[0]
            lg_total += H.shape[0]
            lg_blocks.append((H, d))
            prox_kind[i] = _PROX_L1 if theta > 0 else _PROX_ID
            thetas[i] = theta
        elif o.kind == "geometric_median":
            grad_kind[i] = _GRAD_ZERO
            prox_kind[i] = _PROX_BALL
            centers[i] = o.data["b"]
        else:
            raise ValueError(f"unsupported objective kind {o.kind!r}")
    ls_A = np.vstack([A for A, _ in ls_blocks]) if ls_blocks else np.zeros((0, p))
    ls_b = np.concatenate([b for _, b in ls_blocks]) if ls_blocks else np.zeros(0)
    lg_H = np.vstack([H for H, _ in lg_blocks]) if lg_blocks else np.zeros((0, p))
    lg_d = np.concatenate([d for _, d in lg_blocks]) if lg_blocks else np.zeros(0)
    return (
        grad_kind, prox_kind, thetas, centers,
        ls_off, ls_rows, np.ascontiguousarray(ls_A), ls_b,
        lg_off, lg_rows, np.ascontiguousarray(lg_H), lg_d,
    )


@njit(cache=True, fastmath=True, nogil=True)
def _grads_into(G, X, grad_kind, ls_off, ls_rows, ls_A, ls_b, lg_off, lg_rows, lg_H, lg_d):
    n, p = X.shape
    for i in range(n):
        for c in range(p):
            G[i, c] = 0.0
        if grad_kind[i] == _GRAD_LS:
            for r in range(ls_off[i], ls_off[i] + ls_rows[i]):
                acc = -ls_b[r]
                for c in range(p):
                    acc += ls_A[r, c] * X[i, c]
                for c in range(p):
                    G[i, c] += ls_A[r, c] * acc
        elif grad_kind[i] == _GRAD_LOGISTIC:
            mi = lg_rows[i]
            for r in range(lg_off[i], lg_off[i] + mi):
                margin = 0.0
                for c in range(p):
                    margin += lg_H[r, c] * X[i, c]
                margin *= lg_d[r]
                coef = -lg_d[r] * _stable_expit(-margin) / mi
                for c in range(p):
                    G[i, c] += coef * lg_H[r, c]


@njit(cache=True, fastmath=True, nogil=True)
def _run_sync(
    X, Y, W, V, Vt, alphas, thetas, centers,
    grad_kind, prox_kind, ls_off, ls_rows, ls_A, ls_b, lg_off, lg_rows, lg_H, lg_d,
    max_iters, tol, metric_alpha,
    Xref, Yref, rel_hist, mdist_hist, rel_den,
):
    """Synchronous primal-dual iteration with in-loop residual and distances.

    ``rel_hist`` and ``mdist_hist`` (length ``max_iters``) are filled when a
    reference ``Xref``/``Yref`` is supplied (``rel_den > 0``).  Returns
    ``(iterations, last_residual)``; the residual is the metric norm of the
    step the iteration just took.
    """
    n, p = X.shape
    m = Y.shape[0]
    G = np.zeros((n, p))
    res = np.inf
    track = rel_den > 0.0
    it = 0
    while it < max_iters:
        _grads_into(G, X, grad_kind, ls_off, ls_rows, ls_A, ls_b, lg_off, lg_rows, lg_H, lg_d)
        U = np.dot(W, X)
        if m > 0:
            U -= np.dot(Vt, Y)
        for i in range(n):
            ai = alphas[i]
            if prox_kind[i] == _PROX_L1:
                lam = ai * thetas[i]
                for c in range(p):
                    z = U[i, c] - ai * G[i, c]
                    if z > lam:
                        U[i, c] = z - lam
                    elif z < -lam:
                        U[i, c] = z + lam
                    else:
                        U[i, c] = 0.0
            elif prox_kind[i] == _PROX_BALL:
                nrm = 0.0
                for c in range(p):
                    z = U[i, c] - ai * G[i, c]
                    U[i, c] = z
                    diff = z - centers[i, c]
                    nrm += diff * diff
                nrm = np.sqrt(nrm)
                if nrm <= ai:
                    for c in range(p):
                        U[i, c] = centers[i, c]
                else:
                    shrink = ai / nrm
                    for c in range(p):
                        U[i, c] -= shrink * (U[i, c] - centers[i, c])
            else:
                for c in range(p):
                    U[i, c] = U[i, c] - ai * G[i, c]
        # U now holds X^{k+1}; dual step uses the old X
        DX = X - U
        if m > 0:
            DY = -np.dot(V, X)  # Y - Y^{k+1}
            cross = 0.0
            VDX = np.dot(V, DX)
            for e in range(m):
                for c in range(p):
                    cross += DY[e, c] * VDX[e, c]
            sq = 0.0
            for e in range(m):
                for c in range(p):
                    sq += DY[e, c] * DY[e, c]
            for i in range(n):
                for c in range(p):
                    sq += DX[i, c] * DX[i, c]
            sq = (sq + 2.0 * cross) / metric_alpha
            Y += np.dot(V, X)
        else:
            sq = 0.0
            for i in range(n):
                for c in range(p):
                    sq += DX[i, c] * DX[i, c]
            sq /= metric_alpha
        for i in range(n):
            for c in range(p):
                X[i, c] = U[i, c]
        res = np.sqrt(max(sq, 0.0))
        if track:
            frob = 0.0
            for i in range(n):
                for c in range(p):
                    d = X[i, c] - Xref[i, c]
                    frob += d * d
            rel_hist[it] = np.sqrt(frob) / rel_den
            msq = frob
            if m > 0:
                EX = X - Xref
                EY = Y - Yref
                VEX = np.dot(V, EX)
                for e in range(m):
                    for c in range(p):
                        msq += EY[e, c] * (EY[e, c] + 2.0 * VEX[e, c])
            mdist_hist[it] = np.sqrt(max(msq / metric_alpha, 0.0))
        it += 1
        if not np.isfinite(res) or res < tol:
            break
    return it, res


def run_sync_fast(
    prob, W, V, alphas, max_iters, tol, X0=None, Y0=None,
    Xref=None, Yref=None, metric_alpha=1.0,
):
    """Kernel-backed synchronous iteration; returns final state and histories."""
    n, p = len(prob.objectives), prob.p
    m = V.shape[0]
    (
        grad_kind, prox_kind, thetas, centers,
        ls_off, ls_rows, ls_A, ls_b, lg_off, lg_rows, lg_H, lg_d,
    ) = _pack_oracles(prob)
    X = np.zeros((n, p)) if X0 is None else np.array(X0, dtype=float)
    Y = np.zeros((m, p)) if Y0 is None else np.array(Y0, dtype=float)
    track = Xref is not None
    if track:
        rel_den = float(np.linalg.norm(X0 if X0 is not None else np.zeros((n, p)) - Xref))
        rel_hist = np.zeros(max_iters)
        mdist_hist = np.zeros(max_iters)
        Xr = np.asarray(Xref, dtype=float)
        Yr = np.asarray(Yref, dtype=float) if Yref is not None else np.zeros((m, p))
    else:
        rel_den = 0.0
        rel_hist = np.zeros(1)
        mdist_hist = np.zeros(1)
        Xr = np.zeros((n, p))
        Yr = np.zeros((m, p))
    iters, res = _run_sync(
        X, Y, np.ascontiguousarray(W), np.ascontiguousarray(V),
        np.ascontiguousarray(V.T), np.asarray(alphas, dtype=float), thetas, centers,
        grad_kind, prox_kind, ls_off, ls_rows, ls_A, ls_b, lg_off, lg_rows, lg_H, lg_d,
        max_iters, tol, float(metric_alpha),
        Xr, Yr, rel_hist, mdist_hist, rel_den,
    )
    out = SolverState(X=X, Y=Y, k=int(iters))
    if track:
        return out, float(res), rel_hist[:iters].copy(), mdist_hist[:iters].copy()
    return out, float(res), None, None


def simulate_fast(
    prob, net, W, V, step_cfg, async_cfg, X, Y, X0, x_star, compute_residual, timing_only,
    stop_below=None,
):
    """Kernel-backed twin of the interpreted event loop."""
    from .engine import (
        ActivationStats,
        DelayTrace,
        SimulationResult,
        TimingStreams,
        _build_samples,
        _residual_mode,
        _Wiring,
    )

    n, p = X.shape
    has_duals = async_cfg.algorithm == "primal-dual"
    m = Y.shape[0]
    wiring = _Wiring(net, W, V if has_duals else np.zeros((0, n)), has_duals)
    alphas = step_cfg.per_agent(n)
    etas = async_cfg.etas_vector(n)
    timing = TimingStreams(async_cfg, n)
    horizon = async_cfg.horizon_ms if async_cfg.horizon_ms is not None else np.inf
    max_updates = async_cfg.max_updates if async_cfg.max_updates is not None else np.iinfo(np.int64).max
    record_every = async_cfg.record_every

    maxdeg = max(1, max(len(v) for v in wiring.nbrs))
    maxown = max(1, max(len(v) for v in wiring.owned))
    maxne = max(1, max(len(v) for v in wiring.ne))

    deg = np.array([len(v) for v in wiring.nbrs], dtype=np.int64)
    nbr_ids = np.full((n, maxdeg), -1, dtype=np.int64)
    nbr_w = np.zeros((n, maxdeg))
    own_cnt = np.array([len(v) for v in wiring.owned], dtype=np.int64)
    own_eid = np.zeros((n, maxown), dtype=np.int64)
    own_vei = np.zeros((n, maxown))
    own_vej = np.zeros((n, maxown))
    own_slot = np.zeros((n, maxown), dtype=np.int64)
    ne_cnt = np.array([len(v) for v in wiring.ne], dtype=np.int64)
    ne_eid = np.zeros((n, maxne), dtype=np.int64)
    ne_vei = np.zeros((n, maxne))
    msg_edge = np.full((n, maxdeg), -1, dtype=np.int64)
    slot_x = np.full((n, n), -1, dtype=np.int64)
    slot_y = np.full((n, max(1, m)), -1, dtype=np.int64)
    for i in range(n):
        for s, j in enumerate(wiring.nbrs[i]):
            nbr_ids[i, s] = j
            nbr_w[i, s] = wiring.w_nbr[i][s]
            slot_x[j, i] = -1  # filled below from the receiver's viewpoint
        for o, (e, vei, vej, slot) in enumerate(wiring.owned[i]):
            own_eid[i, o] = e
            own_vei[i, o] = vei
            own_vej[i, o] = vej
            own_slot[i, o] = slot
        for s, (e, vei) in enumerate(wiring.ne[i]):
            ne_eid[i, s] = e
            ne_vei[i, s] = vei
            slot_y[i, e] = s
        for s, e in enumerate(wiring.msg_edge[i]):
            msg_edge[i, s] = -1 if e is None else e
    for i in range(n):
        for s, j in enumerate(wiring.nbrs[i]):
            slot_x[i, int(j)] = s

    (
        grad_kind, prox_kind, thetas, centers,
        ls_off, ls_rows, ls_A, ls_b, lg_off, lg_rows, lg_H, lg_d,
    ) = _pack_oracles(prob)

    mb_x = np.zeros((n, maxdeg, p))
    mb_xs = np.zeros((n, maxdeg), dtype=np.int64)
    mb_y = np.zeros((n, maxne, p))
    mb_ys = np.zeros((n, maxne), dtype=np.int64)
    for i in range(n):
        for s, j in enumerate(wiring.nbrs[i]):
            mb_x[i, s] = X[j]
        for s, (e, _v) in enumerate(wiring.ne[i]):
            mb_y[i, s] = Y[e]
    sn_x, sn_xs = mb_x.copy(), mb_xs.copy()
    sn_y, sn_ys = mb_y.copy(), mb_ys.copy()

    heap_cap = 64
    while heap_cap < 8 * n + 4 * int(deg.sum()) + 64:
        heap_cap *= 2
    hp_t = np.zeros(heap_cap)
    hp_seq = np.zeros(heap_cap, dtype=np.int64)
    hp_kind = np.zeros(heap_cap, dtype=np.int8)
    hp_agent = np.zeros(heap_cap, dtype=np.int64)
    hp_slab = np.zeros(heap_cap, dtype=np.int64)

    slab_cap = heap_cap
    sl_x = np.zeros((slab_cap, p))
    sl_y = np.zeros((slab_cap, p))
    sl_stamp = np.zeros(slab_cap, dtype=np.int64)
    sl_src = np.zeros(slab_cap, dtype=np.int64)
    sl_edge = np.full(slab_cap, -1, dtype=np.int64)
    sl_free = np.arange(slab_cap - 1, -1, -1, dtype=np.int64)

    chunk = 1 << 16
    comp_buf = np.zeros((n, chunk))
    comm_buf = np.zeros((n, chunk))
    comp_ptr = np.zeros(n, dtype=np.int64)
    comm_ptr = np.zeros(n, dtype=np.int64)
    comp_len = np.zeros(n, dtype=np.int64)
    comm_len = np.zeros(n, dtype=np.int64)
    for i in range(n):
        comp_buf[i] = timing.compute_batch(i, chunk)
        comm_buf[i] = timing.comm_batch(i, chunk)
        comp_len[i] = chunk
        comm_len[i] = chunk

    if np.isfinite(horizon):
        mu = timing.mu
        est = horizon * float((1.0 / mu).sum())
        cap_updates = int(est + 6.0 * np.sqrt(max(est, 1.0)) + 1024)
        if max_updates < np.iinfo(np.int64).max:
            cap_updates = min(cap_updates, int(max_updates))
    else:
        cap_updates = int(max_updates)
    rec_cap = min(cap_updates // record_every + 2, 4_000_000)
    rec_k = np.zeros(rec_cap, dtype=np.int64)
    rec_t = np.zeros(rec_cap)
    shape_X = (rec_cap, n, p) if not timing_only else (1, 1, 1)
    shape_Y = (rec_cap, m, p) if not timing_only else (1, 1, 1)
    rec_X = np.zeros(shape_X)
    rec_Y = np.zeros(shape_Y)

    if x_star is not None:
        xstar_rows = np.tile(np.asarray(x_star, dtype=float), (n, 1))
        rel_den = float(np.linalg.norm(X0 - xstar_rows))
    else:
        xstar_rows = np.zeros((n, p))
        rel_den = 0.0
    stop_val = -1.0 if stop_below is None else float(stop_below)

    counters = np.zeros(8, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    counters[3] = slab_cap  # free_top

    # initial round: one compute draw per agent, in agent order
    heap_size = 0
    for i in range(n):
        heap_size = _heap_push(
            hp_t, hp_seq, hp_kind, hp_agent, hp_slab, heap_size,
            comp_buf[i, 0], i, 0, i, -1,
        )
        comp_ptr[i] = 1
    counters[1] = n  # next seq
    counters[2] = heap_size

    end_t = 0.0
    while True:
        code, agent, chunk_t = _run_chunk(
            X, Y, alphas, etas, wiring.w_self, thetas, centers,
            deg, nbr_ids, nbr_w,
            own_cnt, own_eid, own_vei, own_vej, own_slot,
            ne_cnt, ne_eid, ne_vei, msg_edge, slot_x, slot_y,
            grad_kind, prox_kind, ls_off, ls_rows, ls_A, ls_b,
            lg_off, lg_rows, lg_H, lg_d,
            mb_x, mb_xs, mb_y, mb_ys, sn_x, sn_xs, sn_y, sn_ys,
            hp_t, hp_seq, hp_kind, hp_agent, hp_slab,
            sl_x, sl_y, sl_stamp, sl_src, sl_edge, sl_free,
            comp_buf, comp_ptr, comp_len, comm_buf, comm_ptr, comm_len,
            rec_k, rec_t, rec_X, rec_Y, xstar_rows, rel_den, stop_val,
            np.zeros(p), np.zeros(p), np.zeros((maxown, p)),
            counters, counts,
            float(horizon), max_updates, record_every,
            has_duals, timing_only,
        )
        end_t = max(end_t, chunk_t)
        if code in (DONE_HORIZON, DONE_MAX_UPDATES, DONE_STOPPED):
            break
        if code == NEED_COMPUTE:
            comp_buf[agent] = timing.compute_batch(agent, chunk)
            comp_ptr[agent] = 0
        elif code == NEED_COMM:
            comm_buf[agent] = timing.comm_batch(agent, chunk)
            comm_ptr[agent] = 0
        elif code == REC_FULL:
            rec_k = np.concatenate([rec_k, np.zeros_like(rec_k)])
            rec_t = np.concatenate([rec_t, np.zeros_like(rec_t)])
            if not timing_only:
                rec_X = np.concatenate([rec_X, np.zeros_like(rec_X)])
                rec_Y = np.concatenate([rec_Y, np.zeros_like(rec_Y)])
        elif code in (SLAB_FULL, HEAP_FULL):
            old = slab_cap
            slab_cap *= 2
            sl_x = np.concatenate([sl_x, np.zeros((old, p))])
            sl_y = np.concatenate([sl_y, np.zeros((old, p))])
            sl_stamp = np.concatenate([sl_stamp, np.zeros(old, dtype=np.int64)])
            sl_src = np.concatenate([sl_src, np.zeros(old, dtype=np.int64)])
            sl_edge = np.concatenate([sl_edge, np.full(old, -1, dtype=np.int64)])
            grown_free = np.zeros(slab_cap, dtype=np.int64)
            grown_free[: counters[3]] = sl_free[: counters[3]]
            grown_free[counters[3] : counters[3] + old] = np.arange(
                2 * old - 1, old - 1, -1, dtype=np.int64
            )
            sl_free = grown_free
            counters[3] += old
            hp_t = np.concatenate([hp_t, np.zeros(len(hp_t))])
            hp_seq = np.concatenate([hp_seq, np.zeros(len(hp_seq), dtype=np.int64)])
            hp_kind = np.concatenate([hp_kind, np.zeros(len(hp_kind), dtype=np.int8)])
            hp_agent = np.concatenate([hp_agent, np.zeros(len(hp_agent), dtype=np.int64)])
            hp_slab = np.concatenate([hp_slab, np.zeros(len(hp_slab), dtype=np.int64)])

    k = int(counters[0])
    rec_count = int(counters[4])
    raw = [
        (
            int(rec_k[r]),
            float(rec_t[r]),
            None if timing_only else rec_X[r].copy(),
            None if timing_only else rec_Y[r].copy(),
            None,
        )
        for r in range(rec_count)
    ]
    samples = _build_samples(
        raw, prob, net, W, V, step_cfg, x_star, X0,
        _residual_mode(compute_residual, has_duals, timing_only),
    )
    return SimulationResult(
        samples=samples,
        delays=DelayTrace(max_delay=int(counters[5])),
        activation=ActivationStats(counts=counts),
        state=SolverState(X=X, Y=Y, k=k),
        updates=k,
        end_time_ms=float(end_t),
    )
