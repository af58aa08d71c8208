"""Compiled inner loops shared by the environment, the network and the annealer.

All routines work on plain arrays so they can be called from numba code:

* placement: ``qv[vertex] -> qubit`` and ``vq[qubit] -> vertex``
* progress: ``cursor[qubit]`` indexes the qubit's slice of ``qpartner``
  (``qptr[q]:qptr[q + 1]``), which lists its partners in program order;
  ``qgate`` holds the matching interaction indices
* network parameters: one flat vector, per layer a row-major
  ``(out, in)`` weight block followed by the bias
"""

import numpy as np
from numba import njit

NORM_UNIT = 0
NORM_RAW = 1


@njit(cache=True)
def target_of(q, cursor, qptr, qpartner):
    i = qptr[q] + cursor[q]
    if i < qptr[q + 1]:
        return qpartner[i]
    return -1


@njit(cache=True)
def apply_swaps(qv, vq, edges, mask):
    for e in range(edges.shape[0]):
        if mask[e]:
            u = edges[e, 0]
            v = edges[e, 1]
            a = qv[u]
            b = qv[v]
            qv[u] = b
            qv[v] = a
            vq[b] = u
            vq[a] = v


@njit(cache=True)
def fire(qv, vq, cursor, qptr, qpartner, qgate, dist, cascade, out, n_out):
    """Execute every mutually-targeting adjacent pair.

    Pairs found in one sweep fire together; with ``cascade`` further sweeps
    run until nothing new fires. Fired interaction indices are appended to
    ``out`` from position ``n_out``; returns the new fill level.
    """
    n = vq.shape[0]
    buf = np.empty(n, dtype=np.int64)
    while True:
        k = 0
        for a in range(n):
            b = target_of(a, cursor, qptr, qpartner)
            if b > a and target_of(b, cursor, qptr, qpartner) == a and dist[vq[a], vq[b]] == 1:
                buf[k] = a
                k += 1
        if k == 0:
            break
        for i in range(k):
            a = buf[i]
            b = target_of(a, cursor, qptr, qpartner)
            out[n_out] = qgate[qptr[a] + cursor[a]]
            n_out += 1
            cursor[a] += 1
            cursor[b] += 1
        if not cascade:
            break
    return n_out


@njit(cache=True)
def encode(qv, vq, cursor, qptr, qpartner, norm_mode, out):
    n = qv.shape[0]
    for j in range(n):
        t = target_of(qv[j], cursor, qptr, qpartner)
        if norm_mode == NORM_UNIT:
            out[j] = 0.0 if t < 0 else (vq[t] + 1.0) / n
        else:
            out[j] = -1.0 if t < 0 else float(vq[t])


@njit(cache=True)
def forward(params, dims, x, work):
    """Scalar output of the ReLU MLP. ``work`` is a ``(2, max(dims))`` scratch."""
    nl = dims.shape[0] - 1
    cur = 0
    for j in range(dims[0]):
        work[0, j] = x[j]
    off = 0
    for layer in range(nl):
        nin = dims[layer]
        nout = dims[layer + 1]
        boff = off + nout * nin
        nxt = 1 - cur
        for i in range(nout):
            s = params[boff + i]
            row = off + i * nin
            for j in range(nin):
                s += params[row + j] * work[cur, j]
            if layer < nl - 1 and s < 0.0:
                s = 0.0
            work[nxt, i] = s
        off = boff + nout
        cur = nxt
    return work[cur, 0]


@njit(cache=True)
def forced_swaps(qv, vq, cursor, qptr, qpartner, dist, edges, incident, out_mask):
    """Mark in ``out_mask`` the forced swaps for mutually-targeting pairs at distance 2.

    Each such pair proposes its lowest-index edge that brings one member
    next to the other; proposals are then kept in ascending edge order,
    dropping any that share a vertex with one already kept.
    """
    n = vq.shape[0]
    m = edges.shape[0]
    proposed = np.zeros(m, dtype=np.bool_)
    for a in range(n):
        b = target_of(a, cursor, qptr, qpartner)
        if b <= a or target_of(b, cursor, qptr, qpartner) != a:
            continue
        va = vq[a]
        vb = vq[b]
        if dist[va, vb] != 2:
            continue
        best = m
        for side in range(2):
            src = va if side == 0 else vb
            dst = vb if side == 0 else va
            for k in range(incident.shape[1]):
                e = incident[src, k]
                if e < 0:
                    break
                w = edges[e, 0] if edges[e, 1] == src else edges[e, 1]
                if dist[w, dst] == 1 and e < best:
                    best = e
        if best < m:
            proposed[best] = True
    used = np.zeros(n, dtype=np.bool_)
    for e in range(m):
        out_mask[e] = False
        if proposed[e]:
            u = edges[e, 0]
            v = edges[e, 1]
            if not used[u] and not used[v]:
                used[u] = True
                used[v] = True
                out_mask[e] = True


@njit(cache=True)
def remaining_gates(cursor, qptr):
    total = 0
    for q in range(cursor.shape[0]):
        total += qptr[q + 1] - qptr[q] - cursor[q]
    return total // 2


@njit(cache=True)
def clip_value(v, upper):
    return min(max(v, 0.0), upper)


@njit(cache=True)
def evaluate_layer(qv, vq, cursor, qptr, qpartner, qgate, dist, edges, mask,
                   params, dims, norm_mode, cascade, gamma, reward, bound, remaining,
                   s_qv, s_vq, s_cur, x, work, fired):
    """Reward of applying ``mask`` plus the discounted network value of the result.

    Finished states are worth nothing beyond their reward. With ``bound`` the
    value is clipped to ``[0, reward * gates left]``. Works on scratch copies.
    """
    s_qv[:] = qv
    s_vq[:] = vq
    s_cur[:] = cursor
    apply_swaps(s_qv, s_vq, edges, mask)
    k = fire(s_qv, s_vq, s_cur, qptr, qpartner, qgate, dist, cascade, fired, 0)
    if k == remaining:
        return reward * k
    encode(s_qv, s_vq, s_cur, qptr, qpartner, norm_mode, x)
    v = forward(params, dims, x, work)
    if bound:
        v = clip_value(v, reward * (remaining - k))
    return reward * k + gamma * v


@njit(cache=True)
def anneal(qv, vq, cursor, qptr, qpartner, qgate, dist, edges, forced,
           params, dims, norm_mode, cascade, gamma, reward, bound, t0, cooling, iterations, restarts, seed):
    """Simulated annealing over matchings that contain every ``forced`` edge.

    The objective is ``evaluate_layer``: immediate reward plus ``gamma``
    times the (optionally bounded) network value of the resulting state.

    The empty matching is never proposed. Returns ``(best_mask, best_value,
    initial_value)`` where ``initial_value`` is the objective of the first
    restart's starting candidate.
    """
    np.random.seed(seed)
    n = vq.shape[0]
    m = edges.shape[0]
    s_qv = np.empty_like(qv)
    s_vq = np.empty_like(vq)
    s_cur = np.empty_like(cursor)
    x = np.empty(n, dtype=np.float64)
    work = np.empty((2, dims.max()), dtype=np.float64)
    fired = np.empty(max(1, qpartner.shape[0]), dtype=np.int64)
    remaining = remaining_gates(cursor, qptr)

    owner = np.full(n, -1, dtype=np.int64)
    n_forced = 0
    for e in range(m):
        if forced[e]:
            owner[edges[e, 0]] = e
            owner[edges[e, 1]] = e
            n_forced += 1
    eligible = np.empty(m, dtype=np.int64)
    n_elig = 0
    for e in range(m):
        if not forced[e] and owner[edges[e, 0]] < 0 and owner[edges[e, 1]] < 0:
            eligible[n_elig] = e
            n_elig += 1

    best = forced.copy()
    if n_elig == 0:
        val = evaluate_layer(qv, vq, cursor, qptr, qpartner, qgate, dist, edges, best,
                             params, dims, norm_mode, cascade, gamma, reward, bound, remaining,
                             s_qv, s_vq, s_cur, x, work, fired)
        return best, val, val

    best_val = -np.inf
    initial_val = 0.0
    cur = np.empty(m, dtype=np.bool_)
    cur_owner = np.empty(n, dtype=np.int64)
    prev = np.empty(m, dtype=np.bool_)
    prev_owner = np.empty(n, dtype=np.int64)
    # values of single-edge moves from the current matching; cleared on accept
    nb_val = np.empty(m, dtype=np.float64)
    nb_ok = np.zeros(m, dtype=np.bool_)
    for run in range(restarts + 1):
        nb_ok[:] = False
        cur[:] = forced
        cur_owner[:] = owner
        size = n_forced
        order = np.random.permutation(n_elig)
        for k in range(n_elig):
            e = eligible[order[k]]
            u = edges[e, 0]
            v = edges[e, 1]
            if cur_owner[u] < 0 and cur_owner[v] < 0 and np.random.random() < 0.5:
                cur[e] = True
                cur_owner[u] = e
                cur_owner[v] = e
                size += 1
        if size == 0:
            e = eligible[np.random.randint(n_elig)]
            cur[e] = True
            cur_owner[edges[e, 0]] = e
            cur_owner[edges[e, 1]] = e
            size = 1
        cur_val = evaluate_layer(qv, vq, cursor, qptr, qpartner, qgate, dist, edges, cur,
                                 params, dims, norm_mode, cascade, gamma, reward, bound, remaining,
                                 s_qv, s_vq, s_cur, x, work, fired)
        if run == 0:
            initial_val = cur_val
        if cur_val > best_val:
            best_val = cur_val
            best[:] = cur
        temp = t0
        for it in range(iterations):
            e = eligible[np.random.randint(n_elig)]
            u = edges[e, 0]
            v = edges[e, 1]
            prev[:] = cur
            prev_owner[:] = cur_owner
            prev_size = size
            if cur[e]:
                if size == 1:
                    temp *= cooling
                    continue
                cur[e] = False
                cur_owner[u] = -1
                cur_owner[v] = -1
                size -= 1
            else:
                for w in (u, v):
                    f = cur_owner[w]
                    if f >= 0:
                        cur[f] = False
                        cur_owner[edges[f, 0]] = -1
                        cur_owner[edges[f, 1]] = -1
                        size -= 1
                cur[e] = True
                cur_owner[u] = e
                cur_owner[v] = e
                size += 1
            if nb_ok[e]:
                val = nb_val[e]
            else:
                val = evaluate_layer(qv, vq, cursor, qptr, qpartner, qgate, dist, edges, cur,
                                     params, dims, norm_mode, cascade, gamma, reward, bound, remaining,
                                     s_qv, s_vq, s_cur, x, work, fired)
                nb_val[e] = val
                nb_ok[e] = True
            delta = val - cur_val
            if delta >= 0.0 or np.random.random() < np.exp(delta / temp):
                nb_ok[:] = False
                cur_val = val
                if val > best_val:
                    best_val = val
                    best[:] = cur
            else:
                cur[:] = prev
                cur_owner[:] = prev_owner
                size = prev_size
            temp *= cooling
    return best, best_val, initial_val


@njit(cache=True)
def batch_forward(params, dims, xs):
    out = np.empty(xs.shape[0], dtype=np.float64)
    work = np.empty((2, dims.max()), dtype=np.float64)
    for i in range(xs.shape[0]):
        out[i] = forward(params, dims, xs[i], work)
    return out
