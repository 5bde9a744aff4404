"""Numeric inner loops.

Every kernel is written once as plain Python over numpy arrays. When numba is
importable and ``ROBUST_BISIM_NUMBA`` is not ``0``, the exported names are the
``@njit`` compiled versions; otherwise they are the Python originals. The
``*_py`` names always refer to the uncompiled functions (used by the
benchmark and by tests that compare both paths).

``filter_matrix`` is the vectorised numpy route for the pair-graph search and
is what :mod:`robust_bisim.robust` uses when compilation is disabled.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised through the env flag
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

USE_NUMBA = _njit is not None and os.environ.get("ROBUST_BISIM_NUMBA", "1") != "0"

# Reduced costs above -EPS_REDUCED count as non-improving.
EPS_REDUCED = 1e-14


def _maybe_jit(fn):
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


def _nwc_py(a, b, basic, flow):
    """Corner-rule starting basis with exactly m + k - 1 basic cells."""
    m, k = basic.shape
    for i in range(m):
        for j in range(k):
            basic[i, j] = False
            flow[i, j] = 0.0
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    while True:
        x = min(ra[i], rb[j])
        if x < 0.0:
            x = 0.0
        basic[i, j] = True
        flow[i, j] = x
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == k - 1:
            break
        if i == m - 1:
            j += 1
        elif j == k - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1


def _transport_solve_py(cost, a, b, basic, flow, warm):
    """Primal transportation simplex with Bland's rule.

    ``basic``/``flow`` (m x k) hold the basis and are updated in place; with
    ``warm`` they must already describe a feasible basis for ``a``/``b``.
    Entering cell: first cell in row-major order with negative reduced cost.
    Leaving cell: smallest row-major index among the minimum-flow cells of the
    cycle. Returns the optimal cost.
    """
    m, k = cost.shape
    if not warm:
        _nwc(a, b, basic, flow)
    nodes = m + k
    u = np.zeros(m)
    v = np.zeros(k)
    u_set = np.zeros(m, dtype=np.bool_)
    v_set = np.zeros(k, dtype=np.bool_)
    parent = np.empty(nodes, dtype=np.int64)
    queue = np.empty(nodes, dtype=np.int64)
    path_i = np.empty(nodes, dtype=np.int64)
    path_j = np.empty(nodes, dtype=np.int64)
    max_pivots = 100 + 20 * m * k * nodes
    for _ in range(max_pivots):
        # duals: u[i] + v[j] = cost[i, j] on basic cells, u[0] = 0
        u_set[:] = False
        v_set[:] = False
        u[0] = 0.0
        u_set[0] = True
        done = 1
        while done < nodes:
            before = done
            for i in range(m):
                for j in range(k):
                    if basic[i, j]:
                        if u_set[i] and not v_set[j]:
                            v[j] = cost[i, j] - u[i]
                            v_set[j] = True
                            done += 1
                        elif v_set[j] and not u_set[i]:
                            u[i] = cost[i, j] - v[j]
                            u_set[i] = True
                            done += 1
            if done == before:
                break
        ei = -1
        ej = -1
        for i in range(m):
            for j in range(k):
                if not basic[i, j] and cost[i, j] - u[i] - v[j] < -EPS_REDUCED:
                    ei = i
                    ej = j
                    break
            if ei >= 0:
                break
        if ei < 0:
            break
        # tree path from row node ei to column node m + ej
        for x in range(nodes):
            parent[x] = -2
        parent[ei] = -1
        queue[0] = ei
        head = 0
        tail = 1
        target = m + ej
        while head < tail and parent[target] == -2:
            x = queue[head]
            head += 1
            if x < m:
                for j in range(k):
                    if basic[x, j] and parent[m + j] == -2:
                        parent[m + j] = x
                        queue[tail] = m + j
                        tail += 1
            else:
                j = x - m
                for i in range(m):
                    if basic[i, j] and parent[i] == -2:
                        parent[i] = x
                        queue[tail] = i
                        tail += 1
        length = 0
        x = target
        while parent[x] != -1:
            p = parent[x]
            if x >= m:
                path_i[length] = p
                path_j[length] = x - m
            else:
                path_i[length] = x
                path_j[length] = p - m
            length += 1
            x = p
        # cells at even positions lose mass, odd positions gain it
        theta = np.inf
        leave = -1
        for c in range(0, length, 2):
            f = flow[path_i[c], path_j[c]]
            key = path_i[c] * k + path_j[c]
            if f < theta or (f == theta and key < path_i[leave] * k + path_j[leave]):
                theta = f
                leave = c
        if theta < 0.0:
            theta = 0.0
        for c in range(length):
            if c % 2 == 0:
                f = flow[path_i[c], path_j[c]] - theta
                flow[path_i[c], path_j[c]] = f if f > 0.0 else 0.0
            else:
                flow[path_i[c], path_j[c]] += theta
        basic[path_i[leave], path_j[leave]] = False
        flow[path_i[leave], path_j[leave]] = 0.0
        basic[ei, ej] = True
        flow[ei, ej] = theta
    total = 0.0
    for i in range(m):
        for j in range(k):
            if basic[i, j]:
                total += flow[i, j] * cost[i, j]
    return total


def _vi_sweep_py(ptr, idx, prob, ps, pt, off, basic, flow, warm, d_old, d_new):
    """One Jacobi sweep of the distance operator over the listed pairs.

    Pair ``p`` = (``ps[p]``, ``pt[p]``) keeps its transport basis in
    ``basic``/``flow`` at ``off[p]``. Writes both ``(s, t)`` and ``(t, s)`` of
    ``d_new`` and returns the largest absolute change.
    """
    change = 0.0
    for p in range(ps.shape[0]):
        s = ps[p]
        t = pt[p]
        a = prob[ptr[s] : ptr[s + 1]]
        b = prob[ptr[t] : ptr[t + 1]]
        m = a.shape[0]
        k = b.shape[0]
        cost = np.empty((m, k))
        for i in range(m):
            for j in range(k):
                cost[i, j] = d_old[idx[ptr[s] + i], idx[ptr[t] + j]]
        bas = basic[off[p] : off[p] + m * k].reshape((m, k))
        fl = flow[off[p] : off[p] + m * k].reshape((m, k))
        val = _transport_solve(cost, a, b, bas, fl, warm)
        d_new[s, t] = val
        d_new[t, s] = val
        diff = abs(val - d_old[s, t])
        if diff > change:
            change = diff
    return change


def _filter_worklist_py(pred_ptr, pred_idx, comp, local, size, offset, rbits, qbits):
    """Backward search from the diagonal over the product graph restricted to R.

    ``rbits``/``qbits`` use the block layout of :class:`PairRelation`; ``qbits``
    must start all False and receives the result. Only one orientation of each
    pair is queued; its mirror is marked alongside (R is symmetric). Returns
    the number of breadth-first layers plus one, i.e. the number of rounds the
    naive fixed-point loop would run.
    """
    n = comp.shape[0]
    cap = rbits.shape[0] + n
    qs = np.empty(cap, dtype=np.int64)
    qt = np.empty(cap, dtype=np.int64)
    depth = np.empty(cap, dtype=np.int64)
    tail = 0
    for s in range(n):
        c = comp[s]
        qbits[offset[c] + local[s] * size[c] + local[s]] = True
        qs[tail] = s
        qt[tail] = s
        depth[tail] = 0
        tail += 1
    head = 0
    deepest = 0
    while head < tail:
        x = qs[head]
        y = qt[head]
        dx = depth[head]
        head += 1
        for ia in range(pred_ptr[x], pred_ptr[x + 1]):
            s = pred_idx[ia]
            c = comp[s]
            for ib in range(pred_ptr[y], pred_ptr[y + 1]):
                t = pred_idx[ib]
                if comp[t] != c:
                    continue
                i = offset[c] + local[s] * size[c] + local[t]
                if rbits[i] and not qbits[i]:
                    qbits[i] = True
                    qbits[offset[c] + local[t] * size[c] + local[s]] = True
                    qs[tail] = s
                    qt[tail] = t
                    depth[tail] = dx + 1
                    if dx + 1 > deepest:
                        deepest = dx + 1
                    tail += 1
    return deepest + 1


def filter_matrix(adj, rmat):
    """Vectorised fixed point ``Q <- Q | (R & Pre(Q))`` on dense boolean matrices.

    ``Pre(Q)`` is nonzero exactly where ``adj @ Q @ adj.T`` is. Returns
    ``(Q, rounds)``.
    """
    a = adj.astype(np.float32)
    q = np.eye(adj.shape[0], dtype=np.bool_)
    rounds = 0
    while True:
        rounds += 1
        pre = (a @ q.astype(np.float32) @ a.T) > 0
        new = q | (rmat & pre)
        if np.array_equal(new, q):
            return q, rounds
        q = new


_nwc = _maybe_jit(_nwc_py)
_transport_solve = _maybe_jit(_transport_solve_py)
transport_solve = _transport_solve
vi_sweep = _maybe_jit(_vi_sweep_py)
filter_worklist = _maybe_jit(_filter_worklist_py)

transport_solve_py = _transport_solve_py
vi_sweep_py = _vi_sweep_py
filter_worklist_py = _filter_worklist_py
