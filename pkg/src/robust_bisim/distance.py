"""Probabilistic bisimilarity distances.

Distances are computed by value iteration from below in binary64, each sweep
solving one small transportation problem per undetermined pair. Policies
(one coupling per pair) are extracted with exact rational masses and can be
evaluated exactly as reachability probabilities of the differently labelled
pairs in the product chain.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.linalg import spsolve

from . import _kernels
from .coupling import Coupling, diagonal_coupling, verify_coupling
from .lmc import LabelledMarkovChain
from .relations import PairRelation, Partition, bisimilarity, relation_to_partition

__all__ = [
    "ConvergenceError",
    "DistanceMatrix",
    "Policy",
    "PolicyValue",
    "min_transport",
    "iterate_sweeps",
    "delta",
    "extract_policy",
    "policy_value",
    "check_optimal",
    "distance_csv",
    "distance_matrix_text",
    "format_policy",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class DistanceMatrix:
    """Symmetric n x n distances with zero diagonal and 1 on differently labelled pairs.

    ``sweeps`` counts value-iteration sweeps; ``gap`` is the final difference
    between the returned upper bound and the value-iteration lower bound.
    """

    values: np.ndarray
    sweeps: int = 0
    gap: float = 0.0

    def __getitem__(self, pair) -> float:
        return float(self.values[pair])

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class Policy:
    """A coupling for every pair that is not differently labelled.

    Differently labelled pairs implicitly loop on themselves.
    """

    chain: LabelledMarkovChain
    couplings: dict[tuple[int, int], Coupling] = field(default_factory=dict)

    def __getitem__(self, pair) -> Coupling:
        s, t = pair
        if self.chain.labels[s] != self.chain.labels[t]:
            return Coupling({(s, t): Fraction(1)})
        return self.couplings[pair]


@dataclass
class PolicyValue:
    gamma: np.ndarray  # object array of Fractions

    def __getitem__(self, pair) -> Fraction:
        return self.gamma[pair]


def _as_partition(chain: LabelledMarkovChain, bisim) -> Partition:
    if bisim is None:
        return bisimilarity(chain)
    if isinstance(bisim, PairRelation):
        return relation_to_partition(bisim)
    return bisim


def _csr(chain: LabelledMarkovChain):
    ptr = np.zeros(chain.n + 1, dtype=np.int64)
    idx, prob = [], []
    for s, dist in enumerate(chain.transitions):
        for t, p in dist.items():
            idx.append(t)
            prob.append(float(p))
        ptr[s + 1] = len(idx)
    return ptr, np.asarray(idx, dtype=np.int64), np.asarray(prob, dtype=np.float64)


def _exact_flows(basic: np.ndarray, a: list[Fraction], b: list[Fraction]) -> dict[tuple[int, int], Fraction]:
    """Flows of a transportation basis (a spanning tree) under exact marginals.

    Peels leaves: a row or column with one remaining basic cell must route
    its whole residual through that cell.
    """
    m, k = basic.shape
    cells = {(int(i), int(j)) for i, j in zip(*np.nonzero(basic))}
    ra, rb = list(a), list(b)
    flows: dict[tuple[int, int], Fraction] = {}
    while cells:
        row_deg = [0] * m
        col_deg = [0] * k
        for i, j in cells:
            row_deg[i] += 1
            col_deg[j] += 1
        leaf = None
        for i, j in sorted(cells):
            if row_deg[i] == 1:
                leaf, x = (i, j), ra[i]
                break
            if col_deg[j] == 1:
                leaf, x = (i, j), rb[j]
                break
        if leaf is None:
            raise AssertionError("transport basis is not a tree")
        i, j = leaf
        flows[leaf] = x
        ra[i] -= x
        rb[j] -= x
        cells.discard(leaf)
    if any(x < 0 for x in flows.values()):
        raise AssertionError("transport basis is infeasible under exact marginals")
    return flows


def min_transport(cost, mu, nu) -> tuple[float, Coupling]:
    """Cheapest coupling of ``mu`` and ``nu`` for ``cost[u, v]``.

    Returns the optimal value and an optimal vertex coupling with exact
    masses. The solver starts from the corner-rule basis and pivots with
    Bland's rule, so the result is deterministic.
    """
    rows, cols = list(mu), list(nu)
    c = np.array([[float(cost[u, v]) for v in cols] for u in rows], dtype=np.float64).reshape(len(rows), len(cols))
    a = np.array([float(mu[u]) for u in rows])
    b = np.array([float(nu[v]) for v in cols])
    basic = np.zeros(c.shape, dtype=np.bool_)
    flow = np.zeros(c.shape)
    _kernels.transport_solve(c, a, b, basic, flow, False)
    exact = _exact_flows(basic, [mu[u] for u in rows], [nu[v] for v in cols])
    w = Coupling({(rows[i], cols[j]): x for (i, j), x in exact.items()})
    value = sum(float(x) * c[i, j] for (i, j), x in exact.items() if x)
    return value, w


class _Problem:
    """Shared state of one value-iteration run."""

    def __init__(self, chain: LabelledMarkovChain, part: Partition, threads: int = 1):
        self.chain = chain
        self.threads = max(1, int(threads))
        n = chain.n
        self.n = n
        self.labels = np.asarray(chain.labels)
        self.block = part.block_of
        self.ptr, self.idx, self.prob = _csr(chain)
        ps, pt = [], []
        for s in range(n):
            for t in range(s + 1, n):
                if self.labels[s] == self.labels[t] and self.block[s] != self.block[t]:
                    ps.append(s)
                    pt.append(t)
        self.ps = np.asarray(ps, dtype=np.int64)
        self.pt = np.asarray(pt, dtype=np.int64)
        deg = np.diff(self.ptr)
        sizes = deg[self.ps] * deg[self.pt]
        self.off = np.zeros(len(ps) + 1, dtype=np.int64)
        self.off[1:] = np.cumsum(sizes)
        self.basic = np.zeros(int(self.off[-1]), dtype=np.bool_)
        self.flow = np.zeros(int(self.off[-1]))
        self.pair_index = -np.ones((n, n), dtype=np.int64)
        self.pair_index[self.ps, self.pt] = np.arange(len(ps))
        self.pair_index[self.pt, self.ps] = np.arange(len(ps))
        self.d0 = (self.labels[:, None] != self.labels[None, :]).astype(np.float64)

    def _sweep_range(self, lo: int, hi: int, d, d_new, warm: bool) -> float:
        return _kernels.vi_sweep(
            self.ptr, self.idx, self.prob, self.ps[lo:hi], self.pt[lo:hi], self.off[lo : hi + 1],
            self.basic, self.flow, warm, d, d_new,
        )

    def sweep(self, d: np.ndarray, warm: bool) -> tuple[np.ndarray, float]:
        d_new = d.copy()
        k = len(self.ps)
        if self.threads == 1 or k < 2 * self.threads:
            return d_new, float(self._sweep_range(0, k, d, d_new, warm))
        # Jacobi sweep: chunks read d and write disjoint cells of d_new
        cuts = np.linspace(0, k, self.threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            changes = list(pool.map(
                lambda i: self._sweep_range(cuts[i], cuts[i + 1], d, d_new, warm), range(self.threads)
            ))
        return d_new, float(max(changes))

    def policy_upper(self) -> np.ndarray:
        """Reachability values of the policy held in the current bases (float)."""
        k = len(self.ps)
        rows, cols, vals = [], [], []
        rhs = np.zeros(k)
        for p in range(k):
            s, t = self.ps[p], self.pt[p]
            m = self.ptr[s + 1] - self.ptr[s]
            kk = self.ptr[t + 1] - self.ptr[t]
            fl = self.flow[self.off[p] : self.off[p + 1]].reshape(m, kk)
            for i, j in zip(*np.nonzero(fl > 0)):
                u = self.idx[self.ptr[s] + i]
                v = self.idx[self.ptr[t] + j]
                if self.labels[u] != self.labels[v]:
                    rhs[p] += fl[i, j]
                elif self.pair_index[u, v] >= 0:
                    rows.append(p)
                    cols.append(self.pair_index[u, v])
                    vals.append(fl[i, j])
        w = csr_matrix((vals, (rows, cols)), shape=(k, k))
        # pairs that cannot reach a differently labelled pair have value 0
        live = rhs > 0
        wt = w.T.tocsr()
        frontier = list(np.nonzero(live)[0])
        while frontier:
            q = frontier.pop()
            for p in wt.indices[wt.indptr[q] : wt.indptr[q + 1]]:
                if not live[p]:
                    live[p] = True
                    frontier.append(p)
        x = np.zeros(k)
        if live.any():
            sel = np.nonzero(live)[0]
            sub = w[sel][:, sel]
            x[sel] = spsolve((identity(len(sel), format="csc") - sub).tocsc(), rhs[sel])
        x = np.clip(x, 0.0, 1.0)
        u = self.d0.copy()
        u[self.ps, self.pt] = x
        u[self.pt, self.ps] = x
        return u


def iterate_sweeps(chain: LabelledMarkovChain, bisim=None) -> Iterator[np.ndarray]:
    """Yield the value-iteration iterates, starting with the bottom element."""
    prob = _Problem(chain, _as_partition(chain, bisim))
    d = prob.d0.copy()
    yield d
    warm = False
    while True:
        d, _ = prob.sweep(d, warm)
        warm = True
        yield d


def delta(
    chain: LabelledMarkovChain,
    bisim=None,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    check_every: int = 64,
    threads: int = 1,
) -> DistanceMatrix:
    """Bisimilarity distances of all state pairs.

    Bisimilar pairs are fixed to 0 and differently labelled pairs to 1; the
    rest start at 0 and are raised by value iteration. Whenever a sweep moves
    less than ``tol`` (and every ``check_every`` sweeps) the coupling policy
    of the last sweep is evaluated by a sparse linear solve, which yields an
    upper bound. The run stops when that upper bound is within ``tol`` of the
    iterate, or when it is a fixed point of the distance operator (which has
    a unique fixed point once bisimilar pairs are pinned to 0). The upper
    bound is returned. ``threads`` splits each sweep into that many chunks.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    prob = _Problem(chain, _as_partition(chain, bisim), threads)
    d = prob.d0.copy()
    if len(prob.ps) == 0:
        return DistanceMatrix(d, 0, 0.0)
    gap = np.inf
    for sweep in range(1, max_iter + 1):
        d, change = prob.sweep(d, sweep > 1)
        if change >= tol and sweep % check_every:
            continue
        upper = prob.policy_upper()
        gap = float((upper[prob.ps, prob.pt] - d[prob.ps, prob.pt]).max())
        if gap < tol:
            return DistanceMatrix(upper, sweep, gap)
        image, _ = prob.sweep(upper, True)
        if float(np.abs(image - upper).max()) <= tol * 1e-3:
            return DistanceMatrix(upper, sweep, gap)
    raise ConvergenceError(
        f"no convergence after {max_iter} sweeps (bound gap {gap:.3e})", gap
    )


def _differ(chain: LabelledMarkovChain, s: int, t: int) -> bool:
    return chain.labels[s] != chain.labels[t]


def extract_policy(chain: LabelledMarkovChain, d) -> Policy:
    """Optimal coupling under cost ``d`` for every pair that is not differently labelled."""
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d)
    couplings = {}
    for s in range(chain.n):
        for t in range(chain.n):
            if _differ(chain, s, t):
                continue
            if s == t:
                couplings[s, t] = diagonal_coupling(chain.transitions[s])
            else:
                _, couplings[s, t] = min_transport(values, chain.transitions[s], chain.transitions[t])
    return Policy(chain, couplings)


def _solve_exact(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gauss-Jordan elimination over the rationals."""
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        assert piv is not None, "singular reachability system"
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [x / pv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[i][n] for i in range(n)]


def policy_value(chain: LabelledMarkovChain, p: Policy) -> PolicyValue:
    """Exact probability, from every pair, of reaching a differently labelled pair under ``p``."""
    n = chain.n
    succ: dict[tuple[int, int], Coupling] = {}
    for s in range(n):
        for t in range(n):
            if _differ(chain, s, t):
                continue
            w = p.couplings.get((s, t))
            if w is None or not verify_coupling(w, chain.transitions[s], chain.transitions[t]):
                raise ValueError(f"policy has no valid coupling for pair ({s}, {t})")
            succ[s, t] = w
    pred: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for pair, w in succ.items():
        for q in w:
            pred.setdefault(q, []).append(pair)
    targets = [(s, t) for s in range(n) for t in range(n) if _differ(chain, s, t)]
    reach = set(targets)
    stack = list(targets)
    while stack:
        q = stack.pop()
        for r in pred.get(q, ()):
            if r not in reach:
                reach.add(r)
                stack.append(r)
    unknown = sorted(r for r in reach if r in succ)
    pos = {r: i for i, r in enumerate(unknown)}
    a = [[Fraction(0)] * len(unknown) for _ in unknown]
    rhs = [Fraction(0)] * len(unknown)
    for r in unknown:
        i = pos[r]
        a[i][i] += 1
        for q, x in succ[r].items():
            if q in pos:
                a[i][pos[q]] -= x
            elif _differ(chain, *q):
                rhs[i] += x
    sol = _solve_exact(a, rhs) if unknown else []
    gamma = np.empty((n, n), dtype=object)
    for s in range(n):
        for t in range(n):
            gamma[s, t] = Fraction(1) if _differ(chain, s, t) else Fraction(0)
    for r, x in zip(unknown, sol):
        gamma[r] = x
    return PolicyValue(gamma)


def check_optimal(chain: LabelledMarkovChain, p: Policy, d, tol: float = 1e-9) -> bool:
    """True iff one application of the policy's operator reproduces ``d`` within ``tol``."""
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d)
    for s in range(chain.n):
        for t in range(chain.n):
            if _differ(chain, s, t):
                image = 1.0
            else:
                image = p.couplings[s, t].expectation(values)
            if abs(image - values[s, t]) > tol:
                return False
    return True


def distance_csv(
    chain: LabelledMarkovChain,
    d: DistanceMatrix,
    pairs: list[tuple[int, int]] | None = None,
) -> str:
    """``s,t,value`` rows: the upper triangle, or exactly ``pairs`` in the given order."""
    if pairs is None:
        pairs = [(s, t) for s in range(chain.n) for t in range(s + 1, chain.n)]
    names = chain.state_names
    lines = ["s,t,value"]
    lines += [f"{names[s]},{names[t]},{d[s, t]:.9f}" for s, t in pairs]
    return "\n".join(lines) + "\n"


def distance_matrix_text(chain: LabelledMarkovChain, d: DistanceMatrix) -> str:
    """Dense matrix with a header row of state names; columns separated by spaces."""
    width = max(11, *(len(x) for x in chain.state_names))
    rows = [" ".join([" " * width] + [f"{x:>{width}}" for x in chain.state_names])]
    for s in range(chain.n):
        cells = [f"{d[s, t]:>{width}.9f}" for t in range(chain.n)]
        rows.append(" ".join([f"{chain.state_names[s]:>{width}}"] + cells))
    return "\n".join(rows) + "\n"


def format_policy(p: Policy, pairs: list[tuple[int, int]] | None = None) -> str:
    names = p.chain.state_names
    keys = pairs if pairs is not None else sorted(p.couplings)
    out = []
    for s, t in keys:
        out.append(f"pair ({names[s]},{names[t]})")
        body = p[s, t].format(names)
        out.extend("  " + line for line in body.splitlines())
    return "\n".join(out) + "\n"

