"""Robust probabilistic bisimilarity.

The greatest fixed point of ``Refine = Bisim . Prune . Filter`` starting
from bisimilarity. Filter never materialises couplings: with a coupling of
maximal support inside R, the successors of a pair (s, t) are exactly
``Post(s, t) & R``, so Filter reduces to backward reachability of the
diagonal in that graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lmc import LabelledMarkovChain
from .relations import (
    PairRelation,
    Partition,
    bisim,
    bisimilarity,
    partition_to_relation,
)

__all__ = [
    "RobustStats",
    "filter_relation",
    "prune",
    "prune_literal",
    "prune_partition",
    "refine",
    "robust_bisimilarity",
    "robust_partition",
]


@dataclass
class RobustStats:
    """Counters from a robust-bisimilarity run.

    ``filter_rounds[i]`` is the number of rounds the naive Filter loop would
    have needed in outer iteration ``i``.
    """

    iterations: int = 0
    filter_rounds: list[int] = field(default_factory=list)


def _pred_csr(chain: LabelledMarkovChain) -> tuple[np.ndarray, np.ndarray]:
    pred = chain.predecessors()
    ptr = np.zeros(chain.n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(p) for p in pred])
    idx = np.fromiter((s for p in pred for s in p), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx


def _adjacency(chain: LabelledMarkovChain) -> np.ndarray:
    adj = np.zeros((chain.n, chain.n), dtype=np.bool_)
    for s, dist in enumerate(chain.transitions):
        adj[s, list(dist)] = True
    return adj


def _filter(chain: LabelledMarkovChain, r: PairRelation, pred=None) -> tuple[PairRelation, int]:
    if _kernels.USE_NUMBA:
        ptr, idx = pred if pred is not None else _pred_csr(chain)
        q = np.zeros_like(r.bits)
        rounds = _kernels.filter_worklist(ptr, idx, r.comp, r.local, r.size, r.offset, r.bits, q)
        return PairRelation(r.comp, r.local, r.size, r.offset, q), int(rounds)
    qm, rounds = _kernels.filter_matrix(_adjacency(chain), r.to_matrix())
    # keep R's block layout so later steps can compare bit blocks directly
    bits = np.zeros_like(r.bits)
    s, t = np.nonzero(qm)
    c = r.comp[s]
    bits[r.offset[c] + r.local[s] * r.size[c] + r.local[t]] = True
    return PairRelation(r.comp, r.local, r.size, r.offset, bits), rounds


def _check_filter_input(chain: LabelledMarkovChain, r: PairRelation, sim: PairRelation | None) -> None:
    if r.n != chain.n:
        raise ValueError("relation size does not match the chain")
    if not r.is_reflexive():
        raise ValueError("relation must contain the diagonal")
    if not r.is_symmetric():
        raise ValueError("relation must be symmetric")
    if sim is None:
        sim = partition_to_relation(bisimilarity(chain))
    if not r.issubset(sim):
        raise ValueError("relation must be contained in bisimilarity")


def filter_relation(chain: LabelledMarkovChain, r: PairRelation, check: bool = True) -> PairRelation:
    """Pairs of ``r`` from which the diagonal is reachable through ``Post & r``.

    ``r`` must be reflexive, symmetric and contained in bisimilarity.
    """
    if check:
        _check_filter_input(chain, r, None)
    return _filter(chain, r)[0]


def prune_partition(q: PairRelation) -> Partition:
    """Group states with identical neighbourhoods in ``q``."""
    keys: list = [None] * q.n
    for c, members in enumerate(q.components()):
        _, inv = np.unique(q.block(c), axis=0, return_inverse=True)
        for s, g in zip(members.tolist(), np.ravel(inv).tolist()):
            keys[s] = (c, g)
    return Partition(_ids(keys))


def _ids(keys):
    seen: dict = {}
    return [seen.setdefault(k, len(seen)) for k in keys]


def _check_sym_refl(q: PairRelation) -> None:
    if not q.is_reflexive() or not q.is_symmetric():
        raise ValueError("relation must be symmetric and reflexive")


def prune(q: PairRelation) -> PairRelation:
    """Keep (s, t) iff s and t are related to exactly the same states.

    For symmetric reflexive ``q`` this is the largest subset whose pairs
    satisfy both closure conditions of the definition, and it is an
    equivalence relation.
    """
    _check_sym_refl(q)
    return partition_to_relation(prune_partition(q))


def prune_literal(q: PairRelation) -> PairRelation:
    """Line-by-line nested-loop version of Prune, kept as a reference."""
    qset = set(q.pairs())
    succ: dict[int, list[int]] = {}
    for s, t in qset:
        succ.setdefault(s, []).append(t)
    e = set(qset)
    for s, t in sorted(qset):
        for u in succ.get(t, ()):
            if (s, u) not in qset:
                e.discard((s, t))
                e.discard((t, u))
    return PairRelation.from_pairs(q.n, e)


def refine(chain: LabelledMarkovChain, r: PairRelation, check: bool = True) -> PairRelation:
    """``Bisim(Prune(Filter(r)))``."""
    if check:
        _check_filter_input(chain, r, None)
    q, _ = _filter(chain, r)
    return partition_to_relation(bisim(chain, prune_partition(q)))


def robust_partition(
    chain: LabelledMarkovChain,
    sim: Partition | None = None,
    stats: RobustStats | None = None,
) -> Partition:
    """Robust bisimilarity as a partition; ``sim`` is bisimilarity if already known."""
    part = sim if sim is not None else bisimilarity(chain)
    pred = _pred_csr(chain) if _kernels.USE_NUMBA else None
    while True:
        r = partition_to_relation(part)
        q, rounds = _filter(chain, r, pred)
        new = bisim(chain, prune_partition(q))
        if stats is not None:
            stats.iterations += 1
            stats.filter_rounds.append(rounds)
        # Refine only ever shrinks, so equal block counts mean equal partitions.
        if len(new) == len(part):
            return new
        part = new


def robust_bisimilarity(chain: LabelledMarkovChain, stats: RobustStats | None = None) -> PairRelation:
    """The greatest robust bisimulation of ``chain``."""
    return partition_to_relation(robust_partition(chain, stats=stats))
