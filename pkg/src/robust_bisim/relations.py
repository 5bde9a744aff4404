"""Partitions, pair relations and the largest-bisimulation refinement."""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .lmc import LabelledMarkovChain

__all__ = [
    "Partition",
    "PairRelation",
    "label_partition",
    "bisim",
    "bisimilarity",
    "partition_to_relation",
    "relation_to_partition",
    "quotient_chain",
    "format_partition",
]


def _canonical_ids(keys: Sequence) -> np.ndarray:
    """Renumber arbitrary hashable keys by first occurrence in state order."""
    seen: dict = {}
    out = np.empty(len(keys), dtype=np.int64)
    for s, k in enumerate(keys):
        out[s] = seen.setdefault(k, len(seen))
    return out


class Partition:
    """A partition of ``0..n-1`` with block ids ordered by their smallest member."""

    __slots__ = ("block_of", "blocks")

    def __init__(self, block_of: Iterable[int]):
        arr = _canonical_ids(list(np.asarray(list(block_of), dtype=np.int64)))
        arr.setflags(write=False)
        self.block_of = arr
        members: list[list[int]] = [[] for _ in range(int(arr.max()) + 1 if len(arr) else 0)]
        for s, b in enumerate(arr):
            members[b].append(s)
        self.blocks: tuple[tuple[int, ...], ...] = tuple(tuple(m) for m in members)

    @classmethod
    def from_blocks(cls, n: int, blocks: Iterable[Iterable[int]]) -> Partition:
        block_of = [-1] * n
        for b, states in enumerate(blocks):
            for s in states:
                if block_of[s] != -1:
                    raise ValueError(f"state {s} occurs in two blocks")
                block_of[s] = b
        if -1 in block_of:
            raise ValueError(f"state {block_of.index(-1)} is not covered")
        return cls(block_of)

    @classmethod
    def singletons(cls, n: int) -> Partition:
        return cls(range(n))

    @property
    def n(self) -> int:
        return len(self.block_of)

    def __len__(self) -> int:
        return len(self.blocks)

    def same_block(self, s: int, t: int) -> bool:
        return bool(self.block_of[s] == self.block_of[t])

    def refines(self, other: Partition) -> bool:
        """True if every block of ``self`` lies inside a block of ``other``."""
        return all(len({int(other.block_of[s]) for s in blk}) == 1 for blk in self.blocks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.block_of, other.block_of)

    def __hash__(self) -> int:
        return hash(self.blocks)

    def __repr__(self) -> str:
        return f"Partition({[list(b) for b in self.blocks]})"


class PairRelation:
    """A relation on ``0..n-1`` stored as one bit block per connected component.

    Pairs can only relate states of the same component of the (symmetrised)
    relation graph, so memory is the sum of squared component sizes instead of
    n^2. The flat layout (``comp``, ``local``, ``size``, ``offset``, ``bits``)
    is what the compiled kernels consume.
    """

    __slots__ = ("n", "comp", "local", "size", "offset", "bits")

    def __init__(self, comp, local, size, offset, bits):
        self.n = len(comp)
        self.comp = np.asarray(comp, dtype=np.int64)
        self.local = np.asarray(local, dtype=np.int64)
        self.size = np.asarray(size, dtype=np.int64)
        self.offset = np.asarray(offset, dtype=np.int64)
        self.bits = np.asarray(bits, dtype=np.bool_)
        for a in (self.comp, self.local, self.size, self.offset, self.bits):
            a.setflags(write=False)

    # -- construction -----------------------------------------------------

    @staticmethod
    def layout(block_of: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(comp, local, size, offset)`` for a canonical block assignment."""
        comp = np.asarray(block_of, dtype=np.int64)
        k = int(comp.max()) + 1 if len(comp) else 0
        size = np.bincount(comp, minlength=k).astype(np.int64)
        offset = np.zeros(k, dtype=np.int64)
        if k:
            offset[1:] = np.cumsum(size * size)[:-1]
        local = np.empty(len(comp), dtype=np.int64)
        seen = np.zeros(k, dtype=np.int64)
        for s, c in enumerate(comp):
            local[s] = seen[c]
            seen[c] += 1
        return comp, local, size, offset

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, int]]) -> PairRelation:
        pairs = list(pairs)
        src = np.array([p[0] for p in pairs], dtype=np.int64)
        dst = np.array([p[1] for p in pairs], dtype=np.int64)
        if len(pairs) and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
            raise ValueError("pair mentions a state outside 0..n-1")
        graph = coo_matrix((np.ones(len(pairs)), (src, dst)), shape=(n, n))
        _, labels = connected_components(graph, directed=True, connection="weak")
        comp, local, size, offset = cls.layout(_canonical_ids(list(labels)))
        bits = np.zeros(int((size * size).sum()), dtype=np.bool_)
        if len(pairs):
            c = comp[src]
            bits[offset[c] + local[src] * size[c] + local[dst]] = True
        return cls(comp, local, size, offset, bits)

    @classmethod
    def from_matrix(cls, matrix) -> PairRelation:
        m = np.asarray(matrix, dtype=np.bool_)
        s, t = np.nonzero(m)
        return cls.from_pairs(m.shape[0], zip(s.tolist(), t.tolist()))

    @classmethod
    def from_partition(cls, p: Partition) -> PairRelation:
        comp, local, size, offset = cls.layout(p.block_of)
        return cls(comp, local, size, offset, np.ones(int((size * size).sum()), dtype=np.bool_))

    @classmethod
    def identity(cls, n: int) -> PairRelation:
        return cls.from_partition(Partition.singletons(n))

    @classmethod
    def full(cls, n: int) -> PairRelation:
        return cls.from_partition(Partition([0] * n))

    # -- queries ------------------------------------------------------------

    def _index(self, s, t):
        c = self.comp[s]
        return self.offset[c] + self.local[s] * self.size[c] + self.local[t]

    def contains_many(self, s, t) -> np.ndarray:
        s = np.asarray(s, dtype=np.int64)
        t = np.asarray(t, dtype=np.int64)
        same = self.comp[s] == self.comp[t]
        out = np.zeros(s.shape, dtype=np.bool_)
        out[same] = self.bits[self._index(s[same], t[same])]
        return out

    def __contains__(self, pair) -> bool:
        s, t = pair
        if self.comp[s] != self.comp[t]:
            return False
        return bool(self.bits[self._index(s, t)])

    def __len__(self) -> int:
        return int(self.bits.sum())

    def components(self) -> list[np.ndarray]:
        order = np.argsort(self.comp, kind="stable")
        return np.split(order, np.cumsum(self.size)[:-1]) if len(self.size) else []

    def block(self, c: int) -> np.ndarray:
        """The bit block of component ``c`` as a (read-only) square matrix."""
        k = self.size[c]
        return self.bits[self.offset[c] : self.offset[c] + k * k].reshape(k, k)

    def pairs(self) -> list[tuple[int, int]]:
        """All related pairs in lexicographic order."""
        out = []
        for c, members in enumerate(self.components()):
            i, j = np.nonzero(self.block(c))
            out.extend(zip(members[i].tolist(), members[j].tolist()))
        out.sort()
        return out

    def related(self, s: int) -> list[int]:
        members = self.components()[self.comp[s]]
        return sorted(members[self.block(self.comp[s])[self.local[s]]].tolist())

    def to_matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=np.bool_)
        for c, members in enumerate(self.components()):
            m[np.ix_(members, members)] = self.block(c)
        return m

    def is_reflexive(self) -> bool:
        idx = self._index(np.arange(self.n), np.arange(self.n))
        return bool(self.bits[idx].all())

    def is_symmetric(self) -> bool:
        return all(np.array_equal(self.block(c), self.block(c).T) for c in range(len(self.size)))

    def is_transitive(self) -> bool:
        for c in range(len(self.size)):
            b = self.block(c).astype(np.int64)
            if ((b @ b > 0) & ~self.block(c)).any():
                return False
        return True

    def is_equivalence(self) -> bool:
        return self.is_reflexive() and self.is_symmetric() and self.is_transitive()

    def issubset(self, other: PairRelation) -> bool:
        for c, members in enumerate(self.components()):
            i, j = np.nonzero(self.block(c))
            if not other.contains_many(members[i], members[j]).all():
                return False
        return True

    __le__ = issubset

    def difference(self, other: PairRelation) -> list[tuple[int, int]]:
        """Pairs of ``self`` missing from ``other``, sorted."""
        return [p for p in self.pairs() if p not in other]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PairRelation):
            return NotImplemented
        if self.n != other.n:
            return False
        if np.array_equal(self.comp, other.comp):
            return np.array_equal(self.bits, other.bits)
        # same pairs can sit in different block layouts
        return len(self) == len(other) and self.issubset(other)

    def __hash__(self) -> int:
        return hash((self.n, len(self)))

    def __repr__(self) -> str:
        return f"PairRelation(n={self.n}, pairs={self.pairs()})"


def label_partition(chain: LabelledMarkovChain) -> Partition:
    """States share a block iff they share a label."""
    return Partition(chain.labels)


def bisim(chain: LabelledMarkovChain, initial: Partition) -> Partition:
    """Largest bisimulation refining ``initial``.

    Signature refinement: every round maps each state to its current block
    plus the exact probability it sends into every block, and splits blocks
    whose members disagree. Stops once a round creates no new block.
    """
    if initial.n != chain.n:
        raise ValueError("partition size does not match the chain")
    rows = [list(d.items()) for d in chain.transitions]
    block = initial.block_of
    count = len(initial)
    while True:
        keys = []
        for s in range(chain.n):
            acc: dict[int, Fraction] = {}
            for t, p in rows[s]:
                b = int(block[t])
                acc[b] = acc.get(b, 0) + p
            keys.append((int(block[s]), tuple(sorted(acc.items()))))
        block = _canonical_ids(keys)
        new_count = int(block.max()) + 1
        if new_count == count:
            return Partition(block)
        count = new_count


def bisimilarity(chain: LabelledMarkovChain) -> Partition:
    """Probabilistic bisimilarity as a partition."""
    return bisim(chain, label_partition(chain))


def partition_to_relation(p: Partition) -> PairRelation:
    return PairRelation.from_partition(p)


def relation_to_partition(r: PairRelation) -> Partition:
    if not r.is_reflexive():
        raise ValueError("relation is not reflexive")
    if not r.is_symmetric() or not r.is_transitive():
        raise ValueError("relation is not an equivalence (symmetry or transitivity fails)")
    # Components of an equivalence relation are exactly its classes.
    return Partition(r.comp)


def quotient_chain(chain: LabelledMarkovChain, p: Partition) -> LabelledMarkovChain:
    """Collapse each block to one state; rows come from the block's smallest member."""
    rows = []
    for blk in p.blocks:
        acc: dict[int, Fraction] = {}
        for t, q in chain.transitions[blk[0]].items():
            b = int(p.block_of[t])
            acc[b] = acc.get(b, Fraction(0)) + q
        rows.append(acc)
    labels = [chain.label_of(blk[0]) for blk in p.blocks]
    names = [f"b{b}" for b in range(len(p))]
    return LabelledMarkovChain.from_rows(rows, labels, names, allow_single_label=True)


def format_partition(p: Partition, chain: LabelledMarkovChain | None = None) -> str:
    lines = []
    for b, blk in enumerate(p.blocks):
        names = [chain.state_names[s] for s in blk] if chain is not None else [str(s) for s in blk]
        lines.append(f"block {b}: {' '.join(names)}")
    return "\n".join(lines) + "\n"
