"""The three coin-flip example families and epsilon sweeps over them."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, TextIO

import numpy as np

from .distance import delta
from .lmc import LabelledMarkovChain, parse_probability
from .relations import bisimilarity
from .robust import robust_partition

__all__ = [
    "FAMILIES",
    "DEFAULT_GRID",
    "ExampleFamily",
    "SweepRow",
    "build_example",
    "distinguished_pair",
    "parse_epsilons",
    "sweep",
    "write_sweep_csv",
    "random_chain",
]

FAMILIES = ("geometric-coin", "rigged-coin", "random-walk")

DEFAULT_GRID = tuple(
    Fraction(x) for x in ("0", "1/1024", "1/256", "1/64", "1/16", "1/8", "1/4", "1/2")
)

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class ExampleFamily:
    kind: str
    epsilon: Fraction

    def __post_init__(self) -> None:
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown family {self.kind!r}; expected one of {', '.join(FAMILIES)}")
        eps = Fraction(self.epsilon)
        if not 0 <= eps <= HALF:
            raise ValueError(f"epsilon {eps} outside [0, 1/2]")
        object.__setattr__(self, "epsilon", eps)


@dataclass(frozen=True)
class SweepRow:
    family: str
    epsilon: Fraction
    s: str
    t: str
    distance: float
    robust_flag: bool
    bisim_flag: bool


def build_example(fam: ExampleFamily) -> LabelledMarkovChain:
    """Chain of one family at one epsilon.

    State order: geometric-coin ``h0 t h1``, rigged-coin ``h2 t3 h3``,
    random-walk ``h4 t4 h5 t5``.
    """
    e = fam.epsilon
    if fam.kind == "geometric-coin":
        rows = [{0: HALF, 1: HALF}, {1: 1}, {2: HALF - e, 1: HALF + e}]
        names = ["h0", "t", "h1"]
        labels = ["heads", "tails", "heads"]
    elif fam.kind == "rigged-coin":
        rows = [{0: 1}, {1: 1}, {2: 1 - e, 1: e}]
        names = ["h2", "t3", "h3"]
        labels = ["heads", "tails", "heads"]
    else:
        fair = {0: HALF, 1: HALF}
        biased = {2: HALF - e, 3: HALF + e}
        rows = [fair, dict(fair), biased, dict(biased)]
        names = ["h4", "t4", "h5", "t5"]
        labels = ["heads", "tails", "heads", "tails"]
    return LabelledMarkovChain.from_rows(rows, labels, names)


def distinguished_pair(kind: str) -> tuple[int, int]:
    """The two heads states compared in each family; always ids 0 and 2."""
    if kind not in FAMILIES:
        raise ValueError(f"unknown family {kind!r}")
    return (0, 2)


def parse_epsilons(text: str) -> list[Fraction]:
    """Comma-separated exact rationals or decimals, e.g. ``0,1/8,0.25``."""
    if not text.strip():
        return []
    return [parse_probability(x) for x in text.split(",")]


def _sweep_point(kind: str, eps: Fraction, tol: float) -> SweepRow:
    chain = build_example(ExampleFamily(kind, eps))
    s, t = distinguished_pair(kind)
    sim = bisimilarity(chain)
    rob = robust_partition(chain, sim)
    d = delta(chain, sim, tol=tol)
    return SweepRow(
        kind, eps, chain.state_names[s], chain.state_names[t], d[s, t],
        rob.same_block(s, t), sim.same_block(s, t),
    )


def write_sweep_csv(rows: Iterable[SweepRow], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["family", "epsilon", "s", "t", "distance", "robust", "bisimilar"])
    for r in rows:
        w.writerow([
            r.family, f"{r.epsilon.numerator}/{r.epsilon.denominator}", r.s, r.t,
            f"{r.distance:.9f}", str(r.robust_flag).lower(), str(r.bisim_flag).lower(),
        ])


def sweep(
    kind: str,
    epsilons: Iterable,
    out: TextIO | None = None,
    tol: float = 1e-9,
    workers: int = 1,
) -> list[SweepRow]:
    """Run bisimilarity, robust bisimilarity and distances at each epsilon.

    Points are independent; with ``workers > 1`` they run on a thread pool.
    Rows come back sorted by (family, epsilon) either way. Nothing is
    written for an empty epsilon list.
    """
    eps_list = [ExampleFamily(kind, Fraction(e)).epsilon for e in epsilons]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda e: _sweep_point(kind, e, tol), eps_list))
    else:
        rows = [_sweep_point(kind, e, tol) for e in eps_list]
    rows.sort(key=lambda r: (r.family, r.epsilon))
    if out is not None and rows:
        write_sweep_csv(rows, out)
    return rows


def _random_weights(rng: np.random.Generator, k: int, max_weight: int) -> list[Fraction]:
    w = rng.integers(1, max_weight + 1, size=k)
    total = int(w.sum())
    return [Fraction(int(x), total) for x in w]


def random_chain(
    rng: np.random.Generator,
    n: int,
    n_labels: int = 2,
    n_blocks: int | None = None,
    max_support: int = 3,
    max_weight: int = 4,
) -> LabelledMarkovChain:
    """Random chain built by splitting a random quotient chain.

    States are dealt into ``n_blocks`` groups (default: random); each group
    gets one label and one distribution over groups, and every member spreads
    each group's share over a random subset of that group. Members of a group
    are therefore bisimilar, while the chain itself has varied supports, which
    is what makes the robust and non-robust cases both show up.
    """
    if n < 2:
        raise ValueError("need at least two states")
    k = int(n_blocks) if n_blocks is not None else int(rng.integers(2, n + 1))
    k = max(2, min(k, n))
    block = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    rng.shuffle(block)
    members = [np.flatnonzero(block == b) for b in range(k)]
    labels = rng.integers(0, max(2, n_labels), size=k)
    if len(set(labels.tolist())) < 2:
        labels[int(rng.integers(0, k))] = (labels[0] + 1) % max(2, n_labels)
    quotient = []
    for _ in range(k):
        size = int(rng.integers(1, min(max_support, k) + 1))
        targets = rng.choice(k, size=size, replace=False)
        quotient.append(dict(zip(targets.tolist(), _random_weights(rng, size, max_weight))))
    rows = []
    for s in range(n):
        row: dict[int, Fraction] = {}
        for c, share in quotient[block[s]].items():
            pool = members[c]
            size = int(rng.integers(1, min(max_support, len(pool)) + 1))
            picks = rng.choice(pool, size=size, replace=False)
            for t, w in zip(picks.tolist(), _random_weights(rng, size, max_weight)):
                row[t] = row.get(t, Fraction(0)) + share * w
        rows.append(row)
    names = [f"L{labels[b]}" for b in block]
    return LabelledMarkovChain.from_rows(rows, names)
