"""Exact constructions of couplings of two (sub)distributions."""

from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

from .lmc import SubDistribution
from .relations import PairRelation

__all__ = [
    "Coupling",
    "CouplingError",
    "north_west_corner",
    "class_coupling",
    "maximal_support_coupling",
    "diagonal_coupling",
    "tv_distance",
    "verify_coupling",
]


class CouplingError(ValueError):
    pass


class Coupling(Mapping[tuple[int, int], Fraction]):
    """Sparse joint distribution on state pairs; zero entries are never stored."""

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[tuple[int, int], Fraction] | Iterable = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        acc: dict[tuple[int, int], Fraction] = defaultdict(Fraction)
        for (u, v), p in items:
            p = Fraction(p)
            if p < 0:
                raise CouplingError(f"negative mass {p} at ({u}, {v})")
            acc[int(u), int(v)] += p
        self._entries = {k: acc[k] for k in sorted(acc) if acc[k]}

    def __getitem__(self, key) -> Fraction:
        return self._entries[key]

    def get(self, key, default=Fraction(0)):
        return self._entries.get(key, default)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if isinstance(other, Coupling):
            return self._entries == other._entries
        if isinstance(other, Mapping):
            return self._entries == {k: Fraction(v) for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self._entries.items()))

    def __add__(self, other: Coupling) -> Coupling:
        return Coupling(list(self.items()) + list(other.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"({u},{v}): {p}" for (u, v), p in self._entries.items())
        return f"Coupling({{{body}}})"

    def support(self) -> set[tuple[int, int]]:
        return set(self._entries)

    @property
    def left_marginal(self) -> SubDistribution:
        acc: dict[int, Fraction] = defaultdict(Fraction)
        for (u, _), p in self._entries.items():
            acc[u] += p
        return SubDistribution(acc)

    @property
    def right_marginal(self) -> SubDistribution:
        acc: dict[int, Fraction] = defaultdict(Fraction)
        for (_, v), p in self._entries.items():
            acc[v] += p
        return SubDistribution(acc)

    def expectation(self, cost) -> float:
        """Sum of ``mass * cost[u, v]`` (``cost`` indexable by a pair)."""
        return sum(float(p) * float(cost[u, v]) for (u, v), p in self._entries.items())

    def format(self, names: Iterable[str] | None = None) -> str:
        nm = list(names) if names is not None else None
        lines = []
        for (u, v), p in self._entries.items():
            a, b = (nm[u], nm[v]) if nm else (u, v)
            lines.append(f"({a},{b}): {p.numerator}/{p.denominator}")
        return "\n".join(lines)


def _as_sub(mu) -> SubDistribution:
    return mu if isinstance(mu, SubDistribution) else SubDistribution(mu)


def north_west_corner(mu, nu) -> Coupling:
    """Greedy corner-rule coupling of two subdistributions of equal mass.

    Walks both supports in ascending state order, always filling the current
    cell with as much mass as both residuals allow.
    """
    mu, nu = _as_sub(mu), _as_sub(nu)
    if mu.mass != nu.mass:
        raise CouplingError(f"mass mismatch: {mu.mass} vs {nu.mass}")
    rows, cols = list(mu.items()), list(nu.items())
    entries = {}
    i = j = 0
    ra = rows[0][1] if rows else Fraction(0)
    rb = cols[0][1] if cols else Fraction(0)
    while i < len(rows) and j < len(cols):
        x = min(ra, rb)
        entries[rows[i][0], cols[j][0]] = x
        ra -= x
        rb -= x
        if ra == 0:
            i += 1
            ra = rows[i][1] if i < len(rows) else Fraction(0)
        if rb == 0:
            j += 1
            rb = cols[j][1] if j < len(cols) else Fraction(0)
    return Coupling(entries)


def _classes(r: PairRelation) -> list[list[int]]:
    if not r.is_equivalence():
        raise CouplingError("relation must be an equivalence relation")
    return [c.tolist() for c in r.components()]


def class_coupling(mu, nu, r: PairRelation) -> Coupling:
    """Coupling supported inside the equivalence ``r``: one corner-rule coupling per class."""
    mu, nu = _as_sub(mu), _as_sub(nu)
    out: dict[tuple[int, int], Fraction] = {}
    classes = _classes(r)
    touched = set(mu) | set(nu)
    for cls in classes:
        if not touched.intersection(cls):
            continue
        mu_a, nu_a = mu.restrict(cls), nu.restrict(cls)
        if mu_a.mass != nu_a.mass:
            raise CouplingError(f"class {cls} has mass {mu_a.mass} on the left and {nu_a.mass} on the right")
        out.update(north_west_corner(mu_a, nu_a))
    return Coupling(out)


def maximal_support_coupling(mu, nu, r: PairRelation) -> Coupling:
    """Coupling whose support is exactly ``(support(mu) x support(nu)) & r``.

    First gives every admissible pair ``(u, v)`` the share
    ``min(mu(u) / |row u|, nu(v) / |column v|)``, then couples the leftover
    mass class by class with the corner rule.
    """
    mu, nu = _as_sub(mu), _as_sub(nu)
    _classes(r)
    allowed = [(u, v) for u in mu for v in nu if (u, v) in r]
    row_deg: dict[int, int] = defaultdict(int)
    col_deg: dict[int, int] = defaultdict(int)
    for u, v in allowed:
        row_deg[u] += 1
        col_deg[v] += 1
    res_mu = dict(mu.items())
    res_nu = dict(nu.items())
    first: dict[tuple[int, int], Fraction] = {}
    for u, v in allowed:
        p = min(mu[u] / row_deg[u], nu[v] / col_deg[v])
        first[u, v] = p
        res_mu[u] -= p
        res_nu[v] -= p
    assert all(x >= 0 for x in res_mu.values()) and all(x >= 0 for x in res_nu.values())
    residual_mu, residual_nu = SubDistribution(res_mu), SubDistribution(res_nu)
    second = class_coupling(residual_mu, residual_nu, r)
    return Coupling(first) + second


def diagonal_coupling(mu) -> Coupling:
    return Coupling({(s, s): p for s, p in _as_sub(mu).items()})


def tv_distance(mu, nu) -> Fraction:
    """Largest pointwise difference ``max_x |mu(x) - nu(x)|``.

    This is the sup-norm distance, not half the L1 norm.
    """
    mu, nu = _as_sub(mu), _as_sub(nu)
    return max((abs(mu.get(x) - nu.get(x)) for x in set(mu) | set(nu)), default=Fraction(0))


def verify_coupling(w: Coupling, mu, nu) -> bool:
    return w.left_marginal == _as_sub(mu) and w.right_marginal == _as_sub(nu)
