"""Labelled Markov chains with exact rational transition probabilities.

Also holds the explicit-state file format (``.tra`` / ``.lab``) and the
classification of state pairs used by the distance and robustness code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

__all__ = [
    "ModelError",
    "SubDistribution",
    "Distribution",
    "LabelledMarkovChain",
    "PairClassification",
    "parse_probability",
    "parse_model",
    "serialize_model",
    "classify_pairs",
    "post_pairs",
]

_RATIONAL = re.compile(r"^\d+/\d+$")
_DECIMAL = re.compile(r"^(\d+\.?\d*|\.\d+)$")


class ModelError(ValueError):
    """Raised for malformed or invalid model input."""


def parse_probability(text: str) -> Fraction:
    """Parse ``a/b`` or a plain decimal literal into an exact fraction in [0, 1]."""
    text = text.strip()
    if _RATIONAL.match(text):
        num, den = text.split("/")
        if int(den) == 0:
            raise ModelError(f"zero denominator in {text!r}")
        p = Fraction(int(num), int(den))
    elif _DECIMAL.match(text):
        # Fraction parses decimal strings exactly (power-of-ten denominator).
        p = Fraction(text)
    else:
        raise ModelError(f"not a probability literal: {text!r}")
    if p < 0 or p > 1:
        raise ModelError(f"probability {text} outside [0, 1]")
    return p


class SubDistribution(Mapping[int, Fraction]):
    """Sparse map state -> positive exact probability with total mass <= 1.

    Zero entries are dropped on construction; iteration is in ascending state
    order.
    """

    __slots__ = ("_entries", "_mass")

    def __init__(self, entries: Mapping[int, Fraction] | Iterable[tuple[int, Fraction]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        acc: dict[int, Fraction] = {}
        for s, p in items:
            p = Fraction(p)
            if p < 0:
                raise ValueError(f"negative probability {p} at state {s}")
            if p:
                acc[int(s)] = acc.get(int(s), Fraction(0)) + p
        self._entries = {s: acc[s] for s in sorted(acc)}
        self._mass = sum(self._entries.values(), Fraction(0))
        self._check_mass()

    def _check_mass(self) -> None:
        if self._mass > 1:
            raise ValueError(f"total mass {self._mass} exceeds 1")

    def __getitem__(self, s: int) -> Fraction:
        return self._entries[s]

    def get(self, s, default=Fraction(0)):
        return self._entries.get(s, default)

    def __iter__(self) -> Iterator[int]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if isinstance(other, SubDistribution):
            return self._entries == other._entries
        if isinstance(other, Mapping):
            return self._entries == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self._entries.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{s}: {p}" for s, p in self._entries.items())
        return f"{type(self).__name__}({{{body}}})"

    @property
    def mass(self) -> Fraction:
        return self._mass

    def support(self) -> tuple[int, ...]:
        return tuple(self._entries)

    def measure(self, states: Iterable[int]) -> Fraction:
        """Total probability of a set of states."""
        return sum((self._entries.get(s, Fraction(0)) for s in states), Fraction(0))

    def restrict(self, states: Iterable[int]) -> SubDistribution:
        keep = set(states)
        return SubDistribution({s: p for s, p in self._entries.items() if s in keep})


class Distribution(SubDistribution):
    """A :class:`SubDistribution` whose mass is exactly one."""

    __slots__ = ()

    def _check_mass(self) -> None:
        if self._mass != 1:
            raise ValueError(f"distribution sums to {self._mass}, expected 1")


@dataclass(frozen=True)
class LabelledMarkovChain:
    """A finite labelled Markov chain over states ``0..n-1``.

    ``labels[s]`` indexes into ``label_names``; ``transitions[s]`` is the
    successor distribution of ``s``. ``state_names`` is cosmetic and defaults
    to the decimal ids.
    """

    labels: tuple[int, ...]
    label_names: tuple[str, ...]
    transitions: tuple[Distribution, ...]
    state_names: tuple[str, ...] = ()
    allow_single_label: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.labels)
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(
            self,
            "transitions",
            tuple(d if isinstance(d, Distribution) else Distribution(d) for d in self.transitions),
        )
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(str(s) for s in range(n)))
        else:
            object.__setattr__(self, "state_names", tuple(self.state_names))
        if n == 0:
            raise ModelError("chain has no states")
        if len(self.transitions) != n or len(self.state_names) != n:
            raise ModelError("labels, transitions and state_names must have equal length")
        for s, lab in enumerate(self.labels):
            if not 0 <= lab < len(self.label_names):
                raise ModelError(f"state {s} has unknown label id {lab}")
        for s, dist in enumerate(self.transitions):
            for t in dist:
                if not 0 <= t < n:
                    raise ModelError(f"state {s} has a transition to unknown state {t}")
        if len(set(self.labels)) < 2 and not self.allow_single_label:
            raise ModelError("chain uses a single label; pass allow_single_label to accept it")

    @property
    def n(self) -> int:
        return len(self.labels)

    def label_of(self, s: int) -> str:
        return self.label_names[self.labels[s]]

    def state_id(self, name: str) -> int:
        """Resolve a state by name, falling back to a decimal id."""
        try:
            return self.state_names.index(name)
        except ValueError:
            pass
        try:
            s = int(name)
        except ValueError:
            raise ModelError(f"unknown state {name!r}") from None
        if not 0 <= s < self.n:
            raise ModelError(f"state id {s} out of range")
        return s

    def support(self, s: int) -> tuple[int, ...]:
        return self.transitions[s].support()

    def predecessors(self) -> list[list[int]]:
        pred: list[list[int]] = [[] for _ in range(self.n)]
        for s, dist in enumerate(self.transitions):
            for t in dist:
                pred[t].append(s)
        return pred

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[Mapping[int, object]],
        labels: Iterable[str],
        state_names: Iterable[str] = (),
        allow_single_label: bool = False,
    ) -> LabelledMarkovChain:
        """Build a chain from per-state ``{target: probability}`` rows and label strings.

        Probabilities may be anything :class:`fractions.Fraction` accepts.
        Label ids follow first appearance.
        """
        names: list[str] = []
        ids: list[int] = []
        for lab in labels:
            if lab not in names:
                names.append(lab)
            ids.append(names.index(lab))
        dists = []
        for s, row in enumerate(rows):
            try:
                dists.append(Distribution({t: Fraction(p) for t, p in row.items()}))
            except ValueError as exc:
                raise ModelError(f"state {s}: {exc}") from None
        return cls(tuple(ids), tuple(names), tuple(dists), tuple(state_names), allow_single_label)


def _content_lines(text: str) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def parse_model(transitions_text: str, labels_text: str, allow_single_label: bool = False) -> LabelledMarkovChain:
    """Parse a transitions file and a labels file into a validated chain.

    The transitions file starts with ``STATES <n>`` followed by
    ``<src> <dst> <prob>`` lines; the labels file has one ``<state> <label>``
    line per state. Errors carry the offending line number or state.
    """
    lines = _content_lines(transitions_text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ModelError("transitions: empty file, expected 'STATES <n>'") from None
    parts = header.split()
    if len(parts) != 2 or parts[0] != "STATES" or not parts[1].isdigit():
        raise ModelError(f"transitions line {lineno}: expected 'STATES <n>', got {header!r}")
    n = int(parts[1])
    if n == 0:
        raise ModelError(f"transitions line {lineno}: chain must have at least one state")

    rows: list[dict[int, Fraction]] = [{} for _ in range(n)]
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != 3 or not parts[0].isdigit() or not parts[1].isdigit():
            raise ModelError(f"transitions line {lineno}: expected '<src> <dst> <prob>', got {line!r}")
        src, dst = int(parts[0]), int(parts[1])
        for s in (src, dst):
            if s >= n:
                raise ModelError(f"transitions line {lineno}: state {s} out of range 0..{n - 1}")
        try:
            p = parse_probability(parts[2])
        except ModelError as exc:
            raise ModelError(f"transitions line {lineno}: {exc}") from None
        if dst in rows[src]:
            raise ModelError(f"transitions line {lineno}: duplicate transition {src} -> {dst}")
        rows[src][dst] = p
    for s, row in enumerate(rows):
        total = sum(row.values(), Fraction(0))
        if total != 1:
            raise ModelError(f"transitions: row of state {s} sums to {total}, expected 1")

    labels: list[str | None] = [None] * n
    for lineno, line in _content_lines(labels_text):
        parts = line.split(None, 1)
        if len(parts) != 2 or not parts[0].isdigit():
            raise ModelError(f"labels line {lineno}: expected '<state> <label>', got {line!r}")
        s = int(parts[0])
        if s >= n:
            raise ModelError(f"labels line {lineno}: state {s} out of range 0..{n - 1}")
        if labels[s] is not None:
            raise ModelError(f"labels line {lineno}: duplicate label for state {s}")
        labels[s] = parts[1].strip()
    missing = [s for s, lab in enumerate(labels) if lab is None]
    if missing:
        raise ModelError(f"labels: unlabeled state(s) {', '.join(map(str, missing))}")

    return LabelledMarkovChain.from_rows(rows, labels, allow_single_label=allow_single_label)  # type: ignore[arg-type]


def serialize_model(chain: LabelledMarkovChain) -> tuple[str, str]:
    """Return ``(transitions_text, labels_text)``; probabilities as reduced ``a/b``."""
    tra = [f"STATES {chain.n}"]
    for s, dist in enumerate(chain.transitions):
        for t, p in dist.items():
            tra.append(f"{s} {t} {p.numerator}/{p.denominator}")
    lab = [f"{s} {chain.label_of(s)}" for s in range(chain.n)]
    return "\n".join(tra) + "\n", "\n".join(lab) + "\n"


@dataclass(frozen=True)
class PairClassification:
    """Split of S x S into diagonal, differently labelled, bisimilar off-diagonal
    and undetermined pairs. Only the last two are stored explicitly."""

    labels: tuple[int, ...]
    bisimilar_offdiag: frozenset[tuple[int, int]]
    unknown: frozenset[tuple[int, int]]

    @property
    def n(self) -> int:
        return len(self.labels)

    def is_diag(self, s: int, t: int) -> bool:
        return s == t

    def is_different_label(self, s: int, t: int) -> bool:
        return self.labels[s] != self.labels[t]

    def classify(self, s: int, t: int) -> str:
        """One of ``"diag"``, ``"one"``, ``"zero"``, ``"unknown"``."""
        if s == t:
            return "diag"
        if self.labels[s] != self.labels[t]:
            return "one"
        return "zero" if (s, t) in self.bisimilar_offdiag else "unknown"

    def different_label(self) -> frozenset[tuple[int, int]]:
        n, lab = self.n, self.labels
        return frozenset((s, t) for s in range(n) for t in range(n) if lab[s] != lab[t])


def classify_pairs(chain: LabelledMarkovChain, bisim) -> PairClassification:
    """Classify all state pairs given the bisimilarity relation of ``chain``.

    ``bisim`` is a :class:`~robust_bisim.relations.PairRelation` (anything with
    ``n``, ``pairs()`` and ``is_equivalence()`` works).
    """
    if bisim.n != chain.n or not bisim.is_equivalence():
        raise ModelError("bisim must be an equivalence relation over the chain's states")
    zero = set()
    for s, t in bisim.pairs():
        if s != t:
            if chain.labels[s] != chain.labels[t]:
                raise ModelError(f"bisim relates differently labelled states {s} and {t}")
            zero.add((s, t))
    lab = chain.labels
    unknown = frozenset(
        (s, t)
        for s in range(chain.n)
        for t in range(chain.n)
        if s != t and lab[s] == lab[t] and (s, t) not in zero
    )
    return PairClassification(chain.labels, frozenset(zero), unknown)


def post_pairs(chain: LabelledMarkovChain, s: int, t: int) -> set[tuple[int, int]]:
    """``support(tau(s)) x support(tau(t))``."""
    return {(u, v) for u in chain.support(s) for v in chain.support(t)}
