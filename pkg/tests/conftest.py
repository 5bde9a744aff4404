from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from robust_bisim import ExampleFamily, LabelledMarkovChain, build_example  # noqa: E402

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def family(kind: str, eps) -> LabelledMarkovChain:
    return build_example(ExampleFamily(kind, Fraction(eps)))


@pytest.fixture
def fig1a():
    return lambda eps=0: family("geometric-coin", eps)


@pytest.fixture
def fig1b():
    return lambda eps=0: family("rigged-coin", eps)


@pytest.fixture
def fig1c():
    return lambda eps=0: family("random-walk", eps)


@st.composite
def chains(draw, max_n: int = 6, max_labels: int = 3, max_support: int = 3):
    """Small chains with random rational rows and at least two labels."""
    n = draw(st.integers(2, max_n))
    k = draw(st.integers(2, max_labels))
    labels = draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n))
    if len(set(labels)) < 2:
        labels[0] = (labels[1] + 1) % k
    rows = []
    for _ in range(n):
        targets = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=max_support, unique=True))
        weights = draw(st.lists(st.integers(1, 4), min_size=len(targets), max_size=len(targets)))
        total = sum(weights)
        rows.append({t: Fraction(w, total) for t, w in zip(targets, weights)})
    return LabelledMarkovChain.from_rows(rows, [f"l{x}" for x in labels])


@st.composite
def lumpable_chains(draw, max_n: int = 7):
    """Chains from the planted-quotient generator, so bisimilarity is non-trivial."""
    import numpy as np

    from robust_bisim.harness import random_chain

    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(2, max_n))
    support = draw(st.integers(1, 3))
    rng = np.random.default_rng(seed)
    return random_chain(rng, n, n_labels=draw(st.integers(2, 3)), max_support=support)


_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, text = mark.args
    entry = _CRITERIA.setdefault(number, [text, True])
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}")
