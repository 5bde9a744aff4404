from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chains, lumpable_chains
from oracles import reach_probability, transport_vertices
from robust_bisim import LabelledMarkovChain, _kernels
from robust_bisim.coupling import Coupling, diagonal_coupling
from robust_bisim.distance import (
    ConvergenceError,
    Policy,
    _Problem,
    check_optimal,
    delta,
    distance_csv,
    distance_matrix_text,
    extract_policy,
    format_policy,
    iterate_sweeps,
    min_transport,
    policy_value,
)
from robust_bisim.relations import bisimilarity

TOL = 1e-9
H0, T, H1 = 0, 1, 2


def test_min_transport_zero_cost():
    mu = {0: Fraction(1, 3), 1: Fraction(2, 3)}
    nu = {1: Fraction(1, 2), 2: Fraction(1, 2)}
    value, w = min_transport(np.zeros((3, 3)), mu, nu)
    assert value == 0.0
    assert w.left_marginal == mu and w.right_marginal == nu


def test_min_transport_diagonal():
    mu = {0: Fraction(1, 3), 1: Fraction(2, 3)}
    cost = 1.0 - np.eye(2)
    value, w = min_transport(cost, mu, mu)
    assert value == 0.0
    assert w == diagonal_coupling(mu)


def test_min_transport_fig1a_coupling(fig1a):
    c = fig1a(Fraction(1, 8))
    d = delta(c)
    value, w = min_transport(d.values, c.transitions[H0], c.transitions[H1])
    assert w == {(H0, H1): Fraction(3, 8), (H0, T): Fraction(1, 8), (T, T): Fraction(1, 2)}
    assert value == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("eps", ["1/8", "1/4", "1/2"])
def test_delta_closed_form(fig1a, eps):
    e = Fraction(eps)
    assert delta(fig1a(e))[H0, H1] == pytest.approx(float(e / (Fraction(1, 2) + e)), abs=TOL)


def test_delta_rigged_coin(fig1b):
    assert delta(fig1b(Fraction(1, 10)))[0, 2] == pytest.approx(1.0, abs=TOL)


def test_delta_random_walk_zero(fig1c):
    assert delta(fig1c(0))[0, 2] == 0.0


def test_delta_accepts_relation(fig1a):
    from robust_bisim.relations import partition_to_relation

    c = fig1a(Fraction(1, 4))
    a = delta(c, partition_to_relation(bisimilarity(c)))
    b = delta(c, bisimilarity(c))
    assert np.array_equal(a.values, b.values)


def test_delta_rejects_bad_tol(fig1a):
    with pytest.raises(ValueError):
        delta(fig1a(0), tol=0)


def test_nonconvergence_reports_residual(fig1a):
    with pytest.raises(ConvergenceError) as info:
        delta(fig1a(Fraction(1, 1024)), max_iter=3)
    assert info.value.residual > 0


@given(chains(max_n=8))
def test_matrix_invariants(chain):
    d = delta(chain).values
    n = chain.n
    assert np.array_equal(d, d.T)
    assert (np.diag(d) == 0).all()
    assert d.min() >= 0.0 and d.max() <= 1.0
    for s in range(n):
        for t in range(n):
            if chain.labels[s] != chain.labels[t]:
                assert d[s, t] == 1.0


@given(st.one_of(chains(max_n=8), lumpable_chains(max_n=8)))
def test_pseudometric(chain):
    d = delta(chain).values
    # d[s, u] <= d[s, t] + d[t, u] over all triples
    lhs = d[:, None, :]
    rhs = d[:, :, None] + d[None, :, :]
    assert (lhs <= rhs + 3 * TOL).all()


@given(st.one_of(chains(max_n=8), lumpable_chains(max_n=8)))
def test_zero_distance_iff_bisimilar(chain):
    d = delta(chain)
    part = bisimilarity(chain)
    for s in range(chain.n):
        for t in range(chain.n):
            assert (d[s, t] < 10 * TOL) == part.same_block(s, t)


def random_policy(chain, rng) -> Policy:
    couplings = {}
    for s in range(chain.n):
        for t in range(chain.n):
            if chain.labels[s] == chain.labels[t]:
                cost = rng.random((chain.n, chain.n))
                couplings[s, t] = min_transport(cost, chain.transitions[s], chain.transitions[t])[1]
    return Policy(chain, couplings)


@given(chains(max_n=6), st.integers(0, 2**32 - 1))
def test_distance_below_every_policy(chain, seed):
    d = delta(chain)
    g = policy_value(chain, random_policy(chain, np.random.default_rng(seed)))
    for s in range(chain.n):
        for t in range(chain.n):
            assert d[s, t] <= float(g[s, t]) + TOL


@given(st.one_of(chains(max_n=7), lumpable_chains(max_n=7)))
def test_extracted_policy_attains_distance(chain):
    d = delta(chain)
    p = extract_policy(chain, d)
    g = policy_value(chain, p)
    for s in range(chain.n):
        for t in range(chain.n):
            assert abs(d[s, t] - float(g[s, t])) <= 10 * TOL
    assert check_optimal(chain, p, d, tol=10 * TOL)


@given(chains(max_n=6), st.integers(0, 2**32 - 1))
def test_policy_value_matches_float_iteration(chain, seed):
    p = random_policy(chain, np.random.default_rng(seed))
    g = policy_value(chain, p)
    target = {(s, t) for s in range(chain.n) for t in range(chain.n) if chain.labels[s] != chain.labels[t]}
    x = reach_probability(chain, p.couplings, target)
    for s in range(chain.n):
        for t in range(chain.n):
            assert float(g[s, t]) == pytest.approx(x[s, t], abs=1e-9)


@given(chains(max_n=7))
def test_sweeps_are_monotone(chain):
    it = iterate_sweeps(chain)
    prev = next(it)
    for _ in range(40):
        cur = next(it)
        assert (cur >= prev - 1e-15).all()
        prev = cur


def test_policy_fig1a_eighth(fig1a):
    c = fig1a(Fraction(1, 8))
    p = extract_policy(c, delta(c))
    assert p[H0, H1] == {(H0, H1): Fraction(3, 8), (H0, T): Fraction(1, 8), (T, T): Fraction(1, 2)}
    g = policy_value(c, p)
    assert g[H0, H1] == Fraction(1, 5)
    assert g[H0, T] == 1 and g[T, T] == 0


def test_policy_fig1a_zero(fig1a):
    c = fig1a(0)
    p = extract_policy(c, delta(c))
    assert p[H0, H1] == {(H0, H1): Fraction(1, 2), (T, T): Fraction(1, 2)}
    assert policy_value(c, p)[H0, H1] == 0


def test_policy_all_distinct_labels():
    c = LabelledMarkovChain.from_rows([{1: 1}, {0: Fraction(1, 2), 2: Fraction(1, 2)}, {2: 1}], ["a", "b", "c"])
    d = delta(c)
    p = extract_policy(c, d)
    assert set(p.couplings) == {(0, 0), (1, 1), (2, 2)}
    assert p[0, 1] == {(0, 1): 1}
    assert p[1, 1] == diagonal_coupling(c.transitions[1])
    assert check_optimal(c, p, d)
    g = policy_value(c, p)
    assert all(g[s, t] == (s != t) for s in range(3) for t in range(3))


def test_check_optimal_rejects_perturbed(fig1a):
    c = fig1a(Fraction(1, 8))
    d = delta(c)
    p = extract_policy(c, d)
    worse = dict(p.couplings)
    # valid coupling of tau(h0), tau(h1) that routes mass onto differently labelled pairs
    worse[H0, H1] = Coupling({(H0, T): Fraction(1, 2), (T, H1): Fraction(3, 8), (T, T): Fraction(1, 8)})
    assert not check_optimal(c, Policy(c, worse), d)


def test_policy_value_rejects_invalid(fig1a):
    c = fig1a(0)
    p = extract_policy(c, delta(c))
    broken = dict(p.couplings)
    broken[H0, H1] = Coupling({(H0, H1): 1})
    with pytest.raises(ValueError, match="pair"):
        policy_value(c, Policy(c, broken))


def test_outputs(fig1a):
    c = fig1a(Fraction(1, 8))
    d = delta(c)
    assert distance_csv(c, d) == "s,t,value\nh0,t,1.000000000\nh0,h1,0.200000000\nt,h1,1.000000000\n"
    assert distance_csv(c, d, [(0, 0)]) == "s,t,value\nh0,h0,0.000000000\n"
    text = distance_matrix_text(c, d)
    assert text.splitlines()[1].split() == ["h0", "0.000000000", "1.000000000", "0.200000000"]
    listing = format_policy(extract_policy(c, d), [(H0, H1)])
    assert listing == "pair (h0,h1)\n  (h0,t): 1/8\n  (h0,h1): 3/8\n  (t,t): 1/2\n"


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_transport_matches_vertex_enumeration(m, k, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(1, 6, size=m), rng.integers(1, 6, size=k)
    mu = {i: Fraction(int(x), int(a.sum())) for i, x in enumerate(a)}
    nu = {j: Fraction(int(x), int(b.sum())) for j, x in enumerate(b)}
    cost = rng.random((m, k))
    value, w = min_transport(cost, mu, nu)
    assert w.left_marginal == mu and w.right_marginal == nu
    expect = transport_vertices(cost, [float(x) for x in mu.values()], [float(x) for x in nu.values()])
    assert value == pytest.approx(expect, abs=1e-12)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1), st.booleans())
def test_transport_kernels_agree(m, k, seed, ties):
    rng = np.random.default_rng(seed)
    cost = rng.integers(0, 3, size=(m, k)).astype(float) if ties else rng.random((m, k))
    a = rng.dirichlet(np.ones(m))
    b = rng.dirichlet(np.ones(k))
    out = []
    for fn in (_kernels.transport_solve, _kernels.transport_solve_py):
        basic = np.zeros((m, k), dtype=np.bool_)
        flow = np.zeros((m, k))
        out.append((fn(cost, a, b, basic, flow, False), basic.copy()))
    assert out[0][0] == pytest.approx(out[1][0], abs=1e-15)
    assert np.array_equal(out[0][1], out[1][1])
    assert out[0][1].sum() == m + k - 1


@given(lumpable_chains(max_n=8))
def test_sweep_kernels_agree(chain):
    prob = _Problem(chain, bisimilarity(chain))
    d = prob.d0.copy()
    for warm in (False, True, True):
        outs = []
        for fn in (_kernels.vi_sweep, _kernels.vi_sweep_py):
            basic, flow = prob.basic.copy(), prob.flow.copy()
            d_new = d.copy()
            ch = fn(prob.ptr, prob.idx, prob.prob, prob.ps, prob.pt, prob.off, basic, flow, warm, d, d_new)
            outs.append((ch, d_new, basic, flow))
        assert outs[0][0] == pytest.approx(outs[1][0], abs=1e-15)
        assert np.allclose(outs[0][1], outs[1][1], atol=1e-15, rtol=0)
        assert np.array_equal(outs[0][2], outs[1][2])
        d, prob.basic, prob.flow = outs[0][1], outs[0][2], outs[0][3]


@given(lumpable_chains(max_n=8))
def test_threads_do_not_change_result(chain):
    a = delta(chain)
    b = delta(chain, threads=3)
    assert np.array_equal(a.values, b.values)
