import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from spectraflow.decay import (DomainError, FFunction, MetricGraph, chain_conv_bound, convolution_constant,
                               d_interaction, envelope_tail, envelope_u, f_polynomial, f_weighted,
                               interaction_norm, simple_bounds)
from spectraflow.interaction import InteractionFamily, Term
from spectraflow.models import tfim_family
from spectraflow.operators import PAULI

X, Z = PAULI["X"], PAULI["Z"]


def test_f_polynomial_values():
    assert f_polynomial(0, 1) == 1.0
    assert f_polynomial(1, 1) == 0.25
    assert f_polynomial(3, 2) == pytest.approx(0.015625, abs=0)


def test_f_weighted_values():
    F = FFunction.polynomial(1)
    assert f_weighted(0, 1.0, F) == 1.0
    assert f_weighted(2, 0.0, F) == F(2)
    assert f_weighted(1, math.log(2), F) == pytest.approx(0.125, rel=1e-15)


def test_domain_errors():
    with pytest.raises(DomainError):
        f_polynomial(-1, 1)
    with pytest.raises(DomainError):
        f_polynomial(1, 0)
    with pytest.raises(DomainError):
        FFunction.exp_weighted(-0.1, FFunction.polynomial(1))
    with pytest.raises(DomainError):
        envelope_u(1.0, 0.3)


def test_graph_validation():
    with pytest.raises(ValueError):
        MetricGraph([0, 1], np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValueError):
        MetricGraph([0, 1, 2], np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]]))
    MetricGraph.chain(9).check()
    MetricGraph.chain(8, periodic=True).check()
    MetricGraph.grid(3, 4).check()


def test_single_site_convolution():
    g = MetricGraph.chain(1)
    F = FFunction.polynomial(1)
    assert convolution_constant(F, g) == F(0)


def test_two_site_convolution_exhaustive():
    g = MetricGraph.chain(2)
    F = FFunction.polynomial(1)
    f0, f1 = F(0), F(1)
    pairs = {(0, 0): f0 * f0 + f1 * f1, (0, 1): 2 * f0 * f1}
    want = max(pairs[(0, 0)] / f0, pairs[(0, 1)] / f1)
    assert convolution_constant(F, g) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("L", [4, 8, 16])
def test_chain_convolution_below_analytic(L):
    F = FFunction.polynomial(1)
    assert convolution_constant(F, MetricGraph.chain(L)) <= chain_conv_bound(1)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 50.0))
def test_weighting_monotone(a, b, r):
    F = FFunction.polynomial(1)
    lo, hi = sorted((a, b))
    assert f_weighted(r, hi, F) <= f_weighted(r, lo, F)


@given(st.sampled_from(["polynomial", "exp", "psi"]), st.integers(2, 10))
def test_convolution_inequality_exhaustive(kind, L):
    base = FFunction.polynomial(1)
    F = {"polynomial": base, "exp": FFunction.exp_weighted(0.7, base),
         "psi": FFunction.psi_weighted(1 / 14, 2.0, 5.0, base)}[kind]
    g = MetricGraph.chain(L)
    C = convolution_constant(F, g)
    Fm = F(g.dist)
    assert np.all(Fm @ Fm <= C * Fm * (1 + 1e-12))
    assert np.all(np.diff(F(np.arange(30.0))) <= 0)


def test_interaction_norm_zero_and_single_bond():
    g = MetricGraph.chain(2)
    F = FFunction.polynomial(1)
    assert interaction_norm(InteractionFamily(g, []), F, [0.0]) == 0.0
    h = 0.7
    fam = InteractionFamily(g, [Term.fixed((0, 1), h * np.kron(Z, Z))])
    assert interaction_norm(fam, F, [0.0]) == pytest.approx(4 * h)


def _brute_norm(fam, F, s_grid):
    g = fam.graph
    best = 0.0
    for x in g.sites:
        for y in g.sites:
            tot = sum(max(np.linalg.norm(t.block(s), 2) for s in s_grid)
                      for t in fam.terms if x in t.support and y in t.support)
            best = max(best, tot / F(g.d(x, y)))
    return best


def test_tfim_norm_matches_enumeration():
    fam = tfim_family(8, h_path=(1.0, 1.0))
    F = FFunction.exp_weighted(1.0, FFunction.polynomial(1))
    assert interaction_norm(fam, F, [0.0]) == pytest.approx(_brute_norm(fam, F, [0.0]), rel=1e-13)


@given(st.floats(-5, 5))
def test_norm_homogeneous(c):
    fam = tfim_family(5)
    F = FFunction.exp_weighted(1.0, FFunction.polynomial(1))
    grid = np.linspace(0, 1, 11)
    assert interaction_norm(fam.scaled(c), F, grid) == pytest.approx(abs(c) * interaction_norm(fam, F, grid),
                                                                      rel=1e-12, abs=1e-14)


def test_refinement_delta_reported():
    fam = tfim_family(4)
    F = FFunction.polynomial(1)
    val, delta = interaction_norm(fam, F, np.linspace(0, 1, 5), return_refinement=True)
    assert np.isfinite(val) and abs(delta) < 1e-12     # linear path: max sits on a grid point


def test_simple_bounds():
    fam = tfim_family(6)
    F = FFunction.exp_weighted(0.5, FFunction.polynomial(1))
    b = simple_bounds(fam, F, 0.3)
    assert b["max_site_sum"] <= b["site_bound"] * (1 + 1e-12)
    assert b["total_sum"] <= b["total_bound"] * (1 + 1e-12)


def test_d_interaction():
    static = tfim_family(3, h_path=(2.0, 2.0))
    assert all(not np.any(t.deriv(0.4)) for t in d_interaction(static).terms)
    g = MetricGraph.chain(2)
    V = np.kron(X, X)
    fam = InteractionFamily(g, [Term.scaled((0, 1), V, lambda s: s, lambda s: 1.0)])
    for s in (0.0, 0.5, 1.0):
        np.testing.assert_allclose(d_interaction(fam).terms[0].block(s), 2 * V)
    lin = tfim_family(3, h_path=(1.0, 2.0))
    field = [t for t in d_interaction(lin).terms if len(t.support) == 1]
    np.testing.assert_allclose(field[0].block(0.2), -X)


def _tail_quad(a, k, t):
    f = lambda x: x ** k * math.exp(-a * x / math.log(x) ** 2)
    total, lo = 0.0, t
    for _ in range(400):
        hi = 1.5 * lo
        total += quad(f, lo, hi, epsrel=1e-10, limit=200)[0]
        lo = hi
    return total


@pytest.mark.parametrize("a,k,t", [(2 / 7, 1, 600.0), (1.0, 0, math.e ** 4)])
def test_envelope_tail_examples(a, k, t):
    b = envelope_tail(a, k, t)
    assert b == pytest.approx((2 * k + 3) / a * t ** (2 * k + 2) * envelope_u(t, a), rel=1e-14)
    assert b >= _tail_quad(a, k, t)


def test_envelope_tail_precondition():
    # a t / ln^2 t = 0.975 < 2 here, so the certified form is refused; the bare formula still dominates.
    a, t = 2 / 7, math.e ** 4
    with pytest.raises(DomainError):
        envelope_tail(a, 0, t)
    assert 3 / a * t ** 2 * envelope_u(t, a) >= _tail_quad(a, 0, t)
    with pytest.raises(DomainError):
        envelope_tail(1.0, 0, 10.0)


def test_envelope_tail_sampled(rng):
    done = 0
    while done < 50:
        a = rng.uniform(0.2, 1.5)
        k = int(rng.integers(0, 4))
        t = math.exp(rng.uniform(4.0, 7.5))
        if a * t / math.log(t) ** 2 < 2 * k + 2:
            continue
        assert envelope_tail(a, k, t) >= _tail_quad(a, k, t)
        done += 1
