import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from spectraflow.decay import MetricGraph
from spectraflow.operators import (PAULI, LocalOperator, apply_left, approximation_defect, commutator_norm,
                                   conditional_expectation, embed, fatten, opnorm, pauli, pauli_string)

from conftest import random_hermitian

X, Y, Z, I2 = PAULI["X"], PAULI["Y"], PAULI["Z"], PAULI["I"]


def rand_op(rng, n):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def test_local_operator_validation():
    with pytest.raises(ValueError):
        LocalOperator((1, 0), np.eye(4))
    with pytest.raises(ValueError):
        LocalOperator((0,), np.eye(4))
    with pytest.raises(ValueError):
        LocalOperator((0,), np.array([[0, 1], [0, 0]]), hermitian=True)
    LocalOperator((0, 2), np.kron(Z, X), hermitian=True)


def test_embed_examples():
    np.testing.assert_array_equal(embed(LocalOperator((0, 1), np.eye(4)), (0, 1, 2)), np.eye(8))
    np.testing.assert_array_equal(embed(pauli("Z", 0), (0, 1)), np.diag([1, 1, -1, -1]))
    np.testing.assert_array_equal(embed(pauli("Z", 1), (0, 1)), np.diag([1, -1, 1, -1]))


def test_embed_noncontiguous_matches_kron():
    A = pauli_string({0: "X", 2: "Y"})
    np.testing.assert_allclose(embed(A, (0, 1, 2)), np.kron(np.kron(X, I2), Y))


def test_embed_isometry(rng):
    for _ in range(20):
        A = LocalOperator((1, 3), rand_op(rng, 4))
        assert opnorm(embed(A, (0, 1, 2, 3))) == pytest.approx(opnorm(A.block), rel=1e-12)


def test_embed_morphism(rng):
    vol = (0, 1, 2, 3)
    for _ in range(50):
        sup = tuple(sorted(rng.choice(4, size=2, replace=False)))
        A, B = rand_op(rng, 4), rand_op(rng, 4)
        eA = embed(LocalOperator(sup, A), vol)
        eB = embed(LocalOperator(sup, B), vol)
        np.testing.assert_allclose(embed(LocalOperator(sup, A @ B), vol), eA @ eB, atol=1e-12)
        np.testing.assert_allclose(embed(LocalOperator(sup, A.conj().T), vol), eA.conj().T, atol=1e-14)


def test_apply_left_matches_embed(rng):
    vol = (0, 1, 2, 3)
    M = rand_op(rng, 16)
    for sup in [(0,), (2,), (1, 3), (0, 2, 3)]:
        A = LocalOperator(sup, rand_op(rng, 2 ** len(sup)))
        np.testing.assert_allclose(apply_left(A, vol, M), embed(A, vol) @ M, atol=1e-12)


def test_relabel_reorders_legs():
    A = pauli_string({0: "X", 1: "Z"})
    B = A.relabel({0: 5, 1: 2})
    assert B.support == (2, 5)
    np.testing.assert_array_equal(B.block, np.kron(Z, X))


def test_conditional_expectation_examples(rng):
    Ap = rand_op(rng, 2)
    M = embed(LocalOperator((0,), Ap), (0, 1))
    np.testing.assert_allclose(conditional_expectation(M, (0, 1), (0,)).block, Ap, atol=1e-15)
    out = conditional_expectation(embed(pauli("Z", 1), (0, 1)), (0, 1), (0,))
    assert not np.any(out.block)
    R = rand_op(rng, 4)
    oracle = np.zeros((2, 2), complex)
    for a in range(2):
        for b in range(2):
            oracle[a, b] = sum(R[2 * a + j, 2 * b + j] for j in range(2)) / 2
    np.testing.assert_allclose(conditional_expectation(R, (0, 1), (0,)).block, oracle, atol=1e-15)


def test_conditional_expectation_projection(rng):
    vol = (0, 1, 2)
    for _ in range(100):
        M = rand_op(rng, 8)
        P = conditional_expectation(M, vol, (0, 2))
        assert opnorm(P.block) <= opnorm(M) * (1 + 1e-12)
        PP = conditional_expectation(embed(P, vol), vol, (0, 2))
        np.testing.assert_allclose(PP.block, P.block, atol=1e-13)


def test_conditional_expectation_tensor_consistency(rng):
    small, big = (1, 2, 3), (0, 1, 2, 3, 4)
    M = LocalOperator(small, rand_op(rng, 8))
    a = conditional_expectation(M.block, small, (2,))
    b = conditional_expectation(embed(M, big), big, (2,))
    np.testing.assert_allclose(a.block, b.block, atol=1e-12)


def test_fatten_examples():
    g = MetricGraph.chain(9)
    assert fatten((4,), 0, g) == (4,)
    assert fatten((4,), 2, g) == (2, 3, 4, 5, 6)
    assert fatten((4,), 20, g) == tuple(range(9))
    assert fatten((4,), 3, g, within=range(3, 9)) == (3, 4, 5, 6, 7)


@given(st.integers(0, 8), st.floats(0, 9), st.floats(0, 9))
def test_fatten_monotone(x, r1, r2):
    g = MetricGraph.chain(9)
    lo, hi = sorted((r1, r2))
    assert set(fatten((x,), lo, g)) <= set(fatten((x,), hi, g))


def test_commutator_norm_examples(rng):
    vol = (0, 1)
    A, B = embed(pauli("X", 0), vol), embed(pauli("Z", 1), vol)
    assert commutator_norm(A, B) <= 1e-12
    assert commutator_norm(X, Y) == pytest.approx(2.0)
    P, Q = rand_op(rng, 6), rand_op(rng, 6)
    assert commutator_norm(P, Q) == pytest.approx(np.linalg.svd(P @ Q - Q @ P, compute_uv=False)[0], rel=1e-12)
    with pytest.raises(ValueError):
        commutator_norm(np.eye(2), np.eye(4))


def test_opnorm_paths(rng):
    H = random_hermitian(rng, 700)
    assert opnorm(H) == pytest.approx(np.abs(np.linalg.eigvalsh(H)).max(), rel=1e-10)
    assert opnorm(1j * (H @ H.T - H.T @ H) / 50) == pytest.approx(
        np.linalg.norm((H @ H.T - H.T @ H) / 50, 2), rel=1e-9)
    G = rand_op(rng, 600)
    assert opnorm(G) == pytest.approx(np.linalg.norm(G, 2), rel=1e-10)
    assert opnorm(np.zeros((5, 5))) == 0.0


def test_opnorm_sees_all_symmetry_sectors(rng):
    # top eigenvalue sits in the odd sector of a global spin flip; the start vector must reach it
    L = 10
    D = 2 ** L
    idx = np.arange(D)
    P = np.zeros((D, D))
    P[idx, D - 1 - idx] = 1
    Qe, Qo = (np.eye(D) + P) / 2, (np.eye(D) - P) / 2
    A = random_hermitian(rng, D).real
    A = Qe @ A @ Qe + 3 * Qo @ A @ Qo
    assert opnorm(A, hermitian=True) == pytest.approx(np.abs(np.linalg.eigvalsh(A)).max(), rel=1e-10)


def test_approximation_defect_examples(rng):
    vol = (0, 1)
    M = embed(pauli("X", 0), vol)
    est = approximation_defect(M, vol, (0,), 10, rng)
    assert est.defect <= 1e-15
    M = embed(pauli("Z", 1), vol)
    est = approximation_defect(M, vol, (0,), 200, rng)
    assert est.defect == pytest.approx(1.0)
    assert commutator_norm(M, embed(pauli("X", 1), vol)) >= 1.0


def test_approximation_defect_random(rng):
    vol = (0, 1, 2)
    M = rand_op(rng, 8)
    est = approximation_defect(M, vol, (0, 1), 500, rng)
    assert est.defect <= est.epsilon + 3 * est.stderr


def test_haar_sampling_is_seeded():
    a = unitary_group.rvs(2, random_state=np.random.default_rng(3))
    b = unitary_group.rvs(2, random_state=np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_opnorm_paired_spectrum(rng):
    # i·(real antisymmetric) has eigenvalues in exact ±λ pairs
    A = rng.standard_normal((1024, 1024))
    M = A - A.T
    assert opnorm(M) == pytest.approx(np.abs(np.linalg.eigvalsh(1j * M)).max(), rel=1e-10)
    assert opnorm(1j * M, hermitian=True) == pytest.approx(opnorm(M), rel=1e-10)
