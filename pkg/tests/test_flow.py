import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectraflow.flow import (BandLimitError, FlowConfig, generator_D, integrate_flow, localized_generator,
                              lppl_experiment, multiplier_transform, projector_distance)
from spectraflow.models import qubit_family, qubit_ground_projector, local_perturbation_family, tfim_family
from spectraflow.operators import PAULI, LocalOperator, embed, opnorm
from spectraflow.spectrum import GapClosed, diagonalize, spectral_projection, track_sector
from spectraflow.weight import get_kernel

from conftest import random_hermitian


@pytest.fixture(scope="module")
def tfim6_flow():
    fam = tfim_family(6)
    return fam, integrate_flow(fam, FlowConfig(np.linspace(0, 1, 41), step_tolerance=1e-6))


def test_generator_matrix_elements(rng):
    H = np.diag([0.0, 1.5, 2.0, 4.0])
    Hp = random_hermitian(rng, 4)
    k = get_kernel(1.0)
    spec = track_sector(diagonalize(H), 1)
    D = generator_D(spec, Hp, k)
    E = spec.energies
    for j in range(4):
        for m in range(4):
            assert D[j, m] == pytest.approx(k.sigma(E[m] - E[j]) * Hp[j, m], abs=1e-13)
    np.testing.assert_allclose(D, D.conj().T, atol=1e-14)


def test_generator_block_offdiagonal_formula(rng):
    # outside the kernel support, P D Q = -i P H' Q /(E_Q - E_P) entrywise
    H = random_hermitian(rng, 12)
    spec = track_sector(diagonalize(H), 1)
    k = get_kernel(0.9 * spec.gap)
    Hp = random_hermitian(rng, 12)
    D = generator_D(spec, Hp, k)
    V, E = spec.vectors, spec.energies
    Dt = V.conj().T @ D @ V
    Ht = V.conj().T @ Hp @ V
    np.testing.assert_allclose(Dt[0, 1:], -1j * Ht[0, 1:] / (E[1:] - E[0]), atol=1e-10)


def test_band_limit_refusal():
    spec = track_sector(diagonalize(np.diag([0.0, 0.5, 3.0])), 1)
    with pytest.raises(BandLimitError):
        generator_D(spec, np.eye(3), get_kernel(1.0))


def test_static_family_gives_identity():
    fam = tfim_family(4, h_path=(2.0, 2.0))
    res = integrate_flow(fam, FlowConfig(np.linspace(0, 1, 5)))
    for U in res.unitaries:
        np.testing.assert_array_equal(U, np.eye(16))
    assert not res.transport_residuals.any()


def test_qubit_transport():
    fam = qubit_family(1.0, (0.0, 2.0))
    cfg = FlowConfig(np.linspace(0, 1, 201), step_tolerance=1e-6, max_refinements=3)
    res = integrate_flow(fam, cfg)
    P0 = qubit_ground_projector(1.0, 0.0)
    for s, U in zip(res.s_grid, res.unitaries):
        assert np.abs(U @ P0 @ U.conj().T - qubit_ground_projector(1.0, 2 * s)).max() <= 1e-6


def test_tfim_transport_and_unitarity(tfim6_flow):
    fam, res = tfim6_flow
    assert res.transport_residuals.max() <= 1e-5
    for U in res.unitaries[::10]:
        np.testing.assert_allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=1e-12)


def test_cocycle(tfim6_flow):
    fam, res = tfim6_flow
    # U(s,r) = U(s) U(r)^{-1}; the flow from r to s should be the same map
    r, s = 10, 30
    sub = integrate_flow(fam, FlowConfig(res.s_grid[r:s + 1], gamma=res.gamma, max_refinements=0,
                                         substeps=res.substeps))
    np.testing.assert_allclose(sub.unitaries[-1], res.unitaries[s] @ res.unitaries[r].T, atol=1e-10)


def test_gap_min_triggers():
    fam = tfim_family(6, h_path=(1.5, 0.3))
    with pytest.raises(GapClosed):
        integrate_flow(fam, FlowConfig(np.linspace(0, 1, 11), max_refinements=0), gamma_min=0.5)


def test_localized_generator_limits(rng):
    fam = tfim_family(5, h_path=(3.0, 3.0))
    spec = track_sector(diagonalize(fam.hamiltonian(0.0)), 1)
    k = get_kernel(0.9 * spec.gap)
    A = LocalOperator((2,), PAULI["X"])
    full = localized_generator(spec, A, k, 10, fam.graph)
    np.testing.assert_allclose(full.block, generator_D(spec, embed(A, fam.sites), k), atol=1e-12)
    errs = [opnorm(embed(localized_generator(spec, A, k, R, fam.graph), fam.sites) - full.block)
            for R in range(4)]
    assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))


def test_lppl_zero_perturbation():
    base = tfim_family(5, h_path=(3.0, 3.0))
    fam = local_perturbation_family(base, 0.0, (2,), 0.0 * PAULI["X"], ramp=1.0)
    rows, _ = lppl_experiment(fam, (2,), [0, 1], FlowConfig(np.linspace(0, 1, 5), gamma=1.0))
    for r in rows:
        assert r.unitary_diff <= 1e-14 and r.projector_residual <= 1e-12


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_multiplier_transform_real_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    H = random_hermitian(rng, 6).real
    H = H + H.T
    A = random_hermitian(rng, 6).real
    A = A + A.T
    spec = diagonalize(H)
    M = multiplier_transform(spec, A, get_kernel(0.5))
    assert not np.iscomplexobj(M)
    np.testing.assert_allclose(M, -M.T, atol=1e-12)


def test_projector_distance_matches_dense(rng):
    Q1 = np.linalg.qr(rng.standard_normal((8, 2)))[0]
    Q2 = np.linalg.qr(rng.standard_normal((8, 2)))[0]
    d = np.linalg.norm(Q1 @ Q1.T - Q2 @ Q2.T, 2)
    assert projector_distance(Q1, Q2) == pytest.approx(d, rel=1e-10)
