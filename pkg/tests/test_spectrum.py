import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectraflow.models import tfim_family
from spectraflow.operators import PAULI
from spectraflow.spectrum import (GapClosed, diagonalize, heisenberg_evolve, residual, spectral_projection,
                                  track_sector)

from conftest import random_hermitian

X, Y, Z = PAULI["X"], PAULI["Y"], PAULI["Z"]


def test_diagonalize_pauli_z():
    spec = diagonalize(Z)
    np.testing.assert_array_equal(spec.energies, [-1, 1])
    assert abs(spec.vectors[1, 0]) == 1.0


def test_two_site_tfim_charpoly():
    h = 1.0
    H = -np.kron(Z, Z) - h * (np.kron(X, np.eye(2)) + np.kron(np.eye(2), X))
    E = diagonalize(H).energies
    # H splits into flip-even {-2√(1+h²)... } blocks; roots of the characteristic polynomial
    oracle = np.sort(np.roots(np.poly(H)).real)
    np.testing.assert_allclose(E, oracle, atol=1e-12)
    np.testing.assert_allclose(E, np.sort([-np.sqrt(1 + 4 * h * h), -1, 1, np.sqrt(1 + 4 * h * h)]), atol=1e-12)


def test_residual_random(rng):
    H = random_hermitian(rng, 64)
    r, u = residual(H, diagonalize(H))
    assert r <= 1e-10 and u <= 1e-10
    with pytest.raises(ValueError):
        diagonalize(H + np.triu(np.ones((64, 64)), 1))


def test_tfim_gap_along_path():
    fam = tfim_family(8)
    for s in np.linspace(0, 1, 11):
        spec = track_sector(diagonalize(fam.hamiltonian(s)), 1)
        assert spec.gap > 0.9


def test_gap_closed_raised():
    fam = tfim_family(8, h_path=(1.5, 0.3))
    with pytest.raises(GapClosed) as ei:
        for s in np.linspace(0, 1, 11):
            track_sector(diagonalize(fam.hamiltonian(s), s=s), 1, gamma_min=0.5)
    assert ei.value.s is not None and ei.value.gap < 0.5


def test_degenerate_boundary_raises():
    spec = diagonalize(np.diag([0.0, 1.0, 1.0, 2.0]))
    with pytest.raises(GapClosed):
        track_sector(spec, 2)
    assert track_sector(spec, 3).sector == (0, 3)


def test_ground_sector_of_random(rng):
    H = random_hermitian(rng, 16)
    spec = track_sector(diagonalize(H), 1)
    assert spec.interval == (spec.energies[0], spec.energies[0])
    assert spec.gap == pytest.approx(spec.energies[1] - spec.energies[0])


def test_projection_examples(rng):
    P = spectral_projection(track_sector(diagonalize(Z), 1))
    np.testing.assert_allclose(P, np.diag([0, 1]))
    H = random_hermitian(rng, 20)
    spec = track_sector(diagonalize(H), 3)
    P = spectral_projection(spec)
    assert np.abs(P @ P - P).max() <= 1e-10
    assert np.abs(P - P.conj().T).max() <= 1e-10
    assert np.trace(P).real == pytest.approx(spec.sector_dim)


def test_heisenberg_examples(rng):
    spec = diagonalize(Z)
    np.testing.assert_allclose(heisenberg_evolve(spec, X, 0.0), X, atol=1e-15)
    np.testing.assert_allclose(heisenberg_evolve(spec, X, np.pi / 4), -Y, atol=1e-14)
    H = random_hermitian(rng, 8)
    spec = diagonalize(H)
    np.testing.assert_allclose(heisenberg_evolve(spec, H @ H, 3.1), H @ H, atol=1e-11)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_group_law_and_isometry(t, s):
    rng = np.random.default_rng(7)
    H = random_hermitian(rng, 8)
    A = random_hermitian(rng, 8)
    spec = diagonalize(H)
    lhs = heisenberg_evolve(spec, heisenberg_evolve(spec, A, s), t)
    np.testing.assert_allclose(lhs, heisenberg_evolve(spec, A, t + s), atol=1e-10)
    assert np.linalg.norm(lhs, 2) == pytest.approx(np.linalg.norm(A, 2), rel=1e-10)
