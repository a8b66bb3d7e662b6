import numpy as np
import pytest

from spectraflow.flow import FlowConfig, integrate_flow, multiplier_transform
from spectraflow.models import tfim_family
from spectraflow.operators import PAULI, LocalOperator, embed, opnorm
from spectraflow.quasilocal import (VolumeSequence, build_psi, delta_bound, delta_n, delta_sequence,
                                    flow_from_psi, lr_constants, lr_tau, reconstruction_residual,
                                    symmetry_defect, translation_defect)
from spectraflow.spectrum import diagonalize, track_sector
from spectraflow.weight import get_kernel


def _spec(fam, s=0.0):
    return track_sector(diagonalize(fam.hamiltonian(s)), 1)


def test_two_qubit_psi_supports():
    fam = tfim_family(2)
    spec = _spec(fam, 0.5)
    psi = build_psi(fam, [0.5], get_kernel(0.9 * spec.gap))
    assert set(psi.supports()) <= {(0,), (1,), (0, 1)}
    assert reconstruction_residual(psi, fam, 0, get_kernel(0.9 * spec.gap)) <= 1e-13


def test_delta_telescopes():
    fam = tfim_family(6, h_path=(2.0, 3.0))
    spec = _spec(fam, 0.3)
    k = get_kernel(0.9 * spec.gap)
    A = LocalOperator((2,), PAULI["X"])
    seq = delta_sequence(spec, A, k, fam.graph)
    total = sum(embed(d, fam.sites) for d in seq)
    np.testing.assert_allclose(total, multiplier_transform(spec, A, k, fam.sites), atol=1e-12)
    assert seq[0].support == (2,) and seq[1].support == (1, 2, 3)
    d = delta_n(spec, A, k, 20, fam.graph)
    assert not d.block.any()


def test_delta_bounds_hold():
    fam = tfim_family(8, h_path=(2.0, 3.0))
    spec = _spec(fam, 0.5)
    k = get_kernel(0.9 * spec.gap)
    const = lr_constants(fam)
    A = LocalOperator((4,), PAULI["X"])
    for n, d in enumerate(delta_sequence(spec, A, k, fam.graph)):
        assert opnorm(d.block, hermitian=False) <= delta_bound(1.0, 1, n, k, const) * (1 + 1e-9)


def test_psi_reconstruction_and_flow():
    fam = tfim_family(6)
    s_grid = np.linspace(0, 1, 9)
    res = integrate_flow(fam, FlowConfig(s_grid, max_refinements=0))
    mids = 0.5 * (s_grid[1:] + s_grid[:-1])
    k = get_kernel(res.gamma)
    psi = build_psi(fam, mids, k)
    for i in range(len(mids)):
        assert reconstruction_residual(psi, fam, i, k) <= 1e-12
    Us = flow_from_psi(psi, fam.sites, s_grid)
    np.testing.assert_allclose(Us[-1], res.unitaries[-1], atol=1e-10)
    with pytest.raises(ValueError):
        flow_from_psi(psi, fam.sites, np.linspace(0, 1, 5))


def test_psi_symmetries():
    fam = tfim_family(6, boundary="periodic", h_path=(2.0, 3.0))
    psi = build_psi(fam, [0.5], get_kernel(0.9 * _spec(fam, 0.5).gap))
    assert symmetry_defect(psi, PAULI["X"]) <= 1e-10
    assert translation_defect(psi) <= 1e-10


def test_lr_tau_within_envelope():
    fam = tfim_family(6, h_path=(2.0, 3.0))
    const = lr_constants(fam)
    A, B = LocalOperator((0,), PAULI["Z"]), LocalOperator((4,), PAULI["Z"])
    meas = lr_tau(fam, 0.5, [(A, B, 4)], np.linspace(0, 2, 5), const)
    assert meas.violations == 0 and meas.ceiling_violations == 0
    assert meas.values[0, 0] <= 1e-12


def test_volume_sequence_check():
    vs = VolumeSequence.centered_chains([2, 4, 6, 8])
    assert vs.check() == []
    # not nested, and the second volume sits flush against the first one's boundary
    assert any("contain" in e for e in VolumeSequence([(0, 1), (1, 2, 3)]).check())
    assert any("b1" in e for e in VolumeSequence([(0, 1), (0, 1, 2), (0, 1, 2, 3)]).check())


def test_psi_reuses_flow_spectra():
    fam = tfim_family(6)
    s_grid = np.linspace(0, 1, 5)
    spectra = {}
    res = integrate_flow(fam, FlowConfig(s_grid, max_refinements=0), spectra=spectra)
    assert len(spectra) == 4
    mids = 0.5 * (s_grid[1:] + s_grid[:-1])
    k = get_kernel(res.gamma)
    a = build_psi(fam, mids, k, spectra=spectra)
    b = build_psi(fam, mids, k)
    assert a.terms.keys() == b.terms.keys()
    for key in a.terms:
        np.testing.assert_allclose(a.terms[key].block, b.terms[key].block, atol=1e-12)
