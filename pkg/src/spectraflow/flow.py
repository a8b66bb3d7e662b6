"""Generator D(s), the flow U(s) with -i dU/ds = D U, localized generators and the LPPL sweep."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .operators import LocalOperator, apply_left, conditional_expectation, embed, fatten, opnorm, pauli
from .spectrum import GapClosed, SpectralData, diagonalize, sector_gap, spectral_projection, track_sector
from .weight import WeightKernel, get_kernel

log = logging.getLogger(__name__)


class BandLimitError(ValueError):
    """Kernel γ exceeds the spectral gap of the tracked sector."""


class FlowConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------- generator

def to_eigenbasis(spec: SpectralData, A, volume=None, dims=2) -> np.ndarray:
    """V† A V for a matrix, a LocalOperator or a list of LocalOperators."""
    V = spec.vectors
    if isinstance(A, LocalOperator):
        A = [A]
    if isinstance(A, list):
        AV = np.zeros(V.shape, dtype=np.result_type(V, *[a.block for a in A])) if A else np.zeros_like(V)
        for a in A:
            AV += apply_left(a, volume, V, dims)
    else:
        AV = A @ V
    return V.conj().T @ AV


def multiplier_transform(spec: SpectralData, A, kernel: WeightKernel, volume=None, dims=2,
                         G: np.ndarray | None = None) -> np.ndarray:
    """M with  int W(t) τ_t(A) dt = -i M.  M is real antisymmetric when H and A are real symmetric.

    G, the multiplier matrix of spec.energies, may be passed in when transforming many operators.
    """
    At = to_eigenbasis(spec, A, volume, dims)
    if G is None:
        G = kernel.multiplier_matrix(spec.energies)
    V = spec.vectors
    return V @ (G * At) @ V.conj().T


def check_band_limit(spec: SpectralData, kernel: WeightKernel) -> None:
    if spec.sector is not None and kernel.gamma > spec.gap * (1 + 1e-12):
        raise BandLimitError(f"kernel gamma {kernel.gamma:.6g} exceeds spectral gap {spec.gap:.6g}")


def generator_D(spec: SpectralData, Hprime, kernel: WeightKernel, volume=None, dims=2) -> np.ndarray:
    """D = int W_γ(t) e^{itH} H' e^{-itH} dt; entries σ(E_k - E_j)(V†H'V)_jk in the eigenbasis."""
    check_band_limit(spec, kernel)
    return -1j * multiplier_transform(spec, Hprime, kernel, volume, dims)


def transform_local(spec: SpectralData, A: LocalOperator, kernel: WeightKernel, volume, dims=2) -> np.ndarray:
    """D_A = int W(t) τ_t(A) dt as a volume matrix."""
    return -1j * multiplier_transform(spec, A, kernel, volume, dims)


def _expi(M: np.ndarray, ds: float) -> np.ndarray:
    """exp(i ds D) with D = -iM, i.e. exp(ds M)."""
    return sla.expm(ds * M)


def projector_distance(Vs: np.ndarray, Q: np.ndarray) -> float:
    """‖P − P'‖ for P = Vs Vs†, P' = Q Q† (orthonormal columns, equal rank)."""
    a = np.linalg.norm(Q - Vs @ (Vs.conj().T @ Q), 2)
    b = np.linalg.norm(Vs - Q @ (Q.conj().T @ Vs), 2)
    return float(max(a, b))


# ---------------------------------------------------------------- flow integration

@dataclass
class FlowConfig:
    s_grid: np.ndarray
    gamma: float | None = None
    integrator: str = "midpoint-exponential"
    step_tolerance: float = 1e-7
    max_refinements: int = 4
    substeps: int = 1
    gap_margin: float = 0.95

    def __post_init__(self):
        self.s_grid = np.asarray(self.s_grid, dtype=float)
        if self.s_grid.ndim != 1 or self.s_grid.size < 1 or np.any(np.diff(self.s_grid) <= 0):
            raise ValueError("s_grid must be a strictly ascending 1-D grid")
        if self.integrator != "midpoint-exponential":
            raise ValueError(f"unknown integrator {self.integrator}")


@dataclass
class FlowResult:
    s_grid: np.ndarray
    unitaries: list
    transport_residuals: np.ndarray
    generator_norms: np.ndarray          # ‖D‖ at the midpoint of the step ending at s (nan at s_grid[0])
    gaps: np.ndarray
    gamma: float
    substeps: int
    sector: tuple[int, int]
    history: list = field(default_factory=list)

    def U(self, s: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.s_grid - s)))
        return self.unitaries[i]

    def rows(self):
        for i, s in enumerate(self.s_grid):
            yield s, self.gaps[i], self.transport_residuals[i], self.generator_norms[i]


def eval_points(s_grid: np.ndarray, substeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints of each substep, and the substep length per grid interval."""
    mids, lens = [], []
    for a, b in zip(s_grid[:-1], s_grid[1:]):
        h = (b - a) / substeps
        mids.extend(a + (np.arange(substeps) + 0.5) * h)
        lens.append(h)
    return np.asarray(mids), np.asarray(lens)


def scan_gaps(family, points: Sequence[float], sector, volume=None, gamma_min: float = 0.0) -> np.ndarray:
    """Gap of the tracked sector at each point (eigenvalues only), in the given order.

    Raises GapClosed at the first point whose gap is below gamma_min.
    """
    lo, hi = _sector(sector)
    out = []
    for s in points:
        E = lowest_eigenvalues(family.hamiltonian(s, volume), hi + 1)
        g = sector_gap(E, (lo, hi))
        if g < gamma_min:
            raise GapClosed(float(s), g, gamma_min)
        out.append(g)
    return np.asarray(out)


def lowest_eigenvalues(H: np.ndarray, k: int) -> np.ndarray:
    """The k lowest eigenvalues (all of them for small matrices); Lanczos above 512."""
    D = H.shape[0]
    if D <= 512 or k > D // 8:
        return sla.eigvalsh(H, check_finite=False)
    v0 = np.random.default_rng(D).standard_normal(D)
    try:
        E = eigsh(H, k=k, which="SA", v0=v0, tol=1e-13, ncv=max(2 * k + 1, 20), maxiter=200,
                  return_eigenvectors=False)
        return np.sort(E)
    except ArpackNoConvergence:
        return sla.eigvalsh(H, check_finite=False)


def flow_points(config: FlowConfig, extra_points=()) -> np.ndarray:
    mids, _ = eval_points(config.s_grid, config.substeps)
    return np.union1d(np.union1d(config.s_grid, mids), np.asarray(extra_points, dtype=float))


def choose_gamma(family, config: FlowConfig, sector=1, volume=None, extra_points=(),
                 gamma_min: float = 0.0) -> float:
    """config.gamma if set, else gap_margin × the minimum tracked gap over grid and midpoints."""
    if config.gamma is not None and gamma_min <= 0.0:
        return float(config.gamma)
    gaps = scan_gaps(family, flow_points(config, extra_points), sector, volume, gamma_min)
    if config.gamma is not None:
        return float(config.gamma)
    return float(config.gap_margin * gaps.min())


def _sector(sector) -> tuple[int, int]:
    if isinstance(sector, (int, np.integer)):
        return (0, int(sector))
    return tuple(sector)


def _spec_at(family, s, volume, sector, gamma_min):
    spec = diagonalize(family.hamiltonian(s, volume), s=s, check=False)
    return track_sector(spec, sector, gamma_min)


def _generator_at(family, spec, kernel, volume):
    check_band_limit(spec, kernel)
    terms = family.derivative_at(spec.s, volume)
    return multiplier_transform(spec, terms, kernel, volume, family.graph.local_dim)


def _sweep(family, s_grid, substeps, kernel, volume, sector, gamma_min, keep, spectra=None):
    mids, lens = eval_points(s_grid, substeps)
    spec0 = _spec_at(family, s_grid[0], volume, sector, gamma_min)
    D = spec0.dim
    real = spec0.is_real and all(not np.iscomplexobj(t.block) for t in family.derivative_at(s_grid[0], volume))
    U = np.eye(D) if real else np.eye(D, dtype=complex)
    lo, hi = spec0.sector
    V0 = spec0.vectors[:, lo:hi]
    res = [0.0]
    gaps = [spec0.gap]
    gnorm = [np.nan]
    Us = [U.copy()] if keep else []
    k = 0
    for i in range(len(s_grid) - 1):
        for _ in range(substeps):
            sp = _spec_at(family, mids[k], volume, sector, gamma_min)
            M = _generator_at(family, sp, kernel, volume)
            U = _expi(M, lens[i]) @ U
            if spectra is not None:
                spectra[float(mids[k])] = sp
            k += 1
        gnorm.append(opnorm(M, hermitian=False))
        spg = _spec_at(family, s_grid[i + 1], volume, sector, gamma_min)
        res.append(projector_distance(spg.vectors[:, lo:hi], U @ V0))
        gaps.append(spg.gap)
        if keep:
            Us.append(U.copy())
    if not keep:
        Us = [U]
    return Us, np.asarray(res), np.asarray(gnorm), np.asarray(gaps)


def integrate_flow(family, config: FlowConfig, sector=1, volume=None, gamma_min: float = 0.0,
                   keep_unitaries: bool = True, spectra: dict | None = None) -> FlowResult:
    """Midpoint-exponential integration of -i dU/ds = D(s)U, refined by halving until the
    transport residuals change by less than config.step_tolerance.

    If ``spectra`` is a dict it receives the midpoint spectra of the final sweep, keyed by s.
    """
    volume = family.sites if volume is None else tuple(volume)
    sector = _sector(sector)
    s_grid = config.s_grid
    gamma = choose_gamma(family, config, sector, volume, gamma_min=gamma_min)
    kernel = get_kernel(gamma)
    if family.is_static:
        D = int(np.prod(family.graph.dims(volume)))
        n = len(s_grid)
        E = sla.eigvalsh(family.hamiltonian(s_grid[0], volume))
        g = sector_gap(E, sector)
        if g < gamma_min:
            raise GapClosed(s_grid[0], g, gamma_min)
        return FlowResult(s_grid, [np.eye(D)] * (n if keep_unitaries else 1), np.zeros(n),
                          np.r_[np.nan, np.zeros(n - 1)], np.full(n, g), gamma, config.substeps, sector)
    m = config.substeps
    history = []
    prev = None
    for level in range(config.max_refinements + 1):
        if spectra is not None:
            spectra.clear()
        Us, res, gn, gaps = _sweep(family, s_grid, m, kernel, volume, sector, gamma_min, keep_unitaries, spectra)
        history.append((m, float(res.max())))
        log.info("flow substeps=%d max residual %.3e", m, res.max())
        if prev is not None and np.abs(res - prev).max() < config.step_tolerance:
            break
        if config.max_refinements == 0:
            break
        if level == config.max_refinements:
            raise FlowConvergenceError(f"transport residuals did not settle: history {history}")
        prev = res
        m *= 2
    return FlowResult(s_grid, Us, res, gn, gaps, gamma, m, sector, history)


# ---------------------------------------------------------------- localized generators

def localized_generator(spec: SpectralData, Hprime: LocalOperator, kernel: WeightKernel, R: float,
                        graph, volume=None) -> LocalOperator:
    """Π_{X_R}(D) for D generated by a local H' supported on X."""
    volume = tuple(graph.sites) if volume is None else tuple(volume)
    D = generator_D(spec, Hprime, kernel, volume, graph.local_dim)
    XR = fatten(Hprime.support, R, graph, within=volume)
    return conditional_expectation(D, volume, XR, graph.local_dim)


@dataclass
class LPPLRow:
    R: float
    support_size: int
    unitary_diff: float
    projector_residual: float
    observable_site: int | None
    observable_shift: float


def lppl_experiment(family, X: Sequence[int], R_list: Sequence[float], config: FlowConfig,
                    observable: str = "X", sector=1) -> tuple[list[LPPLRow], dict]:
    """Compare the full flow U(1) with flows V_R generated by Π_{X_R}(D(s)).

    The outside observable for radius R is a single-site Pauli on the nearest site outside X_R.
    """
    graph = family.graph
    volume = family.sites
    dims = graph.local_dim
    sector = _sector(sector)
    for t in family.derivative_at(config.s_grid[0]):
        if not set(t.support) <= set(X):
            raise ValueError("perturbation derivative is not supported on X")
    gamma = choose_gamma(family, config, sector)
    kernel = get_kernel(gamma)
    s_grid = config.s_grid
    mids, lens = eval_points(s_grid, config.substeps)
    spec0 = _spec_at(family, s_grid[0], volume, sector, 0.0)
    Dim = spec0.dim
    U = np.eye(Dim, dtype=spec0.vectors.dtype)
    supports = {R: fatten(X, R, graph, within=volume) for R in R_list}
    VR = {R: np.eye(int(np.prod(graph.dims(supports[R])))) for R in R_list}
    k = 0
    for i in range(len(s_grid) - 1):
        for _ in range(config.substeps):
            sp = _spec_at(family, mids[k], volume, sector, 0.0)
            M = _generator_at(family, sp, kernel, volume)
            U = _expi(M, lens[i]) @ U
            for R in R_list:
                blk = conditional_expectation(M, volume, supports[R], dims).block
                VR[R] = _expi(blk, lens[i]) @ VR[R]
            k += 1
    spec1 = _spec_at(family, s_grid[-1], volume, sector, 0.0)
    lo, hi = sector
    P0, P1 = spec0.vectors[:, lo:hi], spec1.vectors[:, lo:hi]
    nondeg = (hi - lo) == 1
    if not nondeg:
        warnings.warn("ground sector is degenerate; observable-shift columns omitted")
    rows = []
    for R in R_list:
        sup = supports[R]
        Vfull = embed(LocalOperator(sup, VR[R], graph.dims(sup)), volume, dims)
        udiff = opnorm(U - Vfull, hermitian=False)
        pres = projector_distance(P1, Vfull @ P0)
        site, shift = None, float("nan")
        outside = [x for x in volume if x not in sup]
        if nondeg and outside:
            site = min(outside, key=lambda x: (graph.set_distance([x], sup), x))
            A = pauli(observable, site)
            e1 = _expect(A, P1[:, 0], volume, dims)
            e0 = _expect(A, P0[:, 0], volume, dims)
            shift = abs(e1 - e0)
        rows.append(LPPLRow(float(R), len(sup), udiff, pres, site, shift))
    meta = {"gamma": gamma, "substeps": config.substeps}
    return rows, meta


def _expect(A: LocalOperator, psi: np.ndarray, volume, dims) -> float:
    return float(np.real(np.vdot(psi, apply_left(A, volume, psi[:, None], dims)[:, 0])))
