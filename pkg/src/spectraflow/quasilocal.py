"""Telescoping decomposition of the flow generator into a quasi-local interaction Ψ,
Lieb-Robinson measurements, and nested-volume convergence probes.

Generators are handled in the form D = -iM; for real Hamiltonians M is real antisymmetric,
which halves memory and keeps every flow step real orthogonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .decay import FFunction, MetricGraph, convolution_constant, interaction_norm
from .flow import check_band_limit, multiplier_transform, _expi
from .operators import LocalOperator, apply_left, conditional_expectation, embed, fatten, opnorm
from .spectrum import SpectralData, diagonalize, heisenberg_evolve, track_sector
from .weight import WeightKernel

MU_PSI = 1.0 / 14.0


# ---------------------------------------------------------------- LR constants

@dataclass(frozen=True)
class LRConstants:
    """a, F, F_a = e^{-ar}F, ‖Φ‖_a, C_{F_a}, v_a = 2‖Φ‖_a C_{F_a}/a, K_a = 2/C_{F_a}, ‖F‖."""

    a: float
    base: FFunction
    Fa: FFunction
    phi_norm: float
    conv: float
    v: float
    K: float
    F_norm: float

    def tau_envelope(self, normA: float, normB: float, t: float, fsum: float) -> float:
        return self.K * normA * normB * math.exp(self.a * self.v * abs(t)) * fsum

    def G(self, n: int, kernel: WeightKernel) -> float:
        """G(n) = 4 I_γ(n/2v_a) + K_a‖F‖ e^{-an/2}/(a v_a); G(-1) = ‖W_γ‖₁."""
        if n < 0:
            return kernel.W_l1
        t = n / (2.0 * self.v)
        It = kernel.I(t) if t > 0 else kernel.W_l1 / 2.0
        return 4.0 * It + self.K * self.F_norm * math.exp(-self.a * n / 2.0) / (self.a * self.v)

    def f_psi(self, gamma: float, mu: float = MU_PSI) -> FFunction:
        return FFunction.psi_weighted(mu, gamma, self.v, self.base)


def lr_constants(family, a: float = 1.0, s_grid=None, graph: MetricGraph | None = None,
                 nu: float | None = None) -> LRConstants:
    graph = graph or family.graph
    s_grid = np.linspace(0, 1, 101) if s_grid is None else s_grid
    base = FFunction.polynomial(graph.ball_growth[1] if nu is None else nu)
    Fa = FFunction.exp_weighted(a, base)
    phi = interaction_norm(family, Fa, s_grid, graph)
    C = convolution_constant(Fa, graph)
    v = 2.0 * phi * C / a
    return LRConstants(a, base, Fa, phi, C, v, 2.0 / C, base.norm(graph))


# ---------------------------------------------------------------- Δⁿ

def delta_sequence(spec: SpectralData, A: LocalOperator, kernel: WeightKernel, graph: MetricGraph,
                   volume=None, G: np.ndarray | None = None) -> list[LocalOperator]:
    """[Δ⁰, Δ¹, …] in M-form (Δⁿ = -i·block) up to the first n with X_n = Λ; later terms vanish."""
    volume = tuple(graph.sites) if volume is None else tuple(volume)
    dims = graph.local_dim
    MA = multiplier_transform(spec, A, kernel, volume, dims, G)
    out = []
    prev = None
    n = 0
    while True:
        Xn = fatten(A.support, n, graph, within=volume)
        P = conditional_expectation(MA, volume, Xn, dims)
        blk = P.block if prev is None else P.block - embed(prev, Xn, dims)
        out.append(LocalOperator(Xn, blk, P.dims))
        prev = P
        if len(Xn) == len(volume):
            return out
        n += 1


def delta_n(spec, A: LocalOperator, kernel, n: int, graph, volume=None) -> LocalOperator:
    """Δⁿ(A) = Π_{X_n}(D_A) − Π_{X_{n−1}}(D_A) as a complex Hermitian LocalOperator."""
    seq = delta_sequence(spec, A, kernel, graph, volume)
    if n < len(seq):
        d = seq[n]
        return LocalOperator(d.support, -1j * d.block, d.dims)
    vol = tuple(graph.sites) if volume is None else tuple(volume)
    return LocalOperator(vol, np.zeros((seq[-1].dim,) * 2, dtype=complex), seq[-1].dims)


def delta_bound(normA: float, size_X: int, n: int, kernel: WeightKernel, const: LRConstants) -> float:
    """2‖A‖ min[‖W‖₁, |X| G(n−1)]."""
    return 2.0 * normA * min(kernel.W_l1, size_X * const.G(n - 1, kernel))


# ---------------------------------------------------------------- Ψ

@dataclass
class QuasiLocalInteraction:
    """Ψ(Z, s) = -i·terms[(Z, k)].block for s = s_points[k]."""

    s_points: np.ndarray
    volume: tuple[int, ...]
    graph: MetricGraph
    terms: dict
    norms: dict
    f_psi: FFunction | None = None
    norm_certificate: float = math.nan
    constants: LRConstants | None = None
    gamma: float = math.nan

    def term(self, Z, k: int) -> LocalOperator:
        t = self.terms[(tuple(Z), k)]
        return LocalOperator(t.support, -1j * t.block, t.dims)

    def supports(self) -> list[tuple[int, ...]]:
        return sorted({Z for Z, _ in self.norms}, key=lambda z: (len(z), z))

    def generator_M(self, k: int, sub_volume=None) -> np.ndarray:
        """Σ_{Z ⊆ Λ₀} M(Z, s_k) on Λ₀."""
        vol = self.volume if sub_volume is None else tuple(sub_volume)
        inside = set(vol)
        D = int(np.prod(self.graph.dims(vol)))
        keys = [(Z, kk) for (Z, kk) in self.terms if kk == k and set(Z) <= inside]
        dtype = np.result_type(float, *[self.terms[key].block for key in keys]) if keys else float
        M = np.zeros((D, D), dtype=dtype)
        for key in keys:
            M += embed(self.terms[key], vol, self.graph.local_dim)
        return M

    def sup_norms(self) -> dict:
        out: dict = {}
        for (Z, _), v in self.norms.items():
            out[Z] = max(out.get(Z, 0.0), v)
        return out

    def certify(self, F: FFunction) -> float:
        """max_{x,y} F(d(x,y))^{-1} Σ_{Z ∋ x,y} max_s ‖Ψ(Z,s)‖ over the volume."""
        g = self.graph.subgraph(self.volume)
        n = len(g)
        acc = np.zeros((n, n))
        for Z, v in self.sup_norms().items():
            idx = [g.index(x) for x in Z]
            acc[np.ix_(idx, idx)] += v
        return float((acc / np.atleast_2d(F(g.dist))).max())


def build_psi(family, s_points: Sequence[float], kernel: WeightKernel, volume=None, sector=1,
              constants: LRConstants | None = None, keep: bool | Callable = True,
              spectra: dict | None = None) -> QuasiLocalInteraction:
    """Group Δⁿ(Φ'_Y(s)) by Z = Y_n ∩ Λ and certify ‖Ψ‖_{F_Ψ}."""
    graph = family.graph
    volume = family.sites if volume is None else tuple(volume)
    s_points = np.asarray(s_points, dtype=float)
    keep_fn = keep if callable(keep) else (lambda Z: bool(keep))
    terms: dict = {}
    norms: dict = {}
    for k, s in enumerate(s_points):
        near = [x for x in (spectra or ()) if abs(x - s) <= 1e-12]
        if near:
            spec = track_sector(spectra[near[0]], sector)
        else:
            spec = track_sector(diagonalize(family.hamiltonian(s, volume), s=s, check=False), sector)
        check_band_limit(spec, kernel)
        G = kernel.multiplier_matrix(spec.energies)
        acc: dict = {}
        for A in family.derivative_at(s, volume):
            for d in delta_sequence(spec, A, kernel, graph, volume, G):
                Z = d.support
                acc[Z] = d.block if Z not in acc else acc[Z] + d.block
        for Z, blk in acc.items():
            op = LocalOperator(Z, blk, graph.dims(Z))
            norms[(Z, k)] = opnorm(blk)
            if keep_fn(Z):
                terms[(Z, k)] = op
    psi = QuasiLocalInteraction(s_points, volume, graph, terms, norms, gamma=kernel.gamma)
    if constants is not None:
        psi.constants = constants
        psi.f_psi = constants.f_psi(kernel.gamma)
        psi.norm_certificate = psi.certify(psi.f_psi)
    return psi


def reconstruction_residual(psi: QuasiLocalInteraction, family, k: int, kernel: WeightKernel, sector=1) -> float:
    """‖D − Σ_Z Ψ(Z, s_k)‖ / ‖D‖."""
    s = psi.s_points[k]
    spec = track_sector(diagonalize(family.hamiltonian(s, psi.volume), s=s, check=False), sector)
    M = multiplier_transform(spec, family.derivative_at(s, psi.volume), kernel, psi.volume, family.graph.local_dim)
    nD = opnorm(M, hermitian=False)
    if nD == 0:
        return opnorm(psi.generator_M(k), hermitian=False)
    return opnorm(M - psi.generator_M(k), hermitian=False) / nD


def flow_from_psi(psi: QuasiLocalInteraction, sub_volume, s_grid: Sequence[float]) -> list[np.ndarray]:
    """Propagators of Σ_{Z ⊆ Λ₀} Ψ(Z,s), with Ψ evaluated at the interval midpoints of s_grid
    (which must be psi.s_points)."""
    s_grid = np.asarray(s_grid, dtype=float)
    mids = 0.5 * (s_grid[1:] + s_grid[:-1])
    if mids.size != psi.s_points.size or np.abs(mids - psi.s_points).max() > 1e-12:
        raise ValueError("Ψ must be built at the midpoints of s_grid")
    vol = tuple(sub_volume)
    D = int(np.prod(psi.graph.dims(vol)))
    U = np.eye(D)
    out = [U]
    for k, ds in enumerate(np.diff(s_grid)):
        U = _expi(psi.generator_M(k, vol), ds) @ U
        out.append(U)
    return out


# ---------------------------------------------------------------- LR measurements

@dataclass
class LRMeasurement:
    kind: str
    pairs: list                 # (A, B, distance)
    grid: np.ndarray
    values: np.ndarray          # (n_pairs, n_grid) commutator norms
    envelope: np.ndarray
    ceiling: np.ndarray         # 2‖A‖‖B‖ per pair
    params: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return int((self.values > self.envelope * (1 + 1e-9) + 1e-12).sum())

    @property
    def ceiling_violations(self) -> int:
        return int((self.values > self.ceiling[:, None] * (1 + 1e-9) + 1e-12).sum())

    def rows(self):
        for i, (_, _, d) in enumerate(self.pairs):
            for j, x in enumerate(self.grid):
                yield d, x, self.values[i, j], self.envelope[i, j]


def _local_commutator_norm(M: np.ndarray, B: LocalOperator, volume, dims) -> float:
    """‖[M, B]‖ for Hermitian M and Hermitian local B."""
    BM = apply_left(B, volume, M, dims)
    C = BM.conj().T - BM          # M B − B M, anti-Hermitian
    if not np.any(C):
        return 0.0
    return opnorm(C, hermitian=False)


def _conjugate(V: np.ndarray, C: np.ndarray) -> np.ndarray:
    """V C V†; real V with complex C is split into real products (numpy would upcast V)."""
    if np.iscomplexobj(V) or not np.iscomplexobj(C):
        return V @ C @ V.conj().T
    re, im = np.ascontiguousarray(C.real), np.ascontiguousarray(C.imag)
    return (V @ re) @ V.T + 1j * ((V @ im) @ V.T)


def pair_fsum(F: FFunction, graph: MetricGraph, X, Y) -> float:
    return float(sum(F(graph.d(x, y)) for x in X for y in Y))


def _group_by_first(pairs) -> dict:
    groups: dict = {}
    for i, (A, _, _) in enumerate(pairs):
        groups.setdefault((A.support, A.block.tobytes()), []).append(i)
    return groups


def lr_tau(family, s: float, pairs, t_grid, constants: LRConstants, volume=None) -> LRMeasurement:
    """‖[τ_t(A), B]‖ under H(s) vs K_a‖A‖‖B‖e^{a v_a t} Σ F_a(d(x,y))."""
    graph = family.graph
    volume = family.sites if volume is None else tuple(volume)
    dims = graph.local_dim
    spec = diagonalize(family.hamiltonian(s, volume), s=s, check=False)
    V, E = spec.vectors, spec.energies
    t_grid = np.asarray(t_grid, dtype=float)
    vals = np.zeros((len(pairs), t_grid.size))
    env = np.zeros_like(vals)
    ceil = np.zeros(len(pairs))
    for i, (A, B, _) in enumerate(pairs):
        nA, nB = A.norm(), B.norm()
        ceil[i] = 2 * nA * nB
        fs = pair_fsum(constants.Fa, graph, A.support, B.support)
        env[i] = [constants.tau_envelope(nA, nB, t, fs) for t in t_grid]
    for idx in _group_by_first(pairs).values():
        A = pairs[idx[0]][0]
        At = V.conj().T @ apply_left(A, volume, V, dims)
        for j, t in enumerate(t_grid):
            ph = np.exp(1j * t * E)
            Mt = _conjugate(V, ph[:, None] * At * ph.conj()[None, :])
            for i in idx:
                vals[i, j] = _local_commutator_norm(Mt, pairs[i][1], volume, dims)
    return LRMeasurement("tau", list(pairs), t_grid, vals, env, ceil,
                         {"a": constants.a, "v": constants.v, "K": constants.K, "phi_norm": constants.phi_norm,
                          "conv": constants.conv, "s": s})


def alpha_envelope(psi: QuasiLocalInteraction, s: float, fsum: float, conv: float) -> float:
    """min[1, g(s) Σ F_Ψ] with C_Ψ g(s) = e^{2‖Ψ‖ C_Ψ s} − 1."""
    g = math.expm1(2.0 * psi.norm_certificate * conv * abs(s)) / conv
    return min(1.0, g * fsum)


def lr_alpha(psi: QuasiLocalInteraction, unitaries: Sequence[np.ndarray], s_grid, pairs) -> LRMeasurement:
    """‖[α_s(A), B]‖ with α_s(A) = U(s)* A U(s) vs 2‖A‖‖B‖ min[1, g(s) Σ F_Ψ(d(x,y))]."""
    graph = psi.graph.subgraph(psi.volume)
    volume = psi.volume
    dims = graph.local_dim
    conv = convolution_constant(psi.f_psi, graph)
    s_grid = np.asarray(s_grid, dtype=float)
    vals = np.zeros((len(pairs), s_grid.size))
    env = np.zeros_like(vals)
    ceil = np.zeros(len(pairs))
    for i, (A, B, _) in enumerate(pairs):
        nA, nB = A.norm(), B.norm()
        ceil[i] = 2 * nA * nB
        fs = pair_fsum(psi.f_psi, graph, A.support, B.support)
        env[i] = [2 * nA * nB * alpha_envelope(psi, s, fs, conv) for s in s_grid]
    for idx in _group_by_first(pairs).values():
        A = pairs[idx[0]][0]
        for j, U in enumerate(unitaries):
            Ms = alpha_s(U, A, volume, dims)
            for i in idx:
                vals[i, j] = _local_commutator_norm(Ms, pairs[i][1], volume, dims)
    return LRMeasurement("alpha", list(pairs), s_grid, vals, env, ceil,
                         {"norm_certificate": psi.norm_certificate, "conv_psi": conv, "gamma": psi.gamma})


def lr_tau_fit_K(meas: LRMeasurement, constants: LRConstants, graph, unit_norms=True) -> float:
    """Tightest K with values ≤ K ‖A‖‖B‖ e^{a v t} Σ F_a over the measured grid."""
    best = 0.0
    for i, (A, B, _) in enumerate(meas.pairs):
        fs = pair_fsum(constants.Fa, graph, A.support, B.support)
        base = A.norm() * B.norm() * fs * np.exp(constants.a * constants.v * np.abs(meas.grid))
        best = max(best, float((meas.values[i] / base).max()))
    return best


# ---------------------------------------------------------------- volume sequences

@dataclass
class VolumeSequence:
    """Nested intervals of Z (metric |x−y|); complements are taken in Z."""

    volumes: list
    b1: float = 1.0
    b2: float = 4.0
    p: float = 1.0

    @staticmethod
    def centered_chains(lengths: Sequence[int]) -> "VolumeSequence":
        vols = [tuple(range(-(L // 2), L - L // 2)) for L in lengths]
        return VolumeSequence(vols)

    @staticmethod
    def dist_to_complement(X, volume) -> float:
        lo, hi = min(volume) - 1, max(volume) + 1
        return float(min(min(x - lo, hi - x) for x in X))

    def check(self) -> list[str]:
        errs = []
        for m in range(len(self.volumes)):
            if m and not set(self.volumes[m - 1]) < set(self.volumes[m]):
                errs.append(f"volume {m} does not strictly contain volume {m - 1}")
            n_idx = m + 1
            if len(self.volumes[m]) > self.b2 * n_idx ** self.p:
                errs.append(f"|Λ_{n_idx}| = {len(self.volumes[m])} exceeds b2 n^p")
            for n in range(m + 1, len(self.volumes)):
                if self.dist_to_complement(self.volumes[m], self.volumes[n]) < self.b1 * (n - m):
                    errs.append(f"d(Λ_{m}, Λ_{n}^c) < b1 (n−m)")
        return errs


def alpha_s(U: np.ndarray, A: LocalOperator, volume, dims=2) -> np.ndarray:
    return U.conj().T @ apply_left(A, volume, U, dims)


def psi_boundary_differences(psi_small: QuasiLocalInteraction, psi_big: QuasiLocalInteraction) -> dict:
    """max over Z and s of ‖Ψ_big(Z,s) − Ψ_small(Z,s)‖ grouped by d(Z, Λ_small^c)."""
    out: dict = {}
    dims = psi_small.graph.local_dim
    for (Z, k), t in psi_small.terms.items():
        d = VolumeSequence.dist_to_complement(Z, psi_small.volume)
        other = psi_big.terms.get((Z, k))
        diff = t.block - (other.block if other is not None else 0.0)
        v = opnorm(diff) if np.any(diff) else 0.0
        out[d] = max(out.get(d, 0.0), v)
    return dict(sorted(out.items()))


# ---------------------------------------------------------------- symmetries

def symmetry_defect(psi: QuasiLocalInteraction, local_op: np.ndarray) -> float:
    """max over terms of ‖[Ψ(Z,s), ⊗_{x∈Z} u]‖ for a single-site symmetry u."""
    worst = 0.0
    for (Z, _), t in psi.terms.items():
        P = np.ones((1, 1))
        for _ in Z:
            P = np.kron(P, local_op)
        C = t.block @ P - P @ t.block
        worst = max(worst, opnorm(C, hermitian=False) if np.any(C) else 0.0)
    return worst


def translation_defect(psi: QuasiLocalInteraction, shift: int = 1) -> float:
    """max over Z of ‖Ψ(Z+shift, s) − shifted Ψ(Z, s)‖ on a periodic chain."""
    L = len(psi.volume)
    sites = list(psi.volume)
    mapping = {x: sites[(i + shift) % L] for i, x in enumerate(sites)}
    worst = 0.0
    for (Z, k), t in psi.terms.items():
        moved = t.relabel(mapping)
        other = psi.terms.get((moved.support, k))
        diff = moved.block - (other.block if other is not None else 0.0)
        worst = max(worst, opnorm(diff, hermitian=False) if np.any(diff) else 0.0)
    return worst
