"""Exact diagonalization, sector tracking, spectral projections, Heisenberg evolution."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

EIG_RTOL = 1e-10


class GapClosed(RuntimeError):
    """The tracked sector touched the rest of the spectrum."""

    def __init__(self, s, gap, gamma_min):
        self.s, self.gap, self.gamma_min = s, gap, gamma_min
        super().__init__(f"gap closed at s={s}: gap {gap:.6g} < required {gamma_min:.6g}")


@dataclass(frozen=True)
class SpectralData:
    energies: np.ndarray
    vectors: np.ndarray
    sector: tuple[int, int] | None = None     # index range [lo, hi)
    s: float | None = None

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.vectors)

    @property
    def sector_dim(self) -> int:
        return 0 if self.sector is None else self.sector[1] - self.sector[0]

    @property
    def interval(self) -> tuple[float, float] | None:
        if self.sector is None:
            return None
        return float(self.energies[self.sector[0]]), float(self.energies[self.sector[1] - 1])

    @property
    def gap(self) -> float | None:
        if self.sector is None:
            return None
        return sector_gap(self.energies, self.sector)


def sector_gap(E: np.ndarray, sector: tuple[int, int]) -> float:
    lo, hi = sector
    below = E[lo] - E[lo - 1] if lo > 0 else np.inf
    above = E[hi] - E[hi - 1] if hi < E.size else np.inf
    return float(min(below, above))


def diagonalize(H: np.ndarray, s: float | None = None, check: bool = True) -> SpectralData:
    H = np.asarray(H)
    if check:
        scale = max(np.abs(H).max(), 1e-300)
        if np.abs(H - H.conj().T).max() > 1e-12 * scale:
            raise ValueError("Hamiltonian is not Hermitian")
    if np.iscomplexobj(H) and not np.abs(H.imag).any():
        H = H.real
    E, V = sla.eigh(H, driver="evd", check_finite=False)
    return SpectralData(E, V, None, s)


def residual(H: np.ndarray, spec: SpectralData) -> tuple[float, float]:
    """(‖HV − VE‖/‖H‖, ‖V†V − 1‖)."""
    V, E = spec.vectors, spec.energies
    nH = max(np.abs(E).max(), 1e-300)
    r = np.linalg.norm(H @ V - V * E[None, :], 2) / nH
    u = np.linalg.norm(V.conj().T @ V - np.eye(E.size), 2)
    return float(r), float(u)


def track_sector(spec: SpectralData, prev=1, gamma_min: float = 0.0) -> SpectralData:
    """Attach the sector continuing ``prev`` (an index range, a SpectralData, or k for the lowest k).

    Raises GapClosed when the distance to the complement spectrum is below gamma_min.
    """
    if isinstance(prev, SpectralData):
        sector = prev.sector
    elif isinstance(prev, (int, np.integer)):
        sector = (0, int(prev))
    else:
        sector = tuple(prev)
    if sector is None or not (0 <= sector[0] < sector[1] <= spec.dim):
        raise ValueError(f"invalid sector {sector}")
    gap = sector_gap(spec.energies, sector)
    tol = EIG_RTOL * max(1.0, np.abs(spec.energies).max())
    if gap < max(gamma_min, tol):
        raise GapClosed(spec.s, gap, gamma_min)
    return replace(spec, sector=sector)


def spectral_projection(spec: SpectralData) -> np.ndarray:
    lo, hi = spec.sector
    V = spec.vectors[:, lo:hi]
    return V @ V.conj().T


def heisenberg_evolve(spec: SpectralData, A: np.ndarray, t: float) -> np.ndarray:
    """e^{itH} A e^{-itH} computed in the eigenbasis."""
    V, E = spec.vectors, spec.energies
    At = V.conj().T @ A @ V
    ph = np.exp(1j * t * E)
    At = ph[:, None] * At * ph.conj()[None, :]
    return V @ At @ V.conj().T
