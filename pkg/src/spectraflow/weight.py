"""Band-limited weight kernel w_γ, its tails W_γ and I_γ, and the multiplier σ(ω).

w_γ(t) = c ∏_{n≤N} (sin(a_n t)/(a_n t))^2 with a_n = a_1/(n ln^2 n) for n ≥ 2, a_1 fixed
by sum_{n≥1} a_n = γ/2 over the full series. The Fourier transform of w is supported in
[-2 sum_{n≤N} a_n, 2 sum_{n≤N} a_n], strictly inside [-γ, γ].

All integrals run on fixed Gauss-Legendre panels over [0, T_cut]; T_cut is chosen so the
product envelope c ∏ min(1, (a_n t)^-2) certifies the neglected tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import roots_legendre

from . import backend
from .decay import DomainError, envelope_tail, envelope_u

GL_NODES = 16
X_SMALL = 1e-3


def a_sequence(gamma: float, n_terms: int) -> tuple[np.ndarray, float]:
    """a_1..a_N and the full-series sum S = sum_{n≥1} a_n / a_1.

    The tail sum_{n>N} 1/(n ln^2 n) is evaluated by Euler-Maclaurin (error O(f'''(N))).
    """
    n = np.arange(2, n_terms + 1, dtype=float)
    head = 1.0 / (n * np.log(n) ** 2)
    M = float(n_terms + 1)
    lm = math.log(M)
    f = 1.0 / (M * lm ** 2)
    fp = -(lm + 2.0) / (M ** 2 * lm ** 3)
    S = 1.0 + math.fsum(head) + (1.0 / lm + f / 2.0 - fp / 12.0)
    a1 = gamma / 2.0 / S
    return a1 * np.concatenate([[1.0], head]), S


class WeightKernel:
    """Calibrated kernel for one gap value γ. Immutable after construction."""

    def __init__(self, gamma: float, n_terms: int = 10_000, panel_width: float | None = None,
                 tail_target: float = 1e-17, cheb_panels: int = 64, cheb_degree: int = 24):
        if gamma <= 0:
            raise DomainError("gamma must be positive")
        self.gamma = float(gamma)
        self.n_terms = int(n_terms)
        self.a_seq, self.series_sum = a_sequence(self.gamma, self.n_terms)
        self.a1 = float(self.a_seq[0])
        self.partial_sum = 2.0 * math.fsum(self.a_seq)
        self._a_desc = np.sort(self.a_seq)[::-1].copy()
        sq = self._a_desc ** 2
        self._a2_tail = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
        self._a4_tail = np.concatenate([np.cumsum((sq * sq)[::-1])[::-1], [0.0]])

        h = 2.0 / self.gamma if panel_width is None else float(panel_width)
        self.panel_width = h
        self.t_cut, tail_unnorm = self._choose_cutoff(h, tail_target)
        npan = int(round(self.t_cut / h))
        xg, wg = roots_legendre(GL_NODES)
        self._xg, self._wg = xg, wg
        self.edges = np.arange(npan + 1) * h
        nodes = (self.edges[:-1, None] + (xg[None, :] + 1.0) * h / 2.0).ravel()
        wts = np.tile(wg * h / 2.0, npan)
        prod = self.product(nodes)
        self.c_norm = 1.0 / (2.0 * float(np.dot(wts, prod)))
        self.tail_bound = self.c_norm * tail_unnorm
        self._nodes = nodes
        self._qw = wts * self.c_norm * prod           # quadrature weights times w
        pw = self._qw.reshape(npan, GL_NODES)
        px = (self._qw * nodes).reshape(npan, GL_NODES)
        # suffix sums: S0[p] = int_{e_p}^{T} w, S1[p] = int_{e_p}^{T} xi w
        self._S0 = np.concatenate([np.cumsum(pw.sum(1)[::-1])[::-1], [0.0]])
        self._S1 = np.concatenate([np.cumsum(px.sum(1)[::-1])[::-1], [0.0]])
        self.W_l1 = 2.0 * float(self._S1[0])
        self._build_multiplier_table(cheb_panels, cheb_degree)

    # ------------------------------------------------------------ product and envelope
    def product(self, t) -> np.ndarray:
        t = np.ascontiguousarray(np.abs(np.atleast_1d(np.asarray(t, dtype=float))))
        return backend.sinc2_product(t, self._a_desc, self._a2_tail, self._a4_tail, X_SMALL)

    def envelope(self, t) -> np.ndarray:
        """c ∏ min(1, (a_n t)^-2) ≥ w(t); non-increasing in |t|."""
        t = np.abs(np.atleast_1d(np.asarray(t, dtype=float)))
        c = getattr(self, "c_norm", 1.0)
        out = np.empty_like(t)
        for i, tt in enumerate(t):
            x = self._a_desc * tt
            big = x[x > 1.0]
            out[i] = c * math.exp(-2.0 * np.log(big).sum()) if big.size else c
        return out

    def _envelope_tail_unnorm(self, T: float) -> float:
        x = self._a_desc * T
        m = int((x > 1.0).sum())
        if m == 0:
            return math.inf
        env = math.exp(-2.0 * np.log(x[:m]).sum())
        return env * T / (2 * m - 1)

    def _choose_cutoff(self, h: float, target: float) -> tuple[float, float]:
        k = 8
        while True:
            T = k * h
            tail = self._envelope_tail_unnorm(T)
            if tail * self.gamma <= target:
                return T, tail
            k += 8

    # ------------------------------------------------------------ w, W, I
    def w(self, t):
        t = np.asarray(t, dtype=float)
        out = self.c_norm * self.product(t)
        return float(out[0]) if t.ndim == 0 else out.reshape(t.shape)

    def _tails(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(int_t^T w, int_t^T xi w) for 0 ≤ t."""
        t = np.atleast_1d(t)
        S0 = np.zeros_like(t)
        S1 = np.zeros_like(t)
        inside = t < self.t_cut
        if not inside.any():
            return S0, S1
        ti = t[inside]
        p = np.minimum((ti / self.panel_width).astype(np.int64), len(self.edges) - 2)
        e = self.edges[p + 1]
        half = (e - ti) / 2.0
        x = ti[:, None] + half[:, None] * (self._xg[None, :] + 1.0)
        wx = self.c_norm * self.product(x.ravel()).reshape(x.shape)
        q = half[:, None] * self._wg[None, :] * wx
        S0[inside] = q.sum(1) + self._S0[p + 1]
        S1[inside] = (q * x).sum(1) + self._S1[p + 1]
        return S0, S1

    def W(self, t):
        """int_t^inf w; odd extension for t < 0 with W(0+) = 1/2."""
        t = np.asarray(t, dtype=float)
        a = np.abs(np.atleast_1d(t))
        S0, _ = self._tails(a)
        out = np.sign(np.atleast_1d(t)) * S0
        out[np.atleast_1d(t) == 0] = 0.5
        return float(out[0]) if t.ndim == 0 else out.reshape(t.shape)

    def I(self, t):
        """int_t^inf W for t > 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("I_gamma is defined for t > 0")
        tt = np.atleast_1d(t)
        S0, S1 = self._tails(tt)
        out = S1 - tt * S0
        return float(out[0]) if t.ndim == 0 else out.reshape(t.shape)

    # ------------------------------------------------------------ multiplier
    def _g_direct(self, om: np.ndarray) -> np.ndarray:
        """g(ω) = (4/ω) int_0^inf w(t) sin^2(ωt/2) dt, so that σ(ω) = -i g(ω)."""
        om = np.atleast_1d(om)
        out = np.empty_like(om)
        for i, o in enumerate(om):
            out[i] = 4.0 / o * np.dot(self._qw, np.sin(0.5 * o * self._nodes) ** 2)
        return out

    def _build_multiplier_table(self, npan: int, deg: int) -> None:
        r = self.partial_sum
        k = np.arange(deg + 1)
        cheb = np.cos(np.pi * (k + 0.5) / (deg + 1))
        edges = np.linspace(0.0, r, npan + 1)
        coefs = np.empty((npan, deg + 1))
        for p in range(npan):
            lo, hi = edges[p], edges[p + 1]
            om = 0.5 * (lo + hi) + 0.5 * (hi - lo) * cheb
            coefs[p] = np.polynomial.chebyshev.chebfit(cheb, self._g_direct(om), deg)
        self._cheb = np.ascontiguousarray(coefs)

    def g(self, omega):
        om = np.asarray(omega, dtype=float)
        out = backend.multiplier_values(np.ascontiguousarray(np.atleast_1d(om).ravel()), self._cheb, self.partial_sum)
        return float(out[0]) if om.ndim == 0 else out.reshape(om.shape)

    def sigma(self, omega):
        """σ(ω) = int W(t) e^{-iωt} dt = (1 - ŵ(ω))/(iω); exactly -i/ω outside the support of ŵ."""
        return -1j * self.g(omega)

    def w_hat(self, omega):
        om = np.asarray(omega, dtype=float)
        return np.where(np.abs(om) >= self.partial_sum, 0.0, 1.0 - om * self.g(om))

    def multiplier_matrix(self, energies: np.ndarray) -> np.ndarray:
        """Real antisymmetric G with G[j,k] = g(E_k - E_j); σ(E_k - E_j) = -i G[j,k]."""
        E = np.ascontiguousarray(np.asarray(energies, dtype=float))
        return backend.multiplier_matrix(E, self._cheb, self.partial_sum)

    # ------------------------------------------------------------ bounds
    def decay_bound(self, t):
        """2(eγ)^2 t u_{2/7}(γt), valid for γt ≥ e^{1/√2}."""
        t = np.asarray(t, dtype=float)
        x = self.gamma * t
        if np.any(x < math.exp(1 / math.sqrt(2))):
            raise DomainError("decay bound needs γt ≥ e^{1/√2}")
        return 2.0 * (math.e * self.gamma) ** 2 * t * envelope_u(x, 2.0 / 7.0)

    def brackets(self) -> dict:
        g = self.gamma
        return {
            "a1": (g / 7.0 < self.a1 < g / 2.0),
            "c_norm": (g / (2 * math.pi) < self.c_norm < g / math.pi),
            "support": self.partial_sum < g,
        }

    def table(self, t) -> np.ndarray:
        """Rows (t, w, W, I) for plotting."""
        t = np.asarray(t, dtype=float)
        return np.column_stack([t, self.w(t), self.W(t), self.I(t)])


@lru_cache(maxsize=16)
def get_kernel(gamma: float, n_terms: int = 10_000) -> WeightKernel:
    return WeightKernel(float(gamma), int(n_terms))


# ---------------------------------------------------------------- bound functions

@dataclass(frozen=True)
class BoundFunctions:
    eta_star: float
    zeta_star: float
    K: float
    tail_integral: float
    checks: dict = field(default_factory=dict)

    def GW(self, eta):
        eta = np.asarray(eta, dtype=float)
        out = np.where(eta <= self.eta_star, 0.5, _log_poly_u(eta, 35.0, 4))
        return float(out) if out.ndim == 0 else out

    def GI(self, zeta, gamma: float = 1.0):
        zeta = np.asarray(zeta, dtype=float)
        out = np.where(zeta <= self.zeta_star, self.K / 2.0, _log_poly_u(zeta, 130.0, 10)) / gamma
        return float(out) if out.ndim == 0 else out


def _log_poly_u(x, const, power):
    """const e^2 x^power u_{2/7}(x), evaluated in logs (0 where x ≤ e)."""
    x = np.maximum(np.asarray(x, dtype=float), math.e)
    return np.exp(math.log(const) + 2.0 + power * np.log(x) - (2.0 / 7.0) * x / np.log(x) ** 2)


def _tail_integral(lo: float, k: int = 4, a: float = 2.0 / 7.0) -> float:
    """int_lo^inf x^k u_a(x) dx: quadrature to 50 lo, certified envelope tail beyond."""
    f = lambda x: math.exp(k * math.log(x) - a * x / math.log(x) ** 2)
    hi = 50.0 * lo
    pts = np.linspace(lo, hi, 41)
    body = math.fsum(quad(f, pts[i], pts[i + 1], epsabs=0, epsrel=1e-13, limit=200)[0] for i in range(40))
    return body + envelope_tail(a, k, hi)


@lru_cache(maxsize=1)
def reproduce_constants() -> BoundFunctions:
    """η*, ζ* as continuity roots of G^(W), G^(I), and K = η* + 70e^2 int_{η*}^inf η^4 u_{2/7}."""
    fW = lambda x: math.log(35.0) + 2.0 + 4.0 * math.log(x) - (2.0 / 7.0) * x / math.log(x) ** 2 - math.log(0.5)
    eta = brentq(fW, 1e3, 1e6, xtol=1e-12, rtol=4 * np.finfo(float).eps)
    J = _tail_integral(eta)
    K = eta + 70.0 * math.e ** 2 * J
    fI = lambda x: math.log(130.0) + 2.0 + 10.0 * math.log(x) - (2.0 / 7.0) * x / math.log(x) ** 2 - math.log(K / 2.0)
    zeta = brentq(fI, eta, 1e7, xtol=1e-12, rtol=4 * np.finfo(float).eps)
    checks = {
        "eta_star": 14250.0 < eta < 14251.0,
        "zeta_star": 36057.0 < zeta < 36058.0,
        "K": abs(K - 14708.0) <= 0.01 * 14708.0,
    }
    return BoundFunctions(eta, zeta, K, J, checks)


def bound_GW(eta):
    return reproduce_constants().GW(eta)


def bound_GI(zeta, gamma: float = 1.0):
    return reproduce_constants().GI(zeta, gamma)
