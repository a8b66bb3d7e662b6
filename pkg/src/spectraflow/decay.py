"""Metric graphs, F-functions, sub-exponential envelopes and interaction norms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta


class DomainError(ValueError):
    pass


# ---------------------------------------------------------------- graphs

class MetricGraph:
    """Finite set of integer-labelled sites with a metric and ball-growth data."""

    def __init__(self, sites: Sequence[int], dist: np.ndarray, local_dim=2,
                 ball_growth: tuple[float, float] = (2.0, 1.0), check: bool = True):
        self.sites = [int(x) for x in sites]
        if self.sites != sorted(set(self.sites)):
            raise ValueError("site labels must be strictly ascending integers")
        self.dist = np.asarray(dist, dtype=float)
        n = len(self.sites)
        if self.dist.shape != (n, n):
            raise ValueError("distance matrix shape does not match the site list")
        if isinstance(local_dim, int):
            local_dim = {x: local_dim for x in self.sites}
        self.local_dim = {int(k): int(v) for k, v in dict(local_dim).items()}
        self.ball_growth = (float(ball_growth[0]), float(ball_growth[1]))
        self._pos = {x: i for i, x in enumerate(self.sites)}
        if check:
            self.check()

    # constructors
    @classmethod
    def chain(cls, L: int, periodic: bool = False, start: int = 0, local_dim: int = 2) -> "MetricGraph":
        x = np.arange(L)
        d = np.abs(x[:, None] - x[None, :]).astype(float)
        if periodic:
            d = np.minimum(d, L - d)
        return cls(range(start, start + L), d, local_dim, ball_growth=(3.0, 1.0))

    @classmethod
    def grid(cls, Lx: int, Ly: int, local_dim: int = 2) -> "MetricGraph":
        ij = np.array([(i, j) for i in range(Lx) for j in range(Ly)])
        d = np.abs(ij[:, None, :] - ij[None, :, :]).sum(-1).astype(float)
        return cls(range(Lx * Ly), d, local_dim, ball_growth=(5.0, 2.0))

    def subgraph(self, sites: Sequence[int]) -> "MetricGraph":
        sites = sorted(set(int(x) for x in sites))
        idx = [self.index(x) for x in sites]
        return MetricGraph(sites, self.dist[np.ix_(idx, idx)], {x: self.local_dim[x] for x in sites},
                           self.ball_growth, check=False)

    def index(self, x: int) -> int:
        try:
            return self._pos[int(x)]
        except KeyError:
            raise ValueError(f"site {x} not in graph") from None

    def d(self, x: int, y: int) -> float:
        return float(self.dist[self.index(x), self.index(y)])

    def set_distance(self, X: Sequence[int], Y: Sequence[int]) -> float:
        if not X or not Y:
            return math.inf
        ix = [self.index(x) for x in X]
        iy = [self.index(y) for y in Y]
        return float(self.dist[np.ix_(ix, iy)].min())

    def dims(self, sites: Sequence[int] | None = None) -> tuple[int, ...]:
        sites = self.sites if sites is None else sites
        return tuple(self.local_dim[x] for x in sites)

    @property
    def diam(self) -> float:
        return float(self.dist.max()) if len(self.sites) else 0.0

    def __len__(self):
        return len(self.sites)

    def check(self) -> None:
        d = self.dist
        if np.any(np.diag(d) != 0) or np.any(d < 0) or not np.array_equal(d, d.T):
            raise ValueError("distance matrix must be symmetric, nonnegative with zero diagonal")
        # triangle inequality: d(x,z) <= d(x,y) + d(y,z) for all triples
        n = len(d)
        for y in range(n):
            if np.any(d > d[:, [y]] + d[[y], :] + 1e-12):
                raise ValueError("triangle inequality violated")
        kappa, nu = self.ball_growth
        for r in range(1, int(math.ceil(self.diam)) + 1):
            if (d <= r).sum(axis=1).max() > kappa * r ** nu + 1e-12:
                raise ValueError(f"ball growth |B_r| <= {kappa} r^{nu} fails at r={r}")


# ---------------------------------------------------------------- F-functions

def f_polynomial(r, nu: float):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("distance must be nonnegative")
    if nu <= 0:
        raise DomainError("nu must be positive")
    out = (1.0 + r) ** (-(nu + 1.0))
    return float(out) if out.ndim == 0 else out


def envelope_u(eta, a: float):
    """u_a(eta) = exp(-a eta / ln^2 eta), eta > 1."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 1):
        raise DomainError("u_a needs eta > 1")
    out = np.exp(-a * eta / np.log(eta) ** 2)
    return float(out) if out.ndim == 0 else out


def u_flat(x, mu: float):
    """u_mu, frozen at its value at e^2 for arguments below e^2 (non-increasing on [0, inf))."""
    x = np.maximum(np.asarray(x, dtype=float), math.e ** 2)
    out = np.exp(-mu * x / np.log(x) ** 2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FFunction:
    """F(r) of one of three kinds; ``base`` is the underlying polynomial F for weighted kinds."""

    kind: str
    params: tuple
    base: "FFunction | None" = None

    @staticmethod
    def polynomial(nu: float) -> "FFunction":
        return FFunction("polynomial", (float(nu),))

    @staticmethod
    def exp_weighted(a: float, base: "FFunction") -> "FFunction":
        if a < 0:
            raise DomainError("decay rate must be nonnegative")
        return FFunction("exp_weighted", (float(a),), base)

    @staticmethod
    def psi_weighted(mu: float, gamma: float, v: float, base: "FFunction") -> "FFunction":
        return FFunction("psi_weighted", (float(mu), float(gamma), float(v)), base)

    def __call__(self, r):
        if self.kind == "polynomial":
            return f_polynomial(r, self.params[0])
        if self.kind == "exp_weighted":
            return f_weighted(r, self.params[0], self.base)
        mu, gamma, v = self.params
        x = gamma * np.asarray(r, dtype=float) / (8.0 * v)
        out = u_flat(x, mu) * self.base(x)
        return float(out) if np.ndim(out) == 0 else out

    def norm(self, graph: MetricGraph) -> float:
        """‖F‖ = max_x sum_y F(d(x,y))."""
        return float(self(graph.dist).sum(axis=1).max())

    def conv_const(self, graph: MetricGraph) -> float:
        return convolution_constant(self, graph)


def f_weighted(r, a: float, base: FFunction):
    if a < 0:
        raise DomainError("decay rate must be nonnegative")
    out = np.exp(-a * np.asarray(r, dtype=float)) * base(r)
    return float(out) if np.ndim(out) == 0 else out


def convolution_constant(F: FFunction, graph: MetricGraph) -> float:
    """Smallest C with sum_z F(d(x,z))F(d(z,y)) <= C F(d(x,y)) over all pairs of the graph."""
    Fm = F(graph.dist)
    Fm = np.atleast_2d(Fm)
    return float(((Fm @ Fm) / Fm).max())


def chain_conv_bound(nu: float) -> float:
    """Analytic convolution constant on Z for F=(1+r)^-(nu+1): 2^(nu+1) sum_x F(|x|)."""
    return float(2.0 ** (nu + 1) * (2.0 * zeta(nu + 1.0) - 1.0))


def chain_conv_bound_truncated(nu: float, M: int) -> tuple[float, float]:
    """The same bound summed to |x| <= M, with the integral tail estimate added."""
    x = np.arange(1, M + 1)
    s = 1.0 + 2.0 * np.sum((1.0 + x) ** (-(nu + 1.0)))
    tail = 2.0 * (1.0 + M) ** (-nu) / nu
    return float(2.0 ** (nu + 1) * (s + tail)), float(2.0 ** (nu + 1) * tail)


# ---------------------------------------------------------------- interaction norms

def interaction_norm(family, F: FFunction, s_grid: Sequence[float], graph: MetricGraph | None = None,
                     return_refinement: bool = False):
    """max_{x,y} F(d(x,y))^-1 sum_{Z ∋ x,y} max_s ‖Φ_Z(s)‖."""
    graph = graph or family.graph
    s_grid = np.asarray(s_grid, dtype=float)
    val = _norm_on_grid(family, F, s_grid, graph)
    if not return_refinement:
        return val
    fine = np.union1d(s_grid, 0.5 * (s_grid[1:] + s_grid[:-1])) if s_grid.size > 1 else s_grid
    return val, _norm_on_grid(family, F, fine, graph) - val


def _norm_on_grid(family, F, s_grid, graph) -> float:
    if not family.terms:
        return 0.0
    n = len(graph)
    acc = np.zeros((n, n))
    for term, nrm in zip(family.terms, family.term_sup_norms(s_grid)):
        if nrm == 0.0:
            continue
        idx = [graph.index(x) for x in term.support]
        acc[np.ix_(idx, idx)] += nrm
    Fm = np.atleast_2d(F(graph.dist))
    return float((acc / Fm).max())


def simple_bounds(family, F: FFunction, s: float, graph: MetricGraph | None = None) -> dict:
    """Both sides of  sum_{X∋x}‖Φ_X‖ <= F(0)‖Φ‖_F  and  sum_{X⊂Λ}‖Φ_X‖ <= F(0)‖Φ‖_F|Λ|."""
    graph = graph or family.graph
    norms = family.term_sup_norms([s])
    per_site = {x: 0.0 for x in graph.sites}
    for term, nrm in zip(family.terms, norms):
        for x in term.support:
            per_site[x] += nrm
    phi = interaction_norm(family, F, [s], graph)
    return {
        "max_site_sum": max(per_site.values()) if per_site else 0.0,
        "site_bound": F(0.0) * phi,
        "total_sum": float(np.sum(norms)),
        "total_bound": F(0.0) * phi * len(graph),
    }


def d_interaction(family):
    """The family X -> |X| Φ'_X(s)."""
    return family.d_family()


# ---------------------------------------------------------------- tails of u_a

def envelope_tail(a: float, k: int, t: float) -> float:
    """Certified upper bound for the integral of eta^k u_a(eta) over [t, inf)."""
    if t < math.e ** 4:
        raise DomainError(f"envelope tail needs t >= e^4, got {t}")
    if a * t / math.log(t) ** 2 < 2 * k + 2:
        raise DomainError("envelope tail needs a t / ln^2 t >= 2k + 2")
    return (2 * k + 3) / a * t ** (2 * k + 2) * envelope_u(t, a)
