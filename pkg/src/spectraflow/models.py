"""Nearest-neighbour model families with analytic derivatives."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .decay import MetricGraph
from .interaction import InteractionFamily, Term
from .operators import PAULI, LocalOperator

X, Y, Z = PAULI["X"], PAULI["Y"], PAULI["Z"]
XX = np.kron(X, X)
YY = np.real(np.kron(Y, Y))
ZZ = np.kron(Z, Z)


@dataclass(frozen=True)
class Path:
    """Linear path p(s) = p0 + (p1 - p0) s."""

    p0: float
    p1: float

    def __call__(self, s):
        return self.p0 + (self.p1 - self.p0) * s

    def deriv(self, s):
        return self.p1 - self.p0

    @staticmethod
    def of(v) -> "Path":
        if isinstance(v, Path):
            return v
        if isinstance(v, (tuple, list)):
            return Path(float(v[0]), float(v[1]))
        return Path(float(v), float(v))

    @property
    def constant(self) -> bool:
        return self.p0 == self.p1


def _bonds(graph: MetricGraph, periodic: bool):
    L = len(graph)
    b = [(graph.sites[i], graph.sites[i + 1]) for i in range(L - 1)]
    if periodic and L > 2:
        b.append((graph.sites[0], graph.sites[-1]))
    return b


def _bond_op(op2, a, b):
    """Two-site block in canonical order for the ordered pair (a, b)."""
    if a < b:
        return (a, b), op2
    return (b, a), LocalOperator((0, 1), op2).relabel({0: 1, 1: 0}).block


def _field_term(x, op, path: Path, sign=-1.0):
    if path.constant:
        return Term.fixed((x,), sign * path.p0 * op)
    return Term.scaled((x,), op, lambda s: sign * path(s), lambda s: sign * path.deriv(s))


def tfim_family(L: int, boundary: str = "open", h_path=(1.5, 2.5), J: float = 1.0,
                start: int = 0) -> InteractionFamily:
    """−J σz σz on bonds, −h(s) σx on sites."""
    if L < 2:
        raise ValueError("L >= 2 required")
    periodic = boundary == "periodic"
    g = MetricGraph.chain(L, periodic=periodic, start=start)
    h = Path.of(h_path)
    terms = [Term.fixed(_bond_op(ZZ, a, b)[0], -J * ZZ) for a, b in _bonds(g, periodic)]
    terms += [_field_term(x, X, h) for x in g.sites]
    return InteractionFamily(g, terms, "tfim", {"L": L, "boundary": boundary, "h_path": (h.p0, h.p1), "J": J})


def xy_family(L: int, boundary: str = "open", anisotropy_path=(1.0, 1.0), field_path=(1.5, 2.5),
              start: int = 0) -> InteractionFamily:
    """−(1+g)/2 σxσx − (1−g)/2 σyσy on bonds, −h σz on sites."""
    if L < 2:
        raise ValueError("L >= 2 required")
    periodic = boundary == "periodic"
    gr = MetricGraph.chain(L, periodic=periodic, start=start)
    ga, h = Path.of(anisotropy_path), Path.of(field_path)
    terms = []
    for a, b in _bonds(gr, periodic):
        sup = (min(a, b), max(a, b))
        if ga.constant:
            terms.append(Term.fixed(sup, -(1 + ga.p0) / 2 * XX - (1 - ga.p0) / 2 * YY))
        else:
            terms.append(Term.general(sup, lambda s: -(1 + ga(s)) / 2 * XX - (1 - ga(s)) / 2 * YY,
                                      lambda s: -ga.deriv(s) / 2 * (XX - YY)))
    terms += [_field_term(x, Z, h) for x in gr.sites]
    return InteractionFamily(gr, terms, "xy_chain", {"L": L, "boundary": boundary})


def local_perturbation_family(base: InteractionFamily, s_star: float, X: Sequence[int], V: np.ndarray,
                              ramp: Callable[[float], float] | float = 1.0,
                              dramp: Callable[[float], float] | None = None) -> InteractionFamily:
    """H(s) = H_base(s*) + ramp(s) V with V supported on X. A float ramp means ramp(s) = amplitude·s."""
    V = np.asarray(V)
    if np.abs(V - V.conj().T).max() > 1e-12 * max(np.abs(V).max(), 1.0):
        raise ValueError("perturbation must be Hermitian")
    if not callable(ramp):
        amp = float(ramp)
        ramp, dramp = (lambda s: amp * s), (lambda s: amp)
    terms = [Term.fixed(t.support, t.block(s_star), t.dims) for t in base.terms]
    terms.append(Term.scaled(tuple(sorted(X)), V, ramp, dramp))
    return InteractionFamily(base.graph, terms, f"{base.name}+local", {**base.meta, "X": tuple(X)})


def volume_family(name: str, L: int, start: int = 0, **kw) -> InteractionFamily:
    if name == "tfim":
        return tfim_family(L, start=start, **kw)
    if name == "xy_chain":
        return xy_family(L, start=start, **kw)
    if name == "qubit":
        return qubit_family(**kw)
    raise ValueError(f"unknown model {name}")


def qubit_family(bz: float = 1.0, bx_path=(0.0, 2.0)) -> InteractionFamily:
    """Single spin bz σz + bx(s) σx; the ground projector is (1 − n̂·σ)/2 with n̂ ∝ (bx, 0, bz)."""
    g = MetricGraph.chain(1)
    bx = Path.of(bx_path)
    terms = [Term.fixed((0,), bz * Z), _field_term(0, X, bx, sign=1.0)]
    return InteractionFamily(g, terms, "qubit", {"bz": bz, "bx_path": (bx.p0, bx.p1)})


def qubit_ground_projector(bz: float, bx: float) -> np.ndarray:
    r = math.hypot(bx, bz)
    return 0.5 * (np.eye(2) - (bx * X + bz * Z) / r)
