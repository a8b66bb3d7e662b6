"""s-parametrized interactions: a finite list of terms Φ_X(s) on a metric graph."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .decay import MetricGraph
from .operators import LocalOperator, apply_left, embed, opnorm

FD_STEP = 1e-6


class DerivativeError(ValueError):
    pass


def _zero():
    return lambda s: 0.0


@dataclass(frozen=True)
class Term:
    """Φ_X(s) = coeff(s)·op, or a general callable block(s)."""

    support: tuple[int, ...]
    op: np.ndarray | None = None
    coeff: Callable[[float], float] | None = None
    dcoeff: Callable[[float], float] | None = None
    block_fn: Callable[[float], np.ndarray] | None = None
    deriv_fn: Callable[[float], np.ndarray] | None = None
    dims: tuple[int, ...] = ()
    static: bool = False

    @staticmethod
    def fixed(support, op, dims=()) -> "Term":
        return Term(tuple(support), np.asarray(op), lambda s: 1.0, lambda s: 0.0, dims=tuple(dims), static=True)

    @staticmethod
    def scaled(support, op, coeff, dcoeff=None, dims=()) -> "Term":
        return Term(tuple(support), np.asarray(op), coeff, dcoeff, dims=tuple(dims))

    @staticmethod
    def general(support, block_fn, deriv_fn=None, dims=()) -> "Term":
        return Term(tuple(support), block_fn=block_fn, deriv_fn=deriv_fn, dims=tuple(dims))

    def block(self, s: float) -> np.ndarray:
        if self.block_fn is not None:
            return np.asarray(self.block_fn(s))
        return self.coeff(s) * self.op

    def deriv(self, s: float) -> np.ndarray:
        if self.static:
            return np.zeros_like(self.op)
        if self.op is not None:
            if self.dcoeff is not None:
                return self.dcoeff(s) * self.op
            return _central_diff(lambda u: np.asarray(self.coeff(u), dtype=float), s) * self.op
        if self.deriv_fn is not None:
            return np.asarray(self.deriv_fn(s))
        if self.block_fn is None:
            raise DerivativeError("term has no derivative data")
        return _central_diff(self.block, s)

    def local(self, s: float) -> LocalOperator:
        return LocalOperator(self.support, self.block(s), self.dims)

    def local_deriv(self, s: float) -> LocalOperator:
        return LocalOperator(self.support, self.deriv(s), self.dims)

    def sup_norm(self, s_grid) -> float:
        if self.op is not None:
            c = max(abs(float(self.coeff(s))) for s in s_grid)
            return c * opnorm(self.op) if c else 0.0
        return max(opnorm(self.block(s)) for s in s_grid)

    def relabel(self, mapping) -> "Term":
        """Same term on new site labels (legs reordered for the new canonical order)."""
        if self.op is not None:
            new = LocalOperator(self.support, self.op, self.dims).relabel(mapping)
            return Term(new.support, new.block, self.coeff, self.dcoeff, dims=new.dims, static=self.static)
        fn, dfn = self.block_fn, self.deriv_fn
        sup, dims = self.support, self.dims
        return Term.general(
            LocalOperator(sup, fn(0.0), dims).relabel(mapping).support,
            lambda s: LocalOperator(sup, fn(s), dims).relabel(mapping).block,
            None if dfn is None else (lambda s: LocalOperator(sup, dfn(s), dims).relabel(mapping).block),
            LocalOperator(sup, fn(0.0), dims).relabel(mapping).dims,
        )


def _central_diff(f, s, h=FD_STEP):
    d1 = (f(s + h) - f(s - h)) / (2 * h)
    d2 = (f(s + h / 2) - f(s - h / 2)) / h
    scale = max(1.0, float(np.max(np.abs(d1))))
    if np.max(np.abs(d1 - d2)) > 1e-5 * scale:
        raise DerivativeError(f"finite-difference derivative unstable at s={s}: path is not smooth")
    return (4 * d2 - d1) / 3


class InteractionFamily:
    """Terms Φ_X(s) on a graph. The Hamiltonian on a volume sums terms supported inside it."""

    def __init__(self, graph: MetricGraph, terms: Sequence[Term], name: str = "", meta: dict | None = None):
        self.graph = graph
        self.terms = list(terms)
        self.name = name
        self.meta = dict(meta or {})
        sites = set(graph.sites)
        for t in self.terms:
            if not set(t.support) <= sites:
                raise ValueError(f"term support {t.support} not in graph")

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(self.graph.sites)

    @property
    def is_static(self) -> bool:
        return all(t.static for t in self.terms)

    def _dims(self, sup):
        return self.graph.dims(sup)

    def _inside(self, volume):
        vol = set(volume)
        return [t for t in self.terms if set(t.support) <= vol]

    def at(self, s: float, volume=None) -> list[LocalOperator]:
        terms = self.terms if volume is None else self._inside(volume)
        return [LocalOperator(t.support, t.block(s), self._dims(t.support)) for t in terms]

    def derivative_at(self, s: float, volume=None) -> list[LocalOperator]:
        terms = self.terms if volume is None else self._inside(volume)
        return [LocalOperator(t.support, t.deriv(s), self._dims(t.support)) for t in terms if not t.static]

    def term_sup_norms(self, s_grid) -> list[float]:
        return [t.sup_norm(s_grid) for t in self.terms]

    def hamiltonian(self, s: float, volume=None) -> np.ndarray:
        volume = self.sites if volume is None else tuple(volume)
        return _assemble(self.at(s, volume), volume, self.graph)

    def hprime(self, s: float, volume=None) -> np.ndarray:
        volume = self.sites if volume is None else tuple(volume)
        return _assemble(self.derivative_at(s, volume), volume, self.graph)

    def apply_hprime(self, s: float, M: np.ndarray, volume=None) -> np.ndarray:
        """H'(s) @ M without assembling H'."""
        volume = self.sites if volume is None else tuple(volume)
        dm = self.graph.local_dim
        out = np.zeros(M.shape, dtype=np.result_type(M, *[t.block for t in self.derivative_at(s, volume)] or [float]))
        for t in self.derivative_at(s, volume):
            out += apply_left(t, volume, M, dm)
        return out

    def restrict(self, volume) -> "InteractionFamily":
        return InteractionFamily(self.graph.subgraph(volume), self._inside(volume), self.name, self.meta)

    def d_family(self) -> "InteractionFamily":
        """X -> |X| Φ'_X(s)."""
        out = []
        for t in self.terms:
            n = len(t.support)
            if t.static:
                out.append(Term.fixed(t.support, np.zeros_like(t.op), t.dims))
            else:
                out.append(Term.general(t.support, (lambda s, t=t, n=n: n * t.deriv(s)), None, t.dims))
        return InteractionFamily(self.graph, out, f"d({self.name})", self.meta)

    def scaled(self, c: float) -> "InteractionFamily":
        out = [Term.general(t.support, (lambda s, t=t: c * t.block(s)), (lambda s, t=t: c * t.deriv(s)), t.dims)
               for t in self.terms]
        return InteractionFamily(self.graph, out, self.name, self.meta)


def _assemble(ops: list[LocalOperator], volume, graph) -> np.ndarray:
    D = int(np.prod(graph.dims(volume)))
    dtype = np.result_type(float, *[o.block.dtype for o in ops]) if ops else float
    H = np.zeros((D, D), dtype=dtype)
    for o in ops:
        H += embed(o, volume, graph.local_dim)
    return H
