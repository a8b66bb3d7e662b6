"""Dense tensor-product operator algebra on finite site sets.

Supports are tuples of integer site labels in canonical (ascending) order and
every Kronecker product follows that order. Per-site local dimensions are given
either as one int for all sites or as a mapping label -> dim.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, svds
from scipy.stats import unitary_group

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1j], [1j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}

Dims = int | Mapping[int, int]


def site_dims(sites: Sequence[int], dims: Dims = 2) -> tuple[int, ...]:
    if isinstance(dims, int):
        return (dims,) * len(sites)
    return tuple(int(dims[x]) for x in sites)


def _canonical(sites) -> tuple[int, ...]:
    return tuple(sorted(set(int(x) for x in sites)))


@dataclass(frozen=True)
class LocalOperator:
    """A block acting on ``support``; the identity elsewhere."""

    support: tuple[int, ...]
    block: np.ndarray
    dims: tuple[int, ...] = field(default=())
    hermitian: bool = False

    def __post_init__(self):
        sup = tuple(int(x) for x in self.support)
        if list(sup) != sorted(set(sup)):
            raise ValueError(f"support must be strictly ascending, got {sup}")
        object.__setattr__(self, "support", sup)
        dims = tuple(self.dims) if self.dims else (2,) * len(sup)
        object.__setattr__(self, "dims", dims)
        blk = np.asarray(self.block)
        D = int(np.prod(dims)) if dims else 1
        if blk.shape != (D, D):
            raise ValueError(f"block shape {blk.shape} does not match dims {dims}")
        object.__setattr__(self, "block", blk)
        if self.hermitian:
            scale = max(np.abs(blk).max(), 1e-300)
            if np.abs(blk - blk.conj().T).max() > 1e-12 * scale:
                raise ValueError("block flagged Hermitian but is not")

    @property
    def dim(self) -> int:
        return self.block.shape[0]

    def norm(self) -> float:
        return opnorm(self.block)

    def dims_map(self) -> dict[int, int]:
        return dict(zip(self.support, self.dims))

    def __add__(self, other: "LocalOperator") -> "LocalOperator":
        if other.support == self.support:
            return LocalOperator(self.support, self.block + other.block, self.dims)
        sup = _canonical(self.support + other.support)
        dm = {**self.dims_map(), **other.dims_map()}
        return LocalOperator(sup, embed(self, sup, dm) + embed(other, sup, dm), site_dims(sup, dm))

    def scale(self, c) -> "LocalOperator":
        return LocalOperator(self.support, c * self.block, self.dims)

    def relabel(self, mapping: Mapping[int, int]) -> "LocalOperator":
        """Move the operator to new site labels, reordering tensor legs as needed."""
        new = [int(mapping[x]) for x in self.support]
        order = np.argsort(new)
        n = len(new)
        T = self.block.reshape(self.dims * 2)
        T = T.transpose(list(order) + [n + i for i in order])
        dims = tuple(self.dims[i] for i in order)
        return LocalOperator(tuple(new[i] for i in order), T.reshape(self.block.shape), dims)


def pauli(label: str, site: int) -> LocalOperator:
    return LocalOperator((site,), PAULI[label.upper()], (2,))


def pauli_string(ops: Mapping[int, str]) -> LocalOperator:
    sup = _canonical(ops)
    blk = np.ones((1, 1))
    for x in sup:
        blk = np.kron(blk, PAULI[ops[x].upper()])
    return LocalOperator(sup, blk, (2,) * len(sup))


def _positions(sub, volume) -> list[int]:
    pos = {x: i for i, x in enumerate(volume)}
    try:
        return [pos[x] for x in sub]
    except KeyError as exc:
        raise ValueError(f"site {exc.args[0]} of {tuple(sub)} is not in volume {tuple(volume)}") from None


def embed(A: LocalOperator, volume: Sequence[int], dims: Dims | None = None) -> np.ndarray:
    """Matrix of A (x) 1 on ``volume`` in canonical order."""
    volume = tuple(volume)
    dm = dims if dims is not None else 2
    if not isinstance(dm, int):
        dm = {**dict(dm), **A.dims_map()}
    else:
        dm = {**{x: dm for x in volume}, **A.dims_map()}
    vd = site_dims(volume, dm)
    pos = _positions(A.support, volume)
    n = len(volume)
    if not pos:
        return A.block[0, 0] * np.eye(int(np.prod(vd)), dtype=A.block.dtype)
    if pos == list(range(pos[0], pos[0] + len(pos))):
        left = int(np.prod(vd[: pos[0]]))
        right = int(np.prod(vd[pos[-1] + 1:]))
        out = A.block
        if left > 1:
            out = np.kron(np.eye(left), out)
        if right > 1:
            out = np.kron(out, np.eye(right))
        return out
    rest = [i for i in range(n) if i not in pos]
    big = np.kron(A.block, np.eye(int(np.prod([vd[i] for i in rest]))))
    order = pos + rest
    inv = list(np.argsort(order))
    T = big.reshape([vd[i] for i in order] * 2).transpose(inv + [n + j for j in inv])
    D = int(np.prod(vd))
    return T.reshape(D, D)


def apply_left(A: LocalOperator, volume: Sequence[int], M: np.ndarray, dims: Dims = 2) -> np.ndarray:
    """embed(A, volume) @ M without forming the embedded matrix."""
    volume = tuple(volume)
    dm = dims if isinstance(dims, int) else {**dict(dims), **A.dims_map()}
    vd = site_dims(volume, dm)
    pos = _positions(A.support, volume)
    k = len(pos)
    ncol = M.shape[1]
    T = M.reshape(tuple(vd) + (ncol,))
    blk = A.block.reshape(A.dims * 2)
    out = np.tensordot(blk, T, axes=(list(range(k, 2 * k)), pos))
    # tensordot puts the contracted-in legs first; move them back
    rest = [i for i in range(len(vd)) if i not in pos]
    cur = pos + rest + [len(vd)]
    out = out.transpose(list(np.argsort(cur)))
    return out.reshape(M.shape)


def conditional_expectation(M: np.ndarray, volume: Sequence[int], X: Sequence[int],
                            dims: Dims = 2) -> LocalOperator:
    """Normalized partial trace of a volume matrix onto the sites X."""
    volume = tuple(volume)
    X = _canonical(X)
    vd = site_dims(volume, dims)
    keep = _positions(X, volume)
    n = len(volume)
    if len(keep) == n:
        return LocalOperator(X, np.array(M, copy=True), vd)
    drop = [i for i in range(n) if i not in keep]
    dk = int(np.prod([vd[i] for i in keep]))
    dd = int(np.prod([vd[i] for i in drop]))
    T = np.asarray(M).reshape(vd * 2)
    T = T.transpose(keep + drop + [n + i for i in keep] + [n + i for i in drop]).reshape(dk, dd, dk, dd)
    red = np.einsum("ajbj->ab", T) / dd
    return LocalOperator(X, red, tuple(vd[i] for i in keep))


def fatten(X: Sequence[int], R: float, graph, within: Sequence[int] | None = None) -> tuple[int, ...]:
    """Sites within distance R of X (optionally intersected with ``within``)."""
    idx = [graph.index(x) for x in X]
    if not idx:
        return ()
    mask = (graph.dist[idx] <= R + 1e-12).any(axis=0)
    out = [graph.sites[i] for i in np.flatnonzero(mask)]
    if within is not None:
        w = set(within)
        out = [x for x in out if x in w]
    return _canonical(out)


def _is_hermitian(X: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.abs(X).max(), 1e-300)
    return np.abs(X - X.conj().T).max() <= rtol * scale


def opnorm(X: np.ndarray, hermitian: bool | None = None, dense_limit: int = 512) -> float:
    """Spectral norm. Dense for small matrices, Lanczos/ARPACK above ``dense_limit``."""
    X = np.asarray(X)
    n = X.shape[0]
    if n == 0 or not np.any(X):
        return 0.0
    if hermitian is None:
        hermitian = _is_hermitian(X)
    if n <= dense_limit or (not hermitian and n <= 4 * dense_limit):
        if hermitian:
            return float(np.abs(np.linalg.eigvalsh(X)).max())
        return float(np.linalg.norm(X, 2))
    # fixed generic start vector: a symmetric one (e.g. all ones) can miss whole symmetry sectors
    v0 = np.random.default_rng(n).standard_normal(n)
    v0 /= np.linalg.norm(v0)
    if hermitian:
        return _hermitian_norm(X, v0)
    scale = np.abs(X).max()
    if np.abs(X + X.conj().T).max() <= 1e-12 * scale:
        if not np.iscomplexobj(X):
            # real antisymmetric (generators, commutators of real symmetric matrices): ‖X‖² = λ_max(XᵀX)
            return _gram_norm(X, v0)
        # anti-Hermitian: iX is Hermitian, applied without forming the copy
        op = LinearOperator(X.shape, matvec=lambda v: 1j * (X @ v), dtype=X.dtype)
        return _hermitian_norm(op, v0, dense=lambda: 1j * X)
    try:
        s = svds(X, k=1, v0=v0, tol=1e-10, maxiter=200, return_singular_vectors=False)
        return float(s[0])
    except ArpackNoConvergence:
        return float(np.linalg.norm(X, 2))


def _hermitian_norm(X, v0: np.ndarray, dense=None) -> float:
    # k=2: spectra of i·(real antisymmetric) come in ±λ pairs, a tie that stalls k=1
    # clustered top spectra converge slowly; cap the Lanczos work and fall back to a dense solve
    n = X.shape[0]
    try:
        ev = eigsh(X, k=2, which="LM", v0=v0, tol=1e-12, ncv=min(n - 1, 20), maxiter=60,
                   return_eigenvectors=False)
        return float(np.abs(ev).max())
    except ArpackNoConvergence:
        return float(np.abs(np.linalg.eigvalsh(X if dense is None else dense())).max())


def _gram_norm(X: np.ndarray, v0: np.ndarray) -> float:
    n = X.shape[0]
    op = LinearOperator(X.shape, matvec=lambda v: X.T @ (X @ v), dtype=X.dtype)
    try:
        ev = eigsh(op, k=2, which="LA", v0=v0, tol=1e-12, ncv=min(n - 1, 20), maxiter=60,
                   return_eigenvectors=False)
        return float(np.sqrt(max(ev.max(), 0.0)))
    except ArpackNoConvergence:
        return float(np.sqrt(max(np.linalg.eigvalsh(X.T @ X).max(), 0.0)))


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    return A @ B - B @ A


def commutator_norm(A: np.ndarray, B: np.ndarray) -> float:
    return opnorm(commutator(A, B))


class DefectEstimate(NamedTuple):
    defect: float
    epsilon: float
    stderr: float


def approximation_defect(M: np.ndarray, volume: Sequence[int], X: Sequence[int], n_samples: int,
                         rng: np.random.Generator | int | None = None, dims: Dims = 2) -> DefectEstimate:
    """‖Π_X(A) − A‖ together with a Haar average of ‖[A, 1_X ⊗ U]‖ over unitaries U on X^c."""
    volume = tuple(volume)
    X = _canonical(X)
    rng = np.random.default_rng(rng)
    pi = conditional_expectation(M, volume, X, dims)
    defect = opnorm(M - embed(pi, volume, dims))
    comp = tuple(x for x in volume if x not in X)
    if not comp:
        return DefectEstimate(defect, 0.0, 0.0)
    cd = site_dims(comp, dims)
    dc = int(np.prod(cd))
    samples = np.empty(n_samples)
    for i in range(n_samples):
        U = unitary_group.rvs(dc, random_state=rng) if dc > 1 else np.eye(1)
        Ue = embed(LocalOperator(comp, U, cd), volume, dims)
        samples[i] = opnorm(M @ Ue - Ue @ M, hermitian=False)
    se = samples.std(ddof=1) / np.sqrt(n_samples) if n_samples > 1 else 0.0
    return DefectEstimate(defect, float(samples.mean()), float(se))
