"""Cartan projection of matrices in products of SL(n, R).

For ``g = k1 exp(H) k2`` the projection is the log singular value vector of
each factor, sorted nonincreasingly.  Small singular values of large words
are badly conditioned when read off an SVD directly, so the products
``sigma_1 ... sigma_k`` are taken as the top singular value of the k-th
compound matrix (all k x k minors); each of those is a well-conditioned
largest singular value.  Integer stacks get their minors in exact
arithmetic before the conversion to float, since float minors of huge
entries cancel to noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np

from growthspec.chamber import RootSystem

DET_TOL = 1e-9
# keeps g^T g and all compound minors inside double range
MAX_ENTRY = 1e150


class CartanError(ValueError):
    """Matrix cannot be projected (singular, not unimodular, wrong shape)."""


class CartanOverflowError(ArithmeticError):
    """Matrix entries too large for a trustworthy projection."""


@dataclass(frozen=True, eq=False)
class GroupElement:
    """One matrix per factor; ``exact`` optionally holds integer copies."""

    blocks: tuple[np.ndarray, ...]
    exact: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        blocks = tuple(np.array(b, dtype=float) for b in self.blocks)
        for b in blocks:
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise CartanError(f"factor matrix must be square, got shape {b.shape}")
        object.__setattr__(self, "blocks", blocks)
        if self.exact is not None:
            object.__setattr__(self, "exact", tuple(np.array(b, dtype=np.int64) for b in self.exact))

    @classmethod
    def from_matrices(cls, *mats) -> "GroupElement":
        mats = [np.asarray(m) for m in mats]
        exact = None
        if all(np.issubdtype(m.dtype, np.integer) or np.all(m == np.round(m)) for m in mats):
            exact = tuple(np.round(m).astype(np.int64) for m in mats)
        return cls(tuple(mats), exact)

    @classmethod
    def identity(cls, rs: RootSystem) -> "GroupElement":
        return cls.from_matrices(*[np.eye(n, dtype=np.int64) for n in rs.descriptor.factors])

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        blocks = tuple(a @ b for a, b in zip(self.blocks, other.blocks))
        exact = None
        if self.exact is not None and other.exact is not None:
            exact = tuple(a @ b for a, b in zip(self.exact, other.exact))
        return GroupElement(blocks, exact)

    def inverse(self) -> "GroupElement":
        blocks = tuple(np.linalg.inv(b) for b in self.blocks)
        exact = None
        if self.exact is not None:
            exact = tuple(np.round(np.linalg.inv(b.astype(float))).astype(np.int64) for b in self.exact)
            for e, b in zip(exact, self.exact):
                if not np.array_equal(b @ e, np.eye(len(b), dtype=np.int64)):
                    exact = None
                    break
        return GroupElement(blocks, exact)

    def check(self, rs: RootSystem, tol: float = DET_TOL) -> None:
        sizes = tuple(b.shape[0] for b in self.blocks)
        if sizes != rs.descriptor.factors:
            raise CartanError(f"factor sizes {sizes} do not match group {rs.descriptor}")
        for b in self.blocks:
            if not np.all(np.isfinite(b)):
                raise CartanOverflowError("non-finite matrix entry")
            det = np.linalg.det(b)
            if det == 0.0:
                raise CartanError("singular matrix")
            # LU rounding in det grows like |b|^n eps
            slack = 16 * len(b) * np.finfo(float).eps * np.linalg.norm(b) ** len(b)
            if abs(abs(det) - 1.0) > tol + slack:
                raise CartanError(f"matrix not unimodular: det = {det!r}")


@lru_cache(maxsize=None)
def _index_sets(n: int, k: int) -> np.ndarray:
    return np.array(list(combinations(range(n), k)), dtype=np.intp)


def _laplace_det(A: np.ndarray) -> np.ndarray:
    """Determinants of a stack (..., k, k) by cofactor expansion; exact on integers."""
    k = A.shape[-1]
    if k == 1:
        return A[..., 0, 0]
    if k == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    out = 0
    for j in range(k):
        minor = np.delete(np.delete(A, 0, axis=-2), j, axis=-1)
        term = A[..., 0, j] * _laplace_det(minor)
        out = out + term if j % 2 == 0 else out - term
    return out


def _compound(M: np.ndarray, k: int) -> np.ndarray:
    """k-th compound of a stack of n x n matrices: shape (N, C, C).

    Integer stacks (int64 or Python ints) get exact minors; floats go
    through LU determinants.
    """
    n = M.shape[-1]
    idx = _index_sets(n, k)
    sub = M[:, idx[:, None, :, None], idx[None, :, None, :]]
    if M.dtype.kind in "iuO":
        return _laplace_det(sub)
    return np.linalg.det(sub)


def _top_singular(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape[-1] == 1:
        return np.abs(M[:, 0, 0])
    return np.linalg.svd(M, compute_uv=False)[:, 0]


def _as_float(C: np.ndarray) -> np.ndarray:
    if C.dtype == object:
        try:
            return np.array([[[float(x) for x in row] for row in mat] for mat in C], dtype=float).reshape(C.shape)
        except OverflowError:
            raise CartanOverflowError("compound minors exceed double range") from None
    return C.astype(float)


def _exact_dtype(M: np.ndarray, k: int):
    """int64 while k-fold products of entries stay clear of overflow, else object."""
    big = max((abs(int(x)) for x in M.ravel()), default=0) if M.dtype == object else int(np.abs(M).max(initial=0))
    fact = 1
    for i in range(2, k + 1):
        fact *= i
    return np.int64 if max(big, 1) ** k * fact < 2**62 else object


def _factor_projection(M: np.ndarray, assume_unimodular: bool) -> np.ndarray:
    """Log singular values of a stack (N, n, n), nonincreasing, trace-free."""
    N, n, _ = M.shape
    exact = M.dtype.kind in "iuO"
    Mf = _as_float(M) if exact else M.astype(float)
    big = np.abs(Mf).max(axis=(1, 2)) if N else np.zeros(0)
    if np.any(~np.isfinite(big)) or np.any(big > MAX_ENTRY):
        bad = int(np.argmax(~np.isfinite(big) | (big > MAX_ENTRY)))
        raise CartanOverflowError(f"matrix entries exceed {MAX_ENTRY:g} (element {bad})")
    cum = np.zeros((N, n + 1))
    for k in range(1, n):
        if k == 1:
            C = Mf
        elif exact:
            C = _as_float(_compound(M.astype(_exact_dtype(M, k)), k))
        else:
            C = _compound(Mf, k)
        top = _top_singular(C)
        if np.any(top <= 0.0):
            raise CartanError("singular matrix")
        cum[:, k] = np.log(top)
    if not assume_unimodular:
        _, logdet = np.linalg.slogdet(Mf)
        cum[:, n] = logdet
    logs = np.diff(cum, axis=1)
    logs -= logs.mean(axis=1, keepdims=True)
    return -np.sort(-logs, axis=1)


def project_blocks(
    rs: RootSystem, blocks: Sequence[np.ndarray], assume_unimodular: bool = True
) -> np.ndarray:
    """Cartan projections of a batch; ``blocks[i]`` has shape (N, n_i, n_i)."""
    parts = [_factor_projection(np.asarray(b), assume_unimodular) for b in blocks]
    return np.concatenate(parts, axis=1)


def cartan_projection(rs: RootSystem, g: GroupElement, check: bool = True) -> np.ndarray:
    """Chamber vector of ``g``; raises on singular or non-unimodular input."""
    if check:
        g.check(rs)
    return project_blocks(rs, [b[None] for b in g.blocks], assume_unimodular=not check)[0]


def riemannian_length(rs: RootSystem, g: GroupElement, check: bool = True) -> float:
    """Displacement d(o, g o), taken as the norm of the Cartan projection."""
    return float(rs.norm(cartan_projection(rs, g, check=check)))


def random_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-random element of SO(n)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
