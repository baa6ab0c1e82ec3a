"""Root data and Weyl chamber geometry for products of SL(n, R).

Vectors of the Cartan subspace are stored in ambient diagonal coordinates:
a group ``SL(n_1) x ... x SL(n_k)`` lives in ``R^(n_1 + ... + n_k)`` with
every factor block trace-free.  The inner product is the per-block trace
form, which in these coordinates is the Euclidean dot product.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

CHAMBER_TOL = 1e-12
FORM_LABEL = "trace"


class ChamberError(ValueError):
    """A vector lies outside the closed positive Weyl chamber."""


@dataclass(frozen=True)
class GroupDescriptor:
    """Factor sizes of ``G = SL(n_1, R) x ... x SL(n_k, R)``."""

    factors: tuple[int, ...]

    def __post_init__(self):
        factors = tuple(int(n) for n in self.factors)
        if not factors:
            raise ValueError("a group needs at least one factor")
        for n in factors:
            if n < 2:
                raise ValueError(f"invalid factor size {n}: SL(n) needs n >= 2")
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> int:
        return sum(n - 1 for n in self.factors)

    @property
    def ambient_dim(self) -> int:
        return sum(self.factors)

    @classmethod
    def parse(cls, text: str) -> "GroupDescriptor":
        """Parse ``sl3``, ``sl2xsl2`` or ``2,3``."""
        text = text.strip().lower()
        if re.fullmatch(r"sl\d+(x\s*sl\d+)*", text.replace(" ", "")):
            sizes = [int(m) for m in re.findall(r"sl(\d+)", text)]
        else:
            try:
                sizes = [int(p) for p in re.split(r"[,x\s]+", text) if p]
            except ValueError:
                raise ValueError(f"cannot parse group descriptor {text!r}") from None
        return cls(tuple(sizes))

    def __str__(self) -> str:
        return "x".join(f"sl{n}" for n in self.factors)


@dataclass(frozen=True, eq=False)
class RootSystem:
    """Positive roots, rho and chamber geometry for a product of type-A factors."""

    descriptor: GroupDescriptor
    positive_roots: np.ndarray
    multiplicities: np.ndarray
    rho: np.ndarray
    form: str = FORM_LABEL
    blocks: tuple[slice, ...] = field(default=())

    @property
    def rank(self) -> int:
        return self.descriptor.rank

    @property
    def ambient_dim(self) -> int:
        return self.descriptor.ambient_dim

    @property
    def rho_norm(self) -> float:
        return float(np.sqrt(self.pairing(self.rho, self.rho)))

    @property
    def rho_unit(self) -> np.ndarray:
        return self.rho / self.rho_norm

    # -- inner product ---------------------------------------------------

    def pairing(self, v, w):
        """Trace-form pairing along the last axis (broadcasts)."""
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        if v.shape[-1] != self.ambient_dim or w.shape[-1] != self.ambient_dim:
            raise ValueError(
                f"dimension mismatch: expected {self.ambient_dim}, "
                f"got {v.shape[-1]} and {w.shape[-1]}"
            )
        return np.sum(v * w, axis=-1)

    def norm(self, v):
        v = np.asarray(v, dtype=float)
        return np.sqrt(self.pairing(v, v))

    def rho_pairing(self, v):
        return self.pairing(v, self.rho)

    # -- chamber ---------------------------------------------------------

    @property
    def simple_roots(self) -> np.ndarray:
        rows = []
        for blk in self.blocks:
            for i in range(blk.start, blk.stop - 1):
                a = np.zeros(self.ambient_dim)
                a[i], a[i + 1] = 1.0, -1.0
                rows.append(a)
        return np.array(rows)

    def root_values(self, H) -> np.ndarray:
        """<alpha, H> for every simple root alpha; shape (..., rank)."""
        H = np.asarray(H, dtype=float)
        return H @ self.simple_roots.T

    def in_closed_chamber(self, H, tol: float = CHAMBER_TOL):
        H = np.asarray(H, dtype=float)
        vals = self.root_values(H)
        return np.all(vals >= -tol, axis=-1)

    def require_chamber(self, H, tol: float = CHAMBER_TOL) -> np.ndarray:
        H = np.asarray(H, dtype=float)
        ok = self.in_closed_chamber(H, tol)
        if not np.all(ok):
            raise ChamberError("vector outside the closed positive Weyl chamber")
        return H

    def block_sums(self, H) -> np.ndarray:
        H = np.asarray(H, dtype=float)
        return np.stack([H[..., blk].sum(axis=-1) for blk in self.blocks], axis=-1)

    def center(self, H) -> np.ndarray:
        """Remove the per-block mean (projection onto the trace-free subspace)."""
        H = np.array(H, dtype=float, copy=True)
        for blk in self.blocks:
            H[..., blk] -= H[..., blk].mean(axis=-1, keepdims=True)
        return H

    def fold(self, H) -> np.ndarray:
        """Weyl-group image of H in the closed chamber (sort each block descending)."""
        H = np.array(H, dtype=float, copy=True)
        for blk in self.blocks:
            H[..., blk] = -np.sort(-H[..., blk], axis=-1)
        return H

    def simple_reflections(self) -> list[Callable[[np.ndarray], np.ndarray]]:
        refl = []
        for blk in self.blocks:
            for i in range(blk.start, blk.stop - 1):
                def r(H, i=i):
                    H = np.array(H, dtype=float, copy=True)
                    H[..., [i, i + 1]] = H[..., [i + 1, i]]
                    return H
                refl.append(r)
        return refl

    @property
    def extreme_rays(self) -> np.ndarray:
        """Unit fundamental coweights; the closed chamber is their conical hull."""
        rays = []
        for blk in self.blocks:
            n = blk.stop - blk.start
            for k in range(1, n):
                w = np.zeros(self.ambient_dim)
                w[blk.start:blk.start + k] = 1.0
                w[blk] -= k / n
                rays.append(w / np.linalg.norm(w))
        return np.array(rays)

    @property
    def orthonormal_basis(self) -> np.ndarray:
        """Rows form an orthonormal basis of the trace-free subspace."""
        q, _ = np.linalg.qr(self.simple_roots.T)
        return q.T

    def min_on_unit_sphere(self, gauge: Callable[[np.ndarray], np.ndarray]) -> float:
        """Minimum of a gauge over unit chamber vectors.

        Exact for gauges linear on the chamber, where the minimum sits on an
        extreme ray; a direction grid is added for curved gauges.
        """
        pts = np.vstack([self.extreme_rays, direction_grid(self, 257 if self.rank == 2 else 512)])
        return float(np.min(gauge(pts)))

    def random_chamber(self, rng: np.random.Generator, size: int) -> np.ndarray:
        g = rng.standard_normal((size, self.rank)) @ self.orthonormal_basis
        return self.fold(g)


def build_root_system(desc: GroupDescriptor | Sequence[int] | str) -> RootSystem:
    """Type-A root data for each factor, assembled block-diagonally."""
    if isinstance(desc, str):
        desc = GroupDescriptor.parse(desc)
    elif not isinstance(desc, GroupDescriptor):
        desc = GroupDescriptor(tuple(desc))
    dim = desc.ambient_dim
    roots, blocks = [], []
    rho = np.zeros(dim)
    start = 0
    for n in desc.factors:
        blocks.append(slice(start, start + n))
        for i in range(n):
            for j in range(i + 1, n):
                a = np.zeros(dim)
                a[start + i], a[start + j] = 1.0, -1.0
                roots.append(a)
        rho[start:start + n] = [(n - 1) / 2 - i for i in range(n)]
        start += n
    roots = np.array(roots)
    mult = np.ones(len(roots), dtype=int)
    return RootSystem(desc, roots, mult, rho, FORM_LABEL, tuple(blocks))


def direction_grid(rs: RootSystem, resolution: int) -> np.ndarray:
    """Unit directions covering the chamber's unit-sphere patch.

    Rank 1 has a single direction.  Rank 2 is uniform in angle along the arc
    between the two extreme rays, endpoints included.  Higher rank folds a
    Halton sequence mapped to the sphere.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if rs.rank == 1:
        return rs.extreme_rays[:1].copy()
    if rs.rank == 2:
        theta = np.linspace(0.0, arc_angle(rs), resolution)
        return arc_points(rs, theta)
    sampler = qmc.Halton(d=rs.rank, scramble=False)
    pts = sampler.random(resolution + 1)[1:]
    pts = np.clip(pts, 1e-12, 1 - 1e-12)
    g = _normal.ppf(pts) @ rs.orthonormal_basis
    g = rs.fold(g)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def arc_angle(rs: RootSystem) -> float:
    w1, w2 = rs.extreme_rays
    return float(np.arccos(np.clip(w1 @ w2, -1.0, 1.0)))


def arc_points(rs: RootSystem, theta) -> np.ndarray:
    """Rank-2 slerp from the first to the second extreme ray."""
    w1, w2 = rs.extreme_rays
    big = arc_angle(rs)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    a = np.sin(big - theta) / np.sin(big)
    b = np.sin(theta) / np.sin(big)
    return a[:, None] * w1 + b[:, None] * w2


# -- gauges -------------------------------------------------------------


def d_s(rs: RootSystem, s: float, H, check: bool = True):
    """Polyhedral/Riemannian hybrid gauge.

    ``min(s, |rho|) <rho/|rho|, H> + max(s - |rho|, 0) |H|``
    """
    if np.any(np.asarray(s) < 0):
        raise ValueError("s must be nonnegative")
    H = np.asarray(H, dtype=float)
    if check:
        rs.require_chamber(H)
    r = rs.rho_norm
    # s may also be an array broadcasting against the leading axes of H
    return np.minimum(s, r) / r * rs.rho_pairing(H) + np.maximum(s - r, 0.0) * rs.norm(H)


def d_s_cases(rs: RootSystem, s: float, H):
    """The same gauge written branch by branch."""
    H = np.asarray(H, dtype=float)
    r = rs.rho_norm
    if s >= r:
        return rs.rho_pairing(H) + (s - r) * rs.norm(H)
    return s / r * rs.rho_pairing(H)


@dataclass(frozen=True)
class GaugeFamily:
    """A one-parameter family ``(s, H) -> d_s(H)`` of chamber gauges."""

    evaluate: Callable[[float, np.ndarray], np.ndarray]
    label: str

    def __call__(self, s, H):
        return self.evaluate(s, H)


def polyhedral_family(rs: RootSystem) -> GaugeFamily:
    return GaugeFamily(lambda s, H: d_s(rs, s, H, check=False), "polyhedral")


def norm_family(rs: RootSystem) -> GaugeFamily:
    return GaugeFamily(lambda s, H: s * rs.norm(H), "riemannian")


def convex_combination(f: GaugeFamily, g: GaugeFamily, weight: float = 0.5) -> GaugeFamily:
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    return GaugeFamily(
        lambda s, H: weight * f(s, H) + (1.0 - weight) * g(s, H),
        f"{weight:g}*{f.label}+{1 - weight:g}*{g.label}",
    )


@dataclass
class GaugeAudit:
    label: str
    violations: dict[str, float]
    tol: float

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.violations.items() if v > self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_gauge_family(
    g: GaugeFamily, rs: RootSystem, samples: int = 1000, seed=0, tol: float = 1e-12
) -> GaugeAudit:
    """Audit the gauge-family axioms on random (s, H) pairs.

    Each entry of ``violations`` is the worst observed violation magnitude;
    the audit passes when all of them are at most ``tol``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    H = rs.random_chamber(rng, samples)
    U = H / np.linalg.norm(H, axis=1, keepdims=True)
    smax = 4.0 * rs.rho_norm
    s = rng.uniform(0.0, smax, samples)
    s2 = s + rng.uniform(0.0, smax, samples)
    t = rng.uniform(0.1, 10.0, samples)

    def ev(svals, X):
        return np.array([float(g(si, xi)) for si, xi in zip(svals, X)])

    d0 = np.abs(ev(np.zeros(samples), U))
    val = ev(s, U)
    positivity = np.where(s > 0, np.maximum(-val, 0.0), 0.0)
    # zero values at s > 0 also break positivity
    positivity = np.maximum(positivity, np.where((s > 1e-9) & (val == 0.0), 1.0, 0.0))
    homog = np.abs(ev(s, t[:, None] * U) - t * val)
    mono = np.maximum(val - ev(s2, U), 0.0)

    h, wide = 1e-9, 1e-3
    step = np.abs(ev(s + h, U) - val)
    lip = np.maximum(np.abs(ev(s + wide, U) - val), np.abs(val - ev(np.maximum(s - wide, 0.0), U))) / wide
    cont = np.maximum(step - 10.0 * h * np.maximum(lip, 1.0), 0.0)

    violations = {
        "d0": float(d0.max()),
        "positivity": float(positivity.max()),
        "homogeneity": float(homog.max()),
        "monotonicity": float(mono.max()),
        "continuity": float(cont.max()),
    }
    return GaugeAudit(g.label, violations, tol)


def rho_dominance_margin(rs: RootSystem, H) -> float:
    """Smallest <rho, u> over the given chamber vectors normalised to unit length."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    u = H / np.linalg.norm(H, axis=1, keepdims=True)
    return float(np.min(rs.rho_pairing(u)))


__all__ = [
    "CHAMBER_TOL",
    "FORM_LABEL",
    "ChamberError",
    "GroupDescriptor",
    "RootSystem",
    "build_root_system",
    "direction_grid",
    "arc_angle",
    "arc_points",
    "d_s",
    "d_s_cases",
    "GaugeFamily",
    "polyhedral_family",
    "norm_family",
    "convex_combination",
    "GaugeAudit",
    "verify_gauge_family",
    "rho_dominance_margin",
]
