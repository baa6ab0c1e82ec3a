"""Analytic growth-indicator models and synthetic orbit point clouds that
realise them.

A model is evaluated on the closed chamber, is homogeneous of degree one,
takes the value 0 at the origin and ``-inf`` outside its support cone.
``sample_orbit`` places points along a direction grid so that the number of
points within norm R in direction u is exactly ``floor(exp(psi(u) R))``
(divided by a global thinning factor when that count would be too large).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from growthspec.chamber import (
    RootSystem,
    arc_angle,
    arc_points,
    direction_grid,
)
from growthspec.orbits import DEFAULT_RECORD_CAP, DatasetHeader, OrbitDataset, RecordCapExceeded

NEG_INF = -np.inf


@dataclass(frozen=True, eq=False)
class Cone:
    """Round cone ``{H : <axis, H/|H|> >= cos(half_angle)}``."""

    axis: np.ndarray
    half_angle: float

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))

    def contains(self, U) -> np.ndarray:
        return U @ self.axis >= math.cos(self.half_angle) - 1e-12

    def describe(self) -> str:
        return f"cone(axis={_vec(self.axis)},angle={self.half_angle:.17g})"


def _vec(v) -> str:
    return "[" + " ".join(f"{x:.17g}" for x in np.asarray(v).ravel()) + "]"


@dataclass(frozen=True, eq=False)
class PsiModel:
    support: Cone | None = field(default=None, kw_only=True)

    def unit_values(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    def label(self) -> str:
        s = self.describe()
        if self.support is not None:
            s += ";" + self.support.describe()
        return s


@dataclass(frozen=True, eq=False)
class Linear(PsiModel):
    """``psi(H) = <phi, H>``."""

    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))

    @classmethod
    def scaled_rho(cls, rs: RootSystem, c: float, **kw) -> "Linear":
        return cls(c * rs.rho, **kw)

    def unit_values(self, U):
        return U @ self.phi

    def describe(self):
        return f"linear(phi={_vec(self.phi)})"


@dataclass(frozen=True, eq=False)
class MinLinear(PsiModel):
    """``psi(H) = min_i <phi_i, H>``; concave."""

    phis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phis", np.atleast_2d(np.asarray(self.phis, dtype=float)))

    def unit_values(self, U):
        return np.min(U @ self.phis.T, axis=-1)

    def describe(self):
        return "minlinear(" + ",".join(_vec(p) for p in self.phis) + ")"


@dataclass(frozen=True, eq=False)
class SphericalCap(PsiModel):
    """``psi(H) = c |H|`` on the support cone (the whole chamber by default)."""

    c: float

    def unit_values(self, U):
        return np.full(U.shape[:-1], float(self.c))

    def describe(self):
        return f"cap(c={self.c:.17g})"


def evaluate_psi(rs: RootSystem, m: PsiModel, H):
    """Evaluate a model at chamber vector(s) ``H``; ``-inf`` off the support."""
    H = np.asarray(H, dtype=float)
    single = H.ndim == 1
    H = np.atleast_2d(H)
    rs.require_chamber(H)
    r = rs.norm(H)
    out = np.zeros(len(H))
    nz = r > 0
    if np.any(nz):
        U = H[nz] / r[nz, None]
        vals = r[nz] * m.unit_values(U)
        if m.support is not None:
            vals = np.where(m.support.contains(U), vals, NEG_INF)
        out[nz] = vals
    return float(out[0]) if single else out


def is_admissible(rs: RootSystem, m: PsiModel, resolution: int = 2049, tol: float = 1e-12) -> bool:
    """``psi <= 2 rho`` on a direction grid plus the extreme rays."""
    U = np.vstack([direction_grid(rs, resolution), rs.extreme_rays, rs.rho_unit])
    vals = evaluate_psi(rs, m, U)
    return bool(np.all(vals <= 2.0 * rs.rho_pairing(U) + tol))


@dataclass(frozen=True)
class SynthConfig:
    resolution: int = 9
    r_max: float = 12.0
    seed: int = 0
    jitter: float = 0.0
    # global thinning keeps the total near this many points; None disables it
    max_points: int | None = 1_000_000
    record_cap: int = DEFAULT_RECORD_CAP

    def __post_init__(self):
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if not 0.0 <= self.jitter <= 1.0:
            raise ValueError("jitter is a fraction of half a grid cell, in [0, 1]")

    def describe(self) -> str:
        return (f"res={self.resolution};rmax={self.r_max:.17g};seed={self.seed};"
                f"jitter={self.jitter:.17g};max_points={self.max_points}")


@dataclass(frozen=True)
class SynthPlan:
    directions: np.ndarray
    psi: np.ndarray
    log_counts: np.ndarray
    thinning: int
    points: np.ndarray


def plan_sample(rs: RootSystem, m: PsiModel, cfg: SynthConfig) -> SynthPlan:
    """Directions, intended counts and thinning factor, without placing points."""
    U = direction_grid(rs, cfg.resolution)
    psi = evaluate_psi(rs, m, U)
    active = np.isfinite(psi) & (psi > 0)
    if not np.any(active):
        raise ValueError("model is nonpositive everywhere on the direction grid; nothing to sample")
    log_counts = np.where(active, psi * cfg.r_max, NEG_INF)
    # log of sum_j exp(psi_j R)
    top = log_counts[active].max()
    log_total = top + math.log(np.exp(log_counts[active] - top).sum())
    if cfg.max_points is None:
        thin = 1
        if log_total > math.log(cfg.record_cap):
            raise RecordCapExceeded(f"predicted point count e^{log_total:.1f} exceeds the record cap {cfg.record_cap}")
    else:
        thin = max(1, math.ceil(math.exp(log_total - math.log(cfg.max_points))))
    counts = np.zeros(len(U), dtype=np.int64)
    for j in np.flatnonzero(active):
        counts[j] = math.floor(math.floor(math.exp(log_counts[j])) / thin)
    return SynthPlan(U, psi, log_counts, thin, counts)


def sample_orbit(rs: RootSystem, m: PsiModel, cfg: SynthConfig = SynthConfig()) -> OrbitDataset:
    """Synthetic dataset whose directional counts grow at rate ``psi(u_j)``.

    Direction ``u_j`` receives points at norms ``log(k)/psi(u_j)`` for
    ``k = t, 2t, ..., <= exp(psi(u_j) r_max)`` with ``t`` the thinning factor.
    """
    plan = plan_sample(rs, m, cfg)
    rng = np.random.default_rng(cfg.seed)
    pieces = []
    for j in np.flatnonzero(plan.points):
        n = int(plan.points[j])
        k = plan.thinning * np.arange(1, n + 1, dtype=float)
        radii = np.log(k) / plan.psi[j]
        if cfg.jitter > 0 and rs.rank > 1:
            U = _jittered(rs, plan.directions, j, n, cfg, rng)
        else:
            U = np.broadcast_to(plan.directions[j], (n, rs.ambient_dim))
        pieces.append(radii[:, None] * U)
    mu = np.concatenate(pieces) if pieces else np.zeros((0, rs.ambient_dim))
    if len(mu) > cfg.record_cap:
        raise RecordCapExceeded(f"{len(mu)} points exceed the record cap {cfg.record_cap}")
    fp = hashlib.sha256((m.label() + "|" + cfg.describe()).encode()).hexdigest()[:16]
    header = DatasetHeader(
        group="synthetic",
        factors=rs.descriptor.factors,
        rank=rs.rank,
        gens=fp,
        maxlen=0,
        dedup="none",
        rmax=float(cfg.r_max),
        model=f"{m.label()};{cfg.describe()};thin={plan.thinning}",
    )
    return OrbitDataset(header, np.zeros(len(mu), dtype=np.int64), mu).sorted()


def _jittered(rs, dirs, j, n, cfg, rng):
    if rs.rank == 2:
        big = arc_angle(rs)
        step = big / (len(dirs) - 1)
        theta0 = j * step
        theta = theta0 + cfg.jitter * rng.uniform(-step / 2, step / 2, n)
        return arc_points(rs, np.clip(theta, 0.0, big))
    # typical spacing of a point set on a (rank-1)-sphere patch
    step = (1.0 / len(dirs)) ** (1.0 / (rs.rank - 1))
    t = rng.standard_normal((n, rs.rank)) @ rs.orthonormal_basis
    t -= (t @ dirs[j])[:, None] * dirs[j]
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    U = dirs[j] + cfg.jitter * (step / 2) * rng.uniform(0, 1, (n, 1)) * t
    U = rs.fold(U)
    return U / np.linalg.norm(U, axis=1, keepdims=True)
