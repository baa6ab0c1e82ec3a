"""Closed-form links between the growth indicator, the modified critical
exponent and the bottom of the L2 spectrum, plus the condition checks tying
them together.

Every quantity is a supremum over unit chamber vectors.  ``chamber_sup``
takes a dense direction grid and polishes the best cells with a local
optimiser; all models in scope are concave on their support, so the local
step finds the global maximum up to grid resolution.  Growth-indicator
estimates only know their own directions, and are maximised over those.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy import optimize

from growthspec.chamber import GaugeFamily, RootSystem, arc_angle, arc_points, direction_grid
from growthspec.estimators import GrowthIndicatorEstimate, GrowthRateEstimate
from growthspec.synth import PsiModel

RANK2_GRID = 2048
HIGH_RANK_GRID = 4096
ANALYTIC_TOL = 1e-6
DATASET_TOL = 0.05
RHO_PAIRING_FLOOR = 1e-9
# finite stand-in for -inf inside the optimisers
_FLOOR = -1e300

Psi = Union[PsiModel, GrowthIndicatorEstimate]
UnitFn = Callable[[np.ndarray], np.ndarray]


class DegeneratePsiWarning(UserWarning):
    """The growth indicator is -inf in every direction."""


class BracketError(ValueError):
    """The gauge family never dominates psi on the search interval."""


@dataclass(frozen=True, eq=False)
class ChamberSup:
    value: float
    direction: np.ndarray | None


@lru_cache(maxsize=32)
def _grid(rs: RootSystem) -> np.ndarray:
    if rs.rank == 1:
        return rs.extreme_rays[:1].copy()
    if rs.rank == 2:
        return direction_grid(rs, RANK2_GRID)
    return np.vstack([direction_grid(rs, HIGH_RANK_GRID), rs.extreme_rays, rs.rho_unit])


def _finite(v: float) -> float:
    return v if np.isfinite(v) else _FLOOR


def chamber_sup(rs: RootSystem, f: UnitFn, refine: bool = True, candidates: int = 3) -> ChamberSup:
    """sup of ``f`` over unit chamber vectors; ``-inf`` values are skipped."""
    U = _grid(rs)
    vals = f(U)
    if np.all(vals == -np.inf):
        return ChamberSup(-np.inf, None)
    i = int(np.argmax(vals))
    best, u_best = float(vals[i]), U[i]
    if not refine or rs.rank == 1 or best == np.inf:
        return ChamberSup(best, u_best)
    if rs.rank == 2:
        step = arc_angle(rs) / (len(U) - 1)
        lo, hi = max(i - 1, 0) * step, min(i + 1, len(U) - 1) * step
        res = optimize.minimize_scalar(
            lambda t: -_finite(float(f(arc_points(rs, [t]))[0])),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-10},
        )
        if -res.fun > best:
            best, u_best = float(-res.fun), arc_points(rs, [res.x])[0]
        return ChamberSup(best, u_best)
    finite = np.where(np.isfinite(vals), vals, _FLOOR)
    for j in np.argsort(-finite)[:candidates]:
        if not np.isfinite(vals[j]):
            break
        v, u = _polish(rs, f, U[j])
        if v > best:
            best, u_best = v, u
    return ChamberSup(best, u_best)


def _polish(rs: RootSystem, f: UnitFn, u0: np.ndarray) -> tuple[float, np.ndarray]:
    B = rs.orthonormal_basis
    B = B - np.outer(B @ u0, u0)
    q, _ = np.linalg.qr(B.T)
    T = q[:, : rs.rank - 1].T

    def point(t):
        u = rs.fold(u0 + t @ T)
        return u / np.linalg.norm(u)

    res = optimize.minimize(
        lambda t: -_finite(float(f(point(t)[None])[0])),
        np.zeros(rs.rank - 1), method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-13, "initial_simplex": _simplex(rs.rank - 1, 0.02)},
    )
    return float(-res.fun), point(res.x)


def _simplex(d: int, h: float) -> np.ndarray:
    return np.vstack([np.zeros(d), h * np.eye(d)])


# -- psi as a function on unit vectors ----------------------------------


def unit_function(rs: RootSystem, psi: Psi) -> UnitFn:
    if isinstance(psi, GrowthIndicatorEstimate):
        return psi.value_at
    if isinstance(psi, PsiModel):
        def f(U):
            vals = np.asarray(psi.unit_values(U), dtype=float)
            if psi.support is not None:
                vals = np.where(psi.support.contains(U), vals, -np.inf)
            return vals
        return f
    raise TypeError(f"expected a PsiModel or GrowthIndicatorEstimate, got {type(psi).__name__}")


def sup_over_directions(rs: RootSystem, psi: Psi, g: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> ChamberSup:
    """sup over directions of ``g(psi(u), u)``; estimates use their own directions."""
    f = unit_function(rs, psi)
    if isinstance(psi, GrowthIndicatorEstimate):
        U = psi.directions
        with np.errstate(invalid="ignore"):
            vals = np.where(np.isfinite(psi.values), g(psi.values, U), -np.inf)
        if np.all(vals == -np.inf):
            return ChamberSup(-np.inf, None)
        i = int(np.argmax(vals))
        return ChamberSup(float(vals[i]), U[i])

    def h(U):
        p = f(U)
        with np.errstate(invalid="ignore"):
            return np.where(np.isfinite(p), g(p, U), -np.inf)

    return chamber_sup(rs, h)


def _rho_pairing_checked(rs: RootSystem, U: np.ndarray) -> np.ndarray:
    p = rs.rho_pairing(U)
    if np.any(p <= RHO_PAIRING_FLOOR):
        raise AssertionError("<rho, u> vanished on a chamber direction")
    return p


def excess_over_rho(rs: RootSystem, psi: Psi) -> ChamberSup:
    """``sup_u psi(u) - <rho, u>``; nonpositive exactly when psi <= rho."""
    return sup_over_directions(rs, psi, lambda p, U: p - rs.rho_pairing(U))


def rho_ratio(rs: RootSystem, psi: Psi) -> ChamberSup:
    """``sup_u psi(u) |rho| / <rho, u>``."""
    return sup_over_directions(rs, psi, lambda p, U: p * rs.rho_norm / _rho_pairing_checked(rs, U))


def psi_sup(rs: RootSystem, psi: Psi) -> ChamberSup:
    return sup_over_directions(rs, psi, lambda p, U: p)


def psi_below_rho(rs: RootSystem, psi: Psi, tol: float = 0.0) -> bool:
    return excess_over_rho(rs, psi).value <= tol


def psi_on_rho_axis(rs: RootSystem, psi: Psi) -> float:
    return float(unit_function(rs, psi)(rs.rho_unit[None])[0])


def deviation_from_2rho(rs: RootSystem, psi: Psi) -> float:
    """max over grid directions of ``|psi(u) - 2 <rho, u>|`` (inf if psi is -inf anywhere)."""
    if isinstance(psi, GrowthIndicatorEstimate):
        U, p = psi.directions, psi.values
    else:
        U = _grid(rs)
        p = unit_function(rs, psi)(U)
    if not np.all(np.isfinite(p)):
        return np.inf
    return float(np.max(np.abs(p - 2.0 * rs.rho_pairing(U))))


# -- the closed forms ---------------------------------------------------


def delta_tilde_from_psi(rs: RootSystem, psi: Psi) -> float:
    """Modified critical exponent determined by the growth indicator.

    ``sup psi |rho| / <rho, u>`` when ``psi <= rho`` (floored at 0), else
    ``sup (psi - <rho, u>) + |rho|``, sups over unit chamber vectors.  A psi
    that is ``-inf`` everywhere gives 0 with a ``DegeneratePsiWarning``.
    """
    S = excess_over_rho(rs, psi).value
    if S == -np.inf:
        warnings.warn("growth indicator is -inf in every direction; taking 0", DegeneratePsiWarning, stacklevel=2)
        return 0.0
    if S <= 0.0:
        return max(rho_ratio(rs, psi).value, 0.0)
    return S + rs.rho_norm


def lambda0_from_delta_tilde(rs: RootSystem, delta_tilde: float) -> float:
    """``|rho|^2`` up to ``|rho|``, then ``|rho|^2 - (delta_tilde - |rho|)^2``."""
    r = rs.rho_norm
    if not 0.0 <= delta_tilde <= 2 * r:
        warnings.warn(f"delta_tilde = {delta_tilde!r} outside [0, 2|rho|]; clamped", RuntimeWarning, stacklevel=2)
        delta_tilde = min(max(delta_tilde, 0.0), 2 * r)
    if delta_tilde <= r:
        return r * r
    return max(r * r - (delta_tilde - r) ** 2, 0.0)


def lambda0_from_psi(rs: RootSystem, psi: Psi) -> float:
    """``|rho|^2 - max(0, sup (psi - <rho, u>))^2``, clamped to ``[0, |rho|^2]``."""
    r = rs.rho_norm
    S = max(excess_over_rho(rs, psi).value, 0.0)
    return min(max(r * r - S * S, 0.0), r * r)


# -- gauge-family bounds ------------------------------------------------


@dataclass(frozen=True)
class GaugeBounds:
    family: str
    delta: float
    threshold: float  # inf{s : d_s > psi on unit chamber vectors}
    threshold_margin: float  # threshold - delta
    domination_margin: float  # min_u d_delta(u) - psi(u)

    @property
    def holds(self) -> bool:
        return min(self.threshold_margin, self.domination_margin) >= -ANALYTIC_TOL


def dominance_gap(rs: RootSystem, psi: Psi, family: GaugeFamily, s: float) -> float:
    """``sup_u psi(u) - d_s(u)``; negative when ``d_s`` dominates psi."""
    return sup_over_directions(rs, psi, lambda p, U: p - family(s, U)).value


def domination_threshold(rs: RootSystem, psi: Psi, family: GaugeFamily, tol: float = 1e-12) -> float:
    """``inf{s : d_s > psi}`` on ``[0, 4 |rho|]``.

    The dominance gap is continuous and nonincreasing in ``s`` for monotone
    families, so a bracketing root finder replaces plain bisection.
    """
    lo, hi = 0.0, 4.0 * rs.rho_norm
    if dominance_gap(rs, psi, family, hi) >= 0:
        raise BracketError(f"{family.label} does not dominate psi up to s = {hi:.6g}")
    if dominance_gap(rs, psi, family, lo) < 0:
        return 0.0
    return float(optimize.brentq(lambda s: dominance_gap(rs, psi, family, s), lo, hi, xtol=tol))


def gauge_exponent_bounds(rs: RootSystem, psi: Psi, family: GaugeFamily, delta: float) -> GaugeBounds:
    """Margins of ``delta <= inf{s : d_s > psi}`` and ``psi <= d_delta``.

    Both margins are nonnegative when ``delta`` is the convergence exponent
    of ``sum exp(-d_s(mu))`` over an orbit realising ``psi``.
    """
    t = domination_threshold(rs, psi, family)
    return GaugeBounds(family.label, float(delta), t, t - delta, -dominance_gap(rs, psi, family, delta))


def family_exponent_from_psi(rs: RootSystem, psi: Psi, family: GaugeFamily) -> float:
    """``sup_u inf{s : d_s(u) > psi(u)}`` with a per-direction root solve.

    For the Riemannian family this is ``sup psi``; for the hybrid gauge it
    reproduces ``delta_tilde_from_psi``.
    """
    hi = 4.0 * rs.rho_norm

    def per_direction(p, U):
        # vectorised bisection of s -> d_s(u) - psi(u) over all directions
        lo, up = np.zeros(len(U)), np.full(len(U), hi)
        above0 = family(0.0, U) > p
        unbounded = family(hi, U) <= p
        for _ in range(64):
            mid = 0.5 * (lo + up)
            over = family(mid, U) > p
            up = np.where(over, mid, up)
            lo = np.where(over, lo, mid)
        return np.where(above0, 0.0, np.where(unbounded, np.inf, up))

    v = sup_over_directions(rs, psi, per_direction).value
    if v == np.inf:
        raise BracketError(f"{family.label} does not dominate psi up to s = {hi:.6g}")
    return max(v, 0.0)


# -- condition report ---------------------------------------------------

CONDITION_KEYS = (
    "delta_tilde_small",      # delta_tilde <= |rho|
    "psi_below_rho",          # psi <= rho
    "lambda0_maximal",        # lambda0 = |rho|^2
    "delta_maximal",          # delta = 2|rho|
    "delta_tilde_maximal",    # delta_tilde = 2|rho|
    "lambda0_zero",           # lambda0 = 0
    "psi_is_2rho",            # psi = 2 rho on every direction
    "psi_2rho_on_rho_axis",   # psi(rho/|rho|) = 2|rho|
)
METADATA_KEYS = ("tempered", "finite_covolume")


@dataclass(frozen=True)
class SpectralReport:
    rank: int
    rho_norm: float
    delta: float
    delta_tilde: float
    lambda0_from_delta_tilde: float
    lambda0_from_psi: float
    conditions: dict[str, bool | None]
    sources: dict[str, str]
    regime: str
    tol: float
    consistent: bool
    consistency_gap: float
    warnings: tuple[str, ...] = field(default=())

    def items(self) -> list[tuple[str, str]]:
        out = [
            ("rank", str(self.rank)),
            ("rho_norm", _num(self.rho_norm)),
            ("delta", _num(self.delta)),
            ("delta_tilde", _num(self.delta_tilde)),
            ("lambda0_from_delta_tilde", _num(self.lambda0_from_delta_tilde)),
            ("lambda0_from_psi", _num(self.lambda0_from_psi)),
            ("regime", self.regime),
            ("tol", _num(self.tol)),
            ("consistent", str(self.consistent).lower()),
            ("consistency_gap", _num(self.consistency_gap)),
        ]
        for k in CONDITION_KEYS + METADATA_KEYS:
            out.append((f"condition.{k}", _flag(self.conditions.get(k))))
        for k, v in self.sources.items():
            out.append((f"source.{k}", v))
        out.append(("warnings", "|".join(self.warnings)))
        return out

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items())

    def to_csv(self) -> str:
        items = self.items()
        buf = io.StringIO()
        buf.write(",".join(k for k, _ in items) + "\n")
        buf.write(",".join(_csv_cell(v) for _, v in items) + "\n")
        return buf.getvalue()


def _num(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _flag(v: bool | None) -> str:
    return "na" if v is None else str(bool(v)).lower()


def _csv_cell(v: str) -> str:
    return f'"{v}"' if ("," in v or '"' in v) else v


def parse_keyvalue(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise ValueError(f"not a key=value line: {line!r}")
        out[k.strip()] = v.strip()
    return out


def _value(x) -> tuple[float | None, str | None]:
    if x is None:
        return None, None
    if isinstance(x, GrowthRateEstimate):
        return float(x.value), f"dataset:{x.method}"
    return float(x), "analytic"


def check_conditions(
    rs: RootSystem,
    delta=None,
    delta_tilde=None,
    psi: Psi | None = None,
    tempered: bool | None = None,
    finite_covolume: bool | None = None,
    tol: float | None = None,
) -> SpectralReport:
    """Evaluate the equivalent conditions for ``lambda0 = |rho|^2`` and the
    implications around ``lambda0 = 0``.

    ``delta`` and ``delta_tilde`` are numbers or ``GrowthRateEstimate``;
    ``psi`` is a model or an estimate.  The tolerance defaults to 1e-6 when
    every input is analytic and 0.05 otherwise.  When an explicit
    ``delta_tilde`` disagrees with the value implied by ``psi`` by more than
    twice the tolerance the inputs are inconsistent and every flag is
    withheld.  Temperedness and finite covolume are passed through from the
    caller and never computed.
    """
    if delta_tilde is None and psi is None:
        raise ValueError("need at least delta_tilde or psi")
    r = rs.rho_norm
    notes: list[str] = []
    d, d_src = _value(delta)
    dt, dt_src = _value(delta_tilde)
    sources: dict[str, str] = {}
    if d_src:
        sources["delta"] = d_src
    if psi is not None:
        sources["psi"] = "dataset:growth_indicator" if isinstance(psi, GrowthIndicatorEstimate) else f"analytic:{psi.label()}"
    dataset = any(v.startswith("dataset") for v in sources.values()) or (dt_src or "").startswith("dataset")
    regime = "dataset" if dataset else "analytic"
    if tol is None:
        tol = DATASET_TOL if dataset else ANALYTIC_TOL

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        dt_psi = delta_tilde_from_psi(rs, psi) if psi is not None else None
        if dt is None:
            dt, dt_src = dt_psi, "derived:psi"
        sources["delta_tilde"] = dt_src
        lam_dt = lambda0_from_delta_tilde(rs, dt)
        lam_psi = lambda0_from_psi(rs, psi) if psi is not None else math.nan
    notes.extend(str(w.message) for w in caught)

    gap = abs(dt - dt_psi) if dt_psi is not None else 0.0
    consistent = gap <= 2 * tol

    flags: dict[str, bool | None] = {k: None for k in CONDITION_KEYS}
    if consistent:
        flags["delta_tilde_small"] = dt <= r + tol
        flags["lambda0_maximal"] = lam_dt >= r * r - tol * tol
        flags["delta_tilde_maximal"] = abs(dt - 2 * r) <= tol
        # the preimage of |delta_tilde - 2|rho|| <= tol under the lambda0 map
        flags["lambda0_zero"] = lam_dt <= 2 * r * tol - tol * tol
        if d is not None:
            flags["delta_maximal"] = abs(d - 2 * r) <= tol
        if psi is not None:
            flags["psi_below_rho"] = psi_below_rho(rs, psi, tol)
            flags["psi_is_2rho"] = deviation_from_2rho(rs, psi) <= tol
            flags["psi_2rho_on_rho_axis"] = abs(psi_on_rho_axis(rs, psi) - 2 * r) <= tol
    else:
        notes.append(
            f"inconsistent inputs: delta_tilde = {dt:.6g} but psi implies {dt_psi:.6g} "
            f"(gap {gap:.3g} > {2 * tol:.3g}); flags withheld"
        )
    flags["tempered"] = tempered
    flags["finite_covolume"] = finite_covolume
    return SpectralReport(
        rank=rs.rank,
        rho_norm=r,
        delta=math.nan if d is None else d,
        delta_tilde=dt,
        lambda0_from_delta_tilde=lam_dt,
        lambda0_from_psi=lam_psi,
        conditions=flags,
        sources=sources,
        regime=regime,
        tol=tol,
        consistent=consistent,
        consistency_gap=gap,
        warnings=tuple(notes),
    )
