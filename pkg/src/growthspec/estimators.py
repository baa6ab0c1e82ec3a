"""Counting estimators for critical exponents and the growth indicator.

All exponents are read off as the least-squares slope of ``log N(R)``
against ``R`` over the top ``window_fraction`` of the usable radius range,
where ``N(R)`` counts (or sums weights over) orbit points with gauge value
at most ``R``.  ``N`` is evaluated at its own jump points, the last data
point at or below each of an even grid of radii, so step-function floors do
not bias the slope.

The usable range stops where the dataset stops being complete: the
generation radius for synthetic data, the smallest norm on the outermost
sphere for word balls, scaled by the gauge's minimum on unit vectors.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

from growthspec.chamber import GaugeFamily, RootSystem, direction_grid
from growthspec.orbits import OrbitDataset

DEFAULT_WINDOW = 0.4
DEFAULT_CONE_ANGLES = (0.15, 0.1, 0.05)
MIN_SAMPLES = 10
# shell width for the twisted sums, as a fraction of the regression window
SHELL_FRACTION = 0.5
N_EVAL = 256

Gauge = Callable[[np.ndarray], np.ndarray]


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class GrowthRateEstimate:
    value: float
    window: tuple[float, float]
    stderr: float
    sample_count: int
    method: str = "counting"

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("empty regression window")


def norm_gauge(rs: RootSystem) -> Gauge:
    return lambda H: rs.norm(H)


def polyhedral_gauge(rs: RootSystem) -> Gauge:
    """``H -> <rho/|rho|, H>``."""
    return lambda H: rs.rho_pairing(H) / rs.rho_norm


def resolve_gauge(rs: RootSystem, gauge) -> tuple[Gauge, str]:
    if gauge is None or gauge == "norm":
        return norm_gauge(rs), "norm"
    if gauge == "polyhedral":
        return polyhedral_gauge(rs), "polyhedral"
    if callable(gauge):
        return gauge, getattr(gauge, "__name__", "custom")
    raise ValueError(f"unknown gauge {gauge!r}")


def growth_fit(
    values: np.ndarray,
    r_hi: float,
    window_fraction: float = DEFAULT_WINDOW,
    weights: np.ndarray | None = None,
    method: str = "counting",
    shell: float | None = None,
) -> GrowthRateEstimate:
    """Slope of ``log sum_{v_i <= R} w_i`` over ``R`` in the top window of ``[0, r_hi]``.

    With ``shell`` set, the sums run over ``R - width < v_i <= R`` instead,
    ``width`` being that fraction of the window.  Shells drop the additive
    constant a convergent head of the sum contributes, which otherwise biases
    slow growth rates upward.
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    if not r_hi > 0 or not math.isfinite(r_hi):
        raise InsufficientData("zero radius range")
    values = np.asarray(values, dtype=float)
    keep = values <= r_hi
    v = values[keep]
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)[keep]
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cum = np.cumsum(w)
    lo = (1.0 - window_fraction) * r_hi
    in_window = int(np.count_nonzero(v >= lo))
    if in_window < MIN_SAMPLES:
        raise InsufficientData(f"only {in_window} records in the window [{lo:.4g}, {r_hi:.4g}]")
    grid = np.linspace(lo, r_hi, N_EVAL)
    idx = np.searchsorted(v, grid, side="right") - 1
    idx = np.unique(idx[idx >= 0])
    idx = idx[v[idx] >= lo]
    x, y = v[idx], np.log(cum[idx])
    if shell is not None:
        width = shell * (r_hi - lo)
        below = np.searchsorted(v, x - width, side="right") - 1
        y = np.log(cum[idx] - np.where(below >= 0, cum[np.maximum(below, 0)], 0.0))
    if len(x) < 3 or np.ptp(x) == 0:
        raise InsufficientData("fewer than three distinct radii in the window")
    fit = stats.linregress(x, y)
    return GrowthRateEstimate(float(fit.slope), (lo, r_hi), float(fit.stderr), in_window, method)


def counting_exponent(
    ds: OrbitDataset, gauge=None, window_fraction: float = DEFAULT_WINDOW
) -> GrowthRateEstimate:
    """Exponential growth rate of ``#{gamma : gauge(mu(gamma)) <= R}``.

    ``gauge`` is ``"norm"`` (default), ``"polyhedral"`` or a callable on
    stacks of chamber vectors that is positive away from 0.
    """
    if len(ds) == 0:
        raise InsufficientData("empty dataset")
    rs = ds.root_system
    g, name = resolve_gauge(rs, gauge)
    r_hi = ds.radius_limit() * rs.min_on_unit_sphere(g)
    return growth_fit(g(ds.mu), r_hi, window_fraction, method=f"counting[{name}]")


def twisted_exponent(
    ds: OrbitDataset, window_fraction: float = DEFAULT_WINDOW, shell: float = SHELL_FRACTION
) -> GrowthRateEstimate:
    """Growth rate of ``sum exp(-<rho, mu>)`` over norm shells ``R - w < |mu| <= R``."""
    w = np.exp(-(ds.rho_pairing - ds.rho_pairing.min()))
    return growth_fit(ds.norm, ds.radius_limit(), window_fraction, weights=w, method="twisted", shell=shell)


def modified_critical_exponent(ds: OrbitDataset, window_fraction: float = DEFAULT_WINDOW) -> GrowthRateEstimate:
    """Two-stage estimate of the exponent of ``sum exp(-d_s(mu))``.

    Below ``|rho|`` the hybrid gauge is ``s`` times the polyhedral gauge, so
    the exponent is the polyhedral counting rate when that rate is at most
    ``|rho|``.  Otherwise it is ``|rho|`` plus the growth rate of the
    rho-twisted partial sums in the norm.  Clamped to ``[0, 2|rho|]``.
    """
    rs = ds.root_system
    r = rs.rho_norm
    tau = counting_exponent(ds, "polyhedral", window_fraction)
    if tau.value <= r:
        value = min(max(tau.value, 0.0), 2 * r)
        return GrowthRateEstimate(value, tau.window, tau.stderr, tau.sample_count, "modified[polyhedral]")
    beta = twisted_exponent(ds, window_fraction)
    value = min(max(r + beta.value, r), 2 * r)
    return GrowthRateEstimate(value, beta.window, beta.stderr, beta.sample_count, "modified[twisted]")


def gauge_family_exponent(
    ds: OrbitDataset, family: GaugeFamily, window_fraction: float = DEFAULT_WINDOW, tol: float = 1e-6
) -> float:
    """Convergence exponent of ``sum exp(-d_s(mu))`` for an arbitrary gauge family.

    The series converges once the counting rate of ``{d_s(mu) <= R}`` drops
    below 1; the crossing is located by root finding in ``s``.
    """
    rs = ds.root_system
    hi = 4.0 * rs.rho_norm

    def excess(s):
        g = lambda H: family(s, H)  # noqa: E731
        r_hi = ds.radius_limit() * rs.min_on_unit_sphere(g)
        return growth_fit(g(ds.mu), r_hi, window_fraction).value - 1.0

    if excess(hi) >= 0:
        raise InsufficientData(f"counting rate stays >= 1 up to s = {hi:.4g}")
    lo = 1e-3 * hi
    if excess(lo) < 0:
        return 0.0
    return float(optimize.brentq(excess, lo, hi, xtol=tol))


def partial_sum_exponent(values: np.ndarray, r_hi: float) -> float:
    """Debug oracle: ``s`` at which the sums of ``exp(-s v)`` over the equal
    shells ``(r/2, 3r/4]`` and ``(3r/4, r]`` balance.

    At the true growth rate the summand density is flat in ``v``, so equal
    shells carry equal mass.  A truncated series cannot certify divergence,
    so this is only a cross-check of the regression estimators.
    """
    v = np.asarray(values, dtype=float)
    outer = v[(v > 0.75 * r_hi) & (v <= r_hi)]
    inner = v[(v > 0.5 * r_hi) & (v <= 0.75 * r_hi)]
    if len(outer) == 0 or len(inner) == 0:
        raise InsufficientData("empty shells")

    def balance(s):
        return special.logsumexp(-s * outer) - special.logsumexp(-s * inner)

    a, b = -10.0, 10.0
    return float(optimize.brentq(balance, a, b)) if balance(a) * balance(b) < 0 else float("nan")


# -- growth indicator ---------------------------------------------------


@dataclass(eq=False)
class GrowthIndicatorEstimate:
    directions: np.ndarray
    values: np.ndarray
    cone_angles: tuple[float, ...]
    extrapolated: bool
    slopes: np.ndarray = field(default=None)
    stderrs: np.ndarray = field(default=None)

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        k, e = len(self.directions), len(self.cone_angles)
        if self.slopes is None:
            self.slopes = np.full((k, e), np.nan)
        if self.stderrs is None:
            self.stderrs = np.full((k, e), np.nan)

    def value_at(self, H) -> np.ndarray:
        """Homogeneous nearest-direction lookup."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        r = np.linalg.norm(H, axis=1)
        out = np.zeros(len(H))
        nz = r > 0
        if np.any(nz):
            U = H[nz] / r[nz, None]
            j = np.argmax(U @ self.directions.T, axis=1)
            out[nz] = r[nz] * self.values[j]
        return out

    def max_value(self) -> float:
        """sup over directions; ``-inf`` entries are absorbing-minimal."""
        return float(np.max(self.values)) if len(self.values) else -np.inf

    def admissibility_excess(self, rs: RootSystem) -> float:
        finite = np.isfinite(self.values)
        if not np.any(finite):
            return -np.inf
        return float(np.max(self.values[finite] - 2 * rs.rho_pairing(self.directions[finite])))


def growth_indicator(
    ds: OrbitDataset,
    directions: np.ndarray | int | None = None,
    cone_angles: Sequence[float] = DEFAULT_CONE_ANGLES,
    extrapolate: bool = True,
    window_fraction: float = DEFAULT_WINDOW,
) -> GrowthIndicatorEstimate:
    """Per-direction slope of ``log #{mu in C(u, eps), |mu| <= R}``.

    ``C(u, eps)`` is the round cone ``<u, H/|H|> >= cos eps``.  The reported
    value is the linear extrapolation to ``eps = 0`` through the two smallest
    angles, or the smallest-angle slope when ``extrapolate`` is off.  A
    direction whose smallest cone has fewer than ten points in the window
    reports ``-inf``.
    """
    if len(ds) == 0:
        raise InsufficientData("empty dataset")
    rs = ds.root_system
    angles = tuple(float(a) for a in cone_angles)
    if any(a <= b for a, b in zip(angles, angles[1:])) or not angles:
        raise ValueError("cone_angles must be strictly decreasing")
    if extrapolate and len(angles) < 2:
        raise ValueError("extrapolation needs at least two cone angles")
    if directions is None or isinstance(directions, (int, np.integer)):
        directions = direction_grid(rs, 9 if directions is None else int(directions))
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    r_hi = ds.radius_limit()
    nz = ds.norm > 0
    pts = ds.mu[nz] / ds.norm[nz, None]
    norms = ds.norm[nz]
    n_id = int(np.count_nonzero(~nz))

    slopes = np.full((len(U), len(angles)), -np.inf)
    errs = np.full((len(U), len(angles)), np.nan)
    values = np.full(len(U), -np.inf)
    for i, u in enumerate(U):
        cos = pts @ u
        for j, eps in enumerate(angles):
            inside = norms[cos >= math.cos(eps)]
            # the identity sits in every cone's closure
            vals = np.concatenate([np.zeros(n_id), inside])
            try:
                fit = growth_fit(vals, r_hi, window_fraction)
            except InsufficientData:
                continue
            slopes[i, j], errs[i, j] = fit.value, fit.stderr
        if not np.isfinite(slopes[i, -1]):
            continue
        if extrapolate:
            ea, eb = angles[-2], angles[-1]
            sa, sb = slopes[i, -2], slopes[i, -1]
            values[i] = sb - eb * (sa - sb) / (ea - eb)
        else:
            values[i] = slopes[i, -1]
    return GrowthIndicatorEstimate(U, values, angles, extrapolate, slopes, errs)


@dataclass(frozen=True)
class ExponentPsiCheck:
    psi_max: float
    delta: float
    discrepancy: float


def classical_exponent_from_psi_check(est: GrowthIndicatorEstimate, delta: GrowthRateEstimate) -> ExponentPsiCheck:
    """Compare ``max_u psi(u)`` over unit directions with the counting exponent."""
    top = est.max_value()
    return ExponentPsiCheck(top, delta.value, abs(top - delta.value) if np.isfinite(top) else np.inf)


# -- CSV report ---------------------------------------------------------


def _fmt(x: float) -> str:
    if np.isnan(x):
        return ""
    if np.isinf(x):
        return "-inf" if x < 0 else "inf"
    return f"{x:.17g}"


def estimate_csv(
    est: GrowthIndicatorEstimate, summary: dict[str, object], preamble: Sequence[str] = ()
) -> str:
    """``direction_index,u_1..u_d,epsilon,slope,stderr`` rows plus a summary block.

    Rows with ``epsilon = 0`` carry each direction's final estimate.  The
    summary block follows as ``# summary key = value`` lines.
    """
    d = est.directions.shape[1]
    out = io.StringIO()
    for line in preamble:
        out.write(f"# {line}\n")
    out.write("direction_index," + ",".join(f"u_{k + 1}" for k in range(d)) + ",epsilon,slope,stderr\n")
    for i, u in enumerate(est.directions):
        ucols = ",".join(_fmt(x) for x in u)
        for j, eps in enumerate(est.cone_angles):
            out.write(f"{i},{ucols},{_fmt(eps)},{_fmt(est.slopes[i, j])},{_fmt(est.stderrs[i, j])}\n")
        out.write(f"{i},{ucols},0,{_fmt(est.values[i])},\n")
    for key, value in summary.items():
        if isinstance(value, float):
            value = _fmt(value)
        out.write(f"# summary {key} = {value}\n")
    return out.getvalue()


def read_estimate_csv(path) -> tuple[GrowthIndicatorEstimate, dict[str, str]]:
    text = Path(path).read_text(encoding="utf-8")
    summary: dict[str, str] = {}
    rows = []
    header = None
    for line in text.splitlines():
        if line.startswith("# summary "):
            key, _, value = line[len("# summary "):].partition(" = ")
            summary[key.strip()] = value.strip()
        elif line.startswith("#") or not line.strip():
            continue
        elif header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no estimate table found")
    d = len(header) - 4
    by_dir: dict[int, dict] = {}
    for r in rows:
        i = int(r[0])
        entry = by_dir.setdefault(i, {"u": [float(x) for x in r[1:1 + d]], "eps": [], "slope": [], "err": []})
        eps = float(r[1 + d])
        slope = float(r[2 + d]) if r[2 + d] else np.nan
        err = float(r[3 + d]) if r[3 + d] else np.nan
        if eps == 0.0:
            entry["value"] = slope
        else:
            entry["eps"].append(eps)
            entry["slope"].append(slope)
            entry["err"].append(err)
    keys = sorted(by_dir)
    angles = tuple(by_dir[keys[0]]["eps"]) if keys else ()
    est = GrowthIndicatorEstimate(
        np.array([by_dir[k]["u"] for k in keys]),
        np.array([by_dir[k].get("value", -np.inf) for k in keys]),
        angles,
        summary.get("extrapolated", "True") == "True",
        np.array([by_dir[k]["slope"] for k in keys]),
        np.array([by_dir[k]["err"] for k in keys]),
    )
    return est, summary


def counting_curve(ds: OrbitDataset, gauge=None, points: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """``(R, log N(R))`` samples across the usable range, for plotting."""
    rs = ds.root_system
    g, _ = resolve_gauge(rs, gauge)
    r_hi = ds.radius_limit() * rs.min_on_unit_sphere(g)
    v = np.sort(g(ds.mu))
    R = np.linspace(0.0, r_hi, points)
    n = np.searchsorted(v, R, side="right")
    with np.errstate(divide="ignore"):
        return R, np.log(n)
