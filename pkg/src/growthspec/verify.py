"""Self-check suites behind ``growthspec verify``.

Each check returns a ``Check`` with the largest observed violation and the
tolerance it was held to; a suite passes when every check does.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from growthspec.cartan import GroupElement, cartan_projection, random_rotation
from growthspec.chamber import (
    build_root_system,
    convex_combination,
    d_s,
    d_s_cases,
    norm_family,
    polyhedral_family,
    verify_gauge_family,
)
from growthspec.estimators import counting_exponent, growth_indicator, modified_critical_exponent
from growthspec.orbits import enumerate_ball, parse_generators
from growthspec.spectrum import (
    check_conditions,
    delta_tilde_from_psi,
    excess_over_rho,
    gauge_exponent_bounds,
    lambda0_from_delta_tilde,
    lambda0_from_psi,
    psi_sup,
    sup_over_directions,
)
from growthspec.synth import Linear, MinLinear, SphericalCap, SynthConfig, sample_orbit


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> Check:
    t = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return Check(name, bool(ok), detail, time.perf_counter() - t)


def random_minlinear(rs, rng, k: int = 3, scale=(0.2, 1.5)) -> MinLinear:
    phis = rs.random_chamber(rng, k)
    phis /= np.linalg.norm(phis, axis=1, keepdims=True)
    return MinLinear(phis * rng.uniform(*scale, size=(k, 1)) * rs.rho_norm)


# -- gauge --------------------------------------------------------------


def check_gauge_identities(samples: int = 10_000, seed: int = 0) -> Check:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for g in ("sl2", "sl3", "sl2xsl2"):
            rs = build_root_system(g)
            r = rs.rho_norm
            n = samples // 3
            H = rs.random_chamber(rng, n)
            s = rng.uniform(0, 3 * r, n)
            lam = rng.uniform(0.1, 10, n)
            a = np.array([d_s(rs, si, h) for si, h in zip(s, H)])
            b = np.array([d_s_cases(rs, si, h) for si, h in zip(s, H)])
            worst = max(worst, np.max(np.abs(a - b)))
            scaled = np.array([d_s(rs, si, li * h) for si, li, h in zip(s, lam, H)])
            worst = max(worst, np.max(np.abs(scaled - lam * a) / np.maximum(1, np.abs(lam * a))))
            s2 = s + rng.uniform(0, r, n)
            bigger = np.array([d_s(rs, si, h) for si, h in zip(s2, H)])
            worst = max(worst, np.max(np.maximum(a - bigger, 0)))
            at_rho = d_s(rs, r, H)
            worst = max(worst, np.max(np.abs(at_rho - rs.rho_pairing(H))))
        return worst <= 1e-12, f"max violation {worst:.3g} <= 1e-12"

    return _timed("gauge identities", run)


def check_gauge_families() -> Check:
    def run():
        bad = []
        for g in ("sl2", "sl3", "sl2xsl2"):
            rs = build_root_system(g)
            for fam in (polyhedral_family(rs), norm_family(rs),
                        convex_combination(norm_family(rs), polyhedral_family(rs))):
                audit = verify_gauge_family(fam, rs)
                if not audit.passed:
                    bad.append(f"{g}/{fam.label}: {audit.failures}")
        return not bad, "; ".join(bad) or "all families pass"

    return _timed("gauge family axioms", run)


# -- cartan -------------------------------------------------------------


def _random_element(rs, rng, spread=3.0) -> GroupElement:
    H = rs.random_chamber(rng, 1)[0]
    H *= rng.uniform(0, spread) / max(rs.norm(H), 1e-12)
    blocks = []
    for blk, n in zip(rs.blocks, rs.descriptor.factors):
        k1, k2 = random_rotation(rng, n), random_rotation(rng, n)
        blocks.append(k1 @ np.diag(np.exp(H[blk])) @ k2)
    return GroupElement(tuple(blocks))


def check_cartan(samples: int = 1000, seed: int = 0, tol: float = 1e-9) -> Check:
    def run():
        rng = np.random.default_rng(seed)
        worst = {"bi-invariance": 0.0, "inverse": 0.0, "subadditivity": 0.0, "chamber": 0.0}
        for g in ("sl2", "sl3"):
            rs = build_root_system(g)
            n = rs.descriptor.factors[0]
            for _ in range(samples):
                a, b = _random_element(rs, rng), _random_element(rs, rng)
                mu = cartan_projection(rs, a)
                k1, k2 = random_rotation(rng, n), random_rotation(rng, n)
                rot = GroupElement((k1 @ a.blocks[0] @ k2,))
                worst["bi-invariance"] = max(worst["bi-invariance"], np.max(np.abs(cartan_projection(rs, rot) - mu)))
                inv = cartan_projection(rs, a.inverse())
                worst["inverse"] = max(worst["inverse"], np.max(np.abs(inv + mu[::-1])))
                mu_ab = cartan_projection(rs, a @ b)
                gap = rs.norm(mu_ab - mu) - rs.norm(cartan_projection(rs, b))
                worst["subadditivity"] = max(worst["subadditivity"], gap)
                worst["chamber"] = max(worst["chamber"], -np.min(rs.root_values(mu_ab)))
        ok = all(v <= tol for v in worst.values())
        return ok, ", ".join(f"{k} {v:.2g}" for k, v in worst.items()) + f" (tol {tol:g})"

    return _timed("cartan projection", run)


# -- analytic -----------------------------------------------------------


def check_lambda0_identity(models: int = 100, seed: int = 0) -> Check:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        groups = ("sl2", "sl2xsl2", "sl3", "sl2xsl2xsl2")
        for i in range(models):
            rs = build_root_system(groups[i % len(groups)])
            m = random_minlinear(rs, rng, scale=(0.1, 2.2))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                a = lambda0_from_psi(rs, m)
                b = lambda0_from_delta_tilde(rs, delta_tilde_from_psi(rs, m))
            worst = max(worst, abs(a - b))
        return worst <= 1e-9, f"max disagreement {worst:.3g} <= 1e-9 over {models} models"

    return _timed("lambda0 identity", run)


def check_delta_tilde_examples() -> Check:
    def run():
        msgs = []
        for g in ("sl2", "sl3", "sl2xsl2"):
            rs = build_root_system(g)
            r = rs.rho_norm
            for c, want in ((0.8, 0.8 * r), (2.0, 2 * r), (0.5, 0.5 * r), (1.5, 1.5 * r)):
                got = delta_tilde_from_psi(rs, Linear.scaled_rho(rs, c))
                if abs(got - want) > 1e-9:
                    msgs.append(f"{g} c={c}: {got} != {want}")
            if abs(lambda0_from_psi(rs, Linear.scaled_rho(rs, 2.0))) > 1e-9:
                msgs.append(f"{g}: lambda0 of 2rho not 0")
        rs1 = build_root_system("sl2")
        for c in (0.3, 0.7, 1.0, 1.4):
            got = delta_tilde_from_psi(rs1, SphericalCap(c))
            if abs(got - c) > 1e-12:
                msgs.append(f"rank one collapse c={c}: {got}")
        return not msgs, "; ".join(msgs) or "closed forms and rank-one collapse agree"

    return _timed("modified exponent closed forms", run)


def check_branch_and_monotonicity(models: int = 40, seed: int = 1) -> Check:
    def run():
        rng = np.random.default_rng(seed)
        msgs = []
        for i in range(models):
            rs = build_root_system(("sl3", "sl2xsl2")[i % 2])
            m = random_minlinear(rs, rng)
            dt = delta_tilde_from_psi(rs, m)
            below = excess_over_rho(rs, m).value <= 0
            if below != (dt <= rs.rho_norm):
                msgs.append(f"branch mismatch on model {i}")
            bump = MinLinear(m.phis + 0.2 * rs.random_chamber(rng, 1))
            if delta_tilde_from_psi(rs, bump) < dt - 1e-12:
                msgs.append(f"monotonicity broken on model {i}")
        return not msgs, "; ".join(msgs) or f"{models} models coherent and monotone"

    return _timed("branch coherence and monotonicity", run)


def combination_exponent(rs, psi) -> float:
    """Closed-form exponent for ``(s|H| + d_s(H)) / 2``, direction by direction."""
    r = rs.rho_norm

    def s_u(p, U):
        q = rs.rho_pairing(U) / r
        low = 2 * p / (1 + q)
        return np.where(low <= r, low, p + (r - r * q) / 2)

    return max(sup_over_directions(rs, psi, s_u).value, 0.0)


def check_gauge_bounds(models: int = 20, seed: int = 2) -> Check:
    def run():
        rng = np.random.default_rng(seed)
        worst = np.inf
        for i in range(models):
            rs = build_root_system(("sl2", "sl2xsl2", "sl3")[i % 3])
            m = random_minlinear(rs, rng, scale=(0.2, 1.9))
            fams = (
                (norm_family(rs), psi_sup(rs, m).value),
                (polyhedral_family(rs), delta_tilde_from_psi(rs, m)),
                (convex_combination(norm_family(rs), polyhedral_family(rs)), combination_exponent(rs, m)),
            )
            for fam, delta in fams:
                b = gauge_exponent_bounds(rs, m, fam, delta)
                worst = min(worst, b.threshold_margin, b.domination_margin)
        return worst >= -1e-6, f"smallest margin {worst:.3g} >= -1e-6"

    return _timed("gauge exponent bounds", run)


# -- datasets -----------------------------------------------------------


def check_synthetic_pipeline(r_max: float = 12.0) -> Check:
    def run():
        rs = build_root_system("sl2xsl2")
        msgs, worst = [], 0.0
        for c in (0.5, 0.8, 1.5, 2.0):
            m = Linear.scaled_rho(rs, c)
            ds = sample_orbit(rs, m, SynthConfig(r_max=r_max))
            dt = modified_critical_exponent(ds).value
            worst = max(worst, abs(dt - delta_tilde_from_psi(rs, m)))
            d = counting_exponent(ds).value
            psi = growth_indicator(ds)
            if abs(d - psi.max_value()) > 0.1:
                msgs.append(f"c={c}: delta {d:.4f} vs max psi {psi.max_value():.4f}")
            rep = check_conditions(rs, counting_exponent(ds), modified_critical_exponent(ds), psi)
            f = rep.conditions
            if c == 0.8 and not (f["delta_tilde_small"] and f["psi_below_rho"] and f["lambda0_maximal"]):
                msgs.append(f"c=0.8 flags {f}")
            if c == 2.0:
                want_true = ("delta_maximal", "delta_tilde_maximal", "lambda0_zero", "psi_is_2rho", "psi_2rho_on_rho_axis")
                want_false = ("delta_tilde_small", "psi_below_rho", "lambda0_maximal")
                if not all(f[k] is True for k in want_true) or not all(f[k] is False for k in want_false):
                    msgs.append(f"c=2 flags {f}")
        if worst > 0.05:
            msgs.append(f"modified exponent error {worst:.4f} > 0.05")
        return not msgs, "; ".join(msgs) or f"max modified-exponent error {worst:.4f}"

    return _timed("synthetic pipeline", run)


def check_matrix_groups() -> Check:
    def run():
        msgs = []
        sl2 = build_root_system("sl2")
        free = parse_generators("a = 2:1,2,0,1\nb = 2:1,0,2,1\n")
        for L in range(1, 9):
            n = len(enumerate_ball(sl2, free, L))
            if n != 2 * 3**L - 1:
                msgs.append(f"free ball L={L}: {n}")
        cyc = enumerate_ball(sl2, parse_generators("a = 2:2,1,1,1\n"), 40)
        for name, ds in (("cyclic", cyc),):
            d = counting_exponent(ds).value
            dt = modified_critical_exponent(ds).value
            lam = lambda0_from_delta_tilde(ds.root_system, dt)
            if d > 0.05 or dt > 0.05 or abs(lam - ds.root_system.rho_norm**2) > 1e-3:
                msgs.append(f"{name}: delta {d:.4f}, modified {dt:.4f}, lambda0 {lam:.4f}")
        return not msgs, "; ".join(msgs) or "ball counts exact, polynomial groups give zero exponents"

    return _timed("matrix groups", run)


SUITES: dict[str, tuple[Callable[[], Check], ...]] = {
    "gauge": (check_gauge_identities, check_gauge_families),
    "cartan": (check_cartan,),
    "analytic": (check_lambda0_identity, check_delta_tilde_examples, check_branch_and_monotonicity, check_gauge_bounds),
    "synthetic": (check_synthetic_pipeline,),
    "groups": (check_matrix_groups,),
}
SUITES["all"] = tuple(c for k in ("gauge", "cartan", "analytic", "synthetic", "groups") for c in SUITES[k])


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return [c() for c in SUITES[name]]
