"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.
"""

import time
import warnings

import numpy as np
import pytest

from growthspec.cartan import project_blocks, random_rotation
from growthspec.chamber import (
    build_root_system,
    convex_combination,
    d_s,
    d_s_cases,
    norm_family,
    polyhedral_family,
)
from growthspec.cli import run
from growthspec.estimators import counting_exponent, growth_indicator, modified_critical_exponent
from growthspec.orbits import enumerate_ball, parse_generators
from growthspec.spectrum import (
    check_conditions,
    delta_tilde_from_psi,
    gauge_exponent_bounds,
    lambda0_from_delta_tilde,
    lambda0_from_psi,
    parse_keyvalue,
    psi_sup,
)
from growthspec.synth import Linear, SphericalCap, SynthConfig, sample_orbit
from growthspec.verify import combination_exponent, random_minlinear

SL2x2 = build_root_system("sl2xsl2")


@pytest.fixture
def gate(capsys):
    def report(label, observed, ok, seconds, budget):
        passed = bool(ok) and seconds < budget
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {observed}; runtime {seconds:.2f} s < {budget:g} s"
        with capsys.disabled():
            print("\n" + line)
        assert passed, line

    return report


class Clock:
    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t


# -- 1 ------------------------------------------------------------------


def test_c1_gauge_identities(gate):
    rng = np.random.default_rng(1)
    with Clock() as clk:
        worst = 0.0
        for group in ("sl2", "sl3", "sl2xsl2", "sl4"):
            rs = build_root_system(group)
            r = rs.rho_norm
            n = 2500
            H = rs.random_chamber(rng, n) * rng.uniform(0, 20, (n, 1))
            s = rng.uniform(0, 3 * r, n)
            two = d_s(rs, s, H)
            cases = np.array([d_s_cases(rs, si, h) for si, h in zip(s, H)])
            worst = max(worst, np.max(np.abs(two - cases)))
            t = rng.uniform(0.01, 10, n)
            scaled = d_s(rs, s, t[:, None] * H)
            worst = max(worst, np.max(np.abs(scaled - t * two) / np.maximum(1.0, np.abs(t * two))))
            bigger = d_s(rs, s + rng.uniform(0, r, n), H)
            worst = max(worst, np.max(np.maximum(two - bigger, 0.0)))
            worst = max(worst, np.max(np.abs(d_s(rs, r, H) - rs.rho_pairing(H))))
    gate("C1 gauge identities on 10^4 (s, H)", f"max violation {worst:.2e} <= 1e-12",
         worst <= 1e-12, clk.seconds, 5)


# -- 2 ------------------------------------------------------------------


def _random_batch(rs, rng, n, spread=3.0):
    d = rs.ambient_dim
    H = rs.random_chamber(rng, n)
    H *= (rng.uniform(0, spread, n) / np.linalg.norm(H, axis=1))[:, None]
    K1 = np.stack([random_rotation(rng, d) for _ in range(n)])
    K2 = np.stack([random_rotation(rng, d) for _ in range(n)])
    return K1 @ (np.exp(H)[:, :, None] * K2), H


def test_c2_cartan_projection(gate):
    rng = np.random.default_rng(2)
    with Clock() as clk:
        worst, membership = 0.0, True
        for group in ("sl2", "sl3"):
            rs = build_root_system(group)
            d = rs.ambient_dim
            G, H = _random_batch(rs, rng, 1000)
            Hb, _ = _random_batch(rs, rng, 1000)
            mu = project_blocks(rs, [G])
            worst = max(worst, np.max(np.abs(mu - H)))
            k1 = np.stack([random_rotation(rng, d) for _ in range(1000)])
            k2 = np.stack([random_rotation(rng, d) for _ in range(1000)])
            worst = max(worst, np.max(np.abs(project_blocks(rs, [k1 @ G @ k2]) - mu)))
            inv = project_blocks(rs, [np.linalg.inv(G)])
            worst = max(worst, np.max(np.abs(inv + mu[:, ::-1])))
            mu_b = project_blocks(rs, [Hb])
            mu_ab = project_blocks(rs, [G @ Hb])
            excess = rs.norm(mu_ab - mu) - rs.norm(mu_b)
            worst = max(worst, np.max(np.maximum(excess, 0.0)))
            membership = membership and bool(np.all(rs.in_closed_chamber(np.vstack([mu, inv, mu_ab]))))
    gate("C2 Cartan projection on 10^3 SL(2,R) and SL(3,R) elements",
         f"max violation {worst:.2e} <= 1e-9, chamber membership {membership}",
         worst <= 1e-9 and membership, clk.seconds, 10)


# -- 3 ------------------------------------------------------------------


def test_c3_lambda0_cross_formula(gate):
    rng = np.random.default_rng(3)
    groups = ("sl2", "sl3", "sl2xsl2", "sl2xsl3", "sl2xsl2xsl2")
    with Clock() as clk:
        worst = 0.0
        for i in range(100):
            rs = build_root_system(groups[i % len(groups)])
            m = random_minlinear(rs, rng, scale=(0.1, 2.0))
            a = lambda0_from_psi(rs, m)
            b = lambda0_from_delta_tilde(rs, delta_tilde_from_psi(rs, m))
            worst = max(worst, abs(a - b))
    gate("C3 lambda0 from psi vs lambda0 from delta_tilde, 100 models in ranks 1-3",
         f"max disagreement {worst:.2e} <= 1e-9", worst <= 1e-9, clk.seconds, 30)


# -- 4 and 6 ------------------------------------------------------------

SCALES = (0.5, 0.8, 1.5, 2.0)


@pytest.fixture(scope="module")
def synthetic_runs():
    out = {}
    t = time.perf_counter()
    for c in SCALES:
        m = Linear.scaled_rho(SL2x2, c)
        ds = sample_orbit(SL2x2, m, SynthConfig(r_max=12.0))
        out[c] = {
            "truth": delta_tilde_from_psi(SL2x2, m),
            "delta_tilde": modified_critical_exponent(ds).value,
            "delta": counting_exponent(ds).value,
            "psi_max": growth_indicator(ds).max_value(),
        }
    return out, time.perf_counter() - t


def test_c4_modified_exponent_end_to_end(gate, synthetic_runs):
    runs, seconds = synthetic_runs
    errs = {c: abs(r["delta_tilde"] - r["truth"]) for c, r in runs.items()}
    detail = ", ".join(f"c={c}: {runs[c]['delta_tilde']:.4f} vs {runs[c]['truth']:.4f}" for c in SCALES)
    gate("C4 modified exponent from Linear(c rho) data, rank 2, R_max 12",
         f"{detail}; max |error| {max(errs.values()):.4f} <= 0.05",
         max(errs.values()) <= 0.05, seconds, 120)


def test_c6_exponent_is_sup_of_psi(gate, synthetic_runs):
    runs, seconds = synthetic_runs
    gaps = {c: abs(r["delta"] - r["psi_max"]) for c, r in runs.items()}
    detail = ", ".join(f"c={c}: {runs[c]['delta']:.4f} vs {runs[c]['psi_max']:.4f}" for c in SCALES)
    gate("C6 delta vs max_u psi(u) on the same runs",
         f"{detail}; max |gap| {max(gaps.values()):.4f} <= 0.1",
         max(gaps.values()) <= 0.1, seconds, 120)


# -- 5 ------------------------------------------------------------------


def test_c5_rank_one_collapse(gate):
    rs = build_root_system("sl2")
    with Clock() as clk:
        ds = sample_orbit(rs, SphericalCap(1.0), SynthConfig(r_max=12.0))
        dt = modified_critical_exponent(ds).value
        d = counting_exponent(ds).value
    gap = abs(dt - d)
    gate("C5 rank-one collapse, psi = 1.0 |H|",
         f"delta_tilde {dt:.5f}, delta {d:.5f}, |gap| {gap:.5f} <= 0.02", gap <= 0.02, clk.seconds, 30)


# -- 7 ------------------------------------------------------------------


def test_c7_gauge_bounds(gate):
    rng = np.random.default_rng(7)
    with Clock() as clk:
        worst = np.inf
        for i in range(20):
            rs = build_root_system(("sl2", "sl2xsl2", "sl3")[i % 3])
            m = random_minlinear(rs, rng, scale=(0.2, 1.9))
            for fam, delta in (
                (norm_family(rs), psi_sup(rs, m).value),
                (polyhedral_family(rs), delta_tilde_from_psi(rs, m)),
                (convex_combination(norm_family(rs), polyhedral_family(rs)), combination_exponent(rs, m)),
            ):
                b = gauge_exponent_bounds(rs, m, fam, delta)
                worst = min(worst, b.threshold_margin, b.domination_margin)
    gate("C7 exponent bounds for two canonical gauges and a convex combination, 20 models",
         f"smallest margin {worst:.2e} >= -1e-6", worst >= -1e-6, clk.seconds, 30)


# -- 8 ------------------------------------------------------------------


def _cli_pipeline(tmp_path, scale):
    ds, est, rep = tmp_path / "synth.csv", tmp_path / "est.csv", tmp_path / "report.txt"
    assert run(["synth", "--group", "sl2xsl2", "--phi-scale", str(scale), "--rmax", "12", "-o", str(ds)]) == 0
    assert run(["estimate", str(ds), "-o", str(est)]) == 0
    assert run(["spectrum", "--estimate", str(est), "-o", str(rep)]) == 0
    return rep.read_bytes()


def test_c8_condition_flags(gate, tmp_path):
    with Clock() as clk:
        low = _cli_pipeline(tmp_path, 0.8)
        low_again = _cli_pipeline(tmp_path, 0.8)
        high = _cli_pipeline(tmp_path, 2.0)
        high_again = _cli_pipeline(tmp_path, 2.0)
    f_low = parse_keyvalue(low.decode())
    f_high = parse_keyvalue(high.decode())
    small = ("delta_tilde_small", "psi_below_rho", "lambda0_maximal")
    top = ("delta_maximal", "delta_tilde_maximal", "lambda0_zero", "psi_is_2rho", "psi_2rho_on_rho_axis")
    ok_low = all(f_low[f"condition.{k}"] == "true" for k in small)
    ok_high = (all(f_high[f"condition.{k}"] == "true" for k in top)
               and all(f_high[f"condition.{k}"] == "false" for k in small))
    deterministic = low == low_again and high == high_again
    gate("C8 condition flags from the CLI pipeline",
         f"0.8 rho: {', '.join(small)} true = {ok_low}; 2 rho: {', '.join(top)} true and the rest false = {ok_high}; "
         f"byte-identical reruns {deterministic}",
         ok_low and ok_high and deterministic, clk.seconds, 60)


# -- 9 ------------------------------------------------------------------


def test_c9_matrix_groups(gate):
    sl2 = build_root_system("sl2")
    with Clock() as clk:
        counts = {L: len(enumerate_ball(sl2, parse_generators("a = 2:1,2,0,1\nb = 2:1,0,2,1"), L)) for L in range(1, 9)}
        cyclic = enumerate_ball(sl2, parse_generators("a = 2:2,1,1,1"), 40)
        z2 = enumerate_ball(SL2x2, parse_generators("a = 2:10,9,1,1 | 2:1,0,0,1\nb = 2:1,0,0,1 | 2:10,9,1,1"),
                            60, size_guard=False)
        results = {}
        for name, ds in (("cyclic", cyclic), ("Z^2", z2)):
            rs = ds.root_system
            d = counting_exponent(ds).value
            dt = modified_critical_exponent(ds).value
            lam = lambda0_from_delta_tilde(rs, dt)
            results[name] = (d, dt, abs(lam - rs.rho_norm**2))
    exact = all(n == 2 * 3**L - 1 for L, n in counts.items())
    ok = exact and all(d <= 0.05 and dt <= 0.05 and gap <= 1e-3 for d, dt, gap in results.values())
    detail = "; ".join(f"{k}: delta {d:.4f}, delta_tilde {dt:.4f}, |lambda0 - |rho|^2| {g:.1e}"
                       for k, (d, dt, g) in results.items())
    gate("C9 exact matrix groups",
         f"free ball counts 2*3^L-1 for L<=8 {exact}; {detail} (<= 0.05, <= 0.05, <= 1e-3)",
         ok, clk.seconds, 60)


# -- 10 -----------------------------------------------------------------


@pytest.mark.slow
def test_c10_sl2z_lattice_probe(gate):
    sl2 = build_root_system("sl2")
    with Clock() as clk:
        ds = enumerate_ball(sl2, parse_generators("S = 2:0,-1,1,0\nT = 2:1,1,0,1"), 16, size_guard=False)
        d = counting_exponent(ds).value
    ratio = d / (2 * sl2.rho_norm)
    gate("C10 SL(2,Z) word ball to depth 16",
         f"{len(ds)} elements, delta / (2|rho|) = {ratio:.3f} in [0.8, 1.2]",
         0.8 <= ratio <= 1.2, clk.seconds, 900)


def test_no_stray_warnings():
    # the closed forms stay quiet on admissible models
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rs = build_root_system("sl3")
        delta_tilde_from_psi(rs, Linear.scaled_rho(rs, 1.2))
        check_conditions(rs, delta=1.0, psi=Linear.scaled_rho(rs, 1.2))
