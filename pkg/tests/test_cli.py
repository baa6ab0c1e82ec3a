import subprocess
import sys
import time

import pytest

from growthspec.cli import EXIT_COMPUTE, EXIT_IO, EXIT_OK, EXIT_USAGE, run
from growthspec.orbits import read_dataset
from growthspec.spectrum import parse_keyvalue


@pytest.fixture
def gens(tmp_path):
    p = tmp_path / "free.txt"
    p.write_text("# two unipotents generate a free group\na = 2:1,2,0,1\nb = 2:1,0,2,1\n")
    return p


def pipeline(tmp_path, scale):
    ds, est, rep = (tmp_path / f"{n}{scale}" for n in ("synth.csv", "est.csv", "report.txt"))
    assert run(["synth", "--phi-scale", str(scale), "-o", str(ds)]) == EXIT_OK
    assert run(["estimate", str(ds), "-o", str(est), "--curves", str(tmp_path / f"curves{scale}.csv")]) == EXIT_OK
    assert run(["spectrum", "--estimate", str(est), "-o", str(rep), "--csv", str(tmp_path / f"rep{scale}.csv")]) == EXIT_OK
    return ds, est, rep


def flags(rep):
    kv = parse_keyvalue(rep.read_text())
    return {k.split(".", 1)[1]: v for k, v in kv.items() if k.startswith("condition.")}, kv


def test_pipeline_below_rho(tmp_path):
    _, _, rep = pipeline(tmp_path, 0.8)
    f, kv = flags(rep)
    assert f["delta_tilde_small"] == f["psi_below_rho"] == f["lambda0_maximal"] == "true"
    assert kv["regime"] == "dataset" and kv["tol"] == "0.050000000000000003"
    assert f["tempered"] == "na"


def test_pipeline_at_2rho(tmp_path):
    _, _, rep = pipeline(tmp_path, 2.0)
    f, _ = flags(rep)
    for k in ("delta_maximal", "delta_tilde_maximal", "lambda0_zero", "psi_is_2rho", "psi_2rho_on_rho_axis"):
        assert f[k] == "true", k
    for k in ("delta_tilde_small", "psi_below_rho", "lambda0_maximal"):
        assert f[k] == "false", k


def test_outputs_are_byte_identical(tmp_path):
    first = [p.read_bytes() for p in pipeline(tmp_path, 0.8)]
    again = [p.read_bytes() for p in pipeline(tmp_path, 0.8)]
    assert first == again


def test_curves_file(tmp_path):
    pipeline(tmp_path, 0.8)
    lines = [ln for ln in (tmp_path / "curves0.8.csv").read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == "radius_norm,log_count_norm,radius_polyhedral,log_count_polyhedral"
    assert len(lines) == 201


def test_enumerate_counts_and_provenance(tmp_path, gens):
    out = tmp_path / "ball.csv"
    assert run(["enumerate", "--group", "sl2", "--gens", str(gens), "--maxlen", "6", "-o", str(out)]) == EXIT_OK
    ds = read_dataset(out)
    assert len(ds) == 2 * 3**6 - 1
    text = out.read_text()
    assert "## growthspec" in text and "## config maxlen=6" in text and "sha256=" in text


def test_enumerate_record_cap_is_a_computation_error(tmp_path, gens):
    out = tmp_path / "ball.csv"
    code = run(["enumerate", "--group", "sl2", "--gens", str(gens), "--maxlen", "12", "--record-cap", "100", "-o", str(out)])
    assert code == EXIT_COMPUTE


def test_spectrum_from_model(tmp_path, capsys):
    assert run(["spectrum", "--group", "sl3", "--model", "linear", "--phi-scale", "0.5"]) == EXIT_OK
    kv = parse_keyvalue(capsys.readouterr().out)
    assert kv["regime"] == "analytic"
    assert kv["condition.lambda0_maximal"] == "true"
    assert float(kv["delta_tilde"]) == pytest.approx(2**0.5 / 2)


def test_spectrum_inconsistent_override(tmp_path, capsys):
    code = run(["spectrum", "--group", "sl2xsl2", "--model", "linear", "--phi-scale", "2", "--delta-tilde", "0.5"])
    assert code == EXIT_OK
    kv = parse_keyvalue(capsys.readouterr().out)
    assert kv["consistent"] == "false"
    assert kv["condition.lambda0_zero"] == "na"


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text("# defaults for a quick run\nphi-scale = 0.5\nrmax = 6\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["synth", "--config", str(cfg), "-o", str(a)]) == EXIT_OK
    assert read_dataset(a).header.rmax == 6.0
    assert "linear(phi=[0.25 -0.25" in read_dataset(a).header.model
    assert run(["synth", "--config", str(cfg), "--rmax", "5", "-o", str(b)]) == EXIT_OK
    assert read_dataset(b).header.rmax == 5.0
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert run(["synth", "--config", str(bad), "-o", str(b)]) == EXIT_USAGE


@pytest.mark.parametrize("argv,code", [
    (["frobnicate"], EXIT_USAGE),
    (["synth"], EXIT_USAGE),
    (["synth", "--group", "sl1", "-o", "x.csv"], EXIT_USAGE),
    (["synth", "--phi", "1,2", "-o", "x.csv"], EXIT_USAGE),
    (["spectrum"], EXIT_USAGE),
    (["estimate", "/nonexistent/data.csv", "-o", "x.csv"], EXIT_IO),
    (["--version"], EXIT_OK),
])
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == code


def test_bad_dataset_is_format_error(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("#cpd 9\n")
    assert run(["estimate", str(p), "-o", str(tmp_path / "e.csv")]) == EXIT_IO


def test_same_input_and_output_rejected(tmp_path):
    p = tmp_path / "d.csv"
    assert run(["synth", "--rmax", "4", "-o", str(p)]) == EXIT_OK
    assert run(["estimate", str(p), "-o", str(p)]) == EXIT_USAGE


def test_verify_analytic_suite_via_console_script(tmp_path):
    t = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "growthspec.cli", "verify", "--suite", "analytic"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert time.perf_counter() - t < 60
    assert proc.stdout.strip().endswith("4/4 checks passed")
