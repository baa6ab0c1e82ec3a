"""Command-line front end.

    growthspec enumerate --group sl2 --gens free2.txt --maxlen 8 -o ball.csv
    growthspec synth --model linear --phi-scale 0.8 --rmax 12 -o synth.csv
    growthspec estimate synth.csv -o est.csv --curves curves.csv
    growthspec spectrum --estimate est.csv -o report.txt --csv report.csv
    growthspec verify --suite analytic

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys mirror the long flags; flags given on the command line win.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O or
format error, 4 computation error (enumeration limits, too little data).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from growthspec import __version__
from growthspec.chamber import GroupDescriptor, build_root_system
from growthspec.estimators import (
    DEFAULT_CONE_ANGLES,
    DEFAULT_WINDOW,
    GrowthRateEstimate,
    InsufficientData,
    counting_curve,
    counting_exponent,
    estimate_csv,
    growth_indicator,
    modified_critical_exponent,
    read_estimate_csv,
)
from growthspec.orbits import (
    DEFAULT_RECORD_CAP,
    DatasetFormatError,
    EnumerationError,
    dataset_bytes,
    enumerate_ball,
    fingerprint_file,
    read_dataset,
    read_generators,
)
from growthspec.spectrum import BracketError, check_conditions
from growthspec.synth import Cone, Linear, MinLinear, SphericalCap, SynthConfig, sample_orbit

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO, EXIT_COMPUTE = 0, 1, 2, 3, 4

log = logging.getLogger("growthspec")


class UsageError(Exception):
    pass


# -- config handling ----------------------------------------------------


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    for key, value in cfg.items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = value.lower() in ("1", "true", "yes", "on")
            if value.lower() not in ("0", "1", "true", "false", "yes", "no", "on", "off"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
            value = flag
        elif action.type is not None:
            try:
                value = action.type(value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        action.default = value
        action.required = False


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1], got {text}")
    return v


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a vector: {text!r}") from None


def _angles(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list: {text!r}") from None
    if not vals or any(v <= 0 for v in vals) or any(a <= b for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError("cone angles must be positive and strictly decreasing")
    return vals


def _yes_no(text: str) -> bool:
    if text.lower() in ("yes", "true", "1"):
        return True
    if text.lower() in ("no", "false", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected yes or no, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="growthspec", description="Growth exponents and spectral bounds for discrete matrix groups.")
    parser.add_argument("--version", action="version", version=f"growthspec {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, help_text):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file; command-line flags take precedence")
        return p

    p = sub("enumerate", "enumerate a word ball and write its Cartan projections")
    p.add_argument("--group", required=True, help="e.g. sl2, sl3, sl2xsl2")
    p.add_argument("--gens", required=True, help="generator file, one 'label = n:a11,...|n:...' per line")
    p.add_argument("--maxlen", required=True, type=_positive_int)
    p.add_argument("--dedup", choices=("auto", "exact", "float"), default="auto")
    p.add_argument("--record-cap", type=_positive_int, default=DEFAULT_RECORD_CAP)
    p.add_argument("--no-size-guard", action="store_true", help="skip the predicted-size refusal")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--checkpoint", help="resume file written after each sphere")
    p.add_argument("-o", "--output", required=True)

    p = sub("synth", "write a synthetic dataset realising a growth-indicator model")
    p.add_argument("--group", default="sl2xsl2")
    p.add_argument("--model", choices=("linear", "minlinear", "cap"), default="linear")
    p.add_argument("--phi-scale", type=float, default=1.0, help="linear model phi = scale * rho")
    p.add_argument("--phi", type=_vector, help="explicit linear form, overrides --phi-scale")
    p.add_argument("--phis", help="minlinear forms, vectors separated by ';'")
    p.add_argument("--cap-c", type=_positive_float, default=1.0, help="cap model psi = c |H|")
    p.add_argument("--support-axis", type=_vector, help="restrict the support to a round cone")
    p.add_argument("--support-angle", type=_positive_float)
    p.add_argument("--rmax", type=_positive_float, default=12.0)
    p.add_argument("--resolution", type=_positive_int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--max-points", type=int, default=1_000_000, help="0 disables thinning")
    p.add_argument("--record-cap", type=_positive_int, default=DEFAULT_RECORD_CAP)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("-o", "--output", required=True)

    p = sub("estimate", "estimate exponents and the growth indicator from a dataset")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--input", help="dataset path (alternative to the positional argument)")
    p.add_argument("--window-fraction", type=_fraction, default=DEFAULT_WINDOW)
    p.add_argument("--cone-angles", type=_angles, default=DEFAULT_CONE_ANGLES)
    p.add_argument("--resolution", type=_positive_int, help="direction grid; defaults to the synthetic grid or 9")
    p.add_argument("--no-extrapolate", action="store_true")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--curves", help="also write radius vs log-count CSV here")
    p.add_argument("-o", "--output", required=True)

    p = sub("spectrum", "combine estimates or an analytic model into a spectral report")
    p.add_argument("--estimate", help="CSV written by 'estimate'")
    p.add_argument("--group", help="group for an analytic model")
    p.add_argument("--model", choices=("linear", "minlinear", "cap"))
    p.add_argument("--phi-scale", type=float, default=1.0)
    p.add_argument("--phi", type=_vector)
    p.add_argument("--phis")
    p.add_argument("--cap-c", type=_positive_float, default=1.0)
    p.add_argument("--support-axis", type=_vector)
    p.add_argument("--support-angle", type=_positive_float)
    p.add_argument("--delta", type=float, help="override the critical exponent")
    p.add_argument("--delta-tilde", type=float, help="override the modified critical exponent")
    p.add_argument("--tempered", type=_yes_no, help="caller-supplied temperedness (yes/no)")
    p.add_argument("--finite-covolume", type=_yes_no, help="caller-supplied lattice flag (yes/no)")
    p.add_argument("--tol", type=_positive_float)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--csv", help="also write the report as CSV here")
    p.add_argument("-o", "--output", default="-")

    p = sub("verify", "run the self-check suites")
    p.add_argument("--suite", choices=("gauge", "cartan", "analytic", "synthetic", "groups", "all"), default="analytic")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("-o", "--output", default="-")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, cfg)
        args = parser.parse_args(argv)
    return args


# -- output helpers -----------------------------------------------------

_SKIP = {"command", "config", "verbose", "output"}


def provenance(args, inputs=()) -> list[str]:
    """Reproducibility header: tool version, full config, input fingerprints."""
    lines = [f"growthspec {__version__}", f"command {args.command}"]
    for key in sorted(vars(args)):
        if key in _SKIP:
            continue
        value = getattr(args, key)
        if isinstance(value, np.ndarray):
            value = " ".join(f"{x:.17g}" for x in value)
        elif isinstance(value, tuple):
            value = ",".join(f"{x:g}" for x in value)
        lines.append(f"config {key}={value}")
    for path in inputs:
        lines.append(f"input {path} sha256={fingerprint_file(path)}")
    return lines


def _write(path: str, data: str | bytes) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def _distinct_paths(*paths) -> None:
    real = [Path(p).resolve() for p in paths if p and p != "-"]
    if len(set(real)) != len(real):
        raise UsageError("input and output paths must be distinct")


# -- models -------------------------------------------------------------


def build_model(args, rs):
    support = None
    if args.support_axis is not None or args.support_angle is not None:
        if args.support_axis is None or args.support_angle is None:
            raise UsageError("--support-axis and --support-angle go together")
        _check_dim(rs, args.support_axis, "--support-axis")
        support = Cone(args.support_axis, args.support_angle)
    if args.model == "linear":
        if args.phi is not None:
            _check_dim(rs, args.phi, "--phi")
            return Linear(args.phi, support=support)
        return Linear.scaled_rho(rs, args.phi_scale, support=support)
    if args.model == "minlinear":
        if not args.phis:
            raise UsageError("--model minlinear needs --phis")
        phis = [_vector(v) for v in args.phis.split(";")]
        for v in phis:
            _check_dim(rs, v, "--phis")
        return MinLinear(np.array(phis), support=support)
    return SphericalCap(args.cap_c, support=support)


def _check_dim(rs, v, flag):
    if len(v) != rs.ambient_dim:
        raise UsageError(f"{flag} has {len(v)} entries; {rs.descriptor} needs {rs.ambient_dim}")


def _group(text: str):
    try:
        return build_root_system(GroupDescriptor.parse(text))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- subcommands --------------------------------------------------------


def cmd_enumerate(args) -> int:
    _distinct_paths(args.gens, args.output, args.checkpoint)
    rs = _group(args.group)
    gens = read_generators(args.gens)
    ds = enumerate_ball(
        rs, gens, args.maxlen, dedup=args.dedup, record_cap=args.record_cap,
        size_guard=not args.no_size_guard, threads=args.threads, checkpoint=args.checkpoint,
    )
    _write(args.output, dataset_bytes(ds, provenance(args, [args.gens])))
    log.info("wrote %d records to %s", len(ds), args.output)
    return EXIT_OK


def cmd_synth(args) -> int:
    rs = _group(args.group)
    m = build_model(args, rs)
    cfg = SynthConfig(
        resolution=args.resolution, r_max=args.rmax, seed=args.seed, jitter=args.jitter,
        max_points=args.max_points or None, record_cap=args.record_cap,
    )
    ds = sample_orbit(rs, m, cfg)
    _write(args.output, dataset_bytes(ds, provenance(args)))
    log.info("wrote %d synthetic points to %s", len(ds), args.output)
    return EXIT_OK


def _synth_resolution(model: str | None) -> int | None:
    for part in (model or "").split(";"):
        if part.startswith("res="):
            return int(part[4:])
    return None


def cmd_estimate(args) -> int:
    path = args.input or args.dataset
    if not path:
        raise UsageError("estimate needs a dataset path")
    if args.input and args.dataset and args.input != args.dataset:
        raise UsageError("give the dataset either positionally or with --input, not both")
    _distinct_paths(path, args.output, args.curves)
    ds = read_dataset(path)
    rs = ds.root_system
    res = args.resolution or _synth_resolution(ds.header.model) or 9
    args.resolution = res
    delta = counting_exponent(ds, "norm", args.window_fraction)
    dtilde = modified_critical_exponent(ds, args.window_fraction)
    psi = growth_indicator(ds, res, args.cone_angles, not args.no_extrapolate, args.window_fraction)
    summary = {
        "group": str(rs.descriptor),
        "factors": ",".join(map(str, rs.descriptor.factors)),
        "records": len(ds),
        "radius_limit": ds.radius_limit(),
        "window_fraction": args.window_fraction,
        "delta": delta.value,
        "delta_stderr": delta.stderr,
        "delta_window_lo": delta.window[0],
        "delta_window_hi": delta.window[1],
        "delta_samples": delta.sample_count,
        "delta_tilde": dtilde.value,
        "delta_tilde_stderr": dtilde.stderr,
        "delta_tilde_window_lo": dtilde.window[0],
        "delta_tilde_window_hi": dtilde.window[1],
        "delta_tilde_samples": dtilde.sample_count,
        "delta_tilde_method": dtilde.method,
        "psi_max": psi.max_value(),
        "psi_admissibility_excess": psi.admissibility_excess(rs),
        "extrapolated": psi.extrapolated,
    }
    _write(args.output, estimate_csv(psi, summary, provenance(args, [path])))
    if args.curves:
        R, ln = counting_curve(ds, "norm")
        _, lp = counting_curve(ds, "polyhedral")
        Rp = np.linspace(0.0, ds.radius_limit() * rs.min_on_unit_sphere(lambda H: rs.rho_pairing(H) / rs.rho_norm), len(R))
        lines = [f"# {x}" for x in provenance(args, [path])]
        lines.append("radius_norm,log_count_norm,radius_polyhedral,log_count_polyhedral")
        for row in zip(R, ln, Rp, lp):
            lines.append(",".join(f"{x:.17g}" if np.isfinite(x) else "-inf" for x in row))
        _write(args.curves, "\n".join(lines) + "\n")
    return EXIT_OK


def _rate(summary, key, method) -> GrowthRateEstimate:
    return GrowthRateEstimate(
        float(summary[key]), (float(summary[f"{key}_window_lo"]), float(summary[f"{key}_window_hi"])),
        float(summary[f"{key}_stderr"]), int(summary[f"{key}_samples"]), method,
    )


def cmd_spectrum(args) -> int:
    _distinct_paths(args.estimate, args.output, args.csv)
    inputs = []
    if args.estimate:
        if args.model:
            raise UsageError("give either --estimate or --model, not both")
        psi, summary = read_estimate_csv(args.estimate)
        try:
            rs = build_root_system(tuple(int(x) for x in summary["factors"].split(",")))
            delta = _rate(summary, "delta", "counting[norm]")
            dtilde = _rate(summary, "delta_tilde", summary.get("delta_tilde_method", "modified"))
        except (KeyError, ValueError) as exc:
            raise DatasetFormatError(f"{args.estimate}: incomplete summary block ({exc})") from None
        inputs.append(args.estimate)
    elif args.model:
        if not args.group:
            raise UsageError("--model needs --group")
        rs = _group(args.group)
        psi = build_model(args, rs)
        delta = dtilde = None
    else:
        raise UsageError("spectrum needs --estimate or --model")
    if args.delta is not None:
        delta = args.delta
    if args.delta_tilde is not None:
        dtilde = args.delta_tilde
    rep = check_conditions(rs, delta, dtilde, psi, args.tempered, args.finite_covolume, args.tol)
    head = "".join(f"# {x}\n" for x in provenance(args, inputs))
    _write(args.output, head + rep.to_keyvalue())
    if args.csv:
        _write(args.csv, head + rep.to_csv())
    for w in rep.warnings:
        log.warning(w)
    return EXIT_OK


def cmd_verify(args) -> int:
    from growthspec.verify import run_suite

    checks = run_suite(args.suite)
    text = "".join(c.line() + "\n" for c in checks)
    failed = [c for c in checks if not c.passed]
    text += f"{len(checks) - len(failed)}/{len(checks)} checks passed\n"
    _write(args.output, text)
    for c in failed:
        print(f"growthspec: verification failed: {c.name}: {c.detail}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "enumerate": cmd_enumerate,
    "synth": cmd_synth,
    "estimate": cmd_estimate,
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors this way
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        print(f"growthspec: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"growthspec: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"growthspec: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetFormatError as exc:
        print(f"growthspec: format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"growthspec: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EnumerationError, InsufficientData, BracketError, ArithmeticError) as exc:
        print(f"growthspec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except ValueError as exc:
        # malformed generator files and similar input problems
        print(f"growthspec: invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
