"""Command-line front end: analytic reports, simulation runs, sweeps.

Subcommands: ``analytic``, ``simulate``, ``sweep``, ``gap-hist``, ``power``.
Times are given in seconds, optionally with a metric suffix (``1ns``,
``10ps``); internally everything is reduced to the dimensionless ratio
``tau`` right away.  Exit codes: 0 success, 1 usage error, 2 failed
analytic-vs-MC consistency check.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass
from typing import Optional

from . import mc, model, profiles, stats

TIME_SUFFIXES = {
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
    "ps": 1e-12,
    "fs": 1e-15,
}

# Refuse ensembles beyond this; counting works in chunks but runtimes do not.
MAX_TRIALS = 1_000_000_000

DEFAULTS = {
    "trials": "800000",
    "seed": "0",
    "profile": "exponential",
    "probing": "uniform",
    "initial": "+",
}

CONFIG_KEYS = ("dt", "delta_t", "trials", "seed", "profile", "probing", "initial")

CHECK_BAND_STD_ERRORS = 4.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1, not argparse's default 2
        raise UsageError(message)


def parse_time(text: str) -> float:
    m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*([a-z]*)\s*", text)
    if not m:
        raise UsageError(f"cannot parse time {text!r}")
    value, suffix = m.group(1), m.group(2)
    if suffix and suffix not in TIME_SUFFIXES:
        raise UsageError(f"unknown time suffix {suffix!r} in {text!r}")
    try:
        seconds = float(value) * TIME_SUFFIXES.get(suffix, 1.0)
    except ValueError:
        raise UsageError(f"cannot parse time {text!r}") from None
    return seconds


def _parse_initial(text: str) -> int:
    if text in ("+", "+1"):
        return +1
    if text in ("-", "-1"):
        return -1
    raise UsageError(f"initial state must be + or -, got {text!r}")


def _parse_profile(text: str) -> profiles.ReductionProfile:
    if text == "exponential":
        return profiles.exponential_profile()
    if text == "linear":
        return profiles.linear_profile()
    if text == "sudden":
        return profiles.sudden_profile()
    if text.startswith("csv:"):
        try:
            return profiles.load_profile_csv(text[4:])
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load profile {text!r}: {exc}") from None
    raise UsageError(
        f"profile must be exponential, linear, sudden or csv:<path>, got {text!r}"
    )


def _parse_probing(text: str, window: float) -> mc.ProbingModel:
    if text == "uniform":
        return mc.uniform_probing(window)
    if text.startswith("exp:"):
        return mc.exponential_probing(window, parse_time(text[4:]))
    raise UsageError(f"probing must be uniform or exp:<t_decay>, got {text!r}")


def read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
                key, value = line.split("=", 1)
                key, value = key.strip(), value.strip()
                if key not in CONFIG_KEYS:
                    raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = value
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    return values


def render_config(values: dict) -> str:
    lines = [f"{key}={values[key]}" for key in CONFIG_KEYS if key in values]
    return "\n".join(lines) + "\n"


@dataclass
class RunSpec:
    """Fully resolved inputs for one command invocation."""

    config: model.ExperimentConfig
    profile: profiles.ReductionProfile
    probing: mc.ProbingModel
    profile_name: str
    probing_name: str
    gamma_override: Optional[float]
    out: Optional[str]
    log_trials: Optional[str]
    check: bool
    workers: int
    chunk_size: int


def _resolve_runspec(args, require_delta: bool = True) -> RunSpec:
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    # Explicit command-line flags win over config-file values.
    for key, flag in (
        ("dt", "dt"),
        ("delta_t", "delta_t"),
        ("trials", "trials"),
        ("seed", "seed"),
        ("profile", "profile"),
        ("probing", "probing"),
        ("initial", "initial"),
    ):
        cli_value = getattr(args, flag, None)
        if cli_value is not None:
            values[key] = str(cli_value)

    tau_flag = getattr(args, "tau", None)
    if tau_flag is not None:
        if getattr(args, "dt", None) is not None or getattr(args, "delta_t", None) is not None:
            raise UsageError("give either --tau or --dt/--delta-t, not both")
        values["dt"] = repr(1.0)
        values["delta_t"] = repr(float(tau_flag))

    if "dt" not in values:
        raise UsageError("window duration required: set --dt (or --tau)")
    if "delta_t" not in values:
        if require_delta:
            raise UsageError("reduction time required: set --delta-t (or --tau)")
        values["delta_t"] = repr(0.0)

    window = parse_time(values["dt"])
    reduction = parse_time(values["delta_t"])
    try:
        trials = int(values["trials"])
        seed = int(values["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if trials > MAX_TRIALS:
        raise UsageError(
            f"trials={trials} exceeds the supported bound {MAX_TRIALS}; "
            "split the run across seeds instead"
        )
    try:
        config = model.ExperimentConfig(
            window_duration=window,
            reduction_time=reduction,
            trials=trials,
            initial_sign=_parse_initial(values["initial"]),
            seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    spec = RunSpec(
        config=config,
        profile=_parse_profile(values["profile"]),
        probing=_parse_probing(values["probing"], window),
        profile_name=values["profile"],
        probing_name=values["probing"],
        gamma_override=getattr(args, "gamma", None),
        out=getattr(args, "out", None),
        log_trials=getattr(args, "log_trials", None),
        check=bool(getattr(args, "check", False)),
        workers=getattr(args, "workers", 1) or 1,
        chunk_size=getattr(args, "chunk_size", None) or mc.DEFAULT_CHUNK_SIZE,
    )

    emit = getattr(args, "emit_config", None)
    if emit:
        canonical = {
            "dt": repr(window),
            "delta_t": repr(reduction),
            "trials": str(trials),
            "seed": str(seed),
            "profile": values["profile"],
            "probing": values["probing"],
            "initial": values["initial"],
        }
        with open(emit, "w", encoding="utf-8") as fh:
            fh.write(render_config(canonical))
    return spec


def _gamma_for(spec: RunSpec, tau: float):
    if spec.gamma_override is not None:
        if not 0.0 <= spec.gamma_override <= 1.0:
            raise UsageError(f"--gamma must lie in [0, 1], got {spec.gamma_override}")
        return spec.gamma_override, 0.0
    result = profiles.gamma(spec.profile, tau)
    return result.gamma, result.quadrature_error_estimate


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _print_kv(lines, stream=None):
    stream = stream or sys.stdout
    for key, value in lines:
        print(f"{key} = {_fmt(value)}", file=stream)


def cmd_analytic(args) -> int:
    spec = _resolve_runspec(args)
    tau = spec.config.tau
    gamma, gamma_err = _gamma_for(spec, tau)
    pred = model.analytic_prediction(tau, gamma, spec.config.trials, spec.config.initial_sign)
    n_req = stats.min_trials(tau, gamma, 1.0)
    _print_kv(
        [
            ("profile", spec.profile_name if spec.gamma_override is None else "(gamma override)"),
            ("tau", tau),
            ("gamma", gamma),
            ("gamma_quadrature_error", gamma_err),
            ("overlap_probability", pred.overlap_probability),
            ("p3_plus", pred.p3_plus),
            ("p3_minus", 1.0 - pred.p3_plus),
            ("trials", spec.config.trials),
            ("expected_delta_n", pred.expected_delta_n),
            ("small_tau_delta_n", model.small_tau_delta_n(tau, gamma, spec.config.trials)
             * spec.config.initial_sign),
            ("min_trials_strict", "none (signal vanishes)" if n_req is None else n_req),
            ("fluctuation_scale", stats.fluctuation_scale(spec.config.trials)),
            ("tau_upper_bound", stats.tau_upper_bound(spec.config.trials)),
        ]
    )
    return 0


def cmd_simulate(args) -> int:
    spec = _resolve_runspec(args)
    ensemble = mc.run_ensemble(
        spec.config,
        spec.probing,
        spec.profile,
        workers=spec.workers,
        chunk_size=spec.chunk_size,
        trial_log=spec.log_trials,
    )
    sig = stats.significance(ensemble.delta_n, spec.config.trials)
    print("[ensemble]")
    print(ensemble.to_kv_text())
    _print_kv([("z_score", sig.z_score), ("p_value_two_sided", sig.p_value_two_sided)])

    uniform = spec.probing.kind == "uniform"
    if spec.check and not uniform:
        raise UsageError("--check needs the uniform probing model (no analytic prediction otherwise)")
    if uniform:
        tau = spec.config.tau
        gamma, gamma_err = _gamma_for(spec, tau)
        pred = model.analytic_prediction(
            tau, gamma, spec.config.trials, spec.config.initial_sign
        )
        se_pred = math.sqrt(pred.p3_plus * (1.0 - pred.p3_plus) / spec.config.trials)
        deviation = abs(ensemble.empirical_p3_plus - pred.p3_plus)
        print("[analytic]")
        _print_kv(
            [
                ("gamma", gamma),
                ("gamma_quadrature_error", gamma_err),
                ("p3_plus", pred.p3_plus),
                ("expected_delta_n", pred.expected_delta_n),
                ("p3_deviation", deviation),
                ("p3_deviation_std_errors", deviation / se_pred if se_pred else math.inf),
            ]
        )
        if spec.check:
            ok = deviation <= CHECK_BAND_STD_ERRORS * se_pred
            print(f"check = {'PASS' if ok else 'FAIL'}")
            if not ok:
                return 2
    return 0


def _parse_grid(text: Optional[str], parse, flag: str):
    if text is None:
        return None
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise UsageError(f"{flag} given but empty")
    try:
        return [parse(item) for item in items]
    except ValueError as exc:
        raise UsageError(f"bad value in {flag}: {exc}") from None


def cmd_sweep(args) -> int:
    spec = _resolve_runspec(args)
    tau_grid = _parse_grid(args.tau_grid, float, "--tau-grid")
    profile_grid = _parse_grid(args.profile_grid, str, "--profile-grid")
    gamma_grid = _parse_grid(args.gamma_grid, float, "--gamma-grid")
    trials_grid = _parse_grid(args.trials_grid, int, "--trials-grid")
    if tau_grid is None and profile_grid is None and gamma_grid is None and trials_grid is None:
        raise UsageError("empty grid: give at least one of --tau-grid, --profile-grid, "
                         "--gamma-grid, --trials-grid")
    if profile_grid is not None and gamma_grid is not None:
        raise UsageError("sweep over --profile-grid or --gamma-grid, not both")

    taus = tau_grid if tau_grid is not None else [spec.config.tau]
    trials_list = trials_grid if trials_grid is not None else [spec.config.trials]
    if gamma_grid is not None:
        profile_axis = [("gamma", g, None) for g in gamma_grid]
    elif profile_grid is not None:
        profile_axis = [(name, None, _parse_profile(name)) for name in profile_grid]
    else:
        profile_axis = [(spec.profile_name, spec.gamma_override, spec.profile)]

    header = [
        "profile", "tau", "gamma", "gamma_quadrature_error", "trials",
        "overlap_probability", "p3_plus", "expected_delta_n", "delta_n_per_trial",
        "z_expected", "p_value_two_sided", "min_trials_strict",
        "fluctuation_scale", "tau_upper_bound",
    ]
    if args.mc:
        header += ["mc_delta_n", "mc_p3_plus", "mc_std_error", "mc_overlap_fraction",
                   "mc_z_score", "mc_p_value_two_sided"]

    rows = []
    for name, gamma_fixed, profile in profile_axis:
        for tau in taus:
            if not 0.0 <= tau <= 1.0:
                raise UsageError(f"tau must lie in [0, 1], got {tau}")
            if gamma_fixed is not None:
                gamma_val, gamma_err = float(gamma_fixed), 0.0
            else:
                result = profiles.gamma(profile, tau)
                gamma_val, gamma_err = result.gamma, result.quadrature_error_estimate
            for n in trials_list:
                if not 1 <= n <= MAX_TRIALS:
                    raise UsageError(f"trials must lie in [1, {MAX_TRIALS}], got {n}")
                pred = model.analytic_prediction(tau, gamma_val, n, spec.config.initial_sign)
                report = stats.power_report(tau, gamma_val, n)
                row = [
                    name, repr(tau), repr(gamma_val), repr(gamma_err), str(n),
                    repr(pred.overlap_probability), repr(pred.p3_plus),
                    repr(pred.expected_delta_n), repr(pred.expected_delta_n / n),
                    repr(report.z_score * spec.config.initial_sign),
                    repr(report.p_value_two_sided),
                    "" if report.n_required_strict is None else str(report.n_required_strict),
                    repr(report.fluctuation_scale), repr(report.tau_upper_bound),
                ]
                if args.mc:
                    cfg = model.ExperimentConfig(
                        window_duration=spec.config.window_duration,
                        reduction_time=tau * spec.config.window_duration,
                        trials=n,
                        initial_sign=spec.config.initial_sign,
                        seed=spec.config.seed,
                    )
                    run_profile = profile if profile is not None else spec.profile
                    if gamma_fixed is not None and profile is None:
                        raise UsageError("--mc needs profile rows, not --gamma-grid")
                    probing = _parse_probing(spec.probing_name, cfg.window_duration)
                    ens = mc.run_ensemble(cfg, probing, run_profile,
                                          workers=spec.workers, chunk_size=spec.chunk_size)
                    sig = stats.significance(ens.delta_n, n)
                    row += [str(ens.delta_n), repr(ens.empirical_p3_plus),
                            repr(ens.std_error), repr(ens.overlap_fraction),
                            repr(sig.z_score), repr(sig.p_value_two_sided)]
                rows.append(row)

    text = ",".join(header) + "\n" + "\n".join(",".join(row) for row in rows) + "\n"
    if spec.out:
        with open(spec.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {len(rows)} rows to {spec.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_gap_hist(args) -> int:
    spec = _resolve_runspec(args, require_delta=False)
    if args.samples < 10_000:
        raise UsageError(f"--samples must be at least 10000, got {args.samples}")
    hist = mc.empirical_gap_histogram(
        spec.probing, args.samples, bins=args.bins, seed=spec.config.seed
    )
    lines = ["bin_lo,bin_hi,count,mass,expected_mass"]
    for i in range(len(hist.counts)):
        expected = "" if hist.expected_masses is None else repr(float(hist.expected_masses[i]))
        lines.append(
            f"{hist.bin_edges[i]!r},{hist.bin_edges[i + 1]!r},"
            f"{int(hist.counts[i])},{float(hist.masses[i])!r},{expected}"
        )
    text = "\n".join(lines) + "\n"
    if spec.out:
        with open(spec.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {len(hist.counts)} bins to {spec.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_power(args) -> int:
    spec = _resolve_runspec(args)
    tau = spec.config.tau
    gamma, _ = _gamma_for(spec, tau)
    report = stats.power_report(tau, gamma, spec.config.trials, args.observed)
    print(report.to_kv_text())
    if spec.out:
        with open(spec.out, "w", encoding="utf-8") as fh:
            fh.write(report.csv_header() + "\n" + report.to_csv_row() + "\n")
        print(f"wrote report to {spec.out}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dt", help="measurement window duration (e.g. 1ns)")
    parser.add_argument("--delta-t", dest="delta_t", help="reduction time (e.g. 10ps)")
    parser.add_argument("--tau", type=float, help="dimensionless reduction fraction "
                        "(alternative to --dt/--delta-t)")
    parser.add_argument("--trials", type=int, help="number of realizations")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--profile", help="exponential|linear|sudden|csv:<path>")
    parser.add_argument("--gamma", type=float, help="bypass the profile and fix gamma")
    parser.add_argument("--probing", help="uniform|exp:<t_decay>")
    parser.add_argument("--initial", help="initial sigma_3 eigenstate, + or -")
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--emit-config", dest="emit_config",
                        help="write the resolved configuration to this path")
    parser.add_argument("--out", help="write CSV output to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="redtime", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="closed-form report, no simulation")
    _add_common(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("simulate", help="Monte Carlo ensemble run")
    _add_common(p)
    p.add_argument("--workers", type=int, default=1, help="worker threads")
    p.add_argument("--chunk-size", dest="chunk_size", type=int, help="trials per chunk")
    p.add_argument("--log-trials", dest="log_trials", help="write per-trial CSV log here")
    p.add_argument("--check", action="store_true",
                   help="fail (exit 2) if MC strays over 4 standard errors from analytic")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="analytic (optionally MC) grid to CSV")
    _add_common(p)
    p.add_argument("--tau-grid", dest="tau_grid", help="comma-separated tau values")
    p.add_argument("--profile-grid", dest="profile_grid", help="comma-separated profiles")
    p.add_argument("--gamma-grid", dest="gamma_grid", help="comma-separated gamma values")
    p.add_argument("--trials-grid", dest="trials_grid", help="comma-separated trial counts")
    p.add_argument("--mc", action="store_true", help="add Monte Carlo columns")
    p.add_argument("--workers", type=int, default=1, help="worker threads")
    p.add_argument("--chunk-size", dest="chunk_size", type=int, help="trials per chunk")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gap-hist", help="empirical probing-gap histogram to CSV")
    _add_common(p)
    p.add_argument("--samples", type=int, default=1_000_000, help="number of probing pairs")
    p.add_argument("--bins", type=int, default=20, help="histogram bins")
    p.set_defaults(func=cmd_gap_hist)

    p = sub.add_parser("power", help="statistical power report")
    _add_common(p)
    p.add_argument("--observed", type=int, help="score this observed delta_n "
                   "instead of the expected one")
    p.set_defaults(func=cmd_power)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
