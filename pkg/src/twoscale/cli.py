"""Command-line interface.

Exit codes: 0 on success, 2 on configuration problems, 3 when an
instance fails assumption validation.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__, bench, certify, chainlab, tsa
from .errors import (
    AssumptionViolation,
    ConfigInvalid,
    MismatchedConfigs,
    NonMixing,
    NotErgodic,
    NotHurwitz,
    Singular,
    SingularAvv,
    SingularSystem,
    TwoScaleError,
)

_CONFIG_ERRORS = (ConfigInvalid, MismatchedConfigs)
_ASSUMPTION_ERRORS = (
    AssumptionViolation,
    NotErgodic,
    NonMixing,
    NotHurwitz,
    Singular,
    SingularAvv,
    SingularSystem,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="twoscale",
        description=(
            "Two time-scale stochastic approximation: simulate the coupled "
            "recursion, certify its finite-time error envelope, and benchmark "
            "step-size schedules. TWOSCALE_THREADS caps worker parallelism."
        ),
    )
    parser.add_argument("--version", action="version", version=f"twoscale {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cert = sub.add_parser(
        "certify",
        help="validate an instance file and emit its constants report and bound curve",
    )
    p_cert.add_argument("instance", help="instance file (sectioned plain text)")
    p_cert.add_argument("--epsilon", type=float, required=True)
    p_cert.add_argument("--alpha", type=float, required=True)
    p_cert.add_argument("--beta", type=float, required=True)
    p_cert.add_argument(
        "--theta0",
        default="",
        help="initial iterate in (U, Z) coordinates, whitespace-separated; default zeros",
    )
    p_cert.add_argument("--kmax", type=int, default=0, help="last k of the bound curve (default tau + 1000)")
    p_cert.add_argument("--constants-out", default="", help="write the constants report here instead of stdout")
    p_cert.add_argument("--bound-out", default="", help="write the k,bound CSV here")

    p_synth = sub.add_parser("synth-run", help="run a synthetic-instance experiment config")
    p_synth.add_argument("config")
    p_synth.add_argument("--output", default="", help="override the config output path")

    p_rl = sub.add_parser("rl-run", help="run an RL experiment config or preset")
    p_rl.add_argument("config", nargs="?", default="")
    p_rl.add_argument("--preset", default="", help=f"one of: {', '.join(bench.preset_names())}")
    p_rl.add_argument("--output", default="", help="override the config output path")
    p_rl.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")

    p_cmp = sub.add_parser("compare", help="paired comparison of two schedule configs")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b")
    p_cmp.add_argument("--output", default="")

    p_sweep = sub.add_parser("sweep", help="grid search over a [sweep] section")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--output", default="")
    p_sweep.add_argument("--runs", type=int, default=0, help="override runs per combination")

    sub.add_parser("presets", help="list the named experiment presets")
    return parser


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_table(table, output):
    if output:
        table_path = output
        base, ext = os.path.splitext(output)
        runs_path = f"{base}.runs{ext or '.csv'}"
        _emit(table.to_csv(), table_path)
        _emit(table.to_runs_csv(), runs_path)
        print(f"wrote {table_path} and {runs_path}")
    else:
        sys.stdout.write(table.to_csv())


def _cmd_certify(args):
    with open(args.instance) as fh:
        instance = chainlab.load_instance_text(fh.read())
    report = chainlab.validate_assumptions(instance, args.epsilon, args.alpha, args.beta)
    for line in report.lines():
        print(line)
    if not report.all_ok:
        print("assumption validation failed", file=sys.stderr)
        return 3
    dim = instance.dim_u + instance.dim_v
    theta0 = np.zeros(dim) if not args.theta0.strip() else np.array(
        [float(t) for t in args.theta0.replace(",", " ").split()]
    )
    constants = certify.compute_constants(instance, args.epsilon, args.alpha, args.beta, theta0)
    _emit(certify.constants_report(constants), args.constants_out)
    kmax = args.kmax if args.kmax > constants.tau else constants.tau + 1000
    ks = np.unique(np.linspace(constants.tau, kmax, min(1000, kmax - constants.tau + 1)).astype(int))
    curve = certify.bound_curve(constants, ks)
    if args.bound_out:
        _emit(curve.to_csv(), args.bound_out)
        print(f"wrote {args.bound_out}")
    return 0


def _cmd_synth_run(args):
    config = bench.load_config(args.config)
    if config.is_rl:
        raise ConfigInvalid("synth-run expects a synthetic instance target; use rl-run")
    if args.output:
        config = bench.replace_output(config, args.output)
    table = bench.run_experiment(config)
    _write_table(table, config.output)
    return 0


def _cmd_rl_run(args):
    overrides = {}
    for item in args.set:
        dotted, _, value = item.partition("=")
        if not value:
            raise ConfigInvalid(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[dotted.strip()] = value.strip()
    if args.preset:
        config = bench.preset_config(args.preset, overrides)
    elif args.config:
        config = bench.load_config(args.config)
        if overrides:
            raise ConfigInvalid("--set only applies together with --preset")
    else:
        raise ConfigInvalid("rl-run needs a config file or --preset")
    if not config.is_rl:
        raise ConfigInvalid("rl-run expects an RL target; use synth-run")
    if args.output:
        config = bench.replace_output(config, args.output)
    table = bench.run_experiment(config)
    _write_table(table, config.output)
    return 0


def _cmd_compare(args):
    config_a = bench.load_config(args.config_a)
    config_b = bench.load_config(args.config_b)
    report = bench.compare_schedules(config_a, config_b)
    _emit(report.to_csv(), args.output)
    if args.output:
        print(f"wrote {args.output}")
    print(
        f"mean_diff = {report.mean_diff:.6g}; a_better = {report.a_better}, "
        f"b_better = {report.b_better}, ties = {report.ties}"
    )
    return 0


def _cmd_sweep(args):
    with open(args.config) as fh:
        text = fh.read()
    results = bench.sweep(text, runs_override=args.runs if args.runs > 0 else None)
    _emit(bench.sweep_csv(results), args.output)
    if args.output:
        print(f"wrote {args.output}")
    return 0


def _cmd_presets(_args):
    for name in bench.preset_names():
        print(name)
    return 0


_COMMANDS = {
    "certify": _cmd_certify,
    "synth-run": _cmd_synth_run,
    "rl-run": _cmd_rl_run,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "presets": _cmd_presets,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _ASSUMPTION_ERRORS as exc:
        print(f"assumption validation failed: {exc}", file=sys.stderr)
        return 3
    except TwoScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
