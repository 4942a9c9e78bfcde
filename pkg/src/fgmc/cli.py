"""Command-line front end: ``fgmc exact | estimate | dual-check | presets``.

Exit codes: 0 success, 1 check failed, 2 configuration error, 3 resource cap
exceeded, 4 estimator contract violation.  ``FGMC_SEED`` is the seed fallback.
Settings come from flags, then an optional JSON ``--config`` file, then
defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .errors import (
    ContractViolation,
    EmptyBinError,
    PreconditionError,
    ResourceCapError,
    UnsupportedEstimatorError,
    UnsupportedKernelError,
)
from .estimators import ESTIMATORS
from .exact import (
    BRUTE_FORCE_MAX_N,
    TRANSFER_MAX_COLS,
    brute_force_summary,
    summaries_agree,
    transfer_matrix_summary,
)
from .graph import PRESETS, GridModel, kernel_from_preset, load_kernel
from .samplers import SCHEMES

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAP, EXIT_CONTRACT = 0, 1, 2, 3, 4

DEFAULTS = {
    "preset": None,
    "kernel_file": None,
    "size": None,
    "rows": None,
    "cols": None,
    "method": "auto",
    "out": None,
    "max_n": BRUTE_FORCE_MAX_N,
    "max_cols": TRANSFER_MAX_COLS,
    "estimator": "uniform_z",
    "bin": "plus",
    "K": 10**5,
    "chains": 10,
    "seed": None,
    "burn_in": 100,
    "thinning": 1,
    "scheme": "single-site",
    "bin_count": "exact",
    "count_K": None,
    "workers": None,
    "checkpoints": 200,
    "out_dir": "fgmc-out",
    "plot": True,
    "reported_value": None,
}


class ConfigError(Exception):
    pass


def parse_count(text) -> int:
    """Accept ``100000``, ``1e5`` or ``1E+05``."""
    if isinstance(text, int):
        return text
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value.is_integer() or value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}")
    return int(value)


def _add_model_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("model")
    g.add_argument("--preset", help="kernel preset: neg13, cplx15i, pm(a), const(c), ones")
    g.add_argument("--kernel-file", help='kernel JSON {"entries": [[[re,im],[re,im]],[[re,im],[re,im]]]}')
    g.add_argument("--size", type=int, help="square grid side m")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    p.add_argument("--config", help="JSON file with default settings (flags win)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fgmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="exact per-bin partition sums and counts")
    _add_model_args(p)
    p.add_argument("--method", choices=["auto", "brute", "transfer", "both"])
    p.add_argument("--out", help="summary JSON path")
    p.add_argument("--max-n", type=int, help="brute-force cap on N")
    p.add_argument("--max-cols", type=int, help="transfer-matrix cap on columns")

    p = sub.add_parser("estimate", help="multi-chain Monte Carlo estimate with traces")
    _add_model_args(p)
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--bin", help="plus, minus, plus_i, minus_i, or all (Z estimators)")
    p.add_argument("--K", type=parse_count, help="samples per chain (1e5 style accepted)")
    p.add_argument("--chains", type=int)
    p.add_argument("--seed", type=int, help="base seed (falls back to $FGMC_SEED, then 0)")
    p.add_argument("--burn-in", type=parse_count)
    p.add_argument("--thinning", type=int)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--bin-count", help="exact, estimate, or an integer |X_b|")
    p.add_argument("--count-K", type=parse_count, help="samples per chain for --bin-count estimate")
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoints", type=int, help="trace points recorded per chain")
    p.add_argument("--out-dir")
    p.add_argument("--max-cols", type=int, help="transfer-matrix cap for the exact reference")
    p.add_argument("--no-plot", dest="plot", action="store_false", default=None)
    p.add_argument("--reported-value", type=float, help="reference line drawn on the plot")

    p = sub.add_parser("dual-check", help="compare primal Z_f with the dual-graph Z_d")
    _add_model_args(p)
    p.add_argument("--out", help="report JSON path")

    sub.add_parser("presets", help="list kernel presets")
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        for key, value in file_cfg.items():
            key = key.replace("-", "_")
            if key not in settings:
                raise ConfigError(f"unknown config key {key!r}")
            settings[key] = value
    for key, value in vars(args).items():
        if key in settings and value is not None:
            settings[key] = value
    if settings["seed"] is None:
        env = os.environ.get("FGMC_SEED")
        try:
            settings["seed"] = int(env) if env else 0
        except ValueError:
            raise ConfigError(f"FGMC_SEED must be an integer, got {env!r}")
    for key in ("K", "count_K", "burn_in"):
        if settings[key] is not None:
            settings[key] = parse_count(settings[key])
    return settings


def build_model(s: dict) -> GridModel:
    if s["preset"] and s["kernel_file"]:
        raise ConfigError("give either --preset or --kernel-file, not both")
    try:
        if s["kernel_file"]:
            kernel = load_kernel(s["kernel_file"])
        elif s["preset"]:
            kernel = kernel_from_preset(s["preset"])
        else:
            raise ConfigError("a kernel is required (--preset or --kernel-file)")
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc))
    rows = s["rows"] or s["size"]
    cols = s["cols"] or s["size"]
    if not rows or not cols or rows < 1 or cols < 1:
        raise ConfigError("grid size required (--size, or --rows and --cols)")
    return GridModel(int(rows), int(cols), kernel)


def _print_summary(summary, out=None):
    n = summary.n
    print(f"{summary.method}: {summary.rows}x{summary.cols} {summary.kernel_name or ''}  N = {n}", file=out)
    print(f"{'bin':>8} {'|X_b|':>24} {'log2|X_b|':>10} {'(1/N)log2|Z_b|':>15}", file=out)
    for b in summary.bins:
        c = summary.count(b)
        lg = summary.log2_z(b)
        print(
            f"{b.name:>8} {c:>24} {math.log2(c) if c else float('-inf'):>10.4f} "
            f"{lg / n if lg > -math.inf else float('-inf'):>15.6f}",
            file=out,
        )
    print(f"{'zero':>8} {summary.zero_count:>24}", file=out)
    zf = summary.z_f
    print(f"Z_f = {zf.real:.12g} {zf.imag:+.12g}i   Z_|f| = {summary.z_abs:.12g}", file=out)


def cmd_exact(s: dict) -> int:
    model = build_model(s)
    method = s["method"]
    if method == "auto":
        method = "transfer" if model.kernel.is_quarter_turn and model.cols <= s["max_cols"] else "brute"
    results = {}
    if method in ("brute", "both"):
        results["brute"] = brute_force_summary(model, max_n=s["max_n"])
    if method in ("transfer", "both"):
        results["transfer"] = transfer_matrix_summary(model, max_cols=s["max_cols"])
    for summary in results.values():
        _print_summary(summary)
    status = EXIT_OK
    payload = {k: v.to_json() for k, v in results.items()}
    if method == "both":
        agree = summaries_agree(results["brute"], results["transfer"])
        payload["agree"] = agree
        print("brute and transfer agree" if agree else "MISMATCH between brute and transfer")
        status = EXIT_OK if agree else EXIT_FAIL
    if s["out"]:
        doc = payload if method == "both" else next(iter(payload.values()))
        Path(s["out"]).write_text(json.dumps(doc, indent=2) + "\n")
    return status


def cmd_estimate(s: dict) -> int:
    from .experiment import ExperimentConfig, run_experiment

    model = build_model(s)
    try:
        cfg = ExperimentConfig(
            model=model,
            estimator=s["estimator"],
            target=s["bin"],
            K=s["K"],
            chains=int(s["chains"]),
            seed=int(s["seed"]),
            burn_in=s["burn_in"],
            thinning=int(s["thinning"]),
            scheme=s["scheme"],
            bin_count=str(s["bin_count"]),
            count_K=s["count_K"],
            workers=s["workers"],
            n_points=int(s["checkpoints"]),
            max_cols=int(s["max_cols"]),
            out_dir=Path(s["out_dir"]),
            plot=bool(s["plot"]),
            reported_value=s["reported_value"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    result = run_experiment(cfg)
    for name, rec in result.summary["bins"].items():
        if cfg.estimator in ("uniform_z", "ogata_tanemura"):
            exact = rec.get("exact_log2_per_site")
            print(
                f"{name}: (1/N)log2 Z mean = {rec['log2_mean_per_site']}"
                + (f"   exact = {exact:.6f}" if exact is not None else "")
            )
            for ch in rec["chains"]:
                print(f"  chain {ch['chain_id']}: (1/N)log2 Z = {ch['log2_per_site']}")
        else:
            lg = rec["log2_mean"]
            shown = "-inf (no samples landed)" if lg is None else f"{lg:.6f}"
            exact = rec.get("exact_log2")
            print(f"{name}: log2 |X_b| estimate = {shown}" + (f"   exact = {exact:.6f}" if exact is not None else ""))
    if result.summary.get("z_f"):
        zf = result.summary["z_f"]
        print(f"Z_f = {zf['z_f'][0]:.6g} {zf['z_f'][1]:+.6g}i  (stderr {zf['stderr']:.3g})"
              + ("  [cancellation]" if zf["cancellation"] else ""))
    for key, path in result.files.items():
        print(f"wrote {key}: {path}")
    return EXIT_OK


def cmd_dual_check(s: dict) -> int:
    from .dual import duality_check

    model = build_model(s)
    report = duality_check(model)
    doc = report.to_json()
    print(json.dumps(doc))
    print("PASS" if report.passed else "FAIL")
    if s["out"]:
        Path(s["out"]).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_presets(_s: dict) -> int:
    for name, desc in PRESETS.items():
        print(f"{name:10} {desc}")
    return EXIT_OK


COMMANDS = {"exact": cmd_exact, "estimate": cmd_estimate, "dual-check": cmd_dual_check, "presets": cmd_presets}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        return COMMANDS[args.command](settings)
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"fgmc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"fgmc: {exc} (raise the cap with --max-n / --max-cols)", file=sys.stderr)
        return EXIT_CAP
    except (ContractViolation, UnsupportedEstimatorError, UnsupportedKernelError, PreconditionError,
            EmptyBinError) as exc:
        print(f"fgmc: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
