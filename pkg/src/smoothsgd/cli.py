"""Command-line interface.

Subcommands
-----------
validate {hermite|sphere|smoothing|all}
    Run a validation suite and print a pass/fail table.
run
    One recovery trial; prints the trial record as a JSON line.
sweep --config FILE
    Run a (k, d, seed) grid, fit the power law, write the scaling CSV.
fit --input CSV
    Re-fit the power law from an emitted CSV.
probe-snr
    Per-sample gradient signal/noise estimates over an alpha grid (CSV).
tpca
    One tensor-PCA recovery trial; prints a JSON result.

The environment variable SMOOTHSGD_OUTPUT overrides the output directory
used by sweep configs and default output paths.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .harness import (
    fit_power_law,
    load_config,
    read_plot_data,
    run_trial,
    sweep_and_emit,
)
from .hermite import normalized_hermite_link
from .sgd import DEFAULT_MAX_SAMPLES, snr_probe
from .smoothing import SmoothedModel
from .tensors import empirical_hermite_tensor, make_spiked_tensor, recover_spike
from .sphere import sample_sphere
from .validate import run_suite

SNR_CSV_HEADER = "alpha,signal,signal_se,noise,noise_se,snr"


def _output_dir(default: str) -> str:
    return os.environ.get("SMOOTHSGD_OUTPUT", default)


def _cmd_validate(args) -> int:
    checks = run_suite(
        args.suite, seed=args.seed, mc_samples=args.mc_samples, grid=args.grid
    )
    width = max(len(c.name) for c in checks)
    failed = 0
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        failed += not c.passed
        print(f"[{status}] {c.suite}: {c.name:<{width}}  {c.detail}")
    total = len(checks)
    print(f"{total - failed}/{total} checks passed")
    return 1 if failed else 0


def _cmd_run(args) -> int:
    record = run_trial(
        args.k,
        args.d,
        args.seed,
        threshold=args.threshold,
        lambda_policy=args.lambda_policy,
        max_samples=args.max_samples,
        noise_var=args.noise_var,
    )
    print(json.dumps(dataclasses.asdict(record)))
    return 0


def _progress(done, total, record):
    print(
        f"[{done}/{total}] k={record['kstar']} d={record['d']} "
        f"seed_index={record['seed_index']} samples={record['samples_used']} "
        f"hit={record['hit_threshold']}",
        file=sys.stderr,
        flush=True,
    )


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    override = os.environ.get("SMOOTHSGD_OUTPUT")
    if override:
        config = dataclasses.replace(config, output=override)
    t0 = time.perf_counter()
    progress = None if args.quiet else _progress
    _, fits, csv_path = sweep_and_emit(config, progress=progress)
    for k in sorted(fits):
        f = fits[k]
        print(
            f"k={k}: n ~ {f.c1:.4g} * d^{f.c2:.4f}  "
            f"(R^2 = {f.r_squared:.4f}, {f.n_points} cells)"
        )
    print(f"wrote {csv_path} in {time.perf_counter() - t0:.1f}s")
    return 0


def _cmd_fit(args) -> int:
    rows = read_plot_data(args.input)
    status = 0
    for k in sorted({r["k"] for r in rows}):
        points = [(r["d"], r["n_mean"]) for r in rows if r["k"] == k]
        if len(points) < 3:
            print(f"k={k}: only {len(points)} cell(s); need 3 to fit", file=sys.stderr)
            status = 1
            continue
        f = fit_power_law(points)
        print(
            json.dumps(
                {
                    "k": k,
                    "c1": f.c1,
                    "c2": f.c2,
                    "r_squared": f.r_squared,
                    "n_points": f.n_points,
                }
            )
        )
    return status


def _parse_lambda(text: str, d: int) -> float:
    if text == "paper":
        return d**0.25
    if text == "none":
        return 0.0
    return float(text)


def _cmd_probe_snr(args) -> int:
    lam = _parse_lambda(args.lambda_policy, args.d)
    model = SmoothedModel(
        link=normalized_hermite_link(args.k),
        dim=args.d,
        lam=lam,
        noise_var=args.noise_var,
    )
    alphas = [float(part) for part in args.alpha_grid.split(",") if part.strip()]
    if not alphas:
        print("empty --alpha-grid", file=sys.stderr)
        return 2
    rng = np.random.Generator(np.random.SFC64(args.seed))
    print(SNR_CSV_HEADER)
    for alpha in alphas:
        p = snr_probe(model, alpha, args.batch, rng)
        print(
            f"{p.alpha!r},{p.signal!r},{p.signal_se!r},"
            f"{p.noise!r},{p.noise_se!r},{p.snr!r}"
        )
    return 0


def _cmd_tpca(args) -> int:
    rng = np.random.Generator(np.random.SFC64(args.seed))
    wstar = sample_sphere(args.d, rng)
    if args.mode == "spiked":
        T = make_spiked_tensor(wstar, args.n, args.k, rng, noise=args.noise)
    else:
        X = rng.standard_normal((args.n, args.d))
        y = np.asarray(
            normalized_hermite_link(args.k)(X @ wstar), dtype=float
        )
        T = empirical_hermite_tensor(X, y, args.k)
    w_hat = recover_spike(T, rng, warm_start_steps=args.steps)
    result = {
        "overlap": abs(float(w_hat @ wstar)),
        "method": (
            "partial_trace+ascent" if args.k % 2 else "power_iteration+ascent"
        ),
        "steps": args.steps,
        "k": args.k,
        "d": args.d,
        "n": args.n,
        "mode": args.mode,
        "seed": args.seed,
    }
    print(json.dumps(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothsgd",
        description="Smoothed online SGD for Gaussian single-index models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="run a validation suite")
    p.add_argument("suite", choices=["hermite", "sphere", "smoothing", "all"])
    p.add_argument("--mc-samples", type=lambda s: int(float(s)), default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", choices=["coarse", "fine"], default="coarse")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="one recovery trial")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument(
        "--lambda", dest="lambda_policy", choices=["paper", "none"], default="paper"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument(
        "--max-samples", type=lambda s: int(float(s)), default=DEFAULT_MAX_SAMPLES
    )
    p.add_argument("--noise-var", type=float, default=0.0)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a (k, d, seed) grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="re-fit the power law from an emitted CSV")
    p.add_argument("--input", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("probe-snr", help="gradient signal/noise over an alpha grid")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--alpha-grid", required=True, help="comma-separated alphas")
    p.add_argument(
        "--lambda",
        dest="lambda_policy",
        default="paper",
        help="'paper' (d**0.25), 'none' (0), or a number",
    )
    p.add_argument("--batch", type=lambda s: int(float(s)), default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-var", type=float, default=0.0)
    p.set_defaults(func=_cmd_probe_snr)

    p = sub.add_parser("tpca", help="one tensor-PCA recovery trial")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=lambda s: int(float(s)), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["spiked", "hermite"], default="spiked")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--noise", choices=["raw", "symmetrized"], default="raw")
    p.set_defaults(func=_cmd_tpca)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
