"""Sweep orchestration: run grids of recovery trials and fit scaling laws.

A sweep runs ``seeds`` independent trials for every ``(k, d)`` cell of a
grid, records the number of samples each trial needed to reach the target
alignment, aggregates per-cell statistics, and fits ``n = c1 * d**c2`` per
``k`` by least squares on ``(log d, log n_mean)``.

Seed derivation
---------------
Each trial's RNG seed is a stable 64-bit hash of the trial coordinates:
the first 8 bytes (little-endian, unsigned) of
``sha256(f"{root_seed}:{k}:{d}:{seed_index}")``.  The derivation depends
only on those four integers, so adding cells to a grid or re-running a
subset never changes the random stream of any existing trial.

Resumability
------------
Each finished trial is written to ``<output>/records/<cell>.json`` where
``<cell>`` hashes every parameter that affects the trial's outcome.  A
re-run with the same config loads those files instead of recomputing.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hermite import normalized_hermite_link
from .sgd import (
    DEFAULT_MAX_SAMPLES,
    SgdSchedule,
    TrialRecord,
    aligned_start,
    default_schedule,
    run_stage1,
)
from .smoothing import SmoothedModel
from .sphere import sample_sphere

CSV_HEADER = "k,d,n_min,n_mean,n_max,fit_c1,fit_c2,fit_r2"

_CONFIG_DEFAULTS = {
    "seeds": 5,
    "threshold": 0.5,
    "lambda_policy": "paper",
    "root_seed": 0,
    "output": "sweep_out",
    "max_samples": DEFAULT_MAX_SAMPLES,
    "noise_var": 0.0,
    "batch_size": None,
    "eta": None,
    "lambda_value": None,
    "workers": 1,
}


@dataclass(frozen=True)
class SweepConfig:
    """Validated parameters for one sweep.

    ``batch_size``, ``eta`` and ``lambda_value`` override the corresponding
    schedule fields directly (no recomputation of the others).
    """

    k_list: tuple[int, ...]
    d_list: tuple[int, ...]
    seeds: int = 5
    threshold: float = 0.5
    lambda_policy: str = "paper"
    root_seed: int = 0
    output: str = "sweep_out"
    max_samples: int = DEFAULT_MAX_SAMPLES
    noise_var: float = 0.0
    batch_size: int | None = None
    eta: float | None = None
    lambda_value: float | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.k_list:
            raise ValueError("k_list must be non-empty")
        if any(k < 1 for k in self.k_list):
            raise ValueError("k_list entries must be >= 1")
        if not self.d_list:
            raise ValueError("d_list must be non-empty")
        if any(b <= a for a, b in zip(self.d_list, self.d_list[1:])):
            raise ValueError("d_list must be strictly increasing")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.lambda_policy not in ("paper", "none"):
            raise ValueError("lambda_policy must be 'paper' or 'none'")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")
        if self.noise_var < 0.0:
            raise ValueError("noise_var must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def parse_config(text: str) -> SweepConfig:
    """Parse flat ``key = value`` config text; unknown keys are an error."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in raw:
            raise ValueError(f"config line {lineno}: duplicate key '{key}'")
        raw[key] = value

    known = {"k_list", "d_list"} | set(_CONFIG_DEFAULTS)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for required in ("k_list", "d_list"):
        if required not in raw:
            raise ValueError(f"config is missing required key '{required}'")

    def int_list(value):
        return tuple(int(part) for part in value.split(",") if part.strip())

    kwargs: dict = {
        "k_list": int_list(raw.pop("k_list")),
        "d_list": int_list(raw.pop("d_list")),
    }
    for key, value in raw.items():
        default = _CONFIG_DEFAULTS[key]
        if key in ("batch_size", "eta", "lambda_value") and value.lower() in (
            "none",
            "",
        ):
            kwargs[key] = None
        elif key in ("seeds", "root_seed", "workers", "batch_size"):
            kwargs[key] = int(value)
        elif key == "max_samples":
            kwargs[key] = int(float(value))
        elif key in ("threshold", "noise_var", "eta", "lambda_value"):
            kwargs[key] = float(value)
        elif isinstance(default, str):
            kwargs[key] = value
        else:
            kwargs[key] = value
    return SweepConfig(**kwargs)


def load_config(path: str | os.PathLike) -> SweepConfig:
    return parse_config(Path(path).read_text())


def trial_seed(root_seed: int, k: int, d: int, seed_index: int) -> int:
    """Stable 64-bit trial seed; see the module docstring for the rule."""
    digest = hashlib.sha256(f"{root_seed}:{k}:{d}:{seed_index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _build_schedule(config: SweepConfig, k: int, d: int) -> SgdSchedule:
    sched = default_schedule(
        k, d, lambda_policy=config.lambda_policy, max_samples=config.max_samples
    )
    updates = {}
    if config.batch_size is not None:
        updates["batch_size"] = config.batch_size
        updates["stage1_steps"] = max(
            1, math.ceil(config.max_samples / config.batch_size)
        )
    if config.eta is not None:
        updates["stage1_eta"] = config.eta
    if config.lambda_value is not None:
        updates["stage1_lambda"] = config.lambda_value
    return dataclasses.replace(sched, **updates) if updates else sched


def _cell_token(config: SweepConfig, k: int, d: int, seed_index: int) -> str:
    parts = (
        f"v1|root={config.root_seed}|k={k}|d={d}|i={seed_index}"
        f"|thr={config.threshold!r}|pol={config.lambda_policy}"
        f"|cap={config.max_samples}|nv={config.noise_var!r}"
        f"|B={config.batch_size!r}|eta={config.eta!r}"
        f"|lam={config.lambda_value!r}"
    )
    return hashlib.sha256(parts.encode()).hexdigest()[:20]


def run_trial(
    k: int,
    d: int,
    seed: int,
    *,
    threshold: float = 0.5,
    lambda_policy: str = "paper",
    max_samples: int = DEFAULT_MAX_SAMPLES,
    noise_var: float = 0.0,
    schedule: SgdSchedule | None = None,
) -> TrialRecord:
    """One recovery trial from exact initial alignment d**-0.5."""
    if schedule is None:
        schedule = default_schedule(
            k, d, lambda_policy=lambda_policy, max_samples=max_samples
        )
    rng = np.random.Generator(np.random.SFC64(seed))
    wstar = sample_sphere(d, rng)
    w0 = aligned_start(wstar, d**-0.5, rng)
    model = SmoothedModel(
        link=normalized_hermite_link(k),
        dim=d,
        lam=schedule.stage1_lambda,
        noise_var=noise_var,
    )
    _, record = run_stage1(
        model, schedule, w0, wstar, rng, threshold=threshold, seed=seed
    )
    return record


def _run_sweep_trial(args) -> dict:
    config_dict, k, d, seed_index = args
    config = SweepConfig(**config_dict)
    seed = trial_seed(config.root_seed, k, d, seed_index)
    record = run_trial(
        k,
        d,
        seed,
        threshold=config.threshold,
        max_samples=config.max_samples,
        noise_var=config.noise_var,
        schedule=_build_schedule(config, k, d),
    )
    out = dataclasses.asdict(record)
    out["seed_index"] = seed_index
    return out


def run_sweep(
    config: SweepConfig, root_seed: int | None = None, progress=None
) -> list[dict]:
    """Run (or resume) every trial of the grid; returns one dict per trial.

    ``root_seed`` overrides ``config.root_seed`` when given.  ``progress``
    is an optional callable invoked as ``progress(done, total, info)``.
    """
    if root_seed is not None:
        config = dataclasses.replace(config, root_seed=root_seed)
    records_dir = Path(config.output) / "records"
    records_dir.mkdir(parents=True, exist_ok=True)

    cells = [
        (k, d, i)
        for k in config.k_list
        for d in config.d_list
        for i in range(config.seeds)
    ]
    results: dict[tuple, dict] = {}
    pending = []
    for k, d, i in cells:
        path = records_dir / f"{_cell_token(config, k, d, i)}.json"
        if path.exists():
            results[(k, d, i)] = json.loads(path.read_text())
        else:
            pending.append((k, d, i))

    config_dict = dataclasses.asdict(config)
    done = len(results)
    total = len(cells)

    def finish(key, record):
        nonlocal done
        k, d, i = key
        path = records_dir / f"{_cell_token(config, k, d, i)}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, sort_keys=True))
        tmp.replace(path)
        results[key] = record
        done += 1
        if progress is not None:
            progress(done, total, record)

    if config.workers > 1 and len(pending) > 1:
        args = [(config_dict, k, d, i) for k, d, i in pending]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for key, record in zip(pending, pool.map(_run_sweep_trial, args)):
                finish(key, record)
    else:
        for key in pending:
            finish(key, _run_sweep_trial((config_dict, *key)))

    return [results[key] for key in sorted(results)]


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares fit of n = c1 * d**c2 on log-log axes."""

    c1: float
    c2: float
    r_squared: float
    n_points: int


def fit_power_law(points: list[tuple[float, float]]) -> PowerLawFit:
    """Fit ``n = c1 * d**c2`` to ``(d, n)`` pairs by least squares on logs."""
    if len(points) < 3:
        raise ValueError("power-law fit needs at least 3 points")
    d = np.asarray([p[0] for p in points], dtype=float)
    n = np.asarray([p[1] for p in points], dtype=float)
    if np.any(d <= 0) or np.any(n <= 0):
        raise ValueError("power-law fit needs positive d and n")
    x = np.log(d)
    y = np.log(n)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return PowerLawFit(
        c1=float(np.exp(intercept)),
        c2=float(slope),
        r_squared=r2,
        n_points=len(points),
    )


@dataclass
class CellStats:
    k: int
    d: int
    n_min: int
    n_mean: float
    n_max: int
    trials: int


def aggregate_cells(records: list[dict]) -> list[CellStats]:
    """Per-(k, d) sample-count stats over trials that hit the threshold.

    Trials that hit the sample cap or aborted are excluded with a warning;
    a cell with no successful trial is dropped entirely.
    """
    by_cell: dict[tuple[int, int], list[int]] = {}
    dropped = 0
    for rec in records:
        key = (int(rec["kstar"]), int(rec["d"]))
        if rec["hit_threshold"]:
            by_cell.setdefault(key, []).append(int(rec["samples_used"]))
        else:
            dropped += 1
            by_cell.setdefault(key, [])
    if dropped:
        warnings.warn(
            f"{dropped} trial(s) did not reach the alignment threshold and "
            "are excluded from cell statistics",
            stacklevel=2,
        )
    stats = []
    for (k, d), ns in sorted(by_cell.items()):
        if not ns:
            warnings.warn(
                f"cell k={k} d={d} has no successful trial; dropping it",
                stacklevel=2,
            )
            continue
        stats.append(
            CellStats(
                k=k,
                d=d,
                n_min=min(ns),
                n_mean=float(np.mean(ns)),
                n_max=max(ns),
                trials=len(ns),
            )
        )
    return stats


def fit_cells(stats: list[CellStats]) -> dict[int, PowerLawFit]:
    """One power-law fit per k over that k's (d, n_mean) cells."""
    fits: dict[int, PowerLawFit] = {}
    for k in sorted({s.k for s in stats}):
        points = [(s.d, s.n_mean) for s in stats if s.k == k]
        if len(points) < 3:
            warnings.warn(
                f"k={k} has {len(points)} cell(s); need 3 for a fit",
                stacklevel=2,
            )
            continue
        fits[k] = fit_power_law(points)
    return fits


def _format_cell(value: float) -> str:
    return repr(float(value))


def emit_plot_data(
    stats: list[CellStats],
    fits: dict[int, PowerLawFit],
    path: str | os.PathLike,
    config: SweepConfig | None = None,
) -> Path:
    """Write the per-cell CSV (stable header and row order) plus a JSON
    sidecar recording the config; returns the CSV path."""
    path = Path(path)
    lines = [CSV_HEADER]
    for s in sorted(stats, key=lambda s: (s.k, s.d)):
        fit = fits.get(s.k)
        c1, c2, r2 = (
            (fit.c1, fit.c2, fit.r_squared)
            if fit is not None
            else (float("nan"),) * 3
        )
        lines.append(
            f"{s.k},{s.d},{s.n_min},{_format_cell(s.n_mean)},{s.n_max},"
            f"{_format_cell(c1)},{_format_cell(c2)},{_format_cell(r2)}"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    if config is not None:
        sidecar = path.with_suffix(".config.json")
        sidecar.write_text(
            json.dumps(dataclasses.asdict(config), indent=2, sort_keys=True) + "\n"
        )
    return path


def read_plot_data(path: str | os.PathLike) -> list[dict]:
    """Parse a CSV produced by emit_plot_data back into row dicts."""
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header; want '{CSV_HEADER}'")
    rows = []
    for line in text[1:]:
        parts = line.split(",")
        if len(parts) != 8:
            raise ValueError(f"malformed CSV row: {line!r}")
        rows.append(
            {
                "k": int(parts[0]),
                "d": int(parts[1]),
                "n_min": int(parts[2]),
                "n_mean": float(parts[3]),
                "n_max": int(parts[4]),
                "fit_c1": float(parts[5]),
                "fit_c2": float(parts[6]),
                "fit_r2": float(parts[7]),
            }
        )
    return rows


def refit_from_csv(path: str | os.PathLike) -> dict[int, PowerLawFit]:
    """Re-fit the power law per k from an emitted CSV's n_mean column."""
    rows = read_plot_data(path)
    fits: dict[int, PowerLawFit] = {}
    for k in sorted({r["k"] for r in rows}):
        points = [(r["d"], r["n_mean"]) for r in rows if r["k"] == k]
        if len(points) >= 3:
            fits[k] = fit_power_law(points)
    return fits


def sweep_and_emit(
    config: SweepConfig, csv_path: str | os.PathLike | None = None, progress=None
) -> tuple[list[dict], dict[int, PowerLawFit], Path]:
    """run_sweep + aggregate + fit + emit, returning all three artifacts."""
    records = run_sweep(config, progress=progress)
    stats = aggregate_cells(records)
    fits = fit_cells(stats)
    if csv_path is None:
        csv_path = Path(config.output) / "scaling.csv"
    out = emit_plot_data(stats, fits, csv_path, config=config)
    return records, fits, out
