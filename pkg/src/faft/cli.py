"""Command-line surface: ``faft simulate | fit | replicate | report``.

Configuration comes from an INI-style sectioned key/value file (see README
for the grammar); ``--seed``, ``--out`` and ``--threads`` override it.  Every
run writes a resolved-config snapshot next to its outputs.  Exit codes:
0 success, 2 configuration error, 3 data error, 4 convergence error,
5 support error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from faft.fitting import FitSettings, dataset_fingerprint, fit_dataset
from faft.inference import (
    SingularInformationError,
    Z_95,
    beta_pointwise_band,
)
from faft.ingestion import (
    DataError,
    SchemaError,
    TableSchema,
    load_long_csv,
    save_model,
)
from faft.likelihood import SupportViolationError
from faft.mcharness import (
    CellDiagnosticError,
    CellSpec,
    SUMMARY_HEADER,
    run_cell,
    write_curves_csv,
    write_summary_csv,
)
from faft.optimizer import InitializationError
from faft.simgen import CalibrationError, ScenarioConfig, _calibrated_tau, generate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4
EXIT_SUPPORT = 5

THREADS_ENV = "FAFT_THREADS"


class ConfigError(ValueError):
    pass


def _fmt(value) -> str:
    return repr(float(value))


def _load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file {path} not found or unreadable")
    return parser


def _scenario_from_config(cfg, seed_override, n_override=None) -> ScenarioConfig:
    section = cfg["scenario"] if cfg.has_section("scenario") else {}
    try:
        return ScenarioConfig(
            n=n_override if n_override is not None else int(section.get("n", 400)),
            error_law=section.get("error_law", "exponential-log"),
            censoring_rate=float(section.get("censoring_rate", 0.25)),
            expansion_terms=int(section.get("expansion_terms", 50)),
            seed=seed_override if seed_override is not None else int(section.get("seed", 0)),
            extreme_value_form=section.get("extreme_value_form", "gumbel-max"),
        )
    except ValueError as err:
        raise ConfigError(f"invalid scenario: {err}") from err


def _settings_from_config(cfg, n, default_preset) -> FitSettings:
    preset = cfg.get("sieve", "preset", fallback=default_preset)
    if preset == "simulation":
        return FitSettings.simulation_default(n)
    if preset == "cubic":
        return FitSettings.cubic(n)
    raise ConfigError(f"unknown sieve preset {preset!r}; choose simulation or cubic")


def _write_resolved_config(cfg, out_dir, extras):
    snapshot = configparser.ConfigParser()
    snapshot.read_dict({s: dict(cfg.items(s)) for s in cfg.sections()})
    if not snapshot.has_section("resolved"):
        snapshot.add_section("resolved")
    for key, value in extras.items():
        snapshot.set("resolved", key, str(value))
    with open(Path(out_dir) / "resolved_config.ini", "w", encoding="utf-8") as fh:
        snapshot.write(fh)


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\n")


def cmd_simulate(cfg, out_dir, seed, threads) -> int:
    scenario = _scenario_from_config(cfg, seed)
    grid_points = int(cfg.get("simulate", "grid_points", fallback=51))
    data, truth = generate_dataset(scenario)
    tau = _calibrated_tau(scenario)
    grid = np.linspace(0.0, 1.0, grid_points)
    traj_cols = [f"t_{j:03d}" for j in range(grid_points)]

    with open(Path(out_dir) / "dataset.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["id", "x1", "x2"] + traj_cols + ["event", "status"])
        for i in range(data.n):
            z = data.covariates[i].value(grid)
            writer.writerow(
                [f"s{i:05d}", _fmt(data.x[i, 0]), _fmt(data.x[i, 1])]
                + [_fmt(v) for v in z]
                + [_fmt(data.y[i]), int(data.delta[i])]
            )
    sidecar = {
        "alpha0": [1.0, 1.0],
        "tau": tau,
        "seed": scenario.seed,
        "error_law": scenario.error_law,
        "n": scenario.n,
        "target_censoring": scenario.censoring_rate,
        "achieved_censoring": float(1.0 - data.delta.mean()),
        "residual_shift": truth.residual_shift,
    }
    with open(Path(out_dir) / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    _write_resolved_config(cfg, out_dir, {"command": "simulate", "seed": scenario.seed, "out": out_dir})
    return EXIT_OK


def _schema_from_config(cfg, csv_path) -> TableSchema:
    if not cfg.has_section("schema"):
        raise ConfigError("cmd fit needs a [schema] section")
    section = cfg["schema"]

    def split(key, default=""):
        raw = section.get(key, default)
        return tuple(part.strip() for part in raw.split(",") if part.strip())

    trajectory = _expand_trajectory_columns(split("trajectory"), csv_path)
    origin = section.get("origin", "").strip()
    try:
        return TableSchema(
            id_column=section.get("id", "id"),
            scalar_columns=split("scalars"),
            binary_columns=split("binary"),
            trajectory_columns=trajectory,
            event_column=section.get("event", "event"),
            status_column=section.get("status", "status"),
            transform=section.get("transform", "log"),
            origin=float(origin) if origin else None,
        )
    except (SchemaError, ValueError) as err:
        raise ConfigError(f"invalid schema: {err}") from err


def _expand_trajectory_columns(cols, csv_path):
    """Expand a single 'prefix:NAME' trajectory entry against the file header."""
    if len(cols) == 1 and cols[0].startswith("prefix:"):
        prefix = cols[0][len("prefix:"):]
        with open(csv_path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        expanded = tuple(c for c in header if c.startswith(prefix))
        if len(expanded) < 2:
            raise ConfigError(f"trajectory prefix {prefix!r} matches {len(expanded)} columns")
        return expanded
    return cols


def cmd_fit(cfg, out_dir, seed, threads) -> int:
    dataset_path = cfg.get("fit", "dataset", fallback=None)
    if dataset_path is None:
        raise ConfigError("cmd fit needs [fit] dataset = <csv path>")
    schema = _schema_from_config(cfg, dataset_path)
    data = load_long_csv(dataset_path, schema)
    settings = _settings_from_config(cfg, data.n, default_preset="cubic")
    fit = fit_dataset(data, settings)

    out = Path(out_dir)
    save_model(fit, out / "model.json")
    with open(out / "alpha_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["coefficient", "estimate", "se", "z", "p"])
        for j, name in enumerate(schema.scalar_columns):
            est, se = fit.params.alpha[j], fit.alpha_se[j]
            z = est / se
            p = math.erfc(abs(z) / math.sqrt(2.0))
            writer.writerow([name, _fmt(est), _fmt(se), _fmt(z), _fmt(p)])
    band = beta_pointwise_band(fit, np.linspace(0.0, 1.0, 201))
    with open(out / "beta_band.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["grid", "estimate", "lower", "upper"])
        for row in zip(band.grid, band.estimate, band.lower, band.upper):
            writer.writerow([_fmt(v) for v in row])
    a, b = fit.support
    g_grid = np.linspace(a, b, 201)
    g_vals = fit.params.loghaz.basis.evaluate_many(g_grid) @ fit.params.loghaz.coefficients
    with open(out / "g_curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["grid", "estimate"])
        for x, v in zip(g_grid, g_vals):
            writer.writerow([_fmt(x), _fmt(v)])
    _write_resolved_config(cfg, out_dir, {
        "command": "fit",
        "dataset": dataset_path,
        "n_records": data.n,
        "fingerprint": dataset_fingerprint(data)["column_hash"],
        "termination": fit.trace.termination,
    })
    return EXIT_OK


def _cells_from_config(cfg, seed) -> list:
    section = cfg["replicate"] if cfg.has_section("replicate") else {}
    laws = [s.strip() for s in section.get("laws", "exponential-log").split(",") if s.strip()]
    ns = [int(s) for s in section.get("ns", "400").split(",") if s.strip()]
    rates = [float(s) for s in section.get("rates", "0.25").split(",") if s.strip()]
    replicates = int(section.get("replicates", 200))
    base = _scenario_from_config(cfg, seed)
    cells = []
    for law in laws:
        for n in ns:
            for rate in rates:
                scenario = replace(base, n=n, error_law=law, censoring_rate=rate)
                preset = cfg.get("sieve", "preset", fallback="simulation")
                settings = (FitSettings.cubic(n) if preset == "cubic"
                            else FitSettings.simulation_default(n))
                cells.append(CellSpec(scenario, replicates, settings))
    return cells


def cmd_replicate(cfg, out_dir, seed, threads) -> int:
    cells = _cells_from_config(cfg, seed)
    out = Path(out_dir)
    summaries, errors = [], []
    for spec in cells:
        try:
            summary = run_cell(spec, workers=threads)
        except CellDiagnosticError as err:
            errors.append(str(err))
            print(f"error: {err}", file=sys.stderr)
            continue
        summaries.append(summary)
        s = spec.scenario
        tag = f"{s.error_law}_{s.n}_{s.censoring_rate:g}".replace(".", "p")
        write_curves_csv(summary, out / f"curves_{tag}.csv")
    write_summary_csv(summaries, out / "summary.csv")
    _write_resolved_config(cfg, out_dir, {
        "command": "replicate",
        "cells": len(cells),
        "failed_cells": len(errors),
        "threads": threads,
    })
    return EXIT_CONVERGENCE if errors else EXIT_OK


def _read_summary(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SUMMARY_HEADER:
            raise DataError(
                f"{path}: unexpected summary columns {header}; expected {SUMMARY_HEADER}"
            )
        return list(reader)


def cmd_report(paths, out_dir) -> int:
    rows = []
    for path in paths:
        rows.extend(_read_summary(path))
    cells = {}
    for law, n, rate, reps, stat, coord, value in rows:
        key = (law, int(n), float(rate))
        cells.setdefault(key, {})[(stat, coord)] = float(value) if value else None

    out = Path(out_dir)
    with open(out / "table1.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["law", "n", "censoring_rate", "coordinate", "bias", "sse", "ese", "cp"])
        for key in sorted(cells):
            stats = cells[key]
            coords = sorted({c for (s, c) in stats if s == "bias"})
            for coord in coords:
                writer.writerow(list(key) + [coord] + [
                    "" if stats.get((s, coord)) is None else f"{stats[(s, coord)]:.4f}"
                    for s in ("bias", "sse", "ese", "cp")
                ])
    with open(out / "table2.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv_writer(fh)
        writer.writerow(["law", "n", "censoring_rate", "mse_beta", "mse_g"])
        for key in sorted(cells):
            stats = cells[key]
            # the table-comparable statistics: pointwise-average-curve error
            # for the functional coefficient, per-replicate mean for the
            # log-hazard (see mcharness.CellSummary)
            mse_b = stats.get(("mse_avg_curve", "beta"))
            mse_g = stats.get(("mse_mean", "g"))
            writer.writerow(list(key) + [
                "" if v is None else f"{v:.4f}" for v in (mse_b, mse_g)
            ])
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faft",
        description="Functional accelerated failure time model: simulate, fit, replicate, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "generate one synthetic dataset CSV plus a truth sidecar"),
        ("fit", "fit the model to a longitudinal CSV"),
        ("replicate", "run Monte Carlo cells and write summary/curve CSVs"),
        ("report", "merge cell summaries into table-shaped CSVs"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=".", help="output directory (created if absent)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker count for replicate cells (default ${THREADS_ENV} or 1)")
        if name == "report":
            p.add_argument("summaries", nargs="+", help="summary.csv files to merge")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    try:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = _load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, args.seed, threads)
        if args.command == "fit":
            return cmd_fit(cfg, out_dir, args.seed, threads)
        if args.command == "replicate":
            return cmd_replicate(cfg, out_dir, args.seed, threads)
        return cmd_report(args.summaries, out_dir)
    except (ConfigError, configparser.Error) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, DataError, FileNotFoundError, CalibrationError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except SupportViolationError as err:
        print(f"support error: {err}", file=sys.stderr)
        return EXIT_SUPPORT
    except (SingularInformationError, InitializationError, CellDiagnosticError, RuntimeError) as err:
        print(f"convergence error: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
