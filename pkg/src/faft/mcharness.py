"""Monte Carlo replication harness: cells of repeated generate/fit/infer
runs summarized by the usual bias / SSE / ESE / CP table statistics, the
two functional mean-squared errors, and pointwise-average curves.

Replicate ``r`` of a cell uses derived seed ``base_seed + r``, so replicates
are independent and the aggregation is a deterministic ordered fold over the
replicate index regardless of execution order or worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from faft.fitting import FitSettings, fit_dataset, q_n_rule  # noqa: F401  (q_n_rule re-exported)
from faft.inference import Z_95, mse_beta, mse_g
from faft.simgen import ScenarioConfig, TrueModel, generate_dataset

#: Evaluation grids for the pointwise-average curves.
BETA_GRID = np.linspace(0.0, 1.0, 201)
G_GRID = np.linspace(-1.5, 1.5, 201)

#: Fraction of failed replicates above which a cell is considered broken.
FAILURE_FRACTION_LIMIT = 0.2


class CellDiagnosticError(RuntimeError):
    """Too many replicates of a cell failed to converge."""


@dataclass(frozen=True)
class CellSpec:
    """One simulation cell: a scenario, a replicate count and fit settings."""

    scenario: ScenarioConfig
    replicates: int
    settings: Optional[FitSettings] = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")

    def resolved_settings(self) -> FitSettings:
        return self.settings if self.settings is not None else FitSettings.simulation_default(self.scenario.n)

    def label(self) -> str:
        s = self.scenario
        return f"{s.error_law}/n={s.n}/cens={s.censoring_rate:g}"


@dataclass
class CellSummary:
    """Aggregated statistics of one cell.

    ``alpha_sse`` is the sample standard deviation of the estimates, absent
    (None) when fewer than two replicates succeeded.  Both flavors of the
    functional errors are reported: the mean over replicates of the
    per-replicate integrated squared error, and the integrated squared error
    of the pointwise-average curve (the bias-only summary the replication
    tables and figures are built from for the functional coefficient).
    """

    spec: CellSpec
    n_success: int
    failures: list
    alpha_bias: np.ndarray
    alpha_sse: Optional[np.ndarray]
    alpha_ese: np.ndarray
    alpha_cp: np.ndarray
    mse_beta_mean: float
    mse_g_mean: float
    mse_beta_avg_curve: float
    mse_g_avg_curve: float
    beta_grid: np.ndarray
    beta_mean_curve: np.ndarray
    beta_true_curve: np.ndarray
    g_grid: np.ndarray
    g_mean_curve: np.ndarray
    g_true_curve: np.ndarray
    alpha_estimates: np.ndarray = field(repr=False, default=None)
    mse_beta_values: np.ndarray = field(repr=False, default=None)
    mse_g_values: np.ndarray = field(repr=False, default=None)

    @property
    def n_failures(self) -> int:
        return len(self.failures)


def _replicate(args):
    """One generate/fit/measure pass; top-level so worker pools can pickle it."""
    scenario, settings, r = args
    config = replace(scenario, seed=scenario.seed + r)
    data, truth = generate_dataset(config)
    try:
        fit = fit_dataset(data, settings)
    except Exception as err:  # recorded and excluded, never retried
        return r, None, f"{type(err).__name__}: {err}"
    alpha0 = truth.alpha
    covered = np.abs(fit.params.alpha - alpha0) <= Z_95 * fit.alpha_se
    beta_curve = fit.params.beta.basis.evaluate_many(BETA_GRID) @ fit.params.beta.coefficients
    a, b = fit.support
    if a <= G_GRID[0] and G_GRID[-1] <= b:
        g_curve = fit.params.loghaz.basis.evaluate_many(G_GRID) @ fit.params.loghaz.coefficients
        g_truth = truth.g0(G_GRID)
    else:
        g_curve = g_truth = None
    stats = {
        "alpha": fit.params.alpha,
        "se": fit.alpha_se,
        "covered": covered,
        "mse_beta": mse_beta(fit.params.beta, truth.beta0),
        "mse_g": mse_g(fit.params.loghaz, truth.g0),
        "beta_curve": beta_curve,
        "g_curve": g_curve,
        "g_truth": g_truth,
        "truth": truth,
    }
    return r, stats, None


def run_cell(spec: CellSpec, workers: int = 1) -> CellSummary:
    """Run all replicates of a cell and aggregate.

    Failed replicates are recorded with their error text and excluded from
    every aggregate; a cell with more than 20% failures raises
    :class:`CellDiagnosticError`.
    """
    settings = spec.resolved_settings()
    jobs = [(spec.scenario, settings, r) for r in range(spec.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_replicate, jobs))
    else:
        raw = [_replicate(job) for job in jobs]
    raw.sort(key=lambda item: item[0])

    failures = [(r, msg) for r, stats, msg in raw if stats is None]
    results = [stats for _, stats, _ in raw if stats is not None]
    if len(failures) > FAILURE_FRACTION_LIMIT * spec.replicates:
        detail = "; ".join(f"replicate {r}: {msg}" for r, msg in failures[:5])
        raise CellDiagnosticError(
            f"cell {spec.label()}: {len(failures)}/{spec.replicates} replicates failed ({detail})"
        )
    if not results:
        raise CellDiagnosticError(f"cell {spec.label()}: no replicate succeeded")

    truth: TrueModel = results[0]["truth"]
    alpha0 = truth.alpha
    alphas = np.vstack([s["alpha"] for s in results])
    ses = np.vstack([s["se"] for s in results])
    covers = np.vstack([s["covered"] for s in results])
    mse_b = np.array([s["mse_beta"] for s in results])
    mse_gv = np.array([s["mse_g"] for s in results])
    beta_mean = np.mean([s["beta_curve"] for s in results], axis=0)
    beta_true = truth.beta0(BETA_GRID)

    g_items = [(s["g_curve"], s["g_truth"]) for s in results if s["g_curve"] is not None]
    if g_items:
        g_mean = np.mean([c for c, _ in g_items], axis=0)
        g_true = np.mean([t for _, t in g_items], axis=0)
        mse_g_avg = float(np.trapezoid((g_mean - g_true) ** 2, G_GRID))
    else:
        g_mean = np.full(G_GRID.size, np.nan)
        g_true = np.full(G_GRID.size, np.nan)
        mse_g_avg = float("nan")

    return CellSummary(
        spec=spec,
        n_success=len(results),
        failures=failures,
        alpha_bias=alphas.mean(axis=0) - alpha0,
        alpha_sse=alphas.std(axis=0, ddof=1) if len(results) > 1 else None,
        alpha_ese=ses.mean(axis=0),
        alpha_cp=covers.mean(axis=0),
        mse_beta_mean=float(mse_b.mean()),
        mse_g_mean=float(mse_gv.mean()),
        mse_beta_avg_curve=float(np.trapezoid((beta_mean - beta_true) ** 2, BETA_GRID)),
        mse_g_avg_curve=mse_g_avg,
        beta_grid=BETA_GRID.copy(),
        beta_mean_curve=beta_mean,
        beta_true_curve=beta_true,
        g_grid=G_GRID.copy(),
        g_mean_curve=g_mean,
        g_true_curve=g_true,
        alpha_estimates=alphas,
        mse_beta_values=mse_b,
        mse_g_values=mse_gv,
    )


@dataclass(frozen=True)
class RateReport:
    """Empirical convergence diagnostic across sample sizes."""

    sample_sizes: tuple
    median_alpha_error: tuple
    median_mse_beta: tuple
    alpha_slope: float
    mse_beta_slope: float


def convergence_diagnostic(cells) -> RateReport:
    """Log-log rate of the scalar-coefficient error across sample sizes.

    Expects cells with a matched scenario (same law and censoring rate) at
    two or more sample sizes; fits least-squares slopes of
    ``log(median |alpha_1 - 1|)`` and ``log(median MSE(beta))`` on ``log n``.
    """
    cells = sorted(cells, key=lambda c: c.spec.scenario.n)
    if len(cells) < 2:
        raise ValueError("need cells at two or more sample sizes")
    key = {(c.spec.scenario.error_law, c.spec.scenario.censoring_rate) for c in cells}
    if len(key) != 1:
        raise ValueError(f"cells mix scenarios: {sorted(key)}")
    ns = np.array([c.spec.scenario.n for c in cells], dtype=float)
    truth_alpha1 = 1.0
    med_err = np.array([np.median(np.abs(c.alpha_estimates[:, 0] - truth_alpha1)) for c in cells])
    med_mse = np.array([np.median(c.mse_beta_values) for c in cells])

    def slope(values):
        if np.all(values == values[0]):
            return 0.0
        x = np.log(ns)
        y = np.log(values)
        return float(np.polyfit(x, y, 1)[0])

    return RateReport(
        sample_sizes=tuple(int(n) for n in ns),
        median_alpha_error=tuple(med_err),
        median_mse_beta=tuple(med_mse),
        alpha_slope=slope(med_err),
        mse_beta_slope=slope(med_mse),
    )


def _fmt(value) -> str:
    """17-significant-digit decimal serialization (exact float round trip)."""
    return repr(float(value))


def summary_rows(summary: CellSummary):
    """Long-format rows (one per statistic and coordinate) for CSV output."""
    s = summary.spec.scenario
    base = [s.error_law, s.n, s.censoring_rate, summary.spec.replicates]
    rows = []

    def add(stat, coord, value):
        rows.append(base + [stat, coord, _fmt(value) if value is not None else ""])

    for j in range(summary.alpha_bias.size):
        add("bias", f"alpha{j + 1}", summary.alpha_bias[j])
        add("sse", f"alpha{j + 1}", None if summary.alpha_sse is None else summary.alpha_sse[j])
        add("ese", f"alpha{j + 1}", summary.alpha_ese[j])
        add("cp", f"alpha{j + 1}", summary.alpha_cp[j])
    add("mse_mean", "beta", summary.mse_beta_mean)
    add("mse_mean", "g", summary.mse_g_mean)
    add("mse_avg_curve", "beta", summary.mse_beta_avg_curve)
    add("mse_avg_curve", "g", summary.mse_g_avg_curve)
    add("failures", "", summary.n_failures)
    add("successes", "", summary.n_success)
    return rows


SUMMARY_HEADER = ["law", "n", "censoring_rate", "replicates", "statistic", "coordinate", "value"]
CURVE_HEADER = ["law", "n", "censoring_rate", "curve", "grid", "mean", "truth"]


def write_summary_csv(summaries, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for summary in summaries:
            writer.writerows(summary_rows(summary))


def write_curves_csv(summary: CellSummary, path):
    s = summary.spec.scenario
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for name, grid, mean, true in (
            ("beta", summary.beta_grid, summary.beta_mean_curve, summary.beta_true_curve),
            ("g", summary.g_grid, summary.g_mean_curve, summary.g_true_curve),
        ):
            for x, m, t in zip(grid, mean, true):
                writer.writerow([s.error_law, s.n, s.censoring_rate, name, _fmt(x), _fmt(m), _fmt(t)])
