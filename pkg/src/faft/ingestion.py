"""Real-data pipeline: longitudinal CSV ingestion with centering and
trajectory interpolation, plus a round-trippable text archive for fits.

The expected table layout is one row per subject with a fixed window of
repeated-measure columns (e.g. daily scores) that is mapped affinely onto
[0, 1], scalar covariate columns, an event/censoring day column and a
status flag.  Event days are transformed onto the model's time scale by the
configured monotone transform (natural log of days since the window end by
default).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from faft.inference import FitResult
from faft.likelihood import CenteringInfo, GridCovariate, SurvivalDataset
from faft.optimizer import IterationRecord, OptimizerTrace
from faft.splinecore import KnotSequence, SplineBasis, SplineFunction

ARCHIVE_FORMAT = "faft-model"
ARCHIVE_VERSION = 1

TRANSFORMS = ("log", "identity")


class SchemaError(ValueError):
    """Schema/column problems in an input table."""


class DataError(ValueError):
    """A specific record or cell could not be ingested."""


class ArchiveError(RuntimeError):
    """Model archive unreadable, corrupt, or version-incompatible."""


@dataclass(frozen=True)
class TableSchema:
    """Column mapping and transform settings for a longitudinal CSV.

    ``binary_columns`` (a subset of ``scalar_columns``) are recoded to
    -1/+1 (smaller raw value maps to -1) and left uncentered; the remaining
    scalar columns and the repeated measures are centered at their sample
    means.  ``origin`` is the day subtracted from the event day before the
    transform; it defaults to the number of trajectory columns (the window
    end, e.g. day 5 for a five-day window).
    """

    id_column: str
    scalar_columns: tuple
    trajectory_columns: tuple
    event_column: str
    status_column: str
    binary_columns: tuple = ()
    transform: str = "log"
    origin: float = None

    def __post_init__(self):
        object.__setattr__(self, "scalar_columns", tuple(self.scalar_columns))
        object.__setattr__(self, "trajectory_columns", tuple(self.trajectory_columns))
        object.__setattr__(self, "binary_columns", tuple(self.binary_columns))
        if len(self.trajectory_columns) < 2:
            raise SchemaError("need at least two trajectory columns")
        unknown = set(self.binary_columns) - set(self.scalar_columns)
        if unknown:
            raise SchemaError(f"binary columns not among scalar columns: {sorted(unknown)}")
        if self.transform not in TRANSFORMS:
            raise SchemaError(f"unknown transform {self.transform!r}; choose from {TRANSFORMS}")
        if self.origin is None:
            object.__setattr__(self, "origin", float(len(self.trajectory_columns)))

    def required_columns(self):
        return ([self.id_column] + list(self.scalar_columns)
                + list(self.trajectory_columns) + [self.event_column, self.status_column])


def _parse_cell(raw, row_number, column):
    text = (raw or "").strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise DataError(f"unparseable value {raw!r} at row {row_number}, column {column!r}") from None


def _fill_trajectory(values, subject_id):
    """Interpolate interior gaps, clamp terminal gaps; returns (values, flagged)."""
    vals = np.array([np.nan if v is None else v for v in values], dtype=float)
    missing = np.isnan(vals)
    if not missing.any():
        return vals, False
    if missing.all():
        raise DataError(f"subject {subject_id}: trajectory entirely missing")
    idx = np.arange(vals.size)
    vals[missing] = np.interp(idx[missing], idx[~missing], vals[~missing])
    return vals, True


def load_long_csv(path, schema: TableSchema) -> SurvivalDataset:
    """Read a longitudinal table into a centered :class:`SurvivalDataset`.

    Subjects with missing trajectory cells are repaired by interpolation and
    reported through a ``RuntimeWarning``; their ids are also attached to the
    returned dataset as ``dataset.flagged_subjects``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file or missing header row")
        missing_cols = [c for c in schema.required_columns() if c not in reader.fieldnames]
        if missing_cols:
            raise SchemaError(f"{path}: missing columns {missing_cols}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")

    ids, xs, trajs, ys, deltas, flagged = [], [], [], [], [], []
    seen = set()
    for i, row in enumerate(rows):
        rownum = i + 2  # header is line 1
        sid = row[schema.id_column].strip()
        if sid in seen:
            raise DataError(f"duplicate subject id {sid!r} at row {rownum}")
        seen.add(sid)

        x_row = []
        for col in schema.scalar_columns:
            v = _parse_cell(row[col], rownum, col)
            if v is None:
                raise DataError(f"subject {sid}: missing scalar covariate {col!r}")
            x_row.append(v)
        traj_raw = [_parse_cell(row[col], rownum, col) for col in schema.trajectory_columns]
        traj, was_flagged = _fill_trajectory(traj_raw, sid)
        if was_flagged:
            flagged.append(sid)

        event_day = _parse_cell(row[schema.event_column], rownum, schema.event_column)
        status = _parse_cell(row[schema.status_column], rownum, schema.status_column)
        if event_day is None or status is None:
            raise DataError(f"subject {sid}: missing event day or status")
        if status not in (0.0, 1.0):
            raise DataError(f"subject {sid}: status must be 0 or 1, got {status}")
        t = event_day - schema.origin
        if schema.transform == "log":
            if t <= 0:
                raise DataError(
                    f"subject {sid}: time-to-event {t:g} (event day {event_day:g} minus "
                    f"origin {schema.origin:g}) is not positive under the log transform"
                )
            y = float(np.log(t))
        else:
            y = float(t)

        ids.append(sid)
        xs.append(x_row)
        trajs.append(traj)
        ys.append(y)
        deltas.append(status)

    x = np.asarray(xs, dtype=float)
    traj = np.vstack(trajs)

    # -1/+1 coding for declared binary columns, applied before centering
    col_index = {c: j for j, c in enumerate(schema.scalar_columns)}
    binary = np.zeros(x.shape[1], dtype=bool)
    for col in schema.binary_columns:
        j = col_index[col]
        levels = np.unique(x[:, j])
        if levels.size > 2:
            raise DataError(f"binary column {col!r} has {levels.size} distinct values: {levels}")
        if not (levels.size <= 2 and set(levels) <= {-1.0, 1.0}):
            coded = np.where(x[:, j] == levels[0], -1.0, 1.0)
            x[:, j] = coded if levels.size == 2 else 1.0
        binary[j] = True

    x_means = np.where(binary, 0.0, x.mean(axis=0))
    x = x - x_means
    traj_means = traj.mean(axis=0)
    traj = traj - traj_means

    points = np.linspace(0.0, 1.0, len(schema.trajectory_columns))
    covariates = [GridCovariate(points, traj[i]) for i in range(traj.shape[0])]
    mean_curve = GridCovariate(points, traj_means)
    if flagged:
        warnings.warn(
            f"interpolated missing trajectory cells for {len(flagged)} subject(s): "
            + ", ".join(flagged[:10]),
            RuntimeWarning,
            stacklevel=2,
        )
    data = SurvivalDataset(
        np.asarray(ys), np.asarray(deltas), x, covariates,
        centering=CenteringInfo(x_means, mean_curve),
    )
    data.subject_ids = ids
    data.flagged_subjects = flagged
    return data


def _spline_payload(fn: SplineFunction) -> dict:
    basis = fn.basis
    return {
        "lower": basis.lower,
        "upper": basis.upper,
        "interior": list(basis.knots.interior),
        "order": basis.order,
        "coefficients": [float(c) for c in fn.coefficients],
    }


def _spline_from_payload(payload) -> SplineFunction:
    knots = KnotSequence(
        payload["lower"], payload["upper"], tuple(payload["interior"]), payload["order"]
    )
    return SplineFunction(SplineBasis(knots), np.asarray(payload["coefficients"], dtype=float))


def save_model(fit: FitResult, path) -> None:
    """Serialize a fit to a versioned, self-describing JSON text archive.

    Floats are written with ``repr`` (17 significant digits), which
    round-trips IEEE-754 doubles exactly.
    """
    centering = None
    if fit.centering is not None:
        centering = {"x_means": [float(v) for v in np.asarray(fit.centering.x_means)]}
    payload = {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "alpha": [float(v) for v in fit.params.alpha],
        "beta": _spline_payload(fit.params.beta),
        "loghaz": _spline_payload(fit.params.loghaz),
        "loglik": float(fit.loglik),
        "hessian": [[float(v) for v in row] for row in np.asarray(fit.hessian)],
        "alpha_se": [float(v) for v in fit.alpha_se],
        "support": [float(fit.support[0]), float(fit.support[1])],
        "n_records": int(fit.n_records),
        "support_widenings": int(fit.support_widenings),
        "centering": centering,
        "fingerprint": fit.fingerprint,
        "trace": {
            "termination": fit.trace.termination,
            "support_violations": fit.trace.support_violations,
            "iterations": [
                [rec.iteration, rec.objective, rec.grad_sup_norm, rec.step_length]
                for rec in fit.trace.iterations
            ],
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path) -> FitResult:
    """Load an archive written by :func:`save_model`; fails closed on corruption."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ArchiveError(f"{path}: unreadable model archive ({err})") from err
    if not isinstance(payload, dict) or payload.get("format") != ARCHIVE_FORMAT:
        raise ArchiveError(f"{path}: not a model archive")
    if payload.get("version") != ARCHIVE_VERSION:
        raise ArchiveError(
            f"{path}: archive version {payload.get('version')!r} is incompatible "
            f"with supported version {ARCHIVE_VERSION}"
        )
    try:
        from faft.likelihood import SieveParameters

        params = SieveParameters(
            np.asarray(payload["alpha"], dtype=float),
            _spline_from_payload(payload["beta"]),
            _spline_from_payload(payload["loghaz"]),
        )
        trace = OptimizerTrace(
            iterations=[IterationRecord(int(i), o, g, s) for i, o, g, s in payload["trace"]["iterations"]],
            termination=payload["trace"]["termination"],
            support_violations=int(payload["trace"]["support_violations"]),
        )
        centering = None
        if payload.get("centering") is not None:
            centering = CenteringInfo(np.asarray(payload["centering"]["x_means"], dtype=float))
        return FitResult(
            params=params,
            loglik=float(payload["loglik"]),
            hessian=np.asarray(payload["hessian"], dtype=float),
            alpha_se=np.asarray(payload["alpha_se"], dtype=float),
            trace=trace,
            support=(float(payload["support"][0]), float(payload["support"][1])),
            n_records=int(payload["n_records"]),
            centering=centering,
            fingerprint=payload.get("fingerprint"),
            support_widenings=int(payload.get("support_widenings", 0)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ArchiveError(f"{path}: corrupt model archive ({err})") from err


def check_fingerprint(fit: FitResult, data: SurvivalDataset) -> bool:
    """Warn (and return False) when a dataset does not match a fit's fingerprint."""
    from faft.fitting import dataset_fingerprint

    if fit.fingerprint is None:
        return True
    current = dataset_fingerprint(data)
    if current != fit.fingerprint:
        warnings.warn(
            f"dataset fingerprint {current} does not match the archived fit {fit.fingerprint}",
            RuntimeWarning,
            stacklevel=2,
        )
        return False
    return True
