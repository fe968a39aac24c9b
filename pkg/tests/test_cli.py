"""End-to-end command-line tests."""

import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from faft.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    main,
)
from faft.ingestion import load_model
from faft.simgen import ScenarioConfig, generate_dataset


def _write_config(path, text):
    path.write_text(text)
    return str(path)


class TestSimulate:
    CONFIG = """
[scenario]
n = 40
seed = 77
censoring_rate = 0.25

[simulate]
grid_points = 11
"""

    def test_outputs_and_determinism(self, tmp_path):
        cfg = _write_config(tmp_path / "sim.ini", self.CONFIG)
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert main(["simulate", "--config", cfg, "--out", str(out1)]) == EXIT_OK
        assert main(["simulate", "--config", cfg, "--out", str(out2)]) == EXIT_OK
        assert (out1 / "dataset.csv").read_bytes() == (out2 / "dataset.csv").read_bytes()
        assert (out1 / "truth.json").read_bytes() == (out2 / "truth.json").read_bytes()
        assert (out1 / "resolved_config.ini").exists()

        with open(out1 / "dataset.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["id", "x1", "x2"]
        assert rows[0][-2:] == ["event", "status"]
        assert len(rows) == 41
        assert len(rows[0]) == 3 + 11 + 2

        sidecar = json.loads((out1 / "truth.json").read_text())
        assert sidecar["alpha0"] == [1.0, 1.0]
        assert sidecar["seed"] == 77
        assert sidecar["n"] == 40
        assert sidecar["tau"] > 0
        assert 0.0 <= sidecar["achieved_censoring"] <= 1.0

    def test_seed_override(self, tmp_path):
        cfg = _write_config(tmp_path / "sim.ini", self.CONFIG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", cfg, "--out", str(out1), "--seed", "5"])
        main(["simulate", "--config", cfg, "--out", str(out2), "--seed", "6"])
        assert (out1 / "dataset.csv").read_bytes() != (out2 / "dataset.csv").read_bytes()


@pytest.fixture(scope="module")
def application_table(tmp_path_factory):
    """Application-style table: day counts on a log scale, 21-point trajectories."""
    root = tmp_path_factory.mktemp("apptable")
    data, truth = generate_dataset(ScenarioConfig(n=250, seed=2024))
    grid = np.linspace(0.0, 1.0, 21)
    cols = [f"s_{j:02d}" for j in range(21)]
    path = root / "subjects.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pid", "x1", "x2"] + cols + ["day", "dead"])
        for i in range(data.n):
            day = float(np.exp(data.y[i])) + 5.0
            writer.writerow(
                [f"p{i:04d}", repr(float(data.x[i, 0])), repr(float(data.x[i, 1]))]
                + [repr(float(v)) for v in data.covariates[i].value(grid)]
                + [repr(day), int(data.delta[i])]
            )
    return path, truth


class TestFit:
    def _config(self, tmp_path, dataset, extra=""):
        return _write_config(tmp_path / "fit.ini", f"""
[fit]
dataset = {dataset}

[schema]
id = pid
scalars = x1, x2
trajectory = prefix:s_
event = day
status = dead
transform = log
origin = 5
{extra}
""")

    def test_fit_recovers_alpha(self, tmp_path, application_table):
        dataset, truth = application_table
        cfg = self._config(tmp_path, dataset)
        out = tmp_path / "fitout"
        assert main(["fit", "--config", cfg, "--out", str(out)]) == EXIT_OK

        fit = load_model(out / "model.json")
        assert fit.trace.termination == "gradient"
        assert np.all(np.abs(fit.params.alpha - truth.alpha) < 3.5 * fit.alpha_se)

        with open(out / "alpha_summary.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["coefficient", "estimate", "se", "z", "p"]
        assert [r[0] for r in rows[1:]] == ["x1", "x2"]
        assert_allclose(float(rows[1][1]), fit.params.alpha[0])
        for r in rows[1:]:
            assert 0.0 <= float(r[4]) <= 1.0  # p-value

        with open(out / "beta_band.csv", newline="") as fh:
            band = list(csv.reader(fh))
        assert band[0] == ["grid", "estimate", "lower", "upper"]
        assert len(band) == 202
        for r in band[1:]:
            assert float(r[2]) <= float(r[1]) <= float(r[3])
        assert (out / "g_curve.csv").exists()
        assert (out / "resolved_config.ini").exists()

    def test_missing_dataset_key_is_config_error(self, tmp_path):
        cfg = _write_config(tmp_path / "bad.ini", "[fit]\n")
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_missing_config_file_is_config_error(self, tmp_path):
        code = main(["fit", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG

    def test_missing_column_is_data_error(self, tmp_path, application_table):
        dataset, _ = application_table
        cfg = _write_config(tmp_path / "fit.ini", f"""
[fit]
dataset = {dataset}

[schema]
id = pid
scalars = x1, x9
trajectory = prefix:s_
event = day
status = dead
""")
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DATA

    def test_missing_dataset_file_is_data_error(self, tmp_path):
        cfg = _write_config(tmp_path / "fit.ini", f"""
[fit]
dataset = {tmp_path / 'ghost.csv'}

[schema]
id = pid
scalars = x1
trajectory = a, b
event = day
status = dead
""")
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DATA

    def test_bad_preset_is_config_error(self, tmp_path, application_table):
        dataset, _ = application_table
        cfg = self._config(tmp_path, dataset, extra="\n[sieve]\npreset = quartic\n")
        assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestReplicateAndReport:
    CONFIG = """
[scenario]
seed = 1000

[replicate]
laws = exponential-log
ns = 400
rates = 0.25
replicates = 2
"""

    def test_replicate_deterministic_and_report(self, tmp_path):
        cfg = _write_config(tmp_path / "rep.ini", self.CONFIG)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["replicate", "--config", cfg, "--out", str(out1)]) == EXIT_OK
        assert main(["replicate", "--config", cfg, "--out", str(out2)]) == EXIT_OK
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()
        assert (out1 / "curves_exponential-log_400_0p25.csv").exists()

        rep_out = tmp_path / "report"
        assert main(["report", "--out", str(rep_out), str(out1 / "summary.csv")]) == EXIT_OK
        with open(rep_out / "table1.csv", newline="") as fh:
            t1 = list(csv.reader(fh))
        assert t1[0] == ["law", "n", "censoring_rate", "coordinate", "bias", "sse", "ese", "cp"]
        assert [r[3] for r in t1[1:]] == ["alpha1", "alpha2"]
        with open(rep_out / "table2.csv", newline="") as fh:
            t2 = list(csv.reader(fh))
        assert t2[0] == ["law", "n", "censoring_rate", "mse_beta", "mse_g"]
        assert len(t2) == 2
        assert float(t2[1][3]) > 0

    def test_report_rejects_schema_drift(self, tmp_path):
        bad = tmp_path / "summary.csv"
        bad.write_text("law,n,something_else\nx,1,2\n")
        assert main(["report", "--out", str(tmp_path), str(bad)]) == EXIT_DATA

    def test_report_sorts_cells(self, tmp_path):
        # two single-cell summaries merged out of order come out sorted by n
        cfg1 = _write_config(tmp_path / "a.ini", self.CONFIG.replace("ns = 400", "ns = 600"))
        cfg2 = _write_config(tmp_path / "b.ini", self.CONFIG)
        o1, o2 = tmp_path / "o600", tmp_path / "o400"
        assert main(["replicate", "--config", cfg1, "--out", str(o1)]) == EXIT_OK
        assert main(["replicate", "--config", cfg2, "--out", str(o2)]) == EXIT_OK
        rep = tmp_path / "rep"
        assert main(["report", "--out", str(rep),
                     str(o1 / "summary.csv"), str(o2 / "summary.csv")]) == EXIT_OK
        with open(rep / "table2.csv", newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        assert [int(r[1]) for r in rows] == [400, 600]
