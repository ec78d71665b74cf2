import csv
import json
import math
import subprocess
import sys

import pytest

from coordlab import cli
from coordlab import coordination_code as cc
from coordlab import prob_core as pc


def base_spec(**over):
    doc = {
        "schema_version": 1,
        "network": "two_node",
        "alphabets": {"x": 2, "y": 2},
        "source": [0.5, 0.5],
        "target": [[1.0, 0.0], [0.0, 1.0]],
        "delta_grid": [0.0, 0.1, 0.5],
        "n_grid": [1, 2],
        "rates": {"R1_grid": [0.0, 1.0]},
        "monte_carlo": {"samples": 400, "seed": 9},
        "oracle": {"budget": 100000},
    }
    doc.update(over)
    return doc


def write_spec(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class TestSpecParsing:
    def test_valid_round_trip(self):
        spec = cli.parse_problem_spec(base_spec())
        assert spec.network == "two_node"
        assert spec.delta_grid == (0.0, 0.1, 0.5)
        assert spec.mc_samples == 400

    def test_messages_name_fields(self):
        doc = base_spec(
            source=[0.6, 0.6],
            network="ring",
            schema_version=7,
            bogus=1,
        )
        with pytest.raises(cli.SpecError) as exc:
            cli.parse_problem_spec(doc)
        text = "\n".join(exc.value.messages)
        assert "source:" in text
        assert "network:" in text
        assert "schema_version:" in text
        assert "bogus: unknown field" in text

    def test_both_rate_forms_rejected(self):
        doc = base_spec(rates={"R1": 0.5, "R1_grid": [0.5]})
        with pytest.raises(cli.SpecError, match="R1"):
            cli.parse_problem_spec(doc)

    def test_r2_needs_cascade(self):
        doc = base_spec(rates={"R1": 0.5, "R2": 0.5})
        with pytest.raises(cli.SpecError, match="cascade"):
            cli.parse_problem_spec(doc)

    def test_malformed_json_names_position(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"schema_version": 1,\n  "network": }')
        rc = cli.main(["region", "--spec", str(path), "--out", str(tmp_path)])
        assert rc == cli.EXIT_SCHEMA
        err = capsys.readouterr().err
        assert "spec error" in err and "line 2" in err


class TestRegionCommand:
    def test_identity_frontier(self, tmp_path):
        spec = write_spec(tmp_path, base_spec())
        rc = cli.main(["region", "--spec", spec, "--out", str(tmp_path)])
        assert rc == 0
        raw = (tmp_path / "frontier.csv").read_text()
        assert raw.splitlines()[0].startswith("# columns:")
        rows = read_rows(tmp_path / "frontier.csv")
        assert [r["delta"] for r in rows] == ["0.0", "0.1", "0.5"]
        assert float(rows[0]["R1"]) == pytest.approx(1.0, abs=1e-9)
        assert float(rows[2]["R1"]) == pytest.approx(0.0, abs=1e-9)
        doc = json.loads((tmp_path / "frontier.json").read_text())
        assert doc["schema_version"] == 1
        assert len(doc["points"][0]["argmin_conditional"]) == 2

    def test_single_delta_matches_mutual_information(self, tmp_path):
        doc = base_spec(
            source=[0.3, 0.7],
            target=[[0.9, 0.1], [0.2, 0.8]],
            delta_grid=[0.0],
        )
        spec = write_spec(tmp_path, doc)
        assert cli.main(["region", "--spec", spec, "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "frontier.csv")
        joint = pc.compose(pc.Pmf([0.3, 0.7]), pc.CondPmf([[0.9, 0.1], [0.2, 0.8]]))
        assert len(rows) == 1
        assert float(rows[0]["R1"]) == pytest.approx(
            pc.mutual_information(joint), abs=1e-7
        )

    def test_cascade_free_radius(self, tmp_path):
        doc = base_spec(
            network="cascade",
            alphabets={"x": 2, "y": 2, "z": 2},
            target=[
                [[0.5, 0.0], [0.0, 0.5]],
                [[0.5, 0.0], [0.0, 0.5]],
            ],
            delta_grid=[1.0],
            rates={"R1_grid": [1.0], "R2": 1.0},
        )
        spec = write_spec(tmp_path, doc)
        assert cli.main(["region", "--spec", spec, "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "frontier.csv")
        for row in rows:
            assert float(row["R1"]) <= 1e-9
            assert float(row["R2"]) <= 1e-9

    def test_tight_tolerance_reports_gap(self, tmp_path, capsys):
        # ill-conditioned instance whose certificate plateaus around 1e-7,
        # far above the requested tolerance
        doc = base_spec(
            source=[0.83442136, 0.04017557, 0.12540307],
            alphabets={"x": 3, "y": 3},
            target=[
                [0.01194867, 0.95582632, 0.03222501],
                [0.69300864, 0.08348252, 0.22350884],
                [0.01653146, 0.19299694, 0.7904716],
            ],
            delta_grid=[0.0654],
            solver={"duality_gap_tol": 1e-9, "max_iterations": 64},
        )
        spec = write_spec(tmp_path, doc)
        rc = cli.main(["region", "--spec", spec, "--out", str(tmp_path)])
        assert rc == cli.EXIT_GAP
        assert "exceeds tolerance" in capsys.readouterr().err
        # outputs are still written so the run can be inspected
        assert (tmp_path / "frontier.json").exists()


class TestSimulateCommand:
    def test_runs_are_byte_identical(self, tmp_path):
        spec = write_spec(tmp_path, base_spec())
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["simulate", "--spec", spec, "--out", str(a)]) == 0
        assert cli.main(["simulate", "--spec", spec, "--out", str(b)]) == 0
        for name in ("simulation.csv", "simulation.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_jobs_do_not_change_bytes(self, tmp_path):
        spec = write_spec(tmp_path, base_spec())
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["simulate", "--spec", spec, "--out", str(a), "--jobs", "1"])
        cli.main(["simulate", "--spec", spec, "--out", str(b), "--jobs", "3"])
        assert (a / "simulation.csv").read_bytes() == (b / "simulation.csv").read_bytes()

    def test_seed_flag_overrides_spec(self, tmp_path):
        spec = write_spec(tmp_path, base_spec())
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["simulate", "--spec", spec, "--out", str(a)])
        cli.main(["simulate", "--spec", spec, "--out", str(b), "--seed", "10"])
        assert (a / "simulation.csv").read_bytes() != (b / "simulation.csv").read_bytes()

    def test_cells_rebuild_from_recorded_seeds(self, tmp_path):
        doc = base_spec(
            n_grid=[2],
            rates={"R1_grid": [0.0]},
            monte_carlo={"samples": 4000, "seed": 21},
        )
        spec = write_spec(tmp_path, doc)
        assert cli.main(["simulate", "--spec", spec, "--out", str(tmp_path)]) == 0
        cell = json.loads((tmp_path / "simulation.json").read_text())["cells"][0]
        p0 = pc.Pmf([0.5, 0.5])
        target = pc.CondPmf([[1.0, 0.0], [0.0, 1.0]])
        code = cc.build_codebook_code(
            p0, target, 2, rate1=0.0, seed=cell["build_seed"]
        )
        exact = cc.expected_tv_exact(code, p0, pc.compose(p0, target))
        report = cell["report"]
        band = 4 * report["standard_error"] + 1e-12
        assert abs(report["mean_tv"] - exact) <= band

    def test_env_jobs_invalid(self, tmp_path, monkeypatch, capsys):
        spec = write_spec(tmp_path, base_spec())
        monkeypatch.setenv("COORDLAB_JOBS", "many")
        rc = cli.main(["simulate", "--spec", spec, "--out", str(tmp_path)])
        assert rc == cli.EXIT_SCHEMA
        assert "COORDLAB_JOBS" in capsys.readouterr().err


class TestOracleCommand:
    def test_scan_identity(self, tmp_path):
        spec = write_spec(tmp_path, base_spec(delta_grid=[0.25, 0.5], n_grid=[1, 2]))
        rc = cli.main(["oracle", "--spec", spec, "--out", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "scan.json").read_text())
        assert doc["flag_count"] == 0
        rows = read_rows(tmp_path / "scan.csv")
        assert len(rows) == 4
        assert all(row["flagged"] == "0" for row in rows)

    def test_zero_budget_partial(self, tmp_path, capsys):
        spec = write_spec(tmp_path, base_spec(oracle={"budget": 0}))
        rc = cli.main(["oracle", "--spec", spec, "--out", str(tmp_path)])
        assert rc == cli.EXIT_PARTIAL
        assert "budget" in capsys.readouterr().err

    def test_cascade_not_supported(self, tmp_path, capsys):
        doc = base_spec(
            network="cascade",
            alphabets={"x": 2, "y": 2, "z": 2},
            target=[
                [[0.5, 0.0], [0.0, 0.5]],
                [[0.5, 0.0], [0.0, 0.5]],
            ],
            rates={"R1_grid": [1.0], "R2": 1.0},
        )
        spec = write_spec(tmp_path, doc)
        rc = cli.main(["oracle", "--spec", spec, "--out", str(tmp_path)])
        assert rc == cli.EXIT_SCHEMA
        assert "network" in capsys.readouterr().err


class TestCheckCommand:
    def test_battery_passes(self, capsys):
        assert cli.main(["check"]) == 0
        out = capsys.readouterr().out
        assert "ok" in out and "FAIL" not in out


class TestModuleEntry:
    def test_python_dash_m(self, tmp_path):
        spec = write_spec(tmp_path, base_spec(delta_grid=[0.5]))
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "coordlab",
                "region",
                "--spec",
                spec,
                "--out",
                str(tmp_path),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "frontier.csv").exists()
