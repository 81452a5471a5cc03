import json
from pathlib import Path

import pandas as pd
import pytest

import cabinpds
from cabinpds.cli import main

LAYOUTS = Path(cabinpds.__file__).parent / "data" / "layouts"
DATA = Path(__file__).parent / "data"
SMALL = "dgp:\n  n: 2500\n  n_routes: 60\n  n_airports: 20\n  n_dates: 30\nsimulate:\n  reps: 2\n  spec: 5\n"


@pytest.fixture()
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def test_parse_map_reports_counts(tmp_path, capsys):
    rc = main(["parse-map", str(LAYOUTS / "gol_737-800_177.map"), "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "capacity 177, comfort seats 42, middle seats 59" in out
    seats = pd.read_csv(tmp_path / "gol_737-800_177_seats.csv")
    assert len(seats) == 177 and seats["comfort"].sum() == 42
    assert (tmp_path / "manifest.json").exists()


def test_indices_bundled_layouts(tmp_path):
    assert main(["indices", "--out", str(tmp_path)]) == 0
    df = pd.read_csv(tmp_path / "indices.csv")
    assert len(df) == 8 and (df.filter(like="index").le(100).all().all())


def test_tabulate_counts_table(tmp_path):
    assert main(["tabulate", "--data", str(DATA / "occupancy_counts.csv"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "occupancy.csv").exists() and (tmp_path / "occupancy.txt").exists()
    df = pd.read_csv(tmp_path / "occupancy.csv", dtype={"row": str})
    counts = df[df.panel == "counts"]
    f_total = counts[(counts.letter == "F") & (counts.row != "Total")].value.sum()
    assert f_total == 9872


@pytest.mark.parametrize("argv", [["estimate", "--spec", "9", "--data", "x.csv"],
                                  ["estimate", "--spec", "0", "--data", "x.csv"],
                                  ["simulate", "--preset", "nope"],
                                  ["frobnicate"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_missing_data_exits_1(tmp_path):
    assert main(["estimate", "--spec", "1", "--data", str(tmp_path / "missing.csv")]) == 1


def test_bad_config_exits_2(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("dgp:\n  bogus: 1\n")
    assert main(["simulate", "--config", str(p), "--reps", "0"]) == 2


def _run_pipeline(cfg, out):
    assert main(["-q", "simulate", "--config", str(cfg), "--seed", "5", "--out", str(out / "sim")]) == 0
    assert main(["-q", "estimate", "--spec", "1", "5", "8", "--data", str(out / "sim" / "dataset.csv"),
                 "--dump-selection", "--out", str(out / "est")]) == 0


def test_simulate_then_estimate(small_cfg, tmp_path):
    _run_pipeline(small_cfg, tmp_path)
    sim, est = tmp_path / "sim", tmp_path / "est"
    assert {p.name for p in sim.iterdir()} == {"dataset.csv", "truth.csv", "coverage.csv", "coverage.txt",
                                              "manifest.json"}
    assert len(pd.read_csv(sim / "dataset.csv")) == 2500  # file value, not the default
    manifest = json.loads((sim / "manifest.json").read_text())
    assert manifest["config"]["dgp"]["seed"] == 5
    res = pd.read_csv(est / "results.csv")
    assert set(res["spec"].astype(str)) == {"1", "5", "8"}
    assert (est / "selected_controls.csv").exists() and (est / "results.txt").read_text()


def test_pipeline_is_byte_identical(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run_pipeline(small_cfg, a)
    _run_pipeline(small_cfg, b)
    for rel in ("sim/dataset.csv", "sim/truth.csv", "sim/coverage.csv", "est/results.csv",
                "est/selected_controls.csv", "sim/manifest.json"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_flags_override_config_file(small_cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["-q", "simulate", "--config", str(small_cfg), "--reps", "0", "--n", "2600",
                 "--seed", "3", "--out", str(out)]) == 0
    assert len(pd.read_csv(out / "dataset.csv")) == 2600
    assert not (out / "coverage.csv").exists()
    dgp = json.loads((out / "manifest.json").read_text())["config"]["dgp"]
    assert dgp["n_routes"] == 60 and dgp["seed"] == 3
