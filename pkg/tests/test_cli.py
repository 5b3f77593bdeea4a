"""End-to-end command-line checks on tiny problems."""

import csv
import json
import subprocess
import sys

import pytest

from sparsebeam import cli, harness, mlp, scene


@pytest.fixture()
def config_path(tmp_path):
    cfg = harness.ExperimentConfig(n_grid=8, n_select=3, look_doas_deg=(60.0,),
                                   n_train_per_look=12, n_test_per_look=8,
                                   seed=5)
    path = tmp_path / "cfg.json"
    harness.save_config(path, cfg)
    return str(path)


@pytest.fixture()
def scenario_path(tmp_path):
    scn = scene.Scenario(desired=scene.SourceSpec(60.0),
                         interferers=(scene.SourceSpec(110.0, 10.0),
                                      scene.SourceSpec(40.0, 3.0)))
    path = tmp_path / "scene.json"
    scene.save_scenario(path, scn)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_gen_data_outputs_and_rerun_identical(config_path, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["gen-data", config_path, "--out-dir", str(out1)]) == 0
    assert cli.main(["gen-data", config_path, "--out-dir", str(out2)]) == 0
    with open(out1 / "gen-data_manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["counts"] == {"train": 12, "test": 8}
    assert manifest["config_sha256"] == harness.config_hash(
        harness.load_config(config_path))
    for name in ("train.csv", "test.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert len(read_csv(out1 / "train.csv")) == 13  # header + rows


def test_train_command_writes_loadable_model(config_path, tmp_path):
    data_dir, out = tmp_path / "data", tmp_path / "fit"
    cli.main(["gen-data", config_path, "--part", "train",
              "--out-dir", str(data_dir)])
    rc = cli.main(["train", str(data_dir / "train.csv"), "--out-dir", str(out),
                   "--model-name", "net.bin", "--hidden", "10", "--epochs", "3",
                   "--batch-size", "4", "--patience", "2", "--seed", "1",
                   "--monitor", "selection", "--split-seed", "0"])
    assert rc == 0
    model = mlp.load_model(out / "net.bin")
    assert model.layer_sizes == [15, 10, 8]
    assert model.normalize_power
    with open(out / "train_manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["train_config"]["monitor"] == "selection"
    assert manifest["train_config"]["split_seed"] == 0
    assert manifest["train_config"]["normalize_power"] is True
    assert manifest["n_examples"] == 12
    assert manifest["ensemble_members"] == 1

    rc = cli.main(["train", str(data_dir / "train.csv"),
                   "--out-dir", str(out), "--model-name", "ens.bin",
                   "--hidden", "6", "--epochs", "2", "--batch-size", "4",
                   "--seed", "1", "--ensemble", "2"])
    assert rc == 0
    ens = mlp.load_model(out / "ens.bin")
    assert isinstance(ens, mlp.EnsembleModel) and ens.n_members == 2


def test_eval_command_scores_model_and_nnc(config_path, tmp_path, capsys):
    data_dir, fit, out = tmp_path / "data", tmp_path / "fit", tmp_path / "eval"
    cli.main(["gen-data", config_path, "--out-dir", str(data_dir)])
    cli.main(["train", str(data_dir / "train.csv"), "--out-dir", str(fit),
              "--hidden", "10", "--epochs", "3", "--batch-size", "4",
              "--seed", "1"])
    rc = cli.main(["eval", config_path,
                   "--model", f"dnn={fit / 'model.bin'}",
                   "--train-dataset", str(data_dir / "train.csv"),
                   "--methods", "sbsa,compact_ula", "--n-random", "5",
                   "--out-dir", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "dnn:" in stdout and "nnc:" in stdout
    rows = read_csv(out / "report.csv")
    assert rows[0][0] == "scenario_id"
    assert len(rows) == 1 + 8  # header + test scenarios
    with open(out / "eval_manifest.json") as fh:
        manifest = json.load(fh)
    assert set(manifest["summaries"]) == {"dnn", "nnc", "sbsa", "compact_ula"}


def test_sbsa_command(scenario_path, tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main(["sbsa", scenario_path, "--n-grid", "8", "--n-select", "3",
                   "--out-dir", str(out)])
    assert rc == 0
    assert "mask=" in capsys.readouterr().out
    assert (out / "sbsa_starts.csv").exists()
    with open(out / "sbsa_manifest.json") as fh:
        manifest = json.load(fh)
    bits = manifest["result_mask_bits"]
    assert len(bits) == 8 and bits.count("1") == 3


def test_enumerate_command_and_budget_exit_code(scenario_path, tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli.main(["enumerate", scenario_path, "--n-grid", "8",
                   "--n-select", "3", "--top", "2", "--out-dir", str(out)])
    assert rc == 0
    assert capsys.readouterr().out.count("rank_id=") == 2
    assert len(read_csv(out / "ranked.csv")) == 1 + 56  # C(8,3) configurations
    rc = cli.main(["enumerate", scenario_path, "--n-grid", "8",
                   "--n-select", "3", "--budget", "5",
                   "--out-dir", str(tmp_path / "b")])
    assert rc == 3


def test_enumerate_objective_ordering(scenario_path, tmp_path):
    out = tmp_path / "out"
    cli.main(["enumerate", scenario_path, "--n-grid", "8", "--n-select", "3",
              "--with-objective", "--out-dir", str(out)])
    rows = read_csv(out / "ranked.csv")[1:]
    omegas = [float(r[3]) for r in rows]
    assert omegas == sorted(omegas)


def test_fig7_command(scenario_path, tmp_path, capsys):
    out = tmp_path / "nested" / "out"  # out-dir is created on demand
    rc = cli.main(["fig7", scenario_path, "--n-grid", "8", "--n-select", "3",
                   "--out-dir", str(out)])
    assert rc == 0
    assert "half mean SINR" in capsys.readouterr().out
    assert len(read_csv(out / "sweep.csv")) == 1 + 56
    with open(out / "fig7_manifest.json") as fh:
        manifest = json.load(fh)
    assert {"lower_half_mean_db", "upper_half_mean_db",
            "best_position"} <= set(manifest)


def test_compare_command_gaps_nonnegative(scenario_path, tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["compare", scenario_path, "--n-grid", "8", "--n-select", "3",
                   "--n-random", "10", "--out-dir", str(out)])
    assert rc == 0
    rows = read_csv(out / "compare.csv")
    methods = [r[0] for r in rows[1:]]
    assert methods == ["enumeration", "sbsa", "compact_ula", "sparse_ula",
                       "random", "worst_case"]
    for row in rows[1:]:
        assert float(row[3]) >= -1e-9


def test_bad_inputs_exit_code_two(tmp_path, scenario_path, capsys):
    assert cli.main(["gen-data", str(tmp_path / "missing.json"),
                     "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["enumerate", scenario_path, "--n-grid", "8",
                     "--n-select", "9", "--out-dir", str(tmp_path)]) == 2
    capsys.readouterr()


def test_version_and_module_entry(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "sparsebeam" in capsys.readouterr().out
    proc = subprocess.run([sys.executable, "-m", "sparsebeam", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
