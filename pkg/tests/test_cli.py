import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from npbandit.cli import main, parse_check
from npbandit.core import ValidationError
from npbandit.environments import Scenario
from npbandit.experiment import ExperimentConfig, build_config, compare, read_config_file, read_manifest
from npbandit.metrics import read_metric_rows


def metrics_of(path):
    return {(r["metric"], r["seed"]): float(r["value"]) for r in read_metric_rows(path / "metrics.csv")}


def test_run_writes_four_files(tmp_path, capsys):
    out = tmp_path / "a"
    argv = ["run", "--scenario", "bullseye", "--method", "knn-ucb", "--T", "50000", "--seed", "7", "--out", str(out)]
    assert main(argv) == 0
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "metrics.csv", "regret_curve.csv", "trace.csv"]
    assert ("regret", "7") in metrics_of(out)
    assert "regret=" in capsys.readouterr().out


def test_rerun_and_replay_are_byte_identical(tmp_path):
    base = ["run", "--scenario", "smiley", "--method", "knn-ucb", "--T", "3000", "--seeds", "1", "2"]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert main(["run", "--manifest", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    assert a == (tmp_path / "c" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "trace_seed2.csv").exists()


def test_manifest_echoes_every_field(tmp_path):
    assert main(["run", "--scenario", "quintic", "--method", "ridge-uniform", "--T", "400", "--out", str(tmp_path)]) == 0
    cfg = read_manifest(tmp_path / "manifest.json")
    assert cfg.method == "ridge-uniform" and cfg.T == 400 and cfg.intrinsic_dim == 2
    assert set(cfg.to_dict()) == set(ExperimentConfig(scenario="quintic").to_dict())


def test_smiley_uniform_k25(tmp_path):
    argv = ["run", "--scenario", "smiley", "--method", "knn-uniform", "--T", "10000", "--k", "25",
            "--out", str(tmp_path), "--check", "top_arm_error<=0.05"]
    assert main(argv) == 0


def test_compare_against_itself(tmp_path):
    a = ExperimentConfig(scenario="bullseye", method="knn-ucb", T=1500, seeds=(0, 1), out_dir=str(tmp_path))
    cmp = compare(a, a)
    for ra, rb in zip(cmp.results_a, cmp.results_b):
        assert ra.metrics == rb.metrics
    assert cmp.tally() == {"win": 0, "loss": 0, "tie": 2}
    assert (tmp_path / "comparison.csv").exists()


def test_linucb_holds_on_linear_rewards(tmp_path, capsys):
    argv = ["compare", "--scenario", "linear", "--methods", "linucb", "knn-ucb", "--T", "5000",
            "--seeds", "0", "1", "2", "--out", str(tmp_path), "--check", "losses==0"]
    assert main(argv) == 0
    assert "0 losses" in capsys.readouterr().out


def test_compare_rejects_mismatched_horizon(tmp_path):
    a = ExperimentConfig(scenario="smiley", T=1000, out_dir=str(tmp_path))
    b = ExperimentConfig(scenario="smiley", T=2000, method="linucb", out_dir=str(tmp_path))
    with pytest.raises(ValidationError):
        compare(a, b)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# quick run\nscenario = quintic\nmethod = knn-ucb\nT = 900\nk = 9\nseeds = 3 4\n")
    values = read_config_file(cfg)
    assert values["T"] == 900 and values["seeds"] == (3, 4)
    c = build_config(values, T=600, method=None)
    assert (c.T, c.k, c.method, c.seeds) == (600, 9, "knn-ucb", (3, 4))


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scenario = quintic\nhorizon = 10\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--method", "knn-ucb", "--T", "100"],  # neither scenario nor dataset
        ["run", "--scenario", "smiley", "--T", "-5"],
        ["run", "--scenario", "spiral"],
        ["run", "--scenario", "smiley", "--check", "regret~3"],
        ["run", "--scenario", "smiley", "--dataset", "x"],
        ["topology", "--scenario", "bullseye", "--T", "200"],  # R missing
    ],
)
def test_config_errors_exit_1(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 1


def test_missing_dataset_exits_2(tmp_path):
    assert main(["run", "--dataset", str(tmp_path / "nowhere"), "--T", "100", "--out", str(tmp_path)]) == 2


def test_corrupt_dataset_exits_2(tmp_path):
    d = tmp_path / "mnist"
    d.mkdir()
    (d / "train-images-idx3-ubyte").write_bytes(b"\x00\x00\x08\x01junk")
    (d / "train-labels-idx1-ubyte").write_bytes(b"\x00\x00\x08\x01\x00\x00\x00\x00")
    assert main(["run", "--dataset", str(d), "--T", "100", "--out", str(tmp_path / "o")]) == 2


@pytest.mark.skipif(os.geteuid() == 0, reason="root can write anywhere")
def test_unwritable_output_exits_2(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    assert main(["run", "--scenario", "smiley", "--T", "100", "--out", str(ro / "x")]) == 2


def test_output_path_is_a_file_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--scenario", "smiley", "--T", "100", "--out", str(blocker / "x")]) == 2


def test_failed_check_exits_3(tmp_path, capsys):
    argv = ["run", "--scenario", "smiley", "--method", "knn-uniform", "--T", "400", "--out", str(tmp_path),
            "--check", "top_arm_error<0"]
    assert main(argv) == 3
    assert "FAIL" in capsys.readouterr().out


def test_parse_check():
    assert parse_check("regret_exponent <= 0.95") == ("regret_exponent", "<=", 0.95)
    with pytest.raises(ValidationError):
        parse_check("regret")


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("NPBANDIT_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", "--scenario", "quintic", "--T", "200", "--method", "knn-uniform"]) == 0
    assert (tmp_path / "env" / "metrics.csv").exists()


def test_topology_subcommand(tmp_path, capsys):
    argv = ["topology", "--scenario", "bullseye", "--T", "4000", "--R", "0.03", "--seeds", "0", "1",
            "--workers", "2", "--out", str(tmp_path), "--check", "seeds==2"]
    assert main(argv) == 0
    text = capsys.readouterr().out
    assert "arm 1:" in text and "arm 2:" in text
    assert (tmp_path / "regions_arm0_seed0.csv").read_text().startswith("component_id,context_0,context_1")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "npbandit", "run", "--scenario", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 1


def test_seeds_give_distinct_first_contexts():
    firsts = [tuple(Scenario("bullseye", rng_seed=s).sample_contexts(1)[0]) for s in range(200)]
    pairs = list(itertools.combinations(firsts, 2))
    assert np.mean([a != b for a, b in pairs]) >= 0.99
