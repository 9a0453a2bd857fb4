import json
from pathlib import Path

import numpy as np
import pytest

from lmpnn.cli import build_parser, run
from lmpnn.featurize import read_binary
from lmpnn.io import format_trajectory
from lmpnn.synthetic import spring_trajectory

DATA = Path(__file__).parent / "data"
METHANE = (DATA / "dsgdb9nsd_000001.xyz").read_text()
TINY = {"num_radial": 4, "num_angular": 4, "hidden": 8, "angle_width": 4, "num_single_blocks": 1,
        "num_output_blocks": 2, "num_interaction_blocks": 1}


@pytest.fixture
def toy_dir(tmp_path):
    d = tmp_path / "qm9"
    d.mkdir()
    (d / "dsgdb9nsd_000001.xyz").write_text(METHANE)
    # a stretched copy so the pair distances differ
    lines = METHANE.splitlines()
    out = lines[:2]
    for line in lines[2:7]:
        parts = line.split()
        out.append("\t".join([parts[0]] + [str(2.2 * float(v)) for v in parts[1:4]] + parts[4:]))
    out[1] = out[1].replace("gdb 1\t", "gdb 2\t")
    (d / "dsgdb9nsd_000002.xyz").write_text("\n".join(out + lines[7:]) + "\n")
    return d


def write_config(path, train=None):
    path.write_text(json.dumps({"model": TINY, "train": train or {}}))
    return path


def test_every_subcommand_has_help(capsys):
    parser = build_parser()
    commands = parser._subparsers._group_actions[0].choices
    assert set(commands) == {"stats", "featurize", "train", "eval", "gamma-report", "gradcheck", "describe"}
    for name in commands:
        assert run([name, "--help"]) == 0
        assert "--seed" in capsys.readouterr().out


def test_stats_on_toy_dir(toy_dir, capsys):
    assert run(["stats", str(toy_dir), "--cutoffs", "4.0,5.0,10.0"]) == 0
    out = json.loads(capsys.readouterr().out)
    fr = [out["fraction_within"][k] for k in ("4.0", "5.0", "10.0")]
    assert fr == sorted(fr)
    assert out["pair_count"] == 20


def test_data_dir_from_environment(toy_dir, monkeypatch, capsys):
    monkeypatch.setenv("LMPNN_DATA_DIR", str(toy_dir))
    assert run(["stats"]) == 0
    monkeypatch.delenv("LMPNN_DATA_DIR")
    assert run(["stats"]) == 1


def test_usage_and_data_errors(tmp_path, toy_dir, capsys):
    assert run([]) == 1
    assert run(["nonsense"]) == 1
    assert run(["train", str(toy_dir), "--config", str(tmp_path / "missing.json")]) == 1
    assert "missing.json" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"width": 3}}))
    assert run(["train", str(toy_dir), "--config", str(bad)]) == 1
    assert run(["stats", str(tmp_path / "nowhere")]) == 2
    broken = tmp_path / "broken"
    broken.mkdir()
    (broken / "dsgdb9nsd_000001.xyz").write_text("3\nx\nH 0 0 0\n")
    assert run(["stats", str(broken)]) == 2


def test_gradcheck_seed_one(capsys):
    assert run(["gradcheck", "--seed", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["max_rel_error"] < 1e-4 and rep["passed"]


def test_featurize_binary_and_json(toy_dir, tmp_path, capsys):
    out = tmp_path / "feat.bin"
    assert run(["featurize", str(toy_dir), "--format", "binary", "--out", str(out)]) == 0
    records = read_binary(out)
    assert [r[0] for r in records] == ["dsgdb9nsd_000001", "dsgdb9nsd_000002"]
    arrays = records[0][1]
    assert arrays["radial"].shape == (20, 12)
    assert arrays["angular"].shape == (len(arrays["angle_cos"]), 12)
    js = tmp_path / "feat.json"
    assert run(["featurize", str(toy_dir), "--format", "json", "--out", str(js), "--cutoff", "5.0"]) == 0
    doc = json.loads(js.read_text())
    assert [r["id"] for r in doc] == ["dsgdb9nsd_000001", "dsgdb9nsd_000002"]
    assert doc[0]["targets"]["u0"] == pytest.approx(-40.47893)
    assert max(doc[1]["edge_dist"]) < 5.0
    assert run(["featurize", str(toy_dir)]) == 1


def test_train_eval_and_gamma_report(toy_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"max_epochs": 31, "batch_size": 2, "split": [0.5, 0.5, 0.0]})
    run_dir = tmp_path / "run"
    assert run(["train", str(toy_dir), "--config", str(cfg), "--out", str(run_dir), "--single-threaded"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["epochs"] == 31
    assert [g["epoch"] for g in summary["gamma_ratio"]] == [30]
    for name in ("log.jsonl", "summary.json", "best.ckpt", "last.ckpt", "split.json"):
        assert (run_dir / name).exists()

    assert run(["eval", str(toy_dir), "--checkpoint", str(run_dir / "best.ckpt")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["unit"] == "Ha" and rep["n"] == 2
    assert run(["eval", str(toy_dir), "--checkpoint", str(tmp_path / "none.ckpt")]) == 2

    assert run(["gamma-report", str(run_dir)]) == 0
    text = capsys.readouterr().out
    assert "30" in text
    assert (run_dir / "gamma_ratio.svg").read_text().lstrip().startswith("<?xml")

    assert run(["describe", "--checkpoint", str(run_dir / "last.ckpt")]) == 0
    desc = json.loads(capsys.readouterr().out)
    assert desc["config"]["hidden"] == 8


def test_train_is_reproducible(toy_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"max_epochs": 3, "batch_size": 1, "split": [0.5, 0.5, 0.0]})
    maes = []
    for name in ("a", "b"):
        assert run(["train", str(toy_dir), "--config", str(cfg), "--out", str(tmp_path / name),
                    "--single-threaded"]) == 0
        maes.append(json.loads((tmp_path / name / "summary.json").read_text())["log"]["records"])
    assert maes[0][-1]["train_mae"] == maes[1][-1]["train_mae"]


def test_md_trajectory_train_and_eval(tmp_path, capsys):
    traj = tmp_path / "spring.xyz"
    traj.write_text(format_trajectory(spring_trajectory(20, seed=0)))
    cfg = write_config(tmp_path / "c.json", {"max_epochs": 2, "md_train": 12, "md_test": 8, "md_valid": 2})
    assert run(["train", "--trajectory", str(traj), "--config", str(cfg), "--out", str(tmp_path / "md")]) == 0
    capsys.readouterr()
    assert run(["eval", "--trajectory", str(traj), "--checkpoint", str(tmp_path / "md" / "best.ckpt")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["energy_unit"] == "kcal_per_mol" and np.isfinite(rep["force_mae"])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_training_exits_three(toy_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"max_epochs": 2, "lr0": 1e300, "split": [0.5, 0.5, 0.0]})
    assert run(["train", str(toy_dir), "--config", str(cfg), "--out", str(tmp_path / "r")]) == 3


def test_describe_default_model(capsys):
    assert run(["describe"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert len(d["gammas"]["single"]) == 6 and len(d["gammas"]["output"]) == 7
    assert d["total_parameters"] == sum(d["parameters_by_block"].values())
