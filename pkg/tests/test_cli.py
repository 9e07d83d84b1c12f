import json

import pytest

from alen.cli import main
from conftest import tiny_doc


def write_config(tmp_path, **kw):
    doc = tiny_doc(**kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_run_subcommand(tmp_path, capsys):
    cfg = write_config(tmp_path, increments=2, out=str(tmp_path / "ignored"))
    out = tmp_path / "run_out"
    rc = main(["run", "--config", str(cfg), "--output-dir", str(out)])
    captured = capsys.readouterr()
    assert rc == 0
    assert "avg_acc:" in captured.out
    assert "forgetting:" in captured.out
    assert (out / "results.json").exists()
    assert not (tmp_path / "ignored").exists()


def test_seed_env_override(tmp_path, capsys, monkeypatch):
    cfg = write_config(tmp_path, seed=7, increments=2,
                       out=str(tmp_path / "out"))
    monkeypatch.setenv("ALEN_SEED", "3")
    rc = main(["run", "--config", str(cfg)])
    assert rc == 0
    doc = json.loads((tmp_path / "out" / "results.json").read_text())
    assert doc["config"]["seed"] == 3


def test_run_missing_config(tmp_path, capsys):
    rc = main(["run", "--config", str(tmp_path / "nope.json")])
    captured = capsys.readouterr()
    assert rc == 1
    assert captured.err.startswith("error:")


def test_gradcheck_subcommand(capsys):
    rc = main(["gradcheck", "--seeds", "2"])
    captured = capsys.readouterr()
    assert rc == 0
    assert "all passed" in captured.out
    assert "grad_reverse_exact" in captured.out


def test_gen_data_and_eval(tmp_path, capsys, tiny_alen_run):
    cfg = write_config(tmp_path, increments=2)
    data_dir = tmp_path / "stream"
    rc = main(["gen-data", "--config", str(cfg), "--out", str(data_dir)])
    assert rc == 0
    assert (data_dir / "increment_00.csv").exists()
    assert (data_dir / "increment_01.csv").exists()

    prefix = tiny_alen_run.output_dir / "checkpoints" / "base"
    preds = tmp_path / "preds.txt"
    rc = main(["eval", "--checkpoint", str(prefix),
               "--data", str(data_dir / "increment_00.csv"),
               "--predictions-out", str(preds)])
    captured = capsys.readouterr()
    assert rc == 0
    assert "accuracy:" in captured.out
    lines = preds.read_text().splitlines()
    assert len(lines) == 150
    assert all(l.isdigit() for l in lines)


def test_eval_missing_checkpoint(tmp_path, capsys):
    rc = main(["eval", "--checkpoint", str(tmp_path / "ghost"),
               "--data", str(tmp_path / "ghost.csv")])
    captured = capsys.readouterr()
    assert rc == 1
    assert "error:" in captured.err


def test_gen_data_rejects_csv_config(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 0, "csv_paths": ["x.csv"]}))
    rc = main(["gen-data", "--config", str(path), "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert rc == 1
    assert "scenario" in captured.err or "scenario" in captured.out


def test_report_subcommand(tmp_path, capsys, tiny_ft_run):
    out = tmp_path / "rep"
    rc = main(["report", "--result", str(tiny_ft_run.output_dir),
               "--out", str(out)])
    captured = capsys.readouterr()
    assert rc == 0
    assert (out / "accuracy_curves.csv").exists()
    assert (out / "accuracy_curves.png").exists()
    assert "avg_acc" in captured.out


def test_report_missing_dir(tmp_path, capsys):
    rc = main(["report", "--result", str(tmp_path)])
    captured = capsys.readouterr()
    assert rc == 1
    assert "error:" in captured.err
