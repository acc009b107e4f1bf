import json
import subprocess
import sys
from pathlib import Path

import pytest

from dynsample.cli import main

CONFIGS = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.ini"))

SMALL = """\
[experiment]
seed = 3
total_iterations = 8

[sampler]
strategy = ws

[learner]
kind = softmax
n_examples = 120
n_holdout = 30
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_run_twice_is_identical(small_config, tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", str(small_config), "--out", str(tmp_path / name), "-q"]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_bad_override_names_field(small_config, tmp_path, capsys):
    code = main(["run", "--config", str(small_config), "--set", "sampler.selection_ratio=1.5", "--out", str(tmp_path)])
    assert code == 2
    assert "sampler.selection_ratio" in capsys.readouterr().err


def test_unknown_key_rejected(small_config, capsys):
    assert main(["validate-config", str(small_config), "--set", "sampler.ratio=0.5"]) == 2
    assert "sampler.ratio" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "nope.ini" in capsys.readouterr().err


def test_stop_and_resume_matches_straight_run(small_config, tmp_path):
    straight, split = tmp_path / "straight", tmp_path / "split"
    assert main(["run", "--config", str(small_config), "--out", str(straight), "-q"]) == 0
    assert main(["run", "--config", str(small_config), "--out", str(split), "--stop-after", "5", "-q"]) == 0
    assert len((split / "metrics.csv").read_text().splitlines()) == 1 + 5
    assert main(["resume", "--checkpoint", str(split / "checkpoint.json"), "-q"]) == 0
    assert (split / "metrics.csv").read_bytes() == (straight / "metrics.csv").read_bytes()
    assert (split / "plan.log").read_bytes() == (straight / "plan.log").read_bytes()


def test_corrupt_checkpoint(tmp_path, capsys):
    bad = tmp_path / "checkpoint.json"
    bad.write_text('{"format_version": "1.0", "records": [')
    assert main(["resume", "--checkpoint", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("path", CONFIGS, ids=[p.name for p in CONFIGS])
def test_shipped_configs_validate(path):
    assert main(["validate-config", str(path)]) == 0


def test_dump_dataset(small_config, tmp_path):
    target = tmp_path / "data.txt"
    assert main(["dump-dataset", "--config", str(small_config), "--set", "experiment.noise_fraction=0.25",
                 "--output", str(target)]) == 0
    lines = target.read_text().splitlines()
    assert len(lines) == 120
    flags = [line.split("\t")[1] for line in lines]
    assert flags.count("1") == 30
    tokens = lines[0].split("\t")[0].split()
    assert all(t.isdigit() for t in tokens) and len(tokens) >= 2


def test_compare_writes_report(tmp_path):
    cfg = tmp_path / "cmp.ini"
    cfg.write_text("[experiment]\nseed = 1\n[learner]\nkind = decay\nn_examples = 200\n")
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg), "--strategies", "ws,rm", "--out", str(out)]) == 0
    report = json.loads((out / "comparison.json").read_text())
    assert [r["strategy"] for r in report["runs"]] == ["ws", "rm"]
    assert report["seed"] == 1


def test_compare_unknown_strategy(small_config, tmp_path):
    assert main(["compare", "--config", str(small_config), "--strategies", "ws,fancy", "--out", str(tmp_path)]) == 2


def test_output_root_from_environment(small_config, tmp_path, monkeypatch):
    monkeypatch.setenv("DYNSAMPLE_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["run", "--config", str(small_config), "--seed", "4", "-q"]) == 0
    assert (tmp_path / "root" / "small" / "metrics.csv").exists()
    assert "seed = 4" in (tmp_path / "root" / "small" / "config.ini").read_text()


def test_console_script_entry_point(small_config, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dynsample.cli", "validate-config", str(small_config)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("ok:")


def test_subcommand_required(capsys):
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
