import json

import pytest

from mata_irl.cli import main
from mata_irl.env import write_log
from mata_irl.expert import expert_episode
from mata_irl.config import RunConfig


def _error(capsys) -> dict:
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({
        "schema_version": 1, "profile": "desk",
        "env": {"max_steps": 12}, "marl": {"episodes": 4, "batch_size": 16},
        "demos": {"path": "demos.jsonl"},
    }))
    return tmp_path


def test_unknown_flag_is_usage_error(workdir, capsys):
    assert main(["train", "--config", str(workdir / "cfg.json"), "--seed", "0", "--out", "x", "--fast"]) == 2
    err = _error(capsys)
    assert err["error"] == "usage" and "--fast" in err["message"]


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 2
    assert _error(capsys)["error"] == "usage"


def test_schema_violation_is_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1, "marl": {"episodes": 3, "learning_rate": 0.1}}')
    assert main(["train", "--config", str(bad), "--seed", "0", "--out", str(tmp_path / "r")]) == 3
    err = _error(capsys)
    assert err["error"] == "config" and "learning_rate" in err["message"]


def test_missing_demos_with_irl_is_config_error(workdir, capsys):
    assert main(["train", "--config", str(workdir / "cfg.json"), "--seed", "0", "--out", str(workdir / "r")]) == 3
    assert "demo file is missing" in _error(capsys)["message"]
    assert not (workdir / "r").exists()


def test_missing_checkpoint(workdir, capsys):
    rc = main(["evaluate", "--checkpoint", str(workdir / "none.bin"), "--config", str(workdir / "cfg.json"),
               "--episodes", "1", "--seed", "0"])
    assert rc == 3 and _error(capsys)["error"] == "missing_file"


def test_disabled_irl_matches_frozen_identity_irl(workdir, capsys):
    cfg = str(workdir / "cfg.json")
    assert main(["gen-demos", "--config", cfg, "--episodes", "3", "--seed", "0",
                 "--out", str(workdir / "demos.jsonl")]) == 0
    assert main(["train", "--config", cfg, "--seed", "1", "--out", str(workdir / "off"), "--no-irl"]) == 0
    assert main(["train", "--config", cfg, "--seed", "1", "--out", str(workdir / "frozen"), "--freeze-irl"]) == 0
    off = (workdir / "off" / "metrics.csv").read_bytes()
    assert off == (workdir / "frozen" / "metrics.csv").read_bytes()
    out = capsys.readouterr().out.strip().splitlines()
    assert json.loads(out[-1])["ablation"] == "full"

    args = ["evaluate", "--checkpoint", str(workdir / "frozen" / "checkpoint.bin"), "--config", cfg,
            "--episodes", "3", "--seed", "5"]
    assert main(args + ["--out", str(workdir / "e1.csv")]) == 0
    assert main(args + ["--out", str(workdir / "e2.csv")]) == 0
    assert (workdir / "e1.csv").read_bytes() == (workdir / "e2.csv").read_bytes()


def test_validate_clean_and_tampered_logs(tmp_path, capsys):
    env = RunConfig.profile_defaults("desk").env
    log = expert_episode(env, 3)
    write_log(log, tmp_path / "ok.jsonl")
    assert main(["validate", "--log", str(tmp_path / "ok.jsonl")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["violations"] == [] and report["objective"] > 0

    events = [(rec.t, k, i) for rec in log.steps for k, i in rec.completions]
    (t1, k1, i1), (t2, k2, _) = events[0], events[-1]
    dup = tmp_path / "dup.jsonl"
    log.steps[t2 - 1].completions.append((k1, i1))
    write_log(log, dup)
    assert main(["validate", "--log", str(dup)]) == 4
    assert "twice" in _error(capsys)["message"]

    log.steps[t2 - 1].completions = [c for c in log.steps[t2 - 1].completions if c[0] not in (k1, k2)]
    log.steps[t1 - 1].completions.append((k2, i1))  # one agent finishing two tasks at once
    write_log(log, tmp_path / "bad.jsonl")
    assert main(["validate", "--log", str(tmp_path / "bad.jsonl")]) == 1
    kinds = {v["kind"] for v in json.loads(capsys.readouterr().out)["violations"]}
    assert "overlap" in kinds


def test_selfcheck_passes(capsys):
    assert main(["selfcheck"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("ok") for line in lines)
