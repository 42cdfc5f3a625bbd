import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mata_irl.config import RunConfig
from mata_irl.core import load_checkpoint
from mata_irl.errors import ConfigError
from mata_irl.expert import generate_demos
from mata_irl.harness import (EVAL_COLUMNS, RUN_FILES, ScalingResult, eval_rows, evaluate, grid, read_csv,
                              run_training, scaling_probe, summarize, write_csv)


def tiny(**over) -> RunConfig:
    cfg = RunConfig.profile_defaults("desk").replace(marl__episodes=3, marl__batch_size=16, demos__episodes=3)
    return cfg.replace(**over) if over else cfg


def test_summary_two_records():
    stats = summarize({"c": [{"r": 10.0}, {"r": 14.0}]})
    row = stats.get("c", "r")
    assert row.mean == 12.0 and row.std == pytest.approx(math.sqrt(8.0), abs=1e-12)
    assert "12.00 ± 2.83" in stats.table()


def test_summary_identical_records_have_zero_spread():
    row = summarize({"c": [{"r": 3.25}] * 4}).get("c", "r")
    assert row.mean == 3.25 and row.std == 0.0


def test_summary_singleton_is_flagged():
    stats = summarize({"c": [{"r": 5.0}]})
    assert stats.get("c", "r").std is None
    assert "single record" in stats.table()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=5))
def test_summary_matches_textbook_formula(values):
    row = summarize({"c": [{"r": v} for v in values]}).get("c", "r")
    mean = sum(values) / 5
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / 4)
    assert abs(row.mean - mean) <= 1e-9 * max(1.0, abs(mean))
    assert abs(row.std - std) <= 1e-9 * max(1.0, std)


def test_run_directory_contents(tmp_path):
    cfg = tiny()
    demos = generate_demos(cfg.env, 3, 0)
    record = run_training(cfg, 0, demos=demos, out_dir=tmp_path / "run")
    assert sorted(p.name for p in (tmp_path / "run").iterdir()) == sorted(RUN_FILES)
    rows = read_csv(tmp_path / "run" / "metrics.csv")
    assert len(rows) == 3 == len(record.episodes)
    params = load_checkpoint(tmp_path / "run" / "checkpoint.bin")
    assert len(params.subset("actor/")) and len(params.subset("head/")) and len(params.subset("disc/"))


def test_missing_demo_file_is_a_config_error(tmp_path):
    cfg = tiny(demos__path=str(tmp_path / "absent.jsonl"))
    with pytest.raises(ConfigError, match="demo file is missing"):
        run_training(cfg, 0)


def test_evaluation_is_repeatable(tmp_path):
    cfg = tiny(ablation__no_irl=True)
    record = run_training(cfg, 0)
    for name in ("a.csv", "b.csv"):
        write_csv(tmp_path / name, EVAL_COLUMNS, eval_rows(evaluate(cfg, record.params, 3, 11)))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_grid_records_and_summary(tmp_path):
    cfg = tiny(env__max_steps=10)
    stats = grid(cfg, [2, 3], [3, 2], [0, 1], tmp_path)
    assert {r.cell for r in stats.rows} == {"N2_M2", "N2_M3", "N3_M3"}
    assert all(r.n == 2 for r in stats.rows)
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "summary.txt").exists()
    assert not (tmp_path / "N3_M2").exists()  # more agents than tasks is skipped
    assert sorted(p.name for p in (tmp_path / "N2_M3").iterdir()) == ["demos.jsonl", "seed_0", "seed_1"]


def test_grid_output_independent_of_order_and_workers(tmp_path):
    cfg = tiny(env__max_steps=10, ablation__no_irl=True)
    a = grid(cfg, [2], [2, 3], [0, 1], tmp_path / "a")
    b = grid(cfg, [2], [3, 2], [1, 0], tmp_path / "b", workers=2)
    key = lambda s: sorted((r.cell, r.metric, r.mean, r.std) for r in s.rows)
    assert key(a) == key(b)


def test_scaling_result_helpers():
    sizes = [100, 200, 400]
    quad = ScalingResult("L", sizes, [3e-6 * s ** 2 for s in sizes])
    assert quad.ratios() == pytest.approx([4.0, 4.0])
    assert quad.exponent() == pytest.approx(2.0)
    lin = ScalingResult("m", sizes, [0.5 * s for s in sizes])
    assert lin.exponent() == pytest.approx(1.0)


def test_scaling_probe_small_sizes_run():
    cfg = RunConfig.profile_defaults("desk")
    res = scaling_probe(cfg, sizes={"L": [8, 16, 32], "m": [8, 16, 32], "n": [8, 16, 32]}, repeats=2)
    assert set(res) == {"L", "m", "n"}
    assert all(s > 0 for r in res.values() for s in r.seconds)
    with pytest.raises(ConfigError):
        scaling_probe(cfg, sizes={"L": [8, 16]})
