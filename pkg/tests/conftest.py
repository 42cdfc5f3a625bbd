"""Shared fixtures: the desk-scale ablation run set and acceptance reporting."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import pytest

from mata_irl.config import Ablation, RunConfig
from mata_irl.expert import generate_demos
from mata_irl.harness import last_k_mean, run_training

DESK_SEEDS = (0, 1, 2, 3, 4)
VARIANTS = {
    "full": Ablation(),
    "no_irl": Ablation(no_irl=True),
    "no_gat": Ablation(no_gat=True),
    "no_mhsa": Ablation(no_mhsa=True),
}

ACCEPTANCE_LINES: list[tuple[int, str]] = []  # (criterion number, report line)


@dataclass
class DeskRuns:
    config: RunConfig
    last50: dict = field(default_factory=dict)  # variant -> [per-seed mean reward]
    cpu_seconds: float = 0.0


@pytest.fixture(scope="session")
def desk_runs() -> DeskRuns:
    """Every variant of the desk profile trained on each seed (computed once per session)."""
    cfg = RunConfig.profile_defaults("desk")
    started = time.process_time()
    demos = generate_demos(cfg.env, cfg.demos.episodes, cfg.demos.seed)
    runs = DeskRuns(cfg)
    for label, ablation in VARIANTS.items():
        variant = cfg.replace(ablation=ablation)
        runs.last50[label] = [
            last_k_mean(run_training(variant, seed, demos=demos))["cumulative_reward"] for seed in DESK_SEEDS
        ]
    runs.cpu_seconds = time.process_time() - started
    return runs


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
