"""Episode logs, inter-task trajectory segments, and their JSON-lines files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import ContractError
from .world import EnvConfig, WorldState, reset, step

LOG_VERSION = 1


@dataclass
class StepRecord:
    t: int
    positions: np.ndarray  # agent positions after the step, (N, 2)
    actions: np.ndarray
    rewards: np.ndarray
    displacements: np.ndarray
    completions: list  # (task, agent)


@dataclass
class EpisodeLog:
    config: EnvConfig
    seed: int
    initial_agents: np.ndarray
    task_pos: np.ndarray
    steps: list = field(default_factory=list)

    def positions_at(self, t: int) -> np.ndarray:
        return self.initial_agents if t == 0 else self.steps[t - 1].positions

    def completion_times(self) -> dict[int, tuple[int, int]]:
        """task -> (agent, completion step rho)."""
        out = {}
        for rec in self.steps:
            for k, i in rec.completions:
                out[k] = (i, rec.t)
        return out


@dataclass
class TrajectorySegment:
    """Path of one agent from its previous completion (or t=0) to completing ``task``.

    ``points[0]`` is the position at ``start_t``; ``points[-1]`` the position at
    ``end_t``, the completion step, so consecutive segments share an endpoint.
    """

    agent: int
    task: int
    points: np.ndarray
    start_t: int
    end_t: int

    @property
    def length(self) -> int:
        return len(self.points)

    def path_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def violations(self, config: EnvConfig, task_pos) -> list[str]:
        bad = []
        if self.length < 1:
            bad.append("empty segment")
            return bad
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if steps.size and steps.max() > config.speed + 1e-9:
            bad.append(f"step of {steps.max():.6g} exceeds speed")
        if np.linalg.norm(self.points[-1] - np.asarray(task_pos)) > config.completion_radius + 1e-9:
            bad.append("endpoint outside completion radius")
        return bad

    def to_dict(self) -> dict:
        return {
            "agent": self.agent, "task": self.task, "points": self.points.tolist(),
            "start_t": self.start_t, "end_t": self.end_t,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectorySegment":
        return cls(int(d["agent"]), int(d["task"]), np.asarray(d["points"], dtype=float),
                   int(d["start_t"]), int(d["end_t"]))


class EpisodeRecorder:
    """Incrementally builds an :class:`EpisodeLog` and per-agent open segments."""

    def __init__(self, config: EnvConfig, seed: int, state: WorldState):
        self.log = EpisodeLog(config, int(seed), state.agent_pos.copy(), state.task_pos.copy())
        self._since = np.zeros(config.n_agents, dtype=np.int64)

    def record(self, t, positions, actions, rewards, events) -> list[TrajectorySegment]:
        """Append a step and return the segments that closed on it."""
        rec = StepRecord(int(t), positions.copy(), np.asarray(actions, dtype=np.int64).copy(),
                         np.asarray(rewards, dtype=float).copy(), events.displacements.copy(),
                         list(events.completions))
        self.log.steps.append(rec)
        closed = []
        for k, i in rec.completions:
            start = int(self._since[i])
            pts = np.array([self.log.positions_at(s)[i] for s in range(start, rec.t + 1)])
            closed.append(TrajectorySegment(i, k, pts, start, rec.t))
            self._since[i] = rec.t
        return closed


def run_episode(config: EnvConfig, seed: int, policy: Callable[[WorldState], np.ndarray]) -> EpisodeLog:
    state = reset(config, seed)
    rec = EpisodeRecorder(config, seed, state)
    while not state.finished(config):
        action = policy(state)
        state, rewards, events = step(state, action, config)
        rec.record(state.t, state.agent_pos, action, rewards, events)
    return rec.log


def _check_log(log: EpisodeLog) -> None:
    n = log.config.n_agents
    if log.initial_agents.shape != (n, 2) or log.task_pos.shape != (log.config.n_tasks, 2):
        raise ContractError("episode log header has wrong position shapes")
    seen = set()
    for idx, rec in enumerate(log.steps):
        if rec.t != idx + 1:
            raise ContractError(f"step records out of order at index {idx} (t={rec.t})")
        if rec.positions.shape != (n, 2):
            raise ContractError(f"positions at t={rec.t} have shape {rec.positions.shape}")
        for k, i in rec.completions:
            if not (0 <= i < n and 0 <= k < log.config.n_tasks):
                raise ContractError(f"completion ({k}, {i}) at t={rec.t} out of range")
            if k in seen:
                raise ContractError(f"task {k} completed twice")
            seen.add(k)


def extract_segments(log: EpisodeLog) -> list[TrajectorySegment]:
    _check_log(log)
    since = np.zeros(log.config.n_agents, dtype=np.int64)
    out = []
    for rec in log.steps:
        for k, i in rec.completions:
            start = int(since[i])
            pts = np.array([log.positions_at(s)[i] for s in range(start, rec.t + 1)])
            out.append(TrajectorySegment(i, k, pts, start, rec.t))
            since[i] = rec.t
    return out


# ------------------------------------------------------------------ file I/O


def write_log(log: EpisodeLog, path) -> None:
    header = {
        "kind": "header", "version": LOG_VERSION, "config": log.config.to_dict(),
        "seed": log.seed, "agents": log.initial_agents.tolist(), "tasks": log.task_pos.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in log.steps:
            fh.write(json.dumps({
                "t": rec.t, "positions": rec.positions.tolist(), "actions": rec.actions.tolist(),
                "rewards": rec.rewards.tolist(), "displacements": rec.displacements.tolist(),
                "completions": [list(c) for c in rec.completions],
            }) + "\n")


def read_log(path) -> EpisodeLog:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ContractError(f"{path}: empty episode log")
    head = json.loads(lines[0])
    if head.get("kind") != "header" or head.get("version") != LOG_VERSION:
        raise ContractError(f"{path}: missing or unsupported header")
    log = EpisodeLog(EnvConfig.from_dict(head["config"]), int(head["seed"]),
                     np.asarray(head["agents"], dtype=float), np.asarray(head["tasks"], dtype=float))
    for line in lines[1:]:
        r = json.loads(line)
        log.steps.append(StepRecord(
            int(r["t"]), np.asarray(r["positions"], dtype=float), np.asarray(r["actions"], dtype=np.int64),
            np.asarray(r["rewards"], dtype=float), np.asarray(r["displacements"], dtype=float),
            [tuple(c) for c in r["completions"]],
        ))
    _check_log(log)
    return log
