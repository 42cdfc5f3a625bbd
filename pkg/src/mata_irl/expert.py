"""Optimal-assignment expert and demonstration datasets.

Each step the expert solves a minimum-distance assignment between idle agents
and free tasks, then every assigned agent takes the discrete heading that
leaves it closest to its task. Episodes run through the real environment, so
demonstrations obey exactly the dynamics the learners see.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .env import EnvConfig, TrajectorySegment, direction_vectors, extract_segments, reset, step
from .env.episode import EpisodeRecorder, EpisodeLog
from .errors import ContractError
from .seeding import derive_seed

DEMO_VERSION = 1
_TIE = 1e-9


def _cost(agents: np.ndarray, tasks: np.ndarray) -> np.ndarray:
    return np.linalg.norm(agents[:, None, :] - tasks[None, :, :], axis=2)


def assign(agent_positions, task_positions) -> tuple[dict[int, int], float]:
    """Minimum total-distance injective map agent -> task.

    Among optimal assignments (within 1e-9) the lexicographically smallest
    task vector wins: each agent in turn takes the lowest task index that
    still admits an optimal completion of the rest.
    """
    agents = np.asarray(agent_positions, dtype=float).reshape(-1, 2)
    tasks = np.asarray(task_positions, dtype=float).reshape(-1, 2)
    if len(agents) == 0:
        raise ContractError("assign needs at least one agent")
    if len(agents) > len(tasks):
        raise ContractError(f"assign needs #agents <= #tasks, got {len(agents)} > {len(tasks)}")
    cost = _cost(agents, tasks)
    rows, cols = linear_sum_assignment(cost)
    best = float(cost[rows, cols].sum())
    current = dict(zip(rows.tolist(), cols.tolist()))  # an optimal completion of the prefix

    fixed: dict[int, int] = {}
    spent = 0.0
    free_tasks = list(range(len(tasks)))
    for i in range(len(agents)):
        rest_agents = list(range(i + 1, len(agents)))
        choice = current[i]
        for j in free_tasks:
            if j >= choice:
                break
            rest_tasks = [c for c in free_tasks if c != j]
            sub = cost[np.ix_(rest_agents, rest_tasks)]
            r, c = linear_sum_assignment(sub) if rest_agents else (np.array([], int), np.array([], int))
            if spent + cost[i, j] + float(sub[r, c].sum()) <= best + _TIE:
                choice = j
                current.update({rest_agents[a]: rest_tasks[b] for a, b in zip(r.tolist(), c.tolist())})
                break
        fixed[i] = choice
        spent += cost[i, choice]
        free_tasks.remove(choice)
    return fixed, float(sum(cost[i, j] for i, j in fixed.items()))


def greedy_action(pos: np.ndarray, target: np.ndarray, config: EnvConfig, dirs=None) -> int:
    """Heading (or stay) minimizing the post-move distance; ties to the lowest index."""
    dirs = direction_vectors(config.n_directions) if dirs is None else dirs
    moved = np.clip(pos + config.speed * dirs, 0.0, config.world_size)
    return int(np.argmin(np.linalg.norm(moved - target, axis=1)))


def expert_actions(state, config: EnvConfig) -> np.ndarray:
    dirs = direction_vectors(config.n_directions)
    actions = np.full(state.n_agents, config.stay_action, dtype=np.int64)
    idle = np.flatnonzero(~state.agent_busy)
    free = np.flatnonzero(~(state.task_done | state.task_claimed))
    if len(idle) == 0 or len(free) == 0:
        return actions
    if len(idle) <= len(free):
        pairs, _ = assign(state.agent_pos[idle], state.task_pos[free])
        targets = {int(idle[a]): int(free[t]) for a, t in pairs.items()}
    else:
        pairs, _ = assign(state.task_pos[free], state.agent_pos[idle])
        targets = {int(idle[a]): int(free[t]) for t, a in pairs.items()}
    for i, k in targets.items():
        actions[i] = greedy_action(state.agent_pos[i], state.task_pos[k], config, dirs)
    return actions


def expert_episode(config: EnvConfig, seed: int) -> EpisodeLog:
    state = reset(config, seed)
    rec = EpisodeRecorder(config, seed, state)
    while not state.finished(config):
        action = expert_actions(state, config)
        state, rewards, events = step(state, action, config)
        rec.record(state.t, state.agent_pos, action, rewards, events)
    return rec.log


def random_episode(config: EnvConfig, seed: int, rng: np.random.Generator) -> EpisodeLog:
    state = reset(config, seed)
    rec = EpisodeRecorder(config, seed, state)
    while not state.finished(config):
        action = rng.integers(0, config.n_actions, size=config.n_agents)
        state, rewards, events = step(state, action, config)
        rec.record(state.t, state.agent_pos, action, rewards, events)
    return rec.log


@dataclass
class DemoDataset:
    segments: list = field(default_factory=list)
    config: EnvConfig | None = None
    seed: int = 0
    n_episodes: int = 0

    provenance = "expert"

    def __len__(self) -> int:
        return len(self.segments)

    def save(self, path) -> None:
        header = {
            "kind": "header", "version": DEMO_VERSION, "provenance": self.provenance,
            "config": self.config.to_dict() if self.config else None,
            "seed": self.seed, "n_episodes": self.n_episodes,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")
            for seg in self.segments:
                fh.write(json.dumps(seg.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "DemoDataset":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        head = json.loads(lines[0]) if lines else {}
        if head.get("kind") != "header" or head.get("version") != DEMO_VERSION:
            raise ContractError(f"{path}: not a demo file (missing or unsupported header)")
        cfg = EnvConfig.from_dict(head["config"]) if head.get("config") else None
        segs = [TrajectorySegment.from_dict(json.loads(line)) for line in lines[1:] if line.strip()]
        return cls(segs, cfg, int(head["seed"]), int(head["n_episodes"]))


def episode_seed(seed: int, episode: int) -> int:
    return derive_seed(seed, "expert-episode", episode)


def generate_demos(config: EnvConfig, n_episodes: int, seed: int, keep_logs: list | None = None) -> DemoDataset:
    """Run ``n_episodes`` expert episodes; optionally collect their logs in ``keep_logs``."""
    data = DemoDataset([], config, int(seed), int(n_episodes))
    for e in range(n_episodes):
        log = expert_episode(config, episode_seed(seed, e))
        data.segments.extend(extract_segments(log))
        if keep_logs is not None:
            keep_logs.append(log)
    return data
