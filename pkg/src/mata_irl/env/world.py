"""Deterministic 2D task-allocation world.

Agents move a fixed distance per step in one of ``n_directions`` headings
(plus "stay"). An idle agent that ends its move within ``completion_radius``
of the nearest free task claims it and executes it for ``task_duration``
steps, the claim step included; the task is marked done on the last one.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError

ENERGY_SENTINEL = 1e12


@dataclass(frozen=True)
class EnvConfig:
    n_agents: int = 5
    n_tasks: int = 20
    world_size: float = 20.0
    speed: float = 5.0
    task_reward: float = 7.5
    time_penalty: float = 0.5
    energy_penalty: float = 1.5
    # >= speed / (2 cos(pi / n_directions)) so a greedy walker always closes in
    completion_radius: float = 3.0
    task_duration: int = 1
    max_steps: int = 300
    n_directions: int = 8
    task_energy: float = 0.0
    initial_energy: float = ENERGY_SENTINEL

    def __post_init__(self):
        problems = []
        for name in ("n_agents", "n_tasks", "task_duration", "max_steps", "n_directions"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be a positive integer")
        for name in ("world_size", "speed", "completion_radius"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        for name in ("time_penalty", "energy_penalty", "task_energy"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative")
        if self.n_agents > self.n_tasks:
            problems.append("n_agents must not exceed n_tasks")
        if self.completion_radius >= self.world_size / 4:
            problems.append("completion_radius must be below world_size / 4")
        if self.speed > self.world_size:
            problems.append("speed must not exceed world_size")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def n_actions(self) -> int:
        return self.n_directions + 1

    @property
    def stay_action(self) -> int:
        return self.n_directions

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        return cls(**d)


@dataclass
class WorldState:
    agent_pos: np.ndarray  # (N, 2)
    agent_remaining: np.ndarray  # (N,) execution steps left, 0 = idle
    agent_task: np.ndarray  # (N,) task being executed, -1 = none
    task_pos: np.ndarray  # (M, 2)
    task_done: np.ndarray  # (M,) bool
    t: int = 0

    def copy(self) -> "WorldState":
        return WorldState(
            self.agent_pos.copy(), self.agent_remaining.copy(), self.agent_task.copy(),
            self.task_pos.copy(), self.task_done.copy(), self.t,
        )

    @property
    def n_agents(self) -> int:
        return len(self.agent_pos)

    @property
    def task_claimed(self) -> np.ndarray:
        claimed = np.zeros(len(self.task_pos), dtype=bool)
        busy = self.agent_task[self.agent_task >= 0]
        claimed[busy] = True
        return claimed

    @property
    def agent_busy(self) -> np.ndarray:
        return self.agent_remaining > 0

    def all_done(self) -> bool:
        return bool(self.task_done.all())

    def finished(self, config: EnvConfig) -> bool:
        return self.all_done() or self.t >= config.max_steps

    def features(self, world_size: float) -> np.ndarray:
        """Flat state vector: per agent [x, y, busy], per task [x, y, done], positions scaled to [0, 1]."""
        agents = np.column_stack([self.agent_pos / world_size, self.agent_busy.astype(float)])
        tasks = np.column_stack([self.task_pos / world_size, self.task_done.astype(float)])
        return np.concatenate([agents.reshape(-1), tasks.reshape(-1)])


@dataclass
class StepEvents:
    displacements: np.ndarray
    completions: list = field(default_factory=list)  # (task, agent)
    completed: np.ndarray = None


def direction_vectors(n_directions: int) -> np.ndarray:
    """Unit headings for action indices 0..K-1 followed by a zero row for "stay"."""
    angles = 2.0 * math.pi * np.arange(n_directions) / n_directions
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    return np.vstack([dirs, np.zeros((1, 2))])


def reset(config: EnvConfig, seed: int) -> WorldState:
    rng = np.random.Generator(np.random.PCG64(int(seed) % 2**64))
    agents = rng.uniform(0.0, config.world_size, size=(config.n_agents, 2))
    tasks = rng.uniform(0.0, config.world_size, size=(config.n_tasks, 2))
    return WorldState(
        agent_pos=agents,
        agent_remaining=np.zeros(config.n_agents, dtype=np.int64),
        agent_task=np.full(config.n_agents, -1, dtype=np.int64),
        task_pos=tasks,
        task_done=np.zeros(config.n_tasks, dtype=bool),
        t=0,
    )


def base_reward(completed: bool, d: float, config: EnvConfig) -> float:
    return (
        config.task_reward * float(bool(completed))
        - config.time_penalty
        - config.energy_penalty * (d / config.world_size)
    )


def move(pos: np.ndarray, action: int, config: EnvConfig, dirs: np.ndarray | None = None) -> np.ndarray:
    dirs = direction_vectors(config.n_directions) if dirs is None else dirs
    return np.clip(pos + config.speed * dirs[action], 0.0, config.world_size)


def step(state: WorldState, action, config: EnvConfig):
    """Advance one timestep; returns ``(next_state, rewards, events)``."""
    if state.finished(config):
        raise ContractError("cannot step a finished episode")
    action = np.asarray(action, dtype=np.int64)
    n = state.n_agents
    if action.shape != (n,) or action.min() < 0 or action.max() > config.n_directions:
        raise ContractError(f"invalid joint action {action.tolist()}")

    nxt = state.copy()
    dirs = direction_vectors(config.n_directions)
    disp = np.zeros(n)
    completed = np.zeros(n, dtype=bool)
    completions = []

    idle = ~state.agent_busy
    for i in np.flatnonzero(~idle):
        nxt.agent_remaining[i] -= 1
        if nxt.agent_remaining[i] == 0:
            k = int(nxt.agent_task[i])
            nxt.task_done[k] = True
            nxt.agent_task[i] = -1
            completed[i] = True
            completions.append((k, int(i)))

    for i in np.flatnonzero(idle):
        new = move(state.agent_pos[i], int(action[i]), config, dirs)
        disp[i] = float(np.linalg.norm(new - state.agent_pos[i]))
        nxt.agent_pos[i] = new

    for i in np.flatnonzero(idle):
        free = ~(nxt.task_done | nxt.task_claimed)
        if not free.any():
            break
        cand = np.flatnonzero(free)
        dist = np.linalg.norm(nxt.task_pos[cand] - nxt.agent_pos[i], axis=1)
        j = int(np.argmin(dist))
        if dist[j] <= config.completion_radius:
            k = int(cand[j])
            nxt.agent_task[i] = k
            nxt.agent_remaining[i] = config.task_duration - 1
            if nxt.agent_remaining[i] == 0:
                nxt.task_done[k] = True
                nxt.agent_task[i] = -1
                completed[i] = True
                completions.append((k, int(i)))

    nxt.t = state.t + 1
    rewards = np.array([base_reward(completed[i], disp[i], config) for i in range(n)])
    return nxt, rewards, StepEvents(disp, completions, completed)
