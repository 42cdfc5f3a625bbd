"""Constraint checks, the weighted energy/time objective, and episode metrics."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .episode import EpisodeLog, _check_log
from .world import EnvConfig


@dataclass
class TaskTiming:
    arrival: float  # z_k
    waiting: float  # o_k
    duration: float  # g_k

    @property
    def completion(self) -> float:
        return self.arrival + self.waiting + self.duration


def task_timings(log: EpisodeLog) -> dict[int, TaskTiming]:
    """Timing for completed tasks only; all tasks arrive at t=0."""
    g = log.config.task_duration
    return {k: TaskTiming(0.0, float(rho - g), float(g)) for k, (_, rho) in log.completion_times().items()}


@dataclass
class EnergyLedger:
    initial: float
    movement: np.ndarray  # E_c per agent
    tasks: np.ndarray  # sum_k e_k C_ki per agent

    @property
    def remaining(self) -> np.ndarray:
        return self.initial - self.movement - self.tasks


def energy_ledger(log: EpisodeLog, config: EnvConfig | None = None) -> EnergyLedger:
    cfg = config or log.config
    n = cfg.n_agents
    movement = np.zeros(n)
    tasks = np.zeros(n)
    for rec in log.steps:
        movement += cfg.energy_penalty * rec.displacements / cfg.world_size
        for _, i in rec.completions:
            tasks[i] += cfg.task_energy
    return EnergyLedger(cfg.initial_energy, movement, tasks)


@dataclass
class ConstraintReport:
    violations: list = field(default_factory=list)  # (constraint, message)

    def count(self, kind: str | None = None) -> int:
        return sum(1 for k, _ in self.violations if kind is None or k == kind)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_constraints(log: EpisodeLog, config: EnvConfig | None = None) -> ConstraintReport:
    """Check unique assignment, per-agent non-overlap, and energy budget."""
    cfg = config or log.config
    report = ConstraintReport()

    by_task = defaultdict(list)
    for rec in log.steps:
        for k, i in rec.completions:
            by_task[k].append((i, rec.t))
    for k, entries in sorted(by_task.items()):
        agents = Counter(i for i, _ in entries)
        if len(entries) != 1:
            report.violations.append(("unique_assignment", f"task {k} completed {len(entries)} times by agents {sorted(agents)}"))

    g = cfg.task_duration
    per_agent = defaultdict(list)
    for k, entries in by_task.items():
        for i, rho in entries:
            per_agent[i].append((k, rho))
    for i, items in sorted(per_agent.items()):
        items.sort()
        for a in range(len(items)):
            for b in range(a + 1, len(items)):
                (ku, ru), (kv, rv) = items[a], items[b]
                if not (ru <= rv - g or rv <= ru - g):
                    report.violations.append(
                        ("overlap", f"agent {i}: tasks {ku} and {kv} overlap ([{ru - g}, {ru}] vs [{rv - g}, {rv}])")
                    )

    ledger = energy_ledger(log, cfg)
    for i in np.flatnonzero(ledger.remaining < 0):
        report.violations.append(("energy", f"agent {i} remaining energy {ledger.remaining[i]:.6g} < 0"))
    return report


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValueError("objective weights must be non-negative and not both zero")


def score_objective(log: EpisodeLog, weights: ObjectiveWeights, config: EnvConfig | None = None) -> float:
    ledger = energy_ledger(log, config)
    timings = task_timings(log)
    t_total = max((tt.completion for tt in timings.values()), default=0.0)
    if timings:
        t_total -= min(tt.arrival for tt in timings.values())
    return float(weights.alpha * (ledger.movement + ledger.tasks).sum() + weights.beta * t_total)


@dataclass
class EpisodeMetrics:
    cumulative_reward: float
    timesteps: int
    total_distance: float
    waiting_times: dict

    def row(self) -> dict:
        return {
            "cumulative_reward": self.cumulative_reward,
            "timesteps": self.timesteps,
            "total_distance": self.total_distance,
        }


def compute_metrics(log: EpisodeLog) -> EpisodeMetrics:
    """Metrics on the logged, unadapted environmental rewards."""
    _check_log(log)
    reward = float(sum(rec.rewards.sum() for rec in log.steps))
    distance = float(sum(rec.displacements.sum() for rec in log.steps))
    waiting = {k: tt.waiting for k, tt in task_timings(log).items()}
    return EpisodeMetrics(reward, len(log.steps), distance, waiting)
