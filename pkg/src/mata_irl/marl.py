"""Centralized-critic actor-critic backend with shared decentralized actors.

Actor: state ⊕ one-hot(agent id) -> log-probabilities over the K+1 moves,
shared by all agents. Critic: state ⊕ concatenated joint-action one-hots ->
one value per agent, with a soft-updated target copy. Rewards fed to the
learner may be IRL-adapted; every logged metric uses environment rewards.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import core as C
from . import nets as N
from .core import AdamState, ParamStore, Tensor
from .env import EnvConfig, EpisodeRecorder, EpisodeMetrics, compute_metrics, reset, step
from .errors import ConfigError, ContractError, DimensionError
from .seeding import derive_seed, stream


@dataclass(frozen=True)
class MarlConfig:
    """Learner settings; the episode horizon is ``EnvConfig.max_steps``."""

    gamma: float = 0.95
    lr_actor: float = 5e-5
    lr_critic: float = 1e-5
    batch_size: int = 2048
    buffer_capacity: int = 1_000_000
    tau_soft: float = 0.01
    entropy_weight: float = 0.01
    episodes: int = 2000
    hidden: int = 64

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= buffer_capacity")
        if not 0.0 <= self.tau_soft <= 1.0:
            raise ConfigError("tau_soft must lie in [0, 1]")
        if self.episodes < 0 or self.hidden < 1:
            raise ConfigError("episodes must be >= 0 and hidden >= 1")


# ------------------------------------------------------------ replay buffer


@dataclass
class Experience:
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """FIFO ring buffer; batches are drawn uniformly without replacement."""

    def __init__(self, capacity: int, state_dim: int, n_agents: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, n_agents), dtype=np.int64)
        self.rewards = np.zeros((capacity, n_agents))
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, exp: Experience) -> None:
        if exp.state.shape != self.states.shape[1:] or exp.action.shape != self.actions.shape[1:]:
            raise DimensionError(f"experience shapes {exp.state.shape}/{exp.action.shape} do not fit buffer")
        i = self._next
        self.states[i], self.actions[i], self.rewards[i] = exp.state, exp.action, exp.reward
        self.next_states[i], self.dones[i] = exp.next_state, float(exp.done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def oldest(self) -> int:
        """Slot index of the oldest stored transition."""
        return self._next if self._size == self.capacity else 0

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if batch_size > self._size:
            raise ContractError(f"cannot sample {batch_size} from {self._size} transitions")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return {
            "s": self.states[idx], "a": self.actions[idx], "r": self.rewards[idx],
            "s2": self.next_states[idx], "done": self.dones[idx],
        }


# --------------------------------------------------------------- networks


@dataclass
class AgentNets:
    n_agents: int
    n_actions: int
    state_dim: int
    actor: ParamStore
    critic: ParamStore
    target: ParamStore

    @classmethod
    def create(cls, n_agents: int, n_actions: int, state_dim: int, hidden: int,
               actor_rng: np.random.Generator, critic_rng: np.random.Generator) -> "AgentNets":
        actor, critic = ParamStore(), ParamStore()
        N.init_mlp(actor, [state_dim + n_agents, hidden, hidden, n_actions], actor_rng, "actor/")
        N.init_mlp(critic, [state_dim + n_agents * n_actions, hidden, hidden, n_agents], critic_rng, "critic/")
        target = ParamStore({"target/" + n.split("/", 1)[1]: t.data.copy() for n, t in critic.items()})
        return cls(n_agents, n_actions, state_dim, actor, critic, target)

    def params(self) -> ParamStore:
        return self.actor.merge(self.critic).merge(self.target)


def actor_inputs(states: np.ndarray, n_agents: int, ids=None) -> np.ndarray:
    """Rows ordered batch-major: (s_0, id_0), (s_0, id_1), ..., (s_1, id_0), ..."""
    states = np.atleast_2d(states)
    ids = np.arange(n_agents) if ids is None else np.asarray(ids)
    eye = np.eye(n_agents)[ids]
    b, k = len(states), len(ids)
    return np.concatenate([np.repeat(states, k, axis=0), np.tile(eye, (b, 1))], axis=1)


def actor_log_probs(actor: ParamStore, states, n_agents: int, ids=None) -> Tensor:
    return N.mlp_forward(actor_inputs(states, n_agents, ids), actor, "actor/", final="log_softmax")


def policy_probs(actor: ParamStore, state, n_agents: int, ids=None) -> np.ndarray:
    """Action probabilities for each agent id in ``ids`` at one state, (len(ids), A)."""
    return np.exp(actor_log_probs(actor, state, n_agents, ids).data)


def sample_action(probs, mode: str, rng: np.random.Generator | None = None) -> int:
    probs = np.asarray(probs, dtype=float)
    if mode == "greedy":
        return int(np.argmax(probs))  # first maximum, i.e. lowest index on ties
    if mode != "explore":
        raise ContractError(f"unknown action mode {mode!r}")
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(probs) - 1))


def sample_actions(probs: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Vectorized :func:`sample_action` over rows; one uniform draw per row."""
    if mode == "greedy":
        return np.argmax(probs, axis=1)
    if mode != "explore":
        raise ContractError(f"unknown action mode {mode!r}")
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    picks = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(picks, probs.shape[1] - 1)


def select_action(actor: ParamStore, state, agent: int, n_agents: int, mode: str,
                  rng: np.random.Generator | None = None) -> int:
    return sample_action(policy_probs(actor, state, n_agents, [agent])[0], mode, rng)


def joint_one_hot(actions: np.ndarray, n_actions: int) -> np.ndarray:
    actions = np.atleast_2d(actions)
    b, n = actions.shape
    out = np.zeros((b, n * n_actions))
    out[np.arange(b)[:, None], np.arange(n) * n_actions + actions] = 1.0
    return out


def critic_values(critic: ParamStore, states, actions, n_actions: int, prefix: str = "critic/") -> Tensor:
    x = np.concatenate([np.atleast_2d(states), joint_one_hot(actions, n_actions)], axis=1)
    return N.mlp_forward(x, critic, prefix)


# ------------------------------------------------------------------ losses


def td_targets(batch: dict, nets: AgentNets, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """y = r + gamma (1 - done) Qbar(s', a'), a' sampled from the current actors."""
    s2 = batch["s2"]
    probs = np.exp(actor_log_probs(nets.actor, s2, nets.n_agents).data)
    a2 = sample_actions(probs, "explore", rng).reshape(len(s2), nets.n_agents)
    q_next = critic_values(nets.target, s2, a2, nets.n_actions, "target/").data
    return batch["r"] + gamma * (1.0 - batch["done"])[:, None] * q_next


def critic_loss(batch: dict, nets: AgentNets, gamma: float, rng: np.random.Generator | None = None,
                targets: np.ndarray | None = None) -> Tensor:
    """Mean squared Bellman error over batch and agents."""
    if len(batch["s"]) == 0:
        raise ContractError("critic_loss needs a non-empty batch")
    y = td_targets(batch, nets, gamma, rng) if targets is None else targets
    q = critic_values(nets.critic, batch["s"], batch["a"], nets.n_actions)
    diff = q - Tensor(y)
    return C.mean(diff * diff)


def _critic_alternatives(batch: dict, nets: AgentNets) -> np.ndarray:
    """Q_i(s, (a, a_-i)) for every agent i and action a, shape (B, N, A).

    The first critic layer is linear in the one-hot joint action, so swapping
    agent i's action only swaps one weight column in the pre-activation. The
    table is a constant of the actor objective and is evaluated in float32,
    the dominant per-update cost.
    """
    p = nets.critic
    f32 = {name: t.data.astype(np.float32) for name, t in p.items()}
    w1, b1 = f32["critic/W1"], f32["critic/b1"]
    n, a_n, sd = nets.n_agents, nets.n_actions, nets.state_dim
    s, acts = batch["s"].astype(np.float32), batch["a"]
    hid = w1.shape[0]
    w_act = w1[:, sd:].T.reshape(n, a_n, hid)  # row (i, a): column added by agent i taking a
    own = w_act[np.arange(n)[None, :], acts]  # (B, N, H)
    pre = s @ w1[:, :sd].T + b1 + own.sum(axis=1)
    h = ((pre[:, None, None, :] - own[:, :, None, :]) + w_act[None]).reshape(-1, hid)  # (B*N*A, H)
    np.maximum(h, 0.0, out=h)
    layers = N.mlp_layers(p, "critic/")
    for layer in range(2, layers):
        h = h @ f32[f"critic/W{layer}"].T
        h += f32[f"critic/b{layer}"]
        np.maximum(h, 0.0, out=h)
    w_out, b_out = f32[f"critic/W{layers}"], f32[f"critic/b{layers}"]
    # only agent i's output is needed on agent i's alternatives
    h = h.reshape(len(s), n, a_n, -1)
    q = np.einsum("bnah,nh->bna", h, w_out) + b_out[None, :, None]
    return q.astype(np.float64)


def actor_objective(batch: dict, nets: AgentNets, entropy_weight: float) -> Tensor:
    """mean over (b, i) of sum_a pi_i(a|s) Q_i(s, (a, a_-i)) + w_ent H(pi_i(.|s)).

    The critic enters as a constant table, so gradients reach only the actor.
    """
    if len(batch["s"]) == 0:
        raise ContractError("actor_objective needs a non-empty batch")
    q_tab = _critic_alternatives(batch, nets).reshape(-1, nets.n_actions)
    logp = actor_log_probs(nets.actor, batch["s"], nets.n_agents)
    pi = C.exp(logp)
    value = C.sum_(pi * Tensor(q_tab), axis=1)
    entropy = -C.sum_(pi * logp, axis=1)
    return C.mean(value + entropy * entropy_weight)


def soft_update(target: ParamStore, live: ParamStore, tau: float) -> None:
    """target <- (1 - tau) target + tau live, matching parameters by sorted order."""
    t_items, l_items = target.items(), live.items()
    if len(t_items) != len(l_items):
        raise DimensionError("target and live networks have different parameter counts")
    for (tn, t), (ln, l) in zip(t_items, l_items):
        if t.shape != l.shape:
            raise DimensionError(f"{tn} {t.shape} vs {ln} {l.shape}")
        t.data = (1.0 - tau) * t.data + tau * l.data


# ----------------------------------------------------------------- training


EPISODE_COLUMNS = ("episode", "cumulative_reward", "timesteps", "total_distance",
                   "gen_loss", "disc_loss", "alpha", "beta")
COEF_COLUMNS = ("episode", "step", "alpha", "beta", "gen_loss", "disc_loss", "disc_accuracy")


@dataclass
class RunRecord:
    episodes: list = field(default_factory=list)
    coefficients: list = field(default_factory=list)
    params: ParamStore | None = None
    wall_clock: float = 0.0

    def rewards(self) -> np.ndarray:
        return np.array([row["cumulative_reward"] for row in self.episodes])


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


class Learner:
    """Owns the networks, optimizers, buffer and random streams of one run."""

    def __init__(self, env: EnvConfig, cfg: MarlConfig, seed: int):
        self.env, self.cfg, self.seed = env, cfg, seed
        state_dim = 3 * (env.n_agents + env.n_tasks)
        self.nets = AgentNets.create(env.n_agents, env.n_actions, state_dim, cfg.hidden,
                                     stream(seed, "init-actor"), stream(seed, "init-critic"))
        self.buffer = ReplayBuffer(cfg.buffer_capacity, state_dim, env.n_agents)
        self.actor_opt, self.critic_opt = AdamState(), AdamState()
        self.act_rng = stream(seed, "act")
        self.replay_rng = stream(seed, "replay")
        self.target_rng = stream(seed, "target-actions")

    def act(self, state_vec: np.ndarray) -> np.ndarray:
        probs = policy_probs(self.nets.actor, state_vec, self.env.n_agents)
        return sample_actions(probs, "explore", self.act_rng)

    def update(self) -> None:
        batch = self.buffer.sample(self.cfg.batch_size, self.replay_rng)
        critic = self.nets.critic
        critic.zero_grad()
        with C.Tape() as tape:
            loss = critic_loss(batch, self.nets, self.cfg.gamma, self.target_rng)
        C.backward(tape, loss)
        C.adam_step(critic, critic.grads(), self.critic_opt, self.cfg.lr_critic)

        actor = self.nets.actor
        actor.zero_grad()
        with C.Tape() as tape:
            neg = -actor_objective(batch, self.nets, self.cfg.entropy_weight)
        C.backward(tape, neg)
        C.adam_step(actor, actor.grads(), self.actor_opt, self.cfg.lr_actor)
        soft_update(self.nets.target, critic, self.cfg.tau_soft)


def train(env: EnvConfig, cfg: MarlConfig, seed: int, irl=None, progress=None) -> RunRecord:
    """Run ``cfg.episodes`` training episodes; ``irl`` is an optional IrlModule."""
    started = time.perf_counter()
    learner = Learner(env, cfg, seed)
    record = RunRecord()
    w = env.world_size
    for e in range(cfg.episodes):
        env_seed = derive_seed(seed, "env", e)
        state = reset(env, env_seed)
        recorder = EpisodeRecorder(env, env_seed, state)
        losses = []
        s_vec = state.features(w)
        while not state.finished(env):
            actions = learner.act(s_vec)
            state, rewards, events = step(state, actions, env)
            closed = recorder.record(state.t, state.agent_pos, actions, rewards, events)
            learned = rewards
            if irl is not None:
                learned, log = irl.step(closed, rewards, events.completed, state)
                if log is not None:
                    losses.append(log)
                    record.coefficients.append({
                        "episode": e, "step": state.t, "alpha": log.alpha, "beta": log.beta,
                        "gen_loss": log.gen_loss, "disc_loss": log.disc_loss,
                        "disc_accuracy": log.disc_accuracy,
                    })
            s2_vec = state.features(w)
            learner.buffer.add(Experience(s_vec, actions, learned, s2_vec, state.all_done()))
            s_vec = s2_vec
            if len(learner.buffer) >= cfg.batch_size:
                learner.update()
        m = compute_metrics(recorder.log)
        shared = irl.shared if irl is not None else None
        record.episodes.append({
            "episode": e, "cumulative_reward": m.cumulative_reward, "timesteps": m.timesteps,
            "total_distance": m.total_distance,
            "gen_loss": _mean_or_none(l.gen_loss for l in losses),
            "disc_loss": _mean_or_none(l.disc_loss for l in losses),
            "alpha": shared.alpha if shared else 1.0, "beta": shared.beta if shared else 0.0,
        })
        if progress is not None:
            progress(e, record.episodes[-1])
    params = learner.nets.params()
    record.params = params if irl is None else params.merge(irl.params())
    record.wall_clock = time.perf_counter() - started
    return record


def evaluate_policy(actor: ParamStore, env: EnvConfig, episodes: int, seed: int, irl=None) -> list[EpisodeMetrics]:
    """Roll out a frozen actor; metrics always use the environment reward.

    When ``irl`` is given its step is run on every completion (as in training)
    but its adapted rewards never reach the metrics.
    """
    rng = stream(seed, "eval-act")
    out = []
    for e in range(episodes):
        env_seed = derive_seed(seed, "eval-env", e)
        state = reset(env, env_seed)
        recorder = EpisodeRecorder(env, env_seed, state)
        while not state.finished(env):
            probs = policy_probs(actor, state.features(env.world_size), env.n_agents)
            actions = sample_actions(probs, "explore", rng)
            state, rewards, events = step(state, actions, env)
            closed = recorder.record(state.t, state.agent_pos, actions, rewards, events)
            if irl is not None:
                irl.step(closed, rewards, events.completed, state)
        out.append(compute_metrics(recorder.log))
    return out
