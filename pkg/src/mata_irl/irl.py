"""Adversarial reward inference: reward adaptation, generator and discriminator.

The generator (trajectory MHSA + agent-task GAT + bounded linear head) maps a
freshly closed inter-task segment to a coefficient pair ``(alpha, beta)``.
Coefficients are pooled into one shared pair that rescales the environment
reward at completion steps. The discriminator scores resampled segments as
expert-like (label 1) or policy-generated (label 0).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import core as C
from . import nets as N
from .core import AdamState, ParamStore, Tensor
from .env import EnvConfig, TrajectorySegment, direction_vectors
from .errors import ConfigError

AUX_DIM = 6


@dataclass(frozen=True)
class IrlConfig:
    l_fix: int = 16
    decay: float = 0.9  # EMA weight on the previous shared coefficients
    c_alpha: float = 0.5
    c_beta: float = 1.0
    lr_gen: float = 1e-5
    lr_disc: float = 2e-5
    d_g: int = 32
    disc_hidden: int = 64
    disc_layers: int = 3
    baseline_window: int = 32  # recent policy segments re-scored to centre the generator signal
    updates: bool = True  # False freezes generator and discriminator

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigError("decay must lie in [0, 1]")
        if self.l_fix < 2:
            raise ConfigError("l_fix must be at least 2")
        if self.c_alpha <= 0 or self.c_beta <= 0:
            raise ConfigError("c_alpha and c_beta must be positive")
        if self.baseline_window < 1:
            raise ConfigError("baseline_window must be at least 1")


# ------------------------------------------------------------ resampling


def resample_path(points, l_fix: int) -> np.ndarray:
    """Arc-length uniform linear interpolation to exactly ``l_fix`` points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 1:
        return np.repeat(pts, l_fix, axis=0)
    keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
    pts_u = pts[keep]
    if len(pts_u) == 1:
        return np.repeat(pts[:1], l_fix, axis=0)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts_u, axis=0), axis=1))])
    targets = np.linspace(0.0, s[-1], l_fix)
    out = np.column_stack([np.interp(targets, s, pts_u[:, 0]), np.interp(targets, s, pts_u[:, 1])])
    out[0], out[-1] = pts[0], pts[-1]
    return out


def path_length(points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def resample_segment(seg: TrajectorySegment, l_fix: int, world_size: float, max_steps: int) -> np.ndarray:
    """Fixed-length discriminator input: resampled path plus 6 auxiliary features.

    Aux = [duration / t_max, start x, start y, end x, end y, straight / path length],
    coordinates scaled by ``world_size``.
    """
    pts = np.asarray(seg.points, dtype=float)
    path = resample_path(pts, l_fix) / world_size
    travelled = path_length(pts)
    straight = float(np.linalg.norm(pts[-1] - pts[0]))
    ratio = 1.0 if travelled <= 1e-12 else straight / travelled
    aux = [
        (seg.end_t - seg.start_t) / max_steps,
        pts[0, 0] / world_size, pts[0, 1] / world_size,
        pts[-1, 0] / world_size, pts[-1, 1] / world_size,
        ratio,
    ]
    return np.concatenate([path.reshape(-1), aux])


# ----------------------------------------------------- shared coefficients


@dataclass(frozen=True)
class RewardCoefficients:
    alpha: float
    beta: float


@dataclass(frozen=True)
class SharedCoefficients:
    alpha: float = 1.0
    beta: float = 0.0
    decay: float = 0.9


def update_shared(coeffs: SharedCoefficients, batch) -> SharedCoefficients:
    """EMA toward the batch mean; an empty batch is a no-op."""
    batch = list(batch)
    if not batch:
        return coeffs
    m_a = float(np.mean([c.alpha for c in batch]))
    m_b = float(np.mean([c.beta for c in batch]))
    rho = coeffs.decay

    def blend(old, new):
        return old if new == old else rho * old + (1.0 - rho) * new

    return SharedCoefficients(blend(coeffs.alpha, m_a), blend(coeffs.beta, m_b), rho)


def adapt_reward(r: float, coeffs: SharedCoefficients, completed: bool) -> float:
    return coeffs.alpha * r + coeffs.beta if completed else r


# ------------------------------------------------------------------ losses


def _as_tensor(p):
    return p if isinstance(p, Tensor) else Tensor(np.asarray(p, dtype=float))


def generator_loss(scores):
    """-mean(log P) over policy segments."""
    return -C.mean(C.log(_as_tensor(scores)))


def discriminator_loss(expert_scores, policy_scores):
    """-mean(log P_exp) - mean(log(1 - P_pol))."""
    pe, pp = _as_tensor(expert_scores), _as_tensor(policy_scores)
    return -C.mean(C.log(pe)) - C.mean(C.log(1.0 - pp))


def accuracy(expert_scores, policy_scores) -> float:
    pe, pp = np.asarray(expert_scores), np.asarray(policy_scores)
    return float(((pe > 0.5).sum() + (pp < 0.5).sum()) / (pe.size + pp.size))


def discriminator_update(params: ParamStore, state: AdamState, expert_x, policy_x, lr: float):
    """One Adam step on the discriminator loss; returns (loss, pre-update accuracy)."""
    params.zero_grad()
    with C.Tape() as tape:
        pe = N.discriminator_score(expert_x, params)
        pp = N.discriminator_score(policy_x, params)
        loss = discriminator_loss(pe, pp)
    C.backward(tape, loss)
    C.adam_step(params, params.grads(), state, lr)
    return loss.item(), accuracy(pe.data, pp.data)


# ------------------------------------------------------------------- module


@dataclass
class IrlStepLog:
    alpha: float
    beta: float
    gen_loss: float | None = None
    disc_loss: float | None = None
    disc_accuracy: float | None = None


@dataclass
class IrlModule:
    """Generator, discriminator and shared coefficients for one training run."""

    env: EnvConfig
    mhsa: N.MhsaConfig
    cfg: IrlConfig
    demos: list
    rng: np.random.Generator
    use_gat: bool = True
    use_mhsa: bool = True
    gen: ParamStore = field(default_factory=ParamStore)
    disc: ParamStore = field(default_factory=ParamStore)
    shared: SharedCoefficients | None = None

    def __post_init__(self):
        if self.cfg.updates and not self.demos:
            raise ConfigError("reward inference needs a non-empty expert demo set")
        if self.shared is None:
            self.shared = SharedCoefficients(1.0, 0.0, self.cfg.decay)
        self.bounds = N.HeadBounds(self.cfg.c_alpha, self.cfg.c_beta)
        self.gen_opt, self.disc_opt = AdamState(), AdamState()
        self.recent: deque = deque(maxlen=self.cfg.baseline_window)
        dim = 2 * self.cfg.l_fix + AUX_DIM
        self.expert_x = np.array([self.features(s) for s in self.demos]).reshape(len(self.demos), dim)

    @classmethod
    def create(cls, env, mhsa, cfg, demos, init_rng, rng, use_gat=True, use_mhsa=True) -> "IrlModule":
        gen, disc = ParamStore(), ParamStore()
        N.init_mhsa(gen, mhsa, init_rng)
        N.init_gat(gen, init_rng, d_g=cfg.d_g)
        N.init_head(gen, mhsa.d, cfg.d_g)
        N.init_discriminator(disc, 2 * cfg.l_fix + AUX_DIM, init_rng, cfg.disc_hidden, cfg.disc_layers)
        return cls(env, mhsa, cfg, list(demos), rng, use_gat, use_mhsa, gen, disc)

    def features(self, seg: TrajectorySegment) -> np.ndarray:
        return resample_segment(seg, self.cfg.l_fix, self.env.world_size, self.env.max_steps)

    def coefficients(self, seg: TrajectorySegment, state):
        """Generator forward for one segment; returns (alpha, beta) tensors."""
        h = q = None
        if self.use_mhsa:
            pts = N.segment_points(seg.points, self.env.world_size, self.mhsa.l_cap)
            h = N.mhsa_forward(N.embed_trajectory(pts, self.gen), self.gen, self.mhsa)
        if self.use_gat:
            agents, tasks = N.graph_features(state, self.env.world_size)
            if len(tasks):
                q = N.gat_forward(agents, tasks, self.gen)[seg.agent]
            else:
                q = Tensor(np.zeros(self.cfg.d_g))
        if h is None and q is None:
            q = Tensor(np.zeros(self.cfg.d_g))  # both encoders ablated: bias-only head
        alpha, beta, _ = N.fuse_and_head(h, q, self.gen, self.bounds)
        return alpha, beta

    def step(self, segments, rewards, completed, state):
        """Adapt this step's rewards and, if enabled, update both networks.

        ``segments`` are the segments closed on this step, ``state`` the
        post-step world (the completion-time graph snapshot).
        """
        rewards = np.asarray(rewards, dtype=float)
        if not segments:
            return rewards.copy(), None
        track = self.cfg.updates
        tape = C.Tape()
        if track:
            self.gen.zero_grad()
            with tape:
                outs = [self.coefficients(seg, state) for seg in segments]
        else:
            outs = [self.coefficients(seg, state) for seg in segments]
        batch = [RewardCoefficients(a.item(), b.item()) for a, b in outs]
        self.shared = update_shared(self.shared, batch)
        adapted = rewards.copy()
        for i in np.flatnonzero(completed):
            adapted[i] = adapt_reward(rewards[i], self.shared, True)
        log = IrlStepLog(self.shared.alpha, self.shared.beta)
        if not track:
            return adapted, log

        policy_x = np.array([self.features(s) for s in segments])
        self.recent.extend(policy_x)
        p_pol = N.discriminator_score(policy_x, self.disc).data
        logp = np.log(np.maximum(p_pol, C.tensor.LOG_CLAMP))
        log.gen_loss = generator_loss(p_pol).item()
        # Centre on recent policy segments scored by the same discriminator, so a
        # discriminator that is still improving does not bias the signal downward.
        p_recent = N.discriminator_score(np.array(self.recent), self.disc).data
        base = float(np.log(np.maximum(p_recent, C.tensor.LOG_CLAMP)).mean())
        with tape:
            weights = Tensor(logp - base)
            r_env = Tensor(np.array([rewards[s.agent] for s in segments]))
            alphas = C.concat([C.reshape(a, (1,)) for a, _ in outs])
            betas = C.concat([C.reshape(b, (1,)) for _, b in outs])
            surrogate = -C.mean(weights * (alphas * r_env + betas))
        C.backward(tape, surrogate)
        C.adam_step(self.gen, self.gen.grads(), self.gen_opt, self.cfg.lr_gen)

        idx = self.rng.integers(0, len(self.expert_x), size=len(segments))
        log.disc_loss, log.disc_accuracy = discriminator_update(
            self.disc, self.disc_opt, self.expert_x[idx], policy_x, self.cfg.lr_disc
        )
        return adapted, log

    def params(self) -> ParamStore:
        return self.gen.merge(self.disc)


# ------------------------------------------------- synthetic separability


def straight_segment(rng, world: float, speed: float, n_steps: int, agent: int = 0) -> TrajectorySegment:
    """Constant-speed straight line that stays inside the world (rejection-sampled heading)."""
    span = speed * n_steps
    if span > world:
        raise ValueError("straight segment longer than the world")
    while True:
        start = rng.uniform(0, world, 2)
        heading = rng.uniform(0, 2 * math.pi)
        end = start + span * np.array([math.cos(heading), math.sin(heading)])
        if (end >= 0).all() and (end <= world).all():
            break
    pts = start + np.linspace(0.0, 1.0, n_steps + 1)[:, None] * (end - start)
    return TrajectorySegment(agent, 0, pts, 0, n_steps)


def random_walk_segment(rng, world: float, speed: float, n_steps: int, n_dir: int = 8,
                        agent: int = 0) -> TrajectorySegment:
    dirs = direction_vectors(n_dir)[:-1]
    pts = [rng.uniform(0, world, 2)]
    for a in rng.integers(0, n_dir, size=n_steps):
        pts.append(np.clip(pts[-1] + speed * dirs[a], 0.0, world))
    return TrajectorySegment(agent, 0, np.array(pts), 0, n_steps)


def synthetic_corpus(rng, n: int, env: EnvConfig, min_len: int = 4, max_len: int = 10):
    """``n`` straight lines (expert) and ``n`` random walks (policy) of 4-9 steps."""
    expert, policy = [], []
    for _ in range(n):
        expert.append(straight_segment(rng, env.world_size, env.speed, int(rng.integers(min_len, max_len))))
        policy.append(random_walk_segment(rng, env.world_size, env.speed, int(rng.integers(min_len, max_len)),
                                          env.n_directions))
    return expert, policy


def discriminator_learnability(seed: int = 0, updates: int = 200, batch: int = 16, lr: float = 3e-3,
                               env: EnvConfig | None = None, mhsa: N.MhsaConfig | None = None):
    """Train the full module on straight-line (expert) vs random-walk (policy) segments.

    Each update is one generator step followed by one discriminator step, as in
    :meth:`IrlModule.step`. Returns held-out accuracy after ``updates`` rounds.
    """
    env = env or EnvConfig(n_agents=3, n_tasks=8, world_size=10.0, speed=1.0, completion_radius=0.6, max_steps=60)
    mhsa = mhsa or N.MhsaConfig(d=16, heads=2, l_cap=32)
    rng = np.random.default_rng(seed)
    expert, policy = synthetic_corpus(rng, 400, env)
    cfg = IrlConfig(lr_gen=lr, lr_disc=lr, d_g=8, disc_hidden=64)
    module = IrlModule.create(env, mhsa, cfg, expert[:300], np.random.default_rng(seed + 1),
                              np.random.default_rng(seed + 2))
    from .env import reset
    state = reset(env, seed)
    rewards = np.full(env.n_agents, env.task_reward)
    completed = np.zeros(env.n_agents, dtype=bool)
    completed[0] = True
    for u in range(updates):
        picks = rng.integers(0, 300, size=batch)
        module.step([policy[p] for p in picks], rewards, completed, state)
    held_e = np.array([module.features(s) for s in expert[300:]])
    held_p = np.array([module.features(s) for s in policy[300:]])
    pe = N.discriminator_score(held_e, module.disc).data
    pp = N.discriminator_score(held_p, module.disc).data
    return accuracy(pe, pp)
