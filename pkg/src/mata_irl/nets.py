"""Network blocks built on :mod:`mata_irl.core`.

Weights follow the ``out x in`` convention (``y = x W^T + b``) and live in a
shared :class:`ParamStore` under a namespace prefix (``mhsa/``, ``gat/``,
``head/``, ``disc/``, ``actor/``, ``critic/``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core as C
from .core import ParamStore, Tensor
from .errors import ContractError, DimensionError


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {w.shape}")
    y = C.matmul(x, C.transpose(w))
    return y if b is None else y + b


# ------------------------------------------------------------------- MHSA


@dataclass(frozen=True)
class MhsaConfig:
    d: int = 32
    heads: int = 4
    l_cap: int = 64

    def __post_init__(self):
        if self.d < 1 or self.heads < 1 or self.d % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide d ({self.d})")

    @property
    def d_head(self) -> int:
        return self.d // self.heads


def init_mhsa(store: ParamStore, cfg: MhsaConfig, rng: np.random.Generator, prefix: str = "mhsa/") -> None:
    d, hd = cfg.d, cfg.heads * cfg.d_head
    store.add(prefix + "W_p", uniform_init(rng, (d, 2), 2))
    store.add(prefix + "b_p", uniform_init(rng, (d,), 2))
    store.add(prefix + "W_t", uniform_init(rng, (d, 2), 2))
    store.add(prefix + "b_t", uniform_init(rng, (d,), 2))
    # per-head projections stacked column-wise: head n owns columns n*d_head:(n+1)*d_head
    for name in ("W_Q", "W_K", "W_V"):
        store.add(prefix + name, uniform_init(rng, (d, hd), d))
    store.add(prefix + "W_O", uniform_init(rng, (hd, d), hd))


def subsample(points: np.ndarray, l_cap: int) -> np.ndarray:
    """Keep at most ``l_cap`` points, evenly spaced by index, ends included."""
    if len(points) <= l_cap:
        return points
    idx = np.round(np.linspace(0, len(points) - 1, l_cap)).astype(int)
    return points[idx]


def segment_points(points, world_size: float, l_cap: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return subsample(pts, l_cap) / world_size


def embed_trajectory(points, params: ParamStore, prefix: str = "mhsa/") -> Tensor:
    """Row i: relu(W_p [x_i, y_i] + b_p) + W_t [1, i/L] + b_t, for i = 1..L."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ContractError("cannot embed an empty trajectory segment")
    n = len(pts)
    timing = np.column_stack([np.ones(n), np.arange(1, n + 1) / n])
    coord = C.relu(linear(Tensor(pts), params[prefix + "W_p"], params[prefix + "b_p"]))
    return coord + linear(Tensor(timing), params[prefix + "W_t"], params[prefix + "b_t"])


def mhsa_forward(eb: Tensor, params: ParamStore, cfg: MhsaConfig, prefix: str = "mhsa/",
                 return_attention: bool = False):
    if eb.data.ndim != 2 or eb.shape[1] != cfg.d:
        raise DimensionError(f"mhsa: embedding shape {eb.shape} does not match d={cfg.d}")
    q = C.matmul(eb, params[prefix + "W_Q"])
    k = C.matmul(eb, params[prefix + "W_K"])
    v = C.matmul(eb, params[prefix + "W_V"])
    scale = 1.0 / math.sqrt(cfg.d_head)
    heads, weights = [], []
    for n in range(cfg.heads):
        cols = slice(n * cfg.d_head, (n + 1) * cfg.d_head)
        qn, kn, vn = q[:, cols], k[:, cols], v[:, cols]
        att = C.softmax_rows(C.matmul(qn, C.transpose(kn)) * scale)
        weights.append(att.data)
        heads.append(C.matmul(att, vn))
    out = C.matmul(C.concat(heads, axis=1), params[prefix + "W_O"])
    return (out, weights) if return_attention else out


# -------------------------------------------------------------------- GAT

NODE_DIM = 3


def init_gat(store: ParamStore, rng: np.random.Generator, d_in: int = NODE_DIM, d_g: int = 32,
             prefix: str = "gat/") -> None:
    store.add(prefix + "W", uniform_init(rng, (d_g, d_in), d_in))
    store.add(prefix + "a", uniform_init(rng, (2 * d_g,), 2 * d_g))
    store.add(prefix + "M_W", uniform_init(rng, (d_g, 2 * d_in), 2 * d_in))
    store.add(prefix + "M_b", uniform_init(rng, (d_g,), 2 * d_in))
    store.add(prefix + "W_q", uniform_init(rng, (d_g, d_in), d_in))


def graph_features(state, world_size: float) -> tuple[np.ndarray, np.ndarray]:
    """Agent rows [x, y, busy]; rows [x, y, done] for tasks not yet done."""
    agents = np.column_stack([state.agent_pos / world_size, state.agent_busy.astype(float)])
    open_tasks = ~state.task_done
    tasks = np.column_stack([state.task_pos[open_tasks] / world_size, np.zeros(open_tasks.sum())])
    return agents, tasks


def gat_forward(agent_feats, task_feats, params: ParamStore, prefix: str = "gat/",
                return_attention: bool = False):
    """One attention round over the full agent-task bipartite graph.

    Since the attention weights of each agent sum to one, the aggregated
    message sum_k alpha_ik (M_W [q_i || q_k] + M_b) is computed as
    M_W^a q_i + M_b + sum_k alpha_ik M_W^t q_k, linear in the number of tasks.
    """
    agents = agent_feats if isinstance(agent_feats, Tensor) else Tensor(agent_feats)
    tasks = task_feats if isinstance(task_feats, Tensor) else Tensor(task_feats)
    if tasks.data.ndim != 2 or tasks.shape[0] == 0:
        raise ContractError("gat_forward needs at least one open task as neighbor")
    w, a = params[prefix + "W"], params[prefix + "a"]
    d_in = w.shape[1]
    if agents.shape[1] != d_in or tasks.shape[1] != d_in:
        raise DimensionError(f"gat: node features {agents.shape}/{tasks.shape} vs W {w.shape}")
    d_g = w.shape[0]
    wa, wt = linear(agents, w), linear(tasks, w)
    s_agent = C.matmul(wa, C.reshape(a[:d_g], (d_g, 1)))
    s_task = C.matmul(wt, C.reshape(a[d_g:], (d_g, 1)))
    logits = C.leaky_relu(s_agent + C.transpose(s_task))
    alpha = C.softmax_rows(logits)
    m_w = params[prefix + "M_W"]
    msg = linear(agents, m_w[:, :d_in], params[prefix + "M_b"]) + C.matmul(alpha, linear(tasks, m_w[:, d_in:]))
    out = C.relu(linear(agents, params[prefix + "W_q"]) + msg)
    return (out, alpha.data) if return_attention else out


# ------------------------------------------------------------- reward head


@dataclass(frozen=True)
class HeadBounds:
    c_alpha: float = 0.5
    c_beta: float = 1.0


def init_head(store: ParamStore, d: int, d_g: int, prefix: str = "head/") -> None:
    store.add(prefix + "W_r", np.zeros((2, d + d_g)))
    store.add(prefix + "b_r", np.zeros(2))


def fuse_and_head(h: Tensor | None, q_prime: Tensor | None, params: ParamStore, bounds: HeadBounds,
                  prefix: str = "head/"):
    """Returns ``(alpha, beta, fused)``; a missing branch contributes zeros."""
    w_r = params[prefix + "W_r"]
    if h is None and q_prime is None:
        raise ContractError("fuse_and_head needs at least one feature branch")
    d_total = w_r.shape[1]
    if h is not None:
        h_bar = C.mean(h, axis=0)
        q_part = q_prime if q_prime is not None else Tensor(np.zeros(d_total - h_bar.shape[0]))
        fused = C.concat([h_bar, C.reshape(q_part, (-1,))], axis=0)
    else:
        q_flat = C.reshape(q_prime, (-1,))
        fused = C.concat([Tensor(np.zeros(d_total - q_flat.shape[0])), q_flat], axis=0)
    if fused.shape[0] != d_total:
        raise DimensionError(f"fused feature has {fused.shape[0]} entries, head expects {d_total}")
    raw = C.reshape(C.matmul(w_r, C.reshape(fused, (d_total, 1))), (2,)) + params[prefix + "b_r"]
    alpha = 1.0 + C.tanh(raw[0]) * bounds.c_alpha
    beta = C.tanh(raw[1]) * bounds.c_beta
    return alpha, beta, fused


# ------------------------------------------------------------ MLP bodies


def init_mlp(store: ParamStore, sizes, rng: np.random.Generator, prefix: str) -> None:
    for n, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        store.add(f"{prefix}W{n}", uniform_init(rng, (fan_out, fan_in), fan_in))
        store.add(f"{prefix}b{n}", uniform_init(rng, (fan_out,), fan_in))


def mlp_layers(params: ParamStore, prefix: str) -> int:
    n = 0
    while f"{prefix}W{n + 1}" in params:
        n += 1
    return n


def mlp_forward(x, params: ParamStore, prefix: str, final: str = "linear") -> Tensor:
    """relu MLP; ``final`` is "linear", "log_softmax" or "sigmoid"."""
    h = x if isinstance(x, Tensor) else Tensor(x)
    n = mlp_layers(params, prefix)
    if n == 0:
        raise ContractError(f"no layers under prefix {prefix!r}")
    for layer in range(1, n + 1):
        h = linear(h, params[f"{prefix}W{layer}"], params[f"{prefix}b{layer}"])
        if layer < n:
            h = C.relu(h)
    if final == "log_softmax":
        return C.log_softmax_rows(h)
    if final == "sigmoid":
        return C.sigmoid(h)
    return h


def init_discriminator(store: ParamStore, in_dim: int, rng: np.random.Generator, hidden: int = 64,
                       layers: int = 3, prefix: str = "disc/") -> None:
    init_mlp(store, [in_dim] + [hidden] * (layers - 1) + [1], rng, prefix)


def discriminator_score(tau, params: ParamStore, prefix: str = "disc/") -> Tensor:
    """Expert-consistency probability per row of ``tau``; shape (B,)."""
    x = tau if isinstance(tau, Tensor) else Tensor(tau)
    if x.data.ndim == 1:
        x = C.reshape(x, (1, -1))
    p = mlp_forward(x, params, prefix, final="sigmoid")
    return C.reshape(p, (x.shape[0],))
