"""Gradient and invariant checks runnable from the CLI (``mata-irl selfcheck``).

Every network's analytic gradients are compared with central finite
differences on random instances; attention and softmax normalizations and
the closed-form values at zero initialization are checked exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core as C
from . import nets as N
from .core import ParamStore, Tensor
from .irl import discriminator_loss
from .marl import AgentNets, actor_objective, critic_loss

FD_STEP = 1e-5
GRAD_TOL = 1e-4
NORM_TOL = 1e-9


@dataclass
class Check:
    name: str
    ok: bool
    value: float
    limit: float

    def line(self) -> str:
        status = "ok" if self.ok else "FAIL"
        return f"{status:4} {self.name:<28} {self.value:.3e} (limit {self.limit:.0e})"


def _grad_error(store: ParamStore, loss_fn) -> float:
    store.zero_grad()
    with C.Tape() as tape:
        loss = loss_fn()
    C.backward(tape, loss)
    worst = 0.0
    for name, t in store.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        numeric = C.numeric_grad(lambda: loss_fn().item(), t.data, FD_STEP)
        worst = max(worst, C.relative_error(analytic, numeric))
    return worst


def _projection(rng, shape):
    """Random fixed weights turning a tensor output into a scalar loss."""
    w = Tensor(rng.normal(size=shape))
    return lambda out: C.sum_(out * w)


def _embedding_case(rng):
    full = ParamStore()
    N.init_mhsa(full, N.MhsaConfig(d=8, heads=2), rng)
    store = ParamStore({n: full[n].data for n in ("mhsa/W_p", "mhsa/b_p", "mhsa/W_t", "mhsa/b_t")})
    pts = rng.uniform(0, 1, (5, 2))
    proj = _projection(rng, (5, 8))
    return store, lambda: proj(N.embed_trajectory(pts, store))


def _mhsa_case(rng):
    cfg = N.MhsaConfig(d=8, heads=2)
    store = ParamStore()
    N.init_mhsa(store, cfg, rng)
    pts = rng.uniform(0, 1, (5, 2))
    proj = _projection(rng, (5, 8))
    return store, lambda: proj(N.mhsa_forward(N.embed_trajectory(pts, store), store, cfg))


def _gat_case(rng):
    store = ParamStore()
    N.init_gat(store, rng, d_g=6)
    agents, tasks = rng.uniform(0, 1, (2, 3)), rng.uniform(0, 1, (3, 3))
    proj = _projection(rng, (2, 6))
    return store, lambda: proj(N.gat_forward(agents, tasks, store))


def _head_case(rng):
    store = ParamStore()
    N.init_head(store, 4, 3)
    for _, t in store.items():
        t.data = rng.normal(scale=0.5, size=t.shape)
    h, q = Tensor(rng.normal(size=(5, 4))), Tensor(rng.normal(size=3))
    wa, wb = rng.normal(size=2)

    def loss():
        alpha, beta, _ = N.fuse_and_head(h, q, store, N.HeadBounds())
        return alpha * wa + beta * wb

    return store, loss


def _disc_case(rng):
    store = ParamStore()
    N.init_discriminator(store, 10, rng, hidden=8)
    xe, xp = rng.uniform(0, 1, (3, 10)), rng.uniform(0, 1, (3, 10))
    return store, lambda: discriminator_loss(N.discriminator_score(xe, store), N.discriminator_score(xp, store))


def _marl_batch(rng, nets, b=4):
    return {
        "s": rng.uniform(0, 1, (b, nets.state_dim)), "a": rng.integers(0, nets.n_actions, (b, nets.n_agents)),
        "r": rng.normal(size=(b, nets.n_agents)), "s2": rng.uniform(0, 1, (b, nets.state_dim)),
        "done": np.zeros(b),
    }


def _actor_case(rng):
    nets = AgentNets.create(2, 9, 9, 6, rng, rng)
    batch = _marl_batch(rng, nets)
    return nets.actor, lambda: actor_objective(batch, nets, 0.01)


def _critic_case(rng):
    nets = AgentNets.create(2, 9, 9, 6, rng, rng)
    batch = _marl_batch(rng, nets)
    targets = rng.normal(size=(4, 2))
    return nets.critic, lambda: critic_loss(batch, nets, 0.95, targets=targets)


GRADIENT_CASES = {
    "embedding": _embedding_case, "mhsa": _mhsa_case, "gat": _gat_case, "reward_head": _head_case,
    "discriminator": _disc_case, "actor": _actor_case, "critic": _critic_case,
}


def gradient_suite(instances: int = 10, seed: int = 0) -> list[Check]:
    out = []
    for k, (name, build) in enumerate(GRADIENT_CASES.items()):
        rng = np.random.default_rng([seed, k])
        worst = max(_grad_error(*build(rng)) for _ in range(instances))
        out.append(Check(f"gradient/{name}", worst < GRAD_TOL, worst, GRAD_TOL))
    return out


def normalization_suite(instances: int = 100, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    soft = att = gat = 0.0
    cfg = N.MhsaConfig(d=8, heads=2)
    for _ in range(instances):
        x = Tensor(rng.normal(scale=3.0, size=(int(rng.integers(1, 8)), int(rng.integers(1, 8)))))
        soft = max(soft, np.abs(C.softmax_rows(x).data.sum(axis=1) - 1).max())
        store = ParamStore()
        N.init_mhsa(store, cfg, rng)
        _, weights = N.mhsa_forward(N.embed_trajectory(rng.uniform(0, 1, (int(rng.integers(1, 12)), 2)), store),
                                    store, cfg, return_attention=True)
        att = max(att, max(np.abs(w.sum(axis=1) - 1).max() for w in weights))
        gstore = ParamStore()
        N.init_gat(gstore, rng, d_g=6)
        _, alpha = N.gat_forward(rng.uniform(0, 1, (int(rng.integers(1, 6)), 3)),
                                 rng.uniform(0, 1, (int(rng.integers(1, 9)), 3)), gstore, return_attention=True)
        gat = max(gat, np.abs(alpha.sum(axis=1) - 1).max())
    return [Check("normalization/softmax", soft <= NORM_TOL, soft, NORM_TOL),
            Check("normalization/mhsa", att <= NORM_TOL, att, NORM_TOL),
            Check("normalization/gat", gat <= NORM_TOL, gat, NORM_TOL)]


def closed_form_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    disc = ParamStore()
    N.init_discriminator(disc, 38, rng)
    for _, t in disc.items():
        t.data[...] = 0.0
    pe = N.discriminator_score(rng.uniform(0, 1, (6, 38)), disc)
    pp = N.discriminator_score(rng.uniform(0, 1, (6, 38)), disc)
    loss_gap = abs(discriminator_loss(pe, pp).item() - 2 * math.log(2))
    half_gap = float(max(np.abs(pe.data - 0.5).max(), np.abs(pp.data - 0.5).max()))
    head = ParamStore()
    N.init_head(head, 8, 6)
    alpha, beta, _ = N.fuse_and_head(Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=6)), head,
                                     N.HeadBounds())
    ident_gap = abs(alpha.item() - 1.0) + abs(beta.item())
    return [Check("closed_form/disc_loss", loss_gap <= 1e-9, loss_gap, 1e-9),
            Check("closed_form/disc_half", half_gap == 0.0, half_gap, 0.0),
            Check("closed_form/head_identity", ident_gap == 0.0, ident_gap, 0.0)]


def run_all() -> list[Check]:
    return gradient_suite() + normalization_suite() + closed_form_suite()
