"""Training runs, run directories, evaluation, grid summaries and scaling probes."""
from __future__ import annotations

import csv
import dataclasses
import gc
import io
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core as C
from . import nets as N
from .config import RunConfig, save_config
from .core import ParamStore, load_checkpoint, save_checkpoint
from .env import EnvConfig, EpisodeMetrics
from .errors import ConfigError
from .expert import DemoDataset, generate_demos
from .irl import IrlModule
from .marl import COEF_COLUMNS, EPISODE_COLUMNS, RunRecord, evaluate_policy, train
from .seeding import stream

RUN_FILES = ("config.json", "metrics.csv", "coefficients.csv", "checkpoint.bin", "summary.json")
EVAL_COLUMNS = ("episode", "cumulative_reward", "timesteps", "total_distance")
SUMMARY_METRICS = ("cumulative_reward", "timesteps", "total_distance")


def fmt(value) -> str:
    """CSV cell: 9 significant digits for floats, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in csv.DictReader(fh)]


# --------------------------------------------------------------- training


def load_demos(cfg: RunConfig) -> DemoDataset:
    path = cfg.demo_path()
    if path is None or not path.exists():
        raise ConfigError(f"reward inference is enabled but the demo file is missing: {path}")
    demos = DemoDataset.load(path)
    if demos.config is not None and demos.config != cfg.env:
        raise ConfigError(f"{path}: demos were generated for a different environment config")
    return demos


def build_irl(cfg: RunConfig, seed: int, demos) -> IrlModule:
    segments = demos.segments if isinstance(demos, DemoDataset) else list(demos)
    return IrlModule.create(cfg.env, cfg.mhsa, cfg.irl, segments, stream(seed, "init-irl"), stream(seed, "irl"),
                            use_gat=not cfg.ablation.no_gat, use_mhsa=not cfg.ablation.no_mhsa)


def run_training(cfg: RunConfig, seed: int, demos=None, out_dir=None, progress=None) -> RunRecord:
    """Train one seed; with ``out_dir`` also write the run directory."""
    irl = None
    if not cfg.ablation.no_irl:
        if demos is None:
            demos = load_demos(cfg)
        irl = build_irl(cfg, seed, demos)
    record = train(cfg.env, cfg.marl, seed, irl=irl, progress=progress)
    if out_dir is not None:
        write_run_dir(out_dir, cfg, seed, record)
    return record


def last_k_mean(record: RunRecord, k: int = 50) -> dict:
    """Per-run metric summary: means over the final ``k`` episodes."""
    tail = record.episodes[-k:]
    if not tail:
        return {m: None for m in SUMMARY_METRICS}
    return {m: float(np.mean([row[m] for row in tail])) for m in SUMMARY_METRICS}


def write_run_dir(out_dir, cfg: RunConfig, seed: int, record: RunRecord) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    write_csv(out / "metrics.csv", EPISODE_COLUMNS, record.episodes)
    write_csv(out / "coefficients.csv", COEF_COLUMNS, record.coefficients)
    ckpt = out / "checkpoint.bin"
    save_checkpoint(ckpt, record.params)
    summary = {
        "config_hash": cfg.config_hash(),
        "seed": seed,
        "ablation": cfg.ablation.label,
        "episodes": len(record.episodes),
        "wall_clock_seconds": round(record.wall_clock, 3),
        "checkpoint": str(ckpt),
        "last50": last_k_mean(record),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return out


# ------------------------------------------------------------- evaluation


def evaluate(cfg: RunConfig, checkpoint, episodes: int, seed: int, with_irl: bool | None = None) -> list[EpisodeMetrics]:
    """Frozen-policy evaluation on environment rewards.

    ``with_irl`` defaults to the config's setting; when on, a frozen reward
    module (weights from the checkpoint when present) runs alongside.
    """
    params = checkpoint if isinstance(checkpoint, ParamStore) else load_checkpoint(checkpoint)
    actor = params.subset("actor/")
    if not len(actor):
        raise ConfigError("checkpoint holds no actor parameters")
    if with_irl is None:
        with_irl = not cfg.ablation.no_irl
    irl = None
    if with_irl:
        frozen = cfg.replace(irl__updates=False)
        irl = build_irl(frozen, seed, [])
        mine = irl.params()
        present = {n: params[n].data for n in mine.names() if n in params}
        if len(present) == len(mine):
            mine.load_arrays(present)
    return evaluate_policy(actor, cfg.env, episodes, seed, irl=irl)


def eval_rows(metrics: list[EpisodeMetrics]) -> list[dict]:
    return [{"episode": e, **m.row()} for e, m in enumerate(metrics)]


# ---------------------------------------------------------------- summary


@dataclass
class CellStats:
    cell: str
    metric: str
    n: int
    mean: float
    std: float | None  # sample standard deviation; None for a single record


@dataclass
class SummaryStats:
    rows: list = field(default_factory=list)

    def get(self, cell: str, metric: str) -> CellStats:
        for r in self.rows:
            if r.cell == cell and r.metric == metric:
                return r
        raise KeyError((cell, metric))

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "metric", "n", "mean", "sample_std"])
        for r in self.rows:
            w.writerow([r.cell, r.metric, r.n, fmt(r.mean), fmt(r.std)])
        return buf.getvalue()

    def table(self) -> str:
        """Human table, mean ± sample standard deviation to 2 decimals."""
        width = max([len(r.cell) for r in self.rows] + [4])
        lines = [f"{'cell':<{width}}  {'metric':<18}  mean ± sample std"]
        for r in self.rows:
            dev = f"± {r.std:.2f}" if r.std is not None else "(single record, no deviation)"
            lines.append(f"{r.cell:<{width}}  {r.metric:<18}  {r.mean:.2f} {dev}")
        return "\n".join(lines)


def summarize(cells: dict) -> SummaryStats:
    """``cells`` maps a cell label to a list of per-run metric dicts."""
    stats = SummaryStats()
    for cell, records in cells.items():
        if not records:
            continue
        for metric in records[0]:
            values = [float(r[metric]) for r in records]
            std = statistics.stdev(values) if len(values) > 1 else None
            stats.rows.append(CellStats(cell, metric, len(values), statistics.fmean(values), std))
    return stats


# ------------------------------------------------------------------- grid


def cell_label(n_agents: int, n_tasks: int) -> str:
    return f"N{n_agents}_M{n_tasks}"


def _grid_job(args):
    cfg_dict, base_dir, n, m, seed, run_dir, demo_file = args
    cfg = RunConfig.from_dict(cfg_dict, base_dir=base_dir)
    demos = DemoDataset.load(demo_file) if demo_file else None
    record = run_training(cfg, seed, demos=demos, out_dir=run_dir)
    return (n, m, seed), last_k_mean(record)


def grid(cfg: RunConfig, agents, tasks, seeds, out_dir, workers: int = 1) -> SummaryStats:
    """Train every (N, M) cell with N <= M for each seed, then summarize.

    Output depends only on (config, grid, seeds): each run writes into its own
    directory and results are collected in cell/seed order after all finish.
    """
    out = Path(out_dir)
    jobs = []
    for n in agents:
        for m in tasks:
            if n > m:
                continue
            env = dataclasses.replace(cfg.env, n_agents=n, n_tasks=m)
            cell_cfg = cfg.replace(env=env)
            cell_dir = out / cell_label(n, m)
            cell_dir.mkdir(parents=True, exist_ok=True)
            demo_file = None
            if not cfg.ablation.no_irl:
                demo_file = cell_dir / "demos.jsonl"
                generate_demos(env, cfg.demos.episodes, cfg.demos.seed).save(demo_file)
            for s in seeds:
                jobs.append((cell_cfg.to_dict(), cfg.base_dir, n, m, s, cell_dir / f"seed_{s}",
                             str(demo_file) if demo_file else None))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_grid_job, jobs))
    else:
        results = dict(map(_grid_job, jobs))
    cells: dict = {}
    for (n, m, s), metrics in sorted(results.items()):
        cells.setdefault(cell_label(n, m), []).append(metrics)
    stats = summarize(cells)
    (out / "summary.csv").write_text(stats.csv_text(), encoding="utf-8")
    (out / "summary.txt").write_text(stats.table() + "\n", encoding="utf-8")
    return stats


# --------------------------------------------------------- scaling probe


@dataclass
class ScalingResult:
    axis: str
    sizes: list
    seconds: list

    def ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.seconds, self.seconds[1:])]

    def exponent(self) -> float:
        """Least-squares slope of log time against log size."""
        return float(np.polyfit(np.log(self.sizes), np.log(self.seconds), 1)[0])


def _interleaved_medians(fns: list, repeats: int) -> list[float]:
    """Median wall time of each workload, timed round-robin with GC paused.

    Visiting every workload once per round spreads slow drifts in machine
    speed evenly across sizes, so ratios between sizes stay stable.
    """
    for fn in fns:
        fn()  # warm-up
    times: list[list[float]] = [[] for _ in fns]
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repeats):
            for fn, acc in zip(fns, times):
                t0 = time.perf_counter()
                fn()
                acc.append(time.perf_counter() - t0)
    finally:
        if was_enabled:
            gc.enable()
    return [statistics.median(t) for t in times]


def _fwd_bwd(store: ParamStore, forward):
    def run():
        store.zero_grad()
        with C.Tape() as tape:
            loss = C.sum_(forward())
        C.backward(tape, loss)
    return run


def mhsa_workload(length: int, mhsa: N.MhsaConfig, seed: int = 0):
    """Zero-argument callable running one MHSA forward and backward pass."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    N.init_mhsa(store, mhsa, rng)
    pts = rng.uniform(0, 1, (length, 2))
    return _fwd_bwd(store, lambda: N.mhsa_forward(N.embed_trajectory(pts, store), store, mhsa))


def gat_workload(n_agents: int, n_tasks: int, d_g: int = 32, seed: int = 0):
    """Zero-argument callable running one GAT forward and backward pass."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    N.init_gat(store, rng, d_g=d_g)
    agents = rng.uniform(0, 1, (n_agents, N.NODE_DIM))
    tasks = rng.uniform(0, 1, (n_tasks, N.NODE_DIM))
    return _fwd_bwd(store, lambda: N.gat_forward(agents, tasks, store))


def time_mhsa(length: int, mhsa: N.MhsaConfig, repeats: int = 5, seed: int = 0) -> float:
    return _interleaved_medians([mhsa_workload(length, mhsa, seed)], repeats)[0]


def time_gat(n_agents: int, n_tasks: int, d_g: int = 32, repeats: int = 5, seed: int = 0) -> float:
    return _interleaved_medians([gat_workload(n_agents, n_tasks, d_g, seed)], repeats)[0]


# Large enough that the asymptotic term dominates interpreter overhead. L stops
# at 768 so every (heads, L, L) attention tensor stays within a typical server
# L3 cache; past that the last doubling also measures the cache cliff.
DEFAULT_SIZES = {"L": [192, 384, 768], "m": [2048, 4096, 8192], "n": [1024, 2048, 4096]}


def scaling_probe(cfg: RunConfig, sizes: dict | None = None, base_n: int = 64, base_m: int = 64,
                  repeats: int = 9) -> dict[str, ScalingResult]:
    """Time the reward-inference encoders along each axis with the others fixed.

    L drives the trajectory MHSA (quadratic); m and n drive the agent-task GAT
    (linear in each at fixed other side). Sizes on one axis are timed
    interleaved so their ratios share the same machine conditions.
    """
    sizes = {**DEFAULT_SIZES, **(sizes or {})}
    for axis, values in sizes.items():
        if len(values) < 3:
            raise ConfigError(f"scaling axis {axis} needs at least 3 sizes")
    mhsa = dataclasses.replace(cfg.mhsa, l_cap=max(sizes["L"]))
    d_g = cfg.irl.d_g
    workloads = {
        "L": [mhsa_workload(L, mhsa) for L in sizes["L"]],
        "m": [gat_workload(base_n, m, d_g) for m in sizes["m"]],
        "n": [gat_workload(n, base_m, d_g) for n in sizes["n"]],
    }
    return {axis: ScalingResult(axis, list(sizes[axis]), _interleaved_medians(fns, repeats))
            for axis, fns in workloads.items()}


def probe_repeatability(cfg: RunConfig, trials: int = 3, length: int = 768, n: int = 64, m: int = 2048,
                        repeats: int = 7) -> dict[str, list[float]]:
    """Timings of each component at one fixed size, measured ``trials`` times."""
    mhsa = dataclasses.replace(cfg.mhsa, l_cap=length)
    return {
        "mhsa": [time_mhsa(length, mhsa, repeats) for _ in range(trials)],
        "gat": [time_gat(n, m, cfg.irl.d_g, repeats) for _ in range(trials)],
    }


def scaling_rows(results: dict[str, ScalingResult]) -> list[dict]:
    rows = []
    for r in results.values():
        for size, sec in zip(r.sizes, r.seconds):
            rows.append({"axis": r.axis, "size": size, "seconds": sec, "exponent": r.exponent()})
    return rows
