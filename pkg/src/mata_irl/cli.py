"""``mata-irl`` command line.

Failures print one JSON line ``{"error": kind, "message": ...}`` on stderr and
exit nonzero: 2 usage, 3 configuration, 4 bad input data, 1 failed check.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .env import ObjectiveWeights, read_log, score_objective, validate_constraints
from .errors import ConfigError, ContractError, DimensionError
from .expert import generate_demos

EXIT_CHECK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA = 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind, self.code = kind, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _config(path: str, args=None):
    cfg = load_config(path)
    if args is not None and any(getattr(args, f, False) for f in ("no_gat", "no_mhsa", "no_irl")):
        ab = dataclasses.replace(cfg.ablation, **{f: True for f in ("no_gat", "no_mhsa", "no_irl")
                                                  if getattr(args, f, False)})
        cfg = cfg.replace(ablation=ab)
    if args is not None and getattr(args, "freeze_irl", False):
        cfg = cfg.replace(irl__updates=False)
    return cfg


def cmd_gen_demos(args) -> int:
    cfg = _config(args.config)
    demos = generate_demos(cfg.env, args.episodes, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    demos.save(args.out)
    _emit({"demos": str(args.out), "episodes": args.episodes, "segments": len(demos)})
    return 0


def cmd_train(args) -> int:
    from .harness import last_k_mean, run_training

    cfg = _config(args.config, args)
    record = run_training(cfg, args.seed, out_dir=args.out)
    _emit({"run_dir": str(args.out), "config_hash": cfg.config_hash(), "seed": args.seed,
           "ablation": cfg.ablation.label, "last50": last_k_mean(record)})
    return 0


def cmd_evaluate(args) -> int:
    from .harness import EVAL_COLUMNS, eval_rows, evaluate, write_csv

    cfg = _config(args.config, args)
    if not Path(args.checkpoint).exists():
        raise CliError("missing_file", f"checkpoint not found: {args.checkpoint}", EXIT_CONFIG)
    metrics = evaluate(cfg, args.checkpoint, args.episodes, args.seed)
    rows = eval_rows(metrics)
    if args.out:
        write_csv(args.out, EVAL_COLUMNS, rows)
    else:
        write_csv("/dev/stdout", EVAL_COLUMNS, rows)
    return 0


def cmd_grid(args) -> int:
    from .harness import grid

    cfg = _config(args.config, args)
    stats = grid(cfg, args.agents, args.tasks, list(range(args.seeds)), args.out, workers=args.workers)
    print(stats.table())
    return 0


def cmd_validate(args) -> int:
    log = read_log(args.log)
    report = validate_constraints(log)
    score = score_objective(log, ObjectiveWeights(args.alpha, args.beta))
    _emit({"log": str(args.log), "violations": [{"kind": k, "detail": m} for k, m in report.violations],
           "objective": score})
    return 0 if report.ok else EXIT_CHECK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_all

    checks = run_all()
    for c in checks:
        print(c.line())
    return 0 if all(c.ok for c in checks) else EXIT_CHECK


def cmd_scaling(args) -> int:
    from .harness import scaling_probe, scaling_rows, write_csv

    cfg = _config(args.config)
    results = scaling_probe(cfg)
    rows = scaling_rows(results)
    write_csv(args.out or "/dev/stdout", ("axis", "size", "seconds", "exponent"), rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mata-irl", description="Adversarial reward inference for multi-agent task allocation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def ablation_flags(sp):
        sp.add_argument("--no-gat", action="store_true", help="drop the agent-task graph encoder")
        sp.add_argument("--no-mhsa", action="store_true", help="drop the trajectory self-attention encoder")
        sp.add_argument("--no-irl", action="store_true", help="train on environment rewards only")

    sp = sub.add_parser("gen-demos", help="generate expert demonstration segments")
    sp.add_argument("--config", required=True)
    sp.add_argument("--episodes", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen_demos)

    sp = sub.add_parser("train", help="train one seed into a run directory")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    ablation_flags(sp)
    sp.add_argument("--freeze-irl", action="store_true", help="keep generator and discriminator fixed")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("evaluate", help="evaluate a frozen checkpoint on environment rewards")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--episodes", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", help="CSV path (default: stdout)")
    sp.add_argument("--no-irl", action="store_true", help="do not run the reward module alongside")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("grid", help="train every agents x tasks cell for several seeds")
    sp.add_argument("--config", required=True)
    sp.add_argument("--agents", type=_int_list, required=True)
    sp.add_argument("--tasks", type=_int_list, required=True)
    sp.add_argument("--seeds", type=int, required=True, help="repetitions per cell (seeds 0..k-1)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=1)
    ablation_flags(sp)
    sp.set_defaults(fn=cmd_grid)

    sp = sub.add_parser("validate", help="check an episode log against the allocation constraints")
    sp.add_argument("--log", required=True)
    sp.add_argument("--alpha", type=float, default=1.0, help="energy weight of the objective")
    sp.add_argument("--beta", type=float, default=1.0, help="time weight of the objective")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("selfcheck", help="run the gradient and invariant checks")
    sp.set_defaults(fn=cmd_selfcheck)

    sp = sub.add_parser("scaling", help="time the reward encoders under growing L, m, n")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="CSV path (default: stdout)")
    sp.set_defaults(fn=cmd_scaling)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except CliError as exc:
        err = (exc.kind, str(exc), exc.code)
    except ConfigError as exc:
        err = ("config", str(exc), EXIT_CONFIG)
    except (ContractError, DimensionError) as exc:
        err = ("data", str(exc), EXIT_DATA)
    except FileNotFoundError as exc:
        err = ("missing_file", f"{exc.filename}: not found", EXIT_CONFIG)
    print(json.dumps({"error": err[0], "message": err[1]}), file=sys.stderr)
    return err[2]


if __name__ == "__main__":
    sys.exit(main())
