"""Command-line entry point: ``python -m gridsoccer <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from gridsoccer import nn
from gridsoccer.env import ConfigError, ContractError, EnvConfig, read_trace, render_ascii, state_from_record
from gridsoccer.harness.config import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    def __init__(self, message: str, usage: str | None = None):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}", self.format_usage())


def _load_config(args) -> TrainConfig:
    if args.config is None:
        raise UsageError("--config is required")
    try:
        cfg = TrainConfig.load(args.config)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}")
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "timesteps", None) is not None:
        cfg.total_timesteps = args.timesteps
    return cfg.validate()


def cmd_train(args) -> int:
    from gridsoccer.harness.runner import train

    if args.print_defaults:
        print(TrainConfig().dump(), end="")
        return EXIT_OK
    if args.resume is not None:
        session = train(TrainConfig(), args.out, resume=args.resume, until=args.timesteps)
    else:
        cfg = _load_config(args)
        if args.out is None:
            raise UsageError("--out is required")
        session = train(cfg, args.out)
    last = session.rows()[-1] if session.rows() else None
    ratio = "n/a" if last is None or last.goal_ratio is None else f"{last.goal_ratio:.3f}"
    print(f"trained {session.timestep} timesteps, goal_ratio={ratio}, output in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from gridsoccer.harness.runner import evaluate

    cfg = None
    if args.config is not None:
        cfg = _load_config(args)
    report = evaluate(args.a, args.b, args.goals, cfg)
    print(report.line())
    return EXIT_OK


def cmd_adversarial(args) -> int:
    from gridsoccer.env import Team
    from gridsoccer.harness.runner import adversarial_train

    cfg = _load_config(args)
    session = adversarial_train(cfg, args.a, args.b, out_dir=args.out)
    for team, label in ((Team.LEFT, "a"), (Team.RIGHT, "b")):
        ratio = session.stats[team].window.ratio()
        print(f"{label}: goal_ratio={'n/a' if ratio is None else f'{ratio:.3f}'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from gridsoccer.gradcheck import format_report, run_suite

    results = run_suite(seed=args.seed if args.seed is not None else 0, configs=args.configs)
    print(format_report(results))
    return EXIT_OK if all(r.ok for r in results) else EXIT_RUNTIME


def cmd_replay(args) -> int:
    try:
        with open(args.trace) as fh:
            records = list(read_trace(fh))
    except FileNotFoundError:
        raise UsageError(f"trace file not found: {args.trace}")
    if not records or records[0].get("type") != "header":
        raise ValueError(f"{args.trace}: missing trace header")
    config = EnvConfig.from_mapping(records[0]["env"])
    steps = records[1:]
    for rec in steps[: args.limit] if args.limit else steps:
        state = state_from_record(config, rec)
        print(f"t={rec['timestep']} score={rec['score'][0]}-{rec['score'][1]} actions={rec['actions']}")
        print(render_ascii(state))
        if args.delay:
            time.sleep(args.delay)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridsoccer", description="Grid soccer multi-agent training harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train a protocol against an opponent")
    t.add_argument("--config")
    t.add_argument("--out")
    t.add_argument("--seed", type=int)
    t.add_argument("--timesteps", type=int, help="override total_timesteps (or resume target)")
    t.add_argument("--resume", help="checkpoint directory with state.pkl")
    t.add_argument("--print-defaults", action="store_true")
    t.set_defaults(parser=t, func=cmd_train)

    e = sub.add_parser("eval", help="play a match and report the goal ratio of --a")
    e.add_argument("--a", required=True)
    e.add_argument("--b", required=True)
    e.add_argument("--goals", type=int, default=200)
    e.add_argument("--config", help="board and seed for handcoded/random matches")
    e.add_argument("--seed", type=int)
    e.set_defaults(parser=e, func=cmd_eval)

    a = sub.add_parser("adversarial", help="continue training two checkpoints against each other")
    a.add_argument("--a", required=True)
    a.add_argument("--b", required=True)
    a.add_argument("--config", required=True)
    a.add_argument("--out")
    a.add_argument("--seed", type=int)
    a.add_argument("--timesteps", type=int)
    a.set_defaults(parser=a, func=cmd_adversarial)

    g = sub.add_parser("gradcheck", help="finite-difference check of every layer and network")
    g.add_argument("--seed", type=int)
    g.add_argument("--configs", type=int, default=20)
    g.set_defaults(parser=g, func=cmd_gradcheck)

    r = sub.add_parser("replay", help="ASCII playback of a trace file")
    r.add_argument("--trace", required=True)
    r.add_argument("--limit", type=int, default=0)
    r.add_argument("--delay", type=float, default=0.0)
    r.set_defaults(parser=r, func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        usage = exc.usage or (args.parser if args is not None and hasattr(args, "parser") else parser).format_usage()
        print(usage + str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ContractError, nn.CheckpointError, nn.TrainingError, nn.ShapeError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"gridsoccer: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
