"""Long runs on the full 10x18 3v3 board against the hand-coded team.

Trains each protocol for each seed, then evaluates the final checkpoint over
200 goals against the hand-coded team. Several hours per run on one core.

    python scripts/long_run.py --protocols concurrent paramshare coordinated --seeds 0 1 2
"""

import argparse
import json
from pathlib import Path

import numpy as np

from gridsoccer.harness.config import TrainConfig
from gridsoccer.harness.runner import evaluate, train


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", help="base config (defaults are used when omitted)")
    p.add_argument("--protocols", nargs="+", default=["concurrent", "paramshare", "coordinated"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--timesteps", type=int, default=500_000)
    p.add_argument("--goals", type=int, default=200)
    p.add_argument("--out", default="runs/long")
    args = p.parse_args()

    results: dict[str, list[float]] = {}
    for protocol in args.protocols:
        for seed in args.seeds:
            cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
            cfg.protocol, cfg.seed, cfg.total_timesteps = protocol, seed, args.timesteps
            cfg.opponent = "handcoded"
            out = Path(args.out) / f"{protocol}-seed{seed}"
            train(cfg.validate(), out)
            report = evaluate(str(out / "final"), "handcoded", args.goals)
            print(f"{protocol} seed {seed}: {report.line()}", flush=True)
            results.setdefault(protocol, []).append(report.goal_ratio or 0.0)

    summary = {p: {"mean": float(np.mean(v)), "ratios": v} for p, v in results.items()}
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "summary.json").write_text(json.dumps(summary, indent=2))
    for protocol, s in summary.items():
        print(f"{protocol}: mean goal ratio {s['mean']:.3f} over {len(s['ratios'])} seeds")


if __name__ == "__main__":
    main()
