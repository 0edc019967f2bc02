"""Desk-scale learning run: ParamShare vs random on a 6x9 board, several seeds.

Trains each seed for the full budget and reports the first logged timestep at
which the 200-goal window is full and its ratio is at least 0.9.

    python scripts/desk_scale.py --seeds 0 1 2 --out runs/desk
"""

import argparse
import time
from pathlib import Path

from gridsoccer.harness.config import TrainConfig
from gridsoccer.harness.runner import train

ROOT = Path(__file__).resolve().parents[1]


def first_success(rows, window: int, threshold: float):
    for row in rows:
        if row.goals_for + row.goals_against >= window and row.goal_ratio is not None and row.goal_ratio >= threshold:
            return row.timestep
    return None


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=str(ROOT / "configs" / "desk.yaml"))
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--timesteps", type=int)
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--out", default="runs/desk")
    args = p.parse_args()

    for seed in args.seeds:
        cfg = TrainConfig.load(args.config)
        cfg.seed = seed
        if args.timesteps is not None:
            cfg.total_timesteps = args.timesteps
        start = time.perf_counter()
        session = train(cfg.validate(), Path(args.out) / f"seed{seed}")
        minutes = (time.perf_counter() - start) / 60
        rows = session.rows()
        hit = first_success(rows, cfg.goal_window, args.threshold)
        final = rows[-1].goal_ratio if rows else None
        print(
            f"seed {seed}: first full-window ratio >= {args.threshold} at "
            f"{'never' if hit is None else hit}, final ratio {final}, {minutes:.1f} min"
        )


if __name__ == "__main__":
    main()
