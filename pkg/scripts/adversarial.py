"""Continue training two pretrained checkpoints against each other.

Prints side A's goal ratio at every logged interval. With ``--freeze-b`` only
side A learns, which shows whether learning against a fixed opponent helps.

    python scripts/adversarial.py --a runs/ps/final --b runs/coord/final --out runs/adv
"""

import argparse

from gridsoccer.harness.config import TrainConfig
from gridsoccer.harness.runner import adversarial_train


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--a", required=True, help="checkpoint directory for side A (plays Left)")
    p.add_argument("--b", required=True, help="checkpoint directory for side B")
    p.add_argument("--config", help="board, budget and seed (defaults are used when omitted)")
    p.add_argument("--timesteps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--freeze-b", action="store_true")
    p.add_argument("--out")
    args = p.parse_args()

    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.timesteps is not None:
        cfg.total_timesteps = args.timesteps
    if args.seed is not None:
        cfg.seed = args.seed
    session = adversarial_train(cfg, args.a, args.b, learn_a=True, learn_b=not args.freeze_b, out_dir=args.out)
    for row in session.rows():
        ratio = "n/a" if row.goal_ratio is None else f"{row.goal_ratio:.3f}"
        print(f"{row.timestep:>8d}  goals {row.goals_for:>5d}-{row.goals_against:<5d}  ratio {ratio}")


if __name__ == "__main__":
    main()
