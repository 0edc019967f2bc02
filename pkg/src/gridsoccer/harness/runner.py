"""Training, evaluation and adversarial play loops."""
from __future__ import annotations

import csv
import json
import logging
import math
import pickle
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gridsoccer import nn
from gridsoccer.agents import HandcodedTeam, RandomTeam, TeamController
from gridsoccer.coma import COMATeam
from gridsoccer.dqn import ConcurrentTeam, CoordinatedTeam, EpsilonSchedule, SharedQTeam
from gridsoccer.env import EnvConfig, GameState, RewardKind, Team, new_game, step, trace_header, trace_record
from gridsoccer.harness.config import TrainConfig, stream, streams

log = logging.getLogger(__name__)

METRIC_FIELDS = ("timestep", "goals_for", "goals_against", "goal_ratio", "mean_reward", "epsilon", "loss_mean")
CHECKPOINT_FORMAT = "gridsoccer-checkpoint/1"


class GoalWindow:
    """Outcomes of the most recent ``size`` goals (True = scored by the tracked team)."""

    def __init__(self, size: int = 200):
        self.size = size
        self.outcomes: deque[bool] = deque(maxlen=size)

    def record(self, scored_for: bool) -> None:
        self.outcomes.append(bool(scored_for))

    def __len__(self) -> int:
        return len(self.outcomes)

    def ratio(self) -> float | None:
        if not self.outcomes:
            return None
        return sum(self.outcomes) / len(self.outcomes)


def goal_ratio(window: GoalWindow) -> float | None:
    return window.ratio()


@dataclass
class LogRow:
    timestep: int
    goals_for: int
    goals_against: int
    goal_ratio: float | None
    mean_reward: float
    epsilon: float
    loss_mean: float | None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def export_metrics(rows: list[LogRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for row in rows:
            w.writerow([_fmt(getattr(row, f)) for f in METRIC_FIELDS])


def read_metrics(path) -> list[LogRow]:
    def opt(s: str) -> float | None:
        return None if s == "" else float(s)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            LogRow(
                int(r["timestep"]),
                int(r["goals_for"]),
                int(r["goals_against"]),
                opt(r["goal_ratio"]),
                float(r["mean_reward"]),
                float(r["epsilon"]),
                opt(r["loss_mean"]),
            )
            for r in reader
        ]


def export_trace(records, path, config: EnvConfig) -> None:
    from gridsoccer.env import write_trace

    with open(path, "w") as fh:
        write_trace([trace_header(config), *records], fh)


def build_controller(cfg: TrainConfig, team: Team, prefix: str = "learner", protocol: str | None = None) -> TeamController:
    protocol = protocol or cfg.protocol
    env = cfg.env
    if protocol == "random":
        return RandomTeam(env.n, team, stream(cfg.seed, f"{prefix}.random"))
    if protocol == "handcoded":
        return HandcodedTeam(env.n, team)
    schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps)
    rngs = streams(cfg.seed, prefix)
    if protocol == "coma":
        return COMATeam(
            env.n, env.H, env.W, team, seed_rngs=rngs, lr=cfg.lr, critic_lr=cfg.critic_lr,
            gamma=cfg.gamma, lam=cfg.lam, schedule=schedule,
        )
    common = dict(
        seed_rngs=rngs, lr=cfg.lr, gamma=cfg.gamma, schedule=schedule, preset=cfg.dqn_preset,
        use_replay=cfg.replay, buffer_size=cfg.buffer_size, minibatch=cfg.minibatch, train_every=cfg.train_every,
    )
    if protocol == "concurrent":
        return ConcurrentTeam(env.n, env.H, env.W, team, **common)
    if protocol == "paramshare":
        return SharedQTeam(env.n, env.H, env.W, team, layout=cfg.obs_layout, **common)
    if protocol == "coordinated":
        return CoordinatedTeam(
            env.n, env.H, env.W, team, comm_size=cfg.comm_size, credit_mode=cfg.credit_mode, **common
        )
    raise ValueError(f"unknown protocol {protocol!r}")


def save_model(controller: TeamController, cfg: TrainConfig, directory, timestep: int) -> Path:
    """Write ``meta.json`` and (for learned teams) ``model.gsnn`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "protocol": controller.kind,
        "timestep": timestep,
        "config": cfg.to_mapping(),
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    if hasattr(controller, "networks"):
        nn.save_bundle(controller.networks(), directory / "model.gsnn")
    return directory


def load_controller(
    path,
    team: Team,
    *,
    learning: bool = False,
    epsilon: float | None = None,
    seed: int | None = None,
    prefix: str = "loaded",
) -> tuple[TeamController, TrainConfig]:
    """Rebuild a team from a checkpoint directory (weights only, fresh optimizer)."""
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{path}: no meta.json (not a checkpoint directory)")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise nn.CheckpointError(f"{path}: unknown checkpoint format {meta.get('format')!r}")
    cfg = TrainConfig.from_mapping(meta["config"])
    if seed is not None:
        cfg.seed = seed
    controller = build_controller(cfg, team, prefix, protocol=meta["protocol"])
    if hasattr(controller, "networks"):
        expected = {k: v.spec for k, v in controller.networks().items()}
        loaded = nn.load_bundle(path / "model.gsnn", expected)
        for name, params in controller.networks().items():
            params.assign(loaded[name])
        controller.sync_target()
    controller.learning = learning and hasattr(controller, "networks")
    if epsilon is not None and hasattr(controller, "fixed_epsilon"):
        controller.fixed_epsilon = epsilon
    return controller, cfg


def resolve_player(spec: str, team: Team, cfg: TrainConfig, *, epsilon: float | None = None, prefix: str = "opponent"):
    if spec == "handcoded":
        return HandcodedTeam(cfg.env.n, team)
    if spec == "random":
        return RandomTeam(cfg.env.n, team, stream(cfg.seed, f"{prefix}.random"))
    controller, loaded_cfg = load_controller(
        spec, team, epsilon=epsilon if epsilon is not None else cfg.eval_epsilon, seed=cfg.seed, prefix=prefix
    )
    if loaded_cfg.env != cfg.env and (loaded_cfg.env.H, loaded_cfg.env.W, loaded_cfg.env.n) != (
        cfg.env.H, cfg.env.W, cfg.env.n
    ):
        raise nn.CheckpointError(f"{spec}: trained on a different board or team size")
    return controller


@dataclass
class SideStats:
    window: GoalWindow
    rows: list[LogRow] = field(default_factory=list)
    goals_for: int = 0
    goals_against: int = 0
    reward_sum: float = 0.0
    reward_count: int = 0
    losses: list[float] = field(default_factory=list)


class Session:
    """Two controllers playing one continuous game, with per-side logs.

    The whole session (game state, controllers, RNG streams, logs) pickles, so a
    checkpointed session resumes bit-identically.
    """

    def __init__(self, cfg: TrainConfig, left: TeamController, right: TeamController):
        self.cfg = cfg
        self.state: GameState = new_game(cfg.env)
        self.sides = {Team.LEFT: left, Team.RIGHT: right}
        self.stats = {t: SideStats(GoalWindow(cfg.goal_window)) for t in Team}
        self.timestep = 0
        self._trace_fh = None

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_trace_fh"] = None
        return d

    def open_trace(self, path, append: bool = False) -> None:
        self._trace_fh = open(path, "a" if append else "w")
        if not append:
            self._trace_fh.write(json.dumps(trace_header(self.cfg.env)) + "\n")

    def close(self) -> None:
        if self._trace_fh is not None:
            self._trace_fh.close()
            self._trace_fh = None

    def step(self):
        state = self.state
        left, right = self.sides[Team.LEFT], self.sides[Team.RIGHT]
        a_left = left.act(state)
        a_right = right.act(state)
        codes = a_left + a_right
        outcome = step(state, codes)
        for team, controller, own in ((Team.LEFT, left, a_left), (Team.RIGHT, right, a_right)):
            loss = controller.observe(state, own, outcome)
            st = self.stats[team]
            lo = int(team) * self.cfg.env.n
            rewards = outcome.rewards[lo : lo + self.cfg.env.n]
            st.reward_sum += float(sum(rewards))
            st.reward_count += len(rewards)
            if loss is not None:
                if not math.isfinite(loss):
                    raise nn.TrainingError(f"non-finite loss at timestep {self.timestep + 1}")
                st.losses.append(loss)
            if outcome.goal_scored is not None:
                scored = outcome.goal_scored == team
                st.window.record(scored)
                if scored:
                    st.goals_for += 1
                else:
                    st.goals_against += 1
        if self._trace_fh is not None:
            self._trace_fh.write(json.dumps(trace_record(state, codes, outcome), separators=(",", ":")) + "\n")
        self.state = outcome.next_state
        self.timestep += 1
        if self.timestep % self.cfg.log_interval == 0:
            self.log_row()
        return outcome

    def log_row(self) -> None:
        for team, st in self.stats.items():
            st.rows.append(
                LogRow(
                    timestep=self.timestep,
                    goals_for=st.goals_for,
                    goals_against=st.goals_against,
                    goal_ratio=st.window.ratio(),
                    mean_reward=st.reward_sum / st.reward_count if st.reward_count else 0.0,
                    epsilon=float(self.sides[team].epsilon),
                    loss_mean=float(np.mean(st.losses)) if st.losses else None,
                )
            )
            st.reward_sum, st.reward_count, st.losses = 0.0, 0, []

    def rows(self, team: Team = Team.LEFT) -> list[LogRow]:
        return self.stats[team].rows

    def run(self, until: int, on_step=None) -> None:
        while self.timestep < until:
            self.step()
            if on_step is not None:
                on_step(self)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            pickle.dump(self, fh, protocol=pickle.HIGHEST_PROTOCOL)

    @staticmethod
    def load(path) -> "Session":
        with open(path, "rb") as fh:
            session = pickle.load(fh)
        if not isinstance(session, Session):
            raise nn.CheckpointError(f"{path}: not a training session")
        return session


def write_checkpoint(session: Session, out_dir, name: str) -> Path:
    directory = save_model(session.sides[Team.LEFT], session.cfg, Path(out_dir) / name, session.timestep)
    session.save(directory / "state.pkl")
    export_metrics(session.rows(Team.LEFT), directory / "metrics.csv")
    return directory


def train(cfg: TrainConfig, out_dir=None, *, resume=None, until: int | None = None) -> Session:
    """Train ``cfg.protocol`` (Left) against ``cfg.opponent`` (Right).

    Writes ``metrics.csv``, periodic ``ckpt_<t>/`` directories and ``final/`` into
    ``out_dir`` when given. ``resume`` is a checkpoint directory with ``state.pkl``.
    """
    cfg.validate()
    if resume is not None:
        session = Session.load(Path(resume) / "state.pkl")
        cfg = session.cfg
    else:
        left = build_controller(cfg, Team.LEFT, "learner")
        right = resolve_player(cfg.opponent, Team.RIGHT, cfg)
        session = Session(cfg, left, right)
    until = cfg.total_timesteps if until is None else until
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.write_trace:
            session.open_trace(out / "trace.jsonl", append=resume is not None)

    def on_step(s: Session) -> None:
        if out is not None and cfg.checkpoint_every and s.timestep % cfg.checkpoint_every == 0:
            write_checkpoint(s, out, f"ckpt_{s.timestep:08d}")

    try:
        session.run(until, on_step)
    except nn.TrainingError:
        if out is not None:
            write_checkpoint(session, out, "failed")
        raise
    finally:
        session.close()
    if out is not None:
        export_metrics(session.rows(Team.LEFT), out / "metrics.csv")
        write_checkpoint(session, out, "final")
    return session


@dataclass
class MatchReport:
    goals_for: int
    goals_against: int
    goal_ratio: float | None
    window: int
    mean_episode_length: float
    steals: int
    turnovers: int
    steps: int

    def line(self) -> str:
        ratio = "n/a" if self.goal_ratio is None else f"{self.goal_ratio:.3f}"
        return (
            f"goal_ratio={ratio} goals_for={self.goals_for} goals_against={self.goals_against} "
            f"window={self.window} mean_episode_length={self.mean_episode_length:.1f} "
            f"steals={self.steals} turnovers={self.turnovers} steps={self.steps}"
        )


def play_match(cfg: TrainConfig, a: TeamController, b: TeamController, num_goals: int, max_steps: int | None = None) -> MatchReport:
    """Play until ``num_goals`` goals (or ``max_steps``); ``a`` is Left."""
    state = new_game(cfg.env)
    max_steps = max_steps if max_steps is not None else 2000 * num_goals
    n = cfg.env.n
    goals_for = goals_against = episodes = steals = turnovers = steps = 0
    while goals_for + goals_against < num_goals and steps < max_steps:
        outcome = step(state, a.act(state) + b.act(state))
        steps += 1
        for f in range(n):
            ev = outcome.events[f]
            steals += ev.count(RewardKind.AGENT_STEAL)
            turnovers += ev.count(RewardKind.AGENT_TURNOVER)
        if outcome.goal_scored is not None:
            if outcome.goal_scored == Team.LEFT:
                goals_for += 1
            else:
                goals_against += 1
        if outcome.episode_end:
            episodes += 1
        state = outcome.next_state
    total = goals_for + goals_against
    return MatchReport(
        goals_for=goals_for,
        goals_against=goals_against,
        goal_ratio=goals_for / total if total else None,
        window=total,
        mean_episode_length=steps / max(episodes, 1),
        steals=steals,
        turnovers=turnovers,
        steps=steps,
    )


def evaluate(a: str, b: str, num_goals: int = 200, cfg: TrainConfig | None = None, max_steps: int | None = None) -> MatchReport:
    """Match between two players given as checkpoint paths or ``handcoded`` / ``random``."""
    if cfg is None:
        for spec in (a, b):
            if spec not in ("handcoded", "random"):
                cfg = load_controller(spec, Team.LEFT)[1]
                break
        else:
            cfg = TrainConfig()
    left = resolve_player(a, Team.LEFT, cfg, prefix="eval.a")
    right = resolve_player(b, Team.RIGHT, cfg, prefix="eval.b")
    if isinstance(left, COMATeam):
        left.fixed_epsilon = 0.0
    if isinstance(right, COMATeam):
        right.fixed_epsilon = 0.0
    return play_match(cfg, left, right, num_goals, max_steps)


def adversarial_train(
    cfg: TrainConfig,
    ckpt_a,
    ckpt_b,
    *,
    learn_a: bool = True,
    learn_b: bool = True,
    out_dir=None,
) -> Session:
    """Continue training two pretrained teams against each other (A plays Left)."""
    cfg.validate()
    a, cfg_a = load_controller(ckpt_a, Team.LEFT, learning=learn_a, epsilon=cfg.eps_end, seed=cfg.seed, prefix="adv.a")
    b, cfg_b = load_controller(ckpt_b, Team.RIGHT, learning=learn_b, epsilon=cfg.eps_end, seed=cfg.seed, prefix="adv.b")
    for other in (cfg_a, cfg_b):
        if (other.env.H, other.env.W, other.env.n) != (cfg.env.H, cfg.env.W, cfg.env.n):
            raise nn.CheckpointError("checkpoint board does not match the adversarial config")
    session = Session(cfg, a, b)
    session.run(cfg.total_timesteps)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        export_metrics(session.rows(Team.LEFT), out / "metrics_a.csv")
        export_metrics(session.rows(Team.RIGHT), out / "metrics_b.csv")
        save_model(a, cfg_a, out / "final_a", session.timestep)
        save_model(b, cfg_b, out / "final_b", session.timestep)
    return session
