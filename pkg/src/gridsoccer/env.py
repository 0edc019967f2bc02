"""Deterministic grid-soccer simulator.

Agents are addressed either by :class:`AgentId` or by a flat index
``team * n + index`` (Left team first). All state values are immutable;
:func:`step` returns a fresh :class:`GameState` inside a :class:`StepOutcome`.

Action codes (per agent, ``n + 8`` in total)::

    0        hold
    1 .. 8   move, displacement table ``MOVES``
    8 + k    pass to teammate k (k = 1 .. n-1, teammates by ascending index, self skipped)
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator, Mapping, NamedTuple, Sequence


class ConfigError(ValueError):
    """Invalid environment configuration."""


class ContractError(ValueError):
    """A caller violated an operation's preconditions."""


class Team(enum.IntEnum):
    LEFT = 0  # attacks the goal in column W-1
    RIGHT = 1  # attacks the goal in column 0

    @property
    def other(self) -> "Team":
        return Team(1 - self.value)


class AgentId(NamedTuple):
    team: Team
    index: int

    def flat(self, n: int) -> int:
        return int(self.team) * n + self.index


def agent_from_flat(flat: int, n: int) -> AgentId:
    return AgentId(Team(flat // n), flat % n)


HOLD = 0
# (d_row, d_col) for codes 1..8
MOVES: tuple[tuple[int, int], ...] = (
    (1, 0),
    (0, -1),
    (-1, 0),
    (0, 1),
    (1, 1),
    (1, -1),
    (-1, -1),
    (-1, 1),
)
_MIRRORED_MOVE = {1: 1, 2: 4, 3: 3, 4: 2, 5: 6, 6: 5, 7: 8, 8: 7}


def num_actions(n: int) -> int:
    return n + 8


def move_target(pos: tuple[int, int], code: int) -> tuple[int, int]:
    """Apply the displacement of move ``code`` (1..8) to ``pos``; no bounds check."""
    dr, dc = MOVES[code - 1]
    return (pos[0] + dr, pos[1] + dc)


def pass_receiver(index: int, code: int, n: int) -> int:
    """Team-local index of the teammate that pass ``code`` from ``index`` targets."""
    k = code - 8
    return k - 1 if k - 1 < index else k


def pass_code(index: int, receiver: int) -> int:
    if receiver == index:
        raise ContractError("cannot pass to self")
    return 8 + (receiver + 1 if receiver < index else receiver)


class Action(NamedTuple):
    """Decoded action: ``kind`` is 'hold', 'move' or 'pass'; ``arg`` is the move code or k."""

    kind: str
    arg: int = 0

    @classmethod
    def decode(cls, code: int, n: int) -> "Action":
        if not 0 <= code < n + 8:
            raise ContractError(f"action code {code} out of range for n={n}")
        if code == HOLD:
            return cls("hold")
        if code <= 8:
            return cls("move", code)
        return cls("pass", code - 8)

    def encode(self, n: int) -> int:
        if self.kind == "hold":
            return HOLD
        if self.kind == "move" and 1 <= self.arg <= 8:
            return self.arg
        if self.kind == "pass" and 1 <= self.arg <= n - 1:
            return 8 + self.arg
        raise ContractError(f"invalid action {self}")

    def describe(self) -> str:
        if self.kind == "hold":
            return "hold"
        if self.kind == "move":
            dr, dc = MOVES[self.arg - 1]
            return f"move ({dr:+d},{dc:+d})"
        return f"pass to teammate {self.arg}"


def mirror_action(code: int) -> int:
    """Action code with the column displacement negated (passes and hold unchanged)."""
    return _MIRRORED_MOVE.get(code, code)


class RewardKind(enum.Enum):
    AGENT_OWN_GOAL = "agent_own_goal"
    TEAM_OWN_GOAL = "team_own_goal"
    AGENT_SCORED_GOAL = "agent_scored_goal"
    TEAM_SCORED_GOAL = "team_scored_goal"
    OPPONENT_SCORED_GOAL = "opponent_scored_goal"
    OPPONENT_OWN_GOAL = "opponent_own_goal"
    AGENT_TURNOVER = "agent_turnover"
    TEAM_TURNOVER = "team_turnover"
    AGENT_STEAL = "agent_steal"
    TEAM_STEAL = "team_steal"
    AGENT_ILLEGAL_MOVE = "agent_illegal_move"
    AGENT_SUCCESSFUL_PASS = "agent_successful_pass"
    AGENT_HOLD = "agent_hold"
    AGENT_LEGAL_MOVE = "agent_legal_move"

    # members are singletons; identity hashing keeps reward lookups cheap
    __hash__ = object.__hash__


REWARD_TABLE: dict[RewardKind, float] = {
    RewardKind.AGENT_OWN_GOAL: -100.0,
    RewardKind.TEAM_OWN_GOAL: -75.0,
    RewardKind.AGENT_SCORED_GOAL: 50.0,
    RewardKind.TEAM_SCORED_GOAL: 50.0,
    RewardKind.OPPONENT_SCORED_GOAL: -50.0,
    RewardKind.OPPONENT_OWN_GOAL: 10.0,
    RewardKind.AGENT_TURNOVER: -10.0,
    RewardKind.TEAM_TURNOVER: -10.0,
    RewardKind.AGENT_STEAL: 10.0,
    RewardKind.TEAM_STEAL: 10.0,
    RewardKind.AGENT_ILLEGAL_MOVE: -3.0,
    RewardKind.AGENT_SUCCESSFUL_PASS: -1.0,
    RewardKind.AGENT_HOLD: -1.0,
    RewardKind.AGENT_LEGAL_MOVE: -2.0,
}

GOAL_KINDS = frozenset(
    {
        RewardKind.AGENT_OWN_GOAL,
        RewardKind.TEAM_OWN_GOAL,
        RewardKind.AGENT_SCORED_GOAL,
        RewardKind.TEAM_SCORED_GOAL,
        RewardKind.OPPONENT_SCORED_GOAL,
        RewardKind.OPPONENT_OWN_GOAL,
    }
)


def reward_value(kind: RewardKind) -> float:
    return REWARD_TABLE[kind]


@dataclass(frozen=True)
class EnvConfig:
    H: int = 10
    W: int = 18
    n: int = 3
    seed: int = 0
    goal_rows: tuple[int, int] | None = None  # inclusive (first, last); None = middle 4 rows
    step_cap: int = 500

    def __post_init__(self) -> None:
        if self.goal_rows is not None:
            object.__setattr__(self, "goal_rows", tuple(int(r) for r in self.goal_rows))

    @property
    def goal_range(self) -> tuple[int, int]:
        if self.goal_rows is not None:
            return self.goal_rows  # type: ignore[return-value]
        span = min(4, self.H)
        first = (self.H - span) // 2
        return (first, first + span - 1)

    def validate(self) -> "EnvConfig":
        if self.H < 3 or self.W < 4:
            raise ConfigError(f"grid {self.H}x{self.W} too small (need H>=3, W>=4)")
        if self.n < 1:
            raise ConfigError("need at least one player per team")
        if self.n > formation_slots(self.H):
            raise ConfigError(
                f"n={self.n} exceeds the {formation_slots(self.H)} formation slots of a {self.H}-row grid"
            )
        first, last = self.goal_range
        if not (0 <= first <= last < self.H):
            raise ConfigError(f"goal_rows {self.goal_range} not a row range inside [0, {self.H})")
        if self.step_cap < 1:
            raise ConfigError("step_cap must be positive")
        return self

    @classmethod
    def from_mapping(cls, data: Mapping) -> "EnvConfig":
        known = {"H", "W", "n", "seed", "goal_rows", "step_cap"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown env keys: {sorted(unknown)}")
        return cls(**dict(data)).validate()

    def to_mapping(self) -> dict:
        return {
            "H": self.H,
            "W": self.W,
            "n": self.n,
            "seed": self.seed,
            "goal_rows": list(self.goal_rows) if self.goal_rows is not None else None,
            "step_cap": self.step_cap,
        }


def formation_slots(H: int) -> int:
    # players stand on every other row
    return (H + 1) // 2


def formation(config: EnvConfig) -> tuple[tuple[int, int], ...]:
    """Kickoff positions: each team in a vertical line at column W//4 of its half, mirrored."""
    n, H, W = config.n, config.H, config.W
    span = 2 * n - 1
    top = (H - span) // 2
    col = W // 4
    left = [(top + 2 * k, col) for k in range(n)]
    right = [(r, W - 1 - c) for r, c in left]
    return tuple(left + right)


def center_index(n: int) -> int:
    return (n - 1) // 2


@dataclass(frozen=True)
class GameState:
    config: EnvConfig
    positions: tuple[tuple[int, int], ...]
    ball_holder: int
    score: tuple[int, int] = (0, 0)
    timestep: int = 0
    episode_steps: int = 0

    @property
    def n(self) -> int:
        return self.config.n

    def agents(self) -> list[AgentId]:
        n = self.config.n
        return [agent_from_flat(f, n) for f in range(2 * n)]

    def position(self, agent: AgentId) -> tuple[int, int]:
        return self.positions[agent.flat(self.config.n)]

    @property
    def holder(self) -> AgentId:
        return agent_from_flat(self.ball_holder, self.config.n)

    @property
    def ball_position(self) -> tuple[int, int]:
        return self.positions[self.ball_holder]

    def check(self) -> "GameState":
        """Raise :class:`ContractError` unless all state invariants hold."""
        H, W, n = self.config.H, self.config.W, self.config.n
        if len(self.positions) != 2 * n:
            raise ContractError("wrong number of positions")
        if len(set(self.positions)) != 2 * n:
            raise ContractError("two players share a cell")
        for r, c in self.positions:
            if not (0 <= r < H and 0 <= c < W):
                raise ContractError(f"position {(r, c)} out of bounds")
        if not 0 <= self.ball_holder < 2 * n:
            raise ContractError("ball holder out of range")
        return self


@dataclass(frozen=True)
class StepOutcome:
    next_state: GameState
    events: tuple[tuple[RewardKind, ...], ...]  # by flat agent index
    rewards: tuple[float, ...]
    goal_scored: Team | None = None
    turnover: bool = False
    truncated: bool = False  # step cap reached, formation soft reset
    final_state: GameState | None = field(default=None, compare=False)  # pre-reset state on goal/cap

    @property
    def episode_end(self) -> bool:
        return self.goal_scored is not None or self.truncated

    def events_for(self, agent: AgentId) -> tuple[RewardKind, ...]:
        return self.events[agent.flat(self.next_state.config.n)]

    def reward_for(self, agent: AgentId) -> float:
        return self.rewards[agent.flat(self.next_state.config.n)]


def new_game(config: EnvConfig) -> GameState:
    config.validate()
    return GameState(
        config=config,
        positions=formation(config),
        ball_holder=center_index(config.n),
    )


def apply_goal_reset(state: GameState, conceding_team: Team) -> GameState:
    """Restore the kickoff formation with the conceding team's center player on the ball."""
    n = state.config.n
    return replace(
        state,
        positions=formation(state.config),
        ball_holder=int(conceding_team) * n + center_index(n),
        episode_steps=0,
    )


def bresenham_between(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    """Cells on the Bresenham line from ``a`` to ``b``, endpoints excluded, ordered from ``a``.

    Where the exact line passes midway between two cells, the one nearer ``b`` is taken.
    """
    r0, c0 = a
    r1, c1 = b
    dr, dc = abs(r1 - r0), -abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dr + dc
    cells = []
    r, c = r0, c0
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 >= dc:
            err += dc
            r += sr
        if e2 <= dr:
            err += dr
            c += sc
        cells.append((r, c))
    return cells[:-1]


def _normalize_actions(state: GameState, actions) -> list[int]:
    n = state.config.n
    if not isinstance(actions, (list, tuple)) and isinstance(actions, Mapping):
        codes = [HOLD] * (2 * n)
        seen = set()
        for agent, code in actions.items():
            agent = AgentId(Team(agent[0]), int(agent[1]))
            codes[agent.flat(n)] = int(code)
            seen.add(agent.flat(n))
        if len(seen) != 2 * n:
            missing = [agent_from_flat(f, n) for f in range(2 * n) if f not in seen]
            raise ContractError(f"no action supplied for {missing}")
    else:
        codes = [int(c) for c in actions]
        if len(codes) != 2 * n:
            raise ContractError(f"expected {2 * n} actions, got {len(codes)}")
    limit = n + 8
    for f, code in enumerate(codes):
        if not 0 <= code < limit:
            raise ContractError(f"action {code} for agent {agent_from_flat(f, n)} out of range")
    return codes


def step(state: GameState, actions: Mapping[AgentId, int] | Sequence[int]) -> StepOutcome:
    """Advance one timestep.

    Resolution order: the holder's pass (with interception), then moves one by
    one in flat agent order against the positions updated so far, then goal
    detection. A goal is scored only when the final ball holder reached a goal
    cell by its own legal move this step.
    """
    codes = _normalize_actions(state, actions)
    cfg = state.config
    n, H, W = cfg.n, cfg.H, cfg.W
    g0, g1 = cfg.goal_range
    pos = list(state.positions)
    holder = state.ball_holder
    events: list[list[RewardKind]] = [[] for _ in range(2 * n)]
    changes = 0

    def possession_change(winner: int, loser: int) -> None:
        nonlocal changes
        changes += 1
        wt, lt = winner // n, loser // n
        for f in range(wt * n, wt * n + n):
            events[f].append(RewardKind.AGENT_STEAL if f == winner else RewardKind.TEAM_STEAL)
        for f in range(lt * n, lt * n + n):
            events[f].append(RewardKind.AGENT_TURNOVER if f == loser else RewardKind.TEAM_TURNOVER)

    # passes
    passer = -1
    code = codes[holder]
    if code > 8:
        passer = holder
        team = holder // n
        receiver = team * n + pass_receiver(holder % n, code, n)
        lane = bresenham_between(pos[holder], pos[receiver])
        interceptor = -1
        if lane:
            occupant = {p: f for f, p in enumerate(pos)}
            for cell in lane:
                f = occupant.get(cell, -1)
                if f >= 0 and f // n != team:
                    interceptor = f
                    break
        if interceptor >= 0:
            holder = interceptor
            possession_change(interceptor, passer)
        else:
            holder = receiver
            events[passer].append(RewardKind.AGENT_SUCCESSFUL_PASS)

    # moves
    scorer_cell: tuple[int, int] | None = None
    scorer = -1
    for f in range(2 * n):
        code = codes[f]
        if f == passer:
            continue
        if code == HOLD or code > 8:
            events[f].append(RewardKind.AGENT_HOLD)
            continue
        r, c = pos[f]
        dr, dc = MOVES[code - 1]
        tr, tc = r + dr, c + dc
        if not (0 <= tr < H and 0 <= tc < W):
            events[f].append(RewardKind.AGENT_ILLEGAL_MOVE)
            continue
        target = (tr, tc)
        occupant = -1
        for g in range(2 * n):
            if pos[g] == target:
                occupant = g
                break
        if occupant >= 0:
            if occupant == holder and occupant // n != f // n and codes[occupant] != HOLD:
                possession_change(f, occupant)
                holder = f
            else:
                events[f].append(RewardKind.AGENT_ILLEGAL_MOVE)
            continue
        pos[f] = target
        events[f].append(RewardKind.AGENT_LEGAL_MOVE)
        if f == holder and (tc == 0 or tc == W - 1) and g0 <= tr <= g1:
            scorer, scorer_cell = f, target

    # goals
    goal: Team | None = None
    if scorer >= 0 and scorer == holder and pos[scorer] == scorer_cell:
        team = scorer // n
        attacked_col = W - 1 if team == Team.LEFT else 0
        own_goal = scorer_cell[1] != attacked_col
        goal = Team(1 - team) if own_goal else Team(team)
        events[scorer].remove(RewardKind.AGENT_LEGAL_MOVE)
        for f in range(2 * n):
            if f == scorer:
                events[f].append(RewardKind.AGENT_OWN_GOAL if own_goal else RewardKind.AGENT_SCORED_GOAL)
            elif f // n == team:
                events[f].append(RewardKind.TEAM_OWN_GOAL if own_goal else RewardKind.TEAM_SCORED_GOAL)
            else:
                events[f].append(RewardKind.OPPONENT_OWN_GOAL if own_goal else RewardKind.OPPONENT_SCORED_GOAL)

    score = state.score
    if goal is not None:
        score = (score[0] + 1, score[1]) if goal == Team.LEFT else (score[0], score[1] + 1)
    after = GameState(
        config=cfg,
        positions=tuple(pos),
        ball_holder=holder,
        score=score,
        timestep=state.timestep + 1,
        episode_steps=state.episode_steps + 1,
    )
    truncated = False
    final_state = None
    nxt = after
    if goal is not None:
        final_state = after
        nxt = apply_goal_reset(after, goal.other)
    elif after.episode_steps >= cfg.step_cap:
        truncated = True
        final_state = after
        nxt = apply_goal_reset(after, Team(holder // n))

    table = REWARD_TABLE
    return StepOutcome(
        next_state=nxt,
        events=tuple(tuple(e) for e in events),
        rewards=tuple(float(sum(table[k] for k in e)) for e in events),
        goal_scored=goal,
        turnover=changes > 0,
        truncated=truncated,
        final_state=final_state,
    )


def mirror_state(state: GameState) -> GameState:
    """Flip columns and swap team labels, so the Right team plays as Left."""
    n, W = state.config.n, state.config.W
    flipped = [(r, W - 1 - c) for r, c in state.positions]
    return replace(
        state,
        positions=tuple(flipped[n:] + flipped[:n]),
        ball_holder=(state.ball_holder + n) % (2 * n),
        score=(state.score[1], state.score[0]),
    )


def render_ascii(state: GameState) -> str:
    """Text board: ``x``/``X`` Left (``X`` has the ball), ``o``/``O`` Right, ``:`` empty goal cell."""
    cfg = state.config
    g0, g1 = cfg.goal_range
    n = cfg.n
    grid = [["." for _ in range(cfg.W)] for _ in range(cfg.H)]
    for r in range(g0, g1 + 1):
        grid[r][0] = ":"
        grid[r][cfg.W - 1] = ":"
    for f, (r, c) in enumerate(state.positions):
        glyph = "x" if f < n else "o"
        grid[r][c] = glyph.upper() if f == state.ball_holder else glyph
    border = "+" + "-" * cfg.W + "+"
    lines = [border]
    for r, row in enumerate(grid):
        edge = "#" if g0 <= r <= g1 else "|"
        lines.append(edge + "".join(row) + edge)
    lines.append(border)
    return "\n".join(lines)


# Trace format: one JSON object per line. The first line is a header carrying
# the env config; every other line describes one timestep.


def trace_header(config: EnvConfig) -> dict:
    return {"type": "header", "env": config.to_mapping()}


def trace_record(state: GameState, actions: Sequence[int], outcome: StepOutcome) -> dict:
    shown = outcome.final_state or outcome.next_state
    return {
        "type": "step",
        "timestep": outcome.next_state.timestep,
        "positions": [list(p) for p in shown.positions],
        "ball_holder": shown.ball_holder,
        "actions": list(int(a) for a in actions),
        "events": [[k.value for k in e] for e in outcome.events],
        "rewards": list(outcome.rewards),
        "score": list(outcome.next_state.score),
        "goal": None if outcome.goal_scored is None else outcome.goal_scored.name,
    }


def write_trace(records: Iterable[dict], fh: IO[str]) -> None:
    for rec in records:
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_trace(fh: IO[str]) -> Iterator[dict]:
    for line in fh:
        line = line.strip()
        if line:
            yield json.loads(line)


def state_from_record(config: EnvConfig, record: dict) -> GameState:
    return GameState(
        config=config,
        positions=tuple(tuple(p) for p in record["positions"]),
        ball_holder=int(record["ball_holder"]),
        score=tuple(record["score"]),
        timestep=int(record["timestep"]),
    )
