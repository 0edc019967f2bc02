"""Scripted opponent.

Roles cycle by team-local index: 0 striker, 1 midfielder, 2 defender.

With the ball:
    the holder passes to an unmarked teammate (no opponent within one cell,
    clear lane) when an opponent is adjacent, otherwise takes the legal move
    that gets closest to the opposing goal; teammates take up support spots
    ahead of, level with and behind the ball.
Without the ball:
    the striker chases the holder and bumps it when adjacent; when the ball is
    in our half the midfielder and defender drop onto the line between ball and
    own goal, otherwise they hold a midfield / deep position.

Every greedy choice breaks ties by the lowest action code.
"""
from __future__ import annotations

import enum
import math

from gridsoccer.env import (
    HOLD,
    AgentId,
    GameState,
    Team,
    bresenham_between,
    move_target,
    pass_code,
)


class Role(enum.Enum):
    STRIKER = "striker"
    MIDFIELDER = "midfielder"
    DEFENDER = "defender"


_CYCLE = (Role.STRIKER, Role.MIDFIELDER, Role.DEFENDER)


def role_assignment(n: int, team: Team) -> dict[AgentId, Role]:
    return {AgentId(team, i): _CYCLE[i % 3] for i in range(n)}


def cheb(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def goal_distance(p: tuple[int, int], col: int, rows: tuple[int, int]) -> int:
    """Chebyshev distance from ``p`` to the nearest goal cell in column ``col``."""
    dr = 0 if rows[0] <= p[0] <= rows[1] else min(abs(p[0] - rows[0]), abs(p[0] - rows[1]))
    return max(abs(p[1] - col), dr)


def segment_distance(p, a, b) -> float:
    """Euclidean distance from cell ``p`` to the segment ``a``-``b``."""
    (pr, pc), (ar, ac), (br, bc) = p, a, b
    dr, dc = br - ar, bc - ac
    norm = dr * dr + dc * dc
    t = 0.0 if norm == 0 else min(1.0, max(0.0, ((pr - ar) * dr + (pc - ac) * dc) / norm))
    return math.hypot(pr - (ar + t * dr), pc - (ac + t * dc))


def _greedy(state: GameState, f: int, cost, occupied: set, forbid=frozenset(), strict: bool = True, keep=None) -> int:
    """Lowest-cost legal move for agent ``f``; HOLD if none beats standing still (when strict).

    ``keep(target)`` optionally filters the candidate moves.
    """
    H, W = state.config.H, state.config.W
    here = state.positions[f]
    best_code, best_cost = HOLD, cost(here)
    for code in range(1, 9):
        t = move_target(here, code)
        if not (0 <= t[0] < H and 0 <= t[1] < W) or t in occupied or t in forbid:
            continue
        if keep is not None and not keep(t):
            continue
        c = cost(t)
        if c < best_cost or (not strict and best_code == HOLD and c <= best_cost):
            best_code, best_cost = code, c
    return best_code


def _clamp(p, H, W):
    return (min(max(p[0], 0), H - 1), min(max(p[1], 0), W - 1))


def handcoded_actions(state: GameState, team: Team) -> list[int]:
    cfg = state.config
    n, H, W = cfg.n, cfg.H, cfg.W
    rows = cfg.goal_range
    lo = int(team) * n
    attack_col = W - 1 if team == Team.LEFT else 0
    own_col = W - 1 - attack_col
    forward = 1 if team == Team.LEFT else -1
    goal_mid = ((rows[0] + rows[1]) // 2, own_col)
    occupied = set(state.positions)
    own_goal_cells = frozenset((r, own_col) for r in range(rows[0], rows[1] + 1))
    holder = state.ball_holder
    ball = state.positions[holder]
    roles = [_CYCLE[i % 3] for i in range(n)]
    opponents = [state.positions[f] for f in range(2 * n) if not lo <= f < lo + n]

    def marked(p) -> bool:
        return any(cheb(p, q) <= 1 for q in opponents)

    actions = [HOLD] * n
    if lo <= holder < lo + n:
        h = holder - lo
        hp = ball
        if n > 1 and marked(hp):
            options = []
            for j in range(n):
                if j == h:
                    continue
                tp = state.positions[lo + j]
                if marked(tp):
                    continue
                lane = bresenham_between(hp, tp)
                if any(c in opponents for c in lane):
                    continue
                options.append((goal_distance(tp, attack_col, rows), j))
            if options:
                actions[h] = pass_code(h, min(options)[1])
        if actions[h] == HOLD:
            actions[h] = _greedy(
                state, holder, lambda p: goal_distance(p, attack_col, rows), occupied, own_goal_cells, strict=False
            )
        for i in range(n):
            if i == h:
                continue
            offset = {Role.STRIKER: 3, Role.MIDFIELDER: 0, Role.DEFENDER: -3}[roles[i]]
            lane_row = ball[0] + (2 if i % 2 else -2)
            spot = _clamp((lane_row, ball[1] + forward * offset), H, W)
            actions[i] = _greedy(state, lo + i, lambda p, s=spot: cheb(p, s), occupied)
        return actions

    own_half = ball[1] < W / 2 if team == Team.LEFT else ball[1] >= W / 2
    for i in range(n):
        me = state.positions[lo + i]
        role = roles[i]
        if role == Role.STRIKER or (not own_half and role == Role.MIDFIELDER and n < 3):
            if cheb(me, ball) == 1:
                for code in range(1, 9):
                    if move_target(me, code) == ball:
                        actions[i] = code
                        break
            else:
                actions[i] = _greedy(state, lo + i, lambda p: cheb(p, ball), occupied)
            continue
        if own_half:
            frac = 0.3 if role == Role.DEFENDER else 0.6
            spot = (
                round(goal_mid[0] + frac * (ball[0] - goal_mid[0])),
                round(goal_mid[1] + frac * (ball[1] - goal_mid[1])),
            )
        elif role == Role.DEFENDER:
            spot = (ball[0], own_col + forward * (W // 4))
        else:
            spot = (ball[0], W // 2 - (1 if team == Team.LEFT else 0))
        spot = _clamp(spot, H, W)
        keep = None
        if own_half:
            # retreat only: each step gets closer to our goal line or to the ball-goal segment
            gl = abs(me[1] - own_col)
            sd = segment_distance(me, goal_mid, ball)
            keep = lambda t, gl=gl, sd=sd: abs(t[1] - own_col) < gl or segment_distance(t, goal_mid, ball) < sd
        actions[i] = _greedy(state, lo + i, lambda p, s=spot: cheb(p, s), occupied, keep=keep)
    return actions
