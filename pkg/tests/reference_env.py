"""Straight-line reference of the grid-soccer resolution rules.

Shares no code with ``gridsoccer.env`` beyond plain data. Used only as a test
oracle: it returns (positions, holder, score, per-agent event names, goal team).
"""

DELTAS = {
    1: (1, 0),
    2: (0, -1),
    3: (-1, 0),
    4: (0, 1),
    5: (1, 1),
    6: (1, -1),
    7: (-1, -1),
    8: (-1, 1),
}

VALUES = {
    "agent_own_goal": -100,
    "team_own_goal": -75,
    "agent_scored_goal": 50,
    "team_scored_goal": 50,
    "opponent_scored_goal": -50,
    "opponent_own_goal": 10,
    "agent_turnover": -10,
    "team_turnover": -10,
    "agent_steal": 10,
    "team_steal": 10,
    "agent_illegal_move": -3,
    "agent_successful_pass": -1,
    "agent_hold": -1,
    "agent_legal_move": -2,
}


def line_cells(a, b):
    """Cells strictly between a and b.

    One cell per step along the longer axis; the other coordinate is the exact
    line value rounded to nearest, with exact halves rounded toward b.
    """
    (x0, y0), (x1, y1) = a, b
    dx, dy = x1 - x0, y1 - y0
    steps = max(abs(dx), abs(dy))

    def along(start, delta, i):
        q, rem = divmod(delta * i, steps)  # floor division: rem in [0, steps)
        if 2 * rem > steps or (2 * rem == steps and delta > 0):
            q += 1
        return start + q

    return [(along(x0, dx, i), along(y0, dy, i)) for i in range(1, steps)]


def kickoff(H, W, n):
    top = (H - (2 * n - 1)) // 2
    left = [(top + 2 * k, W // 4) for k in range(n)]
    return left + [(r, W - 1 - c) for (r, c) in left]


def goal_rows(H, rows):
    if rows is not None:
        return set(range(rows[0], rows[1] + 1))
    span = min(4, H)
    first = (H - span) // 2
    return set(range(first, first + span))


def reference_step(H, W, n, positions, holder, score, actions, rows=None, episode_steps=0, step_cap=500):
    players = list(range(2 * n))
    team = {p: p // n for p in players}
    where = {p: tuple(positions[p]) for p in players}
    ev = {p: [] for p in players}
    ball = holder
    goal_set = goal_rows(H, rows)

    def award(winner, loser):
        for p in players:
            if team[p] == team[winner]:
                ev[p].append("agent_steal" if p == winner else "team_steal")
            else:
                ev[p].append("agent_turnover" if p == loser else "team_turnover")

    passed = None
    a = actions[ball]
    if a >= 9:
        passed = ball
        k = a - 8
        mates = [p for p in players if team[p] == team[ball] and p != ball]
        mates.sort()
        target = mates[k - 1]
        cut = None
        for cell in line_cells(where[ball], where[target]):
            for p in players:
                if where[p] == cell and team[p] != team[ball]:
                    cut = p
            if cut is not None:
                break
        if cut is None:
            ev[ball].append("agent_successful_pass")
            ball = target
        else:
            award(cut, ball)
            ball = cut

    scored_by = None
    for p in players:
        if p == passed:
            continue
        a = actions[p]
        if a == 0 or a >= 9:
            ev[p].append("agent_hold")
            continue
        r, c = where[p]
        nr, nc = r + DELTAS[a][0], c + DELTAS[a][1]
        if nr < 0 or nc < 0 or nr >= H or nc >= W:
            ev[p].append("agent_illegal_move")
            continue
        blocker = [q for q in players if where[q] == (nr, nc)]
        if blocker:
            q = blocker[0]
            stealable = q == ball and team[q] != team[p] and actions[q] != 0
            if stealable:
                award(p, q)
                ball = p
            else:
                ev[p].append("agent_illegal_move")
            continue
        where[p] = (nr, nc)
        ev[p].append("agent_legal_move")
        if p == ball and nc in (0, W - 1) and nr in goal_set:
            scored_by = p

    goal = None
    new_score = list(score)
    if scored_by is not None and scored_by == ball:
        s = scored_by
        col = where[s][1]
        mine_attacks = W - 1 if team[s] == 0 else 0
        own = col != mine_attacks
        goal = 1 - team[s] if own else team[s]
        new_score[goal] += 1
        ev[s] = [e for e in ev[s] if e != "agent_legal_move"]
        for p in players:
            if p == s:
                ev[p].append("agent_own_goal" if own else "agent_scored_goal")
            elif team[p] == team[s]:
                ev[p].append("team_own_goal" if own else "team_scored_goal")
            else:
                ev[p].append("opponent_own_goal" if own else "opponent_scored_goal")

    final = [where[p] for p in players]
    if goal is not None:
        final = kickoff(H, W, n)
        ball = (1 - goal) * n + (n - 1) // 2
    elif episode_steps + 1 >= step_cap:
        final = kickoff(H, W, n)
        ball = team[ball] * n + (n - 1) // 2
    rewards = [sum(VALUES[e] for e in ev[p]) for p in players]
    return final, ball, tuple(new_score), [ev[p] for p in players], rewards, goal
