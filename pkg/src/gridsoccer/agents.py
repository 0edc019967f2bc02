"""Team controllers: the policy interface shared by scripted and learned teams.

A controller always reasons as the Left team. When it plays Right, the state
is mirrored before it looks and its chosen moves are mirrored back, so one
trained network can play either side.
"""
from __future__ import annotations

import numpy as np

from gridsoccer.env import GameState, StepOutcome, Team, mirror_action, mirror_state


class TeamController:
    kind = "base"
    learning = False

    def __init__(self, n: int, team: Team = Team.LEFT):
        self.n = n
        self.team = Team(team)

    def view(self, state: GameState) -> GameState:
        return mirror_state(state) if self.team == Team.RIGHT else state

    def to_absolute(self, codes: list[int]) -> list[int]:
        if self.team == Team.RIGHT:
            return [mirror_action(c) for c in codes]
        return list(codes)

    def to_canonical(self, codes) -> list[int]:
        # mirroring is an involution
        return self.to_absolute(list(codes))

    def act(self, state: GameState) -> list[int]:
        """Absolute-frame action codes for this team's agents, by team-local index."""
        return self.to_absolute(self.act_canonical(self.view(state)))

    def act_canonical(self, state: GameState) -> list[int]:
        raise NotImplementedError

    def team_rewards(self, outcome: StepOutcome) -> np.ndarray:
        lo = int(self.team) * self.n
        return np.asarray(outcome.rewards[lo : lo + self.n], dtype=np.float64)

    def observe(self, state: GameState, codes: list[int], outcome: StepOutcome) -> float | None:
        """Feed one transition (absolute frame). Returns a training loss if an update ran."""
        return None

    @property
    def epsilon(self) -> float:
        return 0.0


class RandomTeam(TeamController):
    kind = "random"

    def __init__(self, n: int, team: Team = Team.LEFT, rng: np.random.Generator | None = None):
        super().__init__(n, team)
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def act_canonical(self, state: GameState) -> list[int]:
        return [int(a) for a in self.rng.integers(0, self.n + 8, size=self.n)]


class HandcodedTeam(TeamController):
    kind = "handcoded"

    def act(self, state: GameState) -> list[int]:
        from gridsoccer.handcoded import handcoded_actions

        return handcoded_actions(state, self.team)
