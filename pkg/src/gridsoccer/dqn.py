"""Q-learning teams: concurrent, parameter sharing, and coordinated learning with communication."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gridsoccer import nn
from gridsoccer.agents import TeamController
from gridsoccer.encoding import JointCommAction, encode_basic, encode_comm, joint_from_index
from gridsoccer.env import AgentId, GameState, StepOutcome, Team


class BufferNotReady(RuntimeError):
    pass


def dqn_spec(input_shape: Sequence[int], num_outputs: int, preset: str = "full") -> nn.NetworkSpec:
    """Q-network layer chains.

    ``full``: three convolutions and two dense layers (composes on 10x18 boards).
    ``small``: two convolutions and two dense layers (for boards down to 5x5).
    """
    if preset == "full":
        layers = [
            nn.Conv(32, 3, 3, 1), nn.ReLU(),
            nn.Conv(64, 3, 3, 1), nn.ReLU(),
            nn.Conv(64, 4, 4, 2), nn.ReLU(),
            nn.Flatten(), nn.Dense(256), nn.ReLU(), nn.Dense(num_outputs),
        ]
    elif preset == "small":
        layers = [
            nn.Conv(32, 3, 3, 1), nn.ReLU(),
            nn.Conv(64, 3, 3, 1), nn.ReLU(),
            nn.Flatten(), nn.Dense(256), nn.ReLU(), nn.Dense(num_outputs),
        ]
    else:
        raise ValueError(f"unknown DQN preset {preset!r}")
    return nn.NetworkSpec(tuple(input_shape), tuple(layers))


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 0.5
    end: float = 0.05
    decay_steps: int = 300_000

    def __call__(self, t: int) -> float:
        if t >= self.decay_steps:
            return self.end
        return self.start + (self.end - self.start) * t / self.decay_steps


@dataclass
class Experience:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


class ReplayBuffer:
    """FIFO ring of experiences with uniform sampling (with replacement)."""

    def __init__(self, capacity: int = 50_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Experience] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, e: Experience) -> None:
        if len(self._items) < self.capacity:
            self._items.append(e)
        else:
            self._items[self._next] = e
        self._next = (self._next + 1) % self.capacity

    def contents(self) -> list[Experience]:
        """Stored experiences, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next :] + self._items[: self._next]

    def ready(self, m: int) -> bool:
        return len(self._items) >= m

    def sample(self, m: int, rng: np.random.Generator) -> list[Experience]:
        if not self.ready(m):
            raise BufferNotReady(f"buffer holds {len(self)} < {m} experiences")
        idx = rng.integers(0, len(self._items), size=m)
        return [self._items[i] for i in idx]


def epsilon_greedy(q: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """One draw decides exploration; ties in the greedy branch go to the lowest index."""
    if rng.random() < eps:
        return int(rng.integers(0, q.shape[-1]))
    return int(np.argmax(q))


def select_action(params: nn.NetworkParams, obs: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    q = nn.predict(params, obs[None])[0]
    return epsilon_greedy(q, eps, rng)


def stack(batch: Sequence[Experience]):
    s = np.stack([e.s for e in batch]).astype(np.float64)
    s2 = np.stack([e.s_next for e in batch]).astype(np.float64)
    a = np.array([e.a for e in batch], dtype=np.int64)
    r = np.array([e.r for e in batch], dtype=np.float64)
    term = np.array([e.terminal for e in batch], dtype=bool)
    return s, a, r, s2, term


def td_loss_and_gradient(
    params: nn.NetworkParams,
    target: nn.NetworkParams,
    batch: Sequence[Experience],
    gamma: float,
):
    """Mean squared TD error with a frozen bootstrap; returns ``(loss, grads)``."""
    if not batch:
        raise ValueError("empty batch")
    s, a, r, s2, term = stack(batch)
    return td_loss_arrays(params, target, s, a, r, s2, term, gamma)


def td_loss_arrays(params, target, s, a, r, s2, term, gamma):
    B = len(a)
    q, cache = nn.forward(params, s)
    boot = nn.predict(target, s2).max(axis=1)
    y = r + gamma * np.where(term, 0.0, boot)
    taken = q[np.arange(B), a]
    diff = y - taken
    loss = float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise nn.TrainingError("non-finite TD loss")
    gq = np.zeros_like(q)
    gq[np.arange(B), a] = -2.0 * diff / B
    grads, _, _ = nn.backward(params, cache, gq)
    return loss, grads


def credit_assign(global_rewards: Sequence[float], q_values: Sequence[float], mode: str = "off") -> np.ndarray:
    """Split team rewards by relative Q-value.

    ``ratio``: R_i = R * Q'_i / mean(Q') where Q' is Q shifted so its minimum is
    at least 1, then clamped to [0.5 R, 2 R] (ordered by sign of R).
    """
    R = np.asarray(global_rewards, dtype=np.float64)
    if mode == "off":
        return R.copy()
    if mode != "ratio":
        raise ValueError(f"unknown credit mode {mode!r}")
    q = np.asarray(q_values, dtype=np.float64)
    lo = q.min()
    if lo < 1.0:
        q = q - lo + 1.0
    share = R * q / q.mean()
    bounds = np.stack([0.5 * R, 2.0 * R])
    return np.clip(share, bounds.min(axis=0), bounds.max(axis=0))


class QLearner:
    """One online network, its target copy and Adam state."""

    def __init__(self, spec: nn.NetworkSpec, rng: np.random.Generator, lr: float = 1e-3, gamma: float = 0.99):
        self.q = nn.init_params(spec, rng)
        self.target = self.q.copy()
        self.opt = nn.AdamState.for_params(self.q, lr=lr)
        self.gamma = gamma

    def update(self, s, a, r, s2, term) -> float:
        loss, grads = td_loss_arrays(self.q, self.target, s, a, r, s2, term, self.gamma)
        nn.adam_step(self.q, grads, self.opt)
        return loss

    def sync_target(self) -> None:
        self.target.assign(self.q)


class DQNTeam(TeamController):
    """Shared machinery: epsilon schedule, observation building, transition bookkeeping."""

    learning = True

    def __init__(
        self,
        n: int,
        H: int,
        W: int,
        team: Team = Team.LEFT,
        *,
        seed_rngs: dict[str, np.random.Generator],
        lr: float = 1e-3,
        gamma: float = 0.99,
        schedule: EpsilonSchedule = EpsilonSchedule(),
        preset: str = "full",
        use_replay: bool = False,
        buffer_size: int = 50_000,
        minibatch: int = 1000,
        train_every: int = 1,
    ):
        super().__init__(n, team)
        self.H, self.W = H, W
        self.lr, self.gamma = lr, gamma
        self.schedule = schedule
        self.preset = preset
        self.explore_rng = seed_rngs["explore"]
        self.replay_rng = seed_rngs["replay"]
        self.init_rng = seed_rngs["init"]
        self.use_replay = use_replay
        self.buffer = ReplayBuffer(buffer_size) if use_replay else None
        self.minibatch = minibatch
        self.train_every = train_every
        self.steps = 0
        self.fixed_epsilon: float | None = None
        self._pending: tuple | None = None

    @property
    def epsilon(self) -> float:
        if self.fixed_epsilon is not None:
            return self.fixed_epsilon
        return self.schedule(self.steps)

    # subclasses provide these
    def observations(self, state: GameState) -> np.ndarray:
        raise NotImplementedError

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def learners(self) -> list[QLearner]:
        raise NotImplementedError

    def to_env_codes(self, indices: list[int]) -> list[int]:
        return indices

    def act_canonical(self, state: GameState) -> list[int]:
        obs = self.observations(state)
        q = self.q_values(obs)
        eps = self.epsilon
        indices = [epsilon_greedy(q[i], eps, self.explore_rng) for i in range(self.n)]
        self._pending = (state, obs, indices, q[np.arange(self.n), indices])
        self.after_select(indices)
        return self.to_env_codes(indices)

    def after_select(self, indices: list[int]) -> None:
        pass

    def shape_rewards(self, rewards: np.ndarray, q_taken: np.ndarray) -> np.ndarray:
        return rewards

    def observe(self, state: GameState, codes: list[int], outcome: StepOutcome) -> float | None:
        if self._pending is None or not self.learning:
            self._pending = None
            return None
        _, obs, indices, q_taken = self._pending
        self._pending = None
        self.steps += 1
        terminal = outcome.goal_scored is not None
        nxt = self.view(outcome.final_state or outcome.next_state)
        obs2 = self.observations(nxt)
        rewards = self.shape_rewards(self.team_rewards(outcome), q_taken)
        loss = self.learn(obs, np.asarray(indices), rewards, obs2, terminal)
        if terminal:
            for learner in self.learners():
                learner.sync_target()
        return loss

    def learn(self, obs, actions, rewards, obs2, terminal) -> float | None:
        raise NotImplementedError

    def sync_target(self) -> None:
        for learner in self.learners():
            learner.sync_target()

    def networks(self) -> dict[str, nn.NetworkParams]:
        raise NotImplementedError


class SharedQTeam(DQNTeam):
    """Parameter sharing: one Q-network driven by every agent's own observation."""

    kind = "paramshare"

    def __init__(self, n, H, W, team=Team.LEFT, *, layout: str = "basic", **kw):
        super().__init__(n, H, W, team, **kw)
        self.layout = layout
        channels = 4
        self.learner = QLearner(
            dqn_spec((H, W, channels), self.head_size(), self.preset), self.init_rng, self.lr, self.gamma
        )

    def head_size(self) -> int:
        return self.n + 8

    def learners(self) -> list[QLearner]:
        return [self.learner]

    def observations(self, state: GameState) -> np.ndarray:
        if self.layout == "comm":
            zeros = [0] * self.n
            return np.stack([encode_comm(state, AgentId(Team.LEFT, i), zeros, 1) for i in range(self.n)])
        return np.stack([encode_basic(state, AgentId(Team.LEFT, i)) for i in range(self.n)])

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return nn.predict(self.learner.q, obs)

    def learn(self, obs, actions, rewards, obs2, terminal) -> float | None:
        term = np.full(self.n, terminal)
        if not self.use_replay:
            return self.learner.update(obs, actions, rewards, obs2, term)
        for i in range(self.n):
            self.buffer.push(
                Experience(obs[i].astype(np.uint8), int(actions[i]), float(rewards[i]), obs2[i].astype(np.uint8), terminal)
            )
        if self.steps % self.train_every or not self.buffer.ready(self.minibatch):
            return None
        s, a, r, s2, t = stack(self.buffer.sample(self.minibatch, self.replay_rng))
        return self.learner.update(s, a, r, s2, t)

    def networks(self) -> dict[str, nn.NetworkParams]:
        return {"q": self.learner.q}


class CoordinatedTeam(SharedQTeam):
    """Parameter sharing over joint (move, broadcast symbol) actions.

    Teammates' last symbols replace the teammate channel; the head has
    ``(n + 8) * comm_size`` outputs.
    """

    kind = "coordinated"

    def __init__(self, n, H, W, team=Team.LEFT, *, comm_size: int = 4, credit_mode: str = "off", **kw):
        self.comm_size = comm_size
        self.credit_mode = credit_mode
        self.comm_history = [0] * n
        kw.setdefault("use_replay", True)
        kw.pop("layout", None)
        DQNTeam.__init__(self, n, H, W, team, **kw)
        self.layout = "comm"
        self.learner = QLearner(
            dqn_spec((H, W, 3 + comm_size), self.head_size(), self.preset), self.init_rng, self.lr, self.gamma
        )

    def head_size(self) -> int:
        return (self.n + 8) * self.comm_size

    def observations(self, state: GameState) -> np.ndarray:
        return self.observations_with(state, self.comm_history)

    def observations_with(self, state: GameState, comms: Sequence[int]) -> np.ndarray:
        return np.stack(
            [encode_comm(state, AgentId(Team.LEFT, i), comms, self.comm_size) for i in range(self.n)]
        )

    def to_env_codes(self, indices: list[int]) -> list[int]:
        return [joint_from_index(i, self.n, self.comm_size).base for i in indices]

    def after_select(self, indices: list[int]) -> None:
        self._next_history = [joint_from_index(i, self.n, self.comm_size).comm for i in indices]

    def act_canonical(self, state: GameState) -> list[int]:
        codes = super().act_canonical(state)
        # symbols chosen now are what teammates see next step
        self.comm_history = self._next_history
        return codes

    def shape_rewards(self, rewards: np.ndarray, q_taken: np.ndarray) -> np.ndarray:
        if self.credit_mode == "off":
            return rewards
        team_reward = np.full(self.n, rewards.mean())
        return credit_assign(team_reward, q_taken, self.credit_mode)

    def reset_comms(self) -> None:
        self.comm_history = [0] * self.n


def coordinated_step(
    params: nn.NetworkParams,
    state: GameState,
    comm_history: Sequence[int],
    comm_size: int,
    eps: float,
    rng: np.random.Generator,
    team: Team = Team.LEFT,
) -> tuple[list[JointCommAction], list[int]]:
    """Decentralized joint-action selection for one team; returns actions and the next history."""
    n = state.config.n
    actions = []
    for i in range(n):
        obs = encode_comm(state, AgentId(team, i), comm_history, comm_size)
        idx = select_action(params, obs, eps, rng)
        actions.append(joint_from_index(idx, n, comm_size))
    return actions, [a.comm for a in actions]


class ConcurrentTeam(DQNTeam):
    """Independent learners: one Q-network per agent, each trained on its own transitions."""

    kind = "concurrent"

    def __init__(self, n, H, W, team=Team.LEFT, **kw):
        super().__init__(n, H, W, team, **kw)
        spec = dqn_spec((H, W, 4), n + 8, self.preset)
        self.agents = [QLearner(spec, self.init_rng, self.lr, self.gamma) for _ in range(n)]

    def learners(self) -> list[QLearner]:
        return self.agents

    def observations(self, state: GameState) -> np.ndarray:
        return np.stack([encode_basic(state, AgentId(Team.LEFT, i)) for i in range(self.n)])

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return np.stack([nn.predict(self.agents[i].q, obs[i : i + 1])[0] for i in range(self.n)])

    def learn(self, obs, actions, rewards, obs2, terminal) -> float | None:
        term = np.array([terminal])
        losses = [
            self.agents[i].update(obs[i : i + 1], actions[i : i + 1], rewards[i : i + 1], obs2[i : i + 1], term)
            for i in range(self.n)
        ]
        return float(np.mean(losses))

    def networks(self) -> dict[str, nn.NetworkParams]:
        return {f"q{i}": a.q for i, a in enumerate(self.agents)}

