"""Counterfactual actor-critic team.

A shared softmax policy (agent identity as a one-hot side input) acts from each
agent's own board tensor. A centralized critic sees the whole team, the other
agents' actions and which agent it is scoring, and outputs that agent's
Q-vector in one pass. The critic regresses on forward-view lambda-returns; the
policy ascends log-probability times the counterfactual advantage.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gridsoccer import nn
from gridsoccer.agents import TeamController
from gridsoccer.dqn import EpsilonSchedule
from gridsoccer.encoding import encode_basic, encode_critic, one_hot, others_one_hot
from gridsoccer.env import AgentId, GameState, StepOutcome, Team

PROB_FLOOR = 1e-8


def critic_spec(H: int, W: int, n: int) -> nn.NetworkSpec:
    A = n + 8
    return nn.NetworkSpec(
        (H, W, n + 2),
        (
            nn.Conv(32, 3, 3, 1), nn.ReLU(),
            nn.Conv(64, 4, 4, 2), nn.ReLU(),
            nn.Flatten(), nn.ConcatSide((n - 1) * A + n),
            nn.Dense(128), nn.ReLU(),
            nn.Dense(64), nn.ReLU(),
            nn.Dense(A),
        ),
    )


def policy_spec(H: int, W: int, n: int) -> nn.NetworkSpec:
    A = n + 8
    return nn.NetworkSpec(
        (H, W, 4),
        (
            nn.Conv(32, 3, 3, 1), nn.ReLU(),
            nn.Conv(64, 4, 4, 2), nn.ReLU(),
            nn.Flatten(), nn.ConcatSide(n),
            nn.Dense(128), nn.ReLU(),
            nn.Dense(64), nn.ReLU(),
            nn.Dense(A), nn.Softmax(),
        ),
    )


def critic_side(joint: Sequence[int], agent: int, n: int) -> np.ndarray:
    return np.concatenate([others_one_hot(joint, agent, n + 8), one_hot(agent, n)])


def critic_q(critic: nn.NetworkParams, critic_obs: np.ndarray, agent: int, u_minus_a: Sequence[int], n: int) -> np.ndarray:
    """Q-values of every action of ``agent`` with the other agents' actions fixed."""
    if len(u_minus_a) != n - 1:
        raise nn.ShapeError(f"need {n - 1} other actions, got {len(u_minus_a)}")
    joint = list(u_minus_a)
    joint.insert(agent, 0)  # placeholder, excluded from the side input
    side = critic_side(joint, agent, n)
    return nn.predict(critic, critic_obs[None], side[None])[0]


def explore_policy(pi: np.ndarray, eps: float) -> np.ndarray:
    """Mixture ``(1 - eps) * pi + eps * uniform``."""
    pi = np.asarray(pi, dtype=np.float64)
    return (1.0 - eps) * pi + eps / pi.shape[-1]


def counterfactual_advantage(q_values: np.ndarray, pi: np.ndarray, taken) -> np.ndarray:
    """``Q[taken] - sum_a' pi(a') Q[a']`` along the last axis (batched)."""
    q = np.asarray(q_values, dtype=np.float64)
    p = np.asarray(pi, dtype=np.float64)
    taken = np.asarray(taken)
    chosen = np.take_along_axis(q, taken[..., None], axis=-1)[..., 0]
    return chosen - (p * q).sum(axis=-1)


def lambda_returns(
    rewards: np.ndarray,
    q_next: np.ndarray,
    lam: float,
    gamma: float,
    terminal: bool = True,
    bootstrap: np.ndarray | float = 0.0,
) -> np.ndarray:
    """Forward-view SARSA(lambda) returns over the time axis (axis 0).

    ``q_next[t]`` is Q of the action actually taken at step t (so
    ``q_next[t + 1]`` bootstraps step t). After the last step the tail is 0
    for terminal episodes, else ``bootstrap``.
    """
    r = np.asarray(rewards, dtype=np.float64)
    q = np.asarray(q_next, dtype=np.float64)
    T = r.shape[0]
    if T == 0:
        raise ValueError("empty trace")
    out = np.empty_like(r)
    tail = np.zeros_like(r[0]) if terminal else np.broadcast_to(bootstrap, r[0].shape).astype(np.float64)
    out[T - 1] = r[T - 1] + gamma * tail
    for t in range(T - 2, -1, -1):
        out[t] = r[t] + gamma * ((1.0 - lam) * q[t + 1] + lam * out[t + 1])
    return out


@dataclass
class EpisodeTrace:
    critic_obs: list[np.ndarray] = field(default_factory=list)  # (H, W, n+2) per step
    policy_obs: list[np.ndarray] = field(default_factory=list)  # (n, H, W, 4) per step
    actions: list[list[int]] = field(default_factory=list)
    rewards: list[np.ndarray] = field(default_factory=list)
    terminal: bool = False

    def __len__(self) -> int:
        return len(self.rewards)


def _critic_batch(trace: EpisodeTrace, n: int):
    T = len(trace)
    obs = np.repeat(np.stack(trace.critic_obs[:T]), n, axis=0)
    side = np.stack([critic_side(trace.actions[t], a, n) for t in range(T) for a in range(n)])
    return obs, side


def trace_q_values(critic: nn.NetworkParams, trace: EpisodeTrace, n: int) -> np.ndarray:
    """Q-vectors for every (t, agent): shape (T, n, |A|)."""
    obs, side = _critic_batch(trace, n)
    return nn.predict(critic, obs, side).reshape(len(trace), n, n + 8)


def sarsa_lambda_targets(trace: EpisodeTrace, critic: nn.NetworkParams, lam: float, gamma: float, n: int) -> np.ndarray:
    if len(trace) == 0:
        raise ValueError("empty trace")
    q = trace_q_values(critic, trace, n)
    u = np.asarray(trace.actions[: len(trace)])
    q_taken = np.take_along_axis(q, u[..., None], axis=-1)[..., 0]
    return lambda_returns(np.stack(trace.rewards), q_taken, lam, gamma, terminal=True)


def critic_loss_and_gradient(critic: nn.NetworkParams, trace: EpisodeTrace, targets: np.ndarray, n: int):
    obs, side = _critic_batch(trace, n)
    q, cache = nn.forward(critic, obs, side)
    u = np.asarray(trace.actions[: len(trace)]).reshape(-1)
    idx = np.arange(len(u))
    diff = q[idx, u] - np.asarray(targets).reshape(-1)
    loss = float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise nn.TrainingError("non-finite critic loss")
    g = np.zeros_like(q)
    g[idx, u] = 2.0 * diff / len(u)
    grads, _, _ = nn.backward(critic, cache, g)
    return loss, grads


def critic_update(critic: nn.NetworkParams, opt: nn.AdamState, trace: EpisodeTrace, targets: np.ndarray, n: int) -> float:
    loss, grads = critic_loss_and_gradient(critic, trace, targets, n)
    nn.adam_step(critic, grads, opt)
    return loss


def policy_gradient(policy: nn.NetworkParams, obs: np.ndarray, side: np.ndarray, actions: np.ndarray, advantages: np.ndarray, timesteps: int):
    """Gradient of ``-(1/T) sum log pi(u|s) * A`` (descent direction for Adam)."""
    p, cache = nn.forward(policy, obs, side)
    idx = np.arange(len(actions))
    chosen = np.maximum(p[idx, actions], PROB_FLOOR)
    objective = float(np.sum(np.log(chosen) * advantages) / timesteps)
    g = np.zeros_like(p)
    g[idx, actions] = -advantages / chosen / timesteps
    grads, _, _ = nn.backward(policy, cache, g)
    return objective, grads


def policy_gradient_update(
    policy: nn.NetworkParams,
    opt: nn.AdamState,
    obs: np.ndarray,
    side: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    timesteps: int = 1,
) -> float:
    objective, grads = policy_gradient(policy, obs, side, actions, advantages, timesteps)
    nn.adam_step(policy, grads, opt)
    return objective


class COMATeam(TeamController):
    kind = "coma"
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
        critic_lr: float = 1e-3,
        gamma: float = 0.99,
        lam: float = 0.8,
        schedule: EpsilonSchedule = EpsilonSchedule(),
    ):
        super().__init__(n, team)
        self.H, self.W = H, W
        self.gamma, self.lam = gamma, lam
        self.schedule = schedule
        self.explore_rng = seed_rngs["explore"]
        init = seed_rngs["init"]
        self.critic = nn.init_params(critic_spec(H, W, n), init)
        self.policy = nn.init_params(policy_spec(H, W, n), init)
        self.critic_opt = nn.AdamState.for_params(self.critic, lr=critic_lr)
        self.policy_opt = nn.AdamState.for_params(self.policy, lr=lr)
        self.agent_side = np.eye(n)
        self.steps = 0
        self.fixed_epsilon: float | None = None
        self.trace = EpisodeTrace()
        self._pending = None

    @property
    def epsilon(self) -> float:
        if self.fixed_epsilon is not None:
            return self.fixed_epsilon
        return self.schedule(self.steps)

    def policy_obs(self, state: GameState) -> np.ndarray:
        return np.stack([encode_basic(state, AgentId(Team.LEFT, i)) for i in range(self.n)])

    def probabilities(self, state: GameState) -> np.ndarray:
        return nn.predict(self.policy, self.policy_obs(state), self.agent_side)

    def act_canonical(self, state: GameState) -> list[int]:
        obs = self.policy_obs(state)
        pi = nn.predict(self.policy, obs, self.agent_side)
        mixed = explore_policy(pi, self.epsilon)
        codes = []
        for i in range(self.n):
            cdf = np.cumsum(mixed[i])
            u = self.explore_rng.random() * cdf[-1]
            codes.append(int(min(np.searchsorted(cdf, u, side="right"), self.n + 7)))
        self._pending = (state, obs, codes)
        return codes

    def observe(self, state: GameState, codes: list[int], outcome: StepOutcome) -> float | None:
        if self._pending is None or not self.learning:
            self._pending = None
            return None
        view, obs, chosen = self._pending
        self._pending = None
        self.steps += 1
        self.trace.critic_obs.append(encode_critic(view, Team.LEFT))
        self.trace.policy_obs.append(obs)
        self.trace.actions.append(chosen)
        self.trace.rewards.append(self.team_rewards(outcome))
        if not outcome.episode_end:
            return None
        self.trace.terminal = True
        loss = self.update(self.trace)
        self.trace = EpisodeTrace()
        return loss

    def update(self, trace: EpisodeTrace) -> float:
        n = self.n
        T = len(trace)
        q = trace_q_values(self.critic, trace, n)
        u = np.asarray(trace.actions)
        q_taken = np.take_along_axis(q, u[..., None], axis=-1)[..., 0]
        targets = lambda_returns(np.stack(trace.rewards), q_taken, self.lam, self.gamma, terminal=True)
        obs = np.concatenate(trace.policy_obs)  # (T*n, H, W, 4)
        side = np.tile(self.agent_side, (T, 1))
        pi = nn.predict(self.policy, obs, side).reshape(T, n, n + 8)
        adv = counterfactual_advantage(q, pi, u)
        loss = critic_update(self.critic, self.critic_opt, trace, targets, n)
        policy_gradient_update(self.policy, self.policy_opt, obs, side, u.reshape(-1), adv.reshape(-1), T)
        return loss

    def networks(self) -> dict[str, nn.NetworkParams]:
        return {"critic": self.critic, "policy": self.policy}

    def sync_target(self) -> None:
        # the critic has no target network
        pass
