"""Per-agent observation tensors and action index maps.

All tensors are ``(H, W, C)`` float64 arrays of zeros and ones.

Layouts:
    basic   [self, teammates, opponents, ball]
    comm    [self, opponents, ball, teammates-that-said-0, ..., teammates-that-said-(k-1)]
    critic  [own player 0, ..., own player n-1, opponents, ball]
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from gridsoccer.env import AgentId, ContractError, GameState, Team


class DecodeError(ValueError):
    pass


def encode_basic(state: GameState, agent: AgentId) -> np.ndarray:
    cfg = state.config
    n = cfg.n
    me = agent.flat(n)
    obs = np.zeros((cfg.H, cfg.W, 4))
    lo = int(agent.team) * n
    for f, (r, c) in enumerate(state.positions):
        if f == me:
            obs[r, c, 0] = 1.0
        elif lo <= f < lo + n:
            obs[r, c, 1] = 1.0
        else:
            obs[r, c, 2] = 1.0
    r, c = state.positions[state.ball_holder]
    obs[r, c, 3] = 1.0
    return obs


def encode_comm(state: GameState, agent: AgentId, last_comms: Sequence[int], comm_size: int) -> np.ndarray:
    """``last_comms[i]`` is the symbol broadcast last step by team-local agent ``i``."""
    cfg = state.config
    n = cfg.n
    if len(last_comms) != n:
        raise ContractError(f"need {n} comm symbols, got {len(last_comms)}")
    me = agent.flat(n)
    obs = np.zeros((cfg.H, cfg.W, 3 + comm_size))
    lo = int(agent.team) * n
    for f, (r, c) in enumerate(state.positions):
        if f == me:
            obs[r, c, 0] = 1.0
        elif lo <= f < lo + n:
            g = int(last_comms[f - lo])
            if not 0 <= g < comm_size:
                raise ContractError(f"comm symbol {g} outside [0, {comm_size})")
            obs[r, c, 3 + g] = 1.0
        else:
            obs[r, c, 1] = 1.0
    r, c = state.positions[state.ball_holder]
    obs[r, c, 2] = 1.0
    return obs


def encode_critic(state: GameState, team: Team) -> np.ndarray:
    cfg = state.config
    n = cfg.n
    obs = np.zeros((cfg.H, cfg.W, n + 2))
    lo = int(team) * n
    for f, (r, c) in enumerate(state.positions):
        if lo <= f < lo + n:
            obs[r, c, f - lo] = 1.0
        else:
            obs[r, c, n] = 1.0
    r, c = state.positions[state.ball_holder]
    obs[r, c, n + 1] = 1.0
    return obs


def comm_to_basic(obs: np.ndarray) -> np.ndarray:
    """Collapse a comm-layout tensor to the basic layout (teammate channels merged)."""
    return np.stack(
        [obs[..., 0], obs[..., 3:].sum(axis=-1), obs[..., 1], obs[..., 2]],
        axis=-1,
    )


def mirror_obs(obs: np.ndarray) -> np.ndarray:
    """Horizontal flip of an ``(H, W, C)`` tensor."""
    return obs[:, ::-1, :]


class JointCommAction(NamedTuple):
    base: int
    comm: int


def joint_index(action: JointCommAction, comm_size: int) -> int:
    return action.base * comm_size + action.comm


def joint_from_index(index: int, n: int, comm_size: int) -> JointCommAction:
    if not 0 <= index < (n + 8) * comm_size:
        raise DecodeError(f"joint index {index} outside [0, {(n + 8) * comm_size})")
    return JointCommAction(*divmod(int(index), comm_size))


def action_index(code: int, n: int) -> int:
    if not 0 <= code < n + 8:
        raise DecodeError(f"action code {code} outside [0, {n + 8})")
    return int(code)


def action_from_index(index: int, n: int) -> int:
    if not 0 <= index < n + 8:
        raise DecodeError(f"action index {index} outside [0, {n + 8})")
    return int(index)


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


def others_one_hot(joint: Sequence[int], agent: int, num_actions: int) -> np.ndarray:
    """Concatenated one-hots of every team action except ``agent``'s, in agent order."""
    parts = [one_hot(a, num_actions) for i, a in enumerate(joint) if i != agent]
    return np.concatenate(parts) if parts else np.zeros(0)
