"""Exact finite MDPs for verifying the hierarchy's improvement claims."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TabularMdp:
    transition: np.ndarray      # P[s, a, s']
    reward: np.ndarray          # R[s, a]
    initial_dist: np.ndarray    # rho0[s]
    terminal: np.ndarray = field(default=None)  # bool per state

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.initial_dist = np.asarray(self.initial_dist, dtype=np.float64)
        if self.terminal is None:
            self.terminal = np.zeros(self.transition.shape[0], dtype=bool)
        s, a, s2 = self.transition.shape
        if s != s2 or self.reward.shape != (s, a) or self.initial_dist.shape != (s,):
            raise ValueError("inconsistent MDP table shapes")
        rows = self.transition.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if abs(self.initial_dist.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must sum to 1")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


def random_mdp(n_states: int, n_actions: int, rng: np.random.Generator) -> TabularMdp:
    """Dirichlet-random transition rows and uniform [0, 1] rewards."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("need at least one state and one action")
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    # exact renormalization so row sums hold to 1e-12 regardless of rounding
    transition = transition / transition.sum(axis=2, keepdims=True)
    reward = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    initial = rng.dirichlet(np.ones(n_states))
    initial = initial / initial.sum()
    return TabularMdp(transition, reward, initial)


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, rng.random() * c[-1]), len(probs) - 1))


class _FixedObs:
    __slots__ = ("low", "high")

    def __init__(self, low, high):
        self.low = low
        self.high = high


class TabularRolloutEnv:
    """Adapter exposing a TabularMdp through the rollout protocol.

    Observations at both levels are the one-hot state; episodes truncate
    after `horizon` low steps so infinite-horizon chains can be sampled.
    The transition noise draws from the episode stream handed to reset.
    """

    def __init__(self, mdp: TabularMdp, horizon: int):
        self.mdp = mdp
        self.horizon = horizon
        self.low_obs_dim = mdp.n_states
        self.high_obs_dim = mdp.n_states
        self._eye = np.eye(mdp.n_states)
        self._rng = None

    def _obs(self, s: int) -> _FixedObs:
        return _FixedObs(self._eye[s], self._eye[s])

    def reset(self, rng: np.random.Generator):
        self._rng = rng
        s = _sample_index(self.mdp.initial_dist, rng)
        return (s, 0), self._obs(s)

    def step(self, state, action):
        s, t = state
        a = int(action)
        s_next = _sample_index(self.mdp.transition[s, a], self._rng)
        reward = float(self.mdp.reward[s, a])
        t += 1
        done = t >= self.horizon or bool(self.mdp.terminal[s_next])
        return (s_next, t), self._obs(s_next), reward, done, {"goal": False}


class TabularHighPolicy:
    """High-level table pi_h[s, z] over the one-hot state observation."""

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=np.float64)

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        s = int(np.argmax(obs))
        probs = self.table[s]
        z = _sample_index(probs, rng)
        logp = float(np.log(probs[z]))
        return z, logp, np.log(probs)


class TabularLowPolicy:
    """Low-level table pi_l[s, z, a]; decodes (state, skill) from the
    one-hot policy input assembled by the rollout collector."""

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=np.float64)
        self.n_states = self.table.shape[0]

    def act(self, x: np.ndarray, rng: np.random.Generator):
        s = int(np.argmax(x[:self.n_states]))
        z = int(np.argmax(x[self.n_states:]))
        probs = self.table[s, z]
        a = _sample_index(probs, rng)
        return a, float(np.log(probs[a])), np.log(probs)
