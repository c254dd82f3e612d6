"""Behavior policies and decision-epoch sampling.

An *epoch sample* is everything that happens between two handoffs: who was
active and what it saw at the start, which successor it handed to, the
discounted reward accumulated along the way and how many primitive steps the
invocation lasted. Oracle extraction, AIS-gap estimation and the chain
diagnostics all work from streams of these samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Protocol, Sequence

import numpy as np

from .core import STOP, Environment, JointAction, JointState

#: ``next_interface`` value of an epoch that ended the episode.
TERMINAL = -1


@dataclass(frozen=True, slots=True)
class EpochSample:
    agent: int
    interface: int
    private: int
    successor: int
    reward: float
    duration: int
    next_interface: int
    next_private: int = 0


class Behavior(Protocol):
    def choose(self, state: JointState, choices: Sequence[int],
               rng: np.random.Generator) -> int: ...

    def probs(self, state: JointState, choices: Sequence[int]) -> np.ndarray: ...


class UniformBehavior:
    """Uniform successor choice over the offered set, optionally without STOP."""

    def __init__(self, allow_stop: bool = True):
        self.allow_stop = allow_stop

    def _filter(self, choices: Sequence[int]) -> Sequence[int]:
        if self.allow_stop:
            return choices
        kept = [c for c in choices if c != STOP]
        return kept or choices

    def choose(self, state, choices, rng):
        choices = self._filter(choices)
        return choices[int(rng.integers(len(choices)))]

    def probs(self, state, choices):
        kept = set(self._filter(choices))
        p = np.array([1.0 if c in kept else 0.0 for c in choices])
        return p / p.sum()


class TablePolicy:
    """Deterministic successor choice read from per-agent greedy tables.

    ``tables[i]`` is indexed by ``(observation, column)`` where the column of
    an agent id is the id itself and STOP occupies the last column.
    """

    def __init__(self, env: Environment, tables: Sequence[np.ndarray], maps=None):
        self.env = env
        self.tables = tables
        self.maps = maps if maps is not None else env.maps

    def choose(self, state, choices, rng):
        i = state.active
        row = self.tables[i][self.maps[i](state.interface, state.privates[i])]
        best, best_v = choices[0], -np.inf
        for c in choices:
            v = row[c]  # STOP == -1 reads the last column
            if v > best_v:
                best, best_v = c, v
        return best

    def probs(self, state, choices):
        c = self.choose(state, choices, None)
        return np.array([1.0 if x == c else 0.0 for x in choices])


def local_action(env: Environment, state: JointState, rng: np.random.Generator) -> int:
    if env.adaptable:
        return int(rng.integers(env.n_local_actions(state.active)))
    return env.internal_action(state, rng)


def iter_epochs(env: Environment, behavior: Behavior, rng: np.random.Generator,
                n_episodes: int | None = None) -> Iterator[EpochSample]:
    """Yield epoch samples from successive episodes under ``behavior``.

    Successor choices are made against the observation at the start of the
    invocation, matching the learner. An invocation ends at a handoff
    (including STOP); only STOP yields ``next_interface == TERMINAL``. A
    handoff on the last step of the horizon is a time-limit cut, so the
    successor's interface is still reported. An invocation still running when
    the horizon is reached yields nothing, exactly as the learner performs no
    update for it.
    """
    gamma = env.gamma
    episode = 0
    while n_episodes is None or episode < n_episodes:
        episode += 1
        state = env.reset(rng)
        while not state.done:
            start = state
            acc, disc, tau = 0.0, 1.0, 0
            while True:
                a = local_action(env, state, rng)
                if env.handoff_gate(state, rng):
                    c = behavior.choose(start, env.decision_successors(state), rng)
                else:
                    c = state.active
                out = env.step(state, JointAction(a, c), rng)
                acc += disc * out.reward
                disc *= gamma
                tau += 1
                state = out.next
                if out.handoff or out.terminated:
                    break
            if not out.handoff:
                break  # horizon reached inside the invocation: no epoch
            if state.active == STOP:
                nxt, nxt_priv = TERMINAL, 0
            else:
                nxt, nxt_priv = state.interface, state.privates[state.active]
            yield EpochSample(start.active, start.interface,
                              start.privates[start.active], state.active,
                              acc, tau, nxt, nxt_priv)


def sample_epochs(env: Environment, behavior: Behavior, n_epochs: int,
                  rng: np.random.Generator) -> list[EpochSample]:
    out = []
    for sample in iter_epochs(env, behavior, rng):
        out.append(sample)
        if len(out) >= n_epochs:
            break
    return out
