"""Instrumented runs that check what the learner reads and sends.

:class:`AuditedEnvironment` wraps an environment so that learner code only
ever holds :class:`StateView` objects. A view records every read of the
latent state and every read of a private state other than the active
agent's own. Environment-side methods receive the unwrapped state.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .core import Environment, JointState, StepOutcome
from .learner import HandoffMessage, LearnerConfig, run_episode


@dataclass
class AccessLog:
    latent_reads: int = 0
    foreign_private_reads: int = 0
    own_private_reads: int = 0


class _PrivatesView:
    __slots__ = ("_privates", "_owner", "_log")

    def __init__(self, privates: tuple[int, ...], owner: int, log: AccessLog):
        self._privates, self._owner, self._log = privates, owner, log

    def __getitem__(self, j: int) -> int:
        if j == self._owner:
            self._log.own_private_reads += 1
        else:
            self._log.foreign_private_reads += 1
        return self._privates[j]

    def __len__(self) -> int:
        return len(self._privates)


class StateView:
    """Read-logging stand-in for a :class:`JointState`."""

    __slots__ = ("_state", "_log")

    def __init__(self, state: JointState, log: AccessLog):
        self._state, self._log = state, log

    @property
    def interface(self) -> int:
        return self._state.interface

    @property
    def active(self) -> int:
        return self._state.active

    @property
    def step(self) -> int:
        return self._state.step

    @property
    def done(self) -> bool:
        return self._state.done

    @property
    def latent(self) -> int:
        self._log.latent_reads += 1
        return self._state.latent

    @property
    def privates(self) -> _PrivatesView:
        return _PrivatesView(self._state.privates, self._state.active, self._log)


def _unwrap(state):
    return state._state if isinstance(state, StateView) else state


class AuditedEnvironment:
    """Delegates to ``env``; hands out :class:`StateView` objects only."""

    def __init__(self, env: Environment):
        self.env = env
        self.log = AccessLog()

    def __getattr__(self, name):
        return getattr(self.env, name)

    def _wrap(self, state: JointState) -> StateView:
        return StateView(state, self.log)

    def reset(self, rng) -> StateView:
        return self._wrap(self.env.reset(rng))

    def step(self, state, action, rng) -> StepOutcome:
        out = self.env.step(_unwrap(state), action, rng)
        return StepOutcome(out.reward, self._wrap(out.next), out.handoff, out.terminated)

    def decision_successors(self, state):
        return self.env.decision_successors(_unwrap(state))

    def handoff_gate(self, state, rng):
        return self.env.handoff_gate(_unwrap(state), rng)

    def internal_action(self, state, rng):
        return self.env.internal_action(_unwrap(state), rng)

    def post_action(self, state, local):
        return self._wrap(self.env.post_action(_unwrap(state), local))


@dataclass
class AuditReport:
    episodes: int
    handoffs: int
    scalars: int
    message_fields: int
    latent_reads: int
    foreign_private_reads: int

    @property
    def passed(self) -> bool:
        return (self.message_fields == 3 and self.scalars == 3 * self.handoffs
                and self.latent_reads == 0 and self.foreign_private_reads == 0)


def audit_run(env: Environment, maps, learners, config: LearnerConfig, rng,
              n_episodes: int = 20, train: bool = True) -> AuditReport:
    """Run ``n_episodes`` through the generic learner loop under audit."""
    audited = AuditedEnvironment(env)
    handoffs = scalars = 0
    for ep in range(n_episodes):
        res = run_episode(audited, maps, learners, config, rng,
                          epsilon=config.epsilon(ep), train=train)
        handoffs += res.n_handoffs
        scalars += res.n_scalars
    return AuditReport(n_episodes, handoffs, scalars, len(fields(HandoffMessage)),
                       audited.log.latent_reads, audited.log.foreign_private_reads)
