"""Domain types and the environment contract for interface-constrained SMDPs.

An environment evolves a joint state made of three layers: a latent state no
agent sees, an interface state (the artifact handed between agents) and one
private state per agent. Exactly one agent is active at a time; at every
primitive step it picks a local action and a successor, and a *handoff*
happens whenever the successor differs from the active agent.

Concrete environments subclass :class:`Environment` and implement
``_initial`` and ``_transition``. The base class owns the bookkeeping that
every environment must get right: admissibility checks, horizon termination,
handoff flags and preservation of inactive agents' private states.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

#: Successor id meaning "end the episode". Never an active agent.
STOP = -1


class ConfigError(ValueError):
    """Invalid environment, learner or experiment configuration."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class UsageError(RuntimeError):
    """Operation called in a state where it is not allowed."""


def agent_label(agent: int) -> str:
    return "STOP" if agent == STOP else str(agent)


@dataclass(frozen=True, slots=True)
class JointState:
    """Full system configuration. Learner code may only read ``interface``,
    ``active``, ``step`` and its own entry of ``privates``."""

    latent: int
    interface: int
    privates: tuple[int, ...]
    active: int
    step: int = 0
    done: bool = False


@dataclass(frozen=True, slots=True)
class JointAction:
    local: int
    successor: int


@dataclass(frozen=True, slots=True)
class StepOutcome:
    reward: float
    next: JointState
    handoff: bool
    terminated: bool


@dataclass(frozen=True)
class EnvConfig:
    n_agents: int
    card_latent: int
    card_interface: int
    horizon: int
    discount: float
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> "EnvConfig":
        if self.n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.card_latent < 1 or self.card_interface < 1:
            raise ConfigError("state-space cardinalities must be >= 1")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError(f"discount must lie in (0, 1), got {self.discount}")
        return self


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Split one root seed into independent named random streams.

    Exploration noise is drawn from ``explore`` and never perturbs the
    ``env`` stream, so two learners facing the same seed see the same
    environment randomness for as long as their actions agree.
    """
    children = np.random.SeedSequence(int(seed)).spawn(3)
    return {
        name: np.random.default_rng(child)
        for name, child in zip(("env", "explore", "init"), children)
    }


class Environment(abc.ABC):
    """Base class for all IC-SMDP environments.

    Subclasses set ``config``, ``r_max``, ``maps`` (default per-agent
    observation maps) and ``n_private`` (private-state cardinality per agent),
    and implement :meth:`_initial`, :meth:`_transition` and
    :meth:`admissible_successors`.
    """

    config: EnvConfig
    r_max: float
    maps: Sequence[Any]
    n_private: Sequence[int]
    #: True when local actions are learned rather than fixed by the environment.
    adaptable: bool = False

    @property
    def n_agents(self) -> int:
        return self.config.n_agents

    @property
    def gamma(self) -> float:
        return self.config.discount

    @property
    def horizon(self) -> int:
        return self.config.horizon

    # -- contract -----------------------------------------------------------

    @abc.abstractmethod
    def _initial(self, rng: np.random.Generator) -> JointState:
        """Sample an initial joint state (step 0)."""

    @abc.abstractmethod
    def _transition(self, state: JointState, action: JointAction,
                    rng: np.random.Generator) -> tuple[float, int, int, int]:
        """Return ``(reward, latent', interface', private' of the active agent)``."""

    @abc.abstractmethod
    def admissible_successors(self, interface: int) -> tuple[int, ...]:
        """Successor ids allowed from ``interface``; agents ascending, STOP last."""

    def is_admissible(self, interface: int, successor: int) -> bool:
        return successor in self.admissible_successors(interface)

    def n_local_actions(self, agent: int) -> int:
        return 1

    def internal_action(self, state: JointState, rng: np.random.Generator) -> int:
        """Local action of a pre-configured agent."""
        return 0

    def handoff_gate(self, state: JointState, rng: np.random.Generator) -> bool:
        """Whether the active agent may hand off at this step.

        When False the active agent keeps control (its successor is itself).
        Environments whose agents decide at every step return True.
        """
        return True

    def decision_successors(self, state: JointState) -> tuple[int, ...]:
        """Successors offered to the learner at a step where the gate is open."""
        return self.admissible_successors(state.interface)

    def post_action(self, state: JointState, local: int) -> JointState:
        """State right after ``local`` resolves and before any handoff.

        Only meaningful for adaptable environments, whose local actions act
        deterministically on the interface and the active agent's private state.
        """
        return state

    # -- public operations --------------------------------------------------

    def reset(self, rng: np.random.Generator) -> JointState:
        state = self._initial(rng)
        if state.step != 0 or state.active == STOP:
            raise UsageError("environment produced an invalid initial state")
        return state

    def step(self, state: JointState, action: JointAction,
             rng: np.random.Generator) -> StepOutcome:
        if state.done:
            raise UsageError("cannot step a terminated state")
        if not self.is_admissible(state.interface, action.successor):
            raise DomainError(
                f"successor {agent_label(action.successor)} is not admissible "
                f"from interface state {state.interface}")
        reward, latent, interface, private = self._transition(state, action, rng)
        privates = state.privates
        if privates[state.active] != private:
            privates = (privates[:state.active] + (private,)
                        + privates[state.active + 1:])
        step = state.step + 1
        done = action.successor == STOP or step >= self.horizon
        nxt = JointState(latent, interface, privates, action.successor, step, done)
        return StepOutcome(reward, nxt, action.successor != state.active, done)

    def observe(self, state: JointState, agent: int | None = None) -> int:
        """Observation of ``agent`` (default: the active agent) under ``maps``."""
        agent = state.active if agent is None else agent
        return self.maps[agent](state.interface, state.privates[agent])
