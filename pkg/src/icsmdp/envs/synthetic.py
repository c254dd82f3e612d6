"""Controlled synthetic IC-SMDP with a retention-ratio observation knob.

Dynamics at every primitive step with active agent ``i`` in latent state
``x`` and interface state ``m``:

* the agent's fixed internal policy draws a local action ``a`` in {0, 1};
* reward ``R[x, m]`` (uniform on [-1, 1], drawn once per cell) minus a
  handoff cost when control changes;
* ``x' ~ K[x, i]``, a sparse kernel with ``out_degree`` successors; every
  latent state has a home interface state, and latent states sharing a home
  share their kernel rows whenever those rows can still reach every latent
  state;
* ``m' ~ G[a, x', i]`` puts ``emission_fidelity`` on the home state of
  ``x'`` and spreads the rest over ``interface_support - 1`` other states,
  so the interface is a noisy emission of the latent state;
* the handoff gate opens with probability ``p_handoff``; when it opens the
  agent must pass control to another agent or STOP, so invocation lengths
  are geometric.

Agents observe ``m mod ceil(rho * |M|)`` and have no private state.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..ais import make_retention_map
from ..core import STOP, ConfigError, EnvConfig, Environment, JointAction, JointState


@dataclass(frozen=True)
class SyntheticSpec:
    n_agents: int = 10
    card_latent: int = 120
    card_interface: int = 50
    horizon: int = 60
    rho: float = 1.0
    p_handoff: float = 0.3
    gamma: float = 0.9
    kernel_seed: int = 0
    reward_seed: int = 0
    out_degree: int = 4
    interface_support: int = 3
    handoff_cost: float = 0.01
    emission_fidelity: float = 0.8
    max_retries: int = 20

    def validate(self) -> "SyntheticSpec":
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0.10 <= self.p_handoff <= 0.55:
            raise ConfigError(f"p_handoff must lie in [0.10, 0.55], got {self.p_handoff}")
        if self.n_agents < 1 or self.card_latent < 1 or self.card_interface < 1:
            raise ConfigError("cardinalities must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _sparse_rows(rng: np.random.Generator, n_rows: int, n_states: int, support: int):
    """Random row-stochastic rows, each supported on ``support`` distinct states."""
    support = min(support, n_states)
    idx = np.argsort(rng.random((n_rows, n_states)), axis=1)[:, :support]
    probs = rng.dirichlet(np.ones(support), size=n_rows)
    return idx, np.cumsum(probs, axis=1), probs


def _emission_rows(rng: np.random.Generator, home: np.ndarray, M: int, N: int,
                   support: int, fidelity: float):
    """Interface emission rows indexed by (local action, latent, agent).

    Each latent state has a home interface state shared by every agent; a
    row puts ``fidelity`` on the home state and spreads the rest over
    ``support - 1`` agent- and action-specific states.
    """
    X = len(home)
    support = min(support, M)
    idx = np.empty((2, X, N, support), dtype=np.int64)
    probs = np.empty((2, X, N, support))
    for a in range(2):
        for x in range(X):
            for i in range(N):
                others = rng.permutation(np.delete(np.arange(M), home[x]))[:support - 1]
                idx[a, x, i] = np.concatenate(([home[x]], others))
                rest = rng.dirichlet(np.ones(support - 1)) if support > 1 else np.zeros(0)
                probs[a, x, i] = np.concatenate(([fidelity], (1.0 - fidelity) * rest))
    return idx, probs


class SyntheticEnv(Environment):
    def __init__(self, spec: SyntheticSpec):
        self.spec = spec.validate()
        X, M, N = spec.card_latent, spec.card_interface, spec.n_agents
        self.config = EnvConfig(N, X, M, spec.horizon, spec.gamma,
                                spec.kernel_seed, spec.to_dict()).validate()
        for attempt in range(spec.max_retries):
            rng = np.random.default_rng([spec.kernel_seed, attempt])
            home = rng.permutation(np.arange(X) % M)
            if M * N * spec.out_degree >= X:
                # latent rows are shared by all latent states with the same home
                c_idx, _, c_p = _sparse_rows(rng, M * N, X, spec.out_degree)
                rows = (home[:, None] * N + np.arange(N)[None, :]).ravel()
                k_idx, k_p = c_idx[rows], c_p[rows]
            else:
                # too few shared rows to reach every latent state
                k_idx, _, k_p = _sparse_rows(rng, X * N, X, spec.out_degree)
            k_cum = np.cumsum(k_p, axis=1)
            if self._irreducible(k_idx, k_p, X, N):
                break
        else:
            raise ConfigError("could not generate an irreducible latent kernel")
        self.kernel_attempt = attempt
        self.k_idx = k_idx.reshape(X, N, -1)
        self.k_cum = k_cum.reshape(X, N, -1)
        self.k_p = k_p.reshape(X, N, -1)
        self.home = home
        g_idx, g_p = _emission_rows(rng, home, M, N, spec.interface_support,
                                    spec.emission_fidelity)
        self.g_idx = g_idx
        self.g_p = g_p
        self.g_cum = np.cumsum(g_p, axis=-1)
        self.p_action1 = rng.uniform(0.2, 0.8, size=N)
        self.rewards = np.random.default_rng(spec.reward_seed).uniform(-1.0, 1.0, (X, M))
        for a in (self.k_idx, self.k_cum, self.g_idx, self.g_cum, self.rewards):
            a.setflags(write=False)
        self.r_max = 1.0 + spec.handoff_cost
        self.maps = [make_retention_map(M, spec.rho, agent=i) for i in range(N)]
        self.n_private = [1] * N
        self._successors = tuple(range(N)) + (STOP,)
        self._others = [tuple(j for j in range(N) if j != i) + (STOP,) for i in range(N)]

    @staticmethod
    def _irreducible(idx, probs, X, N) -> bool:
        rows = np.repeat(np.arange(X), N * idx.shape[1])
        cols = idx.reshape(X, -1).ravel()
        graph = sp.csr_matrix((np.ones_like(cols), (rows, cols)), shape=(X, X))
        n, _ = connected_components(graph, directed=True, connection="strong")
        return n == 1

    def _initial(self, rng):
        s = self.spec
        return JointState(int(rng.integers(s.card_latent)),
                          int(rng.integers(s.card_interface)),
                          (0,) * s.n_agents, int(rng.integers(s.n_agents)))

    def admissible_successors(self, interface):
        return self._successors

    def is_admissible(self, interface, successor):
        return -1 <= successor < self.spec.n_agents

    def decision_successors(self, state):
        return self._others[state.active]

    def handoff_gate(self, state, rng):
        return rng.random() < self.spec.p_handoff

    def internal_action(self, state, rng):
        return 1 if rng.random() < self.p_action1[state.active] else 0

    @staticmethod
    def _draw(cum, u):
        for j in range(len(cum) - 1):
            if u < cum[j]:
                return j
        return len(cum) - 1

    def _transition(self, state: JointState, action: JointAction, rng):
        x, m, i = state.latent, state.interface, state.active
        r = self.rewards[x, m]
        if action.successor != i:
            r -= self.spec.handoff_cost
        x2 = int(self.k_idx[x, i, self._draw(self.k_cum[x, i], rng.random())])
        m2 = int(self.g_idx[action.local, x2, i,
                            self._draw(self.g_cum[action.local, x2, i], rng.random())])
        return float(r), x2, m2, 0

    # -- exact model, for the oracle on small instances ----------------------

    def step_kernel(self, agent: int) -> np.ndarray:
        """Dense one-step kernel over ``z = x * |M| + m`` for a fixed active agent."""
        X, M = self.spec.card_latent, self.spec.card_interface
        T = np.zeros((X * M, X * M))
        pa = (1.0 - self.p_action1[agent], self.p_action1[agent])
        for x in range(X):
            for kx, x2 in enumerate(self.k_idx[x, agent]):
                px = self.k_p[x, agent, kx]
                for a in (0, 1):
                    for km, m2 in enumerate(self.g_idx[a, x2, agent]):
                        p = px * pa[a] * self.g_p[a, x2, agent, km]
                        T[x * M:(x + 1) * M, x2 * M + m2] += p
        return T

    def primitive_model(self) -> dict:
        X, M = self.spec.card_latent, self.spec.card_interface
        return {
            "n_z": X * M,
            "interface_of": np.tile(np.arange(M), X),
            "kernels": [self.step_kernel(i) for i in range(self.spec.n_agents)],
            "reward": self.rewards.ravel().copy(),
            "p_handoff": self.spec.p_handoff,
            "handoff_cost": self.spec.handoff_cost,
            "initial": np.full(X * M, 1.0 / (X * M)),
        }


def build_synthetic(spec: SyntheticSpec | None = None, **overrides) -> SyntheticEnv:
    spec = SyntheticSpec(**overrides) if spec is None else spec
    return SyntheticEnv(spec)
