"""Decentralized Q-learning with scalar value passing at handoffs (IC-Q).

Every agent keeps its own successor-selection estimator over its own
observations. When agent ``i`` hands control to ``c'``, the successor looks
at its own observation, computes the bootstrap ``b = max_c'' Q_c'(o', c'')``
with its own parameters and sends back exactly three numbers: ``b``, the
invocation length ``tau`` and the discounted reward ``R`` accumulated during
the invocation. The predecessor regresses ``Q_i(o_k, c')`` on
``y = R + gamma**tau * b``. Nothing else crosses the agent boundary.

In the adaptable regime agents also learn their local actions with a second
estimator, regressed on ``r + gamma * max_c'' Q_i(o_plus, c'')`` where
``o_plus`` is the agent's observation right after its local action.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import STOP, ConfigError, DomainError, Environment, JointAction, make_streams
from .estimators import DivergenceError, make_estimator

CHECKPOINT_VERSION = 1


@dataclass(frozen=True, slots=True)
class HandoffMessage:
    """The only data a successor sends back to its predecessor."""

    bootstrap: float
    duration: int
    option_reward: float


@dataclass(frozen=True, slots=True)
class EpochTransition:
    k: int
    predecessor: int
    obs: int
    successor: int
    option_reward: float
    duration: int
    successor_obs: int | None
    target: float
    q_before: float
    q_after: float


@dataclass
class LearnerConfig:
    gamma: float = 0.9
    backend: str = "tabular"
    hidden: int = 512
    clip: float = 10.0
    q_init: float = 0.0
    # exploration: eps_k = max(eps_min, eps0 * eps_decay**episode)
    eps0: float = 1.0
    eps_min: float = 0.05
    eps_decay: float | None = None
    budget: int = 1000
    # step sizes: "decay" eta0/(1+k/k0) with k the agent's update count,
    # "visit" the same with k the visit count of the updated cell,
    # "constant" eta0, "inverse" 1/(2 nu lambda0 (k+1))
    schedule: str = "decay"
    eta0: float = 0.5
    k0: float = 100.0
    nu: float | None = None
    lambda0: float | None = None
    adaptable: bool = False
    # which successor estimator produces the bootstrap in the adaptable regime
    coupling: str = "alpha"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eps_min <= 1.0 or not 0.0 <= self.eps0 <= 1.0:
            raise ConfigError("exploration rates must lie in [0, 1]")
        if self.schedule not in ("decay", "visit", "constant", "inverse"):
            raise ConfigError(f"unknown step-size schedule {self.schedule!r}")
        if self.schedule == "inverse" and (self.nu is None or self.lambda0 is None):
            raise ConfigError("inverse schedule needs nu and lambda0")
        if self.eta0 <= 0 or self.k0 <= 0:
            raise ConfigError("step sizes must be positive")
        if self.coupling not in ("alpha", "beta"):
            raise ConfigError(f"unknown coupling {self.coupling!r}")
        if self.backend not in ("tabular", "mlp"):
            raise ConfigError(f"unknown backend {self.backend!r}")

    def epsilon(self, episode: int) -> float:
        decay = self.eps_decay
        if decay is None:
            # reach eps_min halfway through the budget
            half = max(self.budget / 2.0, 1.0)
            decay = (self.eps_min / self.eps0) ** (1.0 / half) if self.eps0 > 0 else 0.0
        return max(self.eps_min, self.eps0 * decay ** episode)

    def step_size(self, k: int) -> float:
        if self.schedule == "constant":
            return self.eta0
        if self.schedule == "inverse":
            return inverse_step_size(k, self.nu, self.lambda0)
        return self.eta0 / (1.0 + k / self.k0)


def inverse_step_size(k: int, nu: float, lambda0: float) -> float:
    """``1 / (2 nu lambda0 (k+1))``."""
    if nu is None or lambda0 is None or nu <= 0 or lambda0 <= 0:
        raise DomainError("nu and lambda0 must be positive")
    if k < 0:
        raise DomainError("k must be non-negative")
    return 1.0 / (2.0 * nu * lambda0 * (k + 1))


def _order(c: int) -> tuple[bool, int]:
    return (c == STOP, c)


def greedy(values: np.ndarray, choices: Sequence[int]) -> int:
    """Argmax over ``choices``; ties go to the lowest agent index, STOP last."""
    best, best_v = None, -math.inf
    for c in sorted(choices, key=_order):
        v = values[c]
        if v > best_v:
            best, best_v = c, v
    return best


def select_successor(q, obs: int, admissible: Sequence[int], epsilon: float,
                     rng: np.random.Generator) -> int:
    """Epsilon-greedy successor choice over ``admissible``."""
    if not admissible:
        raise DomainError("empty admissible set")
    if rng.random() < epsilon:
        return admissible[int(rng.integers(len(admissible)))]
    return greedy(q.values(obs), admissible)


def compute_bootstrap(q_successor, successor_obs: int | None,
                      admissible: Sequence[int]) -> float:
    """Successor's own ``max_c'' Q(o', c'')``; zero after termination."""
    if successor_obs is None:
        return 0.0
    values = q_successor.values(successor_obs)
    return float(max(values[c] for c in admissible))


def bellman_target(msg: HandoffMessage, gamma: float) -> float:
    return msg.option_reward + gamma ** msg.duration * msg.bootstrap


def update_q(q, obs: int, chosen: int, target: float, step_size: float):
    """One SGD step on ``(Q(obs, chosen) - target)**2``."""
    if not math.isfinite(target):
        raise DivergenceError(f"non-finite target {target}")
    if step_size <= 0:
        raise DomainError("step size must be positive")
    q.sgd_step(obs, chosen, target, step_size)
    return q


@dataclass
class AgentLearner:
    """Everything one agent owns: its estimators and update counters."""

    agent: int
    beta: object
    alpha: object | None = None
    n_beta_updates: int = 0
    n_alpha_updates: int = 0


def make_learners(env: Environment, maps, config: LearnerConfig,
                  rng: np.random.Generator | None = None) -> list[AgentLearner]:
    rng = make_streams(config.seed)["init"] if rng is None else rng
    n_cols = env.n_agents + 1
    out = []
    for i in range(env.n_agents):
        beta = make_estimator(config.backend, maps[i].card_obs, n_cols,
                              init=config.q_init, hidden=config.hidden,
                              clip=config.clip, rng=rng)
        alpha = None
        if config.adaptable:
            alpha = make_estimator(config.backend, maps[i].card_obs,
                                   env.n_local_actions(i), init=config.q_init,
                                   hidden=config.hidden, clip=config.clip, rng=rng)
        out.append(AgentLearner(i, beta, alpha))
    return out


@dataclass
class EpisodeResult:
    ret: float
    transitions: list[EpochTransition] = field(default_factory=list)
    n_handoffs: int = 0
    n_scalars: int = 0
    n_beta_updates: int = 0
    n_alpha_updates: int = 0
    steps: int = 0
    terminated_by_stop: bool = False


def _step_size(config: LearnerConfig, est, learner_count: int, obs: int, col: int) -> float:
    if config.schedule == "visit":
        return config.step_size(int(est.visits[obs, col]))
    return config.step_size(learner_count)


def run_episode(env: Environment, maps, learners: Sequence[AgentLearner],
                config: LearnerConfig, rng, epsilon: float | None = None,
                train: bool = True, log: bool = False) -> EpisodeResult:
    """Run one episode of IC-Q; update estimators at every handoff when ``train``.

    ``rng`` is either a generator (used for everything) or a dict with
    ``env`` and ``explore`` streams. ``epsilon`` overrides exploration
    (0 for greedy evaluation).
    """
    if isinstance(rng, dict):
        env_rng, explore = rng["env"], rng["explore"]
    else:
        env_rng = explore = rng
    eps = config.epsilon(0) if epsilon is None else epsilon
    gamma = env.gamma
    adaptable = config.adaptable
    res = EpisodeResult(0.0)

    state = env.reset(env_rng)
    i = state.active
    o_k = maps[i](state.interface, state.privates[i])
    R, disc, tau, gpow = 0.0, 1.0, 0, 1.0
    first = None  # adaptable bookkeeping for the first step of the invocation
    k = 0
    while not state.done:
        i = state.active
        me = learners[i]
        if adaptable:
            o_t = maps[i](state.interface, state.privates[i])
            n_a = env.n_local_actions(i)
            if explore.random() < eps:
                a = int(explore.integers(n_a))
            else:
                a = int(np.argmax(me.alpha.values(o_t)))
            plus = env.post_action(state, a)
            o_plus = maps[i](plus.interface, plus.privates[i])
            if tau == 0:
                o_k = o_plus
                first = (o_t, a, plus)
            dec_obs = o_plus
        else:
            a = env.internal_action(state, env_rng)
            dec_obs = o_k
        if env.handoff_gate(state, env_rng):
            c = select_successor(me.beta, dec_obs, env.decision_successors(state),
                                 eps, explore)
        else:
            c = i
        out = env.step(state, JointAction(a, c), env_rng)
        r = out.reward
        res.ret += gpow * r
        gpow *= gamma
        R += disc * r
        disc *= gamma
        tau += 1
        if tau == 1:
            r_first = r
        nxt = out.next
        if out.handoff:
            res.n_handoffs += 1
            # ---- successor side: own observation, own parameters. A time-limit
            # cut is not termination: the successor still sends its value.
            if c == STOP:
                o_next, b = None, 0.0
            else:
                succ = learners[c]
                o_next = maps[c](nxt.interface, nxt.privates[c])
                if adaptable and config.coupling == "alpha":
                    b = float(np.max(succ.alpha.values(o_next)))
                else:
                    b = compute_bootstrap(succ.beta, o_next, env.decision_successors(nxt))
            msg = HandoffMessage(b, tau, R)
            res.n_scalars += len(fields(msg))
            # ---- predecessor side: its observation, its choice, the message
            y = bellman_target(msg, gamma)
            if train:
                q_before = me.beta.evaluate(o_k, c)
                update_q(me.beta, o_k, c, y,
                         _step_size(config, me.beta, me.n_beta_updates, o_k, c))
                me.n_beta_updates += 1
                res.n_beta_updates += 1
                if adaptable:
                    o_t0, a0, plus0 = first
                    choices = env.decision_successors(plus0)
                    y_a = r_first + gamma * compute_bootstrap(me.beta, o_k, choices)
                    update_q(me.alpha, o_t0, a0, y_a,
                             _step_size(config, me.alpha, me.n_alpha_updates, o_t0, a0))
                    me.n_alpha_updates += 1
                    res.n_alpha_updates += 1
                if log:
                    res.transitions.append(EpochTransition(
                        k, i, o_k, c, R, tau, o_next, y, q_before,
                        me.beta.evaluate(o_k, c)))
            k += 1
            R, disc, tau = 0.0, 1.0, 0
            if not nxt.done:
                o_k = o_next if not adaptable else o_k
        state = nxt
        res.steps += 1
    res.terminated_by_stop = state.active == STOP
    return res


def train(env: Environment, maps, config: LearnerConfig, n_episodes: int | None = None,
          learners: list[AgentLearner] | None = None, seed: int | None = None,
          fast: bool | None = None):
    """Train fresh (or given) learners for ``n_episodes`` episodes.

    ``fast=None`` uses the compiled loop whenever it covers the setting.
    """
    n_episodes = config.budget if n_episodes is None else n_episodes
    streams = make_streams(config.seed if seed is None else seed)
    if learners is None:
        learners = make_learners(env, maps, config, streams["init"])
    from . import fast as _fast

    if fast is None:
        fast = _fast.supports(env, maps, config)
    if fast:
        eps = [config.epsilon(ep) for ep in range(n_episodes)]
        _fast.run_synthetic_tabular(env, maps, learners, config, streams, eps)
        return learners
    for ep in range(n_episodes):
        run_episode(env, maps, learners, config, streams, epsilon=config.epsilon(ep))
    return learners


def greedy_tables(learners: Sequence[AgentLearner]) -> list[np.ndarray]:
    return [ln.beta.greedy_table() for ln in learners]


# -- persistence ---------------------------------------------------------------

TRANSITION_COLUMNS = ("k", "predecessor", "obs", "successor", "R_k", "tau",
                      "target", "q_before", "q_after")


def write_transitions_csv(path, transitions: Sequence[EpochTransition]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRANSITION_COLUMNS)
        for t in transitions:
            w.writerow([t.k, t.predecessor, t.obs,
                        "STOP" if t.successor == STOP else t.successor,
                        repr(t.option_reward), t.duration, repr(t.target),
                        repr(t.q_before), repr(t.q_after)])


def save_checkpoint(path, learners: Sequence[AgentLearner], config: LearnerConfig) -> None:
    def enc(est):
        if est is None:
            return None
        return {"backend": est.backend, "shape": [est.n_obs, est.n_cols],
                "hidden": getattr(est, "hidden", None),
                "params": {k: v.tolist() for k, v in est.get_params().items()}}

    blob = {"version": CHECKPOINT_VERSION, "config": asdict(config),
            "agents": [{"agent": ln.agent, "beta": enc(ln.beta), "alpha": enc(ln.alpha),
                        "n_beta_updates": ln.n_beta_updates,
                        "n_alpha_updates": ln.n_alpha_updates} for ln in learners]}
    Path(path).write_text(json.dumps(blob))


def load_checkpoint(path) -> tuple[list[AgentLearner], LearnerConfig]:
    blob = json.loads(Path(path).read_text())
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    config = LearnerConfig(**blob["config"])

    def dec(d):
        if d is None:
            return None
        n_obs, n_cols = d["shape"]
        est = make_estimator(d["backend"], n_obs, n_cols, hidden=d["hidden"] or 1)
        est.set_params({k: np.asarray(v) for k, v in d["params"].items()})
        return est

    learners = [AgentLearner(a["agent"], dec(a["beta"]), dec(a["alpha"]),
                             a["n_beta_updates"], a["n_alpha_updates"])
                for a in blob["agents"]]
    return learners, config
