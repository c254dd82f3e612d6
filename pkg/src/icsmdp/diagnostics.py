"""Numerical checks of the convergence assumptions and of the error decomposition.

* mixing: stationary distribution and epsilon-mixing time of the chain of
  ``(active agent, observation)`` pairs, at decision epochs or primitive steps;
* conditioning: the feature covariance and its smallest nonzero eigenvalue;
* contraction: the largest margin ``nu`` with
  ``(1 - nu)**2 S - S_next(v) >= 0`` over a probe set of greedy rules;
* value gaps, correlations and the three terms of the finite-sample bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.sparse.csgraph import connected_components

from .ais import alpha_from_gaps
from .core import JointAction, Environment
from .rollout import Behavior, UniformBehavior, iter_epochs, local_action

SYMBOLIC = "symbolic"


# -- mixing ----------------------------------------------------------------------

@dataclass
class ChainStats:
    states: list
    mu: np.ndarray
    mu_min: float
    t_mix: int
    eps: float
    method: str
    n_transitions: int
    reducible: bool = False
    periodic: bool = False

    def to_json(self) -> str:
        d = asdict(self)
        d["mu"] = self.mu.tolist()
        d["states"] = [list(s) if isinstance(s, tuple) else s for s in self.states]
        return json.dumps(d)


def _tv_rows(P: np.ndarray, mu: np.ndarray) -> float:
    return float(0.5 * np.abs(P - mu[None, :]).sum(axis=1).max())


def chain_stats_from_matrix(P: np.ndarray, eps: float = 0.25, max_k: int = 10_000,
                            mu: np.ndarray | None = None, states: list | None = None,
                            method: str = "matrix", n_transitions: int = 0) -> ChainStats:
    """Mixing time of a transition matrix from every start state.

    ``t_mix`` is the smallest ``k >= 1`` with ``max_s TV(P^k(s, .), pi) <= eps``,
    where ``pi`` is the stationary law of ``P``. A chain that never gets there
    within ``max_k`` steps reports ``t_mix = max_k`` and a reducibility or
    periodicity flag.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    n_comp, _ = connected_components(P > 0, directed=True, connection="strong")
    reducible = n_comp > 1
    w, vl = np.linalg.eig(P.T)
    pi = np.real(vl[:, np.argmin(np.abs(w - 1.0))])
    pi = np.abs(pi) / np.abs(pi).sum()
    mu = pi if mu is None else np.asarray(mu, dtype=float)
    Pk = P.copy()
    t_mix = None
    for k in range(1, max_k + 1):
        if _tv_rows(Pk, pi) <= eps:
            t_mix = k
            break
        Pk = Pk @ P
    periodic = False
    if t_mix is None:
        t_mix = max_k
        # an irreducible chain that does not mix is periodic
        periodic = not reducible
    return ChainStats(states or list(range(n)), mu, float(mu.min()), t_mix, eps,
                      method, n_transitions, reducible, periodic)


def chain_stats_from_sequences(sequences: Sequence[Sequence], eps: float = 0.25,
                               max_k: int = 10_000, restart: bool = True,
                               method: str = "empirical") -> ChainStats:
    """Estimate the transition matrix from observed state sequences.

    With ``restart`` the last state of each sequence moves to the first state
    of the next one, which is how an episodic process regenerates.
    ``mu`` is the empirical visit frequency.
    """
    index: dict = {}
    for seq in sequences:
        for s in seq:
            index.setdefault(s, len(index))
    n = len(index)
    counts = np.zeros((n, n))
    visits = np.zeros(n)
    flat = []
    for seq in sequences:
        ids = [index[s] for s in seq]
        for a, b in zip(ids[:-1], ids[1:]):
            counts[a, b] += 1
        for a in ids:
            visits[a] += 1
        flat.append(ids)
    if restart and len(flat) > 1:
        for prev, nxt in zip(flat, flat[1:] + flat[:1]):
            if prev and nxt:
                counts[prev[-1], nxt[0]] += 1
    rows = counts.sum(axis=1, keepdims=True)
    dead = rows[:, 0] == 0
    P = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
    P[dead, np.flatnonzero(dead)] = 1.0  # absorbing: never left within the data
    res = chain_stats_from_matrix(P, eps, max_k, visits / visits.sum(),
                                  list(index), method, int(counts.sum()))
    res.reducible = res.reducible or bool(dead.any())
    return res


def estimate_chain_stats(env: Environment, maps=None, behavior: Behavior | None = None,
                         n_epochs: int = 100_000, eps: float = 0.25,
                         rng: np.random.Generator | None = None,
                         time_scale: str = "epoch", max_k: int = 10_000) -> ChainStats:
    """Stationary law and mixing time of ``(active agent, observation)``.

    ``time_scale="epoch"`` records the pair at each decision epoch;
    ``"step"`` records it at every primitive step (``n_epochs`` then counts
    steps), which measures mixing in environment time.
    """
    maps = env.maps if maps is None else maps
    behavior = behavior or UniformBehavior()
    rng = np.random.default_rng() if rng is None else rng
    seqs: list[list] = []
    if time_scale == "epoch":
        current: list = []
        last_episode_end = True
        total = 0
        for s in iter_epochs(env, behavior, rng):
            if last_episode_end and current:
                seqs.append(current)
                current = []
            current.append((s.agent, maps[s.agent](s.interface, s.private)))
            last_episode_end = s.next_interface < 0
            total += 1
            if total >= n_epochs:
                break
        seqs.append(current)
    elif time_scale == "step":
        total = 0
        while total < n_epochs:
            state = env.reset(rng)
            start = state
            seq = []
            while not state.done and total < n_epochs:
                i = state.active
                seq.append((i, maps[i](state.interface, state.privates[i])))
                a = local_action(env, state, rng)
                if env.handoff_gate(state, rng):
                    c = behavior.choose(start, env.decision_successors(state), rng)
                else:
                    c = i
                state = env.step(state, JointAction(a, c), rng).next
                if c != i:
                    start = state
                total += 1
            seqs.append(seq)
    else:
        raise ValueError(f"unknown time scale {time_scale!r}")
    return chain_stats_from_sequences(seqs, eps, max_k, method=f"empirical-{time_scale}")


# -- conditioning and contraction -------------------------------------------------

@dataclass
class FeatureCovariance:
    sigma: np.ndarray
    lambda0: float
    lambda_max: float
    rank: int


def feature_covariance(features: np.ndarray, mu: np.ndarray,
                       rel_tol: float = 1e-12) -> FeatureCovariance:
    """``S = sum_k mu_k g_k g_k^T``; ``lambda0`` is its smallest nonzero eigenvalue."""
    G = np.asarray(features, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = (G * mu[:, None]).T @ G
    ev = np.linalg.eigvalsh(sigma)
    lam_max = float(ev.max())
    nz = ev[ev > rel_tol * max(lam_max, 1e-300)]
    return FeatureCovariance(sigma, float(nz.min()) if nz.size else 0.0, lam_max, int(nz.size))


def next_feature_covariance(smdp, features: np.ndarray, mu: np.ndarray,
                            probe: np.ndarray) -> np.ndarray:
    """``E_mu[gamma^(2 tau) g(s', pi(s')) g(s', pi(s'))^T]`` with ``pi`` greedy on ``probe``.

    Rows of ``features`` and entries of ``mu`` index flattened (state, action)
    cells; terminal next states contribute nothing.
    """
    if smdp.kernel is None:
        raise ValueError("contraction needs the duration-resolved kernel")
    S, A = smdp.reward.shape
    g2 = smdp.gamma ** (2 * np.arange(1, smdp.tau_max + 1))
    nxt = smdp.kernel[:, :, :S, :] @ g2  # (S, A, S)
    pi = np.argmax(np.where(smdp.valid, probe.reshape(S, A), -np.inf), axis=1)
    G = np.asarray(features, dtype=float)
    Gn = G[np.arange(S) * A + pi]  # feature of (s', pi(s'))
    w = (mu.reshape(S, A)[:, :, None] * nxt).sum(axis=(0, 1))  # weight on s'
    return (Gn * w[:, None]).T @ Gn


def _margin_holds(sigma, nexts, basis, nu, tol=1e-12) -> bool:
    for sn in nexts:
        mat = basis.T @ ((1 - nu) ** 2 * sigma - sn) @ basis
        if np.linalg.eigvalsh((mat + mat.T) / 2).min() < -tol:
            return False
    return True


def contraction_margin(smdp, features: np.ndarray | None = None,
                       mu: np.ndarray | None = None, probes: Sequence[np.ndarray] | None = None,
                       n_random_probes: int = 8, seed: int = 0, tol: float = 1e-12):
    """Largest ``nu`` in [0, 1) with ``(1-nu)^2 S - S_next(v) >= 0`` on range(S) for all probes.

    The worst case over value vectors is approximated by a probe set (zero,
    the optimal Q and seeded random vectors). Returns None when the
    inequality fails already at ``nu = 0``.
    """
    S, A = smdp.reward.shape
    valid = smdp.valid.ravel()
    features = np.eye(S * A)[:, valid] if features is None else features
    mu = (valid / valid.sum()) if mu is None else np.asarray(mu, dtype=float).ravel()
    if probes is None:
        from .oracle import smdp_value_iteration

        q, _, _ = smdp_value_iteration(smdp)
        rng = np.random.default_rng(seed)
        probes = [np.zeros(S * A), np.where(np.isfinite(q), q, 0.0).ravel()]
        probes += [rng.standard_normal(S * A) for _ in range(n_random_probes)]
    cov = feature_covariance(features, mu)
    ev, vec = np.linalg.eigh(cov.sigma)
    basis = vec[:, ev > 1e-12 * max(cov.lambda_max, 1e-300)]
    nexts = [next_feature_covariance(smdp, features, mu, p) for p in probes]
    if not _margin_holds(cov.sigma, nexts, basis, 0.0, tol):
        return None
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if _margin_holds(cov.sigma, nexts, basis, mid, tol):
            lo = mid
        else:
            hi = mid
    return lo


# -- value gaps and statistics ---------------------------------------------------

def evaluate_policy(env: Environment, maps, learners, config, n_eval: int,
                    rng) -> tuple[float, float]:
    """Mean and standard error of the greedy policy's discounted return."""
    from . import fast
    from .learner import run_episode

    streams = rng if isinstance(rng, dict) else {"env": rng, "explore": rng}
    if fast.supports(env, maps, config):
        rets, _ = fast.run_synthetic_tabular(env, maps, learners, config, streams,
                                             np.zeros(n_eval), train=False)
    else:
        rets = np.array([run_episode(env, maps, learners, config, streams,
                                     epsilon=0.0, train=False).ret for _ in range(n_eval)])
    return float(rets.mean()), float(rets.std(ddof=1) / math.sqrt(len(rets))) if n_eval > 1 else 0.0


def value_gap(learners, reference: float, env: Environment, maps, n_eval: int,
              rng, config=None) -> float:
    """Reference value minus the greedy learned policy's mean return."""
    from .learner import LearnerConfig

    config = config or LearnerConfig(gamma=env.gamma)
    mean, _ = evaluate_policy(env, maps, learners, config, n_eval, rng)
    return float(reference - mean)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length samples of size >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation undefined for a constant sample")
    return float(stats.pearsonr(x, y)[0])


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("spearman needs two equal-length samples of size >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation undefined for a constant sample")
    return float(stats.spearmanr(x, y)[0])


# -- bound terms -----------------------------------------------------------------

@dataclass
class TheoryReport:
    lambda0: float | None = None
    lambda_max: float | None = None
    contraction_margin: float | str | None = None
    gamma_bar_hat: float | None = None
    r_max: float | None = None
    alpha_q: float | str = SYMBOLIC
    representation_gap: float | str = SYMBOLIC
    approximation: float | str = SYMBOLIC
    mixing_residual: float | str = SYMBOLIC
    total: float | str = SYMBOLIC
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _given(*xs) -> bool:
    return all(x is not None for x in xs)


def evaluate_bound_terms(*, eps_phi=None, delta_phi=None, gamma_bar=None, lipschitz=None,
                         alpha_q=None, eps_app=None, eps_0=None, lambda_max=None,
                         c0=None, c1=None, t_mix=None, T=None, lambda0=None,
                         contraction=None, r_max=None) -> TheoryReport:
    """Evaluate the three error terms; a term with a missing input stays symbolic.

    * representation gap ``2 alpha_Q**2``
    * approximation ``6 eps_app + 6 eps_0 + 6 lambda_max C1 eps_0``
    * mixing residual ``6 lambda_max C0 (1 + t_mix)(1 + log(T + 1)) / T``
    """
    rep = TheoryReport(lambda0=lambda0, lambda_max=lambda_max,
                       contraction_margin=contraction, gamma_bar_hat=gamma_bar, r_max=r_max)
    if alpha_q is None and _given(eps_phi, delta_phi, gamma_bar, lipschitz):
        alpha_q = alpha_from_gaps(eps_phi, delta_phi, gamma_bar, lipschitz)
    if alpha_q is not None:
        rep.alpha_q = float(alpha_q)
        rep.representation_gap = 2.0 * alpha_q ** 2
    if _given(eps_app, eps_0, lambda_max, c1):
        rep.approximation = 6 * eps_app + 6 * eps_0 + 6 * lambda_max * c1 * eps_0
    if _given(lambda_max, c0, t_mix, T):
        if T < 1:
            raise ValueError("T must be >= 1")
        rep.mixing_residual = 6 * lambda_max * c0 * (1 + t_mix) * (1 + math.log(T + 1)) / T
    terms = (rep.representation_gap, rep.approximation, rep.mixing_residual)
    if all(isinstance(t, float) or isinstance(t, int) for t in terms):
        rep.total = float(sum(terms))
    return rep
