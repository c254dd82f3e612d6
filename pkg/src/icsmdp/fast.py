"""Compiled IC-Q loop for the synthetic environment with tabular estimators.

It draws from the same generator streams, in the same order, as the generic
:func:`icsmdp.learner.run_episode`, so both paths produce the same tables.
Only the pre-configured regime is covered.
"""

from __future__ import annotations

import numba
import numpy as np

_SCHEDULES = {"decay": 0, "visit": 1, "constant": 2, "inverse": 3}


@numba.njit(cache=True)
def _draw(cum, u):
    n = cum.shape[0]
    for j in range(n - 1):
        if u < cum[j]:
            return j
    return n - 1


@numba.njit(cache=True)
def _step_size(kind, k, eta0, k0, nu, lambda0):
    if kind == 2:
        return eta0
    if kind == 3:
        return 1.0 / (2.0 * nu * lambda0 * (k + 1))
    return eta0 / (1.0 + k / k0)


@numba.njit(cache=True)
def _best(row, agent, n_agents):
    # greedy over the other agents then STOP (last column); first max wins
    best, best_v = -1, -np.inf
    for c in range(n_agents):
        if c != agent and row[c] > best_v:
            best, best_v = c, row[c]
    if row[n_agents] > best_v:
        best, best_v = n_agents, row[n_agents]
    return best, best_v


@numba.njit(cache=True)
def _run(k_idx, k_cum, g_idx, g_cum, rewards, p_action1, handoff_cost, p_handoff,
         horizon, gamma, obs_of, tables, visits, counts, eps_by_episode, train,
         kind, eta0, k0, nu, lambda0, env_rng, explore, returns, handoffs):
    X, N = k_idx.shape[0], k_idx.shape[1]
    M = rewards.shape[1]
    for ep in range(eps_by_episode.shape[0]):
        eps = eps_by_episode[ep]
        x = env_rng.integers(0, X)
        m = env_rng.integers(0, M)
        i = env_rng.integers(0, N)
        o_k = obs_of[i, m]
        R, disc, tau, gpow, ret = 0.0, 1.0, 0, 1.0, 0.0
        step = 0
        n_hand = 0
        done = False
        while not done:
            a = 1 if env_rng.random() < p_action1[i] else 0
            if env_rng.random() < p_handoff:
                if explore.random() < eps:
                    j = explore.integers(0, N)  # N-1 others plus STOP
                    c = j if j < i else j + 1   # skip self; N means STOP
                else:
                    c, _ = _best(tables[i, o_k], i, N)
            else:
                c = i
            r = rewards[x, m]
            if c != i:
                r -= handoff_cost
            x2 = k_idx[x, i, _draw(k_cum[x, i], env_rng.random())]
            m2 = g_idx[a, x2, i, _draw(g_cum[a, x2, i], env_rng.random())]
            ret += gpow * r
            gpow *= gamma
            R += disc * r
            disc *= gamma
            tau += 1
            step += 1
            done = c == N or step >= horizon
            if c != i:
                n_hand += 1
                if c == N:
                    b = 0.0
                    o_next = 0
                else:
                    o_next = obs_of[c, m2]
                    _, b = _best(tables[c, o_next], c, N)
                y = R + gamma ** tau * b
                if train:
                    kk = visits[i, o_k, c] if kind == 1 else counts[i]
                    eta = _step_size(kind, kk, eta0, k0, nu, lambda0)
                    cell = tables[i, o_k, c]
                    tables[i, o_k, c] = cell + 2.0 * eta * (y - cell)
                    visits[i, o_k, c] += 1
                    counts[i] += 1
                R, disc, tau = 0.0, 1.0, 0
                if not done:
                    o_k = o_next
                    i = c
            x, m = x2, m2
        returns[ep] = ret
        handoffs[ep] = n_hand


def supports(env, maps, config) -> bool:
    from .envs.synthetic import SyntheticEnv

    return (isinstance(env, SyntheticEnv) and config.backend == "tabular"
            and not config.adaptable and all(mp.table is not None for mp in maps))


def run_synthetic_tabular(env, maps, learners, config, streams, eps_by_episode,
                          train: bool = True):
    """Run ``len(eps_by_episode)`` episodes in place on ``learners``.

    Returns per-episode discounted returns and handoff counts.
    """
    N = env.n_agents
    O = max(mp.card_obs for mp in maps)
    obs_of = np.stack([np.asarray(mp.table, dtype=np.int64) for mp in maps])
    tables = np.zeros((N, O, N + 1))
    visits = np.zeros((N, O, N + 1), dtype=np.int64)
    for i, ln in enumerate(learners):
        n = ln.beta.n_obs
        tables[i, :n] = ln.beta.table
        visits[i, :n] = ln.beta.visits
    counts = np.array([ln.n_beta_updates for ln in learners], dtype=np.int64)
    eps = np.asarray(eps_by_episode, dtype=float)
    returns = np.zeros(len(eps))
    handoffs = np.zeros(len(eps), dtype=np.int64)
    nu = config.nu if config.nu is not None else 1.0
    lam = config.lambda0 if config.lambda0 is not None else 1.0
    _run(env.k_idx, env.k_cum, env.g_idx, env.g_cum, env.rewards, env.p_action1,
         env.spec.handoff_cost, env.spec.p_handoff, env.horizon, env.gamma, obs_of,
         tables, visits, counts, eps, train, _SCHEDULES[config.schedule],
         config.eta0, config.k0, nu, lam, streams["env"], streams["explore"],
         returns, handoffs)
    for i, ln in enumerate(learners):
        n = ln.beta.n_obs
        ln.beta.table = tables[i, :n].copy()
        ln.beta.visits = visits[i, :n].copy()
        ln.n_beta_updates = int(counts[i])
    return returns, handoffs
