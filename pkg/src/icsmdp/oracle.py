"""Centralized ground truth on small instances.

The decision-epoch process of an IC-SMDP is itself an SMDP whose states are
``(active agent, interface state)`` pairs and whose actions are successor
choices (agents, then STOP). Choosing agent ``c`` moves the process to a
state owned by ``c``; STOP moves it to the terminal state. This module
extracts that SMDP from an environment, solves it, builds its
observation-level counterpart under a set of observation maps and checks the
value-gap bound between the two.

States are flattened as ``agent * n_per_agent + local_state`` and the
terminal state has index ``n_states``.
"""

from __future__ import annotations

import hashlib
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import STOP, Environment
from .rollout import TERMINAL, Behavior, EpochSample, UniformBehavior, iter_epochs

SMDP_MAGIC = b"ICSMDP1\n"


@dataclass
class Smdp:
    """Finite SMDP with successor-indexed next states.

    ``reward[s, a]`` is the expected discounted option reward and
    ``disc[s, a, s']`` the discounted kernel ``sum_tau gamma**tau P(s', tau)``
    over non-terminal next states. ``kernel[s, a, s', tau-1]`` (optional)
    keeps the full duration-resolved distribution, terminal state last.
    """

    n_agents: int
    n_per_agent: int
    reward: np.ndarray
    disc: np.ndarray
    valid: np.ndarray
    gamma: float
    tau_max: int
    kernel: np.ndarray | None = None
    #: discounted probability of terminating, per (s, a)
    disc_terminal: np.ndarray | None = None
    #: visitation weights of decision states, shape (n_agents, n_per_agent)
    occupancy: np.ndarray | None = None
    #: observation SMDPs only: w[i, o, m] = P(m | o) for agent i
    weights: np.ndarray | None = None
    counts: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return self.n_agents * self.n_per_agent

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    def index(self, agent: int, local: int) -> int:
        return agent * self.n_per_agent + local

    def cell_discount(self) -> np.ndarray:
        """Expected ``gamma**tau`` per (state, action)."""
        d = self.disc.sum(axis=2)
        if self.disc_terminal is not None:
            d = d + self.disc_terminal
        return d

    def gamma_bar(self) -> float:
        return float(self.cell_discount()[self.valid].max())


LatentSmdp = Smdp
AisSmdp = Smdp


# -- value iteration -----------------------------------------------------------

def bellman_operator(smdp: Smdp, q: np.ndarray) -> np.ndarray:
    v = state_values(smdp, q)
    return smdp.reward + smdp.disc @ v


def state_values(smdp: Smdp, q: np.ndarray) -> np.ndarray:
    masked = np.where(smdp.valid, q, -np.inf)
    v = masked.max(axis=1)
    v[~np.isfinite(v)] = 0.0
    return v


def smdp_value_iteration(smdp: Smdp, tol: float = 1e-10, max_iter: int = 100_000):
    """Iterate the SMDP Bellman operator until ``||T(Q) - Q||_inf <= tol``.

    Returns ``(Q, V, iterations)``; invalid (state, action) cells hold -inf.
    """
    q = np.where(smdp.valid, 0.0, 0.0)
    for it in range(1, max_iter + 1):
        q_new = bellman_operator(smdp, q)
        resid = np.max(np.abs(np.where(smdp.valid, q_new - q, 0.0)))
        q = q_new
        if resid <= tol:
            break
    q = np.where(smdp.valid, q, -np.inf)
    return q, state_values(smdp, q), it


def greedy_policy(smdp: Smdp, q: np.ndarray) -> np.ndarray:
    """Greedy action per state; ties to the lowest column (STOP is last)."""
    return np.argmax(np.where(smdp.valid, q, -np.inf), axis=1)


def lipschitz_constant(values: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Lipschitz constant of a bounded function for the summed-absolute-difference
    distance between distributions: its half-range."""
    v = np.asarray(values, dtype=float)
    if mask is not None:
        v = v[mask]
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0
    return float(v.max() - v.min()) / 2.0


# -- extraction ----------------------------------------------------------------

def _column(c: int, n_agents: int) -> int:
    return n_agents if c == STOP else c


def smdp_from_samples(samples: Sequence[EpochSample], n_agents: int, n_per_agent: int,
                      gamma: float, tau_max: int, keep_durations: bool = True,
                      local_of=None, next_local_of=None) -> Smdp:
    """Tabulate empirical option rewards and kernels per (agent, state, successor).

    ``local_of(sample)`` / ``next_local_of(sample)`` give the decision-state and
    next-state ids (default: interface ids, i.e. the latent SMDP).
    """
    N, M = n_agents, n_per_agent
    S, A = N * M, N + 1
    local_of = local_of or (lambda s: s.interface)
    next_local_of = next_local_of or (lambda s: s.next_interface)
    counts = np.zeros((S, A))
    r_sum = np.zeros((S, A))
    disc = np.zeros((S, A, S))
    disc_term = np.zeros((S, A))
    kernel = np.zeros((S, A, S + 1, tau_max)) if keep_durations else None
    for s in samples:
        row = s.agent * M + local_of(s)
        col = _column(s.successor, N)
        tau = min(s.duration, tau_max)
        g = gamma ** s.duration
        counts[row, col] += 1
        r_sum[row, col] += s.reward
        if s.next_interface == TERMINAL or s.successor == STOP:
            disc_term[row, col] += g
            nxt = S
        else:
            nxt = s.successor * M + next_local_of(s)
            disc[row, col, nxt] += g
        if kernel is not None:
            kernel[row, col, nxt, tau - 1] += 1
    valid = counts > 0
    n = np.where(valid, counts, 1.0)
    occupancy = counts.sum(axis=1).reshape(N, M)
    occupancy = occupancy / max(occupancy.sum(), 1.0)
    return Smdp(N, M, r_sum / n, disc / n[..., None], valid, gamma, tau_max,
                kernel=None if kernel is None else kernel / n[..., None, None],
                disc_terminal=disc_term / n, occupancy=occupancy, counts=counts,
                meta={"mode": "mc", "n_epochs": len(samples)})


def _stationary(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def exact_latent_smdp(env: Environment, behavior: Behavior | None = None,
                      tau_max: int | None = None) -> Smdp:
    """Compose the primitive kernel over invocations and condition on the interface.

    The distribution of the hidden part of the state given ``(agent,
    interface)`` at decision epochs is taken from the stationary law of the
    epoch chain under ``behavior``, restarting from the initial distribution
    after STOP.
    """
    model = env.primitive_model()
    behavior = behavior or UniformBehavior()
    N, M = env.n_agents, env.config.card_interface
    Z = model["n_z"]
    m_of = model["interface_of"]
    p, cost, gamma = model["p_handoff"], model["handoff_cost"], env.gamma
    tau_max = tau_max or env.horizon
    r = model["reward"]
    S, A = N * M, N + 1

    # per agent: P(z', tau | z) and expected option reward from z
    dur = np.empty((N, Z, Z, tau_max))
    opt_r = np.empty((N, Z))
    tau_p = np.array([(1 - p) ** (t - 1) * p for t in range(1, tau_max + 1)])
    tau_p[-1] = (1 - p) ** (tau_max - 1)
    disc_cost = cost * np.sum(tau_p * gamma ** np.arange(tau_max))
    for i in range(N):
        T = model["kernels"][i]
        power = np.eye(Z)
        reward = np.zeros(Z)
        for t in range(tau_max):
            reward += (gamma * (1 - p)) ** t * (power @ r)
            power = power @ T
            dur[i, :, :, t] = tau_p[t] * power
        opt_r[i] = reward - disc_cost
    z_next = dur.sum(axis=3)  # (N, Z, Z)

    # stationary law of the restart chain over (agent, z)
    choices = [env.decision_successors(_AgentOnly(i)) for i in range(N)]
    probs = [behavior.probs(None, ch) for ch in choices]
    init = model["initial"]
    chain = np.zeros((N * Z, N * Z))
    for i in range(N):
        for c, pc in zip(choices[i], probs[i]):
            if pc == 0:
                continue
            if c == STOP:
                restart = np.kron(np.full(N, 1.0 / N), init)
                chain[i * Z:(i + 1) * Z] += pc * restart[None, :]
            else:
                chain[i * Z:(i + 1) * Z, c * Z:(c + 1) * Z] += pc * z_next[i]
    pi = _stationary(chain).reshape(N, Z)

    onehot = np.zeros((Z, M))
    onehot[np.arange(Z), m_of] = 1.0
    w = np.zeros((N, M, Z))
    for i in range(N):
        for m in range(M):
            sel = m_of == m
            mass = pi[i] * sel
            w[i, m] = mass / mass.sum() if mass.sum() > 1e-300 else sel / sel.sum()

    reward = np.zeros((S, A))
    disc = np.zeros((S, A, S))
    disc_term = np.zeros((S, A))
    kernel = np.zeros((S, A, S + 1, tau_max))
    valid = np.zeros((S, A), dtype=bool)
    gpow = gamma ** np.arange(1, tau_max + 1)
    for i in range(N):
        # P(m', tau | m) for agent i
        pm = np.einsum("mz,zyt,yn->mnt", w[i], dur[i], onehot)
        rm = w[i] @ opt_r[i]
        for c in choices[i]:
            col = _column(c, N)
            rows = slice(i * M, (i + 1) * M)
            reward[rows, col] = rm
            valid[rows, col] = True
            if c == STOP:
                kernel[rows, col, S, :] = pm.sum(axis=1)
                disc_term[rows, col] = pm.sum(axis=1) @ gpow
            else:
                kernel[rows, col, c * M:(c + 1) * M, :] = pm
                disc[rows, col, c * M:(c + 1) * M] = pm @ gpow
    occupancy = np.stack([pi[i] @ onehot for i in range(N)])
    return Smdp(N, M, reward, disc, valid, gamma, tau_max, kernel=kernel,
                disc_terminal=disc_term, occupancy=occupancy / occupancy.sum(),
                meta={"mode": "exact"})


class _AgentOnly:
    """Stand-in state for querying agent-dependent successor sets."""

    def __init__(self, agent):
        self.active = agent
        self.interface = 0


def extract_latent_smdp(env: Environment, behavior: Behavior | None = None,
                        n_epochs: int | None = None, rng: np.random.Generator | None = None,
                        mode: str = "exact", keep_durations: bool = True,
                        tau_max: int | None = None) -> Smdp:
    """Latent decision-epoch SMDP of ``env`` under successor behavior ``behavior``.

    ``mode="exact"`` needs ``env.primitive_model()``; otherwise (or when it is
    missing) epochs are simulated and tabulated.
    """
    behavior = behavior or UniformBehavior()
    tau_max = tau_max or env.horizon
    if mode == "exact":
        if hasattr(env, "primitive_model"):
            return exact_latent_smdp(env, behavior, tau_max)
        warnings.warn("exact mode unavailable for this environment; using Monte Carlo",
                      RuntimeWarning, stacklevel=2)
    if n_epochs is None:
        raise ValueError("Monte-Carlo extraction needs n_epochs")
    rng = np.random.default_rng() if rng is None else rng
    samples = []
    for s in iter_epochs(env, behavior, rng):
        samples.append(s)
        if len(samples) >= n_epochs:
            break
    smdp = smdp_from_samples(samples, env.n_agents, env.config.card_interface,
                             env.gamma, tau_max, keep_durations)
    smdp.meta["unvisited"] = int((~smdp.valid).sum())
    return smdp


# -- observation-level SMDP ----------------------------------------------------

def ais_smdp(latent: Smdp, maps, n_private: Sequence[int] | None = None) -> Smdp:
    """Condition the latent SMDP on observations.

    ``w(m | o)`` for agent ``i`` is proportional to the latent occupancy of
    ``(i, m)`` over the interface states (and private states, uniformly)
    mapped to ``o``.
    """
    N, M = latent.n_agents, latent.n_per_agent
    n_private = n_private or [1] * N
    O = max(mp.card_obs for mp in maps)
    S_o, A = N * O, N + 1
    T = latent.tau_max
    occ = latent.occupancy if latent.occupancy is not None else np.ones((N, M))
    weights = np.zeros((N, O, M))
    for i in range(N):
        for m in range(M):
            for ell in range(n_private[i]):
                weights[i, maps[i](m, ell), m] += occ[i, m] / n_private[i]
    tot = weights.sum(axis=2, keepdims=True)
    weights = np.divide(weights, tot, out=np.zeros_like(weights), where=tot > 0)

    # next-state aggregation matrix: latent (c, m') -> observation (c, phi_c(m'))
    agg = np.zeros((latent.n_states + 1, S_o + 1))
    for c in range(N):
        for m in range(M):
            agg[c * M + m, c * O + maps[c](m, 0)] = 1.0
    agg[-1, -1] = 1.0

    reward = np.zeros((S_o, A))
    disc = np.zeros((S_o, A, S_o))
    disc_term = np.zeros((S_o, A))
    valid = np.zeros((S_o, A), dtype=bool)
    kernel = np.zeros((S_o, A, S_o + 1, T)) if latent.kernel is not None else None
    lat_term = latent.disc_terminal if latent.disc_terminal is not None else np.zeros_like(latent.reward)
    for i in range(N):
        rows = slice(i * M, (i + 1) * M)
        wi = weights[i]  # (O, M)
        # restrict to latent cells that are valid; renormalize per action
        for a in range(A):
            ok = latent.valid[rows, a]
            wa = wi * ok[None, :]
            s = wa.sum(axis=1, keepdims=True)
            wa = np.divide(wa, s, out=np.zeros_like(wa), where=s > 0)
            has = s[:, 0] > 0
            orow = slice(i * O, (i + 1) * O)
            valid[orow, a] = has
            reward[orow, a] = wa @ latent.reward[rows, a]
            disc_lat = latent.disc[rows, a]  # (M, S)
            disc[orow, a] = wa @ (disc_lat @ agg[:-1, :-1])
            disc_term[orow, a] = wa @ lat_term[rows, a]
            if kernel is not None:
                k = np.einsum("mst,sz->mzt", latent.kernel[rows, a], agg)
                kernel[orow, a] = np.einsum("om,mzt->ozt", wa, k)
    return Smdp(N, O, reward, disc, valid, latent.gamma, T, kernel=kernel,
                disc_terminal=disc_term, weights=weights,
                meta={"mode": "ais", "from": latent.meta.get("mode")})


@dataclass
class TableGaps:
    eps: float
    delta: float
    gamma_bar: float


def table_gaps(latent: Smdp, maps, weights: np.ndarray | None = None,
               n_private: Sequence[int] | None = None) -> TableGaps:
    """Exact reward and (next interface, duration) gaps between the two conditionings."""
    if latent.kernel is None:
        raise ValueError("table gaps need the duration-resolved kernel")
    N, M = latent.n_agents, latent.n_per_agent
    n_private = n_private or [1] * N
    if weights is None:
        weights = ais_smdp(latent, maps, n_private).weights
    eps = delta = 0.0
    for i in range(N):
        rows = slice(i * M, (i + 1) * M)
        for a in range(latent.n_actions):
            ok = latent.valid[rows, a]
            for ell in range(n_private[i]):
                for m in np.flatnonzero(ok):
                    o = maps[i](int(m), ell)
                    w = weights[i, o] * ok
                    if w.sum() == 0:
                        continue
                    w = w / w.sum()
                    r_hat = w @ latent.reward[rows, a]
                    k_hat = np.einsum("m,mst->st", w, latent.kernel[rows, a])
                    eps = max(eps, abs(latent.reward[i * M + m, a] - r_hat))
                    tv = np.abs(latent.kernel[i * M + m, a] - k_hat).sum()
                    delta = max(delta, tv)
    return TableGaps(float(eps), float(delta), latent.gamma_bar())


@dataclass
class ValueGapCheck:
    lhs: float
    rhs: float
    holds: bool
    eps: float
    delta: float
    gamma_bar: float
    lipschitz: float


def ais_value_gap_check(latent: Smdp, ais: Smdp, maps, lipschitz: float | None = None,
                        n_private: Sequence[int] | None = None,
                        tol: float = 1e-10) -> ValueGapCheck:
    """Compare ``sup |V_lat(i, m) - V_ais(i, phi_i(m, l))|`` with the interface bound.

    ``lipschitz`` defaults to :func:`lipschitz_constant` of the observation-level
    optimal values.
    """
    N, M, O = latent.n_agents, latent.n_per_agent, ais.n_per_agent
    n_private = n_private or [1] * N
    _, v_lat, _ = smdp_value_iteration(latent, tol)
    _, v_ais, _ = smdp_value_iteration(ais, tol)
    if lipschitz is None:
        lipschitz = lipschitz_constant(v_ais, ais.valid.any(axis=1))
    gaps = table_gaps(latent, maps, ais.weights, n_private)
    lhs = 0.0
    for i in range(N):
        for m in range(M):
            if not latent.valid[i * M + m].any():
                continue
            for ell in range(n_private[i]):
                o = maps[i](m, ell)
                lhs = max(lhs, abs(v_lat[i * M + m] - v_ais[i * O + o]))
    g = gaps.gamma_bar
    rhs = (gaps.eps + g * lipschitz * gaps.delta) / (1.0 - g)
    return ValueGapCheck(float(lhs), float(rhs), bool(lhs <= rhs + 1e-9),
                         gaps.eps, gaps.delta, g, float(lipschitz))


# -- persistence ---------------------------------------------------------------

_ARRAYS = ("reward", "disc", "valid", "kernel", "disc_terminal", "occupancy",
           "weights", "counts")


def save_smdp(path, smdp: Smdp) -> None:
    """Binary table file: magic, JSON header line, then an ``.npz`` payload."""
    buf = io.BytesIO()
    arrays = {k: getattr(smdp, k) for k in _ARRAYS if getattr(smdp, k) is not None}
    np.savez_compressed(buf, **arrays)
    payload = buf.getvalue()
    header = {"n_agents": smdp.n_agents, "n_per_agent": smdp.n_per_agent,
              "gamma": smdp.gamma, "tau_max": smdp.tau_max, "meta": smdp.meta,
              "shapes": {k: list(v.shape) for k, v in arrays.items()},
              "sha256": hashlib.sha256(payload).hexdigest()}
    with open(path, "wb") as fh:
        fh.write(SMDP_MAGIC)
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(payload)


def load_smdp(path) -> Smdp:
    raw = Path(path).read_bytes()
    if not raw.startswith(SMDP_MAGIC):
        raise ValueError("not an SMDP table file")
    rest = raw[len(SMDP_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    payload = rest[nl + 1:]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ValueError("checksum mismatch")
    with np.load(io.BytesIO(payload)) as z:
        arrays = {k: z[k] for k in z.files}
    return Smdp(header["n_agents"], header["n_per_agent"], arrays["reward"],
                arrays["disc"], arrays["valid"], header["gamma"], header["tau_max"],
                kernel=arrays.get("kernel"), disc_terminal=arrays.get("disc_terminal"),
                occupancy=arrays.get("occupancy"), weights=arrays.get("weights"),
                counts=arrays.get("counts"), meta=header["meta"])
