"""Observation maps and Monte-Carlo estimates of the interface gap.

An observation map turns ``(interface state, private state)`` into the
finite observation an agent acts on. How much is lost by acting on the
observation instead of the interface state is measured by two gaps:

* reward sufficiency ``eps``: how far the option reward conditioned on the
  interface state is from the one conditioned on the observation;
* evolution sufficiency ``delta``: distance between the next-(interface,
  duration) distributions under the two conditionings, measured as the
  largest mean difference over functions bounded by 1 in absolute value
  (the summed absolute difference). This is the distance under which the
  half-range of a value function is its Lipschitz constant.

They combine into ``alpha = (eps + gamma_bar * L * delta) / (1 - gamma_bar)``.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DomainError, Environment
from .rollout import Behavior, EpochSample, UniformBehavior, iter_epochs


class EstimationError(RuntimeError):
    """No usable samples for an estimate."""


@dataclass(frozen=True)
class ObservationMap:
    """Deterministic map ``(interface, private) -> observation id``.

    Either ``table`` (indexed by interface state, private state ignored) or
    ``rule`` must be given.
    """

    card_obs: int
    table: np.ndarray | None = None
    rule: Callable[[int, int], int] | None = None
    agent: int = 0
    name: str = ""

    def __post_init__(self):
        if (self.table is None) == (self.rule is None):
            raise ValueError("exactly one of table or rule is required")
        if self.table is not None:
            self.table.setflags(write=False)

    def __call__(self, interface: int, private: int = 0) -> int:
        if self.table is not None:
            return int(self.table[interface])
        return self.rule(interface, private)


def identity_map(card_interface: int, agent: int = 0) -> ObservationMap:
    return ObservationMap(card_interface, table=np.arange(card_interface),
                          agent=agent, name="identity")


def make_retention_map(card_interface: int, rho: float, agent: int = 0) -> ObservationMap:
    """Observe ``m mod ceil(rho * card_interface)``; rho=1 is the identity."""
    if not 0.0 < rho <= 1.0:
        raise DomainError(f"retention ratio must lie in (0, 1], got {rho}")
    # guard against 0.3 * 50 = 15.000000000000002 style round-up
    n_bins = math.ceil(round(rho * card_interface, 9))
    return ObservationMap(n_bins, table=np.arange(card_interface) % n_bins,
                          agent=agent, name=f"retention({rho:g})")


def alpha_from_gaps(eps: float, delta: float, gamma_bar: float, lipschitz: float) -> float:
    """Interface representation gap ``(eps + gamma_bar*L*delta)/(1-gamma_bar)``."""
    if not 0.0 <= gamma_bar < 1.0:
        raise DomainError(f"gamma_bar must lie in [0, 1), got {gamma_bar}")
    if eps < 0 or delta < 0 or lipschitz < 0:
        raise DomainError("eps, delta and lipschitz must be non-negative")
    return (eps + gamma_bar * lipschitz * delta) / (1.0 - gamma_bar)


def option_reward_bound(r_max: float, gamma: float, tau_max: int) -> float:
    """``R_max = r_max (1 - gamma^tau_max) / (1 - gamma)``."""
    return r_max * (1.0 - gamma ** tau_max) / (1.0 - gamma)


def l1_distance(p: dict, q: dict) -> float:
    """``sum_k |p_k - q_k|``, twice the halved total variation."""
    keys = set(p) | set(q)
    return sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@dataclass
class AisGapEstimate:
    eps_phi_hat: float
    delta_phi_hat: float
    alpha_hat: float
    gamma_bar_hat: float
    n_samples: int
    lipschitz: float
    mc_stderr: float
    # visit-weighted averages of the same per-cell gaps
    eps_phi_mean: float = 0.0
    delta_phi_mean: float = 0.0
    alpha_mean: float = 0.0
    cells: list[dict] = field(default_factory=list)
    n_cells: int = 0
    min_cell_count: int = 0

    def to_json(self, with_cells: bool = False) -> str:
        d = asdict(self)
        if not with_cells:
            d.pop("cells")
        return json.dumps(d)


class _Cell:
    __slots__ = ("n", "r_sum", "r_sq", "disc", "outcomes")

    def __init__(self):
        self.n = 0
        self.r_sum = 0.0
        self.r_sq = 0.0
        self.disc = 0.0
        self.outcomes: dict = defaultdict(int)

    def add(self, s: EpochSample, gamma: float):
        self.n += 1
        self.r_sum += s.reward
        self.r_sq += s.reward * s.reward
        self.disc += gamma ** s.duration
        self.outcomes[(s.next_interface, s.duration)] += 1

    def merge(self, other: "_Cell"):
        self.n += other.n
        self.r_sum += other.r_sum
        self.r_sq += other.r_sq
        self.disc += other.disc
        for k, v in other.outcomes.items():
            self.outcomes[k] += v

    @property
    def mean(self) -> float:
        return self.r_sum / self.n

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return 0.0
        var = max(self.r_sq / self.n - self.mean ** 2, 0.0)
        return math.sqrt(var / (self.n - 1))

    def dist(self) -> dict:
        return {k: v / self.n for k, v in self.outcomes.items()}


def gaps_from_samples(samples: Sequence[EpochSample], maps: Sequence[ObservationMap],
                      gamma: float, r_max: float, tau_max: int,
                      lipschitz: float | None = None) -> AisGapEstimate:
    """Tabulate latent and observation-level option statistics and compare them.

    Latent cells are ``(agent, interface, successor)``. The observation-level
    cell ``(agent, observation, successor)`` pools every latent cell whose
    samples map to that observation, which weights interface states by their
    empirical visitation.
    """
    latent: dict[tuple, _Cell] = defaultdict(_Cell)
    pairs: set[tuple] = set()
    for s in samples:
        latent[(s.agent, s.interface, s.successor)].add(s, gamma)
        o = maps[s.agent](s.interface, s.private)
        pairs.add((s.agent, s.interface, s.successor, o))
    if not latent:
        raise EstimationError("no epochs observed")

    pooled: dict[tuple, _Cell] = defaultdict(_Cell)
    members: dict[tuple, set] = defaultdict(set)
    for (i, m, c, o) in pairs:
        members[(i, o, c)].add(m)
    for key, ms in members.items():
        i, o, c = key
        for m in ms:
            pooled[key].merge(latent[(i, m, c)])

    gamma_bar = max(cell.disc / cell.n for cell in latent.values())
    if lipschitz is None:
        lipschitz = option_reward_bound(r_max, gamma, tau_max) / (1.0 - gamma_bar)

    eps, delta, stderr = 0.0, 0.0, 0.0
    w_eps = w_delta = w_tot = 0.0
    rows = []
    dists = {}
    for (i, m, c, o) in sorted(pairs):
        cell = latent[(i, m, c)]
        pool = pooled[(i, o, c)]
        e = abs(cell.mean - pool.mean)
        if (i, o, c) not in dists:
            dists[(i, o, c)] = pool.dist()
        tv = 0.0 if len(members[(i, o, c)]) == 1 else l1_distance(
            cell.dist(), dists[(i, o, c)])
        eps, delta = max(eps, e), max(delta, tv)
        stderr = max(stderr, cell.stderr)
        w_eps += cell.n * e
        w_delta += cell.n * tv
        w_tot += cell.n
        rows.append({"agent": i, "interface": m, "obs": o, "successor": c,
                     "n": cell.n, "eps": e, "tv": tv})
    eps_mean, delta_mean = w_eps / w_tot, w_delta / w_tot
    return AisGapEstimate(
        eps_phi_hat=eps,
        delta_phi_hat=delta,
        alpha_hat=alpha_from_gaps(eps, delta, gamma_bar, lipschitz),
        gamma_bar_hat=gamma_bar,
        n_samples=len(samples),
        lipschitz=lipschitz,
        mc_stderr=stderr,
        eps_phi_mean=eps_mean,
        delta_phi_mean=delta_mean,
        alpha_mean=alpha_from_gaps(eps_mean, delta_mean, gamma_bar, lipschitz),
        cells=rows,
        n_cells=len(latent),
        min_cell_count=min(c.n for c in latent.values()),
    )


def estimate_ais_gap(env: Environment, maps: Sequence[ObservationMap] | None = None,
                     behavior: Behavior | None = None, n_epochs: int = 10_000,
                     rng: np.random.Generator | None = None,
                     lipschitz: float | None = None) -> AisGapEstimate:
    """Monte-Carlo interface-gap estimate from ``n_epochs`` epochs under ``behavior``.

    The gaps are maxima over *visited* cells, so they are lower bounds on the
    true suprema; ``cells`` and ``min_cell_count`` report coverage.
    """
    if n_epochs < 1:
        raise DomainError("n_epochs must be >= 1")
    maps = env.maps if maps is None else maps
    behavior = UniformBehavior() if behavior is None else behavior
    rng = np.random.default_rng() if rng is None else rng
    samples = []
    for s in iter_epochs(env, behavior, rng):
        samples.append(s)
        if len(samples) >= n_epochs:
            break
    return gaps_from_samples(samples, maps, env.gamma, env.r_max, env.horizon,
                             lipschitz)
