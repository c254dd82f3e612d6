"""Packet routing on a random graph, one router agent per node.

The interface carries the packet: its current node, its destination and a
detain flag set while a router holds the packet in place. The router holding
the packet observes only ``(destination, detain)``; its own identity already
pins the location, so the observation is exactly sufficient.

Each primitive step the holder forwards to a neighbor (cost ``step_cost``),
keeps the packet (detain, same cost) or, at the destination, delivers it
with STOP for reward +1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from ..ais import ObservationMap
from ..core import STOP, ConfigError, EnvConfig, Environment, JointAction, JointState

FAMILIES = ("erdos-renyi", "barabasi-albert", "watts-strogatz", "chain")


@dataclass(frozen=True)
class RoutingSpec:
    n_agents: int = 100
    family: str = "erdos-renyi"
    params: dict = field(default_factory=dict)
    seed: int = 0
    step_cost: float = 0.01
    gamma: float = 0.99
    horizon: int | None = None
    source: int | None = None
    destination: int | None = None
    max_retries: int = 100

    def validate(self) -> "RoutingSpec":
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown graph family {self.family!r}")
        if self.n_agents < 2:
            raise ConfigError("routing needs at least two nodes")
        for node in (self.source, self.destination):
            if node is not None and not 0 <= node < self.n_agents:
                raise ConfigError(f"node {node} out of range")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def make_graph(spec: RoutingSpec) -> tuple[nx.Graph, int]:
    """Generate a connected graph of the requested family; returns (graph, attempt)."""
    n, p = spec.n_agents, spec.params
    for attempt in range(spec.max_retries):
        seed = spec.seed * 1000 + attempt
        if spec.family == "erdos-renyi":
            g = nx.erdos_renyi_graph(n, p.get("p", 2.0 * np.log(n) / n), seed=seed)
        elif spec.family == "barabasi-albert":
            g = nx.barabasi_albert_graph(n, p.get("m", 2), seed=seed)
        elif spec.family == "watts-strogatz":
            g = nx.watts_strogatz_graph(n, p.get("k", 4), p.get("beta", 0.2), seed=seed)
        else:
            g = nx.path_graph(n)
        if nx.is_connected(g):
            return g, attempt
    raise ConfigError(f"no connected {spec.family} graph after {spec.max_retries} tries")


class RoutingEnv(Environment):
    def __init__(self, spec: RoutingSpec):
        self.spec = spec.validate()
        self.graph, self.graph_attempt = make_graph(spec)
        N = spec.n_agents
        horizon = spec.horizon or 2 * N
        self.config = EnvConfig(N, 1, 2 * N * N, horizon, spec.gamma, spec.seed,
                                spec.to_dict()).validate()
        self.neighbors = [tuple(sorted(self.graph.neighbors(v))) for v in range(N)]
        self._forward = [tuple(self.neighbors[v]) for v in range(N)]
        self._with_self = [tuple(sorted(self.neighbors[v] + (v,))) for v in range(N)]
        self.r_max = 1.0
        obs = np.array([self.decode(m)[1] * 2 + self.decode(m)[2] for m in range(2 * N * N)])
        self.maps = [ObservationMap(2 * N, table=obs, agent=i, name="destination+detain")
                     for i in range(N)]
        self.n_private = [1] * N

    # interface id = (location * N + destination) * 2 + detain
    def encode(self, loc: int, dest: int, detain: int = 0) -> int:
        return (loc * self.spec.n_agents + dest) * 2 + detain

    def decode(self, m: int) -> tuple[int, int, int]:
        rest, detain = divmod(m, 2)
        loc, dest = divmod(rest, self.spec.n_agents)
        return loc, dest, detain

    def start(self, source: int, destination: int) -> JointState:
        return JointState(0, self.encode(source, destination), (0,) * self.n_agents, source)

    def _initial(self, rng):
        N, s = self.spec.n_agents, self.spec
        src = s.source if s.source is not None else None
        dst = s.destination if s.destination is not None else None
        while True:
            a = int(rng.integers(N)) if src is None else src
            b = int(rng.integers(N)) if dst is None else dst
            if a != b or (src is not None and dst is not None):
                return self.start(a, b)

    def admissible_successors(self, interface):
        loc, dest, _ = self.decode(interface)
        base = self._with_self[loc]
        return base + (STOP,) if loc == dest else base

    def decision_successors(self, state):
        # detaining is not offered to learners: a self-choice is not a handoff,
        # so no value message would ever price it
        loc, dest, _ = self.decode(state.interface)
        return self._forward[loc] + (STOP,) if loc == dest else self._forward[loc]

    def _transition(self, state: JointState, action: JointAction, rng):
        loc, dest, _ = self.decode(state.interface)
        c = action.successor
        if c == STOP:
            return 1.0, 0, state.interface, 0
        if c == loc:
            return -self.spec.step_cost, 0, self.encode(loc, dest, 1), 0
        return -self.spec.step_cost, 0, self.encode(c, dest, 0), 0

    # -- oracles and export -------------------------------------------------

    def bfs_distances(self, source: int) -> np.ndarray:
        """Hop distances from ``source`` by breadth-first search."""
        dist = np.full(self.spec.n_agents, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            v = queue.popleft()
            for u in self.neighbors[v]:
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        return dist

    def all_distances(self) -> np.ndarray:
        return np.stack([self.bfs_distances(v) for v in range(self.spec.n_agents)])

    def optimal_return(self, source: int, destination: int) -> float:
        """Undiscounted return of a shortest delivery."""
        return 1.0 - self.spec.step_cost * int(self.bfs_distances(source)[destination])

    def write_edge_list(self, path) -> None:
        with open(path, "w") as fh:
            for u, v in sorted(tuple(sorted(e)) for e in self.graph.edges()):
                fh.write(f"{u} {v}\n")


def build_routing(spec: RoutingSpec | None = None, **overrides) -> RoutingEnv:
    spec = RoutingSpec(**overrides) if spec is None else spec
    return RoutingEnv(spec)


def greedy_route(env: RoutingEnv, tables, source: int, destination: int,
                 max_steps: int | None = None) -> list[int] | None:
    """Follow the greedy successor tables; the visited nodes, or None if undelivered."""
    from ..learner import greedy

    state = env.start(source, destination)
    path = [source]
    for _ in range(max_steps or env.horizon):
        i = state.active
        o = env.observe(state)
        c = greedy(tables[i][o], env.decision_successors(state))
        out = env.step(state, JointAction(0, c), np.random.default_rng(0))
        if c == STOP:
            return path
        state = out.next
        path.append(c)
        if state.done:
            return None
    return None
