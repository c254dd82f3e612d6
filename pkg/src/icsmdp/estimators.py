"""Per-agent Q estimators over (observation, column) pairs.

Columns are successor ids for successor-selection estimators, with STOP
stored in the last column so that ``values[-1]`` reads it directly, or local
action ids for local-action estimators.
"""

from __future__ import annotations

import math

import numpy as np


class DivergenceError(ValueError):
    """Non-finite regression target."""


class TabularQ:
    """One cell per (observation, column); one-hot features."""

    backend = "tabular"

    def __init__(self, n_obs: int, n_cols: int, init: float = 0.0):
        self.n_obs = n_obs
        self.n_cols = n_cols
        self.table = np.full((n_obs, n_cols), float(init))
        self.visits = np.zeros((n_obs, n_cols), dtype=np.int64)

    def values(self, obs: int) -> np.ndarray:
        return self.table[obs]

    def evaluate(self, obs: int, col: int) -> float:
        return float(self.table[obs, col])

    def sgd_step(self, obs: int, col: int, target: float, step_size: float) -> None:
        # gradient of (Q - y)^2 w.r.t. the cell is 2 (Q - y)
        cell = self.table[obs, col]
        self.table[obs, col] = cell + 2.0 * step_size * (target - cell)
        self.visits[obs, col] += 1

    def get_params(self) -> dict[str, np.ndarray]:
        return {"table": self.table.copy(), "visits": self.visits.copy()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.table = np.asarray(params["table"], dtype=float).copy()
        if "visits" in params:
            self.visits = np.asarray(params["visits"], dtype=np.int64).copy()

    def greedy_table(self) -> np.ndarray:
        return self.table


class MLPQ:
    """Three-layer rectifier network from a one-hot observation to all columns.

    Trained by plain SGD on the half-squared error of the chosen column, with
    the update's global gradient norm clipped at ``clip``.
    """

    backend = "mlp"

    def __init__(self, n_obs: int, n_cols: int, hidden: int = 64,
                 rng: np.random.Generator | None = None, clip: float = 10.0):
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_obs, self.n_cols, self.hidden, self.clip = n_obs, n_cols, hidden, clip

        def layer(fan_in, fan_out):
            bound = 1.0 / math.sqrt(fan_in)
            return (rng.uniform(-bound, bound, (fan_in, fan_out)),
                    rng.uniform(-bound, bound, fan_out))

        self.W1, self.b1 = layer(n_obs, hidden)
        self.W2, self.b2 = layer(hidden, hidden)
        self.W3, self.b3 = layer(hidden, n_cols)
        self.visits = np.zeros((n_obs, n_cols), dtype=np.int64)

    _names = ("W1", "b1", "W2", "b2", "W3", "b3")

    def _forward(self, obs: int):
        z1 = self.W1[obs] + self.b1
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ self.W2 + self.b2
        h2 = np.maximum(z2, 0.0)
        return z1, h1, z2, h2, h2 @ self.W3 + self.b3

    def values(self, obs: int) -> np.ndarray:
        return self._forward(obs)[-1]

    def evaluate(self, obs: int, col: int) -> float:
        return float(self.values(obs)[col])

    def loss(self, obs: int, col: int, target: float) -> float:
        return 0.5 * (self.evaluate(obs, col) - target) ** 2

    def gradients(self, obs: int, col: int, target: float) -> dict[str, np.ndarray]:
        """Analytic gradient of the half-squared loss w.r.t. every parameter."""
        z1, h1, z2, h2, out = self._forward(obs)
        d = out[col] - target
        g = {name: np.zeros_like(getattr(self, name)) for name in self._names}
        g["W3"][:, col] = d * h2
        g["b3"][col] = d
        dz2 = d * self.W3[:, col] * (z2 > 0)
        g["W2"] = np.outer(h1, dz2)
        g["b2"] = dz2
        dz1 = (self.W2 @ dz2) * (z1 > 0)
        g["W1"][obs] = dz1
        g["b1"] = dz1
        return g

    def sgd_step(self, obs: int, col: int, target: float, step_size: float) -> None:
        g = self.gradients(obs, col, target)
        norm = math.sqrt(sum(float(np.sum(v * v)) for v in g.values()))
        scale = step_size if norm <= self.clip else step_size * self.clip / norm
        for name in self._names:
            setattr(self, name, getattr(self, name) - scale * g[name])
        self.visits[obs, col] += 1

    def get_params(self) -> dict[str, np.ndarray]:
        p = {name: getattr(self, name).copy() for name in self._names}
        p["visits"] = self.visits.copy()
        return p

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for name in self._names:
            setattr(self, name, np.asarray(params[name], dtype=float).copy())
        if "visits" in params:
            self.visits = np.asarray(params["visits"], dtype=np.int64).copy()

    def flat_params(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in self._names])

    def set_flat_params(self, flat: np.ndarray) -> None:
        i = 0
        for n in self._names:
            a = getattr(self, n)
            setattr(self, n, flat[i:i + a.size].reshape(a.shape).copy())
            i += a.size

    def greedy_table(self) -> np.ndarray:
        return np.stack([self.values(o) for o in range(self.n_obs)])


def make_estimator(backend: str, n_obs: int, n_cols: int, *, init: float = 0.0,
                   hidden: int = 64, clip: float = 10.0,
                   rng: np.random.Generator | None = None):
    if backend == "tabular":
        return TabularQ(n_obs, n_cols, init)
    if backend == "mlp":
        return MLPQ(n_obs, n_cols, hidden, rng, clip)
    raise ValueError(f"unknown backend {backend!r}")
