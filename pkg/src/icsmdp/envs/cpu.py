"""Six-role CPU programming task for learned local actions and routing.

Memory holds two operand cells ``(a, b)`` and an output cell; a register
block holds ``A``, ``B`` (loaded operands), ``C`` (ALU result) and a
selector pointing at one of them. Both memory and registers ride on the
interface, together with the target value and the current holder.

Roles and local actions:

========  ======  =====================================
agent     role    local actions
========  ======  =====================================
0         starter init
1         load-a  load ``a`` into ``A`` / hold
2         load-b  load ``b`` into ``B`` / hold
3         alu     ``C = A+B``, ``A-B``, ``max``, ``min``
4         select  point the selector at ``A``, ``B`` or ``C``
5         writer  commit the selected register / hold
========  ======  =====================================

Control always moves to a different role each step, and only the writer may
STOP. Every step costs ``step_cost``; STOP pays +1 when the output equals the
target. Each role observes its visible register block as equality bits
against the target, so a learned program does not depend on the operand
values themselves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import product

import numpy as np

from ..ais import ObservationMap
from ..core import STOP, ConfigError, EnvConfig, Environment, JointAction, JointState

ROLES = ("starter", "load-a", "load-b", "alu", "select", "writer")
STARTER, LOAD_A, LOAD_B, ALU, SELECT, WRITER = range(6)
N_LOCAL = (1, 2, 2, 4, 3, 2)
OPS = ("add", "sub", "max", "min")
#: programs used to draw targets: the four ALU ops plus the two pass-throughs
PROGRAMS = OPS + ("pass-a", "pass-b")
_FIELDS = ("a", "b", "target", "A", "B", "C", "sel", "out", "init", "holder")


@dataclass(frozen=True)
class CpuSpec:
    n_values: int = 50
    train_fraction: float = 0.2
    step_cost: float = 0.01
    gamma: float = 0.95
    horizon: int = 12
    seed: int = 0
    #: "train": operands below the train cutoff; "heldout": at least one
    #: operand at or above it; "full": anywhere in range
    split: str = "train"
    #: pin (a, b, target) for every episode
    fixed: tuple | None = None

    def validate(self) -> "CpuSpec":
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must lie in (0, 1]")
        if self.n_values < 2:
            raise ConfigError("n_values must be >= 2")
        if self.split not in ("train", "heldout", "full"):
            raise ConfigError(f"unknown split {self.split!r}")
        if self.split == "heldout" and self.cutoff >= self.n_values:
            raise ConfigError("no held-out operands when train_fraction is 1")
        return self

    @property
    def cutoff(self) -> int:
        return max(1, int(round(self.train_fraction * self.n_values)))

    def to_dict(self) -> dict:
        return asdict(self)


def apply_op(op: int, x: int, y: int, n_values: int) -> int | None:
    """ALU result, or None when it leaves the value range."""
    r = (x + y, x - y, max(x, y), min(x, y))[op]
    return r if 0 <= r < n_values else None


def program_output(program: str, a: int, b: int, n_values: int) -> int | None:
    if program == "pass-a":
        return a
    if program == "pass-b":
        return b
    return apply_op(OPS.index(program), a, b, n_values)


class CpuEnv(Environment):
    adaptable = True

    def __init__(self, spec: CpuSpec):
        self.spec = spec.validate()
        V = spec.n_values
        empty = V + 1  # registers hold 0..V-1 or "empty"
        self._radix = (V, V, V, empty, empty, empty, 4, empty, 2, 6)
        card = int(np.prod(np.array(self._radix, dtype=object)))
        self.config = EnvConfig(6, 1, card, spec.horizon, spec.gamma, spec.seed,
                                spec.to_dict()).validate()
        self.EMPTY = V
        self.r_max = 1.0 + spec.step_cost
        self.maps = [ObservationMap(_OBS_CARD[i], rule=self._rule(i), agent=i, name=ROLES[i])
                     for i in range(6)]
        self.n_private = [1] * 6

    # -- interface encoding ---------------------------------------------------

    def encode(self, **f) -> int:
        m = 0
        for name, r in zip(_FIELDS, self._radix):
            m = m * r + f[name]
        return m

    def decode(self, m: int) -> dict:
        out = {}
        for name, r in zip(reversed(_FIELDS), reversed(self._radix)):
            m, out[name] = divmod(m, r)
        return out

    def start(self, a: int, b: int, target: int) -> JointState:
        E = self.EMPTY
        m = self.encode(a=a, b=b, target=target, A=E, B=E, C=E, sel=0, out=E,
                        init=0, holder=STARTER)
        return JointState(0, m, (0,) * 6, STARTER)

    def draw_task(self, rng: np.random.Generator) -> tuple[int, int, int]:
        """Operands from the configured split and a target reachable by some program."""
        s = self.spec
        if s.fixed is not None:
            return tuple(s.fixed)
        V, cut = s.n_values, s.cutoff
        while True:
            if s.split == "train":
                a, b = (int(v) for v in rng.integers(cut, size=2))
            else:
                a, b = (int(v) for v in rng.integers(V, size=2))
                if s.split == "heldout" and max(a, b) < cut:
                    continue
            t = program_output(PROGRAMS[int(rng.integers(len(PROGRAMS)))], a, b, V)
            if t is not None:
                return a, b, t

    def _initial(self, rng):
        return self.start(*self.draw_task(rng))

    # -- dynamics ------------------------------------------------------------

    def n_local_actions(self, agent: int) -> int:
        return N_LOCAL[agent]

    def admissible_successors(self, interface):
        holder = interface % 6
        others = tuple(j for j in range(6) if j != holder)
        return others + (STOP,) if holder == WRITER else others

    def _apply(self, f: dict, agent: int, local: int) -> dict:
        f = dict(f)
        E = self.EMPTY
        if agent == STARTER:
            f["init"] = 1
        elif agent == LOAD_A and local == 0:
            f["A"] = f["a"]
        elif agent == LOAD_B and local == 0:
            f["B"] = f["b"]
        elif agent == ALU:
            r = None
            if f["A"] != E and f["B"] != E:
                r = apply_op(local, f["A"], f["B"], self.spec.n_values)
            f["C"] = E if r is None else r
        elif agent == SELECT:
            f["sel"] = local + 1
        elif agent == WRITER and local == 0:
            f["out"] = self.selected(f)
        return f

    def selected(self, f: dict) -> int:
        return (self.EMPTY, f["A"], f["B"], f["C"])[f["sel"]]

    def post_action(self, state, local):
        f = self._apply(self.decode(state.interface), state.active, local)
        return JointState(state.latent, self.encode(**f), state.privates, state.active,
                          state.step, state.done)

    def _transition(self, state: JointState, action: JointAction, rng):
        f = self._apply(self.decode(state.interface), state.active, action.local)
        r = -self.spec.step_cost
        if action.successor == STOP:
            if f["out"] == f["target"]:
                r += 1.0
        else:
            f["holder"] = action.successor
        return r, 0, self.encode(**f), 0

    # -- observations --------------------------------------------------------

    def features(self, m: int, agent: int) -> tuple[int, ...]:
        """Equality bits of ``agent``'s visible register block against the target."""
        f = self.decode(m)
        E, t = self.EMPTY, f["target"]
        A, B, C = f["A"], f["B"], f["C"]
        status = (A != E, B != E, C != E, f["sel"] != 0, f["out"] == t)
        if agent == STARTER:
            own = (f["a"] == t, f["b"] == t)
        elif agent == LOAD_A:
            own = (A == t,)
        elif agent == LOAD_B:
            own = (B == t,)
        elif agent == ALU:
            ok = A != E and B != E
            own = tuple(ok and apply_op(k, A, B, self.spec.n_values) == t for k in range(4)) \
                + (C == t,)
        elif agent == SELECT:
            own = (A == t, B == t, C == t)
        else:
            own = (self.selected(f) == t,)
        return tuple(int(bool(x)) for x in status + own)

    def _rule(self, agent: int):
        def rule(m: int, private: int = 0) -> int:
            bits = self.features(m, agent)
            return int("".join(map(str, bits)), 2)
        return rule


_OBS_CARD = tuple(2 ** (5 + k) for k in (2, 1, 1, 5, 3, 1))


def build_cpu(spec: CpuSpec | None = None, **overrides) -> CpuEnv:
    spec = CpuSpec(**overrides) if spec is None else spec
    return CpuEnv(spec)


def reachable_outputs(a: int, b: int, n_values: int, depth: int) -> set[int]:
    """Outputs committable within ``depth`` role invocations, by exhaustive search.

    Explores every sequence of (role, local action) pairs with distinct
    consecutive roles over the register state alone.
    """
    E = n_values
    start = (E, E, E, 0, E, -1)  # A, B, C, sel, out, last role
    frontier, seen, outs = {start}, {start}, set()
    for _ in range(depth):
        nxt = set()
        for A, B, C, sel, out, last in frontier:
            for role, local in product(range(6), range(4)):
                if role == last or local >= N_LOCAL[role]:
                    continue
                A2, B2, C2, sel2, out2 = A, B, C, sel, out
                if role == LOAD_A and local == 0:
                    A2 = a
                elif role == LOAD_B and local == 0:
                    B2 = b
                elif role == ALU:
                    r = apply_op(local, A, B, n_values) if E not in (A, B) else None
                    C2 = E if r is None else r
                elif role == SELECT:
                    sel2 = local + 1
                elif role == WRITER and local == 0:
                    out2 = (E, A, B, C)[sel]
                    if out2 != E:
                        outs.add(out2)
                s = (A2, B2, C2, sel2, out2, role)
                if s not in seen:
                    seen.add(s)
                    nxt.add(s)
        frontier = nxt
    return outs
