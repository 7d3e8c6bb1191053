"""Reach-avoid semi-Markov decision model on a finite state space.

A model bundles the state space, per-state action lists, a factorized
semi-Markov kernel ``Q(j, t | x, a) = w(j | x, a) * F(t | x, a, j)``, an
obstacle schedule producing the (possibly different) obstacle set at every
decision epoch, a fixed target set and a time horizon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "UniformRamp", "Exponential", "PiecewiseLinearCDF", "PointMass",
    "Row", "TransitionLaw",
    "Fixed", "Periodic", "EventuallyConstant", "Explicit", "obstacle_at",
    "Model", "validate_model", "kernel_mass",
    "SeparationConstants", "NotSeparated", "find_separation",
]

# slack for sums of weights read from decimal files
WEIGHT_TOL = 1e-12


# --------------------------------------------------------------------------
# sojourn-time laws
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformRamp:
    """Uniform sojourn on ``[0, mu]``; CDF ``min(t / mu, 1)``."""

    mu: float
    kind = "uniform_ramp"

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip(t / self.mu, 0.0, 1.0)

    def ppf(self, u):
        return np.asarray(u, dtype=float) * self.mu

    def problems(self) -> list[str]:
        return [] if self.mu > 0 else [f"uniform_ramp mu must be positive, got {self.mu}"]

    def params(self) -> dict:
        return {"mu": self.mu}


@dataclass(frozen=True)
class Exponential:
    """Exponential sojourn with mean ``mu`` (rate ``1 / mu``).

    With ``literal=True`` the rate is ``mu`` itself, i.e. CDF
    ``1 - exp(-mu t)``. This is kept only to compare against the alternative
    reading of the plane-flight kernel.
    """

    mu: float
    literal: bool = False
    kind = "exponential"

    @property
    def rate(self) -> float:
        return self.mu if self.literal else 1.0 / self.mu

    def cdf(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return -np.expm1(-self.rate * t)

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def problems(self) -> list[str]:
        return [] if self.mu > 0 else [f"exponential mu must be positive, got {self.mu}"]

    def params(self) -> dict:
        return {"mu": self.mu}


@dataclass(frozen=True)
class PiecewiseLinearCDF:
    """CDF interpolated linearly between knots ``(t_i, F_i)``.

    The first knot must be ``(0, 0)``. Beyond the last knot the CDF stays at
    its final level; any shortfall below 1 is mass that never jumps.
    """

    knots: tuple[tuple[float, float], ...]
    kind = "piecewise_linear"

    def __post_init__(self):
        object.__setattr__(self, "knots", tuple((float(a), float(b)) for a, b in self.knots))

    @property
    def _arrays(self):
        ts = np.array([k[0] for k in self.knots])
        fs = np.array([k[1] for k in self.knots])
        return ts, fs

    def cdf(self, t):
        ts, fs = self._arrays
        t = np.asarray(t, dtype=float)
        return np.where(t <= 0.0, 0.0, np.interp(t, ts, fs))

    def ppf(self, u):
        ts, fs = self._arrays
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.full(u.shape, np.inf)
        inside = u < fs[-1]
        ui = u[inside]
        # first knot whose level exceeds u; flat stretches are skipped over
        j = np.searchsorted(fs, ui, side="right")
        f0, f1 = fs[j - 1], fs[j]
        t0, t1 = ts[j - 1], ts[j]
        out[inside] = t0 + (ui - f0) / (f1 - f0) * (t1 - t0)
        return out

    def problems(self) -> list[str]:
        out = []
        if len(self.knots) < 2:
            return ["piecewise_linear needs at least two knots"]
        ts, fs = self._arrays
        if ts[0] != 0.0 or fs[0] != 0.0:
            out.append("piecewise_linear first knot must be (0, 0)")
        if np.any(np.diff(ts) <= 0):
            out.append("piecewise_linear knot times must be strictly increasing")
        if np.any(np.diff(fs) < 0):
            out.append("piecewise_linear CDF levels must be nondecreasing")
        if fs[-1] > 1.0 + WEIGHT_TOL:
            out.append(f"piecewise_linear CDF exceeds 1 ({fs[-1]})")
        return out

    def params(self) -> dict:
        return {"knots": [list(k) for k in self.knots]}


@dataclass(frozen=True)
class PointMass:
    """Deterministic sojourn ``t0``. The jump counts at ``t0`` itself (``<= t``)."""

    t0: float
    kind = "point_mass"

    def cdf(self, t):
        return (np.asarray(t, dtype=float) >= self.t0).astype(float)

    def ppf(self, u):
        return np.full(np.shape(u), float(self.t0))

    def problems(self) -> list[str]:
        return [] if self.t0 > 0 else [f"point_mass t0 must be positive, got {self.t0}"]

    def params(self) -> dict:
        return {"t0": self.t0}


Sojourn = UniformRamp | Exponential | PiecewiseLinearCDF | PointMass


@dataclass(frozen=True)
class Row:
    to: int
    weight: float
    sojourn: Sojourn


@dataclass(frozen=True)
class TransitionLaw:
    """Rows of one ``(x, a)`` pair. Weights may sum to less than one."""

    rows: tuple[Row, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    @property
    def total_weight(self) -> float:
        return float(sum(r.weight for r in self.rows))

    def mass(self, t, states: Iterable[int] | None = None):
        """``Q(D, t | x, a)`` for ``D = states`` (all states when None)."""
        keep = None if states is None else set(states)
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape)
        for r in self.rows:
            if keep is None or r.to in keep:
                total = total + r.weight * r.sojourn.cdf(t)
        return total


# --------------------------------------------------------------------------
# obstacle schedules
# --------------------------------------------------------------------------

def _fs(s) -> frozenset:
    return frozenset(int(v) for v in s)


@dataclass(frozen=True)
class Fixed:
    set: frozenset = frozenset()
    kind = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "set", _fs(self.set))

    def at(self, n: int) -> frozenset:
        return self.set

    def distinct(self):
        yield 0, self.set


@dataclass(frozen=True)
class Periodic:
    sets: tuple[frozenset, ...]
    kind = "periodic"

    def __post_init__(self):
        if not self.sets:
            raise ValueError("periodic schedule needs at least one set")
        object.__setattr__(self, "sets", tuple(_fs(s) for s in self.sets))

    @property
    def period(self) -> int:
        return len(self.sets)

    def at(self, n: int) -> frozenset:
        return self.sets[n % self.period]

    def distinct(self):
        yield from enumerate(self.sets)


@dataclass(frozen=True)
class EventuallyConstant:
    prefix: tuple[frozenset, ...]
    tail: frozenset
    kind = "eventually_constant"

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(_fs(s) for s in self.prefix))
        object.__setattr__(self, "tail", _fs(self.tail))

    def at(self, n: int) -> frozenset:
        return self.prefix[n] if n < len(self.prefix) else self.tail

    def distinct(self):
        yield from enumerate(self.prefix)
        yield len(self.prefix), self.tail


@dataclass(frozen=True)
class Explicit(EventuallyConstant):
    """Listed sets for the first epochs, then a tail rule; same lookup as
    :class:`EventuallyConstant` but kept separate for file round-trips."""

    kind = "explicit"

    @property
    def sets(self):
        return self.prefix


Schedule = Fixed | Periodic | EventuallyConstant | Explicit


def obstacle_at(schedule: Schedule, n: int) -> frozenset:
    if n < 0:
        raise ValueError(f"epoch index must be nonnegative, got {n}")
    return schedule.at(n)


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Model:
    """Finite reach-avoid SMDP.

    States are the indices ``0 .. len(states) - 1``; ``states`` holds their
    display names. ``actions[x]`` lists the action names admissible at ``x``
    in a fixed order (the order decides argmax ties). ``kernel`` maps
    ``(x, action_name)`` to a :class:`TransitionLaw`.
    """

    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    kernel: dict
    obstacles: Schedule
    target: frozenset
    horizon: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(tuple(a) for a in self.actions))
        object.__setattr__(self, "target", _fs(self.target))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        return self.states.index(name)

    def law(self, x: int, a: str) -> TransitionLaw:
        try:
            return self.kernel[(x, a)]
        except KeyError:
            raise ValueError(f"no kernel law for state {self.states[x]!r}, action {a!r}") from None

    def obstacle(self, n: int) -> frozenset:
        return obstacle_at(self.obstacles, n)

    def regular(self, n: int) -> list[int]:
        """States that are neither obstacle at epoch ``n`` nor target."""
        b = self.obstacle(n)
        return [x for x in range(self.n_states) if x not in b and x not in self.target]

    def replace(self, **changes) -> "Model":
        fields = dict(states=self.states, actions=self.actions, kernel=self.kernel,
                      obstacles=self.obstacles, target=self.target, horizon=self.horizon,
                      meta=self.meta)
        fields.update(changes)
        return Model(**fields)


def validate_model(model: Model) -> list[str]:
    """Return a list of human-readable violations; empty when the model is valid."""
    out: list[str] = []
    names = model.states
    n = model.n_states
    if n == 0:
        return ["empty state space"]
    if not model.target:
        out.append("empty target set")
    if not math.isfinite(model.horizon) or model.horizon < 0:
        out.append(f"horizon must be a finite nonnegative number, got {model.horizon}")
    if len(model.actions) != n:
        out.append(f"action table has {len(model.actions)} entries for {n} states")

    for x in model.target:
        if not 0 <= x < n:
            out.append(f"target state index {x} out of range")

    for x in range(min(n, len(model.actions))):
        acts = model.actions[x]
        if not acts:
            out.append(f"empty action set at state {names[x]!r}")
        if len(set(acts)) != len(acts):
            out.append(f"duplicate action names at state {names[x]!r}")
        for a in acts:
            law = model.kernel.get((x, a))
            if law is None:
                out.append(f"missing kernel row for ({names[x]!r}, {a!r})")
                continue
            where = f"({names[x]!r}, {a!r})"
            for r in law.rows:
                if not 0 <= r.to < n:
                    out.append(f"row of {where} jumps to unknown state index {r.to}")
                if not 0.0 <= r.weight <= 1.0:
                    out.append(f"weight {r.weight} outside [0, 1] at {where}")
                for p in r.sojourn.problems():
                    out.append(f"{p} at {where}")
            total = law.total_weight
            if total > 1.0 + WEIGHT_TOL:
                out.append(f"super-stochastic row at {where}: total weight {total:g}")
            if x in model.target:
                leak = sum(r.weight for r in law.rows if r.to not in model.target)
                if leak > 0:
                    out.append(f"target not uniformly absorbing at {where}: "
                               f"weight {leak:g} leaves the target set")

    for (x, a) in model.kernel:
        if not (0 <= x < n and x < len(model.actions) and a in model.actions[x]):
            out.append(f"kernel row for undeclared pair ({x}, {a!r})")

    for k, b in model.obstacles.distinct():
        bad = [s for s in b if not 0 <= s < n]
        if bad:
            out.append(f"obstacle state index {bad} out of range at n={k}")
        if b & model.target:
            out.append(f"obstacle-target overlap at n={k}")
        if not set(range(n)) - b - model.target:
            out.append(f"no regular state at n={k}")
    return out


def kernel_mass(model: Model, x, a: str, t):
    """``Q(E, t | x, a)``: probability of having jumped (anywhere) by time ``t``."""
    x = model.index(x)
    if not 0 <= x < model.n_states or a not in model.actions[x]:
        raise ValueError(f"unknown state/action pair ({x!r}, {a!r})")
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    out = model.law(x, a).mass(t)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# separation constants
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparationConstants:
    delta: float
    epsilon0: float
    kTilde: int
    beta: float

    @property
    def contraction(self) -> float:
        """Per-block factor ``1 - epsilon0 ** kTilde``."""
        return 1.0 - self.epsilon0 ** self.kTilde


@dataclass(frozen=True)
class NotSeparated:
    """Returned by :func:`find_separation` when some pair jumps surely by ``delta``."""

    delta: float
    max_mass: float
    worst: tuple

    def __bool__(self):
        return False


def find_separation(model: Model, delta: float) -> SeparationConstants | NotSeparated:
    """Largest ``epsilon0`` with ``Q(E, delta | x, a) <= 1 - epsilon0`` over all
    non-target pairs, plus the derived block length and contraction rate."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    worst_mass, worst = 0.0, ()
    for x in range(model.n_states):
        if x in model.target:
            continue
        for a in model.actions[x]:
            m = float(model.law(x, a).mass(delta))
            if m > worst_mass:
                worst_mass, worst = m, (model.states[x], a)
    if worst_mass >= 1.0:
        return NotSeparated(delta, worst_mass, worst)
    eps0 = 1.0 - worst_mass
    k = math.floor(model.horizon / delta) + 1
    beta = (1.0 - eps0 ** k) ** (1.0 / k)
    return SeparationConstants(delta=float(delta), epsilon0=eps0, kTilde=k, beta=beta)
