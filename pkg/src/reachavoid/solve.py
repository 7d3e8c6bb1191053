"""Discretized Bellman machinery on the jump-counter layers.

Value curves live on a uniform grid ``t_m = m T / M``. For a pair ``(x, k)``
and action ``a`` the operator is

    L^a W(x, k, t) = Q(C, t | x, a)
                     + sum_{y not in B_{k+1} or C} w(y|x,a) int_0^t dF_y(u) W(y, k+1, t-u)

(zero when ``x`` is an obstacle at layer ``k``). The time integral is a
Stieltjes sum over grid cells: exact CDF increments per cell times the
next-layer curve at the cell midpoint offset (linear interpolation between
nodes). On the grid this is a discrete convolution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .augment import (AugmentedModel, InvalidModel, MarkovPolicy, StationaryAugmentedPolicy,
                      build_augmented, first_action_filler, lift_policy, project_policy)
from .model import (EventuallyConstant, Fixed, Model, NotSeparated, Periodic,
                    SeparationConstants, find_separation, validate_model)

log = logging.getLogger(__name__)

__all__ = [
    "TimeGrid", "ValueLayer", "SolveResult", "SolverPreconditionError",
    "bellman_apply", "value_iterate", "convergence_params", "solve_improved",
    "extract_policy", "evaluate_policy", "policy_value", "monotonicity_check",
    "MonotonicityReport",
]

# argmax ties: actions whose value at T is within this of the best count as tied
TIE_TOL = 1e-12


class SolverPreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int = 720

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"grid needs at least one step, got {self.steps}")
        if not self.horizon >= 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


@dataclass(frozen=True, eq=False)
class ValueLayer:
    """Curves ``W(x, k, .)`` of one layer; ``values[x]`` runs over the grid."""

    layer: int
    values: np.ndarray

    def at(self, x: int) -> np.ndarray:
        return self.values[x]


@dataclass(frozen=True, eq=False)
class SolveResult:
    value: ValueLayer
    policy: StationaryAugmentedPolicy
    iterations: int
    errorBound: float
    residual: float
    argmax: tuple = ()
    grid: TimeGrid | None = None
    separation: SeparationConstants | None = None
    planned: int | None = None

    def final(self) -> np.ndarray:
        """Layer-0 values at the horizon, one per state."""
        return self.value.values[:, -1]


# --------------------------------------------------------------------------
# kernel tabulated on a grid
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Tabulated:
    """Per ``(x, action index)``: direct target mass on the grid and the
    per-cell CDF increments ``w * dF`` of every non-target successor."""

    to_target: tuple          # [x][i] -> (M+1,) array
    jumps: tuple              # [x][i] -> tuple of (y, (M,) array)
    steps: int


@lru_cache(maxsize=16)
def _tabulate(model: Model, grid: TimeGrid) -> _Tabulated:
    t = grid.times
    to_target, jumps = [], []
    for x in range(model.n_states):
        tt, jj = [], []
        for a in model.actions[x]:
            direct = np.zeros(grid.steps + 1)
            incr: dict[int, np.ndarray] = {}
            for r in model.law(x, a).rows:
                if r.weight == 0:
                    continue
                cdf = r.weight * r.sojourn.cdf(t)
                if r.to in model.target:
                    direct += cdf
                else:
                    d = np.diff(cdf)
                    incr[r.to] = incr[r.to] + d if r.to in incr else d
            tt.append(direct)
            jj.append(tuple(sorted(incr.items())))
        to_target.append(tuple(tt))
        jumps.append(tuple(jj))
    return _Tabulated(tuple(to_target), tuple(jumps), grid.steps)


def _midpoints(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[..., :-1] + values[..., 1:])


def _apply(tab: _Tabulated, x: int, i: int, mid_next: np.ndarray | None,
           next_obstacle: frozenset) -> np.ndarray:
    out = tab.to_target[x][i].copy()
    if mid_next is not None:
        m = tab.steps
        for y, dF in tab.jumps[x][i]:
            if y in next_obstacle:
                continue
            out[1:] += np.convolve(dF, mid_next[y])[:m]
    return np.clip(out, 0.0, 1.0, out=out)


def _fresh(model: Model, grid: TimeGrid) -> np.ndarray:
    v = np.zeros((model.n_states, grid.steps + 1))
    v[list(model.target)] = 1.0
    return v


def _layer_max(model: Model, tab: _Tabulated, grid: TimeGrid, k: int,
               next_values: np.ndarray | None):
    """One layer of ``max_a L^a``. Returns the new curves and the argmax at T
    (``-1`` on obstacle and target states)."""
    obstacle = model.obstacle(k)
    next_obstacle = model.obstacle(k + 1)
    mid = None if next_values is None else _midpoints(next_values)
    new = _fresh(model, grid)
    choice = np.full(model.n_states, -1, dtype=int)
    for x in range(model.n_states):
        if x in model.target or x in obstacle:
            continue
        cands = np.array([_apply(tab, x, i, mid, next_obstacle)
                          for i in range(len(model.actions[x]))])
        new[x] = cands.max(axis=0)
        end = cands[:, -1]
        choice[x] = int(np.flatnonzero(end >= end.max() - TIE_TOL)[0])
    return new, choice


def bellman_apply(aug: AugmentedModel, a: str, nextLayer: ValueLayer, x: int, k: int,
                  grid: TimeGrid) -> np.ndarray:
    """``L^a W(x, k, .)`` on the grid, with ``W`` given by ``nextLayer`` (layer ``k + 1``)."""
    if nextLayer.layer != k + 1:
        raise ValueError(f"next layer must be {k + 1}, got {nextLayer.layer}")
    model = aug.base
    if a not in model.actions[x]:
        raise ValueError(f"action {a!r} not admissible at state {model.states[x]!r}")
    if aug.is_obstacle(x, k):
        return np.zeros(grid.steps + 1)
    if x in model.target:
        return np.ones(grid.steps + 1)
    tab = _tabulate(model, grid)
    i = model.actions[x].index(a)
    return _apply(tab, x, i, _midpoints(np.asarray(nextLayer.values, dtype=float)),
                  model.obstacle(k + 1))


# --------------------------------------------------------------------------
# textbook value iteration over all layers
# --------------------------------------------------------------------------

def _error_bound(sep: SeparationConstants | None, iterations: int) -> float:
    if sep is None:
        return math.nan
    return sep.contraction ** (iterations // sep.kTilde)


def _policy_from_argmax(model: Model, argmax) -> StationaryAugmentedPolicy:
    choice = []
    for k, rec in enumerate(argmax):
        obstacle = model.obstacle(k)
        row = []
        for x in range(model.n_states):
            if x in obstacle:
                row.append(None)
                continue
            v = np.zeros(len(model.actions[x]))
            v[max(int(rec[x]), 0)] = 1.0
            row.append(v)
        choice.append(tuple(row))
    return StationaryAugmentedPolicy(tuple(choice))


def value_iterate(aug: AugmentedModel, grid: TimeGrid, nMax: int, tol: float = 0.0,
                  sep: SeparationConstants | None = None):
    """Iterate ``W_{n+1} = max_a L^a W_n`` on every layer ``0..aug.maxLayer``.

    Returns ``(snapshots, result)`` where ``snapshots[n - 1]`` holds
    ``W_n(., 0, .)``. Layers above ``maxLayer`` are treated as zero, which
    leaves ``W_n(., 0, .)`` exact for ``n <= maxLayer + 1``. Iteration stops
    after ``nMax`` steps or once the layer-0 sup-norm change drops below
    ``tol``. ``sep`` only feeds the reported error bound.
    """
    if aug.maxLayer < nMax:
        raise ValueError(f"maxLayer {aug.maxLayer} is smaller than nMax {nMax}")
    model = aug.base
    tab = _tabulate(model, grid)
    L = aug.maxLayer
    current = np.array([_fresh(model, grid) for _ in range(L + 1)])
    snapshots = []
    residual = math.inf
    argmax: list = []
    n = 0
    while n < nMax:
        new = np.empty_like(current)
        argmax = []
        for k in range(L + 1):
            nxt = current[k + 1] if k < L and n > 0 else None
            new[k], choice = _layer_max(model, tab, grid, k, nxt)
            argmax.append(choice)
        residual = float(np.max(np.abs(new[0] - current[0])))
        current = new
        n += 1
        snapshots.append(current[0].copy())
        if residual < tol:
            break
    result = SolveResult(
        value=ValueLayer(0, current[0]), policy=_policy_from_argmax(model, argmax),
        iterations=n, errorBound=_error_bound(sep, n), residual=residual,
        argmax=tuple(argmax), grid=grid, separation=sep)
    return snapshots, result


def value_iterate_layers(aug: AugmentedModel, grid: TimeGrid, n: int) -> np.ndarray:
    """All layers of ``W_n`` as one ``(maxLayer + 1, |E|, M + 1)`` array."""
    model = aug.base
    tab = _tabulate(model, grid)
    L = aug.maxLayer
    current = None
    for _ in range(n):
        new = np.empty((L + 1, model.n_states, grid.steps + 1))
        for k in range(L + 1):
            nxt = current[k + 1] if current is not None and k < L else None
            new[k] = _layer_max(model, tab, grid, k, nxt)[0]
        current = new
    return current


# --------------------------------------------------------------------------
# improved backward sweep
# --------------------------------------------------------------------------

def convergence_params(sep: SeparationConstants, rho: float) -> int:
    """Iterations ``ceil(kTilde + log_beta(rho))`` after which the layer-0 gap is below ``rho``."""
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if not 0 < sep.beta < 1:
        raise ValueError("contraction rate is not below 1; the iteration bound is unusable")
    planned = sep.kTilde + math.log(rho) / math.log(sep.beta)
    # absorb float noise so that rho -> 1 gives exactly kTilde
    return int(math.ceil(planned - 1e-9))


def _sweep(model: Model, grid: TimeGrid, n: int):
    """``W_n(., 0, .)`` by walking layers ``n-1, ..., 0``; only two layers are alive."""
    tab = _tabulate(model, grid)
    values, top = _layer_max(model, tab, grid, n - 1, None)
    argmax = [top]
    for k in range(n - 2, -1, -1):
        values, choice = _layer_max(model, tab, grid, k, values)
        argmax.append(choice)
    argmax.reverse()
    return values, argmax


def _parse_stop(stopRule):
    if stopRule in (None, "bound"):
        return "bound", 0.0
    if isinstance(stopRule, str):
        kind, _, tol = stopRule.partition(":")
        if kind == "residual":
            return "residual", float(tol) if tol else 1e-9
    elif isinstance(stopRule, tuple) and stopRule[0] == "residual":
        return "residual", float(stopRule[1])
    raise ValueError(f"unknown stop rule {stopRule!r}")


def solve_improved(model: Model, grid: TimeGrid, epsilon: float = 1.02e-5, delta: float = 1.0,
                   stopRule="residual:1e-9", max_iterations: int = 20_000,
                   iterations: int | None = None) -> SolveResult:
    """Maximal reach-avoid curves at layer 0 and an argmax policy.

    ``stopRule="bound"`` runs the iteration count guaranteed by the
    contraction estimate for ``rho = epsilon / 2``. ``"residual:TOL"`` grows
    the sweep depth (1, 2, 4, ...) until one extra iteration changes the
    layer-0 curves by less than ``TOL`` in sup-norm, never going beyond the
    guaranteed count. ``iterations`` forces an exact count instead.
    """
    report = validate_model(model)
    if report:
        raise InvalidModel(report)
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    sep = find_separation(model, delta)
    if isinstance(sep, NotSeparated):
        raise SolverPreconditionError(
            f"kernel is not separated at delta={delta:g}: state {sep.worst[0]!r}, action "
            f"{sep.worst[1]!r} has jumped with probability {sep.max_mass:g}; "
            f"try a smaller delta such as {delta / 2:g}")
    try:
        planned = convergence_params(sep, epsilon / 2)
    except ValueError:
        planned = max_iterations
    planned = max(1, min(planned, max_iterations))
    kind, tol = _parse_stop(stopRule)

    if iterations is not None or kind == "bound":
        n = planned if iterations is None else int(iterations)
        if n < 1:
            raise ValueError(f"need at least one iteration, got {n}")
        prev = _sweep(model, grid, n - 1)[0] if n > 1 else _fresh(model, grid)
        values, argmax = _sweep(model, grid, n)
    else:
        n = 1
        prev, _ = _sweep(model, grid, 1)
        while True:
            values, argmax = _sweep(model, grid, n + 1)
            if np.max(np.abs(values - prev)) < tol or n + 1 >= planned:
                n += 1
                break
            n = min(2 * n, planned - 1)
            prev, _ = _sweep(model, grid, n)
    residual = float(np.max(np.abs(values - prev)))
    log.debug("solve_improved: %d iterations (planned %d), residual %.3g", n, planned, residual)
    return SolveResult(
        value=ValueLayer(0, values), policy=_policy_from_argmax(model, argmax),
        iterations=n, errorBound=_error_bound(sep, n), residual=residual,
        argmax=tuple(argmax), grid=grid, separation=sep, planned=planned)


def extract_policy(sweepArgmax, model: Model, filler=None) -> MarkovPolicy:
    """Deterministic Markov policy: epoch ``n`` plays the layer-``n`` argmax."""
    if isinstance(sweepArgmax, SolveResult):
        sweepArgmax = sweepArgmax.argmax
    aug_policy = _policy_from_argmax(model, sweepArgmax)
    fill = filler or first_action_filler(model)
    return project_policy(aug_policy, model, fill)


# --------------------------------------------------------------------------
# policy evaluation
# --------------------------------------------------------------------------

def evaluate_policy(aug: AugmentedModel, grid: TimeGrid,
                    policy: StationaryAugmentedPolicy) -> np.ndarray:
    """Curves of a fixed stationary policy on every layer ``0..aug.maxLayer``.

    Backward sweep of ``L^psi`` from the top layer, with zero above it; layer
    ``k`` therefore accounts for at most ``maxLayer + 1 - k`` jumps.
    """
    model = aug.base
    tab = _tabulate(model, grid)
    L = aug.maxLayer
    out = np.empty((L + 1, model.n_states, grid.steps + 1))
    mid = None
    for k in range(L, -1, -1):
        obstacle = model.obstacle(k)
        next_obstacle = model.obstacle(k + 1)
        layer = _fresh(model, grid)
        for x in range(model.n_states):
            if x in model.target or x in obstacle:
                continue
            p = policy.probs(x, k)
            acc = np.zeros(grid.steps + 1)
            for i, w in enumerate(p):
                if w > 0:
                    acc += w * _apply(tab, x, i, mid, next_obstacle)
            layer[x] = np.clip(acc, 0.0, 1.0)
        out[k] = layer
        mid = _midpoints(layer)
    return out


def policy_value(model: Model, grid: TimeGrid, policy: MarkovPolicy, layers: int = 64) -> np.ndarray:
    """Layer-0 curves of a Markov policy (lifted to the augmented model)."""
    aug = build_augmented(model, layers)
    return evaluate_policy(aug, grid, lift_policy(policy, model, layers))[0]


# --------------------------------------------------------------------------
# layer monotonicity under nested schedules
# --------------------------------------------------------------------------

@dataclass
class MonotonicityReport:
    direction: str                      # shrinking | growing | both | not_applicable
    constant_from: int | None = None    # first layer of a constant tail, if any
    layers: int = 0
    violations: list = field(default_factory=list)

    @property
    def applicable(self) -> bool:
        return self.direction != "not_applicable" or self.constant_from is not None

    @property
    def ok(self) -> bool:
        return not self.violations


def _schedule_shape(model: Model) -> tuple[int, int | None]:
    """Number of layers that exhibit the whole pattern, and the start of a constant tail."""
    s = model.obstacles
    if isinstance(s, Fixed):
        return 1, 0
    if isinstance(s, Periodic):
        return s.period + 1, (0 if len(set(s.sets)) == 1 else None)
    if isinstance(s, EventuallyConstant):
        return len(s.prefix) + 1, len(s.prefix)
    raise TypeError(f"unsupported schedule {type(s).__name__}")


def monotonicity_check(model: Model, grid: TimeGrid, iterations: int,
                       tol: float = 1e-12) -> MonotonicityReport:
    """Compare adjacent-layer curves of ``W_n`` for a nested or eventually
    constant schedule; every layer compared is computed with exactly
    ``iterations`` Bellman steps."""
    span, n0 = _schedule_shape(model)
    pairs = range(1, span + 1)
    shrinking = all(model.obstacle(k) <= model.obstacle(k - 1) for k in pairs)
    growing = all(model.obstacle(k - 1) <= model.obstacle(k) for k in pairs)
    direction = ("both" if shrinking and growing else "shrinking" if shrinking
                 else "growing" if growing else "not_applicable")
    report = MonotonicityReport(direction, n0)
    if not report.applicable:
        return report

    K = span + 2
    aug = build_augmented(model, K + iterations)
    W = value_iterate_layers(aug, grid, iterations)
    report.layers = K + 1
    for k in range(1, K + 1):
        lo, hi = W[k - 1], W[k]
        for x in range(model.n_states):
            if x in model.target:
                continue
            d = hi[x] - lo[x]
            if shrinking and d.min() < -tol:
                report.violations.append(("shrinking", k, model.states[x], float(d.min())))
            if growing and d.max() > tol:
                report.violations.append(("growing", k, model.states[x], float(d.max())))
    if n0 is not None:
        for k in range(n0 + 1, K + 1):
            gap = float(np.max(np.abs(W[k] - W[n0])))
            if gap > tol:
                report.violations.append(("constant_tail", k, None, gap))
    return report
