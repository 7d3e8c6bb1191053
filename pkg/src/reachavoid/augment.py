"""Jump-counter augmentation.

Pairing each state with the number of jumps made so far turns the
epoch-dependent obstacle sequence into one fixed obstacle set on pairs
``(x, k)``: ``(x, k)`` is an obstacle iff ``x`` is in the k-th obstacle set.
From a non-obstacle pair every action moves to layer ``k + 1`` with the base
kernel; an obstacle pair only has the stay-forever action, stored here as an
empty action set with no transition rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .model import Model, validate_model

__all__ = [
    "InvalidModel", "AugmentedModel", "build_augmented",
    "MarkovPolicy", "StationaryAugmentedPolicy", "lift_policy", "project_policy",
    "first_action_filler",
]


class InvalidModel(ValueError):
    def __init__(self, report: list[str]):
        self.report = list(report)
        super().__init__("invalid model: " + "; ".join(self.report))


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    base: Model
    maxLayer: int

    @property
    def n_layers(self) -> int:
        return self.maxLayer + 1

    def is_obstacle(self, x: int, k: int) -> bool:
        return x in self.base.obstacle(k)

    def is_target(self, x: int) -> bool:
        return x in self.base.target

    def actions(self, x: int, k: int) -> tuple[str, ...]:
        """Admissible actions at ``(x, k)``; empty means the stay-forever action."""
        if self._check(k) and self.is_obstacle(x, k):
            return ()
        return self.base.actions[x]

    def rows(self, x: int, k: int, a: str) -> list[tuple[tuple[int, int], float, object]]:
        """Transition rows ``((y, k + 1), weight, sojourn)`` of pair ``(x, k)`` under ``a``."""
        if not self.actions(x, k):
            return []
        return [((r.to, k + 1), r.weight, r.sojourn) for r in self.base.law(x, a).rows]

    def _check(self, k: int) -> bool:
        if not 0 <= k <= self.maxLayer:
            raise IndexError(f"layer {k} outside 0..{self.maxLayer}")
        return True


def build_augmented(model: Model, maxLayer: int) -> AugmentedModel:
    if maxLayer < 1:
        raise ValueError(f"maxLayer must be positive, got {maxLayer}")
    report = validate_model(model)
    if report:
        raise InvalidModel(report)
    return AugmentedModel(model, int(maxLayer))


# --------------------------------------------------------------------------
# policies
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """Epoch-indexed randomized decision rules.

    ``plans[n][x]`` is a probability vector over ``model.actions[x]``. Epochs
    past the last plan reuse the last plan.
    """

    plans: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "plans", tuple(
            tuple(np.asarray(p, dtype=float) for p in plan) for plan in self.plans))

    def rule(self, n: int) -> tuple[np.ndarray, ...]:
        return self.plans[min(n, len(self.plans) - 1)]

    def probs(self, n: int, x: int) -> np.ndarray:
        return self.rule(n)[x]

    @classmethod
    def deterministic(cls, model: Model, choices) -> "MarkovPolicy":
        """Build from ``choices[n][x]`` given as action names or indices."""
        plans = []
        for layer in choices:
            plan = []
            for x, a in enumerate(layer):
                acts = model.actions[x]
                i = acts.index(a) if isinstance(a, str) else int(a)
                v = np.zeros(len(acts))
                v[i] = 1.0
                plan.append(v)
            plans.append(tuple(plan))
        return cls(tuple(plans))

    @classmethod
    def uniform(cls, model: Model, layers: int) -> "MarkovPolicy":
        plan = tuple(np.full(len(a), 1.0 / len(a)) for a in model.actions)
        return cls(tuple(plan for _ in range(layers)))

    def is_deterministic(self) -> bool:
        return all(np.count_nonzero(p) == 1 for plan in self.plans for p in plan)

    def action_names(self, model: Model) -> list[list[str]]:
        """Most likely action per epoch and state (the action, for deterministic policies)."""
        return [[model.actions[x][int(np.argmax(p))] for x, p in enumerate(plan)]
                for plan in self.plans]

    def problems(self, model: Model) -> list[str]:
        out = []
        for n, plan in enumerate(self.plans):
            if len(plan) != model.n_states:
                out.append(f"plan {n} covers {len(plan)} of {model.n_states} states")
                continue
            for x, p in enumerate(plan):
                if p.shape != (len(model.actions[x]),):
                    out.append(f"plan {n}, state {model.states[x]!r}: wrong length")
                elif np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                    out.append(f"plan {n}, state {model.states[x]!r}: not a distribution")
        return out


@dataclass(frozen=True, eq=False)
class StationaryAugmentedPolicy:
    """``choice[k][x]``: probability vector over ``A(x)`` or ``None`` for the
    stay-forever action on obstacle pairs."""

    choice: tuple[tuple[np.ndarray | None, ...], ...]

    @property
    def maxLayer(self) -> int:
        return len(self.choice) - 1

    def probs(self, x: int, k: int) -> np.ndarray | None:
        return self.choice[min(k, self.maxLayer)][x]


def lift_policy(policy: MarkovPolicy, model: Model, maxLayer: int | None = None
                ) -> StationaryAugmentedPolicy:
    """Read epoch ``n`` of a Markov policy as layer ``n`` of a stationary one."""
    if maxLayer is None:
        maxLayer = len(policy.plans) - 1
    choice = []
    for k in range(maxLayer + 1):
        b = model.obstacle(k)
        plan = policy.rule(k)
        choice.append(tuple(None if x in b else np.array(plan[x], copy=True)
                            for x in range(model.n_states)))
    return StationaryAugmentedPolicy(tuple(choice))


Filler = Callable[[int, int], np.ndarray] | Mapping


def first_action_filler(model: Model) -> Callable[[int, int], np.ndarray]:
    def fill(x: int, n: int) -> np.ndarray:
        v = np.zeros(len(model.actions[x]))
        v[0] = 1.0
        return v
    return fill


def project_policy(augPolicy: StationaryAugmentedPolicy, model: Model,
                   filler: Filler) -> MarkovPolicy:
    """Turn a layer-indexed policy back into an epoch-indexed one.

    ``filler`` supplies the decision rule on states that are obstacles at the
    epoch in question; it is either a callable ``(x, n) -> probs`` or a
    mapping keyed by ``(x, n)``.
    """
    plans = []
    for n in range(augPolicy.maxLayer + 1):
        b = model.obstacle(n)
        plan = []
        for x in range(model.n_states):
            p = augPolicy.choice[n][x]
            if x in b or p is None:
                try:
                    p = filler(x, n) if callable(filler) else filler[(x, n)]
                except KeyError:
                    raise ValueError(f"filler has no rule for state {model.states[x]!r} "
                                     f"at epoch {n}") from None
                p = np.asarray(p, dtype=float)
                if p.shape != (len(model.actions[x]),):
                    raise ValueError(f"filler rule for state {model.states[x]!r} at epoch {n} "
                                     "does not match the action set")
            plan.append(np.array(p, dtype=float, copy=True))
        plans.append(tuple(plan))
    return MarkovPolicy(tuple(plans))
