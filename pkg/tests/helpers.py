"""Small model factories shared by the test modules."""
from __future__ import annotations

import numpy as np

from reachavoid import (Exponential, Fixed, Model, PiecewiseLinearCDF, PointMass, Row,
                        TransitionLaw, UniformRamp, load_model)
from reachavoid.io import bundled_model_path

PLANE_VALUES = {  # W(x, 0, 18) on the default grid, frozen from the solver
    "b1": (0.0, 0.455734, 0.433233, 0.486884),
    "b2": (0.434440, 0.0, 0.379315, 0.422607),
    "b3": (0.499456, 0.0, 0.431687, 0.488532),
}


def plane(scenario="b1", horizon=None) -> Model:
    return load_model(bundled_model_path(), scenario=scenario, horizon=horizon)


def ramp_model(mu=2.0, horizon=3.0) -> Model:
    """One regular state that jumps into the target after a Uniform(0, mu) wait."""
    law = TransitionLaw((Row(1, 1.0, UniformRamp(mu)),))
    stay = TransitionLaw((Row(1, 1.0, PointMass(1.0)),))
    return Model(("x", "goal"), (("go",), ("stay",)), {(0, "go"): law, (1, "stay"): stay},
                 Fixed(()), {1}, horizon)


def _random_sojourn(rng: np.random.Generator, point_masses=True):
    pick = rng.integers(4) if point_masses else rng.choice([0, 1, 3])
    if pick == 0:
        return UniformRamp(float(rng.uniform(1.0, 4.0)))
    if pick == 1:
        return Exponential(float(rng.uniform(0.5, 3.0)))
    if pick == 2:
        return PointMass(float(rng.uniform(0.3, 2.5)))
    t1 = float(rng.uniform(0.5, 2.0))
    f1 = float(rng.uniform(0.1, 0.9))
    return PiecewiseLinearCDF(((0.0, 0.0), (t1, f1), (t1 + rng.uniform(0.5, 2.0), 1.0)))


def random_model(seed: int, n_states=None, obstacles=None, horizon=None,
                 sub_stochastic=True, point_masses=True) -> Model:
    """Random valid model; the last state is the absorbing target.

    Every sojourn law puts at most a few percent of mass below ``t = 0.1``,
    so the kernel is separated at ``delta = 0.1``. ``obstacles`` defaults to a
    fixed random set that leaves at least one regular state. With
    ``point_masses=False`` every sojourn law is continuous.
    """
    rng = np.random.default_rng(seed)
    n = int(n_states or rng.integers(4, 7))
    target = n - 1
    actions, kernel = [], {}
    for x in range(n):
        if x == target:
            actions.append(("stay",))
            kernel[(x, "stay")] = TransitionLaw((Row(x, 1.0, PointMass(1.0)),))
            continue
        names = tuple(f"a{i}" for i in range(int(rng.integers(1, 4))))
        actions.append(names)
        for a in names:
            dests = rng.choice(n, size=int(rng.integers(1, min(n, 4) + 1)), replace=False)
            w = rng.dirichlet(np.ones(len(dests)))
            if sub_stochastic and rng.random() < 0.3:
                w *= rng.uniform(0.7, 1.0)
            kernel[(x, a)] = TransitionLaw(tuple(
                Row(int(y), float(wy), _random_sojourn(rng, point_masses)) for y, wy in zip(dests, w)))
    if obstacles is None:
        pool = list(range(n - 1))
        size = int(rng.integers(0, len(pool)))
        obstacles = Fixed(frozenset(int(v) for v in rng.choice(pool, size=size, replace=False)))
    T = float(horizon if horizon is not None else rng.uniform(2.0, 5.0))
    return Model(tuple(str(i) for i in range(n)), tuple(actions), kernel, obstacles,
                 {target}, T)


def random_policy(model: Model, layers: int, seed: int):
    """Randomized Markov policy with ``layers`` epoch rules."""
    from reachavoid import MarkovPolicy
    rng = np.random.default_rng(seed)
    return MarkovPolicy(tuple(
        tuple(rng.dirichlet(np.ones(len(a))) for a in model.actions) for _ in range(layers)))
