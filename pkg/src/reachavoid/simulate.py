"""Monte Carlo trajectories of the semi-Markov process under a policy.

Random numbers come from a counter-based SplitMix64 stream: the uniform for
draw ``j`` of episode ``i`` under seed ``s`` is a pure function of
``(s, i, j)``. Episode ``i`` always sees the same numbers no matter how the
batch is chunked or ordered. Every jump consumes exactly three draws
(action, row, sojourn), so draw ``j`` of jump ``n`` is ``3 n + j``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterator

import numpy as np

from .augment import AugmentedModel, MarkovPolicy, StationaryAugmentedPolicy
from .model import Model, TransitionLaw

log = logging.getLogger(__name__)

__all__ = [
    "EpisodeOutcome", "Estimate", "EpisodeStream", "uniforms",
    "sample_jump", "run_episode", "simulate_batch", "estimate_reach_avoid",
    "estimate_augmented", "wilson_interval", "write_episode_log",
]

REACHED, HIT, TIMED_OUT = 1, 2, 3
_KIND = {REACHED: "ReachedTarget", HIT: "HitObstacle", TIMED_OUT: "TimedOut"}

DRAWS_PER_JUMP = 3
_MAX_DRAWS = 1 << 24          # per episode; keeps episode streams disjoint
MAX_JUMPS = _MAX_DRAWS // DRAWS_PER_JUMP - 1
CHUNK = 1 << 17

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps on purpose; numpy only warns for scalars
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _key(seed: int) -> np.ndarray:
    return _mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]


def uniforms(seed: int, episodes, draw) -> np.ndarray:
    """Uniforms in ``[0, 1)`` for (episode, draw) index arrays (broadcast)."""
    ep = np.asarray(episodes, dtype=np.uint64)
    dr = np.asarray(draw, dtype=np.uint64)
    with np.errstate(over="ignore"):
        counter = ep * np.uint64(_MAX_DRAWS) + dr
        z = _mix64(_key(seed) + counter * _GAMMA)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


class EpisodeStream:
    """Sequential view of one episode's draws; usable wherever an ``rng`` with
    ``random()`` is expected."""

    def __init__(self, seed: int, episode: int):
        self.seed, self.episode, self.counter = seed, episode, 0

    def random(self) -> float:
        u = float(uniforms(self.seed, self.episode, self.counter))
        self.counter += 1
        return u


@dataclass(frozen=True)
class EpisodeOutcome:
    kind: str                   # ReachedTarget | HitObstacle | TimedOut
    jumps: int
    at: float | None = None
    epoch: int | None = None


@dataclass(frozen=True)
class Estimate:
    pHat: float
    n: int
    ci95: tuple[float, float]
    seed: int
    reached: int = 0
    hit: int = 0
    timed_out: int = 0

    @property
    def se(self) -> float:
        return math.sqrt(max(self.pHat * (1.0 - self.pHat), 0.0) / self.n)


_Z95 = NormalDist().inv_cdf(0.975)


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return min(centre - half, p), max(centre + half, p)


# --------------------------------------------------------------------------
# scalar path
# --------------------------------------------------------------------------

def sample_jump(law: TransitionLaw, rng):
    """Draw ``(next_state, sojourn)`` or ``None`` when the pair never jumps.

    Always consumes two uniforms (row, then sojourn).
    """
    u_row, u_time = rng.random(), rng.random()
    acc = 0.0
    for r in law.rows:
        acc += r.weight
        if u_row < acc:
            s = float(np.asarray(r.sojourn.ppf(np.array([u_time]))).reshape(-1)[0])
            return (r.to, s) if math.isfinite(s) else None
    return None


def _pick(probs: np.ndarray, u: float) -> int:
    cum = np.cumsum(probs)
    return min(int(np.searchsorted(cum, u * cum[-1], side="right")), len(probs) - 1)


def run_episode(model: Model, policy: MarkovPolicy, x0, rng, horizon: float | None = None
                ) -> EpisodeOutcome:
    T = model.horizon if horizon is None else float(horizon)
    x = model.index(x0)
    if x in model.target:
        return EpisodeOutcome("ReachedTarget", 0, at=0.0)
    if x in model.obstacle(0):
        return EpisodeOutcome("HitObstacle", 0, at=0.0, epoch=0)
    sigma = 0.0
    for n in range(MAX_JUMPS):
        i = _pick(policy.probs(n, x), rng.random())
        jump = sample_jump(model.law(x, model.actions[x][i]), rng)
        if jump is None:
            return EpisodeOutcome("TimedOut", n)
        y, s = jump
        if sigma + s > T:
            return EpisodeOutcome("TimedOut", n)
        sigma += s
        if y in model.target:
            return EpisodeOutcome("ReachedTarget", n + 1, at=sigma)
        if y in model.obstacle(n + 1):
            return EpisodeOutcome("HitObstacle", n + 1, at=sigma, epoch=n + 1)
        x = y
    return EpisodeOutcome("TimedOut", MAX_JUMPS)


# --------------------------------------------------------------------------
# vectorized path
# --------------------------------------------------------------------------

@dataclass
class _Batch:
    kind: np.ndarray
    jumps: np.ndarray
    final_time: np.ndarray


def _choose_actions(state, probs_of, u):
    act = np.zeros(state.shape, dtype=np.int64)
    for x in np.unique(state):
        sel = state == x
        p = probs_of(int(x))
        cum = np.cumsum(p)
        act[sel] = np.minimum(np.searchsorted(cum, u[sel] * cum[-1], side="right"), len(p) - 1)
    return act


def _jump(rows_of, state, act, u_row, u_time):
    """Vectorized row + sojourn draw. ``rows_of(x, i)`` returns ``[(to, w, sojourn)]``.
    Returns next states (-1 for no jump) and sojourns (inf for no jump)."""
    nxt = np.full(state.shape, -1, dtype=np.int64)
    soj = np.full(state.shape, np.inf)
    key = state * 1024 + act
    for kv in np.unique(key):
        sel = np.flatnonzero(key == kv)
        rows = rows_of(int(kv // 1024), int(kv % 1024))
        if not rows:
            continue
        cum = np.cumsum([w for _, w, _ in rows])
        r = np.searchsorted(cum, u_row[sel], side="right")
        for j, (to, _, sojourn) in enumerate(rows):
            pick = sel[r == j]
            if pick.size:
                nxt[pick] = to
                soj[pick] = sojourn.ppf(u_time[pick])
    soj[nxt < 0] = np.inf
    return nxt, soj


def _run_batch(ids: np.ndarray, seed: int, x0: int, T: float, *, start, probs_of, rows_of,
               landing) -> _Batch:
    """Lockstep simulation: all live episodes make jump ``n`` together.

    ``start`` classifies the initial state, ``probs_of(n)`` gives the
    per-state decision rule at jump ``n`` (``None`` for no admissible move),
    ``rows_of(n)`` the row table and ``landing(n, y)`` the outcome code of
    landing in ``y`` after jump ``n`` (0 to continue).
    """
    size = ids.size
    kind = np.zeros(size, dtype=np.int8)
    jumps = np.zeros(size, dtype=np.int64)
    final = np.zeros(size)
    k0 = start(x0)
    if k0:
        kind[:] = k0
        return _Batch(kind, jumps, final)
    state = np.full(size, x0, dtype=np.int64)
    time = np.zeros(size)
    live = np.arange(size)
    n = 0
    while live.size:
        if n >= MAX_JUMPS:
            log.warning("%d episodes still running after %d jumps; counted as timed out",
                        live.size, n)
            kind[live] = TIMED_OUT
            break
        base = np.uint64(DRAWS_PER_JUMP * n)
        u_act = uniforms(seed, ids[live], base)
        u_row = uniforms(seed, ids[live], base + np.uint64(1))
        u_time = uniforms(seed, ids[live], base + np.uint64(2))
        st = state[live]
        rule = probs_of(n)
        stuck = np.isin(st, [x for x in np.unique(st) if rule(int(x)) is None])
        act = np.zeros(st.shape, dtype=np.int64)
        movable = ~stuck
        if movable.any():
            act[movable] = _choose_actions(st[movable], rule, u_act[movable])
        nxt = np.full(st.shape, -1, dtype=np.int64)
        soj = np.full(st.shape, np.inf)
        if movable.any():
            nxt[movable], soj[movable] = _jump(rows_of(n), st[movable], act[movable],
                                               u_row[movable], u_time[movable])
        new_time = time[live] + soj
        out = new_time > T          # includes no-jump and stuck (infinite sojourn)
        done = np.zeros(st.shape, dtype=np.int8)
        done[out] = TIMED_OUT
        final[live[out]] = time[live[out]]
        jumps[live[out]] = n
        landed = ~out
        codes = landing(n, nxt[landed])
        done[landed] = codes
        fin = landed & (done > 0)
        final[live[fin]] = new_time[fin]
        jumps[live[fin]] = n + 1
        kind[live[done > 0]] = done[done > 0]
        cont = done == 0
        state[live[cont]] = nxt[cont]
        time[live[cont]] = new_time[cont]
        live = live[cont]
        n += 1
    return _Batch(kind, jumps, final)


def _base_hooks(model: Model, policy: MarkovPolicy):
    target = np.zeros(model.n_states, dtype=bool)
    target[list(model.target)] = True

    def start(x):
        if target[x]:
            return REACHED
        return HIT if x in model.obstacle(0) else 0

    def probs_of(n):
        rule = policy.rule(n)
        return lambda x: rule[x]

    tables = {}

    def rows_of(n):
        def rows(x, i):
            key = (x, i)
            if key not in tables:
                tables[key] = [(r.to, r.weight, r.sojourn)
                               for r in model.law(x, model.actions[x][i]).rows]
            return tables[key]
        return rows

    def landing(n, y):
        obst = np.zeros(model.n_states, dtype=bool)
        obst[list(model.obstacle(n + 1))] = True
        return np.where(target[y], REACHED, np.where(obst[y], HIT, 0)).astype(np.int8)

    return dict(start=start, probs_of=probs_of, rows_of=rows_of, landing=landing)


def _chunks(episodes: int, chunk: int) -> Iterator[np.ndarray]:
    for lo in range(0, episodes, chunk):
        yield np.arange(lo, min(lo + chunk, episodes), dtype=np.uint64)


def simulate_batch(model: Model, policy: MarkovPolicy, x0, episodes: int, seed: int,
                   horizon: float | None = None, chunk: int = CHUNK) -> _Batch:
    """Outcome codes, jump counts and final times of episodes ``0..episodes-1``."""
    T = model.horizon if horizon is None else float(horizon)
    hooks = _base_hooks(model, policy)
    parts = [_run_batch(ids, seed, model.index(x0), T, **hooks)
             for ids in _chunks(episodes, chunk)]
    return _Batch(*(np.concatenate([getattr(p, f) for p in parts])
                    for f in ("kind", "jumps", "final_time")))


def _estimate(kind: np.ndarray, seed: int) -> Estimate:
    n = int(kind.size)
    reached = int(np.count_nonzero(kind == REACHED))
    hit = int(np.count_nonzero(kind == HIT))
    return Estimate(pHat=reached / n, n=n, ci95=wilson_interval(reached, n), seed=seed,
                    reached=reached, hit=hit, timed_out=n - reached - hit)


def estimate_reach_avoid(model: Model, policy: MarkovPolicy, x0, T: float | None = None,
                         episodes: int = 100_000, seed: int = 0, chunk: int = CHUNK) -> Estimate:
    """Fraction of episodes that land in the target by ``T`` before any obstacle."""
    if episodes < 1:
        raise ValueError("need at least one episode")
    batch = simulate_batch(model, policy, x0, episodes, seed, horizon=T, chunk=chunk)
    return _estimate(batch.kind, seed)


def estimate_augmented(aug: AugmentedModel, policy: StationaryAugmentedPolicy, x0,
                       T: float | None = None, episodes: int = 100_000, seed: int = 0,
                       chunk: int = CHUNK) -> Estimate:
    """Probability of reaching the target layers by ``T`` from ``(x0, 0)``.

    Runs on the pair process itself: obstacle pairs are recognized only by
    their empty action set (no transition), never by looking at the schedule.
    Paths that climb past ``aug.maxLayer`` are counted as not reaching.
    """
    model = aug.base
    horizon = model.horizon if T is None else float(T)
    target = np.zeros(model.n_states, dtype=bool)
    target[list(model.target)] = True
    truncated = 0

    def start(x):
        return REACHED if target[x] else 0

    def probs_of(k):
        if k > aug.maxLayer:
            return lambda x: None
        return lambda x: policy.probs(x, k) if aug.actions(x, k) else None

    def rows_of(k):
        def rows(x, i):
            a = model.actions[x][i]
            return [(y, w, s) for (y, _), w, s in aug.rows(x, k, a)]
        return rows

    def landing(k, y):
        return np.where(target[y], REACHED, 0).astype(np.int8)

    parts = []
    for ids in _chunks(episodes, chunk):
        b = _run_batch(ids, seed, model.index(x0), horizon, start=start, probs_of=probs_of,
                       rows_of=rows_of, landing=landing)
        truncated += int(np.count_nonzero((b.kind == TIMED_OUT) & (b.jumps > aug.maxLayer)))
        parts.append(b.kind)
    if truncated:
        log.warning("%d augmented episodes passed layer %d", truncated, aug.maxLayer)
    return _estimate(np.concatenate(parts), seed)


def write_episode_log(path, batch: _Batch) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "outcome", "jumps", "final_time"])
        for i, (k, j, t) in enumerate(zip(batch.kind, batch.jumps, batch.final_time)):
            w.writerow([i, _KIND[int(k)], int(j), repr(float(t))])
