"""Model files, value CSVs and policy JSON."""
from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .augment import MarkovPolicy
from .model import (EventuallyConstant, Explicit, Exponential, Fixed, Model, Periodic,
                    PiecewiseLinearCDF, PointMass, Row, TransitionLaw, UniformRamp)

__all__ = ["ModelFileError", "load_model", "parse_model", "model_to_dict", "bundled_model_path",
           "write_values_csv", "policy_to_dict", "write_policy_json", "load_policy"]


class ModelFileError(ValueError):
    """Unreadable, unparsable or inconsistent model file; the message says where."""


def bundled_model_path() -> Path:
    return Path(str(resources.files("reachavoid") / "data" / "plane_flight.json"))


def _names(where, items, known):
    out = []
    for i, name in enumerate(items):
        if name not in known:
            raise ModelFileError(f"{where}[{i}]: unknown state {name!r}")
        out.append(known[name])
    return frozenset(out)


def _sojourn(where, spec, literal_exponential):
    try:
        kind, params = spec["kind"], spec.get("params", {})
        if kind == "uniform_ramp":
            return UniformRamp(float(params["mu"]))
        if kind == "exponential":
            return Exponential(float(params["mu"]), literal=literal_exponential)
        if kind == "piecewise_linear":
            return PiecewiseLinearCDF(tuple(tuple(k) for k in params["knots"]))
        if kind == "point_mass":
            return PointMass(float(params["t0"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{where}: bad sojourn specification ({exc!r})") from None
    raise ModelFileError(f"{where}: unknown sojourn kind {kind!r}")


def _schedule(where, spec, known):
    try:
        kind = spec["kind"]
        if kind == "fixed":
            return Fixed(_names(f"{where}.set", spec["set"], known))
        if kind == "periodic":
            return Periodic(tuple(_names(f"{where}.sets[{i}]", s, known)
                                  for i, s in enumerate(spec["sets"])))
        if kind == "eventually_constant":
            return EventuallyConstant(
                tuple(_names(f"{where}.prefix[{i}]", s, known) for i, s in enumerate(spec["prefix"])),
                _names(f"{where}.tail", spec["tail"], known))
        if kind == "explicit":
            return Explicit(
                tuple(_names(f"{where}.sets[{i}]", s, known) for i, s in enumerate(spec["sets"])),
                _names(f"{where}.tail", spec["tail"], known))
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"{where}: bad obstacle schedule ({exc!r})") from None
    except ValueError as exc:
        raise ModelFileError(f"{where}: {exc}") from None
    raise ModelFileError(f"{where}: unknown schedule kind {kind!r}")


def parse_model(doc: dict, scenario: str | None = None) -> Model:
    """Build a :class:`Model` from a decoded model document.

    ``scenario`` picks an obstacle schedule from the optional ``scenarios``
    table in place of the top-level ``obstacles``.
    """
    try:
        names = [str(s) for s in doc["states"]]
        known = {s: i for i, s in enumerate(names)}
        if len(known) != len(names):
            raise ModelFileError("states: duplicate state names")
        literal = doc.get("exponential_rate", "reciprocal") == "literal"
        if doc.get("exponential_rate", "reciprocal") not in ("reciprocal", "literal"):
            raise ModelFileError("exponential_rate: expected 'reciprocal' or 'literal'")

        actions = [[] for _ in names]
        for s, acts in doc["actions"].items():
            if s not in known:
                raise ModelFileError(f"actions: unknown state {s!r}")
            actions[known[s]] = [str(a) for a in acts]

        kernel = {}
        for key, rows in doc["kernel"].items():
            s, sep, a = key.rpartition("/")
            if not sep or s not in known:
                raise ModelFileError(f"kernel[{key!r}]: expected 'state/action' with a known state")
            out = []
            for i, r in enumerate(rows):
                where = f"kernel[{key!r}][{i}]"
                if r.get("to") not in known:
                    raise ModelFileError(f"{where}.to: unknown state {r.get('to')!r}")
                out.append(Row(known[r["to"]], float(r["weight"]),
                               _sojourn(f"{where}.sojourn", r["sojourn"], literal)))
            kernel[(known[s], a)] = TransitionLaw(tuple(out))

        sched_spec = doc["obstacles"]
        where = "obstacles"
        if scenario is not None:
            table = doc.get("scenarios", {})
            if scenario not in table:
                raise ModelFileError(f"scenarios: no scenario named {scenario!r} "
                                     f"(have {sorted(table)})")
            sched_spec, where = table[scenario], f"scenarios[{scenario!r}]"
        obstacles = _schedule(where, sched_spec, known)
        target = _names("target", doc["target"], known)
        horizon = float(doc["horizon"])
    except KeyError as exc:
        raise ModelFileError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, AttributeError) as exc:
        raise ModelFileError(f"malformed model document ({exc})") from None
    meta = {"scenario": scenario, "scenarios": sorted(doc.get("scenarios", {}))}
    return Model(tuple(names), tuple(tuple(a) for a in actions), kernel, obstacles, target,
                 horizon, meta)


def load_model(path, scenario: str | None = None, horizon: float | None = None) -> Model:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        model = parse_model(doc, scenario)
    except ModelFileError as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    if horizon is not None:
        model = model.replace(horizon=float(horizon))
    return model


def _schedule_dict(s, names):
    def ns(xs):
        return [names[x] for x in sorted(xs)]
    if isinstance(s, Fixed):
        return {"kind": "fixed", "set": ns(s.set)}
    if isinstance(s, Periodic):
        return {"kind": "periodic", "sets": [ns(b) for b in s.sets]}
    if isinstance(s, Explicit):
        return {"kind": "explicit", "sets": [ns(b) for b in s.prefix], "tail": ns(s.tail)}
    return {"kind": "eventually_constant", "prefix": [ns(b) for b in s.prefix], "tail": ns(s.tail)}


def model_to_dict(model: Model) -> dict:
    names = model.states
    literal = any(getattr(r.sojourn, "literal", False)
                  for law in model.kernel.values() for r in law.rows)
    return {
        "states": list(names),
        "actions": {names[x]: list(a) for x, a in enumerate(model.actions)},
        "kernel": {f"{names[x]}/{a}": [
            {"to": names[r.to], "weight": r.weight,
             "sojourn": {"kind": r.sojourn.kind, "params": r.sojourn.params()}}
            for r in law.rows] for (x, a), law in model.kernel.items()},
        "obstacles": _schedule_dict(model.obstacles, names),
        "target": [names[x] for x in sorted(model.target)],
        "horizon": model.horizon,
        "exponential_rate": "literal" if literal else "reciprocal",
    }


def write_values_csv(path_or_file, model: Model, times: np.ndarray, values: np.ndarray,
                     scenario: str | None = None) -> None:
    """``state,t,value`` rows (``scenario,`` prefixed when given), full precision."""
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        head = ["state", "t", "value"]
        if scenario is not None:
            head = ["scenario"] + head
        w.writerow(head)
        for x, name in enumerate(model.states):
            for t, v in zip(times, values[x]):
                row = [name, repr(float(t)), repr(float(v))]
                w.writerow([scenario] + row if scenario is not None else row)
    finally:
        if own:
            fh.close()


def policy_to_dict(policy: MarkovPolicy, model: Model) -> dict:
    return {str(n): {model.states[x]: a for x, a in enumerate(layer)}
            for n, layer in enumerate(policy.action_names(model))}


def write_policy_json(path, policy: MarkovPolicy, model: Model) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy, model), indent=1) + "\n")


def load_policy(path, model: Model) -> MarkovPolicy:
    """Read a ``layer -> state -> action`` map; missing states fall back to their first action."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    layers = sorted(doc, key=int)
    if [int(k) for k in layers] != list(range(len(layers))):
        raise ModelFileError(f"{path}: layers must be 0..n without gaps")
    choices = []
    for k in layers:
        row = []
        for x, name in enumerate(model.states):
            a = doc[k].get(name, model.actions[x][0])
            if a not in model.actions[x]:
                raise ModelFileError(f"{path}: layer {k}, state {name!r}: unknown action {a!r}")
            row.append(a)
        choices.append(row)
    return MarkovPolicy.deterministic(model, choices)
