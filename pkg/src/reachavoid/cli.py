"""Command-line front end: ``reachavoid {validate,solve,sweep,compare}``.

Exit codes: 0 success, 1 invalid or unreadable model, 2 solver precondition
failure (kernel not separated at the chosen delta), 3 comparison failure.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from dataclasses import dataclass
from pathlib import Path


from .augment import InvalidModel
from .io import (ModelFileError, bundled_model_path, load_model, load_policy,
                 write_policy_json, write_values_csv)
from .model import Model, NotSeparated, find_separation, validate_model
from .simulate import estimate_reach_avoid
from .solve import SolverPreconditionError, TimeGrid, extract_policy, solve_improved

EXIT_OK, EXIT_INVALID, EXIT_PRECONDITION, EXIT_COMPARE = 0, 1, 2, 3


@dataclass
class RunConfig:
    model: Path
    scenario: str | None
    horizon: float | None
    grid: int
    epsilon: float
    delta: float
    stop: str
    episodes: int
    seed: int
    out: Path | None
    policy: Path | None = None
    policy_out: Path | None = None
    quad_tol: float = 0.005

    def problems(self) -> list[str]:
        out = []
        if not 0 < self.epsilon < 1:
            out.append("--epsilon must lie in (0, 1)")
        if self.grid < 2:
            out.append("--grid must be at least 2")
        if self.episodes < 1:
            out.append("--episodes must be at least 1")
        if self.delta <= 0:
            out.append("--delta must be positive")
        return out


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _load(cfg: RunConfig, scenario=...) -> Model:
    sc = cfg.scenario if scenario is ... else scenario
    return load_model(cfg.model, scenario=sc, horizon=cfg.horizon)


def _solve(model: Model, cfg: RunConfig):
    grid = TimeGrid(model.horizon, cfg.grid)
    return grid, solve_improved(model, grid, epsilon=cfg.epsilon, delta=cfg.delta,
                                stopRule=cfg.stop)


def _regular0(model: Model) -> list[int]:
    return model.regular(0)


def cmd_validate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model = _load(cfg)
    report = validate_model(model)
    if report:
        print(f"invalid: {len(report)} problem(s)", file=out)
        for line in report:
            print(f"  - {line}", file=out)
        return EXIT_INVALID
    sep = find_separation(model, cfg.delta)
    if isinstance(sep, NotSeparated):
        print(f"valid; not separated at δ={_fmt(cfg.delta)} (state {sep.worst[0]!r}, action "
              f"{sep.worst[1]!r} jumps with probability {_fmt(sep.max_mass)}); "
              f"try a smaller --delta", file=out)
        return EXIT_PRECONDITION
    print(f"valid; δ={_fmt(sep.delta)}, ε0={_fmt(sep.epsilon0)}, K̃={sep.kTilde}, "
          f"β={_fmt(sep.beta)}", file=out)
    return EXIT_OK


def _summary(model: Model, result, label: str, out) -> None:
    T = model.horizon
    print(f"{label}T={_fmt(T)}, iterations {result.iterations} (bound {result.planned}), "
          f"error bound {_fmt(result.errorBound)}, residual {_fmt(result.residual)}", file=out)
    b0 = model.obstacle(0)
    for x, name in enumerate(model.states):
        if x in model.target:
            continue
        note = "  [obstacle]" if x in b0 else ""
        print(f"W({name},0,{_fmt(T)}) = {_fmt(result.value.values[x, -1])}{note}", file=out)


def cmd_solve(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model = _load(cfg)
    grid, result = _solve(model, cfg)
    label = f"scenario {cfg.scenario}: " if cfg.scenario else ""
    _summary(model, result, label, out)
    if cfg.out is not None:
        write_values_csv(cfg.out, model, grid.times, result.value.values)
        pol_path = cfg.policy_out or cfg.out.with_suffix(".policy.json")
        write_policy_json(pol_path, extract_policy(result, model), model)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    if cfg.scenario is not None:
        scenarios = [cfg.scenario]
    else:
        scenarios = _load(cfg, None).meta.get("scenarios") or [None]
    buf = io.StringIO()
    header_done = False
    for sc in scenarios:
        model = _load(cfg, sc)
        grid, result = _solve(model, cfg)
        part = io.StringIO()
        write_values_csv(part, model, grid.times, result.value.values,
                         scenario=sc if sc is not None else "default")
        text = part.getvalue()
        buf.write(text if not header_done else text.split("\n", 1)[1])
        header_done = True
        _summary(model, result, f"scenario {sc}: " if sc else "", out)
    if cfg.out is not None:
        cfg.out.write_text(buf.getvalue())
    else:
        out.write(buf.getvalue())
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model = _load(cfg)
    grid, result = _solve(model, cfg)
    policy = (load_policy(cfg.policy, model) if cfg.policy is not None
              else extract_policy(result, model))
    lines = [f"{'state':>6} {'solver':>10} {'mc':>10} {'ci_lo':>10} {'ci_hi':>10}  verdict"]
    failed = 0
    for x in _regular0(model):
        w = float(result.value.values[x, -1])
        est = estimate_reach_avoid(model, policy, x, episodes=cfg.episodes, seed=cfg.seed)
        lo, hi = est.ci95
        ok = lo - cfg.quad_tol <= w <= hi + cfg.quad_tol
        failed += not ok
        lines.append(f"{model.states[x]:>6} {_fmt(w):>10} {_fmt(est.pHat):>10} {_fmt(lo):>10} "
                     f"{_fmt(hi):>10}  {'pass' if ok else 'FAIL'}")
    lines.append(f"episodes {cfg.episodes}, seed {cfg.seed}, allowance {_fmt(cfg.quad_tol)}: "
                 f"{'all pass' if not failed else f'{failed} fail'}")
    text = "\n".join(lines) + "\n"
    out.write(text)
    if cfg.out is not None:
        cfg.out.write_text(text)
    return EXIT_COMPARE if failed else EXIT_OK


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "sweep": cmd_sweep,
            "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", type=Path, default=None,
                        help="model JSON file (default: bundled plane-flight example)")
    common.add_argument("--scenario", default=None, help="obstacle scenario from the model file")
    common.add_argument("--horizon", type=float, default=None, help="override the horizon T")
    common.add_argument("--grid", type=int, default=720, help="grid steps M (default 720)")
    common.add_argument("--epsilon", type=float, default=1.02e-5)
    common.add_argument("--delta", type=float, default=1.0)
    common.add_argument("--stop", default="residual:1e-9", help="bound | residual:TOL")
    common.add_argument("--episodes", type=int, default=100_000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="reachavoid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check a model file")
    s = sub.add_parser("solve", parents=[common], help="maximal reach-avoid values and policy")
    s.add_argument("--policy-out", type=Path, default=None,
                   help="policy JSON path (default: next to --out)")
    sub.add_parser("sweep", parents=[common], help="value curves over [0, T] for every scenario")
    c = sub.add_parser("compare", parents=[common], help="solver against Monte Carlo")
    c.add_argument("--policy", type=Path, default=None, help="policy JSON to simulate instead")
    c.add_argument("--quad-tol", type=float, default=0.005,
                   help="allowance added to the confidence interval")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = RunConfig(
        model=args.model or bundled_model_path(), scenario=args.scenario, horizon=args.horizon,
        grid=args.grid, epsilon=args.epsilon, delta=args.delta, stop=args.stop,
        episodes=args.episodes, seed=args.seed, out=args.out,
        policy=getattr(args, "policy", None), policy_out=getattr(args, "policy_out", None),
        quad_tol=getattr(args, "quad_tol", 0.005))
    problems = cfg.problems()
    if problems:
        for line in problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg)
    except (ModelFileError, InvalidModel) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverPreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
