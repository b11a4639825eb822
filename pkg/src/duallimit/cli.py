"""Command-line front end.

Configuration comes from a single JSON file (``--config``); command-line flags
override the file, and the file overrides built-in defaults.  Exit codes:
0 success, 2 input or parse error, 3 infeasible, 4 degenerate data.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from duallimit import identify, mechanics, planner, simulator
from duallimit.mechanics import DomainError, FrictionParams, NoIntersection
from duallimit.output import boundary_svg, format_float, path_svg, to_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_DEGENERATE = 4

#: Case III parameters whose k_v sits just above 1.25 rad/m for N_e in 3-5 N
DEFAULT_FRICTION = dict(mu_e=0.6, mu_p=0.5, r_e=0.02, r_p=0.08, c=0.6, mass=0.05, gravity=9.81)


class InputError(Exception):
    pass


class Infeasible(Exception):
    pass


@dataclass
class Config:
    friction: FrictionParams = field(default_factory=lambda: FrictionParams(**DEFAULT_FRICTION))
    n_e: float = 4.0
    safety: float = mechanics.DEFAULT_SAFETY
    n: int = 30
    c1: float = 10.0
    c2: float = 1.0
    k_v: float | None = None  # None: physical k_v at n_e
    convention: str = "squared"
    seed: int = 0
    kv_surface: str = "support"
    object_name: str = "object"

    def planner_kv(self, n_e: float | None = None) -> float:
        if self.k_v is not None:
            return self.k_v
        n_e = self.n_e if n_e is None else n_e
        try:
            return mechanics.kv(self.friction, n_e, surface=self.kv_surface)
        except NoIntersection as exc:
            raise Infeasible(f"no slippage-free boundary at n_e={n_e}: {exc}") from None

    def problem(self, start, goal, n_e: float | None = None) -> planner.PlanProblem:
        case = mechanics.classify_case(self.friction).case_id
        if case is mechanics.CaseId.I:
            raise Infeasible("case I: the end-effector always slips")
        return planner.PlanProblem(
            start=start, goal=goal, n=self.n, k_v=self.planner_kv(n_e), case_id=case,
            c1=self.c1, c2=self.c2, safety=self.safety, convention=self.convention,
        )

    def sim_config(self, n_e: float | None = None) -> simulator.SimConfig:
        return simulator.SimConfig(self.friction, self.n_e if n_e is None else n_e, kv_surface=self.kv_surface)


_TOP_KEYS = {"friction", "n_e", "safety", "planner", "seed", "kv_surface", "object"}
_PLANNER_KEYS = {"n", "c1", "c2", "k_v", "convention"}


def _number(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InputError(f"config field {name!r} must be a finite number")
    return float(v)


def parse_config(data) -> Config:
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise InputError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    cfg = Config()
    if "friction" in data:
        fr = data["friction"]
        if not isinstance(fr, dict):
            raise InputError("config field 'friction' must be an object")
        bad = set(fr) - set(DEFAULT_FRICTION)
        if bad:
            raise InputError(f"unknown friction field(s): {', '.join(sorted(bad))}")
        vals = dict(DEFAULT_FRICTION)
        vals.update({k: _number(v, f"friction.{k}") for k, v in fr.items()})
        cfg.friction = FrictionParams(**vals)
    if "n_e" in data:
        cfg.n_e = _number(data["n_e"], "n_e")
    if "safety" in data:
        cfg.safety = _number(data["safety"], "safety")
    if "seed" in data:
        if isinstance(data["seed"], bool) or not isinstance(data["seed"], int):
            raise InputError("config field 'seed' must be an integer")
        cfg.seed = data["seed"]
    if "kv_surface" in data:
        cfg.kv_surface = str(data["kv_surface"])
    if "object" in data:
        cfg.object_name = str(data["object"])
    pl = data.get("planner", {})
    if not isinstance(pl, dict):
        raise InputError("config field 'planner' must be an object")
    bad = set(pl) - _PLANNER_KEYS
    if bad:
        raise InputError(f"unknown planner field(s): {', '.join(sorted(bad))}")
    if "n" in pl:
        if isinstance(pl["n"], bool) or not isinstance(pl["n"], int):
            raise InputError("config field 'planner.n' must be an integer")
        cfg.n = pl["n"]
    for key in ("c1", "c2", "k_v"):
        if key in pl and pl[key] is not None:
            setattr(cfg, key, _number(pl[key], f"planner.{key}"))
    if "convention" in pl:
        cfg.convention = str(pl["convention"])
    return cfg


def _validate(cfg: Config) -> None:
    if not cfg.n_e > 0:
        raise InputError("n_e must be positive")
    if not 0 < cfg.safety <= 1:
        raise InputError("safety must lie in (0, 1]")
    if cfg.convention not in planner.CONVENTIONS:
        raise InputError(f"convention must be one of {planner.CONVENTIONS}")
    if cfg.kv_surface not in ("support", "top"):
        raise InputError("kv_surface must be 'support' or 'top'")
    if cfg.n < 2:
        raise InputError("planner.n must be at least 2")
    if cfg.k_v is not None and not cfg.k_v > 0:
        raise InputError("planner.k_v must be positive")
    if cfg.c1 < 0 or cfg.c2 < 0 or (cfg.c1 == 0 and cfg.c2 == 0):
        raise InputError("planner weights must be non-negative and not both zero")


def load_config(args) -> Config:
    if args.config is not None:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed config JSON: {exc}") from None
        cfg = parse_config(data)
    else:
        cfg = Config()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.safety is not None:
        cfg.safety = args.safety
    if args.kv_convention is not None:
        cfg.convention = args.kv_convention
    _validate(cfg)
    return cfg


def _out_dir(args) -> FsPath:
    out = FsPath(args.out)
    if not out.is_dir():
        raise InputError(f"output directory does not exist: {out}")
    return out


def _write(path: FsPath, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None


def _pose(values, name) -> planner.Pose2:
    if not isinstance(values, (list, tuple)) or len(values) != 3:
        raise InputError(f"{name} must be three numbers")
    return planner.Pose2(*(_number(v, name) for v in values))


def _bound(v):
    return None if v is None or math.isinf(v) else v


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_classify(cfg: Config, args) -> int:
    case = mechanics.classify_case(cfg.friction)
    regime = mechanics.force_regime(cfg.friction)
    rng = regime.valid_range
    report = {
        "case": case.case_id.name,
        "p_T": case.p_T,
        "p_F": case.p_F,
        "n_slip": regime.n_slip,
        "n_stick": regime.n_stick,
        "valid_range": None if rng is None else [rng[0], _bound(rng[1])],
        "relation_at_n_e": regime.relation_at(cfg.n_e).value,
        "n_e": cfg.n_e,
    }
    text = to_json(report)
    if args.out is not None:
        _write(_out_dir(args) / "classify.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_kv(cfg: Config, args) -> int:
    if args.n_min <= 0 or args.n_max < args.n_min or args.steps < 1:
        raise InputError("need 0 < n-min <= n-max and steps >= 1")
    grid = np.linspace(args.n_min, args.n_max, args.steps) if args.steps > 1 else np.array([args.n_min])
    lines = ["n_e,k_v"]
    for n_e in grid:
        try:
            k = format_float(mechanics.kv(cfg.friction, float(n_e), surface=cfg.kv_surface))
        except (NoIntersection, mechanics.InfiniteKv):
            k = "nan"
        lines.append(f"{format_float(n_e)},{k}")
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        _write(_out_dir(args) / "kv.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_plan(cfg: Config, args) -> int:
    out = _out_dir(args)
    problem = cfg.problem(_pose(args.start, "start"), _pose(args.goal, "goal"))
    code = EXIT_OK
    try:
        path, report = planner.solve_plan(problem)
    except planner.PlanNotConverged as exc:
        path, report, code = exc.path, exc.report, EXIT_INFEASIBLE
        print(f"error: {exc}", file=sys.stderr)
    except planner.PlanInfeasible as exc:
        raise Infeasible(str(exc)) from None
    _write(out / "path.json", to_json(path.tolist()))
    _write(out / "path.svg", path_svg(path.waypoints, title=f"goal {tuple(problem.goal)}"))
    _write(out / "plan_report.json", to_json({
        "converged": report.converged,
        "objective": report.objective_value,
        "iterations": report.iterations,
        "k_v": problem.k_v,
        "case": problem.case_id.name,
        "safety": problem.safety,
        "convention": problem.convention,
        "min_margin": min(report.per_segment_margins),
    }))
    return code


def _read_path(file) -> planner.Path:
    try:
        with open(file) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read path file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed path JSON: {exc}") from None
    if not isinstance(data, list) or len(data) < 1:
        raise InputError("path file must hold a non-empty array of [x, y, theta]")
    return planner.Path.from_poses([_pose(p, f"waypoint {i}") for i, p in enumerate(data)])


def cmd_simulate(cfg: Config, args) -> int:
    out = _out_dir(args)
    path = _read_path(args.path_file)
    sim = cfg.sim_config()
    for w in sim.warnings:
        print(f"warning: {w}", file=sys.stderr)
    roll = simulator.rollout(path, sim)
    _write(out / "rollout.csv", roll.to_csv())
    _write(out / "terminal_error.json", to_json({
        "slip_model": roll.slip_model.value,
        "final_error": list(roll.final_error),
        "slip_count": roll.slip_count,
        "steps": len(roll.slip_flags),
        "n_e": sim.n_e,
        "k_v": sim.k_v,
    }))
    return EXIT_OK


def cmd_fit(cfg: Config, args) -> int:
    out = _out_dir(args)
    try:
        data = identify.read_dataset(args.dataset_csv)
    except OSError as exc:
        raise InputError(f"cannot read dataset: {exc}") from None
    except DomainError as exc:
        raise InputError(str(exc)) from None
    if not data:
        raise InputError("dataset has no rows")
    res = identify.fit_params(data, cfg.friction, opts=identify.FitOptions(seed=cfg.seed))
    p = res.params
    levels = sorted({r.n_e for r in data})
    kv_curve = []
    for n_e in levels:
        try:
            kv_curve.append([n_e, mechanics.kv(p, n_e, surface=cfg.kv_surface)])
        except (NoIntersection, mechanics.InfiniteKv):
            kv_curve.append([n_e, None])
    _write(out / "fit.json", to_json({
        "params": {k: getattr(p, k) for k in identify.FIT_KEYS},
        "loss": res.loss,
        "classification_accuracy": res.classification_accuracy,
        "iterations": res.iterations,
        "converged": res.converged,
        "case": mechanics.classify_case(p).case_id.name,
        "k_v": kv_curve,
    }))
    points = [(*identify.reduced_wrench(r.wrench), r.slipped()) for r in data]
    phi = np.linspace(0.0, 0.5 * np.pi, 60)
    curves = []
    for n_e in levels:
        top, sup = mechanics.dual_surfaces(p, n_e)
        curves.append(list(zip(top.a_f * np.cos(phi), top.a_t * np.sin(phi))))
        curves.append(list(zip(sup.a_f * np.cos(phi), sup.a_t * np.sin(phi))))
    _write(out / "fit.svg", boundary_svg(points, curves, title="fitted dual limit surfaces"))
    return EXIT_OK


def _problems(cfg: Config, file) -> list[tuple[planner.Pose2, planner.Pose2, float]]:
    try:
        with open(file) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read problems: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed problems JSON: {exc}") from None
    if isinstance(data, dict) and "generate" in data:
        g = data["generate"]
        if not isinstance(g, dict):
            raise InputError("'generate' must be an object")
        count = g.get("count", 100)
        if isinstance(count, bool) or not isinstance(count, int) or count < 0:
            raise InputError("generate.count must be a non-negative integer")
        t_lo, t_hi = (_number(v, "generate.translation") for v in g.get("translation", [0.02, 0.04]))
        r_lo, r_hi = (_number(v, "generate.rotation") for v in g.get("rotation", [0.5, 0.9]))
        levels = [_number(v, "generate.n_e") for v in g.get("n_e", [cfg.n_e])]
        if not levels:
            raise InputError("generate.n_e must list at least one level")
        rng = np.random.default_rng(cfg.seed)
        out = []
        for i in range(count):
            t = rng.uniform(t_lo, t_hi)
            a = rng.uniform(-math.pi, math.pi)
            r = rng.uniform(r_lo, r_hi) * (1.0 if rng.random() < 0.5 else -1.0)
            goal = planner.Pose2(float(t * math.cos(a)), float(t * math.sin(a)), float(r))
            out.append((planner.Pose2(0.0, 0.0, 0.0), goal, levels[i % len(levels)]))
        data = out
    elif isinstance(data, list):
        out = []
        for i, item in enumerate(data):
            if not isinstance(item, dict) or "goal" not in item:
                raise InputError(f"problem {i} must be an object with a 'goal'")
            start = _pose(item.get("start", [0, 0, 0]), f"problem {i} start")
            n_e = _number(item.get("n_e", cfg.n_e), f"problem {i} n_e")
            out.append((start, _pose(item["goal"], f"problem {i} goal"), n_e))
        data = out
    else:
        raise InputError("problems file must be a list or an object with 'generate'")
    if not data:
        raise InputError("empty problem suite")
    return data


def cmd_sweep(cfg: Config, args) -> int:
    out = _out_dir(args)
    items = _problems(cfg, args.problems_json)
    errors = {"proposed": [], "linear": []}
    by_force: dict[float, dict[str, list]] = {}
    for start, goal, n_e in items:
        prob = cfg.problem(start, goal, n_e)
        try:
            comp = simulator.compare_planners([prob], cfg.sim_config(n_e))
        except planner.PlanInfeasible as exc:
            raise Infeasible(str(exc)) from None
        except planner.PlanNotConverged as exc:
            raise Infeasible(f"goal {tuple(goal)}: {exc}") from None
        slot = by_force.setdefault(n_e, {"proposed": [], "linear": []})
        for name, errs in comp.errors.items():
            errors[name].extend(errs)
            slot[name].extend(errs)
    table = simulator.Comparison({k: tuple(v) for k, v in errors.items()})
    _write(out / "table.csv", table.to_csv(cfg.object_name))
    lines = ["n_e,planner,pos_rmse_m,ori_rmse_rad"]
    for n_e in sorted(by_force):
        for name, errs in by_force[n_e].items():
            m = simulator.metrics_from_errors(errs)
            lines.append(f"{format_float(n_e)},{name},{format_float(m.pos_rmse)},{format_float(m.ori_rmse)}")
    _write(out / "per_force.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_synth(cfg: Config, args) -> int:
    out = _out_dir(args)
    data = identify.synth_dataset(cfg.friction, args.count, range(3, 10), args.noise, cfg.seed)
    _write(out / "dataset.csv", identify.dataset_to_csv(data))
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (flags take precedence over it)")
    common.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
    common.add_argument("--out", help="existing output directory")
    common.add_argument("--safety", type=float, help="planning safety factor in (0, 1] (overrides config 'safety')")
    common.add_argument("--kv-convention", choices=planner.CONVENTIONS,
                        help="cone constraint uses k_v^2 (squared) or k_v (paper); overrides planner.convention")

    p = argparse.ArgumentParser(
        prog="duallimit",
        description="Dual limit surface tools: contact classification, k_v, planning, simulation, fitting.",
        epilog="Precedence: command-line flag > config file > built-in default. "
               "Exit codes: 0 ok, 2 input error, 3 infeasible, 4 degenerate data.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("classify", parents=[common], help="contact case and critical normal forces as JSON")
    kvp = sub.add_parser("kv", parents=[common], help="k_v over a normal-force grid as CSV")
    kvp.add_argument("--n-min", type=float, default=3.0)
    kvp.add_argument("--n-max", type=float, default=9.0)
    kvp.add_argument("--steps", type=int, default=13)

    pl = sub.add_parser("plan", parents=[common], help="plan a slippage-free path")
    pl.add_argument("--start", type=float, nargs=3, default=[0.0, 0.0, 0.0], metavar=("X", "Y", "TH"))
    pl.add_argument("--goal", type=float, nargs=3, required=True, metavar=("X", "Y", "TH"))

    sm = sub.add_parser("simulate", parents=[common], help="execute a path against the contact model")
    sm.add_argument("path_file")

    ft = sub.add_parser("fit", parents=[common], help="fit friction parameters to a dataset CSV")
    ft.add_argument("dataset_csv")

    sw = sub.add_parser("sweep", parents=[common], help="compare the planner with straight-line paths")
    sw.add_argument("problems_json")

    sy = sub.add_parser("synth", parents=[common], help="write a synthetic dataset CSV")
    sy.add_argument("--count", type=int, default=500)
    sy.add_argument("--noise", type=float, default=0.0)
    return p


COMMANDS = {
    "classify": cmd_classify,
    "kv": cmd_kv,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}
_NEEDS_OUT = {"plan", "simulate", "fit", "sweep", "synth"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in _NEEDS_OUT and args.out is None:
        args.out = os.curdir
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except identify.Degenerate as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
