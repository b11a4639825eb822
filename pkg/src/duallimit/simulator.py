"""Open-loop execution of end-effector paths against the dual limit surfaces.

The object starts under the end-effector (zero initial pose error) and is
stepped segment by segment.  A segment whose twist is slippage-free moves the
object exactly as commanded.  Otherwise the top contact slips and the object
follows the commanded translation with its rotation moved onto the cone
boundary ("ConeProjection"): the wrench pair sits at the crossing of the two
surfaces, whose support normal has rotation/translation ratio exactly k_v.
This slip law is a modelling choice, not a measured one.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from duallimit.mechanics import (
    CaseId,
    DomainError,
    FrictionParams,
    NoIntersection,
    Relation,
    Twist2,
    classify_case,
    force_regime,
    is_slippage_free,
    kv,
)
from duallimit.output import format_float
from duallimit.planner import (
    Path,
    PlanProblem,
    Pose2,
    linear_interpolation,
    project_segment,
    solve_plan,
)


class SlipModel(enum.Enum):
    CONE_PROJECTION = "ConeProjection"


@dataclass(frozen=True)
class SimConfig:
    """Physical setting of one rollout.

    ``safety`` defaults to 1: the simulator stands in for the real contact,
    so it uses the true boundary.  Planning margins belong to the planner.
    """

    params: FrictionParams
    n_e: float
    safety: float = 1.0
    slip_model: SlipModel = SlipModel.CONE_PROJECTION
    kv_surface: str = "support"

    def __post_init__(self):
        if not (math.isfinite(self.n_e) and self.n_e > 0):
            raise DomainError(f"n_e must be positive and finite, got {self.n_e}")
        if not 0 < self.safety <= 1:
            raise DomainError(f"safety must lie in (0, 1], got {self.safety}")
        object.__setattr__(self, "slip_model", SlipModel(self.slip_model))

    @cached_property
    def case_id(self) -> CaseId:
        return classify_case(self.params).case_id

    @cached_property
    def relation(self) -> Relation:
        return force_regime(self.params).relation_at(self.n_e)

    @cached_property
    def k_v(self) -> float | None:
        """Physical k_v at ``n_e``; None when the surfaces do not cross."""
        if self.relation is not Relation.INTERSECTING:
            return None
        try:
            return kv(self.params, self.n_e, surface=self.kv_surface)
        except NoIntersection:
            return None

    @property
    def warnings(self) -> list[str]:
        rel = self.relation
        if rel is Relation.INSIDE:
            return [
                f"n_e={self.n_e!r} is outside the crossing window of case {self.case_id.name}: "
                "the end-effector always slips, object rotation is suppressed"
            ]
        if rel is Relation.CONTAINING:
            return [f"n_e={self.n_e!r} is above the crossing window: the object always follows"]
        return []

    def replace(self, **changes) -> "SimConfig":
        kw = dict(params=self.params, n_e=self.n_e, safety=self.safety,
                  slip_model=self.slip_model, kv_surface=self.kv_surface)
        kw.update(changes)
        return SimConfig(**kw)


@dataclass(frozen=True, eq=False)
class Rollout:
    ee_path: Path
    object_path: Path
    slip_flags: tuple[bool, ...]
    final_error: Pose2
    slip_model: SlipModel = SlipModel.CONE_PROJECTION

    @property
    def slip_count(self) -> int:
        return sum(self.slip_flags)

    def to_csv(self) -> str:
        """Per-waypoint table; ``slipped`` refers to the segment ending at the row."""
        buf = io.StringIO()
        buf.write("step,ee_x,ee_y,ee_theta,obj_x,obj_y,obj_theta,slipped\n")
        flags = (False,) + self.slip_flags
        for i, (e, o, s) in enumerate(zip(self.ee_path.waypoints, self.object_path.waypoints, flags)):
            row = [str(i)] + [format_float(v) for v in (*e, *o)] + [str(int(s))]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


@dataclass(frozen=True)
class Metrics:
    pos_rmse: float
    ori_rmse: float


@dataclass(frozen=True)
class Comparison:
    """Terminal errors of each planner over a problem suite, in input order."""

    errors: dict[str, tuple[Pose2, ...]]
    slip_counts: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @property
    def metrics(self) -> dict[str, Metrics]:
        return {name: metrics_from_errors(errs) for name, errs in self.errors.items()}

    def to_csv(self, object_name: str = "object") -> str:
        buf = io.StringIO()
        buf.write("object,planner,pos_rmse_m,ori_rmse_rad\n")
        for name, m in self.metrics.items():
            buf.write(f"{object_name},{name},{format_float(m.pos_rmse)},{format_float(m.ori_rmse)}\n")
        return buf.getvalue()


# ----------------------------------------------------------------------------


def _transmitted(d: tuple[float, float, float], config: SimConfig, k_v: float | None):
    """Object displacement produced by the commanded segment ``d`` and the slip flag."""
    rel = config.relation
    if rel is Relation.CONTAINING or not any(d):
        return d, False
    if rel is Relation.INSIDE:
        # no sticking wrench exists: translation is dragged along, rotation is lost
        return (d[0], d[1], 0.0), d[2] != 0.0
    if k_v is None:
        k_v = config.k_v
    if k_v is None:
        raise DomainError("no finite k_v for this configuration")
    if is_slippage_free(Twist2(*d), k_v, config.case_id, config.safety):
        return d, False
    return project_segment(d, k_v, config.case_id, config.safety, "squared"), True


def step(object_pose: Sequence[float], ee_delta: Sequence[float], config: SimConfig,
         k_v: float | None = None) -> tuple[Pose2, bool]:
    """Advance the object by one commanded end-effector segment.

    ``k_v`` defaults to the configuration's physical value.
    """
    pose = Pose2(*map(float, object_pose))
    moved, slipped = _transmitted(tuple(float(v) for v in ee_delta), config, k_v)
    return Pose2(pose.x + moved[0], pose.y + moved[1], pose.theta + moved[2]), slipped


def rollout(ee_path: Path, config: SimConfig, goal: Sequence[float] | None = None) -> Rollout:
    """Execute ``ee_path`` open loop; the error is measured against ``goal`` (default: path end)."""
    if not isinstance(ee_path, Path):
        ee_path = Path.from_poses(ee_path)
    if len(ee_path) < 1:
        raise DomainError("empty path")
    k_v = config.k_v
    ee = ee_path.waypoints
    # track q_err = q_e - q_o so that a fully sticking run reproduces the
    # end-effector poses bit for bit instead of re-summing the deltas
    err = np.zeros(3)
    poses = [Pose2(*ee[0])]
    flags = []
    for i, d in enumerate(ee_path.deltas):
        d = tuple(map(float, d))
        moved, s = _transmitted(d, config, k_v)
        if s or moved != d:
            err = err + (np.asarray(d) - np.asarray(moved))
        poses.append(Pose2(*map(float, ee[i + 1] - err)))
        flags.append(s)
    obj = Path.from_poses(poses)
    target = Pose2(*map(float, ee_path.waypoints[-1] if goal is None else goal))
    return Rollout(ee_path, obj, tuple(flags), poses[-1] - target, config.slip_model)


def metrics_from_errors(errors: Iterable[Sequence[float]]) -> Metrics:
    e = np.asarray(list(errors), dtype=float).reshape(-1, 3)
    if len(e) == 0:
        raise DomainError("no rollouts to score")
    pos = math.sqrt(float(np.mean(e[:, 0] ** 2 + e[:, 1] ** 2)))
    ori = math.sqrt(float(np.mean(e[:, 2] ** 2)))
    return Metrics(pos, ori)


def pose_rmse(rollouts: Sequence[Rollout], goals: Sequence[Sequence[float]]) -> Metrics:
    if len(rollouts) != len(goals):
        raise DomainError(f"{len(rollouts)} rollouts but {len(goals)} goals")
    errs = [np.asarray(r.object_path.waypoints[-1]) - np.asarray(g, dtype=float) for r, g in zip(rollouts, goals)]
    return metrics_from_errors(errs)


def compare_planners(problems: Sequence[PlanProblem], config: SimConfig) -> Comparison:
    """Simulate the optimised and the straight-line path for every problem.

    Raises whatever :func:`solve_plan` raises for an unsolvable problem.
    """
    problems = list(problems)
    if not problems:
        raise DomainError("empty problem suite")
    errors = {"proposed": [], "linear": []}
    slips = {"proposed": [], "linear": []}
    for prob in problems:
        paths = {
            "proposed": solve_plan(prob)[0],
            "linear": linear_interpolation(prob.start, prob.goal, prob.n),
        }
        for name, path in paths.items():
            r = rollout(path, config, prob.goal)
            errors[name].append(r.final_error)
            slips[name].append(r.slip_count)
    return Comparison(
        {k: tuple(v) for k, v in errors.items()},
        {k: tuple(v) for k, v in slips.items()},
    )
