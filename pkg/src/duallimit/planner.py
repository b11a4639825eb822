"""Slippage-free path planning in SE(2).

The planner solves

    min  c1 * sum_i |q_i - qhat_i|^2 + c2 * sum_i |q_{i-2} - 2 q_{i-1} + q_i|^2
    s.t. q_1 = start, q_n = goal, every segment inside the slippage-free set

where ``qhat`` is the straight interpolation between start and goal.  In
cases III/IV a segment ``(dx, dy, dth)`` is admissible when
``(s k_v)^2 (dx^2 + dy^2) - dth^2 >= 0``; in cases II/V when
``dth^2 - (k_v / s)^2 (dx^2 + dy^2) > 0`` (or the segment is zero).

The constraint set is nonconvex, so the solver is a local method: a squared
hinge penalty with an escalating weight minimised by L-BFGS from several
coil-shaped (III/IV) or zig-zag (II/V) starting paths, each followed by a
closed-form feasibility restoration that only touches segment rotations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from duallimit.mechanics import CaseId, ContactCase, DomainError, DEFAULT_SAFETY

FEASIBILITY_TOL = 1e-10
#: rotations are pushed this far past the boundary in cases II/V (strict inequality)
STRICT_OFFSET = 1e-9

CONVENTIONS = ("squared", "paper")


class Pose2(NamedTuple):
    x: float
    y: float
    theta: float  # unwrapped

    def __sub__(self, other) -> "Pose2":
        return Pose2(self.x - other[0], self.y - other[1], self.theta - other[2])


class PlanInfeasible(DomainError):
    """No slippage-free path exists for this problem."""


class PlanNotConverged(RuntimeError):
    """The solver stopped without a feasible path; carries the best attempt."""

    def __init__(self, message, path: "Path", report: "SolveReport"):
        super().__init__(message)
        self.path = path
        self.report = report


@dataclass(frozen=True)
class PlanProblem:
    start: Pose2
    goal: Pose2
    n: int = 30
    k_v: float = 1.25
    case_id: CaseId = CaseId.III
    c1: float = 10.0
    c2: float = 1.0
    safety: float = DEFAULT_SAFETY
    convention: str = "squared"

    def __post_init__(self):
        object.__setattr__(self, "start", Pose2(*map(float, self.start)))
        object.__setattr__(self, "goal", Pose2(*map(float, self.goal)))
        if isinstance(self.case_id, ContactCase):
            object.__setattr__(self, "case_id", self.case_id.case_id)
        elif not isinstance(self.case_id, CaseId):
            object.__setattr__(self, "case_id", CaseId(self.case_id))
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n!r}")
        if self.c1 < 0 or self.c2 < 0 or (self.c1 == 0 and self.c2 == 0):
            raise DomainError("weights must be non-negative and not both zero")
        if not (self.k_v > 0 and math.isfinite(self.k_v)):
            raise DomainError(f"k_v must be positive, got {self.k_v!r}")
        if not 0 < self.safety <= 1:
            raise DomainError("safety must lie in (0, 1]")
        if self.convention not in CONVENTIONS:
            raise DomainError(f"convention must be one of {CONVENTIONS}")
        if not all(map(math.isfinite, (*self.start, *self.goal))):
            raise DomainError("start and goal must be finite")


@dataclass(frozen=True, eq=False)
class Path:
    """Ordered SE(2) waypoints stored as an ``(n, 3)`` array."""

    waypoints: np.ndarray

    def __post_init__(self):
        wp = np.array(self.waypoints, dtype=float).reshape(-1, 3)
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    @classmethod
    def from_poses(cls, poses: Iterable[Sequence[float]]) -> "Path":
        return cls(np.array([tuple(p) for p in poses], dtype=float))

    def __len__(self):
        return len(self.waypoints)

    def __iter__(self):
        return (Pose2(*map(float, row)) for row in self.waypoints)

    def __getitem__(self, i) -> Pose2:
        return Pose2(*map(float, self.waypoints[i]))

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.waypoints, axis=0)

    def tolist(self) -> list[list[float]]:
        return self.waypoints.tolist()


@dataclass(frozen=True)
class SolveReport:
    objective_value: float
    per_segment_margins: tuple[float, ...]
    iterations: int
    converged: bool
    objective_trace: tuple[float, ...] = field(default=())


# ----------------------------------------------------------------------------
# problem pieces
# ----------------------------------------------------------------------------


def linear_interpolation(start: Sequence[float], goal: Sequence[float], n: int) -> Path:
    if n < 2:
        raise DomainError(f"need at least two waypoints, got {n}")
    s = np.asarray(start, dtype=float)
    g = np.asarray(goal, dtype=float)
    t = np.arange(n, dtype=float) / (n - 1)
    wp = s + t[:, None] * (g - s)
    wp[-1] = g
    return Path(wp)


def cone_coefficient(k_v: float, case, safety: float, convention: str = "squared") -> float:
    """Coefficient multiplying dx^2 + dy^2 in the segment margin."""
    case_id = _case_id(case)
    if case_id.bounds_rotation:
        ratio = safety * k_v
    elif case_id.bounds_translation:
        ratio = k_v / safety
    else:
        raise PlanInfeasible("case I admits no slippage-free motion")
    return ratio * ratio if convention == "squared" else ratio


def _case_id(case) -> CaseId:
    if isinstance(case, ContactCase):
        return case.case_id
    return case if isinstance(case, CaseId) else CaseId(case)


def _margins(deltas: np.ndarray, coef: float, case_id: CaseId) -> np.ndarray:
    trans = deltas[:, 0] ** 2 + deltas[:, 1] ** 2
    rot = deltas[:, 2] ** 2
    if case_id.bounds_rotation:
        return coef * trans - rot
    return rot - coef * trans


def _feasible(margins: np.ndarray, deltas: np.ndarray, case_id: CaseId, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    if case_id.bounds_rotation:
        return margins >= -tol
    zero = ~np.any(deltas, axis=1)
    return (margins > 0) | zero


def segment_margin(q_prev, q_next, k_v: float, case, safety: float = DEFAULT_SAFETY, convention: str = "squared") -> float:
    """Signed slack of the slippage-free constraint for one segment.

    Non-negative is feasible in cases III/IV; cases II/V need a strictly
    positive value unless the segment is zero.
    """
    case_id = _case_id(case)
    coef = cone_coefficient(k_v, case_id, safety, convention)
    d = np.asarray(q_next, dtype=float) - np.asarray(q_prev, dtype=float)
    return float(_margins(d[None, :], coef, case_id)[0])


def roughness_objective(path: Path) -> float:
    wp = path.waypoints
    if len(wp) < 3:
        return 0.0
    second = wp[:-2] - 2.0 * wp[1:-1] + wp[2:]
    return float(np.sum(second * second))


def total_objective(path: Path, problem: PlanProblem) -> float:
    if len(path) != problem.n:
        raise DomainError(f"path has {len(path)} waypoints, problem expects {problem.n}")
    ref = linear_interpolation(problem.start, problem.goal, problem.n).waypoints
    dev = path.waypoints - ref
    return float(problem.c1 * np.sum(dev * dev) + problem.c2 * roughness_objective(path))


def project_segment(delta, k_v: float, case, safety: float = DEFAULT_SAFETY, convention: str = "squared") -> tuple[float, float, float]:
    """Move an infeasible segment onto the slippage-free set by changing its rotation only."""
    case_id = _case_id(case)
    coef = cone_coefficient(k_v, case_id, safety, convention)
    dx, dy, dth = (float(v) for v in delta)
    trans2 = dx * dx + dy * dy
    # hypot keeps the boundary rotation from underflowing for tiny segments
    bound = math.sqrt(coef) * math.hypot(dx, dy)
    if case_id.bounds_rotation:
        if coef * trans2 - dth * dth >= 0:
            return dx, dy, dth
        return dx, dy, math.copysign(bound, dth)
    if dth * dth - coef * trans2 > 0 or (dx == 0 and dy == 0 and dth == 0):
        return dx, dy, dth
    sign = -1.0 if dth < 0 else 1.0
    return dx, dy, sign * bound * (1 + STRICT_OFFSET)


def validate_path(path: Path, problem: PlanProblem, tol: float = FEASIBILITY_TOL) -> SolveReport:
    if len(path) != problem.n:
        raise DomainError(f"path has {len(path)} waypoints, problem expects {problem.n}")
    case_id = problem.case_id
    coef = cone_coefficient(problem.k_v, case_id, problem.safety, problem.convention)
    deltas = path.deltas
    margins = _margins(deltas, coef, case_id)
    feasible = bool(np.all(_feasible(margins, deltas, case_id, tol)))
    ends = np.allclose(path.waypoints[0], problem.start, rtol=0, atol=1e-9) and np.allclose(
        path.waypoints[-1], problem.goal, rtol=0, atol=1e-9
    )
    obj = total_objective(path, problem)
    return SolveReport(obj, tuple(map(float, margins)), 0, feasible and ends and math.isfinite(obj))


# ----------------------------------------------------------------------------
# solver
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    outer_iterations: int = 50
    rho0: float = 1.0
    rho_growth: float = 10.0
    inner_iterations: int = 10_000
    gradient_tol: float = 1e-8
    #: relative shrink of the cone used inside the penalty, absorbed by restoration
    interior: float = 1e-3
    #: relative objective decrease at which an inner L-BFGS run stops
    inner_ftol: float = 1e-9
    #: stop escalating once the normalised violation drops below this
    violation_tol: float = 1e-5
    #: starting coils for cases III/IV, as segments per loop; all are descended
    segments_per_turn: tuple[float, ...] = (3.0,)
    #: coils tried only when none of the above ends feasible
    fallback_segments_per_turn: tuple[float, ...] = (6.0, 1e9)
    restore_sweeps: int = 20


class _Objective:
    """Quadratic objective and penalty over the interior waypoints."""

    def __init__(self, problem: PlanProblem, coef_pen: float, scale: float):
        self.problem = problem
        self.n = problem.n
        self.start = np.asarray(problem.start, dtype=float)
        self.goal = np.asarray(problem.goal, dtype=float)
        self.ref = linear_interpolation(problem.start, problem.goal, problem.n).waypoints
        self.coef_pen = coef_pen
        self.case_id = problem.case_id
        self.inv_scale2 = 1.0 / (scale * scale)

    def waypoints(self, x: np.ndarray) -> np.ndarray:
        wp = np.empty((self.n, 3))
        wp[0] = self.start
        wp[-1] = self.goal
        wp[1:-1] = x.reshape(-1, 3)
        return wp

    def objective(self, wp: np.ndarray) -> tuple[float, np.ndarray]:
        c1, c2 = self.problem.c1, self.problem.c2
        dev = wp - self.ref
        grad = 2.0 * c1 * dev
        val = c1 * np.sum(dev * dev)
        if self.n >= 3:
            sec = wp[:-2] - 2.0 * wp[1:-1] + wp[2:]
            val += c2 * np.sum(sec * sec)
            g2 = 2.0 * c2 * sec
            grad[:-2] += g2
            grad[1:-1] -= 2.0 * g2
            grad[2:] += g2
        return float(val), grad

    def penalty(self, wp: np.ndarray) -> tuple[float, np.ndarray]:
        d = np.diff(wp, axis=0)
        m = _margins(d, self.coef_pen, self.case_id)
        viol = np.maximum(-m, 0.0)
        val = float(np.sum(viol * viol)) * self.inv_scale2
        # d(viol)/d(delta) for the active segments
        s = -2.0 * viol * self.inv_scale2
        gd = np.empty_like(d)
        if self.case_id.bounds_rotation:
            gd[:, 0] = s * 2.0 * self.coef_pen * d[:, 0]
            gd[:, 1] = s * 2.0 * self.coef_pen * d[:, 1]
            gd[:, 2] = -s * 2.0 * d[:, 2]
        else:
            gd[:, 0] = -s * 2.0 * self.coef_pen * d[:, 0]
            gd[:, 1] = -s * 2.0 * self.coef_pen * d[:, 1]
            gd[:, 2] = s * 2.0 * d[:, 2]
        grad = np.zeros_like(wp)
        grad[1:] += gd
        grad[:-1] -= gd
        return val, grad

    def max_violation(self, wp: np.ndarray) -> float:
        m = _margins(np.diff(wp, axis=0), self.coef_pen, self.case_id)
        return float(np.max(np.maximum(-m, 0.0))) * math.sqrt(self.inv_scale2)

    def penalized(self, rho: float):
        def fun(x):
            wp = self.waypoints(x)
            f, gf = self.objective(wp)
            p, gp = self.penalty(wp)
            return f + rho * p, (gf + rho * gp)[1:-1].ravel()

        return fun


def _restore(wp: np.ndarray, problem: PlanProblem, sweeps: int) -> np.ndarray | None:
    """Make every segment feasible by editing rotations only.

    Each sweep projects the segments onto their admissible sets and then
    re-centres the total rotation on the goal, spreading the residual over
    the segments that can absorb it without leaving the admissible set.
    Translations, and therefore the positions of the endpoints, are untouched.
    """
    case_id = problem.case_id
    coef = cone_coefficient(problem.k_v, case_id, problem.safety, problem.convention)
    ratio = math.sqrt(coef)
    d = np.diff(wp, axis=0)
    total = problem.goal.theta - problem.start.theta
    trans = np.hypot(d[:, 0], d[:, 1])
    th = d[:, 2].copy()
    for _ in range(sweeps):
        if case_id.bounds_rotation:
            cap = ratio * trans
            th = np.clip(th, -cap, cap)
            resid = total - float(np.sum(th))
            if resid == 0:
                break
            slack = cap - math.copysign(1.0, resid) * th
            room = float(np.sum(slack))
            if room < abs(resid):
                return None
            th = th + math.copysign(1.0, resid) * slack * (abs(resid) / room)
        else:
            floor = ratio * trans
            bad = ~((th * th - coef * trans * trans > 0) | ((trans == 0) & (th == 0)))
            th = np.where(bad, np.where(th < 0, -1.0, 1.0) * floor * (1 + STRICT_OFFSET), th)
            resid = total - float(np.sum(th))
            if resid == 0:
                break
            sgn = math.copysign(1.0, resid)
            takers = (np.sign(th) == sgn) | ((trans == 0) & (th == 0))
            if not np.any(takers):
                k = int(np.argmin(trans))
                th[k] = sgn * floor[k] * (1 + STRICT_OFFSET)
                continue
            th = np.where(takers, th + resid / int(np.count_nonzero(takers)), th)
    out = wp.copy()
    out[1:, 2] = wp[0, 2] + np.cumsum(th)
    out[-1] = np.asarray(problem.goal, dtype=float)
    deltas = np.diff(out, axis=0)
    if not np.all(_feasible(_margins(deltas, coef, case_id), deltas, case_id)):
        return None
    return out


def _coil_start(problem: PlanProblem, turns: int, ratio: float) -> np.ndarray:
    """Waypoints that loop ``turns`` times while drifting toward the goal.

    The loop direction follows the sign of the commanded rotation and is laid
    out relative to the goal direction, so mirrored goals give mirrored paths.
    """
    n = problem.n
    segs = n - 1
    start = np.asarray(problem.start, dtype=float)
    goal = np.asarray(problem.goal, dtype=float)
    delta = goal - start
    dist = math.hypot(delta[0], delta[1])
    u = delta[:2] / dist if dist > 0 else np.array([1.0, 0.0])
    u_perp = np.array([-u[1], u[0]])
    turn = math.copysign(1.0, delta[2]) if delta[2] != 0 else 1.0
    radius = 1.5 * abs(delta[2]) / (segs * ratio) + dist / segs
    phi = 2.0 * math.pi * turns * (np.arange(segs) + 0.5) / segs
    loop = radius * (np.cos(phi)[:, None] * u + (turn * np.sin(phi))[:, None] * u_perp)
    loop -= loop.mean(axis=0)
    d = np.empty((segs, 3))
    d[:, :2] = delta[:2] / segs + loop
    d[:, 2] = delta[2] / segs
    wp = np.empty((n, 3))
    wp[0] = start
    wp[1:] = start + np.cumsum(d, axis=0)
    wp[-1] = goal
    return wp


def _zigzag_start(problem: PlanProblem, ratio: float) -> np.ndarray:
    n = problem.n
    segs = n - 1
    start = np.asarray(problem.start, dtype=float)
    goal = np.asarray(problem.goal, dtype=float)
    delta = goal - start
    step = math.hypot(delta[0], delta[1]) / segs
    amp = 1.5 * ratio * step + abs(delta[2]) / segs
    d = np.tile(delta / segs, (segs, 1))
    d[:, 2] += amp * np.where(np.arange(segs) % 2 == 0, 1.0, -1.0)
    wp = np.empty((n, 3))
    wp[0] = start
    wp[1:] = start + np.cumsum(d, axis=0)
    wp[-1] = goal
    return wp


def _penalty_descent(problem: PlanProblem, wp0: np.ndarray, opts: SolverOptions):
    """Escalating-penalty minimisation from one start; returns (best feasible wp, trace, iterations)."""
    case_id = problem.case_id
    coef = cone_coefficient(problem.k_v, case_id, problem.safety, problem.convention)
    shrink = (1.0 - opts.interior) if case_id.bounds_rotation else (1.0 + opts.interior)
    coef_pen = coef * shrink * shrink
    delta = np.asarray(problem.goal, dtype=float) - np.asarray(problem.start, dtype=float)
    scale = max(abs(delta[2]), math.sqrt(coef) * math.hypot(delta[0], delta[1])) / (problem.n - 1)
    obj = _Objective(problem, coef_pen, max(scale * scale, 1e-12))

    best = _restore(wp0, problem, opts.restore_sweeps)
    best_val = math.inf if best is None else obj.objective(best)[0]
    trace = [] if best is None else [best_val]
    x = wp0[1:-1].ravel().copy()
    iterations = 0
    rho = opts.rho0
    for _ in range(opts.outer_iterations):
        res = minimize(
            obj.penalized(rho),
            x,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opts.inner_iterations, "gtol": opts.gradient_tol, "ftol": opts.inner_ftol, "maxcor": 20},
        )
        x = res.x
        iterations += int(res.nit)
        wp = obj.waypoints(x)
        cand = _restore(wp, problem, opts.restore_sweeps)
        if cand is not None:
            val = obj.objective(cand)[0]
            if val < best_val:
                best, best_val = cand, val
        if math.isfinite(best_val):
            trace.append(best_val)
        if obj.max_violation(wp) <= opts.violation_tol:
            break
        rho *= opts.rho_growth
    return best, trace, iterations


def solve_plan(problem: PlanProblem, options: SolverOptions | None = None) -> tuple[Path, SolveReport]:
    """Plan a slippage-free path from ``problem.start`` to ``problem.goal``.

    Returns the straight interpolation untouched whenever it is already
    feasible.  Raises :class:`PlanInfeasible` for case I or when no start
    can be made feasible, and :class:`PlanNotConverged` if no feasible path
    comes out of the descent.
    """
    opts = options or SolverOptions()
    case_id = problem.case_id
    if case_id is CaseId.I:
        raise PlanInfeasible("case I: the end-effector slips for every motion")
    linear = linear_interpolation(problem.start, problem.goal, problem.n)
    report = validate_path(linear, problem)
    if report.converged:
        return linear, SolveReport(report.objective_value, report.per_segment_margins, 0, True, (report.objective_value,))
    if problem.n < 3:
        raise PlanInfeasible("a single infeasible segment cannot be reshaped")

    ratio = math.sqrt(cone_coefficient(problem.k_v, case_id, problem.safety, problem.convention))
    if case_id.bounds_rotation:
        segs = problem.n - 1
        coils = lambda per: [_coil_start(problem, t, ratio) for t in sorted({max(1, math.ceil(segs / k)) for k in per}, reverse=True)]
        rounds = [coils(opts.segments_per_turn), coils(opts.fallback_segments_per_turn)]
    else:
        rounds = [[_zigzag_start(problem, ratio)], [linear.waypoints.copy()]]

    best, best_val, best_trace, total_iters = None, math.inf, (), 0
    for starts in rounds:
        for wp0 in starts:
            wp, trace, iters = _penalty_descent(problem, wp0, opts)
            total_iters += iters
            if wp is not None and trace[-1] < best_val:
                best, best_val, best_trace = wp, trace[-1], tuple(trace)
        if best is not None:
            break

    if best is None:
        raise PlanNotConverged(
            "no feasible path found", linear, SolveReport(report.objective_value, report.per_segment_margins, total_iters, False)
        )
    path = Path(best)
    final = validate_path(path, problem)
    out = SolveReport(final.objective_value, final.per_segment_margins, total_iters, final.converged, best_trace)
    if not final.converged:
        raise PlanNotConverged("solver output failed validation", path, out)
    return path, out
