"""Friction-parameter identification from stick/slip motion segments.

Each record holds the poses of the end-effector and the object at the start
and end of one segment, the applied normal force and the measured support
wrench.  Records are labelled by pose thresholds and the four contact
parameters (mu_e, mu_p, r_e, r_p) are fitted so that the dual surfaces
separate sticking from slipping wrenches.

Region margin
-------------
With ``g_e`` and ``g_p`` the square-rooted quadratic forms of the top and
support surfaces at a reduced wrench (F, T),

    margin = g_p - g_e + INTERIOR_WEIGHT * max(0, 1 - max(g_p, g_e))

On and beyond the first boundary met along the ray through (F, T) only the
first term acts, so the sign says which surface binds first: positive when
the support binds (the object slides, the top sticks), negative when the top
binds.  Strictly inside both surfaces nothing slides and the second term
lifts the margin to INTERIOR_WEIGHT at the origin; the weight is kept
small so that noisy boundary wrenches are still judged by direction.
"""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from duallimit.mechanics import DomainError, FrictionParams, Wrench2
from duallimit.output import format_float
from duallimit.planner import Pose2

ORI_THRESHOLD = 0.05  # rad
POS_THRESHOLD = 0.005  # m
INTERIOR_WEIGHT = 0.1
#: quasi-static tolerance on g before a wrench counts as outside both surfaces
OUTSIDE_TOL = 0.05

CSV_HEADER = (
    "qe0_x", "qe0_y", "qe0_th", "qeT_x", "qeT_y", "qeT_th",
    "qo0_x", "qo0_y", "qo0_th", "qoT_x", "qoT_y", "qoT_th",
    "Ne", "fx", "fy", "tau", "label",
)

FIT_KEYS = ("mu_e", "mu_p", "r_e", "r_p")


class Degenerate(DomainError):
    """The dataset cannot identify the model (e.g. a single label class)."""


class SchemaError(DomainError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


class QuasiStaticWarning(UserWarning):
    """A measured wrench lies outside both limit surfaces."""


@dataclass(frozen=True)
class SegmentRecord:
    q_e0: Pose2
    q_eT: Pose2
    q_o0: Pose2
    q_oT: Pose2
    n_e: float
    wrench: Wrench2
    label: bool | None = None  # True = slipped

    def __post_init__(self):
        for name in ("q_e0", "q_eT", "q_o0", "q_oT"):
            object.__setattr__(self, name, Pose2(*map(float, getattr(self, name))))
        object.__setattr__(self, "wrench", Wrench2(*map(float, self.wrench)))
        values = [*self.q_e0, *self.q_eT, *self.q_o0, *self.q_oT, self.n_e, *self.wrench]
        if not all(math.isfinite(v) for v in values):
            raise DomainError("record contains non-finite values")
        if not self.n_e > 0:
            raise DomainError(f"n_e must be positive, got {self.n_e}")
        if self.label is not None:
            object.__setattr__(self, "label", bool(self.label))

    def slipped(self, ori_threshold: float = ORI_THRESHOLD, pos_threshold: float = POS_THRESHOLD) -> bool:
        """The stored label, or the threshold label when none is stored."""
        if self.label is not None:
            return self.label
        return label_slip(self, ori_threshold, pos_threshold)


@dataclass(frozen=True)
class Bounds:
    mu: tuple[float, float] = (0.01, 2.0)
    r: tuple[float, float] = (0.001, 0.2)

    def as_list(self) -> list[tuple[float, float]]:
        return [self.mu, self.mu, self.r, self.r]


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 20
    seed: int = 0
    jitter: float = 0.3  # log-normal spread of restart points
    slip_weight: float = 0.5
    boundary_weight: float = 1.0
    regularization: float = 1e-9
    maxiter: int = 4000
    xatol: float = 1e-12
    fatol: float = 1e-16


@dataclass(frozen=True)
class FitResult:
    params: FrictionParams
    loss: float
    classification_accuracy: float
    iterations: int
    converged: bool


# ----------------------------------------------------------------------------
# labelling and prediction
# ----------------------------------------------------------------------------


def label_slip(record: SegmentRecord, ori_threshold: float = ORI_THRESHOLD,
               pos_threshold: float = POS_THRESHOLD) -> bool:
    """True when the object did not follow the end-effector within the thresholds."""
    de = np.subtract(record.q_eT, record.q_e0)
    do = np.subtract(record.q_oT, record.q_o0)
    diff = de - do
    return bool(math.hypot(diff[0], diff[1]) > pos_threshold or abs(diff[2]) > ori_threshold)


def _axes(theta: np.ndarray, n_e: np.ndarray, c: float, weight: float):
    mu_e, mu_p, r_e, r_p = theta
    n_p = n_e + weight
    return mu_e * n_e, r_e * c * mu_e * n_e, mu_p * n_p, r_p * c * mu_p * n_p


def _region_values(theta, F, T, n_e, c, weight):
    afe, ate, afp, atp = _axes(theta, n_e, c, weight)
    g_e = np.hypot(F / afe, T / ate)
    g_p = np.hypot(F / afp, T / atp)
    return g_e, g_p


def _margin(g_e, g_p):
    return g_p - g_e + INTERIOR_WEIGHT * np.maximum(0.0, 1.0 - np.maximum(g_p, g_e))


def reduced_wrench(w: Sequence[float]) -> tuple[float, float]:
    return math.hypot(w[0], w[1]), abs(w[2])


def region_margin(params: FrictionParams, n_e: float, F: float, T: float) -> float:
    theta = np.array([params.mu_e, params.mu_p, params.r_e, params.r_p])
    g_e, g_p = _region_values(theta, F, T, n_e, params.c, params.weight)
    return float(_margin(g_e, g_p))


def predict_mode(params: FrictionParams, record: SegmentRecord,
                 outside_tol: float = OUTSIDE_TOL) -> tuple[bool, float]:
    """Predicted slip flag and signed region margin for one record.

    Emits :class:`QuasiStaticWarning` when the wrench lies beyond both
    surfaces by more than ``outside_tol``; the record is still classified by
    the surface it is nearest to along its ray.
    """
    F, T = reduced_wrench(record.wrench)
    theta = np.array([params.mu_e, params.mu_p, params.r_e, params.r_p])
    g_e, g_p = _region_values(theta, F, T, record.n_e, params.c, params.weight)
    if min(g_e, g_p) > 1.0 + outside_tol:
        warnings.warn(
            f"wrench ({F:.4g}, {T:.4g}) lies outside both limit surfaces at n_e={record.n_e:.4g}",
            QuasiStaticWarning,
            stacklevel=2,
        )
    m = float(_margin(g_e, g_p))
    return m < 0, m


# ----------------------------------------------------------------------------
# fitting
# ----------------------------------------------------------------------------


class _Data(NamedTuple):
    F: np.ndarray
    T: np.ndarray
    n_e: np.ndarray
    slip: np.ndarray
    weight: np.ndarray


def _prepare(dataset: Sequence[SegmentRecord], slip_weight: float) -> _Data:
    if len(dataset) == 0:
        raise DomainError("empty dataset")
    w = np.array([r.wrench for r in dataset], dtype=float)
    slip = np.array([r.slipped() for r in dataset], dtype=bool)
    if slip.all() or not slip.any():
        raise Degenerate("dataset contains a single label class")
    return _Data(
        np.hypot(w[:, 0], w[:, 1]),
        np.abs(w[:, 2]),
        np.array([r.n_e for r in dataset], dtype=float),
        slip,
        np.where(slip, slip_weight, 1.0),
    )


def _loss(theta, data: _Data, theta0, c, weight, opts: FitOptions) -> float:
    g_e, g_p = _region_values(theta, data.F, data.T, data.n_e, c, weight)
    m = _margin(g_e, g_p)
    y = np.where(data.slip, -1.0, 1.0)
    hinge = np.maximum(0.0, -y * m)
    # stick wrenches lie on the support surface, slip wrenches on the top one
    resid = np.where(data.slip, g_e, g_p) - 1.0
    wsum = data.weight.sum()
    loss = float(np.dot(data.weight, hinge) + opts.boundary_weight * np.dot(data.weight, resid * resid)) / wsum
    rel = (theta - theta0) / theta0
    return loss + opts.regularization * float(np.dot(rel, rel))


def _accuracy(theta, data: _Data, c, weight) -> float:
    g_e, g_p = _region_values(theta, data.F, data.T, data.n_e, c, weight)
    pred = _margin(g_e, g_p) < 0
    return float(np.mean(pred == data.slip))


def fit_params(dataset: Sequence[SegmentRecord], init: FrictionParams, bounds: Bounds | None = None,
               opts: FitOptions | None = None) -> FitResult:
    """Fit (mu_e, mu_p, r_e, r_p) by bounded Nelder-Mead with seeded restarts.

    Mass, gravity and the pressure constant ``c`` are taken from ``init``.
    The loss is the weighted hinge on the region margin plus a boundary
    residual that puts stick wrenches on the support surface and slip
    wrenches on the top surface (the hinge alone is flat over every
    separating parameter set and cannot pin the crossing down).
    """
    bounds = bounds or Bounds()
    opts = opts or FitOptions()
    data = _prepare(list(dataset), opts.slip_weight)
    blist = bounds.as_list()
    lo = np.array([b[0] for b in blist])
    hi = np.array([b[1] for b in blist])
    theta0 = np.clip(np.array([getattr(init, k) for k in FIT_KEYS], dtype=float), lo, hi)
    c, weight = init.c, init.weight
    rng = np.random.default_rng(opts.seed)

    def fun(th):
        return _loss(th, data, theta0, c, weight, opts)

    best = None
    total_iter = 0
    for k in range(opts.restarts):
        x0 = theta0 if k == 0 else np.clip(theta0 * np.exp(opts.jitter * rng.standard_normal(4)), lo, hi)
        res = minimize(
            fun, x0, method="Nelder-Mead", bounds=blist,
            options={"maxiter": opts.maxiter, "xatol": opts.xatol, "fatol": opts.fatol},
        )
        total_iter += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res
    theta = np.asarray(best.x, dtype=float)
    params = init.replace(**{k: float(v) for k, v in zip(FIT_KEYS, theta)})
    return FitResult(
        params=params,
        loss=float(best.fun),
        classification_accuracy=_accuracy(theta, data, c, weight),
        iterations=total_iter,
        converged=bool(best.success),
    )


def accuracy(params: FrictionParams, dataset: Sequence[SegmentRecord]) -> float:
    """Fraction of records whose predicted slip flag matches their label."""
    if not dataset:
        raise DomainError("empty dataset")
    theta = np.array([getattr(params, k) for k in FIT_KEYS])
    w = np.array([r.wrench for r in dataset], dtype=float)
    data = _Data(np.hypot(w[:, 0], w[:, 1]), np.abs(w[:, 2]), np.array([r.n_e for r in dataset]),
                 np.array([r.slipped() for r in dataset]), np.ones(len(dataset)))
    return _accuracy(theta, data, params.c, params.weight)


# ----------------------------------------------------------------------------
# synthetic data
# ----------------------------------------------------------------------------


def synth_dataset(params_true: FrictionParams, count: int, n_e_levels: Iterable[float] = range(3, 10),
                  noise: float = 0.0, seed: int = 0, step: float = 0.02) -> list[SegmentRecord]:
    """Boundary wrenches drawn uniformly in direction, labelled by the binding surface.

    The direction angle is uniform in the plane normalised by the support
    axes.  Each wrench is placed on whichever surface it meets first, its
    force split randomly between x and y and its torque given a random sign;
    then every component is scaled by ``1 + noise * N(0, 1)``.  Poses describe
    a segment of length ``step`` whose object motion agrees with the label.
    """
    if count <= 0:
        raise DomainError("count must be positive")
    levels = np.asarray(sorted(float(v) for v in n_e_levels))
    if len(levels) == 0 or np.any(levels <= 0):
        raise DomainError("n_e levels must be positive")
    rng = np.random.default_rng(seed)
    theta = np.array([getattr(params_true, k) for k in FIT_KEYS])
    n_e = levels[np.arange(count) % len(levels)]
    phi = rng.uniform(0.0, 0.5 * np.pi, count)
    psi = rng.uniform(-np.pi, np.pi, count)
    tsign = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    eps = rng.standard_normal((count, 3))
    heading = rng.uniform(-np.pi, np.pi, count)

    _, _, afp, atp = _axes(theta, n_e, params_true.c, params_true.weight)
    F, T = afp * np.cos(phi), atp * np.sin(phi)
    g_e, g_p = _region_values(theta, F, T, n_e, params_true.c, params_true.weight)
    scale = 1.0 / np.maximum(g_e, g_p)
    F, T = F * scale, T * scale
    slip = g_e > g_p
    w = np.stack([F * np.cos(psi), F * np.sin(psi), tsign * T], axis=1) * (1.0 + noise * eps)

    records = []
    zero = Pose2(0.0, 0.0, 0.0)
    for i in range(count):
        rot = tsign[i] * 5.0 * step  # 0.1 rad for the default step
        ee = Pose2(step * math.cos(heading[i]), step * math.sin(heading[i]), rot)
        obj = Pose2(ee.x, ee.y, 0.0) if slip[i] else ee
        records.append(SegmentRecord(zero, ee, zero, obj, float(n_e[i]), Wrench2(*w[i]), bool(slip[i])))
    return records


# ----------------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------------


def dataset_to_csv(dataset: Iterable[SegmentRecord]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for r in dataset:
        vals = [*r.q_e0, *r.q_eT, *r.q_o0, *r.q_oT, r.n_e, *r.wrench]
        label = "" if r.label is None else str(int(r.label))
        buf.write(",".join(map(format_float, vals)) + "," + label + "\n")
    return buf.getvalue()


def write_dataset(path: str | os.PathLike, dataset: Iterable[SegmentRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(dataset_to_csv(dataset))


def parse_dataset(text: str) -> list[SegmentRecord]:
    """Parse dataset CSV text; schema problems raise :class:`SchemaError` naming the row and column.

    Rows are numbered as file lines, the header being row 1.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file", row=1) from None
    header = [h.strip() for h in header]
    if tuple(header) != CSV_HEADER:
        for j, (got, want) in enumerate(zip(header, CSV_HEADER)):
            if got != want:
                raise SchemaError(f"expected header {want!r}, found {got!r}", row=1, column=want)
        missing = CSV_HEADER[len(header):]
        if missing:
            raise SchemaError("missing header column", row=1, column=missing[0])
        raise SchemaError(f"unexpected extra header column {header[len(CSV_HEADER)]!r}", row=1)
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise SchemaError(f"expected {len(CSV_HEADER)} fields, found {len(row)}", row=lineno)
        vals = []
        for name, cell in zip(CSV_HEADER[:-1], row[:-1]):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"not a number: {cell!r}", row=lineno, column=name) from None
            if not math.isfinite(v):
                raise SchemaError(f"non-finite value {cell!r}", row=lineno, column=name)
            vals.append(v)
        lab = row[-1].strip()
        if lab not in ("", "0", "1"):
            raise SchemaError(f"label must be 0, 1 or empty, found {lab!r}", row=lineno, column="label")
        if vals[12] <= 0:
            raise SchemaError(f"normal force must be positive, found {row[12]!r}", row=lineno, column="Ne")
        records.append(SegmentRecord(
            Pose2(*vals[0:3]), Pose2(*vals[3:6]), Pose2(*vals[6:9]), Pose2(*vals[9:12]),
            vals[12], Wrench2(*vals[13:16]), None if lab == "" else lab == "1",
        ))
    return records


def read_dataset(path: str | os.PathLike) -> list[SegmentRecord]:
    with open(path, newline="") as fh:
        return parse_dataset(fh.read())
