"""Ellipsoidal limit surfaces for an object squeezed between an end-effector
patch (top contact) and a horizontal support plane (bottom contact).

Both contacts are modelled with the axis-aligned ellipsoid

    w^T A w = 1,   A = diag(1/a_f^2, 1/a_f^2, 1/a_t^2)

with force semi-axis ``a_f = mu * N`` and torque semi-axis ``a_t = r * c * mu * N``.
Quasi-static balance makes the top wrench the negative of the support
wrench, so both surfaces can be drawn in one wrench space.  Because friction
is isotropic the pair reduces to two ellipses in the (F, T) plane, where
``F = sqrt(fx^2 + fy^2)`` and ``T = |tau|``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

#: on-surface check for wrenches handed to the normal map
ON_SURFACE_TOL = 1e-9
#: relative residual guaranteed by :func:`intersection_wrench`
INTERSECTION_TOL = 1e-12
#: default multiplicative shrink applied to k_v when planning
DEFAULT_SAFETY = 0.8


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class NoIntersection(DomainError):
    """The two reduced limit surfaces do not cross.

    ``inside`` names the surface that is strictly contained in the other
    (``"top"`` or ``"support"``).
    """

    def __init__(self, inside: str, message: str | None = None):
        self.inside = inside
        super().__init__(message or f"no intersection: {inside} limit surface lies inside the other")


class InfiniteKv(DomainError):
    """The intersection wrench is a pure torque, so k_v is unbounded."""


# ----------------------------------------------------------------------------
# value types
# ----------------------------------------------------------------------------


class Wrench2(NamedTuple):
    fx: float
    fy: float
    tau: float

    def __neg__(self) -> "Wrench2":
        return Wrench2(-self.fx, -self.fy, -self.tau)

    def reduced(self) -> tuple[float, float]:
        """(F, T) = (|f|, |tau|) in the isotropic reduction."""
        return math.hypot(self.fx, self.fy), abs(self.tau)


class Twist2(NamedTuple):
    vx: float
    vy: float
    omega: float


@dataclass(frozen=True)
class FrictionParams:
    """Physical parameters of the object/end-effector/support system.

    Parameters
    ----------
    mu_e, mu_p : float
        Friction coefficients of the top (end-effector) and support contacts.
    r_e, r_p : float
        Equivalent radii [m] of the two contact patches.
    c : float
        Pressure distribution constant, ~0.6 for uniform pressure.
    mass : float
        Object mass [kg].
    gravity : float
        Gravitational acceleration [m/s^2].
    """

    mu_e: float
    mu_p: float
    r_e: float
    r_p: float
    c: float = 0.6
    mass: float = 0.05
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("mu_e", "mu_p", "r_e", "r_p", "mass", "gravity"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        if not (0 < self.c <= 1):
            raise DomainError(f"c must lie in (0, 1], got {self.c!r}")

    @property
    def weight(self) -> float:
        return self.mass * self.gravity

    def replace(self, **changes) -> "FrictionParams":
        fields = {k: getattr(self, k) for k in ("mu_e", "mu_p", "r_e", "r_p", "c", "mass", "gravity")}
        fields.update(changes)
        return FrictionParams(**fields)


@dataclass(frozen=True)
class LimitSurface:
    a_f: float
    a_t: float
    normal_force: float

    @property
    def matrix(self) -> np.ndarray:
        return np.diag([self.a_f**-2, self.a_f**-2, self.a_t**-2])

    def value(self, wrench: Wrench2) -> float:
        """w^T A w; equals 1 on the surface."""
        fx, fy, tau = wrench
        return (fx * fx + fy * fy) / self.a_f**2 + tau * tau / self.a_t**2

    def reduced_value(self, force: float, torque: float) -> float:
        return (force / self.a_f) ** 2 + (torque / self.a_t) ** 2


class CaseId(enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"

    @property
    def bounds_rotation(self) -> bool:
        """True when k_v is an upper bound on |omega|/|v| (cases III and IV)."""
        return self in (CaseId.III, CaseId.IV)

    @property
    def bounds_translation(self) -> bool:
        """True when k_v is a lower bound on |omega|/|v| (cases II and V)."""
        return self in (CaseId.II, CaseId.V)


@dataclass(frozen=True)
class ContactCase:
    case_id: CaseId
    p_T: float
    p_F: float


class Relation(enum.Enum):
    """How the top surface sits relative to the support surface at one N_e."""

    INSIDE = "inside"  # end-effector always slips
    INTERSECTING = "intersecting"
    CONTAINING = "containing"  # object always follows the end-effector
    COINCIDENT = "coincident"


@dataclass(frozen=True)
class ForceRegime:
    case_id: CaseId
    n_slip: float | None
    n_stick: float | None

    @property
    def valid_range(self) -> tuple[float, float] | None:
        """Open interval of N_e where the reduced surfaces cross, or None."""
        if self.n_slip is None:
            return None
        upper = math.inf if self.n_stick is None else self.n_stick
        if not self.n_slip < upper:
            return None
        return (self.n_slip, upper)

    def contains(self, n_e: float) -> bool:
        rng = self.valid_range
        return rng is not None and rng[0] < n_e < rng[1]

    def relation_at(self, n_e: float) -> Relation:
        """Relation predicted from the critical forces alone."""
        if self.n_slip is None or n_e < self.n_slip:
            return Relation.INSIDE
        if self.n_stick is not None and n_e > self.n_stick:
            return Relation.CONTAINING
        if self.contains(n_e):
            return Relation.INTERSECTING
        # exactly on a critical force: the surfaces touch on an axis
        return Relation.INSIDE if n_e == self.n_slip else Relation.CONTAINING


# ----------------------------------------------------------------------------
# surfaces and the five cases
# ----------------------------------------------------------------------------


def build_limit_surface(mu: float, r: float, c: float, n: float) -> LimitSurface:
    for name, value in (("mu", mu), ("r", r), ("c", c), ("n", n)):
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be positive, got {value!r}")
    a_f = mu * n
    return LimitSurface(a_f=a_f, a_t=r * c * a_f, normal_force=n)


def support_normal_force(params: FrictionParams, n_e: float) -> float:
    if not n_e >= 0:
        raise DomainError(f"applied normal force must be >= 0, got {n_e!r}")
    return params.weight + n_e


def force_ratio(params: FrictionParams, n_e: float) -> float:
    """R = N_e / (N_e + m g)."""
    return n_e / support_normal_force(params, n_e)


def top_surface(params: FrictionParams, n_e: float) -> LimitSurface:
    return build_limit_surface(params.mu_e, params.r_e, params.c, n_e)


def support_surface(params: FrictionParams, n_e: float) -> LimitSurface:
    return build_limit_surface(params.mu_p, params.r_p, params.c, support_normal_force(params, n_e))


def dual_surfaces(params: FrictionParams, n_e: float) -> tuple[LimitSurface, LimitSurface]:
    return top_surface(params, n_e), support_surface(params, n_e)


def classify_case(params: FrictionParams) -> ContactCase:
    """Classify the dual limit cones by the slope differences p_T and p_F.

    Ties go to the more conservative case. Case IV is the one whose sticking
    force exceeds its slipping force (p_F >= p_T > 0, i.e. r_e <= r_p); case V
    swaps the roles of the two critical forces.
    """
    te, tp = params.mu_e * params.r_e, params.mu_p * params.r_p
    p_T = (te - tp) / tp
    p_F = (params.mu_e - params.mu_p) / params.mu_p
    if p_F <= 0 and p_T <= 0:
        case = CaseId.I
    elif p_F <= 0:
        case = CaseId.II
    elif p_T <= 0:
        case = CaseId.III
    elif p_F >= p_T:
        case = CaseId.IV
    else:
        case = CaseId.V
    return ContactCase(case, p_T, p_F)


def _force_crossing(params: FrictionParams) -> float:
    # N_e at which the force semi-axes are equal
    return params.mu_p * params.weight / (params.mu_e - params.mu_p)


def _torque_crossing(params: FrictionParams) -> float:
    # N_e at which the torque semi-axes are equal
    tp = params.r_p * params.mu_p
    return tp * params.weight / (params.r_e * params.mu_e - tp)


def force_regime(params: FrictionParams) -> ForceRegime:
    case = classify_case(params).case_id
    if case is CaseId.I:
        return ForceRegime(case, None, None)
    if case is CaseId.II:
        return ForceRegime(case, _torque_crossing(params), None)
    if case is CaseId.III:
        return ForceRegime(case, _force_crossing(params), None)
    if case is CaseId.IV:
        n_slip, n_stick = _force_crossing(params), _torque_crossing(params)
    else:
        n_slip, n_stick = _torque_crossing(params), _force_crossing(params)
    if params.r_e == params.r_p:
        # both semi-axes swap order at the same force: no crossing window
        n_stick = n_slip
    return ForceRegime(case, n_slip, n_stick)


def surface_relation(top: LimitSurface, support: LimitSurface) -> Relation:
    """Containment of two coaxial centred ellipses, read off their semi-axes."""
    df = top.a_f - support.a_f
    dt = top.a_t - support.a_t
    if df == 0 and dt == 0:
        return Relation.COINCIDENT
    if df <= 0 and dt <= 0:
        return Relation.INSIDE
    if df >= 0 and dt >= 0:
        return Relation.CONTAINING
    return Relation.INTERSECTING


# ----------------------------------------------------------------------------
# intersection and k_v
# ----------------------------------------------------------------------------


def ellipse_intersection(top: LimitSurface, support: LimitSurface) -> tuple[float, float]:
    """First-quadrant crossing (F*, T*) of two reduced limit surfaces.

    Solved in coordinates normalised by the support semi-axes, where the
    support ellipse is the unit circle and the top one has semi-axes
    ``alpha = a_f,e / a_f,p`` and ``beta = a_t,e / a_t,p``.  Coincident
    surfaces return the pure-force point ``(a_f, 0)``; surfaces tangent on an
    axis return the touching point.
    """
    relation = surface_relation(top, support)
    if relation is Relation.COINCIDENT:
        return support.a_f, 0.0
    # tangent on an axis, as happens exactly at a critical normal force
    if top.a_f == support.a_f:
        return support.a_f, 0.0
    if top.a_t == support.a_t:
        return 0.0, support.a_t
    if relation is Relation.INSIDE:
        raise NoIntersection("top")
    if relation is Relation.CONTAINING:
        raise NoIntersection("support")
    alpha = top.a_f / support.a_f
    beta = top.a_t / support.a_t
    a2, b2 = alpha * alpha, beta * beta
    denom = (beta - alpha) * (beta + alpha)
    x2 = a2 * (beta - 1.0) * (beta + 1.0) / denom
    y2 = b2 * (1.0 - alpha) * (1.0 + alpha) / denom
    return support.a_f * math.sqrt(x2), support.a_t * math.sqrt(y2)


def intersection_wrench(params: FrictionParams, n_e: float) -> tuple[float, float]:
    return ellipse_intersection(*dual_surfaces(params, n_e))


def kv_from_surfaces(top: LimitSurface, support: LimitSurface, surface: str = "support") -> float:
    f_star, t_star = ellipse_intersection(top, support)
    ref = {"support": support, "top": top}.get(surface)
    if ref is None:
        raise DomainError(f"surface must be 'support' or 'top', got {surface!r}")
    if f_star == 0:
        raise InfiniteKv("pure-torque intersection: rotation is unbounded")
    return (t_star / ref.a_t**2) / (f_star / ref.a_f**2)


def kv(params: FrictionParams, n_e: float, surface: str = "support") -> float:
    """Critical |omega| / |v| [rad/m] at the slip boundary for normal force n_e.

    ``surface`` picks the limit surface whose normal defines the boundary
    twist: the support plane (default, the object slides on it) or the top
    contact.
    """
    return kv_from_surfaces(*dual_surfaces(params, n_e), surface=surface)


def _as_case_id(case) -> CaseId:
    if isinstance(case, ContactCase):
        return case.case_id
    return CaseId(case) if not isinstance(case, CaseId) else case


def is_slippage_free(twist: Twist2, k_v: float, case, safety: float = DEFAULT_SAFETY) -> bool:
    """Whether an object twist keeps the top contact sticking.

    Equality counts as sticking in cases III/IV and as slipping in II/V.
    The zero twist is always slippage-free.
    """
    if k_v < 0:
        raise DomainError("k_v must be non-negative")
    if not 0 < safety <= 1:
        raise DomainError("safety must lie in (0, 1]")
    case_id = _as_case_id(case)
    vx, vy, omega = twist
    if vx == 0 and vy == 0 and omega == 0:
        return True
    speed = math.hypot(vx, vy)
    if case_id.bounds_rotation:
        return safety * k_v * speed >= abs(omega)
    if case_id.bounds_translation:
        return k_v * speed / safety < abs(omega)
    return False


# ----------------------------------------------------------------------------
# normal map
# ----------------------------------------------------------------------------


def twist_direction_from_wrench(surface: LimitSurface, wrench: Wrench2, tol: float = ON_SURFACE_TOL) -> Twist2:
    residual = surface.value(wrench) - 1.0
    if abs(residual) > tol:
        raise DomainError(f"wrench is not on the limit surface (residual {residual:.3e})")
    fx, fy, tau = wrench
    n = np.array([fx / surface.a_f**2, fy / surface.a_f**2, tau / surface.a_t**2])
    n /= np.linalg.norm(n)
    return Twist2(*map(float, n))


def wrench_from_twist_direction(surface: LimitSurface, twist: Twist2) -> Wrench2:
    """Boundary wrench whose outward normal is parallel to ``twist``."""
    t = np.asarray(twist, dtype=float)
    if not np.any(t):
        raise DomainError("zero twist has no associated boundary wrench")
    a_inv = np.array([surface.a_f**2, surface.a_f**2, surface.a_t**2])
    w = a_inv * t
    w /= math.sqrt(float(t @ w))
    return Wrench2(*map(float, w))
