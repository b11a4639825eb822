"""Planar sliding with top contact via asymmetric dual limit surfaces."""
from duallimit.mechanics import (
    CaseId,
    ContactCase,
    DomainError,
    ForceRegime,
    FrictionParams,
    LimitSurface,
    NoIntersection,
    Twist2,
    Wrench2,
    classify_case,
    force_regime,
    intersection_wrench,
    is_slippage_free,
    kv,
)

__version__ = "0.1.0"
