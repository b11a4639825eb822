import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from duallimit.mechanics import FrictionParams, force_regime


def random_params(rng, mass=None):
    return FrictionParams(
        mu_e=float(rng.uniform(0.1, 1.2)),
        mu_p=float(rng.uniform(0.1, 1.2)),
        r_e=float(rng.uniform(0.005, 0.08)),
        r_p=float(rng.uniform(0.005, 0.08)),
        c=0.6,
        mass=float(rng.uniform(0.02, 0.5)) if mass is None else mass,
        gravity=9.81,
    )


def random_valid_point(rng, max_tries=1000):
    """(params, n_e) with n_e strictly inside the crossing window."""
    for _ in range(max_tries):
        params = random_params(rng)
        rng_ = force_regime(params).valid_range
        if rng_ is None:
            continue
        lo, hi = rng_
        if math.isinf(hi):
            n_e = lo * float(rng.uniform(1.01, 10.0))
        else:
            if hi / lo < 1.02:
                continue
            n_e = lo + (hi - lo) * float(rng.uniform(0.01, 0.99))
        return params, n_e
    raise RuntimeError("no valid draw")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def case3():
    return FrictionParams(mu_e=0.6, mu_p=0.3, r_e=0.02, r_p=0.05, c=0.6, mass=0.05, gravity=9.81)
