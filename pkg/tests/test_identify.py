import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_valid_point
from oracles import crossing, dual_axes
from duallimit.mechanics import DomainError, FrictionParams, Wrench2, intersection_wrench
from duallimit.identify import (
    CSV_HEADER,
    Degenerate,
    FitOptions,
    QuasiStaticWarning,
    SchemaError,
    SegmentRecord,
    accuracy,
    dataset_to_csv,
    fit_params,
    label_slip,
    parse_dataset,
    predict_mode,
    region_margin,
    synth_dataset,
)
from duallimit.planner import Pose2

TRUE = FrictionParams(mu_e=0.6, mu_p=0.3, r_e=0.02, r_p=0.05)
ZERO = Pose2(0, 0, 0)


def record(dev=(0, 0, 0), wrench=(0, 0, 0), n_e=4.0, label=None):
    ee = Pose2(0.02, 0.01, 0.3)
    obj = Pose2(ee.x - dev[0], ee.y - dev[1], ee.theta - dev[2])
    return SegmentRecord(ZERO, ee, ZERO, obj, n_e, Wrench2(*wrench), label)


def test_label_examples():
    assert not label_slip(record((0.004, 0.0, 0.04)))
    assert label_slip(record((0.006, 0.0, 0.0)))
    assert label_slip(record((0.0, 0.0, -0.051)))
    assert not label_slip(record())
    # the position error is Euclidean
    assert label_slip(record((0.004, 0.004, 0.0)))


@given(st.floats(0, 0.01), st.floats(0, 0.01), st.floats(0, 0.1),
       st.floats(0.001, 0.02), st.floats(0.01, 0.2), st.floats(0, 0.01), st.floats(0, 0.1))
def test_labels_monotone_in_thresholds(dx, dy, dth, pos, ori, dpos, dori):
    r = record((dx, dy, dth))
    if not label_slip(r, ori, pos):
        assert not label_slip(r, ori + dori, pos + dpos)


def test_stored_label_wins():
    assert record((0.1, 0, 0), label=False).slipped() is False
    assert record(label=True).slipped() is True


def test_margin_examples():
    slip, m = predict_mode(TRUE, record(wrench=(0, 0, 0)))
    assert not slip and m > 0
    F, T = intersection_wrench(TRUE, 4.0)
    assert abs(region_margin(TRUE, 4.0, F, T)) < 1e-12
    # beyond the crossing on the torque side the top contact binds first (case III)
    assert region_margin(TRUE, 4.0, 0.1 * F, 2 * T) < 0
    assert region_margin(TRUE, 4.0, 2 * F, 0.1 * T) > 0


def test_outside_both_surfaces_warns():
    with pytest.warns(QuasiStaticWarning):
        predict_mode(TRUE, record(wrench=(100.0, 0.0, 0.0)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        predict_mode(TRUE, record(wrench=(0.5, 0.0, 0.0)))


def test_margin_sign_flips_only_at_crossing(rng):
    """Walk the first boundary met along each ray; the only sign change is at the crossing."""
    for _ in range(200):
        params, n_e = random_valid_point(rng)
        (afe, ate), (afp, atp) = dual_axes(params.mu_e, params.mu_p, params.r_e, params.r_p,
                                           params.c, params.weight, n_e)

        def boundary(phi):
            u = np.array([math.cos(phi), math.sin(phi)])
            s = max(math.hypot(u[0] / afe, u[1] / ate), math.hypot(u[0] / afp, u[1] / atp))
            return u / s

        def m(phi):
            return region_margin(params, n_e, *boundary(phi))

        phis = np.linspace(1e-6, 0.5 * math.pi - 1e-6, 400)
        signs = np.sign([m(p) for p in phis])
        flips = np.nonzero(signs[:-1] != signs[1:])[0]
        assert len(flips) == 1
        lo, hi = phis[flips[0]], phis[flips[0] + 1]
        slo = signs[flips[0]]
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if np.sign(m(mid)) == slo:
                lo = mid
            else:
                hi = mid
        got = boundary(0.5 * (lo + hi))
        want = crossing((afe, ate), (afp, atp))
        np.testing.assert_allclose(got, want, rtol=1e-7)


@settings(max_examples=200)
@given(st.floats(0, 5), st.floats(0, 0.2), st.floats(-1e-6, 1e-6), st.floats(-1e-8, 1e-8))
def test_margin_is_lipschitz(F, T, dF, dT):
    a = region_margin(TRUE, 4.0, F, T)
    b = region_margin(TRUE, 4.0, max(F + dF, 0.0), max(T + dT, 0.0))
    # slopes are bounded by 3 / (smallest semi-axis)
    assert abs(a - b) <= 3 * (abs(dF) + abs(dT)) / (0.02 * 0.6 * 0.6 * 4.0) + 1e-12


def test_synth_self_consistent_and_seeded():
    data = synth_dataset(TRUE, 300, range(3, 10), 0.0, seed=4)
    assert {r.n_e for r in data} == set(map(float, range(3, 10)))
    assert accuracy(TRUE, data) == 1.0
    for r in data:
        assert label_slip(r) == r.label
    assert dataset_to_csv(data) == dataset_to_csv(synth_dataset(TRUE, 300, range(3, 10), 0.0, seed=4))
    assert dataset_to_csv(data) != dataset_to_csv(synth_dataset(TRUE, 300, range(3, 10), 0.0, seed=5))
    with pytest.raises(DomainError):
        synth_dataset(TRUE, 0)


def test_fit_recovers_noiseless_model_and_is_deterministic():
    data = synth_dataset(TRUE, 300, range(3, 10), 0.0, seed=9)
    init = TRUE.replace(mu_e=0.9, mu_p=0.2, r_e=0.03, r_p=0.04)
    opts = FitOptions(restarts=6, seed=1)
    a = fit_params(data, init, opts=opts)
    b = fit_params(data, init, opts=opts)
    assert a == b
    assert a.classification_accuracy == 1.0
    for k in ("mu_e", "mu_p", "r_e", "r_p"):
        assert getattr(a.params, k) == pytest.approx(getattr(TRUE, k), rel=1e-4)
    assert (a.params.mass, a.params.gravity, a.params.c) == (init.mass, init.gravity, init.c)


def test_fit_rejects_degenerate_data():
    data = [r for r in synth_dataset(TRUE, 100, [4.0], 0.0, seed=1) if r.label]
    with pytest.raises(Degenerate):
        fit_params(data, TRUE)
    with pytest.raises(DomainError):
        fit_params([], TRUE)


def test_fit_respects_bounds():
    data = synth_dataset(TRUE, 100, [3, 6, 9], 0.0, seed=2)
    res = fit_params(data, TRUE.replace(mu_e=5.0, r_p=1.0), opts=FitOptions(restarts=2))
    assert 0.01 <= res.params.mu_e <= 2.0 and 0.001 <= res.params.r_p <= 0.2


# ---------------------------------------------------------------- CSV


def test_csv_round_trip():
    data = synth_dataset(TRUE, 20, [3, 4], 0.05, seed=3)
    text = dataset_to_csv(data)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert parse_dataset(text) == data


def test_csv_empty_label_uses_thresholds():
    text = ",".join(CSV_HEADER) + "\n" + "0,0,0,0.02,0,0.3,0,0,0,0.02,0,0.2,4,0.1,0,0.01,\n"
    (r,) = parse_dataset(text)
    assert r.label is None and r.slipped()


@pytest.mark.parametrize(
    "mutate, row, column",
    [
        (lambda lines: [lines[0].replace("qeT_th", "qeT_theta")] + lines[1:], 1, "qeT_th"),
        (lambda lines: [lines[0], lines[1].replace("4,", "abc,", 1)] + lines[2:], 2, None),
        (lambda lines: lines[:2] + [lines[2].rsplit(",", 1)[0] + ",2"], 3, "label"),
        (lambda lines: lines[:2] + [lines[2] + ",9"], 3, None),
        (lambda lines: [lines[0].rsplit(",", 1)[0]] + lines[1:], 1, "label"),
    ],
)
def test_csv_schema_errors_name_location(mutate, row, column):
    lines = dataset_to_csv(synth_dataset(TRUE, 2, [4], 0.0, seed=1)).splitlines()
    with pytest.raises(SchemaError) as exc:
        parse_dataset("\n".join(mutate(lines)) + "\n")
    assert exc.value.row == row
    if column is not None:
        assert exc.value.column == column
    assert f"row {row}" in str(exc.value)


def test_csv_nonpositive_force():
    lines = dataset_to_csv(synth_dataset(TRUE, 1, [4], 0.0, seed=1)).splitlines()
    cells = lines[1].split(",")
    cells[12] = "0"
    with pytest.raises(SchemaError) as exc:
        parse_dataset(lines[0] + "\n" + ",".join(cells) + "\n")
    assert exc.value.column == "Ne"
