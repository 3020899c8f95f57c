"""Rate constants and mean transition-time predictions."""

import math
from dataclasses import replace

import numpy as np
import pytest

from nrkramers.errors import ModelInconsistencyError, PreconditionViolationError
from nrkramers.kramers import ek_constant, predict
from nrkramers.landscape import catalog, zero_skew
from nrkramers.topology import (
    KIND_MINIMUM,
    build_valley_structure,
    find_critical_points,
)

BOX2 = [[-2.0, 2.0], [-2.0, 2.0]]


def _pipeline(spec, level=0.25, box=BOX2):
    crits = find_critical_points(spec, box)
    m0 = min((c for c in crits if c.kind == KIND_MINIMUM),
             key=lambda c: c.location[0])
    vs = build_valley_structure(spec, crits, m0, level)
    return crits, vs


@pytest.fixture(scope="module")
def dw_prediction():
    spec = catalog(1.0)["doublewell2d"]
    _, vs = _pipeline(spec)
    return spec, vs, predict(vs, spec)


def test_rate_constants_benchmark(dw_prediction):
    spec, vs, _ = dw_prediction
    omega, omega_rev, spectrum = ek_constant(vs.gates[0].point, spec)
    # mu = sqrt(2), -det H = 1 at the gate
    assert omega == pytest.approx(math.sqrt(2.0) / (2.0 * math.pi), rel=1e-10)
    assert omega_rev == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-10)
    assert spectrum.mu == pytest.approx(math.sqrt(2.0), rel=1e-10)
    assert spectrum.lambda1 == pytest.approx(1.0, rel=1e-10)


def test_prediction_closed_form(dw_prediction):
    _, _, pred = dw_prediction
    # nu0 = 1/sqrt(2); mean time = pi * exp(0.25/eps)
    assert pred.nu0 == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-12)
    assert pred.exponent == pytest.approx(0.25, abs=1e-12)
    for eps in (0.15, 0.1, 0.05):
        want = math.pi * math.exp(0.25 / eps)
        assert pred.mean_time(eps) == pytest.approx(want, rel=1e-10)
        want_rev = math.pi * math.sqrt(2.0) * math.exp(0.25 / eps)
        assert pred.mean_time_rev(eps) == pytest.approx(want_rev, rel=1e-10)
    assert pred.mean_time(0.1) == pytest.approx(38.2724, rel=1e-4)
    assert pred.speedup == pytest.approx(math.sqrt(2.0), rel=1e-10)


def test_reversible_reduction_is_exact():
    spec = catalog(0.0)["doublewell2d"]
    _, vs = _pipeline(spec)
    pred = predict(vs, spec)
    for eps in (0.2, 0.1):
        assert pred.mean_time(eps) == pred.mean_time_rev(eps)  # bit-identical
    assert pred.speedup == 1.0


def test_stronger_rotation_speeds_up():
    om = {}
    for a in (1.0, 2.0):
        spec = catalog(a)["doublewell2d"]
        _, vs = _pipeline(spec)
        pred = predict(vs, spec)
        om[a] = pred.omega0
        assert pred.omega0_rev == pytest.approx(1.0 / (2.0 * math.pi),
                                                rel=1e-10)
    assert om[2.0] > om[1.0]
    # mu solves mu^2 = lam1 lam2 + a^2 ... here mu = sqrt(1 + a^2)
    assert om[2.0] * 2.0 * math.pi == pytest.approx(math.sqrt(5.0), rel=1e-8)


def test_mean_time_decreasing_in_epsilon(dw_prediction):
    _, _, pred = dw_prediction
    eps = [0.2, 0.15, 0.1, 0.05]
    times = [pred.mean_time(e) for e in eps]
    assert all(a < b for a, b in zip(times, times[1:]))


def test_error_band_scaling(dw_prediction):
    _, _, pred = dw_prediction
    assert pred.error_band(0.1) == pytest.approx(
        math.sqrt(0.1) * math.log(10.0), rel=1e-12)


def test_table_and_to_dict(dw_prediction):
    _, _, pred = dw_prediction
    rows = pred.table([0.1])
    assert rows[0][0] == 0.1
    assert rows[0][1] == pytest.approx(pred.mean_time(0.1))
    doc = pred.to_dict([0.1])
    assert doc["speedup"] == pytest.approx(math.sqrt(2.0), rel=1e-10)
    assert len(doc["saddles"]) == 1


def test_doublewell1d_closed_form():
    spec = catalog(0.0)["doublewell1d"]
    crits = find_critical_points(spec, [[-2.0, 2.0]])
    m0 = min((c for c in crits if c.kind == KIND_MINIMUM),
             key=lambda c: c.location[0])
    vs = build_valley_structure(spec, crits, m0, 0.25)
    pred = predict(vs, spec)
    # 2 pi / lam1 * sqrt(-det Hs / det Hm) = 2 pi sqrt(1/2)
    want = 2.0 * math.pi * math.sqrt(0.5) * math.exp(0.25 / 0.1)
    assert pred.mean_time(0.1) == pytest.approx(want, rel=1e-12)
    assert pred.mean_time(0.1) == pred.mean_time_rev(0.1)


def test_non_saddle_input_rejected(dw_prediction):
    spec, vs, _ = dw_prediction
    with pytest.raises(PreconditionViolationError):
        ek_constant(vs.m0, spec)


def test_broken_orthogonality_detected(dw_prediction):
    spec, vs, _ = dw_prediction
    gate = vs.gates[0]
    bad = replace(gate.point, ell_jac=np.eye(2))  # H L symmetric, not skew
    with pytest.raises(ModelInconsistencyError):
        ek_constant(bad, spec)
