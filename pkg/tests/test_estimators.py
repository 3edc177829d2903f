import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpmoments.errors import InvalidInputError, OutOfRangeError
from gpmoments.estimators import (
    DriftModel,
    drift_fou1,
    drift_fou2,
    estimate_path,
    f_hat_continuous,
    f_tilde_discrete,
    f_tilde_from_path,
    g_inverse_fou1,
    g_inverse_fou2,
    standardize,
)
from gpmoments.kernels import ExpOU
from gpmoments.sampler import GridSpec, Path, fou1_batch, stationary_batch


def test_f_hat_constant_and_linear():
    g = GridSpec.uniform(10, 0.1)
    assert f_hat_continuous(Path(g, np.full(11, 3.0))) == pytest.approx(9.0)
    fine = GridSpec.uniform(1000, 0.001)
    approx = f_hat_continuous(Path(fine, fine.times))
    assert abs(approx - 1 / 3) < 1e-6  # trapezoid error Delta^2 / 6


def test_f_hat_degenerate():
    with pytest.raises(InvalidInputError):
        f_hat_continuous(np.array([1.0]), delta=0.1)
    with pytest.raises(InvalidInputError):
        f_hat_continuous(np.array([1.0, 2.0]))


def test_f_tilde_examples():
    assert f_tilde_discrete([1, -1, 1, -1]) == 1
    assert f_tilde_discrete([0, 0, 0]) == 0
    with pytest.raises(InvalidInputError):
        f_tilde_discrete([])


def test_standardize_examples():
    assert standardize(2.0, 2.0, 1.0) == 0
    assert standardize(3.0, 2.0, 4.0) == 0.5
    with pytest.raises(InvalidInputError):
        standardize(1.0, 0.0, 0.0)


def test_unbiasedness_and_unit_variance():
    from gpmoments.kernels import var_VT

    g = GridSpec.horizon(20, 0.05)
    z = stationary_batch(ExpOU(1, 1), g, 30, range(10_000))
    fh, ft = f_hat_continuous(z, 0.05), f_tilde_from_path(z)
    for f in (fh, ft):
        assert abs(f.mean() - 1) < 3 * f.std(ddof=1) / math.sqrt(f.size)
    v = standardize(math.sqrt(20) * (fh - 1), 0.0, var_VT(ExpOU(1, 1), 20))
    assert abs(v.var(ddof=1) - 1) < 3 * math.sqrt(2 / v.size)


def test_rmse_decays_like_inverse_sqrt_T():
    Ts = [25, 100, 400]
    rmse = []
    for T in Ts:
        z = stationary_batch(ExpOU(1, 1), GridSpec.horizon(T, 0.1), 31, range(2000))
        rmse.append(np.sqrt(np.mean((f_hat_continuous(z, 0.1) - 1) ** 2)))
    slope = np.polyfit(np.log(Ts), np.log(rmse), 1)[0]
    assert -0.6 <= slope <= -0.4


def _ou_startup_bias(theta, T):
    # H = 1/2: E X_t^2 = (1 - e^{-2 theta t}) / (2 theta), so
    # E f_hat - f_X = -(1 - e^{-2 theta T}) / (4 theta^2 T)
    return -(-math.expm1(-2 * theta * T)) / (4 * theta**2 * T)


def test_nonstationary_bias_matches_startup_deficit():
    theta, f_X = 1.0, g_inverse_fou1(1.0, 0.5)
    for T in (10, 40):
        g = GridSpec.horizon(T, 0.01)
        f = f_hat_continuous(fou1_batch(theta, 0.5, g, 32, range(4000)), 0.01)
        se = f.std(ddof=1) / math.sqrt(f.size)
        assert abs(f.mean() - f_X - _ou_startup_bias(theta, T)) < 3 * se


@pytest.mark.xfail(strict=True, reason="start-up bias of a zero-started OU is exactly order 1/T; "
                   "see notes on the nonstationary bias rate")
def test_nonstationary_bias_decays_faster_than_inverse_T():
    scaled = [T * abs(_ou_startup_bias(1.0, T)) for T in (10, 100, 1000)]
    assert scaled[-1] < 0.5 * scaled[0]


def test_drift_fou1_examples():
    assert drift_fou1(0.25, 0.5) == pytest.approx(2.0)
    assert drift_fou1(0.5, 0.5) == pytest.approx(1.0)
    assert drift_fou1(g_inverse_fou1(1.7, 0.7), 0.7) == pytest.approx(1.7, rel=1e-14)
    with pytest.raises(InvalidInputError):
        drift_fou1(0.0, 0.5)
    with pytest.raises(InvalidInputError):
        drift_fou1([0.3, -1.0], 0.5)


def test_g_inverse_fou2_examples():
    assert g_inverse_fou2(1, 0.6) == pytest.approx(0.6**1.2, rel=1e-14)
    mpmath.mp.dps = 30
    H, mu = mpmath.mpf("0.75"), mpmath.mpf(2)
    oracle = (2 * H - 1) * H ** (2 * H) / mu * mpmath.beta(1 - H + mu * H, 2 * H - 1)
    assert g_inverse_fou2(2, 0.75) == pytest.approx(float(oracle), rel=1e-13)
    vals = [g_inverse_fou2(mu, 0.7) for mu in (0.1, 1, 10, 100, 1e4)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3


@pytest.mark.parametrize("mu,H", [(1, 0.6), (3, 0.75)])
def test_drift_fou2_roundtrip(mu, H):
    assert drift_fou2(g_inverse_fou2(mu, H), H) == pytest.approx(mu, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.05, 20), H=st.floats(0.52, 0.97))
def test_roundtrip_property(rate, H):
    assert drift_fou2(g_inverse_fou2(rate, H), H) == pytest.approx(rate, abs=1e-9)
    h1 = H - 0.5
    assert drift_fou1(g_inverse_fou1(rate, h1), h1) == pytest.approx(rate, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(f1=st.floats(0.01, 2), f2=st.floats(0.01, 2))
def test_drift_fou2_monotone(f1, f2):
    if f1 < f2:
        assert drift_fou2(f1, 0.7) > drift_fou2(f2, 0.7)


def test_drift_fou2_out_of_range():
    with pytest.raises(OutOfRangeError):
        drift_fou2(g_inverse_fou2(1e-9, 0.6), 0.6)
    with pytest.raises(InvalidInputError):
        drift_fou2(-0.1, 0.6)


def test_drift_model():
    m = DriftModel("FOU2", 2.0, 0.7)
    assert m.estimate(m.f_X) == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(InvalidInputError):
        DriftModel("FOU3", 1.0, 0.7)


def test_estimate_record_json():
    g = GridSpec.uniform(4, 0.5)
    rec = estimate_path(Path(g, np.array([0.0, 1.0, 1.0, 1.0, 1.0])), f_Z=1.0)
    d = json.loads(rec.to_json())
    assert d["f_tilde"] == 1.0
    assert d["delta_stat"] == pytest.approx(d["u_stat"] - d["v_stat"])
    assert d["v_stat"] == pytest.approx(math.sqrt(2) * (0.875 - 1))
