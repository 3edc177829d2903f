"""Second-moment estimators and the drift estimators built on them."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import betaln, gammaln

from gpmoments.errors import InvalidInputError, OutOfRangeError
from gpmoments.sampler import Path

MU_LOWER = 1e-8
MU_TOL = 1e-12


def _values_and_times(path, delta):
    if isinstance(path, Path):
        return path.values, path.grid.times
    values = np.asarray(path, dtype=float)
    if delta is None:
        raise InvalidInputError("delta is required for raw arrays", field="delta")
    return values, np.arange(values.shape[-1]) * float(delta)


def f_hat_continuous(path, delta: float | None = None):
    """Trapezoid value of ``(1/T) int_0^T Z_t^2 dt``.

    ``path`` is a :class:`Path` or an array whose last axis holds the samples
    ``Z_{t_0}, ..., Z_{t_n}`` on a uniform grid of step ``delta``.
    """
    values, times = _values_and_times(path, delta)
    if values.shape[-1] < 2:
        raise InvalidInputError("need at least two samples", field="path")
    T = times[-1] - times[0]
    if not T > 0:
        raise InvalidInputError("degenerate grid, T = 0", field="path")
    return np.trapezoid(values**2, times, axis=-1) / T


def f_tilde_discrete(samples):
    """Mean of squares of the observations ``Z_{t_1}, ..., Z_{t_n}``."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] == 0:
        raise InvalidInputError("no observations", field="samples")
    return np.mean(samples**2, axis=-1)


def f_tilde_from_path(path, subsample: int = 1):
    """Discrete estimator from a path, dropping ``t_0`` and keeping every ``subsample``-th point."""
    values = path.values if isinstance(path, Path) else np.asarray(path, dtype=float)
    return f_tilde_discrete(values[..., subsample::subsample])


def standardize(estimate, f_Z: float, variance: float):
    if not variance > 0:
        raise InvalidInputError(f"must be > 0, got {variance}", field="variance")
    return (np.asarray(estimate) - f_Z) / math.sqrt(variance)


@dataclass
class EstimateRecord:
    f_hat: float
    f_tilde: float
    T: float
    n: int
    v_stat: float | None = None
    u_stat: float | None = None
    delta_stat: float | None = None
    f_Z: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def estimate_path(path: Path, f_Z: float | None = None) -> EstimateRecord:
    """Both estimators on one path plus ``V_T``, ``U_n`` and ``delta_n`` when ``f_Z`` is known."""
    f_hat = float(f_hat_continuous(path))
    f_tilde = float(f_tilde_from_path(path))
    T = path.grid.T
    rec = EstimateRecord(f_hat=f_hat, f_tilde=f_tilde, T=T, n=path.grid.n, f_Z=f_Z)
    if f_Z is not None:
        rec.v_stat = math.sqrt(T) * (f_hat - f_Z)
        rec.u_stat = math.sqrt(T) * (f_tilde - f_Z)
        rec.delta_stat = rec.u_stat - rec.v_stat
    return rec


# ---------------------------------------------------------------------------
# drift estimation through moment maps

def _hurst(hurst, lo=0.0, hi=1.0):
    hurst = float(hurst)
    if not lo < hurst < hi:
        raise InvalidInputError(f"must lie in ({lo:g}, {hi:g}), got {hurst}", field="hurst")
    return hurst


def g_inverse_fou1(theta: float, hurst: float) -> float:
    """Stationary variance ``theta^{-2H} H Gamma(2H)`` of the fOU of the first kind."""
    hurst = _hurst(hurst)
    if not theta > 0:
        raise InvalidInputError("must be > 0", field="theta")
    return math.exp(-2 * hurst * math.log(theta) + math.log(hurst) + gammaln(2 * hurst))


def drift_fou1(f, hurst: float):
    """``theta = (H Gamma(2H) / f)^{1/(2H)}``; vectorised over ``f``."""
    hurst = _hurst(hurst)
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise InvalidInputError("moment estimate must be positive", field="f")
    out = np.exp((math.log(hurst) + gammaln(2 * hurst) - np.log(f)) / (2 * hurst))
    return float(out) if out.ndim == 0 else out


def g_inverse_fou2(mu: float, hurst: float) -> float:
    """Stationary variance of the fOU of the second kind.

    ``(2H - 1) H^{2H} / mu * B(1 - H + mu H, 2H - 1)``, evaluated in logs.
    """
    hurst = _hurst(hurst, 0.5, 1.0)
    mu = float(mu)
    if not mu > 0:
        raise InvalidInputError(f"must be > 0, got {mu}", field="mu")
    log_val = (math.log(2 * hurst - 1) + 2 * hurst * math.log(hurst) - math.log(mu)
               + betaln(1 - hurst + mu * hurst, 2 * hurst - 1))
    return math.exp(log_val)


def _drift_fou2_scalar(f, hurst):
    if not f > 0:
        raise InvalidInputError("moment estimate must be positive", field="f")
    if f > g_inverse_fou2(MU_LOWER, hurst):
        raise OutOfRangeError(f"{f} exceeds the moment map at mu={MU_LOWER:g}", field="f")
    hi = 1.0
    while g_inverse_fou2(hi, hurst) >= f:
        hi *= 2.0
        if hi > 1e300:
            raise OutOfRangeError(f"no bracket found for f={f}", field="f")
    lo = max(MU_LOWER, hi / 2.0) if hi > 1.0 else MU_LOWER
    return brentq(lambda m: g_inverse_fou2(m, hurst) - f, lo, hi, xtol=MU_TOL, rtol=1e-15)


def drift_fou2(f, hurst: float):
    """Invert ``g_inverse_fou2`` in ``mu`` (decreasing map, bracketed root)."""
    hurst = _hurst(hurst, 0.5, 1.0)
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return _drift_fou2_scalar(float(f), hurst)
    return np.array([_drift_fou2_scalar(float(x), hurst) for x in f.ravel()]).reshape(f.shape)


@dataclass(frozen=True)
class DriftModel:
    """Moment map for one fOU family: ``f_X = g^{-1}(rate)`` and its inverse."""

    kind: str  # "FOU1" or "FOU2"
    rate: float
    hurst: float

    def __post_init__(self):
        if self.kind not in ("FOU1", "FOU2"):
            raise InvalidInputError(f"unknown kind {self.kind!r}", field="kind")
        self.f_X  # validates the parameters

    @property
    def f_X(self) -> float:
        if self.kind == "FOU1":
            return g_inverse_fou1(self.rate, self.hurst)
        return g_inverse_fou2(self.rate, self.hurst)

    def estimate(self, f):
        if self.kind == "FOU1":
            return drift_fou1(f, self.hurst)
        return drift_fou2(f, self.hurst)
