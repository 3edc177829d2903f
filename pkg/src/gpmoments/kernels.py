"""Stationary covariance kernels and the deterministic integrals of them.

Every kernel is an immutable object that evaluates the covariance
``rho(t) = E[Z_0 Z_t]`` of a centred stationary Gaussian process.  The
integral helpers (``lp_integral``, ``sigma_z_sq``, ``var_VT``) feed the
Berry-Esseen bound evaluation in :mod:`gpmoments.bounds`.

Supported families
------------------
ExpOU(theta, v)
    ``v * exp(-theta |t|)``; Hoelder exponent 1/2, exponential decay.
GenCauchy(beta, v)
    ``v * (1 + t^2)^(beta - 1)``; positive definite for ``beta < 1`` and
    decays like ``t^(2 beta - 2)``.  Restricted to ``0 < beta < 3/4``.
FOU1Stationary(theta, hurst)
    Stationary fractional Ornstein-Uhlenbeck covariance, obtained from its
    spectral density ``c_H |l|^(1-2H) / (theta^2 + l^2)``.
Tabulated(lags, values)
    Piecewise-linear interpolation of a covariance table, zero beyond the
    last lag.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from gpmoments.errors import InvalidInputError, NumericFailureError

REL_TOL = 1e-9
ABS_TOL = 1e-14
# QAWF (Fourier tail) cannot honour the 1e-14 absolute floor per cycle.
SPECTRAL_ABS_TOL = 1e-12
# Beyond theta*t = 60 the fOU covariance uses its large-lag expansion.
FOU1_SERIES_START = 60.0
FOU1_SERIES_TERMS = 6
FOU1_SMALL_LAG = 1e-12

__all__ = [
    "Kernel",
    "ExpOU",
    "GenCauchy",
    "FOU1Stationary",
    "Tabulated",
    "rho_eval",
    "lp_integral",
    "sigma_z_sq",
    "var_VT",
    "kernel_from_json",
    "kernel_from_dict",
    "load_tabulated_csv",
]


def _positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise InvalidInputError(f"must be a finite positive number, got {value!r}", field=name)
    return value


class Kernel:
    """Base class; subclasses implement :meth:`_evaluate` on ``|t|``."""

    family: str = ""
    #: Hoelder exponent of the sample paths (mean-square increment ~ |t|^(2 alpha)).
    alpha: float = 0.5
    #: Polynomial decay exponent, ``None`` when the kernel decays exponentially.
    beta: float | None = None

    def __call__(self, t):
        return rho_eval(self, t)

    @property
    def variance(self) -> float:
        return float(self._evaluate(np.zeros(1))[0])

    @property
    def scale(self) -> float:
        """Characteristic correlation time used to place quadrature panels."""
        return 1.0

    @property
    def finite_support(self) -> float:
        return math.inf

    def scaled(self, factor: float) -> "Kernel":
        """Kernel of ``sqrt(factor) * Z``, i.e. ``factor * rho``."""
        return _Scaled(self, _positive("factor", factor))

    def _evaluate(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def label(self) -> str:
        params = ",".join(f"{k}={v:g}" for k, v in self.to_dict()["params"].items()
                          if isinstance(v, (int, float)))
        return f"{self.family}({params})"


@dataclass(frozen=True, eq=True)
class ExpOU(Kernel):
    theta: float = 1.0
    v: float = 1.0
    family = "ExpOU"
    alpha = 0.5
    beta = None

    def __post_init__(self):
        object.__setattr__(self, "theta", _positive("theta", self.theta))
        object.__setattr__(self, "v", _positive("v", self.v))

    @property
    def scale(self):
        return 1.0 / self.theta

    def _evaluate(self, t):
        return self.v * np.exp(-self.theta * t)

    def to_dict(self):
        return {"family": self.family, "params": {"theta": self.theta, "v": self.v}}


@dataclass(frozen=True, eq=True)
class GenCauchy(Kernel):
    beta: float = 0.5
    v: float = 1.0
    family = "GenCauchy"
    alpha = 1.0

    def __post_init__(self):
        b = float(self.beta)
        if not 0.0 < b < 0.75:
            raise InvalidInputError(f"must lie in (0, 3/4), got {b!r}", field="beta")
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "v", _positive("v", self.v))

    def _evaluate(self, t):
        return self.v * np.power(1.0 + t * t, self.beta - 1.0)

    def to_dict(self):
        return {"family": self.family, "params": {"beta": self.beta, "v": self.v}}


def _fou1_rho_series(theta, hurst, t):
    # rho(t) ~ 1/2 sum_n theta^(-2n) (2H)(2H-1)...(2H-2n+1) t^(2H-2n)
    total, coef = 0.0, 1.0
    for n in range(1, FOU1_SERIES_TERMS + 1):
        coef *= (2 * hurst - 2 * n + 2) * (2 * hurst - 2 * n + 1)
        total += 0.5 * coef * theta ** (-2 * n) * t ** (2 * hurst - 2 * n)
    return total


@lru_cache(maxsize=65536)
def _fou1_rho(theta: float, hurst: float, t: float) -> float:
    # rho(t) = 2 c_H int_0^inf l^(1-2H) cos(l t) / (theta^2 + l^2) dl
    log_c = gammaln(2 * hurst + 1) + math.log(math.sin(math.pi * hurst)) - math.log(2 * math.pi)
    rho0 = math.exp(-2 * hurst * math.log(theta) + math.log(hurst) + gammaln(2 * hurst))
    if t == 0.0:
        return rho0
    if theta * t < FOU1_SMALL_LAG:
        # increments behave like fBm: rho(0) - rho(t) = t^(2H)/2 + O(t^(1+H))
        return rho0 - 0.5 * t ** (2 * hurst)
    if theta * t >= FOU1_SERIES_START:
        return _fou1_rho_series(theta, hurst, t)
    a, b = min(theta, 1.0 / t), 1.0 / t
    # [0, a]: algebraic weight at the origin; [a, b]: cos weight on decade panels;
    # [b, inf): Fourier tail starting one oscillation scale out
    edges = np.geomspace(a, b, max(2, math.ceil(math.log10(b / a)) + 1)) if b > a else [a]
    pieces = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        pieces.append(integrate.quad(
            lambda x: math.cos(x * t) / (theta * theta + x * x), 0.0, a,
            weight="alg", wvar=(1.0 - 2.0 * hurst, 0.0),
            epsabs=ABS_TOL, epsrel=REL_TOL, limit=400,
        ))
        density = lambda x: x ** (1.0 - 2.0 * hurst) / (theta * theta + x * x)  # noqa: E731
        for lo, hi in zip(edges[:-1], edges[1:]):
            pieces.append(integrate.quad(density, lo, hi, weight="cos", wvar=t,
                                         epsabs=ABS_TOL, epsrel=REL_TOL, limit=400))
        pieces.append(integrate.quad(density, b, np.inf, weight="cos", wvar=t,
                                     epsabs=SPECTRAL_ABS_TOL, limlst=200, limit=400))
    scale = 2.0 * math.exp(log_c)
    value = scale * math.fsum(v for v, _ in pieces)
    err = scale * sum(e for _, e in pieces)
    if not math.isfinite(value) or err > max(REL_TOL * abs(value), SPECTRAL_ABS_TOL):
        raise NumericFailureError(
            f"spectral quadrature for FOU1Stationary(theta={theta}, H={hurst}) at t={t}",
            achieved=err,
        )
    return value


@dataclass(frozen=True, eq=True)
class FOU1Stationary(Kernel):
    """Covariance of ``Z_t = int_{-inf}^t exp(-theta (t-s)) dB^H_s``."""

    theta: float = 1.0
    hurst: float = 0.5
    family = "FOU1Stationary"

    def __post_init__(self):
        object.__setattr__(self, "theta", _positive("theta", self.theta))
        h = float(self.hurst)
        if not 0.0 < h < 1.0:
            raise InvalidInputError(f"must lie in (0, 1), got {h!r}", field="hurst")
        object.__setattr__(self, "hurst", h)

    @property
    def alpha(self):
        return self.hurst

    @property
    def beta(self):
        return None if self.hurst == 0.5 else self.hurst

    @property
    def scale(self):
        return 1.0 / self.theta

    def _evaluate(self, t):
        flat = np.asarray(t, dtype=float).ravel()
        out = np.fromiter((_fou1_rho(self.theta, self.hurst, float(x)) for x in flat),
                          dtype=float, count=flat.size)
        return out.reshape(np.shape(t))

    def to_dict(self):
        return {"family": self.family, "params": {"theta": self.theta, "hurst": self.hurst}}


@dataclass(frozen=True, eq=False)
class Tabulated(Kernel):
    """Linear interpolation of ``(lag, covariance)`` pairs; zero past the last lag."""

    lags: np.ndarray = field(default_factory=lambda: np.zeros(1))
    values: np.ndarray = field(default_factory=lambda: np.ones(1))
    alpha: float = 0.5
    beta: float | None = None
    family = "Tabulated"

    def __post_init__(self):
        lags = np.array(self.lags, dtype=float)
        values = np.array(self.values, dtype=float)
        if lags.ndim != 1 or lags.shape != values.shape or lags.size < 2:
            raise InvalidInputError("lags and values must be 1-D of equal length >= 2", field="lags")
        if lags[0] != 0.0 or np.any(np.diff(lags) <= 0):
            raise InvalidInputError("must start at 0 and be strictly increasing", field="lags")
        if not np.all(np.isfinite(values)) or values[0] <= 0:
            raise InvalidInputError("covariance at lag 0 must be positive", field="values")
        if np.any(np.abs(values) > values[0] * (1 + 1e-12)):
            raise InvalidInputError("|rho(t)| must not exceed rho(0)", field="values")
        if not 0.0 < float(self.alpha) <= 1.0:
            raise InvalidInputError("must lie in (0, 1]", field="alpha")
        lags.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def scale(self):
        return float(self.lags[1])

    @property
    def finite_support(self):
        return float(self.lags[-1])

    def _evaluate(self, t):
        return np.interp(t, self.lags, self.values, right=0.0)

    def to_dict(self):
        return {
            "family": self.family,
            "params": {"lags": self.lags.tolist(), "values": self.values.tolist(),
                       "alpha": self.alpha, "beta": self.beta},
        }


@dataclass(frozen=True, eq=True)
class _Scaled(Kernel):
    base: Kernel = None
    factor: float = 1.0

    @property
    def family(self):
        return self.base.family

    @property
    def alpha(self):
        return self.base.alpha

    @property
    def beta(self):
        return self.base.beta

    @property
    def scale(self):
        return self.base.scale

    @property
    def finite_support(self):
        return self.base.finite_support

    def _evaluate(self, t):
        return self.factor * self.base._evaluate(t)

    def to_dict(self):
        d = self.base.to_dict()
        d["params"] = dict(d["params"], scale_factor=self.factor)
        return d


def rho_eval(kernel: Kernel, t):
    """Evaluate ``rho(|t|)``; accepts scalars or arrays."""
    arr = np.abs(np.asarray(t, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("time values must be finite", field="t")
    out = kernel._evaluate(arr)
    if np.ndim(t) == 0:
        return float(np.asarray(out).reshape(()))
    return out


def _integrate(func, upper: float, kernel: Kernel) -> float:
    """Integrate ``func`` over ``[0, upper]`` on geometric panels.

    Panels start at the kernel's correlation time and double, so peaked
    integrands near the origin and long algebraic tails are both resolved.
    An infinite upper limit uses QUADPACK's tail transformation on the last
    panel.
    """
    if upper == 0.0:
        return 0.0
    support = kernel.finite_support
    limit = min(upper, support)
    edges = [0.0]
    step = kernel.scale
    while edges[-1] < limit and (math.isfinite(limit) or edges[-1] < 64 * kernel.scale):
        edges.append(min(edges[-1] + step, limit))
        step *= 2.0
    if isinstance(kernel, Tabulated):
        inner = kernel.lags[(kernel.lags > 0) & (kernel.lags < limit)]
    else:
        inner = None
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            points = None
            if inner is not None:
                pts = inner[(inner > a) & (inner < b)]
                points = pts[:100].tolist() if pts.size else None
            val, e = integrate.quad(func, a, b, epsabs=ABS_TOL, epsrel=REL_TOL * 0.1,
                                    limit=500, points=points)
            total += val
            err += e
        if not math.isfinite(limit):
            val, e = integrate.quad(func, edges[-1], np.inf, epsabs=ABS_TOL,
                                    epsrel=REL_TOL * 0.1, limit=1000)
            total += val
            err += e
    if not math.isfinite(total) or err > max(REL_TOL * abs(total), ABS_TOL):
        raise NumericFailureError("quadrature did not converge", achieved=err)
    return total


def _scalar_rho(kernel):
    return lambda u: float(kernel._evaluate(np.array([abs(u)]))[0])


def _check_square_integrable(kernel):
    beta = kernel.beta
    if beta is not None and beta >= 0.75 and math.isinf(kernel.finite_support):
        raise NumericFailureError(f"integral of rho^2 diverges for decay exponent beta={beta}")


def lp_integral(kernel: Kernel, p: float, T: float) -> float:
    """Return ``int_{-T}^{T} |rho(t)|^p dt`` (``T`` may be ``inf``)."""
    p = float(p)
    if p < 1:
        raise InvalidInputError(f"must be >= 1, got {p}", field="p")
    T = float(T)
    if T < 0 or math.isnan(T):
        raise InvalidInputError(f"must be >= 0, got {T}", field="T")
    if math.isinf(T) and kernel.beta is not None and (2 - 2 * kernel.beta) * p <= 1:
        raise NumericFailureError(f"int |rho|^{p} diverges for beta={kernel.beta}")
    r = _scalar_rho(kernel)
    return 2.0 * _integrate(lambda u: abs(r(u)) ** p, T, kernel)


def sigma_z_sq(kernel: Kernel) -> float:
    """Asymptotic variance ``4 int_0^inf rho(u)^2 du`` of ``V_T``."""
    _check_square_integrable(kernel)
    r = _scalar_rho(kernel)
    return 4.0 * _integrate(lambda u: r(u) ** 2, math.inf, kernel)


def var_VT(kernel: Kernel, T: float) -> float:
    """Exact ``E[V_T^2] = 4 int_0^T (1 - u/T) rho(u)^2 du``."""
    T = float(T)
    if not T > 0 or not math.isfinite(T):
        raise InvalidInputError(f"must be finite and > 0, got {T}", field="T")
    r = _scalar_rho(kernel)
    return 4.0 * _integrate(lambda u: (1.0 - u / T) * r(u) ** 2, T, kernel)


_FAMILIES = {"ExpOU": ExpOU, "GenCauchy": GenCauchy, "FOU1Stationary": FOU1Stationary}


def kernel_from_dict(spec: dict, base_dir: Path | None = None) -> Kernel:
    """Build a kernel from ``{"family": ..., "params": {...}}``."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise InvalidInputError("expected an object with a 'family' key", field="kernel")
    family = spec["family"]
    params = dict(spec.get("params", {}))
    if family == "Tabulated":
        if "csv" in params:
            path = Path(params.pop("csv"))
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_tabulated_csv(path, **params)
        try:
            return Tabulated(np.asarray(params["lags"]), np.asarray(params["values"]),
                             alpha=params.get("alpha", 0.5), beta=params.get("beta"))
        except KeyError as exc:
            raise InvalidInputError(f"missing parameter {exc}", field="kernel.params") from None
    if family not in _FAMILIES:
        raise InvalidInputError(f"unknown family {family!r}", field="kernel.family")
    scale = params.pop("scale_factor", None)
    try:
        kernel = _FAMILIES[family](**params)
    except TypeError as exc:
        raise InvalidInputError(str(exc), field="kernel.params") from None
    return kernel.scaled(scale) if scale is not None else kernel


def kernel_from_json(text: str) -> Kernel:
    return kernel_from_dict(json.loads(text))


def load_tabulated_csv(path, alpha: float = 0.5, beta: float | None = None) -> Tabulated:
    """Read a two-column ``lag,covariance`` CSV (an optional header row is skipped)."""
    lags, values = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                lag, value = float(row[0]), float(row[1])
            except ValueError:
                if not lags:
                    continue  # header
                raise InvalidInputError(f"malformed row {row!r} in {path}", field="csv") from None
            lags.append(lag)
            values.append(value)
    return Tabulated(np.array(lags), np.array(values), alpha=alpha, beta=beta)
