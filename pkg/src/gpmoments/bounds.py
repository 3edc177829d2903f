"""Berry-Esseen bound terms as deterministic functions of the kernel and design.

Every bound in the underlying theory carries an unspecified absolute
constant ``C``.  All functions here evaluate with ``C = 1`` and report the
terms separately, so that callers compare rates and orderings rather than
absolute levels.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import NamedTuple

from scipy.special import gammaln

from gpmoments.errors import InvalidInputError
from gpmoments.kernels import Kernel, lp_integral, sigma_z_sq as _sigma_z_sq, var_VT as _var_VT


def _horizon(T):
    T = float(T)
    if not T > 0 or not math.isfinite(T):
        raise InvalidInputError(f"must be finite and > 0, got {T}", field="T")
    return T


def kappa3_bound(kernel: Kernel, T: float) -> float:
    """``8 / sqrt(T) * (int_{-T}^{T} |rho|^{3/2})^2``."""
    T = _horizon(T)
    return 8.0 / math.sqrt(T) * lp_integral(kernel, 1.5, T) ** 2


def kappa4_bound(kernel: Kernel, T: float) -> float:
    """``48 / T * (int_{-T}^{T} |rho|^{4/3})^3``."""
    T = _horizon(T)
    return 48.0 / T * lp_integral(kernel, 4.0 / 3.0, T) ** 3


class PhiT(NamedTuple):
    value: float
    kappa3: float
    kappa4: float

    @property
    def dominant(self) -> str:
        return "kappa3" if self.kappa3 >= self.kappa4 else "kappa4"


def phi_T(kernel: Kernel, T: float) -> PhiT:
    k3 = kappa3_bound(kernel, T)
    k4 = kappa4_bound(kernel, T)
    return PhiT(max(k3, k4), k3, k4)


def theorem_hat_bound(kernel: Kernel, T: float) -> float:
    """Total-variation bound for the exactly standardized continuous estimator."""
    return phi_T(kernel, T).value


def discrete_penalty(n: int, delta: float, alpha: float, power: float = 0.25) -> float:
    """``(n delta^{2 alpha + 1})^power``; 1/4 for the variance estimator, 1/2 for fOU drift."""
    if not delta > 0 or int(n) < 1:
        raise InvalidInputError("need n >= 1 and delta > 0", field="grid")
    if not 0 < alpha <= 1:
        raise InvalidInputError(f"must lie in (0, 1], got {alpha}", field="alpha")
    return (n * delta ** (2 * alpha + 1)) ** power


def variance_ratio_term(var_cont: float, var_disc: float) -> float:
    if not (var_cont > 0 and var_disc > 0):
        raise InvalidInputError("variances must be positive", field="variance")
    return 2.0 * abs(1.0 - var_cont / var_disc)


def theorem_tilde_bound(kernel: Kernel, T_n: float, n: int, delta_n: float, alpha: float,
                        var_cont: float, var_disc: float) -> float:
    """Discrete-observation bound ``phi_{T_n} + 2|1 - Var_c/Var_d| + (n D^{2a+1})^{1/4}``."""
    if abs(n * delta_n - T_n) > 1e-9 * max(T_n, 1.0):
        raise InvalidInputError(f"n * delta_n = {n * delta_n} differs from T_n = {T_n}",
                                field="T_n")
    return (phi_T(kernel, T_n).value + variance_ratio_term(var_cont, var_disc)
            + discrete_penalty(n, delta_n, alpha))


def sigma_correction(kernel: Kernel, T: float) -> float:
    """``2 |1 - sigma_Z^2 / E[V_T^2]|``, the price of normalizing by ``sigma_Z``."""
    T = _horizon(T)
    return 2.0 * abs(1.0 - _sigma_z_sq(kernel) / _var_VT(kernel, T))


def nonstat_penalty(T: float, gamma: float) -> float:
    if not gamma > 1:
        raise InvalidInputError(f"must be > 1, got {gamma}", field="gamma")
    return _horizon(T) ** ((1.0 - gamma) / 4.0)


def nonstat_bound(kernel: Kernel, T: float, gamma: float, n: int | None = None,
                  delta: float | None = None, alpha: float | None = None) -> float:
    """Bound for ``Z + Y`` with ``||Y_t|| = O(t^{-gamma})``.

    Continuous: ``phi_T + T^{(1-gamma)/4}``.  Passing ``n`` and ``delta``
    gives the discrete variant with ``T = n delta`` and the extra
    ``(n delta^{2 alpha + 1})^{1/4}`` term.
    """
    if n is None:
        return phi_T(kernel, T).value + nonstat_penalty(T, gamma)
    if delta is None:
        raise InvalidInputError("delta is required with n", field="delta")
    alpha = kernel.alpha if alpha is None else alpha
    T_n = n * delta
    return (phi_T(kernel, T_n).value + discrete_penalty(n, delta, alpha)
            + nonstat_penalty(T_n, gamma))


# ---------------------------------------------------------------------------
# rate tables

class Rate(NamedTuple):
    """Bound behaves like ``T^exponent * log(T)^log_power``."""

    exponent: float
    log_power: int


def rate_exponent(beta: float, which: str = "tv_hat") -> Rate:
    """Predicted decay of a bound for ``|rho(t)| = O(t^{2 beta - 2})``.

    ``which`` selects the bound:

    * ``tv_hat`` -- exactly standardized estimator
    * ``sigma_normalized`` -- estimator normalized by ``sigma_Z``
    * ``kappa3`` / ``kappa4`` -- the two cumulant bounds
    * ``variance_gap`` -- ``|E[V_T^2] - sigma_Z^2|``
    * ``ou1`` -- fOU drift estimator, with ``beta`` read as the Hurst index
    """
    beta = float(beta)
    if not 0.0 < beta < 0.75:
        raise InvalidInputError(f"must lie in (0, 3/4), got {beta}", field="beta")
    # exact decimal arithmetic so that e.g. beta = 0.7 gives -0.3, not -0.30000000000000071
    b = Fraction(repr(beta))

    def side(edge):
        return 0 if math.isclose(beta, edge, rel_tol=1e-12) else (-1 if beta < edge else 1)

    def linear(slope, offset):
        return Rate(float(slope * b - offset), 0)

    if which in ("tv_hat", "kappa3"):
        pos = side(2 / 3)
        return Rate(-0.5, 2) if pos == 0 else Rate(-0.5, 0) if pos < 0 else linear(6, Fraction(9, 2))
    if which == "kappa4":
        pos = side(5 / 8)
        return Rate(-1.0, 3) if pos == 0 else Rate(-1.0, 0) if pos < 0 else linear(8, 6)
    if which in ("sigma_normalized", "ou1"):
        return Rate(-0.5, 0) if side(5 / 8) <= 0 else linear(4, 3)
    if which == "variance_gap":
        pos = side(0.5)
        return Rate(-1.0, 1) if pos == 0 else Rate(-1.0, 0) if pos < 0 else linear(4, 3)
    raise InvalidInputError(f"unknown bound {which!r}", field="which")


def delta_H_sq(hurst: float, theta: float) -> float:
    """Asymptotic variance of ``sqrt(T) (theta_hat - theta)`` for the fOU of the first kind."""
    H = float(hurst)
    if not 0.0 < H < 0.75:
        raise InvalidInputError(f"must lie in (0, 3/4), got {H}", field="hurst")
    if not theta > 0:
        raise InvalidInputError("must be > 0", field="theta")
    if H < 0.5:
        ratio = math.exp(gammaln(2 - 4 * H) + gammaln(4 * H) - gammaln(2 * H) - gammaln(1 - 2 * H))
        core = (4 * H - 1) + 2 * ratio
    else:
        ratio = math.exp(gammaln(3 - 4 * H) + gammaln(4 * H - 1) - gammaln(2 - 2 * H)
                         - gammaln(2 * H))
        core = (4 * H - 1) * (1 + ratio)
    return theta / (2 * H) ** 2 * core


def ou1_rate_bound(hurst: float, T: float | None = None, n: int | None = None,
                   delta: float | None = None) -> float:
    """Wasserstein rate for the fOU drift estimator (``C = 1``).

    Continuous observation: pass ``T``.  Discrete: pass ``n`` and ``delta``;
    the horizon becomes ``n delta`` and ``(n delta^{2H+1})^{1/2}`` is added.
    """
    rate = rate_exponent(hurst, "ou1")
    if n is not None:
        if delta is None:
            raise InvalidInputError("delta is required with n", field="delta")
        horizon = _horizon(n * delta)
        return horizon**rate.exponent + discrete_penalty(n, delta, hurst, power=0.5)
    if T is None:
        raise InvalidInputError("pass T or (n, delta)", field="T")
    return _horizon(T) ** rate.exponent


# ---------------------------------------------------------------------------
# report

@dataclass
class BoundReport:
    kernel: str
    T: float
    kappa3_bound: float
    kappa4_bound: float
    phi_T: float
    phi_dominant: str
    var_VT: float
    sigma_z_sq: float
    sigma_correction: float
    n: int | None = None
    delta: float | None = None
    discrete_penalty: float | None = None
    variance_ratio_term: float | None = None
    gamma: float | None = None
    nonstat_penalty: float | None = None
    rate_exponent: float | None = None
    rate_log_power: int | None = None
    constant_convention: str = "C=1"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def bound_report(kernel: Kernel, T: float, n: int | None = None, delta: float | None = None,
                 gamma: float | None = None, var_cont: float | None = None,
                 var_disc: float | None = None) -> BoundReport:
    """Evaluate every bound term for one ``(kernel, design)`` pair."""
    T = _horizon(T)
    phi = phi_T(kernel, T)
    vt = _var_VT(kernel, T)
    sz = _sigma_z_sq(kernel)
    rep = BoundReport(
        kernel=kernel.label(), T=T, kappa3_bound=phi.kappa3, kappa4_bound=phi.kappa4,
        phi_T=phi.value, phi_dominant=phi.dominant, var_VT=vt, sigma_z_sq=sz,
        sigma_correction=2.0 * abs(1.0 - sz / vt), n=n, delta=delta,
    )
    if n is not None and delta is not None:
        rep.discrete_penalty = discrete_penalty(n, delta, kernel.alpha)
    if var_cont is not None and var_disc is not None:
        rep.variance_ratio_term = variance_ratio_term(var_cont, var_disc)
    if gamma is not None:
        rep.gamma = gamma
        rep.nonstat_penalty = nonstat_penalty(T, gamma)
    if kernel.beta is not None and 0 < kernel.beta < 0.75:
        rate = rate_exponent(kernel.beta, "tv_hat")
    else:
        rate = Rate(-0.5, 0)  # exponential decay: first branch
    rep.rate_exponent, rep.rate_log_power = rate
    return rep
