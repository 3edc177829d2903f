"""Exact Gaussian path simulation.

Each replication draws its normals from its own counter-based Philox
stream keyed by ``(master_seed, replication_index)``, so a replication's
path is unchanged by batching, chunking, or thread count.

The batch functions (``*_batch``) return arrays of shape
``(len(indices), n + 1)``; the single-path functions wrap them and return a
:class:`Path`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import lfilter

from gpmoments.errors import (
    InvalidInputError,
    NotEmbeddableError,
    NotPositiveDefiniteError,
)
from gpmoments.kernels import Kernel, rho_eval

EMBED_NEG_TOL = 1e-8
JITTER_STEPS = (0.0, 1e-12, 1e-10, 1e-8)
MAX_DENSE = 8192
MAX_FOU2_POINTS = 4097


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replication_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidInputError("must be a 64-bit unsigned value", field="master_seed")
        if int(self.replication_index) < 0:
            raise InvalidInputError("must be nonnegative", field="replication_index")


def rng_for(master_seed: int, replication_index: int) -> np.random.Generator:
    """Independent Philox stream for one replication."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication_index),))
    return np.random.Generator(np.random.Philox(seq))


def _normals(master_seed, indices, size):
    out = np.empty((len(indices), size))
    for row, idx in enumerate(indices):
        out[row] = rng_for(master_seed, idx).standard_normal(size)
    return out


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Observation grid ``t_0 = 0 < t_1 < ... < t_n``.

    Uniform grids carry ``delta``; nonuniform grids carry explicit ``times``
    (``n + 1`` values including the first one).
    """

    n: int
    delta: float | None = None
    times_: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidInputError(f"must be >= 1, got {self.n}", field="n")
        object.__setattr__(self, "n", int(self.n))
        if self.times_ is None:
            if self.delta is None or not float(self.delta) > 0 or not math.isfinite(self.delta):
                raise InvalidInputError(f"must be > 0, got {self.delta}", field="delta")
            object.__setattr__(self, "delta", float(self.delta))
        else:
            times = np.asarray(self.times_, dtype=float)
            if times.shape != (self.n + 1,):
                raise InvalidInputError("need n + 1 time values", field="times")
            if times[0] < 0 or np.any(np.diff(times) <= 0):
                raise InvalidInputError("must start >= 0 and increase strictly", field="times")
            times.setflags(write=False)
            object.__setattr__(self, "times_", times)

    @classmethod
    def uniform(cls, n: int, delta: float) -> "GridSpec":
        return cls(n=n, delta=delta)

    @classmethod
    def horizon(cls, T: float, delta: float) -> "GridSpec":
        """Uniform grid with ``n = round(T / delta)`` steps."""
        n = int(round(T / delta))
        if n < 1 or abs(n * delta - T) > 1e-9 * max(T, 1.0):
            raise InvalidInputError(f"T={T} is not a multiple of delta={delta}", field="T")
        return cls(n=n, delta=delta)

    @classmethod
    def from_times(cls, times) -> "GridSpec":
        times = np.asarray(times, dtype=float)
        return cls(n=times.size - 1, times_=times)

    @property
    def uniform_grid(self) -> bool:
        return self.times_ is None

    @property
    def times(self) -> np.ndarray:
        if self.times_ is not None:
            return self.times_
        return np.arange(self.n + 1) * self.delta

    @property
    def T(self) -> float:
        if self.times_ is not None:
            return float(self.times_[-1] - self.times_[0])
        return self.n * self.delta

    def require_uniform(self):
        if not self.uniform_grid:
            raise InvalidInputError("this sampler needs a uniform grid", field="grid")


class Origin(str, Enum):
    STATIONARY = "Stationary"
    FOU1 = "FOU1"
    FOU2 = "FOU2"
    FBM = "FBm"
    EXTERNAL = "External"


@dataclass(frozen=True, eq=False)
class Path:
    grid: GridSpec
    values: np.ndarray
    origin: Origin = Origin.EXTERNAL
    seed: SeedSpec | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n + 1,):
            raise InvalidInputError(
                f"expected {self.grid.n + 1} values, got {values.shape}", field="values")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("all samples must be finite", field="values")
        object.__setattr__(self, "values", values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value"])
            for t, x in zip(self.grid.times, self.values):
                w.writerow([format(float(t), ".17g"), format(float(x), ".17g")])

    @classmethod
    def from_csv(cls, path) -> "Path":
        times, values = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    times.append(float(row[0]))
                    values.append(float(row[1]))
                except (ValueError, IndexError):
                    if times:
                        raise InvalidInputError(f"malformed row {row!r} in {path}",
                                                field="csv") from None
        if len(times) < 2:
            raise InvalidInputError(f"{path} holds fewer than two samples", field="csv")
        times = np.asarray(times)
        steps = np.diff(times)
        if np.allclose(steps, steps[0], rtol=1e-9, atol=0) and times[0] == 0.0:
            grid = GridSpec(n=times.size - 1, delta=float(steps.mean()))
        else:
            grid = GridSpec.from_times(times)
        return cls(grid=grid, values=np.asarray(values))


# ---------------------------------------------------------------------------
# circulant embedding

def circulant_factor(acov) -> np.ndarray:
    """Square-root spectrum for the minimal circulant embedding of ``acov``.

    ``acov[k]`` is the covariance at lag ``k`` for ``k = 0..n``.  The returned
    array has length ``n + 1`` (the half spectrum of the size-``2n``
    circulant), already scaled so :func:`circulant_sample` can apply it.
    """
    acov = np.asarray(acov, dtype=float)
    n = acov.size - 1
    if n == 0:
        if acov[0] < 0:
            raise NotEmbeddableError("negative variance")
        return np.sqrt(acov)
    row = np.concatenate([acov, acov[-2:0:-1]])
    eig = np.fft.rfft(row).real
    top = eig.max()
    if eig.min() < -EMBED_NEG_TOL * top:
        raise NotEmbeddableError(
            f"circulant embedding has eigenvalue {eig.min():.3g} (max {top:.3g})",
            achieved=-eig.min() / top,
        )
    m = row.size
    eig = np.clip(eig, 0.0, None)
    scale = np.sqrt(eig / (2.0 * m))
    scale[0] = math.sqrt(eig[0] / m)
    scale[-1] = math.sqrt(eig[-1] / m)
    return scale


def circulant_sample(factor: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Map rows of ``2n`` standard normals to rows of ``n + 1`` Gaussian samples."""
    normals = np.atleast_2d(normals)
    half = factor.size
    if half == 1:
        return normals[:, :1] * factor[0]
    m = 2 * (half - 1)
    w = np.empty((normals.shape[0], half), dtype=complex)
    w.real[:, 0] = normals[:, 0]
    w.imag[:, 0] = 0.0
    w.real[:, -1] = normals[:, 1]
    w.imag[:, -1] = 0.0
    w.real[:, 1:-1] = normals[:, 2:half]
    w.imag[:, 1:-1] = normals[:, half:m]
    w *= factor
    return np.fft.irfft(w, n=m, axis=-1)[:, :half] * m


def circulant_embedding_sample(acov, seed: SeedSpec) -> np.ndarray:
    """Single exact sample of a stationary vector with lag covariances ``acov``."""
    factor = circulant_factor(acov)
    m = max(2 * (factor.size - 1), 1)
    z = _normals(seed.master_seed, [seed.replication_index], m)
    return circulant_sample(factor, z)[0]


def stationary_batch(kernel: Kernel, grid: GridSpec, master_seed: int, indices,
                     factor: np.ndarray | None = None) -> np.ndarray:
    grid.require_uniform()
    if factor is None:
        factor = circulant_factor(rho_eval(kernel, grid.times))
    m = max(2 * grid.n, 1)
    return circulant_sample(factor, _normals(master_seed, indices, m))


def sample_stationary_uniform(kernel: Kernel, grid: GridSpec, seed: SeedSpec) -> Path:
    """Exact sample of ``(Z_{t_0}, ..., Z_{t_n})`` by circulant embedding.

    Raises :class:`NotEmbeddableError` when the minimal embedding is not
    nonnegative definite; :func:`sample_gaussian_cholesky` is the fallback.
    """
    values = stationary_batch(kernel, grid, seed.master_seed, [seed.replication_index])[0]
    return Path(grid, values, Origin.STATIONARY, seed)


# ---------------------------------------------------------------------------
# dense factorization

def cholesky_factor(cov) -> np.ndarray:
    """Lower Cholesky factor with diagonal jitter escalation."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInputError("covariance must be a square matrix", field="cov")
    if cov.shape[0] > MAX_DENSE:
        raise InvalidInputError(f"size {cov.shape[0]} exceeds {MAX_DENSE}", field="cov")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-14 * np.abs(cov).max()):
        raise InvalidInputError("covariance must be symmetric", field="cov")
    scale = float(np.max(np.diag(cov)))
    eye = np.eye(cov.shape[0])
    for jitter in JITTER_STEPS:
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        f"covariance not factorizable with jitter up to {JITTER_STEPS[-1]:g}")


def cholesky_batch(factor: np.ndarray, master_seed: int, indices) -> np.ndarray:
    z = _normals(master_seed, indices, factor.shape[0])
    return z @ factor.T


def sample_gaussian_cholesky(cov, seed: SeedSpec) -> np.ndarray:
    """Exact ``N(0, cov)`` sample through a (jittered) Cholesky factor."""
    return cholesky_batch(cholesky_factor(cov), seed.master_seed, [seed.replication_index])[0]


# ---------------------------------------------------------------------------
# fractional Brownian motion and fOU paths

def fgn_autocovariance(hurst: float, delta: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    two_h = 2.0 * hurst
    return 0.5 * delta**two_h * (np.abs(k + 1) ** two_h - 2 * k**two_h + np.abs(k - 1) ** two_h)


def _check_hurst(hurst, lo=0.0, hi=1.0):
    hurst = float(hurst)
    if not lo < hurst < hi:
        raise InvalidInputError(f"must lie in ({lo:g}, {hi:g}), got {hurst}", field="hurst")
    return hurst


def fbm_factor(hurst: float, grid: GridSpec) -> np.ndarray:
    grid.require_uniform()
    hurst = _check_hurst(hurst)
    return circulant_factor(fgn_autocovariance(hurst, grid.delta, grid.n))


def fbm_batch(hurst: float, grid: GridSpec, master_seed: int, indices,
              factor: np.ndarray | None = None) -> np.ndarray:
    """fBm on the grid via Davies-Harte sampling of its increments."""
    if factor is None:
        factor = fbm_factor(hurst, grid)
    m = max(2 * (grid.n - 1), 1)
    increments = circulant_sample(factor, _normals(master_seed, indices, m))
    out = np.zeros((increments.shape[0], grid.n + 1))
    np.cumsum(increments, axis=1, out=out[:, 1:])
    return out


def sample_fbm(hurst: float, grid: GridSpec, seed: SeedSpec) -> Path:
    values = fbm_batch(hurst, grid, seed.master_seed, [seed.replication_index])[0]
    return Path(grid, values, Origin.FBM, seed)


def fou1_from_fbm(theta: float, bfm: np.ndarray, delta: float) -> np.ndarray:
    """``X_t = B_t - theta int_0^t exp(-theta (t-s)) B_s ds`` with trapezoid steps."""
    decay = math.exp(-theta * delta)
    # I_{i+1} = decay * I_i + delta/2 * (decay * B_i + B_{i+1}), I_0 = 0
    integral = lfilter([0.5 * delta, 0.5 * delta * decay], [1.0, -decay], bfm, axis=-1)
    return bfm - theta * integral


def fou1_batch(theta: float, hurst: float, grid: GridSpec, master_seed: int, indices,
               factor: np.ndarray | None = None) -> np.ndarray:
    theta = float(theta)
    if not theta > 0:
        raise InvalidInputError("must be > 0", field="theta")
    bfm = fbm_batch(hurst, grid, master_seed, indices, factor)
    return fou1_from_fbm(theta, bfm, grid.delta)


def build_fou1_path(theta: float, hurst: float, grid: GridSpec, seed: SeedSpec) -> Path:
    """fOU of the first kind started at ``X_0 = 0``, built pathwise from fBm."""
    values = fou1_batch(theta, hurst, grid, seed.master_seed, [seed.replication_index])[0]
    return Path(grid, values, Origin.FOU1, seed)


def lamperti_covariance(hurst: float, t) -> np.ndarray:
    """Covariance of the stationary process ``U_t = exp(-t) B^H_{H exp(t/H)}``.

    ``rho_U(t) = H^{2H}/2 * (e^{-t} + e^{t} [1 - (1 - e^{-t/H})^{2H}])``,
    written with ``expm1``/``log1p`` so large lags do not cancel.
    """
    t = np.abs(np.asarray(t, dtype=float))
    with np.errstate(divide="ignore"):
        gap = -np.expm1(2.0 * hurst * np.log1p(-np.exp(-t / hurst)))
    return 0.5 * hurst ** (2.0 * hurst) * (np.exp(-t) + np.exp(t) * gap)


def fou2_factor(hurst: float, grid: GridSpec) -> np.ndarray:
    grid.require_uniform()
    hurst = _check_hurst(hurst, 0.5, 1.0)
    if grid.n + 1 > MAX_FOU2_POINTS:
        raise InvalidInputError(
            f"fOU2 paths use dense factorization; n + 1 = {grid.n + 1} exceeds {MAX_FOU2_POINTS}",
            field="grid.n")
    t = grid.times
    cov = lamperti_covariance(hurst, t[:, None] - t[None, :])
    return cholesky_factor(cov)


def fou2_from_lamperti(mu: float, lamperti: np.ndarray, delta: float) -> np.ndarray:
    """Advance ``dS = -mu S dt + dY`` from samples of the Lamperti process.

    With ``B^H_{a_t} = e^{t} U_t`` the driver increment is exactly
    ``dY = dU + U dt``, so one step reads
    ``S_{i+1} = e^{-mu D} S_i + U_{i+1} - e^{-mu D} U_i
    + (1 - mu) int e^{-mu (t_{i+1} - s)} U_s ds``; the last integral is a
    trapezoid and vanishes when ``mu = 1``.
    """
    decay = math.exp(-mu * delta)
    u_prev, u_next = lamperti[..., :-1], lamperti[..., 1:]
    drive = u_next - decay * u_prev + (1.0 - mu) * 0.5 * delta * (decay * u_prev + u_next)
    out = np.zeros_like(lamperti)
    out[..., 1:] = lfilter([1.0], [1.0, -decay], drive, axis=-1)
    return out


def fou2_batch(mu: float, hurst: float, grid: GridSpec, master_seed: int, indices,
               factor: np.ndarray | None = None) -> np.ndarray:
    mu = float(mu)
    if not mu > 0:
        raise InvalidInputError("must be > 0", field="mu")
    if factor is None:
        factor = fou2_factor(hurst, grid)
    lamperti = cholesky_batch(factor, master_seed, indices)
    return fou2_from_lamperti(mu, lamperti, grid.delta)


def build_fou2_path(mu: float, hurst: float, grid: GridSpec, seed: SeedSpec) -> Path:
    """fOU of the second kind started at ``S_0 = 0``.

    fBm is sampled at the warped times ``a_t = H e^{t/H}`` through the
    rescaled values ``e^{-t} B^H_{a_t}`` (a stationary vector, factorized
    densely), which avoids the overflow of ``a_t`` itself.
    """
    values = fou2_batch(mu, hurst, grid, seed.master_seed, [seed.replication_index])[0]
    return Path(grid, values, Origin.FOU2, seed)
