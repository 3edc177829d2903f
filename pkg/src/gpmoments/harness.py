"""Monte Carlo experiments confronting simulated estimators with the bounds."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path as FsPath
from typing import NamedTuple

import numpy as np
from scipy import stats
from scipy.special import ndtri

from gpmoments import bounds as bnd
from gpmoments.errors import GPMomentsError, InvalidInputError
from gpmoments.estimators import DriftModel, f_hat_continuous, f_tilde_discrete
from gpmoments.kernels import (
    FOU1Stationary,
    Kernel,
    kernel_from_dict,
    rho_eval,
    sigma_z_sq,
    var_VT,
)
from gpmoments.sampler import (
    GridSpec,
    circulant_factor,
    fbm_factor,
    fou1_batch,
    fou2_batch,
    fou2_factor,
    stationary_batch,
)

CHUNK = 256
REPORT_HEADER = (
    "Distances to N(0,1): d_K is the Kolmogorov distance, a lower bound for total "
    "variation; d_W1 is the Wasserstein-1 distance by quantile coupling. Bound columns "
    "use the absolute constant C=1."
)
STATISTICS = ("kolmogorov", "wasserstein1", "cumulants", "variance", "rate_fit",
              "negative_moments", "drift_error", "discretization_gap")


# ---------------------------------------------------------------------------
# distances and cumulants

def _sample(samples, minimum=1):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < minimum:
        raise InvalidInputError(f"need at least {minimum} values, got {x.size}", field="samples")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("samples must be finite", field="samples")
    return x


def kolmogorov_distance(samples) -> float:
    """``sup_x |F_m(x) - Phi(x)|`` for the empirical CDF of ``samples``."""
    return float(stats.kstest(_sample(samples), "norm").statistic)


def wasserstein1_distance(samples) -> float:
    """Quantile-coupling distance ``mean |x_(i) - Phi^{-1}((i - 1/2)/m)|``."""
    x = np.sort(_sample(samples))
    m = x.size
    return float(np.mean(np.abs(x - ndtri((np.arange(1, m + 1) - 0.5) / m))))


def _kstats(s1, s2, s3, s4, n):
    """k2, k3, k4 from power sums; broadcasts over arrays of sums."""
    k2 = (n * s2 - s1**2) / (n * (n - 1))
    k3 = (2 * s1**3 - 3 * n * s1 * s2 + n**2 * s3) / (n * (n - 1) * (n - 2))
    k4 = (-6 * s1**4 + 12 * n * s1**2 * s2 - 3 * n * (n - 1) * s2**2
          - 4 * n * (n + 1) * s1 * s3 + n**2 * (n + 1) * s4) / (n * (n - 1) * (n - 2) * (n - 3))
    return k2, k3, k4


class Cumulants(NamedTuple):
    k3: float
    k4: float
    se3: float
    se4: float


def empirical_cumulants(samples, standardize: bool = True) -> Cumulants:
    """k-statistics ``k3``, ``k4`` with jackknife standard errors.

    With ``standardize`` the statistics are ``k3 / k2^{3/2}`` and
    ``k4 / k2^2``, the cumulants of the sample rescaled to unit variance.
    Leave-one-out values come from downdated power sums, so the jackknife
    costs O(m).
    """
    x = _sample(samples, minimum=10)
    x = x - x.mean()  # k-statistics are shift invariant; centering limits cancellation
    n = x.size
    powers = [np.sum(x**r) for r in (1, 2, 3, 4)]
    k2, k3, k4 = _kstats(*powers, n)
    if not k2 > 0:
        raise InvalidInputError("sample has zero variance", field="samples")
    loo = _kstats(*(p - x**r for p, r in zip(powers, (1, 2, 3, 4))), n - 1)
    if standardize:
        full = (k3 / k2**1.5, k4 / k2**2)
        parts = (loo[1] / loo[0] ** 1.5, loo[2] / loo[0] ** 2)
    else:
        full = (k3, k4)
        parts = (loo[1], loo[2])
    se = [math.sqrt((n - 1) / n * np.sum((p - p.mean()) ** 2)) for p in parts]
    return Cumulants(float(full[0]), float(full[1]), se[0], se[1])


class RateFit(NamedTuple):
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    residual_sd: float


def loglog_rate_fit(scales, values, level: float = 0.95) -> RateFit:
    """OLS of ``log value`` on ``log scale`` with a t-interval for the slope."""
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    if scales.size < 3 or scales.size != values.size:
        raise InvalidInputError("need at least 3 (scale, value) pairs", field="pairs")
    if np.any(np.diff(scales) <= 0) or scales[0] <= 0:
        raise InvalidInputError("scales must be positive and increasing", field="scales")
    if np.any(~(values > 0)):
        raise InvalidInputError("values must be positive", field="values")
    lx, ly = np.log(scales), np.log(values)
    fit = stats.linregress(lx, ly)
    dof = lx.size - 2
    resid = ly - (fit.intercept + fit.slope * lx)
    resid_sd = math.sqrt(np.sum(resid**2) / dof) if dof > 0 else 0.0
    half = stats.t.ppf(0.5 + level / 2, dof) * fit.stderr if dof > 0 else math.inf
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.slope - half),
                   float(fit.slope + half), resid_sd)


# ---------------------------------------------------------------------------
# models

class StationaryModel:
    origin = "Stationary"

    def __init__(self, kernel: Kernel):
        self.kernel = kernel

    @property
    def f_target(self) -> float:
        return self.kernel.variance

    drift = None

    def prepare(self, grid: GridSpec):
        return circulant_factor(rho_eval(self.kernel, grid.times))

    def simulate(self, grid: GridSpec, master_seed: int, indices, factor=None) -> np.ndarray:
        return stationary_batch(self.kernel, grid, master_seed, indices, factor)

    def to_dict(self):
        return {"type": "stationary", "kernel": self.kernel.to_dict()}


class FOU1Model:
    """fOU of the first kind started at zero; bounds use its stationary kernel."""

    origin = "FOU1"

    def __init__(self, theta: float, hurst: float):
        self.drift = DriftModel("FOU1", theta, hurst)
        self.theta, self.hurst = float(theta), float(hurst)
        self.kernel = FOU1Stationary(theta, hurst)

    @property
    def f_target(self) -> float:
        return self.drift.f_X

    def prepare(self, grid):
        return fbm_factor(self.hurst, grid)

    def simulate(self, grid, master_seed, indices, factor=None):
        return fou1_batch(self.theta, self.hurst, grid, master_seed, indices, factor)

    def to_dict(self):
        return {"type": "FOU1", "theta": self.theta, "hurst": self.hurst}


class FOU2Model:
    origin = "FOU2"
    kernel = None

    def __init__(self, mu: float, hurst: float):
        self.drift = DriftModel("FOU2", mu, hurst)
        self.mu, self.hurst = float(mu), float(hurst)

    @property
    def f_target(self) -> float:
        return self.drift.f_X

    def prepare(self, grid):
        return fou2_factor(self.hurst, grid)

    def simulate(self, grid, master_seed, indices, factor=None):
        return fou2_batch(self.mu, self.hurst, grid, master_seed, indices, factor)

    def to_dict(self):
        return {"type": "FOU2", "mu": self.mu, "hurst": self.hurst}


def model_from_dict(spec: dict, base_dir=None):
    if not isinstance(spec, dict) or "type" not in spec:
        raise InvalidInputError("expected an object with a 'type' key", field="model")
    kind = spec["type"]
    try:
        if kind == "stationary":
            return StationaryModel(kernel_from_dict(spec["kernel"], base_dir))
        if kind == "FOU1":
            return FOU1Model(spec["theta"], spec["hurst"])
        if kind == "FOU2":
            return FOU2Model(spec["mu"], spec["hurst"])
    except KeyError as exc:
        raise InvalidInputError(f"missing parameter {exc.args[0]!r}", field="model") from None
    raise InvalidInputError(f"unknown model type {kind!r}", field="model.type")


def simulate_chunked(model, grid, master_seed, replications, workers, reducer, factor=None):
    """Apply ``reducer`` to fixed-size chunks of paths and stack the results.

    Chunks are defined by replication index, and the gather keeps chunk
    order, so the output is independent of ``workers``.
    """
    if factor is None:
        factor = model.prepare(grid)
    chunks = [range(lo, min(lo + CHUNK, replications)) for lo in range(0, replications, CHUNK)]

    def work(idx):
        return reducer(model.simulate(grid, master_seed, idx, factor))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return np.concatenate(parts, axis=-1)


# ---------------------------------------------------------------------------
# negative moments

@dataclass
class ProbeResult:
    p: float
    T: list
    mean_hat: list
    mean_tilde: list
    anomalies: list = field(default_factory=list)

    @property
    def ratio_hat(self) -> float:
        return max(self.mean_hat) / min(self.mean_hat)

    @property
    def ratio_tilde(self) -> float:
        return max(self.mean_tilde) / min(self.mean_tilde)


def _negative_means(f, p, T, label, anomalies):
    bad = np.flatnonzero(~(f > 0))
    anomalies.extend({"T": T, "estimator": label, "replication": int(i), "value": float(f[i])}
                     for i in bad)
    good = f[f > 0]
    return float(np.mean(good ** (-p))) if good.size else math.nan


def negative_moment_probe(model, p: float, T_grid, replications: int, delta: float,
                          master_seed: int = 0, workers: int = 1,
                          min_replications: int = 1000) -> ProbeResult:
    """MC estimates of ``E[f_hat^{-p}]`` and ``E[f_tilde^{-p}]`` across horizons.

    Nonpositive estimates are listed in ``anomalies`` and left out of the
    means; they never pass silently.
    """
    if p <= 0:
        raise InvalidInputError(f"must be > 0, got {p}", field="p")
    if replications < min_replications:
        raise InvalidInputError(f"need >= {min_replications}", field="replications")
    res = ProbeResult(p=p, T=[], mean_hat=[], mean_tilde=[])
    for T in T_grid:
        grid = GridSpec.horizon(T, delta)
        est = simulate_chunked(model, grid, master_seed, replications, workers,
                            lambda v: _both_estimates(v, grid.delta))
        res.T.append(float(T))
        res.mean_hat.append(_negative_means(est[0], p, T, "f_hat", res.anomalies))
        res.mean_tilde.append(_negative_means(est[1], p, T, "f_tilde", res.anomalies))
    return res


def _both_estimates(values, delta, subsample=None):
    rows = [f_hat_continuous(values, delta), f_tilde_discrete(values[:, 1:])]
    if subsample:
        rows.append(f_tilde_discrete(values[:, subsample::subsample]))
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class DesignPoint:
    n: int
    delta: float

    @property
    def T(self) -> float:
        return self.n * self.delta


def _design_from(spec) -> list[DesignPoint]:
    if isinstance(spec, dict):
        delta = spec.get("delta")
        if "T" in spec:
            spec = [{"T": T, "delta": delta} for T in spec["T"]]
        elif "n" in spec:
            spec = [{"n": n, "delta": delta} for n in spec["n"]]
        else:
            raise InvalidInputError("design needs 'T' or 'n'", field="design")
    if not isinstance(spec, list) or not spec:
        raise InvalidInputError("must be a nonempty list", field="design")
    out = []
    for i, item in enumerate(spec):
        where = f"design[{i}]"
        try:
            delta = float(item["delta"])
        except (KeyError, TypeError, ValueError):
            raise InvalidInputError("needs a numeric 'delta'", field=where) from None
        if not delta > 0:
            raise InvalidInputError("delta must be > 0", field=where)
        if "n" in item:
            n = int(item["n"])
        elif "T" in item:
            n = GridSpec.horizon(float(item["T"]), delta).n
        else:
            raise InvalidInputError("needs 'n' or 'T'", field=where)
        if n < 1:
            raise InvalidInputError("n must be >= 1", field=where)
        out.append(DesignPoint(n, delta))
    return out


@dataclass
class ExperimentConfig:
    model: object
    design: list
    replications: int
    master_seed: int
    statistics: tuple
    standardization: str = "var_vt"
    estimator: str = "continuous"
    workers: int = 1
    gap_subsample: int = 1
    negative_orders: tuple = (2,)
    name: str = "experiment"
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise InvalidInputError("config must be a JSON object", field="config")
        known = {"model", "design", "replications", "master_seed", "statistics",
                 "standardization", "estimator", "workers", "gap_subsample",
                 "negative_orders", "name"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidInputError(f"unknown keys {unknown}", field="config")
        for key in ("model", "design", "replications", "master_seed"):
            if key not in data:
                raise InvalidInputError("required", field=key)
        model = model_from_dict(data["model"], base_dir)
        reps = data["replications"]
        if not isinstance(reps, int) or reps < 100:
            raise InvalidInputError(f"must be an integer >= 100, got {reps!r}",
                                    field="replications")
        seed = data["master_seed"]
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise InvalidInputError("must be an unsigned 64-bit integer", field="master_seed")
        statistics = tuple(data.get("statistics", ("variance",)))
        bad = [s for s in statistics if s not in STATISTICS]
        if bad:
            raise InvalidInputError(f"unknown statistics {bad}", field="statistics")
        default_std = "var_vt" if model.kernel is not None else "mc"
        std = data.get("standardization", default_std)
        if std not in ("mc", "var_vt", "sigma_z"):
            raise InvalidInputError(f"unknown source {std!r}", field="standardization")
        if std != "mc" and model.kernel is None:
            raise InvalidInputError("model has no kernel; use 'mc'", field="standardization")
        estimator = data.get("estimator", "continuous")
        if estimator not in ("continuous", "discrete"):
            raise InvalidInputError(f"unknown estimator {estimator!r}", field="estimator")
        workers = data.get("workers", 1)
        if not isinstance(workers, int) or workers < 1:
            raise InvalidInputError("must be an integer >= 1", field="workers")
        sub = data.get("gap_subsample", 1)
        if not isinstance(sub, int) or sub < 1:
            raise InvalidInputError("must be an integer >= 1", field="gap_subsample")
        orders = tuple(data.get("negative_orders", (2,)))
        if any(not o > 0 for o in orders):
            raise InvalidInputError("orders must be > 0", field="negative_orders")
        if "drift_error" in statistics and model.drift is None:
            raise InvalidInputError("drift_error needs an fOU model", field="statistics")
        design = _design_from(data["design"])
        if "rate_fit" in statistics:
            Ts = [d.T for d in design]
            by_horizon = len(Ts) >= 3 and all(b > a for a, b in zip(Ts, Ts[1:]))
            by_mesh = ("discretization_gap" in statistics
                       and len({d.delta for d in design}) >= 3)
            if not (by_horizon or by_mesh):
                raise InvalidInputError(
                    "rate_fit needs >= 3 increasing horizons (or >= 3 meshes for the gap)",
                    field="design")
        return cls(model=model, design=design, replications=reps, master_seed=seed,
                   statistics=statistics, standardization=std, estimator=estimator,
                   workers=workers, gap_subsample=sub, negative_orders=orders,
                   name=str(data.get("name", "experiment")), raw=dict(data))

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        path = FsPath(path)
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}: {exc}", field="config") from None
        return cls.from_dict(data, base_dir=path.parent)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    columns: list[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list
    fits: dict

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def fits_csv(self) -> str:
        return rows_to_csv([{"quantity": k, **v._asdict()} for k, v in self.fits.items()])

    def sidecar(self) -> dict:
        return {
            "header": REPORT_HEADER,
            "config": self.config.raw,
            "master_seed": self.config.master_seed,
            "fits": {k: v._asdict() for k, v in self.fits.items()},
            "bound_columns": [{k: v for k, v in row.items() if k in _BOUND_KEYS}
                              for row in self.rows],
            "metadata": {"created": datetime.now(timezone.utc).isoformat()},
        }

    def write(self, out_dir) -> list[FsPath]:
        out_dir = FsPath(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = self.config.name
        files = [out_dir / f"{stem}.csv", out_dir / f"{stem}.json"]
        files[0].write_text(self.to_csv(), encoding="utf-8")
        files[1].write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
        if self.fits:
            files.append(out_dir / f"{stem}_fits.csv")
            files[2].write_text(self.fits_csv(), encoding="utf-8")
        return files


_BOUND_KEYS = ("T", "kappa3_bound", "kappa4_bound", "phi_T", "phi_dominant", "var_VT",
               "sigma_z_sq", "sigma_correction", "discrete_penalty", "rate_exponent",
               "delta_H_sq", "ou1_rate_bound")


def _bound_columns(model, point: DesignPoint, hurst_rate: bool) -> dict:
    cols: dict = {}
    kernel = model.kernel
    if kernel is not None:
        rep = bnd.bound_report(kernel, point.T, n=point.n, delta=point.delta)
        cols.update(kappa3_bound=rep.kappa3_bound, kappa4_bound=rep.kappa4_bound,
                    phi_T=rep.phi_T, phi_dominant=rep.phi_dominant, var_VT=rep.var_VT,
                    sigma_z_sq=rep.sigma_z_sq, sigma_correction=rep.sigma_correction,
                    discrete_penalty=rep.discrete_penalty, rate_exponent=rep.rate_exponent)
    if hurst_rate and isinstance(model, FOU1Model) and model.hurst < 0.75:
        cols["delta_H_sq"] = bnd.delta_H_sq(model.hurst, model.theta)
        cols["ou1_rate_bound"] = bnd.ou1_rate_bound(model.hurst, T=point.T)
    return cols


def _variance_se(x) -> float:
    m = x.size
    c = x - x.mean()
    return math.sqrt(max(np.mean(c**4) - np.mean(c**2) ** 2, 0.0) / m)


def _design_row(cfg: ExperimentConfig, point: DesignPoint) -> dict:
    model = cfg.model
    grid = GridSpec.uniform(point.n, point.delta)
    sub = cfg.gap_subsample if "discretization_gap" in cfg.statistics else None
    if sub and point.n % sub:
        raise InvalidInputError(f"n={point.n} not divisible by {sub}", field="gap_subsample")
    est = simulate_chunked(model, grid, cfg.master_seed, cfg.replications, cfg.workers,
                        lambda v: _both_estimates(v, grid.delta, sub))
    f_hat, f_tilde = est[0], est[1]
    T = point.T
    f_target = model.f_target
    row: dict = {"n": point.n, "delta": point.delta, "T": T, "replications": cfg.replications,
                 "f_target": f_target, "mean_f_hat": float(np.mean(f_hat)),
                 "se_f_hat": float(np.std(f_hat, ddof=1) / math.sqrt(f_hat.size)),
                 "mean_f_tilde": float(np.mean(f_tilde)),
                 "se_f_tilde": float(np.std(f_tilde, ddof=1) / math.sqrt(f_tilde.size))}
    f_used = f_hat if cfg.estimator == "continuous" else f_tilde
    stat = math.sqrt(T) * (f_used - f_target)
    row["statistic"] = "V_T" if cfg.estimator == "continuous" else "U_n"
    if cfg.standardization == "mc":
        scale_var = float(np.var(stat, ddof=1))
    elif cfg.standardization == "var_vt":
        scale_var = var_VT(model.kernel, T)
    else:
        scale_var = sigma_z_sq(model.kernel)
    row["standardization"] = cfg.standardization
    row["standardizing_variance"] = scale_var
    z = stat / math.sqrt(scale_var)

    s = cfg.statistics
    if "variance" in s:
        row["var_stat"] = float(np.var(stat, ddof=1))
        row["var_stat_se"] = _variance_se(stat)
    if "kolmogorov" in s:
        row["d_K"] = kolmogorov_distance(z)
    if "wasserstein1" in s:
        row["d_W1"] = wasserstein1_distance(z)
    if "cumulants" in s:
        cum = empirical_cumulants(z, standardize=cfg.standardization == "mc")
        row.update(k3=cum.k3, k3_se=cum.se3, k4=cum.k4, k4_se=cum.se4)
    if "negative_moments" in s:
        for p in cfg.negative_orders:
            anomalies: list = []
            row[f"neg_moment_hat_p{p:g}"] = _negative_means(f_hat, p, T, "f_hat", anomalies)
            row[f"neg_moment_tilde_p{p:g}"] = _negative_means(f_tilde, p, T, "f_tilde",
                                                              anomalies)
            row[f"neg_moment_anomalies_p{p:g}"] = len(anomalies)
    if "discretization_gap" in s:
        gap = (f_hat - est[2]) ** 2
        row["gap_delta"] = point.delta * sub
        row["gap_mean_sq"] = float(np.mean(gap))
        row["gap_mean_sq_se"] = float(np.std(gap, ddof=1) / math.sqrt(gap.size))
    if "drift_error" in s:
        rate = model.drift.rate
        for label, f in (("hat", f_hat), ("tilde", f_tilde)):
            theta = np.asarray(model.drift.estimate(f))
            err = theta - rate
            row[f"drift_{label}_mean"] = float(np.mean(theta))
            row[f"drift_{label}_se"] = float(np.std(theta, ddof=1) / math.sqrt(theta.size))
            row[f"drift_{label}_rmse"] = float(np.sqrt(np.mean(err**2)))
            row[f"drift_{label}_scaled_var"] = float(np.var(math.sqrt(T) * err, ddof=1))
            row[f"drift_{label}_scaled_var_se"] = _variance_se(math.sqrt(T) * err)
    row.update(_bound_columns(model, point, "drift_error" in s))
    return row


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Simulate every design point and assemble the report.

    Output depends only on the config and ``master_seed``; ``workers``
    changes wall time, never the numbers.
    """
    rows = []
    for i, point in enumerate(cfg.design):
        try:
            rows.append(_design_row(cfg, point))
        except GPMomentsError as exc:
            exc.args = (f"design point {i} (n={point.n}, delta={point.delta:g}): "
                        f"{exc.args[0] if exc.args else exc}",)
            raise
    fits = {}
    if "rate_fit" in cfg.statistics:
        Ts = [r["T"] for r in rows]
        if len(Ts) >= 3 and all(b > a for a, b in zip(Ts, Ts[1:])):
            for key in ("d_K", "d_W1"):
                if key in rows[0]:
                    fits[f"{key}_vs_T"] = loglog_rate_fit(Ts, [r[key] for r in rows])
        if "gap_mean_sq" in rows[0] and len({r["gap_delta"] for r in rows}) >= 3:
            order = np.argsort([r["gap_delta"] for r in rows], kind="stable")
            fits["gap_mean_sq_vs_delta"] = loglog_rate_fit(
                [rows[i]["gap_delta"] for i in order], [rows[i]["gap_mean_sq"] for i in order])
    return ExperimentReport(cfg, rows, fits)
