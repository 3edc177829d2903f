import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gpmoments.bounds import kappa3_bound, kappa4_bound
from gpmoments.errors import InvalidInputError
from gpmoments.harness import (
    REPORT_HEADER,
    ExperimentConfig,
    StationaryModel,
    empirical_cumulants,
    kolmogorov_distance,
    loglog_rate_fit,
    negative_moment_probe,
    run_experiment,
    wasserstein1_distance,
)
from gpmoments.kernels import ExpOU, var_VT


def _cfg(**over):
    base = {"model": {"type": "stationary", "kernel": {"family": "ExpOU",
                                                       "params": {"theta": 1, "v": 1}}},
            "design": [{"T": 20, "delta": 0.1}], "replications": 400, "master_seed": 7,
            "statistics": ["variance"]}
    base.update(over)
    return base


def test_distances_on_normal_quantiles():
    m = 2000
    x = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    assert kolmogorov_distance(x) == pytest.approx(0.5 / m, abs=1e-12)
    assert wasserstein1_distance(x) < 1e-12
    assert wasserstein1_distance(x + 0.3) == pytest.approx(0.3, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=60), st.randoms())
def test_kolmogorov_bounded_and_order_invariant(xs, rnd):
    d = kolmogorov_distance(xs)
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    assert 0 <= d <= 1
    assert kolmogorov_distance(shuffled) == d


def test_cumulants_gaussian_and_chi_square():
    rng = np.random.default_rng(3)
    z = rng.standard_normal(100_000)
    c = empirical_cumulants(z)
    assert abs(c.k3) < 3 * c.se3 and abs(c.k4) < 3 * c.se4
    chi = rng.standard_normal(200_000) ** 2 - 1
    raw = empirical_cumulants(chi, standardize=False)
    assert abs(raw.k3 - 8) < 3 * raw.se3
    std = empirical_cumulants(chi)
    assert abs(std.k3 - 8 / 2**1.5) < 3 * std.se3


def test_kstats_match_scipy():
    x = np.random.default_rng(4).gamma(2.0, size=500)
    c = empirical_cumulants(x, standardize=False)
    assert c.k3 == pytest.approx(stats.kstat(x, 3), rel=1e-9)
    assert c.k4 == pytest.approx(stats.kstat(x, 4), rel=1e-9)


def test_jackknife_matches_naive_loop():
    x = np.random.default_rng(5).exponential(size=40)
    c = empirical_cumulants(x, standardize=False)
    loo = np.array([stats.kstat(np.delete(x, i), 3) for i in range(x.size)])
    naive = math.sqrt((x.size - 1) / x.size * np.sum((loo - loo.mean()) ** 2))
    assert c.se3 == pytest.approx(naive, rel=1e-8)


def test_cumulants_degenerate():
    with pytest.raises(InvalidInputError):
        empirical_cumulants(np.full(50, 2.0))
    with pytest.raises(InvalidInputError):
        empirical_cumulants([1.0, 2.0])


def test_rate_fit_examples():
    s = np.array([10.0, 100.0, 1000.0])
    exact = loglog_rate_fit(s, s**-0.5)
    assert exact.slope == pytest.approx(-0.5) and exact.residual_sd < 1e-12
    assert loglog_rate_fit(s, 3 * s**-0.3).slope == pytest.approx(-0.3)
    noisy = loglog_rate_fit(s * [1, 1, 1], s**-0.5 * [1.1, 0.9, 1.05])
    assert noisy.ci_low < noisy.slope < noisy.ci_high
    with pytest.raises(InvalidInputError):
        loglog_rate_fit(s, [1.0, 0.0, 1.0])
    with pytest.raises(InvalidInputError):
        loglog_rate_fit(s[:2], [1.0, 1.0])


class _ConstantModel:
    kernel = None
    drift = None

    def __init__(self, c):
        self.c = c

    def prepare(self, grid):
        return None

    def simulate(self, grid, master_seed, indices, factor=None):
        return np.full((len(indices), grid.n + 1), self.c)


def test_probe_constant_paths_exact():
    res = negative_moment_probe(_ConstantModel(2.0), 1, [5, 10], 1000, 0.5)
    assert res.mean_hat == [0.25, 0.25] and res.mean_tilde == [0.25, 0.25]
    assert res.ratio_hat == 1 and not res.anomalies


def test_probe_reports_anomalies():
    res = negative_moment_probe(_ConstantModel(0.0), 2, [5], 1000, 0.5)
    assert len(res.anomalies) == 2000
    assert math.isnan(res.mean_hat[0])


def test_probe_validation():
    with pytest.raises(InvalidInputError):
        negative_moment_probe(_ConstantModel(1.0), 0, [5], 1000, 0.5)
    with pytest.raises(InvalidInputError, match="replications"):
        negative_moment_probe(_ConstantModel(1.0), 1, [5], 10, 0.5)


def test_probe_expou_near_one():
    res = negative_moment_probe(StationaryModel(ExpOU(1, 1)), 1, [200], 1000, 0.1,
                                master_seed=3)
    assert res.mean_hat[0] == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("patch,field", [
    ({"replications": 50}, "replications"),
    ({"master_seed": -1}, "master_seed"),
    ({"statistics": ["entropy"]}, "statistics"),
    ({"standardization": "bootstrap"}, "standardization"),
    ({"workers": 0}, "workers"),
    ({"extra": 1}, "config"),
    ({"design": []}, "design"),
    ({"design": [{"T": 10}]}, "design[0]"),
    ({"statistics": ["rate_fit"]}, "design"),
    ({"statistics": ["drift_error"]}, "statistics"),
    ({"model": {"type": "FOU3"}}, "model.type"),
    ({"model": {"type": "FOU2", "mu": 1, "hurst": 0.6}, "standardization": "var_vt"},
     "standardization"),
])
def test_config_validation_names_field(patch, field):
    with pytest.raises(InvalidInputError) as info:
        ExperimentConfig.from_dict(_cfg(**patch))
    assert info.value.field == field


def test_design_shorthand():
    cfg = ExperimentConfig.from_dict(_cfg(design={"delta": 0.1, "T": [10, 20, 40]},
                                          statistics=["kolmogorov", "rate_fit"]))
    assert [p.n for p in cfg.design] == [100, 200, 400]


def test_variance_row_within_3se():
    rep = run_experiment(ExperimentConfig.from_dict(_cfg(replications=2000)))
    (row,) = rep.rows
    assert row["statistic"] == "V_T"
    assert abs(row["var_stat"] - var_VT(ExpOU(1, 1), 20)) < 3 * row["var_stat_se"]
    assert row["phi_T"] == max(row["kappa3_bound"], row["kappa4_bound"])


def test_discrete_variance_matches_var_vt():
    # small mesh: the discretisation correction is below MC resolution
    cfg = _cfg(replications=2000, estimator="discrete", design=[{"T": 20, "delta": 0.02}])
    (row,) = run_experiment(ExperimentConfig.from_dict(cfg)).rows
    assert row["statistic"] == "U_n"
    assert abs(row["var_stat"] - var_VT(ExpOU(1, 1), 20)) < 3 * row["var_stat_se"]


def test_report_deterministic_across_workers(tmp_path):
    stats_ = ["variance", "kolmogorov", "wasserstein1", "cumulants", "negative_moments",
              "discretization_gap"]
    a = run_experiment(ExperimentConfig.from_dict(_cfg(statistics=stats_, replications=600)))
    b = run_experiment(ExperimentConfig.from_dict(_cfg(statistics=stats_, replications=600,
                                                       workers=4)))
    assert a.to_csv() == b.to_csv()
    files = a.write(tmp_path)
    assert [f.name for f in files] == ["experiment.csv", "experiment.json"]
    side = json.loads(files[1].read_text())
    assert side["header"] == REPORT_HEADER and side["master_seed"] == 7
    assert "created" in side["metadata"]


def test_seed_changes_output():
    a = run_experiment(ExperimentConfig.from_dict(_cfg()))
    b = run_experiment(ExperimentConfig.from_dict(_cfg(master_seed=8)))
    assert a.to_csv() != b.to_csv()


def test_cumulants_below_bounds():
    cfg = _cfg(replications=3000, statistics=["cumulants"],
               design=[{"T": 10, "delta": 0.1}, {"T": 50, "delta": 0.1}])
    for row in run_experiment(ExperimentConfig.from_dict(cfg)).rows:
        assert abs(row["k3"]) <= kappa3_bound(ExpOU(1, 1), row["T"]) + 3 * row["k3_se"]
        assert abs(row["k4"]) <= kappa4_bound(ExpOU(1, 1), row["T"]) + 3 * row["k4_se"]


def test_rate_fit_in_report():
    cfg = _cfg(replications=500, statistics=["kolmogorov", "wasserstein1", "rate_fit"],
               design={"delta": 0.1, "T": [5, 10, 20]})
    rep = run_experiment(ExperimentConfig.from_dict(cfg))
    assert set(rep.fits) == {"d_K_vs_T", "d_W1_vs_T"}
    assert rep.fits_csv().splitlines()[0].startswith("quantity,slope")


def test_gap_fit_over_meshes():
    cfg = _cfg(replications=300, statistics=["discretization_gap", "rate_fit"],
               design=[{"T": 10, "delta": d} for d in (0.2, 0.1, 0.05)])
    rep = run_experiment(ExperimentConfig.from_dict(cfg))
    assert "gap_mean_sq_vs_delta" in rep.fits
    assert all(r["gap_mean_sq"] > 0 for r in rep.rows)


def test_fou1_drift_consistency():
    cfg = {"model": {"type": "FOU1", "theta": 1.0, "hurst": 0.5},
           "design": [{"T": 20, "delta": 0.05}, {"T": 80, "delta": 0.05}],
           "replications": 300, "master_seed": 1, "statistics": ["drift_error"]}
    rows = run_experiment(ExperimentConfig.from_dict(cfg)).rows
    assert rows[1]["drift_hat_rmse"] < rows[0]["drift_hat_rmse"]
    assert abs(rows[1]["drift_hat_mean"] - 1) < 0.1
    assert rows[1]["delta_H_sq"] == pytest.approx(2.0)


def test_errors_carry_design_context():
    cfg = _cfg(statistics=["discretization_gap"], gap_subsample=3,
               design=[{"n": 100, "delta": 0.1}])
    with pytest.raises(InvalidInputError, match="design point 0"):
        run_experiment(ExperimentConfig.from_dict(cfg))
