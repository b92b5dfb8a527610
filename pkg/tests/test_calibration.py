import math

import numpy as np
import pandas as pd
import pytest
from statsmodels.tools.numdiff import approx_fprime

from covariates.activity import covariate_series
from covariates.extreme_dummies import extreme_dummies
from covariates.innovations import innovation_series
from econometrics.arima import fit_arima
from econometrics.diagnostics import adf_test, jarque_bera, ljung_box
from econometrics.errors import NonConvergence
from econometrics.gjr_garch import GjrParams, conditional_variance, fit_garch_regression, gaussian_loglik_obs
from portfolio.chain_panel import portfolio_return, write_panel_csv
from study.design import Variant, build_spec
from study.report import write_report_csv
from study.runner import StudyConfig, run_study
from synth.dgp import DgpConfig, generate_panel
from universe.classifier import CHAINS, Chain, PortfolioKind

from conftest import gjr_regression_sample, make_grid

TRUE_VARIANCE = GjrParams(omega=0.05, arch=(0.10,), leverage=(0.10,), garch=(0.80,))
RIVALS = ['mean.beta_1', 'mean.beta_2', 'mean.beta_3', 'mean.beta_4']


def _window(data) -> tuple:
    grid = data.config.grid
    return grid[0], grid[-1]


@pytest.mark.slow
def test_joint_qmle_recovers_gjr_parameters_across_seeds():
    truth = {'omega': TRUE_VARIANCE.omega, 'alpha_1': TRUE_VARIANCE.arch[0], 'gamma_1': TRUE_VARIANCE.leverage[0],
             'beta_1': TRUE_VARIANCE.garch[0], 'x': 0.5}
    hits = dict.fromkeys(truth, 0)
    seeds = range(100, 125)
    for seed in seeds:
        y, X, _ = gjr_regression_sample(4000, seed=seed, params=TRUE_VARIANCE)
        fit = fit_garch_regression(y, X, (1, 1, 1), restarts=0)
        variance = fit.variance
        estimates = {'omega': variance.omega, 'alpha_1': variance.arch[0], 'gamma_1': variance.leverage[0],
                     'beta_1': variance.garch[0], 'x': fit.mean_coefficients['x']}
        for name, value in estimates.items():
            hits[name] += abs(value - truth[name]) <= 0.08
    for name, count in hits.items():
        assert count >= 0.9 * len(seeds), name


@pytest.mark.slow
def test_converged_optimum_has_flat_scaled_gradient():
    checked = 0
    for seed in range(200, 210):
        y, X, _ = gjr_regression_sample(1500, seed=seed)
        try:
            fit = fit_garch_regression(y, X, (1, 1, 1), restarts=0)
        except NonConvergence:
            continue
        if fit.at_boundary:
            continue
        assert fit.converged and fit.grad_norm <= 1e-4

        y_values, X_values = y.to_numpy(), X.to_numpy()
        k = X_values.shape[1]
        backcast = fit.extra['backcast']

        def mean_nll(theta):
            e = y_values - X_values @ theta[:k]
            sigma2 = conditional_variance(e, GjrParams.from_vector(theta[k:], fit.order), backcast)
            return -float(np.mean(gaussian_loglik_obs(e, sigma2)))

        theta = np.r_[fit.mean_coefficients.to_numpy(), fit.variance.as_vector()]
        gradient = approx_fprime(theta, mean_nll, centered=True)
        # производные по log|theta_i| не зависят от масштаба данных
        assert np.max(np.abs(theta * gradient)) <= 1e-3
        checked += 1
    assert checked >= 5


@pytest.mark.slow
def test_injected_spillover_is_negative_and_significant():
    hits = 0
    seeds = range(20)
    for seed in seeds:
        data = generate_panel(DgpConfig(T=2000, seed=seed, spillover={(Chain.ETHEREUM, Chain.ARBITRUM): -0.15}))
        design = build_spec(Chain.ARBITRUM, PortfolioKind.ALL, Variant.LINEAR_BASELINE, data.panels,
                            covariate_series(data.activity, data.global_set), _window(data))
        assert design.spec.labels['beta_1'] == 'R^All_Ethereum'
        try:
            fit = fit_garch_regression(design.y, design.X, (1, 1, 1), restarts=0)
        except NonConvergence:
            continue
        hits += fit.params['mean.beta_1'] < 0 and abs(fit.tstats['mean.beta_1']) >= 1.960
    assert hits >= 0.9 * len(seeds)


@pytest.mark.slow
def test_null_panel_rarely_stars_rival_coefficients():
    homoskedastic = {chain: GjrParams(omega=1.0) for chain in CHAINS}
    starred = total = 0
    for seed in range(20):
        data = generate_panel(DgpConfig(T=2000, seed=seed, garch=homoskedastic))
        covariates = covariate_series(data.activity, data.global_set)
        for chain in CHAINS:
            for kind in (PortfolioKind.ALL, PortfolioKind.NON_CEX):
                design = build_spec(chain, kind, Variant.LINEAR_BASELINE, data.panels, covariates, _window(data))
                fit = fit_garch_regression(design.y, design.X, (0, 0, 0), restarts=0)
                tstats = fit.tstats[RIVALS].to_numpy()
                starred += int(np.sum(np.abs(tstats) >= 2.576))
                total += len(tstats)
    assert total == 20 * len(CHAINS) * 2 * 4
    assert starred <= 0.05 * total


def test_mixture_identity_and_cap_scale_invariance():
    rng = np.random.default_rng(300)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        returns = {f'a{i}': float(rng.normal(0, 0.05)) for i in range(n)}
        caps = {f'a{i}': float(rng.lognormal(15, 3)) for i in range(n)}
        listed = rng.permutation(n)[:int(rng.integers(1, n))]
        cex = {f'a{i}' for i in listed}
        non_cex = set(returns) - cex

        all_return = portfolio_return(returns, caps)
        cex_return = portfolio_return({a: returns[a] for a in cex}, caps)
        non_cex_return = portfolio_return({a: returns[a] for a in non_cex}, caps)
        share = math.fsum(caps[a] for a in cex) / math.fsum(caps.values())
        assert abs(all_return - (share * cex_return + (1 - share) * non_cex_return)) <= 1e-12

        scale = float(rng.lognormal(0, 5))
        scaled = portfolio_return(returns, {a: c * scale for a, c in caps.items()})
        assert abs(scaled - all_return) <= 1e-12


@pytest.mark.parametrize('n', [500, 2000])
def test_extreme_dummies_flag_the_requested_tail(n):
    reference = pd.Series(np.random.default_rng(n).standard_t(4, n))
    dummies = extreme_dummies(reference, tail=0.05)
    for flags in (dummies.upper, dummies.lower):
        assert 0.05 - 2 / n <= flags.mean() <= 0.05 + 2 / n


def test_normal_reference_thresholds():
    dummies = extreme_dummies(pd.Series(np.random.default_rng(301).standard_normal(10_000)), tail=0.05)
    low, high = dummies.thresholds
    assert low == pytest.approx(-1.645, abs=0.05)
    assert high == pytest.approx(1.645, abs=0.05)


@pytest.mark.slow
def test_arima_search_recovers_ar1():
    index = pd.Index(make_grid(2000), dtype=object)
    selected = 0
    seeds = range(50)
    for seed in seeds:
        rng = np.random.default_rng(400 + seed)
        x = np.zeros(2000)
        shocks = rng.standard_normal(2000)
        for t in range(1, 2000):
            x[t] = 0.7 * x[t - 1] + shocks[t]
        series = pd.Series(x, index=index, name=f'ar1_{seed}')
        result = innovation_series(series)
        p, d, _ = result.order
        selected += d == 0 and p >= 1
        if result.order == (1, 0, 0):
            assert fit_arima(series, (1, 0, 0)).ar[0] == pytest.approx(0.7, abs=0.05)
    assert selected >= 0.8 * len(seeds)


@pytest.mark.slow
def test_adf_size_and_power():
    rejects_noise = keeps_walk = 0
    seeds = range(100)
    for seed in seeds:
        rng = np.random.default_rng(500 + seed)
        rejects_noise += adf_test(rng.standard_normal(2000)).rejection == '1%'
        keeps_walk += adf_test(np.cumsum(rng.standard_normal(2000))).rejection not in ('1%', '5%')
    assert rejects_noise >= 0.99 * len(seeds)
    assert keeps_walk >= 0.9 * len(seeds)


@pytest.mark.slow
def test_jarque_bera_size_on_normal_samples():
    below = sum(jarque_bera(np.random.default_rng(600 + seed).standard_normal(10_000)).statistic < 5.99
                for seed in range(200))
    assert 0.92 * 200 <= below <= 0.98 * 200


@pytest.mark.slow
def test_jarque_bera_rejects_heavy_tails():
    rejected = sum(jarque_bera(np.random.default_rng(700 + seed).standard_t(3, 2000)).statistic > 9.21
                   for seed in range(50))
    assert rejected >= 0.99 * 50


@pytest.mark.slow
def test_ljung_box_size_on_white_noise():
    rejected = sum(ljung_box(np.random.default_rng(800 + seed).standard_normal(1000), 10)[1] < 0.05
                   for seed in range(200))
    assert 0.02 * 200 <= rejected <= 0.09 * 200


@pytest.mark.slow
def test_same_seed_gives_identical_outputs(tmp_path):
    outputs = []
    for run in ('first', 'second'):
        data = generate_panel(DgpConfig(T=400, seed=11, spillover={(Chain.ETHEREUM, Chain.ARBITRUM): -0.15}))
        config = StudyConfig(window=_window(data), variants=(Variant.LINEAR_BASELINE,),
                             bounds={'p': (0, 1), 'o': (0, 0), 'q': (0, 1)}, restarts=1, seed=5, n_jobs=1)
        report = run_study(data.panels, covariate_series(data.activity, data.global_set), config)
        panel_path, report_path = tmp_path / f'{run}_panel.csv', tmp_path / f'{run}_report.csv'
        write_panel_csv(str(panel_path), data.panels)
        write_report_csv(str(report_path), report)
        outputs.append((panel_path.read_bytes(), report_path.read_bytes()))
    assert outputs[0] == outputs[1]
