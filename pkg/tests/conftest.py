import os
import datetime as dt

import numpy as np
import pandas as pd
import pytest

from econometrics.gjr_garch import GjrParams
from portfolio.chain_panel import ChainPanel
from portfolio.returns import ReturnSeries
from synth.dgp import simulate_gjr
from timebase.halfday import Half, HalfDayId, half_day_range
from universe.classifier import CHAINS, PortfolioKind

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), 'fixtures')


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def small_grid():
    start = HalfDayId(dt.date(2024, 1, 1), Half.H1)
    return half_day_range(start, start.shift(7))


def make_grid(n: int, start: dt.date = dt.date(2023, 1, 2)) -> list:
    first = HalfDayId(start, Half.H1)
    return half_day_range(first, first.shift(n - 1))


def random_panels(grid, seed: int = 0, scale: float = 0.01) -> dict:
    """
    Панели из независимых нормальных доходностей на сетке, расширенной на одни полусутки назад.
    """
    rng = np.random.default_rng(seed)
    index = pd.Index([grid[0].predecessor()] + list(grid), dtype=object)
    panels = {}
    for chain in CHAINS:
        series = {kind: ReturnSeries(f'R_{kind.value}_{chain.value}',
                                     pd.Series(rng.normal(0.0, scale, len(index)), index=index))
                  for kind in PortfolioKind}
        panels[chain] = ChainPanel(chain, series[PortfolioKind.ALL], series[PortfolioKind.CEX],
                                   series[PortfolioKind.NON_CEX], series[PortfolioKind.LOCAL])
    return panels


def random_covariates(grid, seed: int = 1, scale: float = 0.01) -> dict:
    from study.design import GAMMA_SERIES, THETA_SERIES

    rng = np.random.default_rng(seed)
    index = pd.Index([grid[0].predecessor()] + list(grid), dtype=object)
    return {series_id: pd.Series(rng.normal(0.0, scale, len(index)), index=index, name=series_id)
            for series_id in THETA_SERIES + GAMMA_SERIES}


def gjr_regression_sample(n: int, seed: int, params: GjrParams = None, beta: float = 0.5) -> tuple:
    """
    y_t = beta * x_t + e_t, e - GJR-GARCH. Returns: (y, X с константой, e)
    """
    params = params or GjrParams(omega=0.05, arch=(0.10,), leverage=(0.10,), garch=(0.80,))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    e, _ = simulate_gjr(params, rng.standard_normal(n + 500))
    e = e[500:]
    y = beta * x + e
    X = pd.DataFrame({'alpha_0': np.ones(n), 'x': x})
    return pd.Series(y), X, e


@pytest.fixture
def grid_400():
    return make_grid(400)
