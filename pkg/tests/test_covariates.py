import math
import datetime as dt

import numpy as np
import pandas as pd
import pytest

from covariates import innovations
from covariates.activity import ARIMA_REPORT_HEADER, read_arima_report, read_levels_csv, write_arima_report, \
    write_levels_csv
from covariates.extreme_dummies import DegenerateDistribution, extreme_dummies
from covariates.global_market import global_return_series, session_returns
from covariates.innovations import innovation_series
from covariates.rates import half_day_rate_series
from econometrics.errors import InsufficientData, NonConvergence
from ingest.store import read_csv_rows
from timebase.halfday import EquityMarket, Half, HalfDayId, Session, half_day_range

from conftest import make_grid


@pytest.fixture
def bars():
    days = pd.bdate_range('2024-01-01', '2024-01-31').date
    rng = np.random.default_rng(11)
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, len(days))))
    opens = closes * np.exp(rng.normal(0, 0.005, len(days)))
    return pd.DataFrame({'open': opens, 'close': closes}, index=list(days))


@pytest.mark.parametrize('market', list(EquityMarket))
def test_half_days_of_a_trading_day_add_up_to_close_to_close(bars, market):
    grid = half_day_range(HalfDayId(dt.date(2024, 1, 1), Half.H1), HalfDayId(dt.date(2024, 1, 31), Half.H2))
    returns = global_return_series(market, bars, grid).values
    daily = returns.groupby([h.date for h in returns.index]).sum(min_count=2)
    close_to_close = np.log(bars['close'] / bars['close'].shift(1))
    for day in list(bars.index)[1:]:
        assert daily[day] == pytest.approx(close_to_close[day], abs=1e-12)


def test_weekends_and_closed_days_give_zero(bars):
    grid = half_day_range(HalfDayId(dt.date(2024, 1, 6), Half.H1), HalfDayId(dt.date(2024, 1, 9), Half.H2))
    holiday = dt.date(2024, 1, 8)
    returns = global_return_series(EquityMarket.SP500, bars, grid, {EquityMarket.SP500: [holiday]}).values
    assert returns.iloc[:6].tolist() == [0.0] * 6
    # после закрытого дня overnight считается от последнего торгового закрытия (5 января)
    expected = math.log(bars.at[dt.date(2024, 1, 9), 'open'] / bars.at[dt.date(2024, 1, 5), 'close'])
    assert returns.iloc[6] == pytest.approx(expected)


def test_first_trading_day_has_no_overnight(bars):
    components = session_returns(EquityMarket.FTSE100, bars)
    assert math.isnan(components[Session.OVERNIGHT].iloc[0])
    assert not math.isnan(components[Session.INTRADAY].iloc[0])


def test_rate_series_steps_through_gaps():
    daily = pd.Series([3.9, 3.95], index=[dt.date(2024, 1, 1), dt.date(2024, 1, 3)], name='EURIBOR')
    grid = half_day_range(HalfDayId(dt.date(2023, 12, 31), Half.H1), HalfDayId(dt.date(2024, 1, 4), Half.H2))
    values = half_day_rate_series(daily, grid)
    assert values.iloc[:2].isna().all()
    assert values.iloc[2:6].tolist() == [3.9] * 4
    assert values.iloc[6:].tolist() == [3.95] * 4


def test_extreme_dummies_use_interpolated_quantiles():
    index = pd.Index(make_grid(101), dtype=object)
    reference = pd.Series(list(np.arange(1.0, 101.0)) + [np.nan], index=index)
    dummies = extreme_dummies(reference, tail=0.05)
    assert dummies.thresholds == pytest.approx((5.95, 95.05))
    assert dummies.upper.sum() == 5
    assert dummies.lower.sum() == 5
    assert dummies.upper.iloc[99] == 1.0 and dummies.lower.iloc[0] == 1.0
    assert math.isnan(dummies.upper.iloc[-1]) and math.isnan(dummies.lower.iloc[-1])


def test_extreme_dummies_edge_cases():
    index = pd.Index(make_grid(60), dtype=object)
    with pytest.raises(InsufficientData):
        extreme_dummies(pd.Series(np.arange(30.0), index=index[:30]))
    with pytest.raises(DegenerateDistribution):
        extreme_dummies(pd.Series(np.ones(60), index=index))
    with pytest.raises(ValueError):
        extreme_dummies(pd.Series(np.arange(60.0), index=index), tail=0.5)


def test_constant_level_gives_zero_innovations():
    index = pd.Index(make_grid(80), dtype=object)
    result = innovation_series(pd.Series(2.5, index=index, name='flat'))
    assert result.order == (0, 0, 0)
    assert math.isnan(result.aic)
    assert (result.residuals == 0.0).all()


def test_short_level_series_rejected():
    index = pd.Index(make_grid(40), dtype=object)
    with pytest.raises(InsufficientData):
        innovation_series(pd.Series(np.arange(40.0), index=index))


def test_default_search_covers_every_difference_order(monkeypatch):
    tried = []

    def reject(series, order, condition_on):
        tried.append(order)
        return None

    monkeypatch.setattr(innovations, '_try_fit', reject)
    index = pd.Index(make_grid(80), dtype=object)
    with pytest.raises(NonConvergence):
        innovation_series(pd.Series(np.sin(np.arange(80.0)), index=index, name='wave'), max_p=1, max_d=1, max_q=1)
    assert {order[1] for order in tried} == {0, 1}
    assert len(tried) == 8


def test_gaps_in_level_stay_missing_in_innovations():
    rng = np.random.default_rng(12)
    x = np.zeros(200)
    for t in range(1, 200):
        x[t] = 0.5 * x[t - 1] + rng.normal()
    index = pd.Index(make_grid(200), dtype=object)
    level = pd.Series(x + 4.0, index=index, name='gappy')
    level.iloc[100:104] = np.nan
    result = innovation_series(level, max_p=1, max_d=0, max_q=1)
    assert result.residuals.iloc[100:104].isna().all()
    assert result.residuals.iloc[104:].notna().all()
    assert result.level is level
    stat, pvalue = result.ljung_box
    assert stat >= 0 and 0 <= pvalue <= 1


def test_arima_report_carries_whiteness(tmp_path):
    path = str(tmp_path / 'arima_report.csv')
    write_arima_report(path, {'SR_Ethereum': ((1, 0, 1), -3.5), 'TREA': ((0, 0, 0), float('nan'))},
                       {'SR_Ethereum': (7.25, 0.5)})
    rows = {row['series_id']: row for row in read_csv_rows(path, ARIMA_REPORT_HEADER)}
    assert float(rows['SR_Ethereum']['lb_stat']) == 7.25
    assert float(rows['SR_Ethereum']['lb_pvalue']) == 0.5
    assert rows['TREA']['lb_pvalue'] == ''
    assert read_arima_report(path)['SR_Ethereum'] == ((1, 0, 1), -3.5)


def test_levels_file_keeps_rate_levels(tmp_path):
    index = pd.Index(make_grid(6), dtype=object)
    levels = {'EURIBOR': pd.Series([3.5, 3.5, 3.6, 3.6, 3.7, 3.7], index=index, name='EURIBOR')}
    path = str(tmp_path / 'levels.csv')
    write_levels_csv(path, levels)
    restored = read_levels_csv(path)
    assert list(restored['EURIBOR'].index) == list(index)
    np.testing.assert_allclose(restored['EURIBOR'].values, levels['EURIBOR'].values)


@pytest.mark.slow
def test_random_walk_level_is_differenced():
    rng = np.random.default_rng(5)
    index = pd.Index(make_grid(600), dtype=object)
    level = pd.Series(np.cumsum(rng.normal(0, 0.05, 600)) + 3.0, index=index, name='rw')
    result = innovation_series(level, max_p=1, max_q=1, differencing='adf')
    assert result.order[1] == 1
    assert result.residuals.index.equals(level.index)
    assert result.residuals.iloc[0:1].isna().all()
    assert result.residuals.dropna().std() == pytest.approx(0.05, rel=0.15)


@pytest.mark.slow
def test_stationary_level_keeps_ar_structure():
    rng = np.random.default_rng(6)
    x = np.zeros(800)
    for t in range(1, 800):
        x[t] = 0.6 * x[t - 1] + rng.normal()
    index = pd.Index(make_grid(800), dtype=object)
    result = innovation_series(pd.Series(x, index=index, name='ar1'), max_p=2, max_q=2)
    assert result.order[1] == 0
    assert result.order[0] + result.order[2] >= 1
    assert result.residuals.dropna().std() == pytest.approx(1.0, rel=0.1)
