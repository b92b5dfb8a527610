import logging
import datetime as dt
from dataclasses import dataclass, field

import pandas as pd
from tqdm import tqdm

from covariates.global_market import MARKET_SYMBOLS, bars_from_series, global_return_series
from covariates.innovations import DEFAULT_ARIMA_BOUNDS, innovation_series
from covariates.rates import half_day_rate_series
from ingest.sources import SchemaMismatch
from ingest.store import format_float, read_csv_rows, read_series_csv, write_csv, write_series_csv
from portfolio.returns import ReturnSeries, log_return
from timebase.halfday import EquityMarket, HalfDayId
from universe.classifier import CHAINS, Chain

logger = logging.getLogger(__name__)

ARIMA_REPORT_HEADER = ['series_id', 'p', 'd', 'q', 'aic', 'lb_stat', 'lb_pvalue']
NATIVE_SYMBOLS = ('BTC',) + tuple(chain.native for chain in CHAINS)
RATE_SERIES = ('EURIBOR', 'HIBOR', 'TREA')


class MissingSeries(LookupError):
    pass


def native_return_id(symbol: str) -> str:
    return f'R_{symbol}'


def staking_innovation_id(chain: Chain) -> str:
    return f'SR_{chain.value}'


@dataclass(frozen=True)
class ActivitySet:
    native_returns: dict                 # символ -> ReturnSeries, включая BTC
    staking_innovations: dict            # Chain -> ReturnSeries
    arima_orders: dict = field(default_factory=dict)   # series_id -> ((p, d, q), aic)
    arima_whiteness: dict = field(default_factory=dict)   # series_id -> (Ljung-Box stat, pvalue)
    levels: dict = field(default_factory=dict)   # series_id -> уровень ставки на сетке

    def native_return(self, chain: Chain) -> ReturnSeries:
        return self.native_returns[chain.native]


@dataclass(frozen=True)
class GlobalSet:
    equity: dict                         # SPR / HSR / FTSER -> ReturnSeries
    rate_innovations: dict               # EURIBOR / HIBOR / TREA -> ReturnSeries
    arima_orders: dict = field(default_factory=dict)
    arima_whiteness: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)


def _arima_fields(results: dict) -> dict:
    return {
        'arima_orders': {series_id: (r.order, r.aic) for series_id, r in results.items()},
        'arima_whiteness': {series_id: r.ljung_box for series_id, r in results.items()},
        'levels': {series_id: r.level for series_id, r in results.items()},
    }


class CovariateBuilder:
    """
    Сборка объясняющих переменных из канонического хранилища series.csv.

    Ожидаемые ряды: price_<SYMBOL> (цены нативных токенов и BTC по полусуткам),
    дневные уровни ставок активности сетей (имена задаются activity_rates),
    <MARKET>_open / <MARKET>_close для индексов и дневные EURIBOR, HIBOR, TREA.
    """

    def __init__(self, activity_rates: dict = None, closed_days: dict = None, arima_bounds: dict = None,
                 differencing: str = 'aic', n_jobs: int = 1):
        self.activity_rates = self._validate_activity_rates(activity_rates or {})
        self.closed_days = closed_days or {}
        self.arima_bounds = {**DEFAULT_ARIMA_BOUNDS, **(arima_bounds or {})}
        self.differencing = differencing
        self.n_jobs = n_jobs

    @classmethod
    def from_config(cls, covariates_config, n_jobs: int = 1):
        covariates_config = covariates_config or {}
        closed_days = {
            EquityMarket(market): [dt.date.fromisoformat(str(d)) for d in days]
            for market, days in (covariates_config.get('closed_days') or {}).items()
        }
        return cls(activity_rates=covariates_config.get('activity_rates'), closed_days=closed_days,
                   arima_bounds=covariates_config.get('arima_bounds'),
                   differencing=covariates_config.get('differencing', 'aic'), n_jobs=n_jobs)

    @staticmethod
    def _validate_activity_rates(activity_rates):
        validated = {chain: f'staking_{chain.value}' for chain in CHAINS}
        for chain_name, series_id in activity_rates.items():
            validated[Chain.parse(chain_name)] = str(series_id)
        return validated

    @staticmethod
    def _require(series: dict, series_id: str) -> pd.Series:
        if series_id not in series:
            raise MissingSeries(f'В хранилище нет ряда {series_id}')
        return series[series_id]

    def _half_day_returns(self, prices: pd.Series, series_id: str, grid) -> ReturnSeries:
        if not all(isinstance(key, HalfDayId) for key in prices.index):
            raise SchemaMismatch(f'Ряд цен {series_id} должен быть задан по полусуткам')
        extended = [grid[0].predecessor()] + list(grid)
        on_grid = prices.reindex(pd.Index(extended, dtype=object))
        returns = log_return(on_grid, series_id)
        return ReturnSeries(series_id, returns.values.iloc[1:])

    def _innovations(self, level: pd.Series, series_id: str, grid) -> tuple:
        on_grid = half_day_rate_series(level, grid).rename(series_id)
        result = innovation_series(on_grid, differencing=self.differencing, n_jobs=self.n_jobs,
                                   **self.arima_bounds)
        return ReturnSeries(series_id, result.residuals), result

    def build_activity_set(self, series: dict, grid) -> ActivitySet:
        grid = list(grid)
        native = {}
        for symbol in NATIVE_SYMBOLS:
            prices = self._require(series, f'price_{symbol}')
            native[symbol] = self._half_day_returns(prices, native_return_id(symbol), grid)

        innovations, results = {}, {}
        for chain in tqdm(CHAINS, desc='Инновации активности'):
            series_id = staking_innovation_id(chain)
            level = self._require(series, self.activity_rates[chain])
            innovations[chain], results[series_id] = self._innovations(level, series_id, grid)
        return ActivitySet(native_returns=native, staking_innovations=innovations, **_arima_fields(results))

    def build_global_set(self, series: dict, grid) -> GlobalSet:
        grid = list(grid)
        equity = {}
        for market, symbol in MARKET_SYMBOLS.items():
            bars = bars_from_series(self._require(series, f'{market.value}_open'),
                                    self._require(series, f'{market.value}_close'))
            equity[symbol] = global_return_series(market, bars, grid, self.closed_days)

        innovations, results = {}, {}
        for name in tqdm(RATE_SERIES, desc='Инновации ставок'):
            innovations[name], results[name] = self._innovations(self._require(series, name), name, grid)
        return GlobalSet(equity=equity, rate_innovations=innovations, **_arima_fields(results))


def covariate_series(activity: ActivitySet, global_set: GlobalSet) -> dict:
    """
    Все ряды covariates.csv: {series_id: pd.Series по HalfDayId}.
    """
    result = {}
    for returns in list(activity.native_returns.values()) + list(activity.staking_innovations.values()):
        result[returns.series_id] = returns.values
    for returns in list(global_set.equity.values()) + list(global_set.rate_innovations.values()):
        result[returns.series_id] = returns.values
    return result


def write_covariates_csv(path: str, activity: ActivitySet, global_set: GlobalSet):
    write_series_csv(path, covariate_series(activity, global_set), with_schema_header=False)


def read_covariates_csv(path: str) -> dict:
    return read_series_csv(path)


def level_series(activity: ActivitySet, global_set: GlobalSet) -> dict:
    """
    Уровни ставок на сетке, из которых получены инновации: {series_id: pd.Series по HalfDayId}.
    """
    return {**activity.levels, **global_set.levels}


def write_levels_csv(path: str, levels: dict):
    write_series_csv(path, levels, with_schema_header=False)


def read_levels_csv(path: str) -> dict:
    return read_series_csv(path)


def write_arima_report(path: str, orders: dict, whiteness: dict = None):
    """
    Порядки ARIMA, AIC и Ljung-Box остатков выбранной модели по каждому ряду инноваций.
    """
    whiteness = whiteness or {}
    rows = []
    for series_id in sorted(orders):
        (p, d, q), aic = orders[series_id]
        lb_stat, lb_pvalue = whiteness.get(series_id, (None, None))
        rows.append([series_id, p, d, q, format_float(aic), format_float(lb_stat), format_float(lb_pvalue)])
    write_csv(path, ARIMA_REPORT_HEADER, rows, with_schema_header=False)


def read_arima_report(path: str) -> dict:
    orders = {}
    for row in read_csv_rows(path, ARIMA_REPORT_HEADER):
        aic = row['aic'].strip()
        orders[row['series_id'].strip()] = ((int(row['p']), int(row['d']), int(row['q'])),
                                            float(aic) if aic else float('nan'))
    return orders
