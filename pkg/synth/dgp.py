import json
import logging
import datetime as dt
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from covariates.activity import (ActivitySet, GlobalSet, NATIVE_SYMBOLS, RATE_SERIES, native_return_id,
                                 staking_innovation_id, write_covariates_csv)
from covariates.global_market import MARKET_SYMBOLS, global_return_series
from covariates.rates import half_day_rate_series
from econometrics.gjr_garch import GjrParams
from ingest.market_cap import CapSource, RawCapObservation, write_caps_csv
from ingest.prices import write_pools_jsonl
from ingest.store import _write_text, write_series_csv
from ingest.swap_decoder import Direction, PoolDescriptor, SwapTrade, write_swaps_csv
from ingest.universe_fetch import write_assets_jsonl
from portfolio.chain_panel import build_panels, write_panel_csv
from portfolio.returns import ReturnSeries
from timebase.halfday import EquityMarket, Half, HalfDayId, half_day_range, is_trading_day
from universe.classifier import CHAINS, AssetRecord, Chain, Exclusion, UniverseClassifier

logger = logging.getLogger(__name__)

BURN_IN = 500
# Доли капитализации внутри сегмента и начальные цены (в нативном токене) активов каждой сети
CEX_ASSETS = (('cex-1', 0.6, 1.0), ('cex-2', 0.4, 2.0))
NON_CEX_ASSETS = (('dex-1', 0.7, 0.5), ('bridged', 0.3, 1.5))
TOTAL_CAP = 1e8
RATE_START = {'EURIBOR': 3.0, 'HIBOR': 4.0, 'TREA': 4.5}


class UnstableConfig(ValueError):
    pass


@dataclass(frozen=True)
class ExtremeEvent:
    chain: Chain
    t: int            # номер полусуток от начала сетки
    size: float       # скачок доходности nonCEX-сегмента


@dataclass(frozen=True)
class DgpConfig:
    """
    Параметры синтетической панели.

    Доходности CEX-сегмента сети c - GJR-инновации; nonCEX-сегмент
    N_c,t = own_lag * A_c,t-1 + cex_loading * C_c,t + sum_j B[c, j] * A_j,t + e_c,t + скачки,
    A_c,t = s_c,t-1 * C_c,t + (1 - s_c,t-1) * N_c,t, где s - доля CEX-активов в капитализации на t-1.
    """
    T: int = 2000
    n_chains: int = len(CHAINS)
    start: dt.date = dt.date(2022, 1, 3)
    seed: int = 0
    spillover: dict = field(default_factory=dict)      # (source Chain, target Chain) -> коэффициент
    own_lag: float = 0.0
    cex_loading: float = 0.5
    cex_share: float = 0.5
    return_scale: float = 0.01
    garch: dict = field(default_factory=dict)          # Chain -> GjrParams
    activity: dict = field(default_factory=lambda: {'phi_native': 0.1, 'sigma_native': 0.02,
                                                    'phi_rate': 0.3, 'sigma_rate': 0.05})
    global_sigma: dict = field(default_factory=lambda: {'equity': 0.008, 'rate': 0.02})
    events: tuple = ()
    dummy_effect: dict = field(default_factory=dict)   # (source, target) -> (upper, lower)

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_config(cls, synth_config, seed: int = None):
        synth_config = synth_config or {}
        garch_config = synth_config.get('garch') or {'omega': 0.05, 'alpha': [0.10], 'gamma': [0.10],
                                                     'beta': [0.80]}
        chains = CHAINS[:int(synth_config.get('n_chains', len(CHAINS)))]
        garch = {chain: cls._gjr_from_config(garch_config) for chain in chains}
        for chain_name, override in (synth_config.get('garch_by_chain') or {}).items():
            garch[Chain.parse(chain_name)] = cls._gjr_from_config(override)

        spillover = {}
        for item in synth_config.get('spillover') or []:
            spillover[(Chain.parse(item['source']), Chain.parse(item['target']))] = float(item['coef'])
        dummy_effect = {}
        for item in synth_config.get('dummy_effect') or []:
            dummy_effect[(Chain.parse(item['source']), Chain.parse(item['target']))] = (
                float(item.get('upper', 0.0)), float(item.get('lower', 0.0)))
        events = tuple(ExtremeEvent(Chain.parse(e['chain']), int(e['t']), float(e['size']))
                       for e in synth_config.get('events') or [])

        defaults = cls.__dataclass_fields__
        return cls(
            T=int(synth_config.get('T', defaults['T'].default)),
            n_chains=len(chains),
            start=dt.date.fromisoformat(str(synth_config.get('start', defaults['start'].default))),
            seed=int(seed if seed is not None else synth_config.get('seed', 0)),
            spillover=spillover,
            own_lag=float(synth_config.get('own_lag', 0.0)),
            cex_loading=float(synth_config.get('cex_loading', 0.5)),
            cex_share=float(synth_config.get('cex_share', 0.5)),
            return_scale=float(synth_config.get('return_scale', 0.01)),
            garch=garch,
            activity={**defaults['activity'].default_factory(), **(synth_config.get('activity') or {})},
            global_sigma={**defaults['global_sigma'].default_factory(), **(synth_config.get('global') or {})},
            events=events,
            dummy_effect=dummy_effect,
        )

    @staticmethod
    def _gjr_from_config(garch_config) -> GjrParams:
        return GjrParams(omega=float(garch_config['omega']),
                         arch=tuple(float(v) for v in garch_config.get('alpha', [])),
                         leverage=tuple(float(v) for v in garch_config.get('gamma', [])),
                         garch=tuple(float(v) for v in garch_config.get('beta', [])))

    @property
    def chains(self) -> tuple:
        return CHAINS[:self.n_chains]

    def garch_for(self, chain: Chain) -> GjrParams:
        return self.garch.get(chain) or GjrParams(omega=0.05, arch=(0.10,), leverage=(0.10,), garch=(0.80,))

    def spillover_matrix(self) -> np.ndarray:
        """
        B[target, source] для сетей панели.
        """
        position = {chain: i for i, chain in enumerate(self.chains)}
        matrix = np.zeros((self.n_chains, self.n_chains))
        for (source, target), coef in self.spillover.items():
            matrix[position[target], position[source]] = coef
        return matrix

    def companion_matrix(self) -> np.ndarray:
        n = self.n_chains
        exposure = np.eye(n) - self.spillover_matrix() * (1 - self.cex_share)
        return self.own_lag * (1 - self.cex_share) * np.linalg.inv(exposure)

    def validate(self):
        if self.T < 2:
            raise ValueError(f'T должно быть не меньше 2, получено: {self.T}')
        if not 1 <= self.n_chains <= len(CHAINS):
            raise ValueError(f'n_chains должно лежать в [1, {len(CHAINS)}], получено: {self.n_chains}')
        if not 0 < self.cex_share < 1:
            raise ValueError(f'cex_share должна лежать в (0, 1), получено: {self.cex_share}')
        for (source, target) in list(self.spillover) + list(self.dummy_effect):
            if source == target:
                raise ValueError(f'Перетекание сети {source.value} на саму себя не допускается')
            if source not in self.chains or target not in self.chains:
                raise ValueError(f'Перетекание {source.value} -> {target.value} вне сетей панели')
        for event in self.events:
            if not 0 <= event.t < self.T or event.chain not in self.chains:
                raise ValueError(f'Событие {event} вне панели')

        exposure = np.eye(self.n_chains) - self.spillover_matrix() * (1 - self.cex_share)
        if abs(np.linalg.det(exposure)) < 1e-10:
            raise UnstableConfig('Система одновременных перетеканий вырождена')
        radius = float(np.max(np.abs(np.linalg.eigvals(self.companion_matrix()))))
        if radius >= 1:
            raise UnstableConfig(f'Спектральный радиус сопровождающей матрицы {radius:.4f} >= 1')
        for chain in self.chains:
            params = self.garch_for(chain)
            if params.omega <= 0 or params.persistence >= 1:
                raise UnstableConfig(f'GJR-параметры сети {chain.value} нестационарны: {params}')

    @property
    def grid(self) -> list:
        start = HalfDayId(self.start, Half.H1)
        return half_day_range(start, start.shift(self.T - 1))

    def truth(self) -> dict:
        def gjr(params):
            return {'omega': params.omega, 'alpha': list(params.arch), 'gamma': list(params.leverage),
                    'beta': list(params.garch)}

        grid = self.grid
        return {
            'seed': self.seed,
            'T': self.T,
            'start': str(grid[0]),
            'end': str(grid[-1]),
            'chains': [c.value for c in self.chains],
            'own_lag': self.own_lag,
            'cex_loading': self.cex_loading,
            'cex_share': self.cex_share,
            'return_scale': self.return_scale,
            'spillover': [{'source': s.value, 'target': t.value, 'coef': c}
                          for (s, t), c in sorted(self.spillover.items(), key=lambda i: (i[0][0].value, i[0][1].value))],
            'garch': {c.value: gjr(self.garch_for(c)) for c in self.chains},
            'activity': dict(sorted(self.activity.items())),
            'global': dict(sorted(self.global_sigma.items())),
            'events': [{'chain': e.chain.value, 't': e.t, 'half_day': str(grid[e.t]), 'size': e.size}
                       for e in self.events],
            'dummy_effect': [{'source': s.value, 'target': t.value, 'upper': u, 'lower': lo}
                             for (s, t), (u, lo) in sorted(self.dummy_effect.items(),
                                                          key=lambda i: (i[0][0].value, i[0][1].value))],
            'spectral_radius': float(np.max(np.abs(np.linalg.eigvals(self.companion_matrix())))),
        }


def simulate_gjr(params: GjrParams, z: np.ndarray) -> tuple:
    """
    Рекурсия GJR-GARCH по стандартизованным шокам z. Предвыборочные e^2 и sigma^2 равны
    безусловной дисперсии, e^2 * I(e < 0) - её половине.

    Returns:
        tuple: (e, sigma2)
    """
    p, o, q = params.order
    m = max(p, o, q, 1)
    n = len(z)
    variance = params.unconditional_variance
    e2 = np.full(n + m, variance)
    negative = np.full(n + m, 0.5 * variance)
    sigma2 = np.full(n + m, variance)
    e = np.zeros(n + m)
    arch, leverage, garch = (np.asarray(v, dtype=float) for v in (params.arch, params.leverage, params.garch))

    for t in range(m, n + m):
        value = params.omega
        if p:
            value += arch @ e2[t - p:t][::-1]
        if o:
            value += leverage @ negative[t - o:t][::-1]
        if q:
            value += garch @ sigma2[t - q:t][::-1]
        sigma2[t] = value
        e[t] = np.sqrt(value) * z[t - m]
        e2[t] = e[t] ** 2
        negative[t] = e2[t] if e[t] < 0 else 0.0
    return e[m:], sigma2[m:]


def _ar1(rng, n: int, phi: float, sigma: float) -> np.ndarray:
    shocks = rng.normal(0.0, sigma, size=n + BURN_IN)
    values = np.zeros(n + BURN_IN)
    for t in range(1, n + BURN_IN):
        values[t] = phi * values[t - 1] + shocks[t]
    return values[BURN_IN:]


@dataclass(frozen=True)
class SyntheticData:
    config: DgpConfig
    panels: dict
    activity: ActivitySet
    global_set: GlobalSet
    truth: dict
    assets: list
    pools: dict
    trades: list
    caps: list
    series: dict


def _asset_records(chains, start: dt.date) -> list:
    listing = start - dt.timedelta(days=365)
    records = []
    for chain in chains:
        prefix = chain.value.lower()
        for name, _, _ in CEX_ASSETS:
            records.append(AssetRecord(f'{prefix}-{name}', f'{prefix}-{name}', chain, address=f'0x{prefix}{name}',
                                       symbol=name.upper(), cex_listing_date=listing))
        for name, _, _ in NON_CEX_ASSETS:
            # Мостовой токен с одним logical_id на всех сетях попадает в All, но не в Local
            logical = 'bridged' if name == 'bridged' else f'{prefix}-{name}'
            records.append(AssetRecord(f'{prefix}-{name}', logical, chain, address=f'0x{prefix}{name}',
                                       symbol=name.upper()))
        records.append(AssetRecord(f'{prefix}-usd', f'{prefix}-usd', chain, address=f'0x{prefix}usd', symbol='USD',
                                   exclusion=Exclusion.STABLECOIN, tags=('stablecoin',)))
    return records


def _simulate_chains(config: DgpConfig, rng) -> tuple:
    """
    Returns:
        tuple: (prices {asset_id: np.ndarray длины T + 1}, supply {asset_id: float})
    """
    chains, n, T = config.chains, config.n_chains, config.T
    B = config.spillover_matrix()
    position = {chain: i for i, chain in enumerate(chains)}

    cex_shocks = np.column_stack([simulate_gjr(config.garch_for(c), rng.standard_normal(T + BURN_IN))[0][BURN_IN:]
                                  for c in chains]) * config.return_scale
    dex_shocks = np.column_stack([simulate_gjr(config.garch_for(c), rng.standard_normal(T + BURN_IN))[0][BURN_IN:]
                                  for c in chains]) * config.return_scale

    jumps = np.zeros((T, n))
    event_effect = {}
    for event in config.events:
        jumps[event.t, position[event.chain]] += event.size
        for (source, target), (upper, lower) in config.dummy_effect.items():
            if source == event.chain:
                extra = event_effect.setdefault(event.t, np.zeros((n, n)))
                extra[position[target], position[source]] += upper if event.size > 0 else lower

    cex_price = np.ones((T + 1, n))
    dex_price = np.ones((T + 1, n))
    cex_value = np.full(n, config.cex_share)
    dex_value = np.full(n, 1 - config.cex_share)
    all_prev = np.zeros(n)
    for t in range(T):
        share = cex_value * cex_price[t] / (cex_value * cex_price[t] + dex_value * dex_price[t])
        S, I = np.diag(share), np.eye(n)
        Bt = B + event_effect.get(t, 0.0)
        cex = cex_shocks[t]
        driver = config.own_lag * all_prev + config.cex_loading * cex + dex_shocks[t] + jumps[t]
        non_cex = np.linalg.solve(I - Bt @ (I - S), driver + Bt @ S @ cex)
        all_prev = share * cex + (1 - share) * non_cex
        cex_price[t + 1] = cex_price[t] * np.exp(cex)
        dex_price[t + 1] = dex_price[t] * np.exp(non_cex)

    prices, supply = {}, {}
    for chain in chains:
        i, prefix = position[chain], chain.value.lower()
        for segment, path, share in ((CEX_ASSETS, cex_price[:, i], config.cex_share),
                                     (NON_CEX_ASSETS, dex_price[:, i], 1 - config.cex_share)):
            for name, weight, p0 in segment:
                asset_id = f'{prefix}-{name}'
                prices[asset_id] = p0 * path
                supply[asset_id] = TOTAL_CAP * share * weight / p0
        prices[f'{prefix}-usd'] = np.ones(T + 1)
        supply[f'{prefix}-usd'] = TOTAL_CAP
    return prices, supply


def _equity_bars(rng, dates: list, sigma: float) -> dict:
    bars = {}
    for market in EquityMarket:
        trading = [d for d in dates if is_trading_day(market, d)]
        overnight = rng.normal(0.0, sigma, size=len(trading))
        intraday = rng.normal(0.0, sigma, size=len(trading))
        opens, closes, close = [], [], 1000.0
        for on, intra in zip(overnight, intraday):
            opened = close * np.exp(on)
            close = opened * np.exp(intra)
            opens.append(opened)
            closes.append(close)
        index = pd.Index(trading, dtype=object)
        bars[market] = (pd.Series(opens, index=index, name=f'{market.value}_open'),
                        pd.Series(closes, index=index, name=f'{market.value}_close'))
    return bars


def _stepped_innovation(level: pd.Series, grid: list, series_id: str) -> ReturnSeries:
    extended = [grid[0].predecessor()] + grid
    stepped = half_day_rate_series(level, extended)
    return ReturnSeries(series_id, stepped.diff().iloc[1:].rename(series_id))


def generate_panel(config: DgpConfig) -> SyntheticData:
    """
    Генерирует панель сетей, ковариаты и сырое хранилище, из которого build восстанавливает ту же панель.

    Детерминирована при заданном seed. Истинные ряды ставок активности и процентных ставок - первые
    разности ступенчатых уровней на сетке полусуток.

    Raises:
        UnstableConfig: нестационарная конфигурация.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    grid = config.grid
    extended = [grid[0].predecessor()] + grid
    ext_index = pd.Index(extended, dtype=object)

    asset_prices, supply = _simulate_chains(config, rng)

    records = UniverseClassifier().prepare(_asset_records(config.chains, config.start))
    pools = {asset_id: PoolDescriptor(pool_id=f'pool-{asset_id}', asset_id=asset_id)
             for asset_id in sorted(asset_prices) if not asset_id.endswith('-usd')}
    trades, caps, price_series, cap_series = [], [], {}, {}
    for asset_id in sorted(asset_prices):
        path = asset_prices[asset_id]
        price_series[asset_id] = pd.Series(path, index=ext_index, dtype=float)
        cap_series[asset_id] = price_series[asset_id] * supply[asset_id]
        for half_day, price, cap in zip(extended, path, cap_series[asset_id]):
            caps.append(RawCapObservation(asset_id, half_day, CapSource.PROVIDER_A, float(cap)))
            if asset_id in pools:
                trades.append(SwapTrade(pools[asset_id].pool_id, half_day.start + dt.timedelta(hours=6),
                                        1.0, float(price), Direction.BUY))

    memberships = UniverseClassifier().membership_grid(records, grid)
    panels = build_panels(memberships, price_series, cap_series, grid, chains=config.chains)

    # Нативные токены и BTC: AR(1) доходности по полусуткам
    series = {}
    native_returns = {}
    for symbol in NATIVE_SYMBOLS:
        returns = _ar1(rng, config.T, config.activity['phi_native'], config.activity['sigma_native'])
        prices = 100.0 * np.exp(np.r_[0.0, np.cumsum(returns)])
        series[f'price_{symbol}'] = pd.Series(prices, index=ext_index, dtype=float)
        native_returns[symbol] = ReturnSeries(native_return_id(symbol),
                                              pd.Series(returns, index=pd.Index(grid, dtype=object), dtype=float))

    # Дневные уровни: ставки активности сетей и процентные ставки - случайное блуждание с AR(1) приращениями
    dates = [grid[0].date - dt.timedelta(days=1) + dt.timedelta(days=i)
             for i in range((grid[-1].date - grid[0].date).days + 2)]
    date_index = pd.Index(dates, dtype=object)

    def level_path(start_level, phi, sigma):
        return pd.Series(start_level + np.cumsum(_ar1(rng, len(dates), phi, sigma)), index=date_index, dtype=float)

    staking = {}
    for chain in CHAINS:
        series_id = f'staking_{chain.value}'
        series[series_id] = level_path(5.0, config.activity['phi_rate'], config.activity['sigma_rate'])
        staking[chain] = _stepped_innovation(series[series_id], grid, staking_innovation_id(chain))

    rates = {}
    for name in RATE_SERIES:
        series[name] = level_path(RATE_START[name], config.activity['phi_rate'], config.global_sigma['rate'])
        rates[name] = _stepped_innovation(series[name], grid, name)

    bar_dates = [grid[0].date - dt.timedelta(days=7 - i) for i in range(7)] + dates[1:]
    equity = {}
    for market, (opens, closes) in _equity_bars(rng, bar_dates, config.global_sigma['equity']).items():
        series[opens.name], series[closes.name] = opens, closes
        bars = pd.concat([opens.rename('open'), closes.rename('close')], axis=1)
        equity[MARKET_SYMBOLS[market]] = global_return_series(market, bars, grid)

    activity = ActivitySet(native_returns=native_returns, staking_innovations=staking)
    global_set = GlobalSet(equity=equity, rate_innovations=rates)
    logger.info(f'Синтетическая панель: {config.n_chains} сетей, {config.T} полусуток, seed={config.seed}')
    return SyntheticData(config=config, panels=panels, activity=activity, global_set=global_set,
                         truth=config.truth(), assets=records, pools=pools, trades=trades, caps=caps,
                         series=series)


def generate_many(config: DgpConfig, seeds, n_jobs: int = 1) -> list:
    """
    Панели для нескольких seed; каждая генерируется в отдельной задаче пула.
    """
    return Parallel(n_jobs=n_jobs)(delayed(generate_panel)(replace(config, seed=int(s))) for s in seeds)


def write_synthetic(data: SyntheticData, raw_dir: str, out_dir: str):
    """
    Сырое хранилище (assets.jsonl, pools.jsonl, swaps.csv, caps.csv, series.csv) в raw_dir
    и истинные panel.csv, covariates.csv, truth.json в out_dir.
    """
    write_assets_jsonl(f'{raw_dir}/assets.jsonl', data.assets)
    write_pools_jsonl(f'{raw_dir}/pools.jsonl', data.pools)
    write_swaps_csv(f'{raw_dir}/swaps.csv', data.trades)
    write_caps_csv(f'{raw_dir}/caps.csv', data.caps)
    write_series_csv(f'{raw_dir}/series.csv', data.series)

    write_panel_csv(f'{out_dir}/panel.csv', data.panels)
    write_covariates_csv(f'{out_dir}/covariates.csv', data.activity, data.global_set)
    _write_text(f'{out_dir}/truth.json', json.dumps(data.truth, indent=2, sort_keys=True) + '\n')
    logger.info(f'Синтетические данные записаны в {raw_dir} и {out_dir}')
