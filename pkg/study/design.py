import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from covariates.activity import MissingSeries, native_return_id, staking_innovation_id
from covariates.global_market import MARKET_SYMBOLS
from timebase.halfday import EquityMarket, half_day_range
from universe.classifier import CHAINS, Chain, PortfolioKind

logger = logging.getLogger(__name__)

INTERCEPT = 'alpha_0'
# Порядок theta-блока: FTSER, HSR, SPR, EURIBOR, HIBOR, TREA
THETA_SERIES = (MARKET_SYMBOLS[EquityMarket.FTSE100], MARKET_SYMBOLS[EquityMarket.HANG_SENG],
                MARKET_SYMBOLS[EquityMarket.SP500], 'EURIBOR', 'HIBOR', 'TREA')
GAMMA_SERIES = (native_return_id('BTC'),) + tuple(native_return_id(c.native) for c in CHAINS) \
               + tuple(staking_innovation_id(c) for c in CHAINS)
TARGET_KINDS = (PortfolioKind.ALL, PortfolioKind.NON_CEX, PortfolioKind.LOCAL)


class MissingDummies(LookupError):
    pass


class WindowTooShort(ValueError):
    pass


class Variant(Enum):
    LINEAR_BASELINE = 'linear_baseline'
    LINEAR_MACRO = 'linear_macro'
    LINEAR_MACRO_ACTIVITY = 'linear_macro_activity'
    NONLINEAR_BASELINE = 'nonlinear_baseline'
    NONLINEAR_MACRO = 'nonlinear_macro'
    NONLINEAR_EXTREME = 'nonlinear_extreme'

    @property
    def is_linear(self) -> bool:
        return self.value.startswith('linear')

    @property
    def has_macro(self) -> bool:
        return self in (Variant.LINEAR_MACRO, Variant.LINEAR_MACRO_ACTIVITY, Variant.NONLINEAR_MACRO,
                        Variant.NONLINEAR_EXTREME)


@dataclass(frozen=True)
class ColumnPlan:
    name: str
    label: str


@dataclass(frozen=True)
class RegressionSpec:
    chain: Chain
    kind: PortfolioKind
    variant: Variant
    columns: tuple
    window: tuple

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f'Имена столбцов спецификации не уникальны: {names}')

    @property
    def labels(self) -> dict:
        return {c.name: c.label for c in self.columns}


@dataclass(frozen=True)
class DesignMatrix:
    spec: RegressionSpec
    y: pd.Series
    X: pd.DataFrame
    n_dropped: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_regressors(self) -> int:
        return self.X.shape[1] - 1


def rivals(chain: Chain) -> list:
    return [c for c in CHAINS if c != chain]


class _SeriesSource:
    """
    Доступ к рядам панелей и ковариат на окне, расширенном на одни полусутки назад (для лагов).
    """

    def __init__(self, panels: dict, covariates: dict, window: tuple):
        start, end = window
        self.index = pd.Index(half_day_range(start, end), dtype=object)
        self.extended = pd.Index([start.predecessor()] + list(self.index), dtype=object)
        self.panels = panels
        self.covariates = covariates

    def panel(self, chain: Chain, kind: PortfolioKind) -> pd.Series:
        if chain not in self.panels:
            raise MissingSeries(f'Нет панели сети {chain.value}')
        return self.panels[chain].series(kind).values.reindex(self.extended).astype(float)

    def covariate(self, series_id: str) -> pd.Series:
        if series_id not in self.covariates:
            raise MissingSeries(f'Нет ковариаты {series_id}')
        return self.covariates[series_id].reindex(self.extended).astype(float)

    @staticmethod
    def lag(series: pd.Series) -> pd.Series:
        return series.shift(1)

    def on_window(self, series: pd.Series) -> pd.Series:
        return series.iloc[1:]


def _theta_block(source: _SeriesSource) -> list:
    return [(ColumnPlan(f'theta_{i}', series_id), source.covariate(series_id))
            for i, series_id in enumerate(THETA_SERIES)]


def _finish(spec: RegressionSpec, source: _SeriesSource, y: pd.Series, columns: list,
            min_rows: int) -> DesignMatrix:
    frame = pd.DataFrame({plan.name: source.on_window(values) for plan, values in columns}, index=source.index)
    frame.insert(0, INTERCEPT, 1.0)
    target = source.on_window(y)

    complete = frame.notna().all(axis=1) & target.notna() & np.isfinite(frame).all(axis=1)
    X, y_kept = frame[complete], target[complete]
    dropped = int((~complete).sum())
    if dropped:
        logger.info(f'{spec.variant.value} {spec.chain.value}/{spec.kind.value}: построчно удалено {dropped} '
                    f'из {len(frame)} полусуток')

    required = max(min_rows, 2 * X.shape[1])
    if len(X) < required:
        raise WindowTooShort(f'{spec.variant.value} {spec.chain.value}/{spec.kind.value}: после удаления '
                             f'пропусков осталось {len(X)} полусуток, нужно не меньше {required}')
    return DesignMatrix(spec=spec, y=y_kept.rename(f'R_{spec.kind.value}_{spec.chain.value}'), X=X,
                        n_dropped=dropped)


def build_linear_spec(chain, kind, variant, panels: dict, covariates: dict, window: tuple,
                      min_rows: int = 0) -> DesignMatrix:
    """
    Линейная спецификация: лаг собственного портфеля (alpha_1), CEX-портфель своей сети (beta_0),
    All-портфели четырёх других сетей (beta_1..beta_4), далее theta-блок глобальных рынков
    и gamma-блок активности (BTC, нативные токены, инновации ставок) для соответствующих вариантов.
    """
    chain, kind, variant = Chain.parse(chain), PortfolioKind.parse(kind), Variant(variant)
    if not variant.is_linear:
        raise ValueError(f'{variant.value} не является линейной спецификацией')
    source = _SeriesSource(panels, covariates, window)

    own = source.panel(chain, kind)
    columns = [
        (ColumnPlan('alpha_1', f'R^{kind.value}_{chain.value}(t-1)'), source.lag(own)),
        (ColumnPlan('beta_0', f'R^CEX_{chain.value}'), source.panel(chain, PortfolioKind.CEX)),
    ]
    for i, rival in enumerate(rivals(chain), start=1):
        columns.append((ColumnPlan(f'beta_{i}', f'R^All_{rival.value}'), source.panel(rival, PortfolioKind.ALL)))
    if variant.has_macro:
        columns.extend(_theta_block(source))
    if variant == Variant.LINEAR_MACRO_ACTIVITY:
        columns.extend((ColumnPlan(f'gamma_{i}', series_id), source.covariate(series_id))
                       for i, series_id in enumerate(GAMMA_SERIES))

    spec = RegressionSpec(chain, kind, variant, tuple(plan for plan, _ in columns), window)
    return _finish(spec, source, own, columns, min_rows)


def build_nonlinear_spec(chain, kind, variant, panels: dict, covariates: dict, window: tuple,
                         dummies: dict = None, min_rows: int = 0) -> DesignMatrix:
    """
    Нелинейная спецификация: CEX-портфель своей сети (alpha_1), тройка собственного лага
    {R(t-1), R(t-1) * SR_own(t-1), R(t-1) * R_native_own(t-1)} (beta_00..beta_02) и для каждой
    другой сети i блок R^All_i(t) * {1, SR_i(t), R_native_i(t)} (beta_i0..beta_i2).
    nonlinear_extreme добавляет R^All_i * {D^U_i, D^L_i} (beta_i3, beta_i4); macro и extreme - theta-блок.

    Args:
        dummies (dict): {Chain: DummyPair}, обязателен только для nonlinear_extreme.
    """
    chain, kind, variant = Chain.parse(chain), PortfolioKind.parse(kind), Variant(variant)
    if variant.is_linear:
        raise ValueError(f'{variant.value} не является нелинейной спецификацией')
    if variant == Variant.NONLINEAR_EXTREME:
        missing = [r.value for r in rivals(chain) if not dummies or r not in dummies]
        if missing:
            raise MissingDummies(f'Нет индикаторов экстремальных доходностей для сетей: {", ".join(missing)}')
    source = _SeriesSource(panels, covariates, window)

    own = source.panel(chain, kind)
    own_lag = source.lag(own)
    own_sr = source.covariate(staking_innovation_id(chain))
    own_native = source.covariate(native_return_id(chain.native))
    columns = [
        (ColumnPlan('alpha_1', f'R^CEX_{chain.value}'), source.panel(chain, PortfolioKind.CEX)),
        (ColumnPlan('beta_00', f'R^{kind.value}_{chain.value}(t-1)'), own_lag),
        (ColumnPlan('beta_01', f'R^{kind.value}_{chain.value}(t-1) x SR_{chain.value}(t-1)'),
         own_lag * source.lag(own_sr)),
        (ColumnPlan('beta_02', f'R^{kind.value}_{chain.value}(t-1) x R_{chain.native}(t-1)'),
         own_lag * source.lag(own_native)),
    ]
    for i, rival in enumerate(rivals(chain), start=1):
        r_all = source.panel(rival, PortfolioKind.ALL)
        name = f'R^All_{rival.value}'
        columns.extend([
            (ColumnPlan(f'beta_{i}0', name), r_all),
            (ColumnPlan(f'beta_{i}1', f'{name} x SR_{rival.value}'),
             r_all * source.covariate(staking_innovation_id(rival))),
            (ColumnPlan(f'beta_{i}2', f'{name} x R_{rival.native}'),
             r_all * source.covariate(native_return_id(rival.native))),
        ])
    if variant == Variant.NONLINEAR_EXTREME:
        for i, rival in enumerate(rivals(chain), start=1):
            r_all = source.panel(rival, PortfolioKind.ALL)
            pair = dummies[rival]
            columns.extend([
                (ColumnPlan(f'beta_{i}3', f'R^All_{rival.value} x D^U_{rival.value}'),
                 r_all * pair.upper.reindex(source.extended)),
                (ColumnPlan(f'beta_{i}4', f'R^All_{rival.value} x D^L_{rival.value}'),
                 r_all * pair.lower.reindex(source.extended)),
            ])
    if variant.has_macro:
        columns.extend(_theta_block(source))

    spec = RegressionSpec(chain, kind, variant, tuple(plan for plan, _ in columns), window)
    return _finish(spec, source, own, columns, min_rows)


def build_spec(chain, kind, variant, panels: dict, covariates: dict, window: tuple, dummies: dict = None,
               min_rows: int = 0) -> DesignMatrix:
    variant = Variant(variant)
    if variant.is_linear:
        return build_linear_spec(chain, kind, variant, panels, covariates, window, min_rows)
    return build_nonlinear_spec(chain, kind, variant, panels, covariates, window, dummies, min_rows)
