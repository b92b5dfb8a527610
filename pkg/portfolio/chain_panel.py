import math
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ingest.store import format_float, read_csv_rows, write_csv
from portfolio.returns import ReturnSeries, check_positive
from timebase.halfday import HalfDayId
from universe.classifier import CHAINS, Chain, PortfolioKind

logger = logging.getLogger(__name__)

PANEL_HEADER = ['chain', 'kind', 'date', 'half', 'value', 'missing_flag']


class EmptyPortfolio(ValueError):
    pass


def portfolio_weights(member_returns: dict, caps: dict) -> dict:
    """
    Веса w_i = cap_i / sum(cap) по активам, у которых на t есть и доходность, и капитализация.

    Raises:
        EmptyPortfolio: нет ни одного актива с доходностью, капитализацией и cap > 0.
    """
    eligible = {}
    for asset_id, r in member_returns.items():
        cap = caps.get(asset_id)
        if r is None or cap is None or math.isnan(r) or math.isnan(cap):
            continue
        if cap < 0:
            raise ValueError(f'Отрицательная капитализация у {asset_id}: {cap}')
        eligible[asset_id] = cap

    total = math.fsum(eligible.values())
    if total <= 0:
        raise EmptyPortfolio('В портфеле нет ни одного актива с доходностью и положительной капитализацией')
    return {asset_id: cap / total for asset_id, cap in eligible.items()}


def portfolio_return(member_returns: dict, caps: dict) -> float:
    weights = portfolio_weights(member_returns, caps)
    return math.fsum(w * member_returns[asset_id] for asset_id, w in weights.items())


@dataclass(frozen=True)
class ChainPanel:
    chain: Chain
    all: ReturnSeries
    cex: ReturnSeries
    non_cex: ReturnSeries
    local: ReturnSeries
    weight_log: dict = field(default_factory=dict)  # PortfolioKind -> DataFrame (полусутки x актив)

    def series(self, kind) -> ReturnSeries:
        kind = PortfolioKind.parse(kind)
        return {
            PortfolioKind.ALL: self.all,
            PortfolioKind.CEX: self.cex,
            PortfolioKind.NON_CEX: self.non_cex,
            PortfolioKind.LOCAL: self.local,
        }[kind]


def _frame_on(series_by_asset: dict, index: list) -> pd.DataFrame:
    index = pd.Index(index, dtype=object)
    columns = sorted(series_by_asset)
    frame = pd.DataFrame({a: series_by_asset[a].reindex(index) for a in columns}, index=index, columns=columns)
    return frame.astype(float)


def _weighted(returns: pd.DataFrame, lagged_caps: pd.DataFrame, mask: pd.DataFrame) -> tuple:
    eligible = mask & returns.notna() & lagged_caps.notna()
    caps = lagged_caps.where(eligible)
    if (caps < 0).any().any():
        raise ValueError('Капитализация не может быть отрицательной')
    total = caps.sum(axis=1, min_count=1)
    weights = caps.div(total.where(total > 0), axis=0)
    values = (weights * returns).sum(axis=1, min_count=1)
    values[~(total > 0)] = np.nan
    return values, weights.where(eligible)


def build_chain_panel(chain: Chain, memberships: dict, prices: dict, caps: dict, grid) -> ChainPanel:
    """
    Строит четыре ряда портфелей сети (All, CEX, nonCEX, Local) на сетке полусуток.

    Доходности активов - логарифмические по ценам в нативном токене; веса - капитализация
    на предыдущих полусутках (t-1). Активы без доходности или капитализации на t в веса не
    входят, остальные веса перенормируются. Полусутки без единого подходящего актива
    отмечаются пропуском (EmptyPortfolio) и попадают в журнал предупреждений.

    Args:
        chain (Chain): Сеть.
        memberships (dict): {HalfDayId: {(Chain, PortfolioKind): frozenset(asset_id)}} на каждой точке grid.
        prices (dict): {asset_id: pd.Series} цены по HalfDayId.
        caps (dict): {asset_id: pd.Series} усреднённая капитализация по HalfDayId.
        grid (list): Непрерывная сетка HalfDayId.
    """
    chain = Chain.parse(chain)
    grid = list(grid)
    extended = [grid[0].predecessor()] + grid

    assets = set()
    for half_day in grid:
        for kind in PortfolioKind:
            assets |= memberships[half_day][(chain, kind)]
    assets = sorted(assets)

    for asset_id in assets:
        if asset_id in prices:
            check_positive(prices[asset_id], asset_id)
    price_frame = _frame_on({a: prices[a] for a in assets if a in prices}, extended).reindex(columns=assets)
    cap_frame = _frame_on({a: caps[a] for a in assets if a in caps}, extended).reindex(columns=assets)

    returns = np.log(price_frame).diff().iloc[1:]
    lagged_caps = cap_frame.shift(1).iloc[1:]

    index = pd.Index(grid, dtype=object)
    series, weight_log = {}, {}
    for kind in PortfolioKind:
        mask = pd.DataFrame(
            [[a in memberships[h][(chain, kind)] for a in assets] for h in grid],
            index=index, columns=assets, dtype=bool,
        )
        values, weights = _weighted(returns, lagged_caps, mask)
        empty = int(values.isna().sum())
        if empty:
            logger.warning(f'{chain.value}/{kind.value}: {empty} из {len(grid)} полусуток без активов (EmptyPortfolio)')
        series[kind] = ReturnSeries(f'R_{kind.value}_{chain.value}', values.astype(float))
        weight_log[kind] = weights.dropna(axis=1, how='all')

    return ChainPanel(chain=chain, all=series[PortfolioKind.ALL], cex=series[PortfolioKind.CEX],
                      non_cex=series[PortfolioKind.NON_CEX], local=series[PortfolioKind.LOCAL],
                      weight_log=weight_log)


def build_panels(memberships: dict, prices: dict, caps: dict, grid, chains=CHAINS, n_jobs: int = 1) -> dict:
    """
    Параллельная сборка панелей по сетям. Returns: {Chain: ChainPanel}.
    """
    built = Parallel(n_jobs=n_jobs)(
        delayed(build_chain_panel)(chain, memberships, prices, caps, grid) for chain in chains
    )
    return {panel.chain: panel for panel in built}


def write_panel_csv(path: str, panels: dict):
    rows = []
    for chain in CHAINS:
        if chain not in panels:
            continue
        for kind in PortfolioKind:
            for half_day, value in panels[chain].series(kind).values.items():
                missing = math.isnan(value)
                rows.append([chain.value, kind.value, half_day.date.isoformat(), half_day.half.name,
                             format_float(value), int(missing)])
    write_csv(path, PANEL_HEADER, rows, with_schema_header=False)


def read_panel_csv(path: str) -> dict:
    """
    Returns:
        dict: {Chain: ChainPanel} без журнала весов.
    """
    grouped = {}
    for row in read_csv_rows(path, PANEL_HEADER):
        key = (Chain.parse(row['chain']), PortfolioKind.parse(row['kind']))
        value = float(row['value']) if row['missing_flag'].strip() == '0' else math.nan
        grouped.setdefault(key, {})[HalfDayId.parse(row['date'], row['half'])] = value

    panels = {}
    for chain in CHAINS:
        if not any(c == chain for c, _ in grouped):
            continue
        series = {}
        for kind in PortfolioKind:
            values = grouped.get((chain, kind), {})
            keys = sorted(values)
            series[kind] = ReturnSeries(f'R_{kind.value}_{chain.value}',
                                        pd.Series([values[k] for k in keys], index=pd.Index(keys, dtype=object),
                                                  dtype=float))
        panels[chain] = ChainPanel(chain=chain, all=series[PortfolioKind.ALL], cex=series[PortfolioKind.CEX],
                                   non_cex=series[PortfolioKind.NON_CEX], local=series[PortfolioKind.LOCAL])
    return panels
