import logging
import datetime as dt

import numpy as np
import pandas as pd

from portfolio.returns import NonPositivePrice, ReturnSeries
from timebase.halfday import EquityMarket, Session, is_trading_day, session_alignment

logger = logging.getLogger(__name__)

MARKET_SYMBOLS = {
    EquityMarket.SP500: 'SPR',
    EquityMarket.HANG_SENG: 'HSR',
    EquityMarket.FTSE100: 'FTSER',
}


def session_returns(market: EquityMarket, daily_bars: pd.DataFrame, closed_days=None) -> pd.DataFrame:
    """
    Дневные компоненты доходности индекса по торговым дням:
    overnight(d) = ln(open_d / close_предыдущего торгового дня), intraday(d) = ln(close_d / open_d).

    Args:
        daily_bars (pd.DataFrame): Индекс - datetime.date, столбцы open и close.
    """
    bars = daily_bars[['open', 'close']].astype(float).dropna()
    bars.index = [d if type(d) is dt.date else pd.Timestamp(d).date() for d in bars.index]
    bars = bars.sort_index()
    bars = bars.loc[np.array([is_trading_day(market, d, closed_days) for d in bars.index], dtype=bool)]
    if (bars <= 0).any().any():
        bad = bars[(bars <= 0).any(axis=1)].index[0]
        raise NonPositivePrice(f'{market.value}: неположительная цена открытия или закрытия на {bad}')

    overnight = np.log(bars['open'] / bars['close'].shift(1))
    intraday = np.log(bars['close'] / bars['open'])
    return pd.DataFrame({Session.OVERNIGHT: overnight, Session.INTRADAY: intraday}, index=bars.index)


def global_return_series(market: EquityMarket, daily_bars: pd.DataFrame, grid, closed_days=None) -> ReturnSeries:
    """
    Доходность рынка на сетке полусуток: на каждых полусутках берётся компонента
    (overnight или intraday), которую задаёт session_alignment. Закрытые дни дают 0.
    Первый торговый день без предыдущего закрытия даёт пропуск в overnight-полусутках.
    """
    components = session_returns(market, daily_bars, closed_days)
    values = []
    for half_day in grid:
        if half_day.date not in components.index:
            values.append(0.0)
            continue
        values.append(components.at[half_day.date, session_alignment(market, half_day.half)])

    return ReturnSeries(MARKET_SYMBOLS[market],
                        pd.Series(values, index=pd.Index(list(grid), dtype=object), dtype=float))


def bars_from_series(opens: pd.Series, closes: pd.Series) -> pd.DataFrame:
    """
    Собирает дневные бары из рядов series.csv (<MARKET>_open / <MARKET>_close с индексом datetime.date).
    """
    return pd.concat([opens.rename('open'), closes.rename('close')], axis=1, join='inner')
