import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class NonPositivePrice(ValueError):
    pass


@dataclass(frozen=True)
class ReturnSeries:
    """
    Ряд на сетке полусуток. Индекс - непрерывный диапазон HalfDayId (coverage),
    пропуски внутри него явные (NaN), значения вне покрытия не хранятся.
    """
    series_id: str
    values: pd.Series

    def __post_init__(self):
        ordinals = [h.ordinal for h in self.values.index]
        if ordinals and ordinals != list(range(ordinals[0], ordinals[0] + len(ordinals))):
            raise ValueError(f'Ряд {self.series_id}: индекс должен быть непрерывным диапазоном полусуток')

    @property
    def coverage(self) -> tuple:
        if self.values.empty:
            return None, None
        return self.values.index[0], self.values.index[-1]

    @property
    def missing(self) -> pd.Series:
        return self.values.isna()

    def __len__(self):
        return len(self.values)

    def on_grid(self, grid) -> pd.Series:
        return self.values.reindex(pd.Index(list(grid), dtype=object))


def check_positive(prices: pd.Series, name: str = ''):
    present = prices.dropna()
    bad = present[present <= 0]
    if not bad.empty:
        raise NonPositivePrice(f'Неположительная цена {name} на {bad.index[0]}: {bad.iloc[0]}')


def log_return(prices: pd.Series, series_id: str = '') -> ReturnSeries:
    """
    r_t = ln(p_t / p_{t-1}). Если хотя бы одна из цен пропущена, r_t пропущена.
    Первая точка покрытия всегда пропущена.

    Raises:
        NonPositivePrice: в ряду есть цена <= 0.
    """
    prices = prices.astype(float)
    check_positive(prices, series_id)
    returns = np.log(prices).diff()
    return ReturnSeries(series_id or str(prices.name or ''), returns.rename(series_id or prices.name))
