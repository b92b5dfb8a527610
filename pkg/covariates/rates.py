import numpy as np
import pandas as pd


def half_day_rate_series(daily_rate: pd.Series, grid) -> pd.Series:
    """
    Ступенчатая интерполяция дневного ряда (годовые проценты) на сетку полусуток:
    обе половины дня d несут последнее известное значение на дату <= d.
    Единицы не меняются. До первого наблюдения значения пропущены.
    """
    grid = list(grid)
    observed = daily_rate.dropna()
    dates = pd.to_datetime(pd.Index([pd.Timestamp(d) for d in observed.index]))
    order = np.argsort(dates.values, kind='stable')
    dates, levels = dates[order], observed.to_numpy(dtype=float)[order]

    targets = pd.to_datetime(pd.Index([pd.Timestamp(h.date) for h in grid]))
    positions = dates.searchsorted(targets, side='right') - 1
    values = np.where(positions >= 0, levels[np.clip(positions, 0, None)] if len(levels) else np.nan, np.nan)
    return pd.Series(values, index=pd.Index(grid, dtype=object), dtype=float, name=daily_rate.name)
