import logging
from dataclasses import dataclass
from itertools import product

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from econometrics.arima import fit_arima
from econometrics.diagnostics import ZeroVariance, adf_test, ljung_box
from econometrics.errors import DegenerateSeries, InsufficientData, NonConvergence

logger = logging.getLogger(__name__)

MIN_OBSERVATIONS = 50
DEFAULT_ARIMA_BOUNDS = {'max_p': 3, 'max_d': 1, 'max_q': 3}
WHITENESS_LAGS = 10


@dataclass(frozen=True)
class InnovationResult:
    residuals: pd.Series
    order: tuple
    aic: float
    level: pd.Series = None
    ljung_box: tuple = (np.nan, np.nan)


def _contiguous(raw: pd.Series) -> pd.Series:
    """
    Отрезает пропуски по краям и переносит последнее значение через внутренние пропуски.
    """
    defined = raw.notna().to_numpy()
    if not defined.any():
        return raw.iloc[0:0]
    first, last = np.argmax(defined), len(defined) - np.argmax(defined[::-1])
    segment = raw.iloc[first:last]
    gaps = int(segment.isna().sum())
    if gaps:
        logger.info(f'Ряд {raw.name}: {gaps} внутренних пропусков заполнены предыдущим уровнем')
    return segment.ffill()


def _unit_root_order(values: np.ndarray, max_d: int) -> int:
    d = 0
    while d < max_d:
        try:
            if adf_test(np.diff(values, n=d) if d else values).rejection in ('1%', '5%'):
                break
        except (ZeroVariance, InsufficientData):
            break
        d += 1
    return d


def _try_fit(series, order, condition_on):
    try:
        return fit_arima(series, order, condition_on=condition_on)
    except (InsufficientData, NonConvergence, DegenerateSeries) as e:
        logger.debug(f'ARIMA{order} отброшен: {e}')
        return None


def _whiteness(residuals: pd.Series, order: tuple) -> tuple:
    p, _, q = order
    try:
        return ljung_box(residuals.dropna().to_numpy(dtype=float), WHITENESS_LAGS, model_df=p + q)
    except (InsufficientData, ZeroVariance, ValueError) as e:
        logger.debug(f'Ljung-Box для ARIMA{order} не посчитан: {e}')
        return np.nan, np.nan


def innovation_series(raw: pd.Series, max_p: int = 3, max_d: int = 1, max_q: int = 3,
                      differencing: str = 'aic', n_jobs: int = 1) -> InnovationResult:
    """
    Инновации ряда уровней: остатки ARIMA(p, d, q) с минимальным AIC.

    По умолчанию (differencing='aic') d перебирается вместе с p и q в пределах max_d.
    При differencing='adf' d фиксируется тестом на единичный корень (ADF, 5%). Все кандидаты
    оцениваются на общей выборке (одинаковый прогрев), чтобы их AIC были сравнимы. Остатки
    выравниваются на исходную сетку: первые d + max(p, q) точек и половины, где уровня не было,
    остаются пропусками. Для выбранной модели считается Ljung-Box на 10 лагах (df = 10 - p - q).

    Постоянный ряд даёт нулевые инновации, порядок (0, 0, 0) и AIC = NaN.
    """
    if differencing not in ('adf', 'aic'):
        raise ValueError(f'differencing должен быть adf или aic, получено: {differencing!r}')
    segment = _contiguous(raw)
    if len(segment) < MIN_OBSERVATIONS:
        raise InsufficientData(f'Ряд {raw.name}: {len(segment)} наблюдений, нужно не меньше {MIN_OBSERVATIONS}')

    values = segment.to_numpy(dtype=float)
    if np.ptp(values) == 0:
        logger.warning(f'Ряд {raw.name} постоянен: инновации равны нулю')
        return InnovationResult(residuals=raw.where(raw.isna(), 0.0).astype(float), order=(0, 0, 0), aic=np.nan,
                                level=raw)

    if differencing == 'adf':
        d_values = [_unit_root_order(values, max_d)]
    else:
        d_values = list(range(max_d + 1))
    burn_in = max(d_values) + max(max_p, max_q)

    candidates = [(p, d, q) for d, p, q in product(d_values, range(max_p + 1), range(max_q + 1))]
    fits = Parallel(n_jobs=n_jobs)(
        delayed(_try_fit)(segment, order, burn_in - order[1]) for order in candidates
    )
    fits = [fit for fit in fits if fit is not None]
    if not fits:
        raise NonConvergence(f'Ряд {raw.name}: ни один из {len(candidates)} порядков ARIMA не оценён')

    best = min(fits, key=lambda fit: (fit.aic, sum(fit.order), fit.order))
    whiteness = _whiteness(best.residuals, best.order)
    logger.info(f'Ряд {raw.name}: выбран ARIMA{best.order}, AIC={best.aic:.4f}, Ljung-Box p={whiteness[1]:.3f}')
    # заполненные внутренние пропуски не дают инноваций
    residuals = best.residuals.reindex(raw.index).where(raw.notna())
    return InnovationResult(residuals=residuals.rename(raw.name), order=best.order, aic=best.aic, level=raw,
                            ljung_box=whiteness)
