from dataclasses import dataclass

import numpy as np
import pandas as pd

from econometrics.errors import InsufficientData

MIN_REFERENCE_OBSERVATIONS = 40


class DegenerateDistribution(ValueError):
    pass


@dataclass(frozen=True)
class DummyPair:
    upper: pd.Series
    lower: pd.Series
    thresholds: tuple  # (нижний квантиль, верхний квантиль)


def extreme_dummies(reference: pd.Series, tail: float = 0.05) -> DummyPair:
    """
    Индикаторы экстремальных доходностей по эмпирическим квантилям всей выборки
    (линейная интерполяция порядковых статистик, тип 7). Сравнения нестрогие.
    Там, где reference пропущен, индикаторы тоже пропущены.
    """
    if not 0 < tail < 0.5:
        raise ValueError(f'Вероятность хвоста должна лежать в (0, 0.5), получено: {tail}')
    values = reference.dropna().to_numpy(dtype=float)
    if len(values) < MIN_REFERENCE_OBSERVATIONS:
        raise InsufficientData(f'Для квантилей нужно не меньше {MIN_REFERENCE_OBSERVATIONS} наблюдений, '
                               f'получено {len(values)}')

    low, high = np.quantile(values, [tail, 1 - tail], method='linear')
    if low == high:
        raise DegenerateDistribution(f'Квантили {tail} и {1 - tail} совпадают: {low}')

    defined = reference.notna()
    upper = (reference >= high).astype(float).where(defined)
    lower = (reference <= low).astype(float).where(defined)
    return DummyPair(upper=upper, lower=lower, thresholds=(float(low), float(high)))
