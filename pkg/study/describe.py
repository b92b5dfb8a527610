import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from econometrics.diagnostics import ZeroVariance, adf_test, jarque_bera
from econometrics.errors import InsufficientData
from ingest.store import write_csv
from universe.classifier import PortfolioKind

logger = logging.getLogger(__name__)

DESCRIBE_HEADER = ['series_id', 'Mean', 'Std', 'Skewness', 'Kurtosis', 'Jarque-Bera', 'ADF', 'ARIMA', 'AIC']


@dataclass(frozen=True)
class SeriesSummary:
    series_id: str
    mean: float
    std: float
    skewness: float
    kurtosis: float            # избыточный эксцесс
    jarque_bera: str           # статистика со звёздочками, например '152.3412***'
    adf: str
    arima: Optional[tuple] = None
    aic: Optional[float] = None

    def as_row(self) -> list:
        return [self.series_id, _fixed(self.mean), _fixed(self.std), _fixed(self.skewness), _fixed(self.kurtosis),
                self.jarque_bera, self.adf, '' if self.arima is None else '({},{},{})'.format(*self.arima),
                '' if self.aic is None else _fixed(self.aic)]


def _fixed(value) -> str:
    if value is None or math.isnan(value):
        return ''
    return f'{value:.4f}'


def describe_series(series: pd.Series, level: bool = False, arima: tuple = None) -> SeriesSummary:
    """
    Строка описательной статистики: среднее, стандартное отклонение (ddof=1), асимметрия,
    избыточный эксцесс, Jarque-Bera и ADF со звёздочками уровня отвержения.

    Args:
        series (pd.Series): ряд доходностей или инноваций; пропуски игнорируются.
        level (bool): для рядов уровней дополнительно заполняются порядок ARIMA и AIC.
        arima (tuple): ((p, d, q), aic) из arima_report.csv.
    """
    values = series.dropna().to_numpy(dtype=float)
    series_id = str(series.name)
    if len(values) < 2:
        raise InsufficientData(f'Ряд {series_id}: {len(values)} наблюдений')

    jb_text = adf_text = ''
    try:
        jb = jarque_bera(values)
        jb_text = f'{jb.statistic:.4f}{jb.stars}'
    except (InsufficientData, ZeroVariance) as e:
        logger.warning(f'Ряд {series_id}: Jarque-Bera не вычислен: {e}')
    try:
        adf = adf_test(values)
        adf_text = f'{adf.statistic:.4f}{adf.stars}'
    except (InsufficientData, ZeroVariance) as e:
        logger.warning(f'Ряд {series_id}: ADF не вычислен: {e}')

    constant = np.ptp(values) == 0
    order, aic = (arima if level and arima else (None, None))
    return SeriesSummary(
        series_id=series_id,
        mean=float(np.mean(values)),
        std=float(np.std(values, ddof=1)),
        skewness=math.nan if constant else float(stats.skew(values, bias=True)),
        kurtosis=math.nan if constant else float(stats.kurtosis(values, fisher=True, bias=True)),
        jarque_bera=jb_text,
        adf=adf_text,
        arima=tuple(order) if order is not None else None,
        aic=aic,
    )


def describe_all(panels: dict, covariates: dict, arima_orders: dict = None, levels: dict = None) -> list:
    """
    Описательная статистика панелей (R^kind_chain) и всех ковариат.
    Для инноваций, у которых есть запись в arima_orders, описывается ряд уровней из levels
    (ставка на сетке, а не её остатки ARIMA) и добавляются порядок ARIMA и AIC.
    """
    arima_orders = arima_orders or {}
    levels = levels or {}
    targets = []
    for chain, panel in panels.items():
        for kind in PortfolioKind:
            targets.append((panel.series(kind).values.rename(f'R^{kind.value}_{chain.value}'), None))
    for series_id in sorted(covariates):
        series = levels.get(series_id, covariates[series_id])
        targets.append((series.rename(series_id), arima_orders.get(series_id)))

    summaries = []
    for series, arima in targets:
        try:
            summaries.append(describe_series(series, level=arima is not None, arima=arima))
        except InsufficientData as e:
            logger.warning(f'Ряд {series.name} пропущен: {e}')
    return summaries


def write_describe_csv(path: str, summaries: list):
    write_csv(path, DESCRIBE_HEADER, [summary.as_row() for summary in summaries], with_schema_header=False)
