import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from statsmodels.stats.diagnostic import acorr_ljungbox
from statsmodels.tsa.stattools import adfuller

from econometrics.errors import InsufficientData

logger = logging.getLogger(__name__)

REJECTION_STARS = {'1%': '***', '5%': '**', '10%': '*', 'none': ''}
# Критические значения chi2(2) для уровней 1%, 5%, 10%
JB_CRITICAL = (('1%', 9.21), ('5%', 5.99), ('10%', 4.61))


class ZeroVariance(ValueError):
    pass


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    pvalue: float
    rejection: str
    used_lags: int
    n_obs: int
    critical_values: dict

    @property
    def stars(self) -> str:
        return REJECTION_STARS[self.rejection]


@dataclass(frozen=True)
class JarqueBeraResult:
    statistic: float
    skewness: float
    excess_kurtosis: float
    pvalue: float

    @property
    def rejection(self) -> str:
        for level, critical in JB_CRITICAL:
            if self.statistic >= critical:
                return level
        return 'none'

    @property
    def stars(self) -> str:
        return REJECTION_STARS[self.rejection]


def _clean(y) -> np.ndarray:
    values = np.asarray(y, dtype=float)
    return values[~np.isnan(values)]


def default_adf_lags(n: int) -> int:
    return int(np.floor(12 * (n / 100) ** 0.25))


def adf_test(y, max_lags: int = None) -> AdfResult:
    """
    Расширенный тест Дики-Фуллера с константой; число лагов выбирается по AIC до max_lags.
    Уровень отвержения сравнивается с критическими значениями МакКиннона для случая с константой.
    """
    values = _clean(y)
    n = len(values)
    if n < 25:
        raise InsufficientData(f'ADF: {n} наблюдений, нужно не меньше 25')
    if np.ptp(values) == 0:
        raise ZeroVariance('ADF: ряд постоянен')

    max_lags = default_adf_lags(n) if max_lags is None else int(max_lags)
    statistic, pvalue, used_lags, n_obs, critical_values, _ = adfuller(
        values, maxlag=max_lags, regression='c', autolag='AIC')

    rejection = 'none'
    for level in ('1%', '5%', '10%'):
        if statistic < critical_values[level]:
            rejection = level
            break
    return AdfResult(statistic=float(statistic), pvalue=float(pvalue), rejection=rejection,
                     used_lags=int(used_lags), n_obs=int(n_obs), critical_values=dict(critical_values))


def jarque_bera(y) -> JarqueBeraResult:
    """
    JB = n/6 * (S^2 + K^2/4), где S - выборочная асимметрия, K - избыточный эксцесс (моментные оценки).
    """
    values = _clean(y)
    n = len(values)
    if n < 8:
        raise InsufficientData(f'Jarque-Bera: {n} наблюдений, нужно не меньше 8')
    if np.var(values) == 0:
        raise ZeroVariance('Jarque-Bera: нулевая дисперсия ряда')

    skewness = float(stats.skew(values, bias=True))
    excess_kurtosis = float(stats.kurtosis(values, fisher=True, bias=True))
    statistic = n / 6.0 * (skewness ** 2 + excess_kurtosis ** 2 / 4.0)
    return JarqueBeraResult(statistic=float(statistic), skewness=skewness, excess_kurtosis=excess_kurtosis,
                            pvalue=float(stats.chi2.sf(statistic, 2)))


def ljung_box(residuals, lags: int, model_df: int = 0) -> tuple:
    """
    Q-статистика Льюнга-Бокса против chi2(lags - model_df).

    Returns:
        tuple: (statistic, pvalue)
    """
    values = _clean(residuals)
    n = len(values)
    if lags < 1 or lags >= n / 4:
        raise InsufficientData(f'Ljung-Box: lags={lags} при {n} наблюдениях (нужно 1 <= lags < n/4)')
    if lags - model_df < 1:
        raise ValueError(f'Ljung-Box: число лагов {lags} должно превышать число параметров модели {model_df}')

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        table = acorr_ljungbox(values, lags=[lags], model_df=model_df, return_df=True)
    return float(table['lb_stat'].iloc[-1]), float(table['lb_pvalue'].iloc[-1])
