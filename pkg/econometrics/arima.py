import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.optimize import least_squares
from scipy.signal import lfilter

from econometrics.errors import DegenerateSeries, InsufficientData, NonConvergence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArimaFit:
    order: tuple
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    sigma2: float
    loglik: float
    aic: float
    n_obs: int
    residuals: pd.Series

    @property
    def k(self) -> int:
        return self.order[0] + self.order[2] + 2


def pacf_to_ar(partial) -> np.ndarray:
    """
    Рекурсия Дурбина-Левинсона: частные автокорреляции из (-1, 1) в коэффициенты
    стационарного AR-полинома 1 - sum(phi_i z^i).
    """
    phi = np.zeros(0)
    for r in np.asarray(partial, dtype=float):
        phi = np.r_[phi - r * phi[::-1], r]
    return phi


def _unpack(params: np.ndarray, p: int, q: int) -> tuple:
    mu = params[0]
    phi = pacf_to_ar(np.tanh(params[1:1 + p]))
    # MA-полином 1 + sum(theta_j z^j) обратим, если -theta - стационарный AR
    theta = -pacf_to_ar(np.tanh(params[1 + p:1 + p + q]))
    return mu, phi, theta


def css_residuals(x: np.ndarray, mu: float, phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """
    Остатки условной суммы квадратов начиная с t = p; предвыборочные ошибки MA равны нулю.
    """
    p = len(phi)
    z = x - mu
    u = z[p:].copy()
    for i in range(1, p + 1):
        u -= phi[i - 1] * z[p - i:len(z) - i]
    return lfilter([1.0], np.r_[1.0, theta], u)


def fit_arima(y, order: tuple, condition_on: int = None) -> ArimaFit:
    """
    Оценка ARIMA(p, d, q) по условной сумме квадратов (CSS) ряда, продифференцированного d раз.

    Стационарность AR и обратимость MA обеспечиваются параметризацией через частные
    автокорреляции (tanh), так что оптимизатор работает без ограничений.

    Args:
        y: Ряд уровней (pd.Series или массив) без пропусков.
        order (tuple): (p, d, q).
        condition_on (int): Сколько первых точек разностного ряда исключить из правдоподобия.
            По умолчанию p. Используется, чтобы сравнивать AIC кандидатов на одной выборке.

    Returns:
        ArimaFit: остатки - на исходной сетке y, первые d + max(p, q) точек пропущены.
    """
    p, d, q = (int(v) for v in order)
    if min(p, d, q) < 0:
        raise ValueError(f'Порядок ARIMA не может быть отрицательным: {order}')

    series = y if isinstance(y, pd.Series) else pd.Series(np.asarray(y, dtype=float))
    values = series.to_numpy(dtype=float)
    if np.isnan(values).any():
        raise ValueError('Ряд для ARIMA не должен содержать пропусков')

    x = np.diff(values, n=d) if d else values
    n = len(x)
    if n < 10 * (p + q + 1):
        raise InsufficientData(f'ARIMA{(p, d, q)}: {n} наблюдений после дифференцирования, '
                               f'нужно не меньше {10 * (p + q + 1)}')
    if np.ptp(x) == 0:
        raise DegenerateSeries(f'ARIMA{(p, d, q)}: ряд после дифференцирования постоянен')

    start = p if condition_on is None else int(condition_on)
    if start < p or start >= n:
        raise ValueError(f'condition_on={start} должен быть в диапазоне [{p}, {n})')

    def objective(params):
        mu, phi, theta = _unpack(params, p, q)
        return css_residuals(x, mu, phi, theta)[start - p:]

    x0 = np.r_[x.mean(), np.zeros(p + q)]
    scale = max(np.std(x), 1e-12)
    result = least_squares(objective, x0, method='trf', x_scale=np.r_[scale, np.ones(p + q)],
                           xtol=1e-10, ftol=1e-12, gtol=1e-10, max_nfev=200 * (p + q + 1))
    if result.status <= 0 or not np.all(np.isfinite(result.x)):
        raise NonConvergence(f'ARIMA{(p, d, q)}: {result.message}', best_params=result.x,
                             grad_norm=float(np.max(np.abs(result.grad))) if result.grad is not None else np.nan)

    mu, phi, theta = _unpack(result.x, p, q)
    used = objective(result.x)
    n_eff = len(used)
    sigma2 = float(np.dot(used, used) / n_eff)
    if sigma2 <= 0:
        raise DegenerateSeries(f'ARIMA{(p, d, q)}: нулевая дисперсия остатков')
    loglik = -0.5 * n_eff * (np.log(2 * np.pi * sigma2) + 1)
    k = p + q + 2

    residuals = np.full(len(values), np.nan)
    e = css_residuals(x, mu, phi, theta)
    first = max(p, q)
    residuals[d + first:] = e[first - p:]

    return ArimaFit(order=(p, d, q), ar=phi, ma=theta, intercept=float(mu), sigma2=sigma2,
                    loglik=float(loglik), aic=float(2 * k - 2 * loglik), n_obs=n_eff,
                    residuals=pd.Series(residuals, index=series.index, name=series.name))
