import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.signal import lfilter, lfiltic
from scipy.special import expit, logit, softmax
from statsmodels.tools.numdiff import approx_fprime, approx_hess3

from econometrics.errors import InsufficientData, NonConvergence, SingularDesign

logger = logging.getLogger(__name__)

PERSISTENCE_CAP = 1 - 1e-6
GRADIENT_TOLERANCE = 1e-4
DEFAULT_RESTARTS = 5


class EstimationMode(Enum):
    JOINT = 'joint'
    TWO_STEP = 'two_step'


@dataclass(frozen=True)
class GjrParams:
    omega: float
    arch: tuple = ()
    leverage: tuple = ()
    garch: tuple = ()

    @property
    def order(self) -> tuple:
        return len(self.arch), len(self.leverage), len(self.garch)

    @property
    def persistence(self) -> float:
        # E[I(e<0)] = 1/2 для симметричных инноваций
        return float(sum(self.arch) + 0.5 * sum(self.leverage) + sum(self.garch))

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1 - self.persistence)

    def names(self) -> list:
        p, o, q = self.order
        return (['omega'] + [f'alpha_{i}' for i in range(1, p + 1)] + [f'gamma_{j}' for j in range(1, o + 1)]
                + [f'beta_{k}' for k in range(1, q + 1)])

    def as_vector(self) -> np.ndarray:
        return np.r_[self.omega, self.arch, self.leverage, self.garch].astype(float)

    @classmethod
    def from_vector(cls, vector, order: tuple) -> 'GjrParams':
        p, o, q = order
        vector = np.asarray(vector, dtype=float)
        return cls(omega=float(vector[0]), arch=tuple(vector[1:1 + p]), leverage=tuple(vector[1 + p:1 + p + o]),
                   garch=tuple(vector[1 + p + o:1 + p + o + q]))


def conditional_variance(e: np.ndarray, params: GjrParams, backcast: float) -> np.ndarray:
    """
    sigma2_t = omega + sum(alpha_i e2_{t-i}) + sum(gamma_j e2_{t-j} I(e_{t-j} < 0)) + sum(beta_k sigma2_{t-k}).

    До начала выборки e2 и sigma2 заменяются на backcast, а e2 * I - на backcast / 2.
    Рекурсия вычисляется фильтром без цикла по t.
    """
    p, o, q = params.order
    m = max(p, o, q, 1)
    e2 = e ** 2
    driver = np.full(len(e), params.omega, dtype=float)
    if p:
        padded = np.r_[np.full(m, backcast), e2]
        driver += lfilter(np.r_[0.0, params.arch], [1.0], padded)[m:]
    if o:
        padded = np.r_[np.full(m, 0.5 * backcast), e2 * (e < 0)]
        driver += lfilter(np.r_[0.0, params.leverage], [1.0], padded)[m:]
    if not q:
        return driver
    a = np.r_[1.0, -np.asarray(params.garch)]
    zi = lfiltic([1.0], a, np.full(q, backcast))
    sigma2, _ = lfilter([1.0], a, driver, zi=zi)
    return sigma2


def gaussian_loglik_obs(e: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    return -0.5 * (np.log(2 * np.pi) + np.log(sigma2) + e ** 2 / sigma2)


def gjr_loglik(e: np.ndarray, params: GjrParams, backcast: float) -> float:
    sigma2 = conditional_variance(np.asarray(e, dtype=float), params, backcast)
    if np.any(sigma2 <= 0) or not np.all(np.isfinite(sigma2)):
        return -np.inf
    return float(gaussian_loglik_obs(e, sigma2).sum())


@dataclass(frozen=True)
class FitResult:
    order: tuple
    params: pd.Series          # mean.* и variance.*
    stderr: pd.Series
    tstats: pd.Series
    robust_tstats: Optional[pd.Series]
    cov: pd.DataFrame
    loglik: float
    aic: float
    bic: float
    r2: float
    adj_r2: float
    n_obs: int
    converged: bool
    grad_norm: float
    at_boundary: bool
    residuals: pd.Series
    conditional_variance: pd.Series
    mode: EstimationMode = EstimationMode.JOINT
    extra: dict = field(default_factory=dict)

    @staticmethod
    def _block(series: pd.Series, prefix: str) -> pd.Series:
        block = series[[name for name in series.index if name.startswith(prefix)]]
        return block.rename(lambda name: name[len(prefix):])

    @property
    def mean_coefficients(self) -> pd.Series:
        return self._block(self.params, 'mean.')

    @property
    def mean_tstats(self) -> pd.Series:
        return self._block(self.tstats, 'mean.')

    @property
    def mean_stderr(self) -> pd.Series:
        return self._block(self.stderr, 'mean.')

    @property
    def variance(self) -> GjrParams:
        return GjrParams.from_vector(self._block(self.params, 'variance.').to_numpy(), self.order)

    @property
    def variance_tstats(self) -> pd.Series:
        return self._block(self.tstats, 'variance.')

    @property
    def standardized_residuals(self) -> pd.Series:
        return self.residuals / np.sqrt(self.conditional_variance)


class _GjrLikelihood:
    """
    Правдоподобие регрессии с ошибками GJR-GARCH в стандартизованных единицах.

    Неограниченные параметры: [b (k), log omega, logit персистентности, логиты долей].
    Компоненты персистентности неотрицательны: alpha_i, c_j (alpha_j + gamma_j при j <= p, иначе gamma_j)
    и beta_k; sum(w_m z_m) = P, где w = 1/2 у c_j и у alpha_i, перекрытых leverage-лагом, иначе 1.
    """

    def __init__(self, y: np.ndarray, X: np.ndarray, order: tuple, backcast: float):
        self.y, self.X = y, X
        self.n, self.k = X.shape
        self.p, self.o, self.q = order
        self.order = order
        self.backcast = backcast
        self.n_components = self.p + self.o + self.q
        self.weights = np.r_[
            [0.5 if i <= self.o else 1.0 for i in range(1, self.p + 1)],
            np.full(self.o, 0.5),
            np.ones(self.q),
        ]

    @property
    def n_variance_u(self) -> int:
        return 1 + (self.n_components > 0) + max(self.n_components - 1, 0)

    def variance_from_u(self, u: np.ndarray) -> GjrParams:
        omega = float(np.exp(u[0]))
        if not self.n_components:
            return GjrParams(omega)
        persistence = PERSISTENCE_CAP * expit(u[1])
        shares = softmax(np.r_[0.0, u[2:]])
        z = persistence * shares / self.weights
        p, o = self.p, self.o
        arch = z[:p]
        leverage = np.array([z[p + j] - (arch[j] if j < p else 0.0) for j in range(o)])
        return GjrParams(omega, tuple(arch), tuple(leverage), tuple(z[p + o:]))

    def u_from_variance(self, params: GjrParams) -> np.ndarray:
        u = [np.log(max(params.omega, 1e-12))]
        if not self.n_components:
            return np.array(u)
        arch = np.asarray(params.arch, dtype=float)
        leverage = [params.leverage[j] + (arch[j] if j < self.p else 0.0) for j in range(self.o)]
        z = np.maximum(np.r_[arch, leverage, params.garch], 1e-8)
        persistence = float(np.dot(self.weights, z))
        persistence = min(persistence, PERSISTENCE_CAP * (1 - 1e-9))
        shares = self.weights * z / np.dot(self.weights, z)
        u.append(logit(persistence / PERSISTENCE_CAP))
        u.extend(np.log(shares[1:]) - np.log(shares[0]))
        return np.array(u, dtype=float)

    def loglik_obs(self, b: np.ndarray, variance: GjrParams) -> np.ndarray:
        e = self.y - self.X @ b
        sigma2 = conditional_variance(e, variance, self.backcast)
        if np.any(sigma2 <= 0):
            return np.full(self.n, np.nan)
        return gaussian_loglik_obs(e, sigma2)

    def nll(self, theta_u: np.ndarray) -> float:
        b = theta_u[:self.k]
        with np.errstate(all='ignore'):
            ll = self.loglik_obs(b, self.variance_from_u(theta_u[self.k:]))
            value = -np.mean(ll)
        return float(value) if np.isfinite(value) else 1e10

    def natural(self, theta_u: np.ndarray) -> np.ndarray:
        return np.r_[theta_u[:self.k], self.variance_from_u(theta_u[self.k:]).as_vector()]

    def loglik_obs_natural(self, theta: np.ndarray) -> np.ndarray:
        with np.errstate(all='ignore'):
            return self.loglik_obs(theta[:self.k], GjrParams.from_vector(theta[self.k:], self.order))

    def default_variance(self, variance: float) -> GjrParams:
        p, o, q = self.order
        arch = np.full(p, 0.05 / p) if p else np.zeros(0)
        leverage = np.full(o, 0.05 / o) if o else np.zeros(0)
        base = arch.sum() + 0.5 * leverage.sum()
        garch = np.full(q, (0.9 - base) / q) if q else np.zeros(0)
        persistence = base + garch.sum()
        return GjrParams(variance * (1 - persistence), tuple(arch), tuple(leverage), tuple(garch))


def _bfgs(objective, start: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        result = minimize(objective, start, method='BFGS', jac='3-point',
                          options={'gtol': 1e-7, 'maxiter': 2000})
    return result.x, float(result.fun)


def _grad_norm(objective, theta_u: np.ndarray) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        return float(np.max(np.abs(approx_fprime(theta_u, objective, centered=True))))


def _prepare(y, X) -> tuple:
    if isinstance(y, pd.Series) and isinstance(X, pd.DataFrame):
        frame = pd.concat([y.rename('__y__'), X], axis=1, join='inner')
    else:
        X = pd.DataFrame(np.asarray(X, dtype=float))
        frame = pd.concat([pd.Series(np.asarray(y, dtype=float), name='__y__'), X], axis=1)
    frame = frame.astype(float).replace([np.inf, -np.inf], np.nan)
    retained = frame.dropna(how='any')
    dropped = len(frame) - len(retained)
    if dropped:
        logger.info(f'Построчное удаление: отброшено {dropped} строк с пропусками')
    return retained['__y__'], retained.drop(columns='__y__')


def fit_garch_regression(y, X, order: tuple, mode: EstimationMode = EstimationMode.JOINT,
                         restarts: int = DEFAULT_RESTARTS, seed: int = 0, robust: bool = False) -> FitResult:
    """
    Совместная квази-ML оценка уравнения среднего и GJR-GARCH(p, o, q) при условной нормальности.

    Оценка ведётся на стандартизованных y и X (масштаб, без центрирования), затем коэффициенты
    пересчитываются обратно, поэтому t-статистики не зависят от масштаба данных.
    Рекурсия дисперсии стартует с дисперсии остатков МНК. Старт - двухшаговая оценка
    (МНК, затем только дисперсия), плюс restarts случайных возмущений N(0, 0.5) вокруг неё.
    Стандартные ошибки - из обратного численного гессиана в естественных параметрах;
    при robust=True дополнительно считаются сэндвич-ошибки по внешнему произведению скоров.

    Args:
        y (pd.Series): Зависимая переменная.
        X (pd.DataFrame): Регрессоры, включая столбец константы.
        order (tuple): (p, o, q).
        mode (EstimationMode): joint (основной) или two_step (диагностический).

    Raises:
        SingularDesign: матрица регрессоров неполного ранга.
        InsufficientData: наблюдений меньше 20 * (число столбцов + p + o + q + 1).
        NonConvergence: ни один старт не дал точку с нормой градиента <= 1e-4.
    """
    p, o, q = (int(v) for v in order)
    if min(p, o, q) < 0:
        raise ValueError(f'Порядок GJR-GARCH не может быть отрицательным: {order}')
    order = (p, o, q)
    mode = EstimationMode(mode)

    y_series, X_frame = _prepare(y, X)
    n, k = X_frame.shape
    required = 20 * (k + p + o + q + 1)
    if n < required:
        raise InsufficientData(f'GJR{order}: {n} наблюдений при {k} регрессорах, нужно не меньше {required}')

    y_raw = y_series.to_numpy()
    X_raw = X_frame.to_numpy()
    if np.linalg.matrix_rank(X_raw) < k:
        raise SingularDesign(f'Матрица регрессоров неполного ранга: ранг {np.linalg.matrix_rank(X_raw)} < {k}')

    y_scale = float(np.std(y_raw)) or 1.0
    x_scale = X_raw.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    y_s = y_raw / y_scale
    X_s = X_raw / x_scale

    b_ols, *_ = np.linalg.lstsq(X_s, y_s, rcond=None)
    e_ols = y_s - X_s @ b_ols
    backcast = float(np.mean(e_ols ** 2))
    model = _GjrLikelihood(y_s, X_s, order, backcast)

    # Двухшаговый старт: дисперсия при фиксированном МНК
    variance_start = model.u_from_variance(model.default_variance(backcast))

    def variance_only(u):
        return model.nll(np.r_[b_ols, u])

    variance_u, _ = _bfgs(variance_only, variance_start) if model.n_variance_u else (variance_start, 0.0)
    warm = np.r_[b_ols, variance_u]

    if mode == EstimationMode.TWO_STEP:
        best = warm
        grad_norm = _grad_norm(variance_only, variance_u) if len(variance_u) else 0.0
        if grad_norm > GRADIENT_TOLERANCE:
            raise NonConvergence(f'GJR{order}: двухшаговая оценка дисперсии не сошлась '
                                 f'(норма градиента {grad_norm:.2e})',
                                 best_params=model.natural(warm), grad_norm=grad_norm)
    else:
        rng = np.random.default_rng(seed)
        starts = [warm] + [warm + rng.normal(0.0, 0.5, size=warm.shape) for _ in range(restarts)]
        candidates = []
        for start in starts:
            theta, value = _bfgs(model.nll, start)
            candidates.append((value, theta))
        candidates.sort(key=lambda c: c[0])

        best, grad_norm = None, np.inf
        for value, theta in candidates:
            norm = _grad_norm(model.nll, theta)
            if norm <= GRADIENT_TOLERANCE:
                best, grad_norm = theta, norm
                break
            grad_norm = min(grad_norm, norm)
        if best is None:
            raise NonConvergence(f'GJR{order}: ни один из {len(starts)} стартов не сошёлся '
                                 f'(норма градиента {grad_norm:.2e})',
                                 best_params=model.natural(candidates[0][1]), grad_norm=grad_norm)

    theta_s = model.natural(best)
    variance_s = GjrParams.from_vector(theta_s[k:], order)
    shares_pinned = model.n_components > 1 and np.min(softmax(np.r_[0.0, best[k + 2:]])) < 1e-6
    at_boundary = bool(variance_s.persistence >= PERSISTENCE_CAP - 1e-5 or shares_pinned)
    if at_boundary:
        logger.warning(f'GJR{order}: оптимум на границе области стационарности (StationarityBoundary)')

    # Ковариация в естественных параметрах стандартизованной задачи
    def total_loglik(theta):
        return float(np.sum(model.loglik_obs_natural(theta)))

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        hessian = approx_hess3(theta_s, total_loglik)
    try:
        cov_s = np.linalg.inv(-hessian)
    except np.linalg.LinAlgError:
        logger.warning(f'GJR{order}: гессиан вырожден, стандартные ошибки не определены')
        cov_s = np.full_like(hessian, np.nan)

    robust_cov_s = None
    if robust:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', RuntimeWarning)
            scores = approx_fprime(theta_s, model.loglik_obs_natural, centered=True)
        robust_cov_s = cov_s @ (scores.T @ scores) @ cov_s

    # Обратный пересчёт в исходные единицы
    scale = np.r_[y_scale / x_scale, y_scale ** 2, np.ones(p + o + q)]
    theta = theta_s * scale
    cov = cov_s * np.outer(scale, scale)

    names = [f'mean.{c}' for c in X_frame.columns] + [f'variance.{v}' for v in variance_s.names()]
    params = pd.Series(theta, index=names)
    with np.errstate(invalid='ignore'):
        stderr = pd.Series(np.sqrt(np.diag(cov)), index=names)
        tstats = params / stderr
        robust_tstats = None
        if robust_cov_s is not None:
            robust_tstats = params / pd.Series(np.sqrt(np.diag(robust_cov_s * np.outer(scale, scale))), index=names)

    b = theta[:k]
    residuals = y_raw - X_raw @ b
    sigma2 = conditional_variance(residuals / y_scale, variance_s, backcast) * y_scale ** 2
    loglik = float(np.sum(gaussian_loglik_obs(residuals, sigma2)))

    n_params = k + 1 + p + o + q
    ssr = float(residuals @ residuals)
    sst = float(np.sum((y_raw - y_raw.mean()) ** 2))
    r2 = 1 - ssr / sst if sst > 0 else np.nan
    adj_r2 = 1 - (1 - r2) * (n - 1) / (n - k) if n > k else np.nan

    return FitResult(
        order=order, params=params, stderr=stderr, tstats=tstats, robust_tstats=robust_tstats,
        cov=pd.DataFrame(cov, index=names, columns=names), loglik=loglik,
        aic=2 * n_params - 2 * loglik, bic=n_params * np.log(n) - 2 * loglik,
        r2=float(r2), adj_r2=float(adj_r2), n_obs=n, converged=True, grad_norm=float(grad_norm),
        at_boundary=at_boundary, residuals=pd.Series(residuals, index=y_series.index),
        conditional_variance=pd.Series(sigma2, index=y_series.index), mode=mode,
        extra={'backcast': backcast * y_scale ** 2},
    )
