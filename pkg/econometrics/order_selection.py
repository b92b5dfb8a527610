import logging
from itertools import product

from joblib import Parallel, delayed

from econometrics.errors import InsufficientData, NonConvergence
from econometrics.gjr_garch import DEFAULT_RESTARTS, EstimationMode, fit_garch_regression

logger = logging.getLogger(__name__)

DEFAULT_BOUNDS = {'p': (1, 3), 'o': (0, 3), 'q': (1, 3)}


def candidate_orders(bounds: dict = None) -> list:
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    ranges = []
    for name in ('p', 'o', 'q'):
        low, high = bounds[name]
        if low < 0 or high < low:
            raise ValueError(f'Некорректные границы порядка {name}: {bounds[name]}')
        ranges.append(range(low, high + 1))
    return list(product(*ranges))


def _try_fit(y, X, order, mode, restarts, seed):
    try:
        return order, fit_garch_regression(y, X, order, mode=mode, restarts=restarts, seed=seed), None
    except (NonConvergence, InsufficientData) as e:
        return order, None, e


def order_key(order: tuple, aic: float) -> tuple:
    return aic, sum(order), order


def select_garch_order(y, X, bounds: dict = None, mode: EstimationMode = EstimationMode.JOINT,
                       restarts: int = DEFAULT_RESTARTS, seed: int = 0, n_jobs: int = 1) -> tuple:
    """
    Перебирает порядки (p, o, q) в границах и возвращает сошедшуюся модель с минимальным AIC.
    Ничьи разрешаются меньшей суммой p + o + q, затем лексикографически.

    Returns:
        tuple: (FitResult, (p, o, q))

    Raises:
        NonConvergence: не сошёлся ни один кандидат.
    """
    orders = candidate_orders(bounds)
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_try_fit)(y, X, order, mode, restarts, seed) for order in orders
    )

    fitted, failures = [], []
    for order, fit, error in outcomes:
        if fit is None:
            logger.info(f'Кандидат GJR{order} отброшен: {error}')
            failures.append(error)
        else:
            fitted.append(fit)

    if not fitted:
        if all(isinstance(e, InsufficientData) for e in failures):
            raise failures[0]
        raise NonConvergence(f'Ни один из {len(orders)} порядков GJR-GARCH не дал сошедшейся оценки')

    best = min(fitted, key=lambda fit: order_key(fit.order, fit.aic))
    logger.info(f'Выбран порядок GJR{best.order}: AIC={best.aic:.4f} ({len(fitted)} из {len(orders)} сошлись)')
    return best, best.order
