import logging
from dataclasses import dataclass, field
from typing import Optional

from joblib import Parallel, delayed
from tqdm import tqdm

from covariates.extreme_dummies import extreme_dummies
from econometrics.gjr_garch import DEFAULT_RESTARTS, EstimationMode, FitResult, fit_garch_regression
from econometrics.order_selection import DEFAULT_BOUNDS, select_garch_order
from study.design import TARGET_KINDS, Variant, build_spec
from timebase.halfday import half_day_range, parse_window
from universe.classifier import CHAINS, Chain, PortfolioKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StudyConfig:
    window: tuple
    variants: tuple = (Variant.LINEAR_BASELINE,)
    tail: float = 0.05
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    seed: int = 0
    restarts: int = DEFAULT_RESTARTS
    n_jobs: int = -1
    mode: EstimationMode = EstimationMode.JOINT
    robust: bool = False
    dummy_reference: PortfolioKind = PortfolioKind.ALL
    min_rows: int = 0

    @classmethod
    def from_config(cls, study_config, window: str = None, variants=None, tail: float = None, seed: int = None,
                    n_jobs: int = None):
        """
        Параметры исследования из секции study; явно переданные аргументы (флаги CLI) имеют приоритет.
        """
        study_config = study_config or {}
        window = window or study_config.get('window')
        if not window:
            raise ValueError('Не задано окно оценивания (study.window или --window)')
        variants = variants or study_config.get('variants') or [Variant.LINEAR_BASELINE.value]
        if isinstance(variants, str):
            variants = variants.split(',')
        tail = cls._validate_tail(tail if tail is not None else study_config.get('tail', 0.05))
        bounds = {**DEFAULT_BOUNDS, **{k: tuple(v) for k, v in (study_config.get('garch_bounds') or {}).items()}}
        return cls(
            window=parse_window(window),
            variants=tuple(Variant(v.strip()) if isinstance(v, str) else Variant(v) for v in variants),
            tail=tail,
            bounds=bounds,
            seed=int(seed if seed is not None else study_config.get('seed', 0)),
            restarts=int(study_config.get('restarts', DEFAULT_RESTARTS)),
            n_jobs=int(n_jobs if n_jobs is not None else study_config.get('jobs', -1)),
            mode=EstimationMode(study_config.get('mode', EstimationMode.JOINT.value)),
            robust=bool(study_config.get('robust_errors', False)),
            dummy_reference=PortfolioKind.parse(study_config.get('dummy_reference', 'All')),
            min_rows=int(study_config.get('min_rows', 0)),
        )

    @staticmethod
    def _validate_tail(tail):
        tail = float(tail)
        if not 0 < tail < 0.5:
            raise ValueError(f'Вероятность хвоста должна лежать в (0, 0.5), получено: {tail}')
        return tail


@dataclass(frozen=True)
class CellResult:
    variant: Variant
    chain: Chain
    kind: PortfolioKind
    fit: Optional[FitResult] = None
    labels: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.fit is not None


@dataclass(frozen=True)
class StudyReport:
    config: StudyConfig
    cells: tuple

    @property
    def failed(self) -> list:
        return [cell for cell in self.cells if not cell.ok]

    @property
    def partial(self) -> bool:
        return bool(self.failed)


def compute_dummies(panels: dict, config: StudyConfig) -> dict:
    """
    Индикаторы экстремальных доходностей по All-портфелю каждой сети на окне оценивания.
    Сеть, для которой квантили не определены, просто отсутствует в результате.
    """
    start, end = config.window
    index = half_day_range(start, end)
    dummies = {}
    for chain in CHAINS:
        if chain not in panels:
            continue
        reference = panels[chain].series(config.dummy_reference).values.reindex(index)
        try:
            dummies[chain] = extreme_dummies(reference, config.tail)
        except ValueError as e:
            logger.warning(f'Индикаторы экстремальных доходностей для {chain.value} не построены: {e}')
    return dummies


def _run_cell(variant, chain, kind, panels, covariates, dummies, config: StudyConfig) -> CellResult:
    try:
        design = build_spec(chain, kind, variant, panels, covariates, config.window, dummies, config.min_rows)
        fit, _ = select_garch_order(design.y, design.X, bounds=config.bounds, mode=config.mode,
                                    restarts=config.restarts, seed=config.seed)
        if config.robust:
            fit = fit_garch_regression(design.y, design.X, fit.order, mode=config.mode,
                                       restarts=config.restarts, seed=config.seed, robust=True)
        return CellResult(variant, chain, kind, fit=fit, labels=design.spec.labels)
    except Exception as e:
        return CellResult(variant, chain, kind, error=f'{type(e).__name__}: {e}')


def run_study(panels: dict, covariates: dict, config: StudyConfig) -> StudyReport:
    """
    Оценивает все ячейки исследования (вариант x сеть x панель All / nonCEX / Local).

    Ячейки независимы и выполняются пулом joblib; результат собирается в детерминированном
    порядке. Ошибка одной ячейки записывается в лог и помечает её как неоценённую, не прерывая остальные.
    """
    dummies = compute_dummies(panels, config) if Variant.NONLINEAR_EXTREME in config.variants else {}
    jobs = [(variant, chain, kind) for variant in config.variants for chain in CHAINS for kind in TARGET_KINDS]
    logger.info(f'Исследование: {len(jobs)} ячеек, окно {config.window[0]}..{config.window[1]}, '
                f'пул {config.n_jobs}')

    outputs = Parallel(n_jobs=config.n_jobs, return_as='generator')(
        delayed(_run_cell)(variant, chain, kind, panels, covariates, dummies, config)
        for variant, chain, kind in jobs
    )
    cells = []
    for cell in tqdm(outputs, total=len(jobs), desc='Оценивание'):
        if cell.ok:
            logger.info(f'{cell.variant.value} {cell.chain.value}/{cell.kind.value}: GJR{cell.fit.order}, '
                        f'n={cell.fit.n_obs}')
        else:
            logger.error(f'{cell.variant.value} {cell.chain.value}/{cell.kind.value} не оценена: {cell.error}')
        cells.append(cell)

    report = StudyReport(config=config, cells=tuple(cells))
    if report.partial:
        logger.warning(f'Оценено {len(cells) - len(report.failed)} из {len(cells)} ячеек')
    return report
