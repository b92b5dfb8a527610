import argparse
import os
import sys
import logging
import warnings
from datetime import datetime

import yaml

from covariates.activity import CovariateBuilder, level_series, read_arima_report, read_covariates_csv, \
    read_levels_csv, write_arima_report, write_covariates_csv, write_levels_csv
from ingest.market_cap import CapProviderClient, CapSource, computed_market_cap, merge_all, read_caps_csv, \
    write_caps_csv
from ingest.prices import PriceReconstructor, read_pools_jsonl, select_pools, write_pools_jsonl
from ingest.sources import DATA_DIR_ENV, FixtureSource, HttpSource, SourceDescriptor, SourceKind
from ingest.store import read_series_csv, write_series_csv
from ingest.swap_decoder import parse_event_lines, read_swaps_csv, write_swaps_csv
from ingest.universe_fetch import ASSETS_FILE, fetch_universe, write_assets_jsonl
from portfolio.chain_panel import build_panels, read_panel_csv, write_panel_csv
from study.describe import describe_all, write_describe_csv
from study.fit_archive import FitArchive
from study.report import read_report_csv, write_report_csv, write_report_md
from study.runner import StudyConfig, run_study
from synth.dgp import DgpConfig, generate_panel, write_synthetic
from timebase.halfday import half_day_range, parse_window
from universe.classifier import Exclusion, UniverseClassifier
from utils.utils import MANIFEST_FILE, DataLayout, ensure_fresh, write_manifest

warnings.filterwarnings('ignore', category=RuntimeWarning)

config_path = './config.yaml'

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2
EXIT_USAGE = 64

VERBS = ('ingest', 'build', 'describe', 'estimate', 'synth', 'report')
RAW_FILES = (ASSETS_FILE, 'pools.jsonl', 'swaps.csv', 'caps.csv', 'series.csv')
BUILD_FILES = ('panel.csv', 'covariates.csv', 'levels.csv', 'arima_report.csv')

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        sys.stderr.write(f'\n{self.prog}: ошибка: {message}\n')
        raise UsageError(message)


def get_config(path: str = None):
    with open(path or config_path, 'r', encoding='utf-8') as file:
        return yaml.safe_load(file) or {}


def setup_logger(config):
    logs_dir = (config.get('logging') or {}).get('logs_dir', './temp/logs')
    os.makedirs(logs_dir, exist_ok=True)

    log_filename = datetime.now().strftime(f'{logs_dir}/log_%Y-%m-%d__%H-%M-%S.log')

    # Настройка логгера
    logging.basicConfig(
        level=logging.INFO,
        format='[%(asctime)s] %(levelname)s: %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        handlers=[
            logging.FileHandler(log_filename, encoding='utf-8'),
            logging.StreamHandler()
        ]
    )

    def handle_exception(exc_type, exc_value, exc_traceback):
        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return
        logger.critical('Uncaught exception', exc_info=(exc_type, exc_value, exc_traceback))

    sys.excepthook = handle_exception

    return logger


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='chainspill', description='Перетекания доходностей между блокчейн-сетями')
    parser.add_argument('verb', choices=VERBS, help='стадия конвейера')
    parser.add_argument('--config', default=config_path, help='путь к YAML-конфигурации')
    parser.add_argument('--data-dir', dest='data_dir', help=f'директория данных (иначе ${DATA_DIR_ENV})')
    parser.add_argument('--window', help='окно YYYY-MM-DD..YYYY-MM-DD')
    parser.add_argument('--variant', help='варианты спецификации через запятую')
    parser.add_argument('--tail', type=float, help='вероятность хвоста для индикаторов экстремальных доходностей')
    parser.add_argument('--seed', type=int, help='seed генератора и рестартов оптимизатора')
    parser.add_argument('--jobs', type=int, help='размер пула задач (по умолчанию все логические ядра)')
    parser.add_argument('--strict', action='store_true', help='строгий разбор событий при ingest')
    return parser


def _window(config, args) -> tuple:
    window = args.window or (config.get('study') or {}).get('window')
    if not window:
        raise ValueError('Не задано окно (--window или study.window)')
    return parse_window(window)


def _jobs(config, args) -> int:
    return args.jobs if args.jobs is not None else int((config.get('study') or {}).get('jobs', -1))


def run_ingest(config, layout: DataLayout, args) -> int:
    """
    Материализует каноническое хранилище raw/ из источников секции ingest.sources.
    """
    ingest_config = config.get('ingest') or {}
    sources = ingest_config.get('sources') or {}
    reconstructor = PriceReconstructor.from_config(ingest_config, strict=args.strict)

    records = fetch_universe(SourceDescriptor.from_config(sources['universe']))
    write_assets_jsonl(layout.raw_file(ASSETS_FILE), records)

    events_source = SourceDescriptor.from_config(sources['events'])
    if events_source.kind == SourceKind.FIXTURE_FILE:
        lines = FixtureSource(events_source.uri, events_source.name).read_lines('events.jsonl')
        events = parse_event_lines(lines, reconstructor.policy)
    else:
        client = HttpSource.from_descriptor(events_source)
        events = [event for page in client.iter_pages('swaps') for event in page]
    trades = reconstructor.decode(events)
    logger.info(f'Разобрано {len(trades)} сделок из {len(events)} событий')
    write_swaps_csv(layout.raw_file('swaps.csv'), trades)
    write_pools_jsonl(layout.raw_file('pools.jsonl'), reconstructor.pools)

    observations = []
    for cap_config in sources.get('caps') or []:
        descriptor = SourceDescriptor.from_config(cap_config)
        if descriptor.kind == SourceKind.FIXTURE_FILE:
            observations.extend(read_caps_csv(FixtureSource(descriptor.uri).path('caps.csv')))
            continue
        start, end = _window(config, args)
        client = CapProviderClient.from_descriptor(descriptor, CapSource(cap_config.get('source', 'providerA')))
        for record in records:
            if record.exclusion == Exclusion.NONE:
                observations.extend(client.fetch_caps(record.asset_id, start, end))
    merge_all(observations)  # проверка повторных наблюдений
    write_caps_csv(layout.raw_file('caps.csv'), observations)

    series_source = SourceDescriptor.from_config(sources['series'])
    if series_source.kind != SourceKind.FIXTURE_FILE:
        raise ValueError('Ряды series.csv поддерживаются только из файлового источника')
    write_series_csv(layout.raw_file('series.csv'),
                     read_series_csv(FixtureSource(series_source.uri).path('series.csv')))
    return EXIT_OK


def _computed_caps(series: dict, prices: dict, records) -> list:
    """
    Капитализация по предложению: supply_<asset_id> x цена в нативном токене x price_<NATIVE>.
    """
    observations = []
    for record in records:
        supply = series.get(f'supply_{record.asset_id}')
        native = series.get(f'price_{record.chain.native}')
        if supply is None or native is None or record.asset_id not in prices:
            continue
        usd_price = prices[record.asset_id] * native.reindex(prices[record.asset_id].index)
        observations.extend(computed_market_cap(record.asset_id, supply, usd_price))
    return observations


def run_build(config, layout: DataLayout, args) -> int:
    """
    Панели сетей и ковариаты на окне по каноническому хранилищу; манифест входов для проверки актуальности.
    """
    start, end = _window(config, args)
    grid = half_day_range(start, end)
    extended = [start.predecessor()] + grid
    n_jobs = _jobs(config, args)
    ingest_config = config.get('ingest') or {}

    classifier = UniverseClassifier.from_config(config.get('universe'))
    records = classifier.prepare(fetch_universe(SourceDescriptor(SourceKind.FIXTURE_FILE, layout.raw, 'store')))
    memberships = classifier.membership_grid(records, grid)

    pools_path = layout.raw_file('pools.jsonl')
    pools = read_pools_jsonl(pools_path) if os.path.exists(pools_path) else select_pools(ingest_config)
    reconstructor = PriceReconstructor(pools, ingest_config.get('staleness_limit', 4))
    prices = reconstructor.price_series(read_swaps_csv(layout.raw_file('swaps.csv')), extended)

    series = read_series_csv(layout.raw_file('series.csv'))
    observations = read_caps_csv(layout.raw_file('caps.csv')) + _computed_caps(series, prices, records)
    caps = merge_all(observations, extended)

    panels = build_panels(memberships, prices, caps, grid, n_jobs=n_jobs)
    builder = CovariateBuilder.from_config(config.get('covariates'), n_jobs=n_jobs)
    activity = builder.build_activity_set(series, grid)
    global_set = builder.build_global_set(series, grid)

    write_panel_csv(layout.build_file('panel.csv'), panels)
    write_covariates_csv(layout.build_file('covariates.csv'), activity, global_set)
    write_levels_csv(layout.build_file('levels.csv'), level_series(activity, global_set))
    write_arima_report(layout.build_file('arima_report.csv'), {**activity.arima_orders, **global_set.arima_orders},
                       {**activity.arima_whiteness, **global_set.arima_whiteness})
    write_manifest(layout.build_file(MANIFEST_FILE), [layout.raw_file(f) for f in RAW_FILES],
                   [layout.build_file(f) for f in BUILD_FILES])
    return EXIT_OK


def run_describe(config, layout: DataLayout, args) -> int:
    panels = read_panel_csv(layout.build_file('panel.csv'))
    covariates = read_covariates_csv(layout.build_file('covariates.csv'))
    arima_orders = read_arima_report(layout.build_file('arima_report.csv'))
    levels = read_levels_csv(layout.build_file('levels.csv'))
    write_describe_csv(layout.results_file('describe.csv'), describe_all(panels, covariates, arima_orders, levels))
    return EXIT_OK


def run_estimate(config, layout: DataLayout, args) -> int:
    ensure_fresh(layout.build_file(MANIFEST_FILE), layout.raw, layout.build)
    study_config = StudyConfig.from_config(config.get('study'), window=args.window, variants=args.variant,
                                           tail=args.tail, seed=args.seed, n_jobs=args.jobs)
    panels = read_panel_csv(layout.build_file('panel.csv'))
    covariates = read_covariates_csv(layout.build_file('covariates.csv'))

    report = run_study(panels, covariates, study_config)
    write_report_csv(layout.results_file('report.csv'), report)
    write_report_md(layout.results_file('report.md'), read_report_csv(layout.results_file('report.csv')))
    FitArchive(layout.results).write_report(report)
    return EXIT_PARTIAL if report.partial else EXIT_OK


def run_synth(config, layout: DataLayout, args) -> int:
    dgp_config = DgpConfig.from_config(config.get('synth'), seed=args.seed)
    data = generate_panel(dgp_config)
    write_synthetic(data, layout.raw, layout.synth)
    grid = dgp_config.grid
    logger.info(f'Окно синтетической панели: {grid[0].date}..{grid[-1].date}')
    return EXIT_OK


def run_report(config, layout: DataLayout, args) -> int:
    write_report_md(layout.results_file('report.md'), read_report_csv(layout.results_file('report.csv')))
    return EXIT_OK


HANDLERS = {
    'ingest': run_ingest,
    'build': run_build,
    'describe': run_describe,
    'estimate': run_estimate,
    'synth': run_synth,
    'report': run_report,
}


def dispatch(argv=None) -> int:
    """
    Точка входа CLI. Коды выхода: 0 - успех, 1 - фатальная ошибка, 2 - исследование оценено не полностью,
    64 - ошибка использования (с выводом справки).
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE

    try:
        config = get_config(args.config)
    except (OSError, yaml.YAMLError) as e:
        sys.stderr.write(f'Не удалось прочитать конфигурацию {args.config}: {e}\n')
        return EXIT_FATAL
    setup_logger(config)

    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV) or (config.get('data') or {}).get('dir', './data')
    layout = DataLayout(data_dir)
    logger.info(f'Стадия {args.verb}, директория данных {data_dir}')
    try:
        status = HANDLERS[args.verb](config, layout, args)
    except Exception as e:
        logger.error(f'Стадия {args.verb} завершилась ошибкой: {type(e).__name__}: {e}', exc_info=True)
        return EXIT_FATAL
    logger.info(f'Стадия {args.verb} завершена с кодом {status}')
    return status


if __name__ == '__main__':
    sys.exit(dispatch())
