import io
import math
import logging
from collections import OrderedDict

from ingest.store import _write_text, read_csv_rows, write_csv
from study.design import TARGET_KINDS, Variant
from universe.classifier import CHAINS

logger = logging.getLogger(__name__)

REPORT_HEADER = ['variant', 'chain', 'panel', 'coef_name', 'estimate', 'tstat', 'stars', 'p', 'o', 'q', 'r2', 'n_obs']
FAILED_MARK = '—'
# Двусторонние критические значения нормального распределения: 1%, 5%, 10%
STAR_THRESHOLDS = ((2.576, '***'), (1.960, '**'), (1.645, '*'))
PANEL_TITLES = {'All': 'Panel A: R^All', 'nonCEX': 'Panel B: R^nonCEX', 'Local': 'Panel C: R^Local'}


def format_stars(t: float) -> str:
    if t is None or math.isnan(t):
        return ''
    for threshold, stars in STAR_THRESHOLDS:
        if abs(t) >= threshold:
            return stars
    return ''


def _number(value, spec: str) -> str:
    if value is None or math.isnan(value):
        return ''
    return format(value, spec)


def report_rows(report) -> list:
    """
    Длинная таблица результатов: одна строка на коэффициент ячейки. Неоценённая ячейка даёт одну
    строку с coef_name = '—'. В r2 для linear_baseline пишется R^2, для остальных вариантов - скорректированный R^2.
    """
    rows = []
    for cell in report.cells:
        base = [cell.variant.value, cell.chain.value, cell.kind.value]
        if not cell.ok:
            rows.append(base + [FAILED_MARK] + [''] * 8)
            continue
        fit = cell.fit
        p, o, q = fit.order
        r2 = fit.r2 if cell.variant == Variant.LINEAR_BASELINE else fit.adj_r2
        for name in fit.params.index:
            t = float(fit.tstats[name])
            rows.append(base + [name, _number(float(fit.params[name]), '.10g'), _number(t, '.6f'), format_stars(t),
                                p, o, q, _number(r2, '.6f'), fit.n_obs])
    return rows


def write_report_csv(path: str, report):
    write_csv(path, REPORT_HEADER, report_rows(report), with_schema_header=False)


def read_report_csv(path: str) -> list:
    return read_csv_rows(path, REPORT_HEADER)


def _cell_text(row) -> str:
    if not row or row['coef_name'] == FAILED_MARK:
        return FAILED_MARK
    if not row['estimate']:
        return ''
    t = f' ({float(row["tstat"]):.3f})' if row['tstat'] else ''
    return f'{float(row["estimate"]):.3f}{row["stars"]}{t}'


def render_markdown(rows: list) -> str:
    """
    Таблицы по вариантам и панелям: строки - коэффициенты уравнения среднего, столбцы - сети,
    в ячейке оценка со звёздочками и t-статистика в скобках; ниже выбранные p, o, q, R^2 и число наблюдений.
    """
    chains = [c.value for c in CHAINS]
    by_cell = OrderedDict()
    for row in rows:
        key = (row['variant'], row['panel'])
        by_cell.setdefault(key, {}).setdefault(row['chain'], []).append(row)

    out = io.StringIO()
    variants = [v.value for v in Variant if any(k[0] == v.value for k in by_cell)]
    for variant in variants:
        out.write(f'## {variant}\n\n')
        r2_title = 'R²' if variant == Variant.LINEAR_BASELINE.value else 'Adjusted R²'
        for kind in TARGET_KINDS:
            cells = by_cell.get((variant, kind.value))
            if not cells:
                continue
            out.write(f'### {PANEL_TITLES[kind.value]}\n\n')
            out.write('| | ' + ' | '.join(chains) + ' |\n')
            out.write('|---' * (len(chains) + 1) + '|\n')

            names = []
            for chain in chains:
                for row in cells.get(chain, []):
                    name = row['coef_name']
                    if name.startswith('mean.') and name not in names:
                        names.append(name)
            lookup = {chain: {row['coef_name']: row for row in cells.get(chain, [])} for chain in chains}
            failed = {chain: FAILED_MARK in lookup[chain] or not lookup[chain] for chain in chains}

            for name in names:
                texts = [FAILED_MARK if failed[c] else _cell_text(lookup[c].get(name)) for c in chains]
                out.write(f'| {name[len("mean."):]} | ' + ' | '.join(texts) + ' |\n')
            for field, title in (('p', 'p'), ('o', 'o'), ('q', 'q'), ('r2', r2_title), ('n_obs', 'N')):
                texts = []
                for chain in chains:
                    if failed[chain]:
                        texts.append(FAILED_MARK)
                        continue
                    value = next(iter(lookup[chain].values()))[field]
                    texts.append(f'{float(value):.3f}' if field == 'r2' and value else str(value))
                out.write(f'| {title} | ' + ' | '.join(texts) + ' |\n')
            out.write('\n')
    return out.getvalue()


def write_report_md(path: str, rows: list):
    _write_text(path, render_markdown(rows))
    logger.info(f'Записан файл {path}')
