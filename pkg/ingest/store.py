import csv
import io
import json
import math
import os
import logging
import datetime as dt
from collections import defaultdict

import pandas as pd

from ingest.sources import FIXTURE_HEADER, FixtureSource, SchemaMismatch
from timebase.halfday import HalfDayId

logger = logging.getLogger(__name__)

SWAPS_HEADER = ['pool_id', 'ts', 'base_amount', 'quote_amount', 'direction']
CAPS_HEADER = ['asset_id', 'date', 'half', 'source', 'cap']
SERIES_HEADER = ['series_id', 'date', 'half', 'value']
ASSET_FIELDS = ['asset_id', 'chain', 'address', 'symbol', 'logical_id']


def format_float(value) -> str:
    if value is None:
        return ''
    value = float(value)
    if math.isnan(value):
        return ''
    return repr(value)


def parse_float(text: str) -> float:
    text = text.strip()
    return float(text) if text else math.nan


def _write_text(path: str, text: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)


def write_csv(path: str, header: list, rows, with_schema_header: bool = True):
    buffer = io.StringIO()
    if with_schema_header:
        buffer.write(FIXTURE_HEADER + '\n')
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    _write_text(path, buffer.getvalue())
    logger.info(f'Записан файл {path}')


def read_csv_rows(path: str, header: list) -> list:
    """
    Читает CSV канонического формата (с необязательной строкой версии схемы) и проверяет заголовок.
    """
    source = FixtureSource(os.path.dirname(os.path.abspath(path)))
    lines = source.read_lines(os.path.basename(path))
    if not lines:
        raise SchemaMismatch(f'Файл {path} пуст: отсутствует заголовок {",".join(header)}')
    reader = csv.reader(lines)
    actual = [h.strip() for h in next(reader)]
    missing = [h for h in header if h not in actual]
    if missing:
        raise SchemaMismatch(f'В файле {path} отсутствуют поля: {", ".join(missing)}')
    return [dict(zip(actual, row)) for row in reader]


def read_jsonl(path: str) -> list:
    source = FixtureSource(os.path.dirname(os.path.abspath(path)))
    records = []
    for offset, line in enumerate(source.read_lines(os.path.basename(path))):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise SchemaMismatch(f'Строка {offset} файла {path} не является JSON: {e}')
    return records


def write_jsonl(path: str, records):
    lines = [FIXTURE_HEADER] + [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in records]
    _write_text(path, '\n'.join(lines) + '\n')
    logger.info(f'Записан файл {path}')


def asset_to_json(record) -> dict:
    return {
        'asset_id': record.asset_id,
        'chain': record.chain.value,
        'address': record.address,
        'symbol': record.symbol,
        'logical_id': record.logical_id,
        'cex_listing_date': record.cex_listing_date.isoformat() if record.cex_listing_date else None,
        'tags': list(record.tags),
        'exclusion': record.exclusion.value,
        'multi_chain': record.multi_chain,
    }


def write_series_csv(path: str, series: dict, with_schema_header: bool = True):
    """
    Записывает {series_id: pd.Series} в series.csv. Индекс - HalfDayId (полусутки) или date (дневные ряды).
    """
    rows = []
    for series_id in sorted(series):
        for key, value in series[series_id].items():
            if isinstance(key, HalfDayId):
                rows.append([series_id, key.date.isoformat(), key.half.name, format_float(value)])
            else:
                rows.append([series_id, pd.Timestamp(key).date().isoformat(), '', format_float(value)])
    write_csv(path, SERIES_HEADER, rows, with_schema_header)


def read_series_csv(path: str) -> dict:
    """
    Возвращает {series_id: pd.Series}. Строки с пустым half образуют дневной ряд с индексом datetime.date.
    """
    grouped = defaultdict(dict)
    for row in read_csv_rows(path, SERIES_HEADER):
        date = dt.date.fromisoformat(row['date'].strip())
        half = row['half'].strip()
        key = HalfDayId.parse(date, half) if half else date
        grouped[row['series_id'].strip()][key] = parse_float(row['value'])

    result = {}
    for series_id, values in grouped.items():
        keys = sorted(values)
        result[series_id] = pd.Series([values[k] for k in keys], index=pd.Index(keys, dtype=object),
                                      name=series_id, dtype=float)
    return result
