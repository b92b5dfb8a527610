import math
import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

import pandas as pd

from ingest.sources import HttpSource, SchemaMismatch, requires_key
from ingest.store import CAPS_HEADER, format_float, parse_float, read_csv_rows, write_csv
from timebase.halfday import HalfDayId, half_day_index

logger = logging.getLogger(__name__)


class DuplicateObservation(ValueError):
    pass


class CapSource(Enum):
    PROVIDER_A = 'providerA'
    PROVIDER_B = 'providerB'
    COMPUTED = 'computed'


@dataclass(frozen=True)
class RawCapObservation:
    asset_id: str
    half_day: HalfDayId
    source: CapSource
    cap: float

    def __post_init__(self):
        if not math.isnan(self.cap) and self.cap < 0:
            raise ValueError(f'Отрицательная капитализация {self.cap} у {self.asset_id} на {self.half_day}')


def merge_market_cap(observations, grid=None) -> pd.Series:
    """
    Усредняет капитализацию одного актива по доступным источникам на каждых полусутках.

    Отсутствующий источник (или NaN) просто не участвует в среднем. Если задана grid,
    ряд приводится к ней, и полусутки без источников становятся NaN.

    Raises:
        DuplicateObservation: два наблюдения одного источника на одних полусутках.
    """
    by_half_day = defaultdict(dict)
    assets = set()
    for obs in observations:
        assets.add(obs.asset_id)
        slot = by_half_day[obs.half_day]
        if obs.source in slot:
            raise DuplicateObservation(
                f'Повторное наблюдение капитализации {obs.asset_id} на {obs.half_day} из {obs.source.value}')
        slot[obs.source] = obs.cap
    if len(assets) > 1:
        raise ValueError(f'merge_market_cap ожидает наблюдения одного актива, получено: {sorted(assets)}')

    merged = {}
    for half_day, by_source in by_half_day.items():
        present = [cap for cap in by_source.values() if not math.isnan(cap)]
        # fsum не зависит от порядка слагаемых
        merged[half_day] = math.fsum(present) / len(present) if present else math.nan

    index = list(grid) if grid is not None else sorted(merged)
    return pd.Series([merged.get(h, math.nan) for h in index], index=pd.Index(index, dtype=object), dtype=float)


def computed_market_cap(asset_id: str, supply: pd.Series, price: pd.Series) -> list:
    """
    Третий источник капитализации: циркулирующее предложение, умноженное на цену.
    Наблюдение создаётся только на полусутках, где известны оба ряда.
    """
    aligned = pd.concat([supply.rename('supply'), price.rename('price')], axis=1, join='inner').dropna()
    return [RawCapObservation(asset_id, half_day, CapSource.COMPUTED, float(row.supply * row.price))
            for half_day, row in aligned.iterrows()]


def merge_all(observations, grid=None) -> dict:
    """
    Returns:
        dict: {asset_id: pd.Series} усреднённой капитализации по всем активам.
    """
    by_asset = defaultdict(list)
    for obs in observations:
        by_asset[obs.asset_id].append(obs)
    return {asset_id: merge_market_cap(obs, grid) for asset_id, obs in sorted(by_asset.items())}


def write_caps_csv(path: str, observations):
    ordered = sorted(observations, key=lambda o: (o.asset_id, o.half_day, o.source.value))
    rows = [[o.asset_id, o.half_day.date.isoformat(), o.half_day.half.name, o.source.value, format_float(o.cap)]
            for o in ordered]
    write_csv(path, CAPS_HEADER, rows)


def read_caps_csv(path: str) -> list:
    observations = []
    for row in read_csv_rows(path, CAPS_HEADER):
        try:
            source = CapSource(row['source'].strip())
        except ValueError:
            raise SchemaMismatch(f'Неизвестный источник капитализации в {path}: {row["source"]!r}')
        observations.append(RawCapObservation(
            asset_id=row['asset_id'].strip(),
            half_day=HalfDayId.parse(row['date'], row['half']),
            source=source,
            cap=parse_float(row['cap']),
        ))
    return observations


class CapProviderClient(HttpSource):
    """
    Адаптер провайдера рыночных данных: история капитализации актива в ответе
    вида {"market_caps": [[unix_ms, value], ...]}. Берётся последнее значение внутри полусуток.
    """

    def __init__(self, base_url: str, source: CapSource, **kwargs):
        super().__init__(base_url, name=kwargs.pop('name', source.value), **kwargs)
        self.source = source

    @classmethod
    def from_descriptor(cls, descriptor, source: CapSource = CapSource.PROVIDER_A):
        return cls(descriptor.uri, source, name=descriptor.name, api_key=descriptor.credentials,
                   rate_limit=descriptor.rate_limit)

    @requires_key
    def fetch_caps(self, asset_id: str, start: HalfDayId, end: HalfDayId) -> list:
        payload = self.request_private(f'coins/{asset_id}/market_chart/range', {
            'vs_currency': 'usd',
            'from': int(start.start.timestamp()),
            'to': int(end.successor().start.timestamp()),
        })
        if not isinstance(payload, dict) or 'market_caps' not in payload:
            raise SchemaMismatch(f'В ответе {self.name} для {asset_id} нет поля market_caps')

        last = {}
        for point in payload['market_caps']:
            try:
                ts_ms, value = point
            except (TypeError, ValueError):
                raise SchemaMismatch(f'Некорректная точка market_caps у {asset_id}: {point!r}')
            if value is None:
                continue
            half_day = half_day_index(pd.Timestamp(int(ts_ms), unit='ms', tz='UTC'))
            if start <= half_day <= end:
                last[half_day] = float(value)

        logger.info(f'{self.name}: {asset_id} - {len(last)} полусуток капитализации')
        return [RawCapObservation(asset_id, h, self.source, cap) for h, cap in sorted(last.items())]
