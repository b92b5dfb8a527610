import bisect
import logging
from collections import defaultdict

import numpy as np
import pandas as pd

from ingest.store import read_jsonl, write_jsonl
from ingest.swap_decoder import DecodePolicy, PoolDescriptor, UnknownPool, decode_swap_events
from timebase.halfday import half_day_index

logger = logging.getLogger(__name__)

DEFAULT_STALENESS_LIMIT = 4


class NoTrades(LookupError):
    pass


def reconstruct_price_series(trades, grid, staleness_limit: int = DEFAULT_STALENESS_LIMIT) -> pd.Series:
    """
    Строит ряд цен пула (в нативном токене сети) на сетке полусуток.

    На каждых полусутках берётся цена последней сделки внутри интервала. Полусутки без сделок
    наследуют предыдущую цену, пока число пустых полусуток строго между последней сделкой и t
    не превышает staleness_limit; дальше значение пропущено (NaN). Сделки до начала сетки
    тоже могут переноситься внутрь неё.

    Raises:
        NoTrades: ни одна точка сетки не получила цену.
    """
    if not grid:
        raise ValueError('Сетка полусуток не может быть пустой')
    if staleness_limit < 0:
        raise ValueError('staleness_limit не может быть отрицательным')

    last_price = {}
    for trade in sorted(trades, key=lambda t: t.ts):
        last_price[half_day_index(trade.ts).ordinal] = trade.quote_amount / trade.base_amount

    traded = sorted(last_price)
    values = np.full(len(grid), np.nan)
    for i, half_day in enumerate(grid):
        position = bisect.bisect_right(traded, half_day.ordinal) - 1
        if position < 0:
            continue
        last = traded[position]
        if half_day.ordinal - last - 1 <= staleness_limit:
            values[i] = last_price[last]

    if np.isnan(values).all():
        raise NoTrades(f'Нет ни одной сделки, покрывающей сетку {grid[0]}..{grid[-1]}')
    return pd.Series(values, index=pd.Index(grid, dtype=object), dtype=float)


def select_pools(ingest_config) -> dict:
    """
    Явное сопоставление актива и его крупнейшего пула из секции ingest.pools конфигурации.

    Returns:
        dict: {asset_id: PoolDescriptor}
    """
    pools = {}
    for pool_config in (ingest_config or {}).get('pools', []):
        pool = PoolDescriptor.from_config(pool_config)
        if not pool.asset_id:
            raise ValueError(f'Для пула {pool.pool_id} не указан asset_id')
        if pool.asset_id in pools:
            raise ValueError(f'Для актива {pool.asset_id} указано несколько пулов; допускается только крупнейший')
        pools[pool.asset_id] = pool
    return pools


class PriceReconstructor:
    """
    Раскладывает поток событий по пулам, декодирует сделки и строит ряды цен по каждому активу.
    """

    def __init__(self, pools: dict, staleness_limit: int = DEFAULT_STALENESS_LIMIT,
                 policy: DecodePolicy = DecodePolicy.LENIENT):
        self.pools = pools
        self.staleness_limit = self._validate_staleness(staleness_limit)
        self.policy = DecodePolicy(policy)

    @classmethod
    def from_config(cls, ingest_config, strict: bool = False):
        ingest_config = ingest_config or {}
        policy = DecodePolicy.STRICT if strict else DecodePolicy(ingest_config.get('policy', 'lenient'))
        return cls(pools=select_pools(ingest_config),
                   staleness_limit=ingest_config.get('staleness_limit', DEFAULT_STALENESS_LIMIT),
                   policy=policy)

    @staticmethod
    def _validate_staleness(staleness_limit):
        if not isinstance(staleness_limit, int) or staleness_limit < 0:
            raise ValueError('staleness_limit должен быть неотрицательным целым числом полусуток')
        return staleness_limit

    def split_by_pool(self, events) -> dict:
        """
        Returns:
            dict: {pool_id: [(смещение события во входном потоке, событие), ...]}
        """
        known = {pool.pool_id for pool in self.pools.values()}
        grouped = defaultdict(list)
        for offset, event in enumerate(events):
            pool_id = str(event.get('pool_id', '')).lower()
            if pool_id in known or self.policy == DecodePolicy.STRICT:
                grouped[pool_id].append((offset, event))
        return grouped

    def decode(self, events) -> list:
        """
        Декодирует все события известных пулов. Возвращает сделки всех пулов, отсортированные по ts.
        Ошибки называют смещение события во входном потоке.
        """
        grouped = self.split_by_pool(events)
        known = {pool.pool_id for pool in self.pools.values()}
        foreign = sorted((entries[0][0], pool_id) for pool_id, entries in grouped.items() if pool_id not in known)
        if foreign:
            # Остаются только события чужих пулов в строгом режиме
            offset, pool_id = foreign[0]
            raise UnknownPool(f'Событие #{offset} относится к неизвестному пулу {pool_id}')

        trades = []
        for pool in self.pools.values():
            entries = grouped.get(pool.pool_id, [])
            trades.extend(decode_swap_events([event for _, event in entries], pool, self.policy,
                                             offsets=[offset for offset, _ in entries]))
        return sorted(trades, key=lambda t: t.ts)

    def price_series(self, trades, grid) -> dict:
        """
        Returns:
            dict: {asset_id: pd.Series} для активов, у которых есть хотя бы одна цена на сетке.
        """
        by_pool = defaultdict(list)
        for trade in trades:
            by_pool[trade.pool_id].append(trade)

        prices = {}
        for asset_id, pool in sorted(self.pools.items()):
            try:
                prices[asset_id] = reconstruct_price_series(by_pool.get(pool.pool_id, []), grid,
                                                            self.staleness_limit)
            except NoTrades as e:
                logger.warning(f'Актив {asset_id}: {e}. Актив не получит цен')
        return prices


def write_pools_jsonl(path: str, pools: dict):
    records = [{
        'pool_id': pool.pool_id,
        'asset_id': asset_id,
        'base_index': pool.base_index,
        'base_decimals': pool.base_decimals,
        'quote_decimals': pool.quote_decimals,
        'protocol': pool.protocol.value,
    } for asset_id, pool in sorted(pools.items())]
    write_jsonl(path, records)


def read_pools_jsonl(path: str) -> dict:
    return select_pools({'pools': read_jsonl(path)})
