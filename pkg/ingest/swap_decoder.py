import json
import logging
import datetime as dt
from dataclasses import dataclass
from enum import Enum

import pandas as pd
from eth_abi import decode as abi_decode

from ingest.store import SWAPS_HEADER, format_float, read_csv_rows, write_csv

logger = logging.getLogger(__name__)

# Раскладка полей data у события Swap
V2_SWAP_TYPES = ['uint256', 'uint256', 'uint256', 'uint256']  # amount0In, amount1In, amount0Out, amount1Out
V3_SWAP_TYPES = ['int256', 'int256', 'uint160', 'uint128', 'int24']  # amount0, amount1, sqrtPriceX96, liquidity, tick


class MalformedEvent(ValueError):
    def __init__(self, index: int, reason: str):
        super().__init__(f'Событие #{index} не разобрано: {reason}')
        self.index = index


class UnknownPool(LookupError):
    pass


class DecodePolicy(Enum):
    LENIENT = 'lenient'
    STRICT = 'strict'


class Direction(Enum):
    BUY = 'buy'
    SELL = 'sell'


class Protocol(Enum):
    UNISWAP_V2 = 'uniswap_v2'
    UNISWAP_V3 = 'uniswap_v3'


@dataclass(frozen=True)
class SwapTrade:
    pool_id: str
    ts: dt.datetime
    base_amount: float
    quote_amount: float
    direction: Direction

    @property
    def price(self) -> float:
        return self.quote_amount / self.base_amount


@dataclass(frozen=True)
class PoolDescriptor:
    """
    Описание пула: какой из токенов базовый (0 или 1) и сколько знаков у каждого из них.
    """
    pool_id: str
    asset_id: str = ''
    base_index: int = 0
    base_decimals: int = 18
    quote_decimals: int = 18
    protocol: Protocol = Protocol.UNISWAP_V2

    @classmethod
    def from_config(cls, pool_config):
        base_index = int(pool_config.get('base_index', 0))
        if base_index not in (0, 1):
            raise ValueError('base_index пула должен быть 0 или 1')
        for name in ('base_decimals', 'quote_decimals'):
            value = pool_config.get(name, 18)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f'{name} пула должен быть неотрицательным целым числом')
        return cls(pool_id=str(pool_config['pool_id']).lower(), asset_id=str(pool_config.get('asset_id', '')),
                   base_index=base_index, base_decimals=pool_config.get('base_decimals', 18),
                   quote_decimals=pool_config.get('quote_decimals', 18),
                   protocol=Protocol(pool_config.get('protocol', Protocol.UNISWAP_V2.value)))


def _parse_ts(value) -> dt.datetime:
    ts = pd.Timestamp(value)
    if ts.tzinfo is None:
        ts = ts.tz_localize('UTC')
    return ts.tz_convert('UTC').to_pydatetime()


def _decode_payload(data_hex: str, protocol: Protocol) -> tuple:
    payload = bytes.fromhex(data_hex[2:] if data_hex.startswith('0x') else data_hex)
    if protocol == Protocol.UNISWAP_V2:
        return abi_decode(V2_SWAP_TYPES, payload)
    return abi_decode(V3_SWAP_TYPES, payload)


def _net_amounts(values: tuple, pool: PoolDescriptor) -> tuple:
    """
    Возвращает (base_raw, quote_raw, direction) в единицах токена без масштабирования.
    """
    base, quote = pool.base_index, 1 - pool.base_index
    if pool.protocol == Protocol.UNISWAP_V2:
        amounts_in, amounts_out = values[0:2], values[2:4]
        base_delta = amounts_in[base] - amounts_out[base]
        quote_delta = amounts_in[quote] - amounts_out[quote]
    else:
        # Для V3 знак со стороны пула: положительная величина пришла в пул
        base_delta, quote_delta = values[base], values[quote]

    if base_delta > 0 and quote_delta < 0:
        return base_delta, -quote_delta, Direction.SELL
    if base_delta < 0 and quote_delta > 0:
        return -base_delta, quote_delta, Direction.BUY
    return None


def decode_swap_events(stream, pool_meta: PoolDescriptor, policy: DecodePolicy = DecodePolicy.LENIENT,
                       offsets=None) -> list:
    """
    Разбирает сырые события Swap одного пула в сделки с количествами в человеческих единицах.

    Args:
        stream: Итерация по событиям (dict или строки JSON) с полями pool_id, ts, data.
        pool_meta (PoolDescriptor): Порядок токенов и масштаб количеств пула.
        policy (DecodePolicy): lenient - битые события пропускаются с записью в лог, strict - прерывание.
        offsets: Смещения событий во входном потоке для сообщений об ошибках; по умолчанию - позиция в stream.

    Returns:
        list: SwapTrade, упорядоченные по ts (порядок входа сохраняется при равных ts).
    """
    policy = DecodePolicy(policy)
    trades = []
    skipped = 0

    for position, raw in enumerate(stream):
        index = offsets[position] if offsets is not None else position
        try:
            event = json.loads(raw) if isinstance(raw, str) else dict(raw)
            pool_id = str(event['pool_id']).lower()
            if pool_id != pool_meta.pool_id:
                if policy == DecodePolicy.STRICT:
                    raise UnknownPool(f'Событие #{index} относится к неизвестному пулу {pool_id}')
                continue

            values = _decode_payload(str(event['data']), pool_meta.protocol)
            amounts = _net_amounts(values, pool_meta)
            if amounts is None:
                raise MalformedEvent(index, 'нулевые или однонаправленные количества')
            base_raw, quote_raw, direction = amounts

            trades.append(SwapTrade(
                pool_id=pool_id,
                ts=_parse_ts(event['ts']),
                base_amount=base_raw / 10 ** pool_meta.base_decimals,
                quote_amount=quote_raw / 10 ** pool_meta.quote_decimals,
                direction=direction,
            ))
        except UnknownPool:
            raise
        except Exception as e:
            error = e if isinstance(e, MalformedEvent) else MalformedEvent(index, f'{type(e).__name__}: {e}')
            if policy == DecodePolicy.STRICT:
                raise error
            skipped += 1
            logger.warning(f'{error}. Событие пропущено')

    if skipped:
        logger.info(f'Пул {pool_meta.pool_id}: пропущено {skipped} битых событий, разобрано {len(trades)} сделок')
    return sorted(trades, key=lambda trade: trade.ts)


def parse_event_lines(lines, policy: DecodePolicy = DecodePolicy.LENIENT) -> list:
    """
    Разбирает строки events.jsonl в словари. Строка, не являющаяся JSON-объектом,
    пропускается (lenient) или прерывает чтение (strict).
    """
    policy = DecodePolicy(policy)
    events = []
    for index, line in enumerate(lines):
        try:
            event = json.loads(line)
            if not isinstance(event, dict):
                raise ValueError('ожидается JSON-объект')
        except ValueError as e:
            error = MalformedEvent(index, f'строка не разобрана: {e}')
            if policy == DecodePolicy.STRICT:
                raise error
            logger.warning(f'{error}. Строка пропущена')
            continue
        events.append(event)
    return events


def write_swaps_csv(path: str, trades):
    rows = [[t.pool_id, t.ts.strftime('%Y-%m-%dT%H:%M:%S.%fZ'), format_float(t.base_amount),
             format_float(t.quote_amount), t.direction.value] for t in trades]
    write_csv(path, SWAPS_HEADER, rows)


def read_swaps_csv(path: str) -> list:
    trades = []
    for index, row in enumerate(read_csv_rows(path, SWAPS_HEADER)):
        trade = SwapTrade(pool_id=row['pool_id'].strip().lower(), ts=_parse_ts(row['ts']),
                          base_amount=float(row['base_amount']), quote_amount=float(row['quote_amount']),
                          direction=Direction(row['direction'].strip()))
        if trade.base_amount <= 0 or trade.quote_amount <= 0:
            raise MalformedEvent(index, 'неположительные количества в swaps.csv')
        trades.append(trade)
    return sorted(trades, key=lambda trade: trade.ts)
