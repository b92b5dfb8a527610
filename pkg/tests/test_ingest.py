import math
import datetime as dt

import numpy as np
import pandas as pd
import pytest

from ingest.market_cap import (CapSource, DuplicateObservation, RawCapObservation, computed_market_cap,
                               merge_all, merge_market_cap, read_caps_csv)
from ingest.prices import (NoTrades, PriceReconstructor, read_pools_jsonl, reconstruct_price_series,
                           select_pools, write_pools_jsonl)
from ingest.sources import FIXTURE_HEADER, FixtureSource, SchemaMismatch, SourceUnavailable
from ingest.store import read_series_csv
from ingest.swap_decoder import (DecodePolicy, Direction, MalformedEvent, PoolDescriptor, Protocol, SwapTrade,
                                 UnknownPool, decode_swap_events, parse_event_lines, read_swaps_csv,
                                 write_swaps_csv)
from timebase.halfday import Half, HalfDayId, half_day_range

POOLS = {
    'eth-aaa': PoolDescriptor('0xpoolaaa', 'eth-aaa', 0, 18, 18, Protocol.UNISWAP_V2),
    'eth-bbb': PoolDescriptor('0xpoolbbb', 'eth-bbb', 1, 6, 18, Protocol.UNISWAP_V3),
}


@pytest.fixture
def events(fixtures_dir):
    return parse_event_lines(FixtureSource(fixtures_dir).read_lines('events.jsonl'))


def _trade(ts: str, price: float) -> SwapTrade:
    return SwapTrade('0xpool', dt.datetime.fromisoformat(ts).replace(tzinfo=dt.timezone.utc), 1.0, price,
                     Direction.BUY)


def test_fixture_stream_decodes_valid_trades_only(events):
    assert len(events) == 12
    trades = PriceReconstructor(POOLS).decode(events)
    by_pool = {pool_id: [t for t in trades if t.pool_id == pool_id] for pool_id in ('0xpoolaaa', '0xpoolbbb')}
    assert len(by_pool['0xpoolaaa']) == 5
    assert len(by_pool['0xpoolbbb']) == 3
    assert [t.ts for t in trades] == sorted(t.ts for t in trades)
    first = by_pool['0xpoolaaa'][0]
    assert first.direction == Direction.SELL
    assert first.base_amount == pytest.approx(2.0)
    assert first.quote_amount == pytest.approx(1.0)


def test_fixture_prices_on_half_day_grid(events, small_grid):
    reconstructor = PriceReconstructor(POOLS)
    prices = reconstructor.price_series(reconstructor.decode(events), small_grid)
    np.testing.assert_allclose(prices['eth-aaa'].values, [0.6, 0.7, 0.7, 0.8, 0.8, 0.9, 0.9, 0.9])
    np.testing.assert_allclose(prices['eth-bbb'].values, [2.0, 2.0, 1.9, 1.9, 2.1, 2.1, 2.1, 2.1])
    assert list(prices['eth-aaa'].index) == small_grid


def test_v3_signs_follow_pool_perspective(events):
    trades = decode_swap_events(events, POOLS['eth-bbb'])
    assert [t.direction for t in trades] == [Direction.BUY, Direction.SELL, Direction.BUY]
    assert trades[0].base_amount == pytest.approx(3.0)
    assert trades[0].price == pytest.approx(2.0)


def test_strict_policy_raises_on_malformed_event(events):
    with pytest.raises(MalformedEvent):
        decode_swap_events(events, POOLS['eth-aaa'], DecodePolicy.STRICT)


def test_strict_errors_name_offset_in_interleaved_stream(events):
    aaa = [e for e in events if e['pool_id'].lower() == '0xpoolaaa']
    bbb = [e for e in events if e['pool_id'] == '0xpoolbbb']
    broken = next(e for e in aaa if e['data'] == '0xzz')
    good_aaa = [e for e in aaa if e is not broken]
    stream = [bbb[0], good_aaa[0], bbb[1], broken, good_aaa[1]]
    with pytest.raises(MalformedEvent) as info:
        PriceReconstructor(POOLS, policy=DecodePolicy.STRICT).decode(stream)
    assert info.value.index == 3
    assert '#3' in str(info.value)


def test_strict_reconstructor_names_first_foreign_offset(events):
    foreign = next(e for e in events if e['pool_id'] == '0xpoolccc')
    aaa = [e for e in events if e['pool_id'].lower() == '0xpoolaaa' and e['data'] != '0xzz']
    with pytest.raises(UnknownPool, match='#2'):
        PriceReconstructor(POOLS, policy=DecodePolicy.STRICT).decode([aaa[0], aaa[1], foreign])


def test_strict_policy_rejects_foreign_pool(events):
    foreign = [e for e in events if e['pool_id'] == '0xpoolccc']
    with pytest.raises(UnknownPool):
        decode_swap_events(foreign, POOLS['eth-aaa'], DecodePolicy.STRICT)
    assert decode_swap_events(foreign, POOLS['eth-aaa'], DecodePolicy.LENIENT) == []


def test_broken_json_line_is_skipped_or_raised():
    lines = ['{"pool_id": "0xpoolaaa"}', '{not json', '[1, 2]']
    assert len(parse_event_lines(lines)) == 1
    with pytest.raises(MalformedEvent):
        parse_event_lines(lines, DecodePolicy.STRICT)


def test_staleness_limit_bounds_carry_forward():
    grid = half_day_range(HalfDayId(dt.date(2024, 1, 1), Half.H1), HalfDayId(dt.date(2024, 1, 4), Half.H2))
    series = reconstruct_price_series([_trade('2024-01-01T03:00:00', 1.5)], grid, staleness_limit=4)
    assert series.iloc[:6].tolist() == [1.5] * 6
    assert series.iloc[6:].isna().all()

    exact = reconstruct_price_series([_trade('2024-01-01T03:00:00', 1.5)], grid, staleness_limit=0)
    assert exact.iloc[0] == 1.5
    assert exact.iloc[1:].isna().all()


def test_trade_before_grid_carries_into_it():
    grid = half_day_range(HalfDayId(dt.date(2024, 1, 2), Half.H1), HalfDayId(dt.date(2024, 1, 2), Half.H2))
    series = reconstruct_price_series([_trade('2024-01-01T20:00:00', 3.0)], grid)
    assert series.tolist() == [3.0, 3.0]


def test_no_trades_on_grid(small_grid):
    with pytest.raises(NoTrades):
        reconstruct_price_series([_trade('2023-06-01T00:00:00', 1.0)], small_grid)


def test_swaps_and_pools_files_reproduce_prices(tmp_path, events, small_grid):
    reconstructor = PriceReconstructor(POOLS)
    trades = reconstructor.decode(events)
    write_swaps_csv(str(tmp_path / 'swaps.csv'), trades)
    write_pools_jsonl(str(tmp_path / 'pools.jsonl'), POOLS)

    reloaded = PriceReconstructor(read_pools_jsonl(str(tmp_path / 'pools.jsonl')))
    assert reloaded.pools == POOLS
    again = reloaded.price_series(read_swaps_csv(str(tmp_path / 'swaps.csv')), small_grid)
    expected = reconstructor.price_series(trades, small_grid)
    for asset_id in expected:
        np.testing.assert_allclose(again[asset_id].values, expected[asset_id].values)


def test_pool_config_validation():
    with pytest.raises(ValueError):
        select_pools({'pools': [{'pool_id': '0xa', 'asset_id': 'x', 'base_index': 2}]})
    with pytest.raises(ValueError):
        select_pools({'pools': [{'pool_id': '0xa', 'asset_id': 'x'}, {'pool_id': '0xb', 'asset_id': 'x'}]})
    with pytest.raises(ValueError):
        PriceReconstructor({}, staleness_limit=-1)


def test_cap_merge_averages_available_sources(fixtures_dir):
    caps = merge_all(read_caps_csv(f'{fixtures_dir}/caps.csv'))
    aaa, bbb = caps['eth-aaa'], caps['eth-bbb']
    assert aaa.tolist() == [1100.0, 1100.0, 1050.0]
    assert bbb.tolist() == [3000.0, 3000.0, 3050.0]


def test_cap_merge_on_grid_marks_missing_half_days(small_grid):
    h = small_grid[0]
    observations = [RawCapObservation('x', h, CapSource.PROVIDER_A, math.nan)]
    merged = merge_market_cap(observations, small_grid)
    assert len(merged) == len(small_grid)
    assert merged.isna().all()


def test_duplicate_cap_observation_rejected(small_grid):
    h = small_grid[0]
    observations = [RawCapObservation('x', h, CapSource.PROVIDER_A, 1.0),
                    RawCapObservation('x', h, CapSource.PROVIDER_A, 2.0)]
    with pytest.raises(DuplicateObservation):
        merge_market_cap(observations)


def test_negative_cap_rejected(small_grid):
    with pytest.raises(ValueError):
        RawCapObservation('x', small_grid[0], CapSource.PROVIDER_B, -1.0)


def test_computed_cap_joins_supply_and_price(small_grid):
    supply = pd.Series([10.0, 10.0, np.nan], index=pd.Index(small_grid[:3], dtype=object))
    price = pd.Series([2.0, 3.0, 4.0], index=pd.Index(small_grid[:3], dtype=object))
    observations = computed_market_cap('x', supply, price)
    assert [o.cap for o in observations] == [20.0, 30.0]
    assert all(o.source == CapSource.COMPUTED for o in observations)


def test_series_fixture_mixes_daily_and_half_day_rows(fixtures_dir):
    series = read_series_csv(f'{fixtures_dir}/series.csv')
    assert series['EURIBOR'].index[0] == dt.date(2024, 1, 1)
    assert series['price_ETH'].index[1] == HalfDayId(dt.date(2024, 1, 1), Half.H2)
    assert series['price_ETH'].iloc[1] == 2310.25


def test_fixture_header_is_checked(tmp_path):
    (tmp_path / 'bad.csv').write_text('# other-format v9\na,b\n', encoding='utf-8')
    with pytest.raises(SchemaMismatch):
        FixtureSource(str(tmp_path)).read_lines('bad.csv')
    (tmp_path / 'ok.csv').write_text(f'{FIXTURE_HEADER}\na,b\n', encoding='utf-8')
    assert FixtureSource(str(tmp_path)).read_lines('ok.csv') == ['a,b']
    with pytest.raises(SourceUnavailable):
        FixtureSource(str(tmp_path)).read_lines('missing.csv')
