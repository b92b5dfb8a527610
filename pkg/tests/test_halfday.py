import datetime as dt

import pytest

from timebase.halfday import (EquityMarket, Half, HalfDayId, Session, half_day_index, half_day_range,
                              is_trading_day, parse_window, session_alignment)


def test_noon_boundary_belongs_to_second_half():
    assert half_day_index('2024-03-05T11:59:59.999Z') == HalfDayId(dt.date(2024, 3, 5), Half.H1)
    assert half_day_index('2024-03-05T12:00:00Z') == HalfDayId(dt.date(2024, 3, 5), Half.H2)
    assert half_day_index('2024-03-06T00:00:00Z') == HalfDayId(dt.date(2024, 3, 6), Half.H1)


def test_naive_and_offset_timestamps_are_read_as_utc():
    aware = dt.datetime(2024, 3, 5, 13, 0, tzinfo=dt.timezone(dt.timedelta(hours=3)))
    assert half_day_index(aware) == HalfDayId(dt.date(2024, 3, 5), Half.H1)
    assert half_day_index(dt.datetime(2024, 3, 5, 13, 0)) == HalfDayId(dt.date(2024, 3, 5), Half.H2)


def test_ordinal_navigation_crosses_midnight():
    h2 = HalfDayId(dt.date(2023, 12, 31), Half.H2)
    assert h2.successor() == HalfDayId(dt.date(2024, 1, 1), Half.H1)
    assert h2.successor().predecessor() == h2
    assert HalfDayId.from_ordinal(h2.ordinal) == h2
    assert h2.shift(-3) == HalfDayId(dt.date(2023, 12, 30), Half.H1)
    assert str(h2) == '2023-12-31/H2'


def test_range_and_window():
    start, end = parse_window('2024-01-01..2024-01-03')
    grid = half_day_range(start, end)
    assert len(grid) == 6
    assert grid[0] == HalfDayId(dt.date(2024, 1, 1), Half.H1)
    assert grid[-1] == HalfDayId(dt.date(2024, 1, 3), Half.H2)
    assert all(b.ordinal - a.ordinal == 1 for a, b in zip(grid, grid[1:]))


@pytest.mark.parametrize('window', ['2024-01-03..2024-01-01', '2024-01-01', 'x..y'])
def test_bad_window_rejected(window):
    with pytest.raises(ValueError):
        parse_window(window)


def test_session_alignment_table():
    assert session_alignment(EquityMarket.HANG_SENG, 'H1') == Session.INTRADAY
    assert session_alignment(EquityMarket.HANG_SENG, 'H2') == Session.OVERNIGHT
    for market in (EquityMarket.SP500, EquityMarket.FTSE100):
        assert session_alignment(market, Half.H1) == Session.OVERNIGHT
        assert session_alignment(market, Half.H2) == Session.INTRADAY


def test_trading_calendar():
    saturday = dt.date(2024, 1, 6)
    assert not is_trading_day(EquityMarket.SP500, saturday)
    holiday = dt.date(2024, 1, 15)
    assert is_trading_day(EquityMarket.SP500, holiday)
    assert not is_trading_day(EquityMarket.SP500, holiday, {EquityMarket.SP500: [holiday]})
    assert is_trading_day(EquityMarket.FTSE100, holiday, {EquityMarket.SP500: [holiday]})
