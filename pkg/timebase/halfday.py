import datetime as dt
from dataclasses import dataclass
from enum import Enum, IntEnum

import pandas as pd


class Half(IntEnum):
    """
    Половина суток UTC: H1 = [00:00, 12:00), H2 = [12:00, 24:00).
    """
    H1 = 1
    H2 = 2

    @classmethod
    def parse(cls, value) -> 'Half':
        if isinstance(value, Half):
            return value
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f'Неизвестная половина суток: {value!r}. Ожидается H1 или H2')


@dataclass(frozen=True, order=True)
class HalfDayId:
    """
    Индекс полусуток t на сетке UTC. Порядок (date, half) совпадает с порядком начала интервалов.
    """
    date: dt.date
    half: Half

    @property
    def ordinal(self) -> int:
        return 2 * self.date.toordinal() + int(self.half) - 1

    @classmethod
    def from_ordinal(cls, ordinal: int) -> 'HalfDayId':
        day, rest = divmod(ordinal, 2)
        return cls(dt.date.fromordinal(day), Half(rest + 1))

    @classmethod
    def parse(cls, date, half) -> 'HalfDayId':
        if isinstance(date, str):
            date = dt.date.fromisoformat(date.strip())
        elif isinstance(date, dt.datetime):
            date = date.date()
        return cls(date, Half.parse(half))

    def successor(self) -> 'HalfDayId':
        return HalfDayId.from_ordinal(self.ordinal + 1)

    def predecessor(self) -> 'HalfDayId':
        return HalfDayId.from_ordinal(self.ordinal - 1)

    def shift(self, steps: int) -> 'HalfDayId':
        return HalfDayId.from_ordinal(self.ordinal + steps)

    @property
    def start(self) -> dt.datetime:
        hour = 0 if self.half == Half.H1 else 12
        return dt.datetime(self.date.year, self.date.month, self.date.day, hour, tzinfo=dt.timezone.utc)

    def __str__(self):
        return f'{self.date.isoformat()}/{self.half.name}'


class EquityMarket(Enum):
    SP500 = 'SP500'
    HANG_SENG = 'HangSeng'
    FTSE100 = 'FTSE100'


class Session(Enum):
    OVERNIGHT = 'overnight'
    INTRADAY = 'intraday'


# В 12:00 UTC крипторынок уже видел внутридневную сессию Гонконга и ночной разрыв Лондона и Нью-Йорка,
# в 00:00 UTC - наоборот
SESSION_MAP = {
    (EquityMarket.HANG_SENG, Half.H1): Session.INTRADAY,
    (EquityMarket.FTSE100, Half.H1): Session.OVERNIGHT,
    (EquityMarket.SP500, Half.H1): Session.OVERNIGHT,
    (EquityMarket.HANG_SENG, Half.H2): Session.OVERNIGHT,
    (EquityMarket.FTSE100, Half.H2): Session.INTRADAY,
    (EquityMarket.SP500, Half.H2): Session.INTRADAY,
}


def _as_utc(ts) -> dt.datetime:
    if isinstance(ts, str):
        ts = pd.Timestamp(ts).to_pydatetime()
    elif isinstance(ts, pd.Timestamp):
        ts = ts.to_pydatetime()
    if not isinstance(ts, dt.datetime):
        raise ValueError(f'Ожидается момент времени UTC, получено: {ts!r}')
    if ts.tzinfo is None:
        return ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


def half_day_index(ts) -> HalfDayId:
    """
    Возвращает полусутки, интервал которых содержит момент ts.
    Интервалы полуоткрытые: ровно 12:00:00 относится к H2, ровно 00:00:00 - к H1.
    Наивные datetime трактуются как UTC.
    """
    ts = _as_utc(ts)
    half = Half.H1 if ts.hour < 12 else Half.H2
    return HalfDayId(ts.date(), half)


def session_alignment(market: EquityMarket, half) -> Session:
    return SESSION_MAP[(market, Half.parse(half))]


def half_day_range(start: HalfDayId, end: HalfDayId) -> list:
    """
    Все полусутки от start до end включительно, по возрастанию.
    """
    if end < start:
        raise ValueError(f'Конец диапазона {end} раньше начала {start}')
    return [HalfDayId.from_ordinal(o) for o in range(start.ordinal, end.ordinal + 1)]


def parse_window(window: str) -> tuple:
    """
    Разбирает окно вида 'YYYY-MM-DD..YYYY-MM-DD' в пару (start/H1, end/H2).
    """
    try:
        start_str, end_str = window.split('..')
        start = HalfDayId(dt.date.fromisoformat(start_str.strip()), Half.H1)
        end = HalfDayId(dt.date.fromisoformat(end_str.strip()), Half.H2)
    except ValueError:
        raise ValueError(f'Окно должно иметь вид YYYY-MM-DD..YYYY-MM-DD, получено: {window!r}')
    if end < start:
        raise ValueError(f'Окно {window!r} пустое: конец раньше начала')
    return start, end


def is_trading_day(market: EquityMarket, date: dt.date, closed_days=None) -> bool:
    """
    Выходные закрыты всегда, остальные закрытые дни берутся из конфигурации (closed_days: {market: [dates]}).
    """
    if date.weekday() >= 5:
        return False
    if not closed_days:
        return True
    closed = closed_days.get(market) or closed_days.get(market.value) or ()
    return date not in {d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d)) for d in closed}
