import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from timebase.halfday import HalfDayId

logger = logging.getLogger(__name__)


class Chain(Enum):
    ETHEREUM = 'Ethereum'
    SOLANA = 'Solana'
    BSC = 'BSC'
    ARBITRUM = 'Arbitrum'
    AVALANCHE = 'Avalanche'

    @property
    def native(self) -> str:
        return NATIVE_TOKENS[self]

    @classmethod
    def parse(cls, value) -> 'Chain':
        if isinstance(value, Chain):
            return value
        for chain in cls:
            if chain.value.lower() == str(value).strip().lower() or chain.name.lower() == str(value).strip().lower():
                return chain
        raise ValueError(f'Неизвестная сеть: {value!r}')


NATIVE_TOKENS = {
    Chain.ETHEREUM: 'ETH',
    Chain.SOLANA: 'SOL',
    Chain.BSC: 'BNB',
    Chain.ARBITRUM: 'ARB',
    Chain.AVALANCHE: 'AVAX',
}

CHAINS = tuple(Chain)


class Exclusion(Enum):
    NONE = 'none'
    LIQUID_STAKING = 'liquid_staking'
    WRAPPED_NATIVE = 'wrapped_native'
    STABLECOIN = 'stablecoin'


# Теги источника метаданных, которые означают исключение из портфелей
EXCLUSION_TAGS = {
    'stablecoin': Exclusion.STABLECOIN,
    'stable': Exclusion.STABLECOIN,
    'stablecoins': Exclusion.STABLECOIN,
    'liquid_staking': Exclusion.LIQUID_STAKING,
    'liquid-staking-tokens': Exclusion.LIQUID_STAKING,
    'restaking': Exclusion.LIQUID_STAKING,
    'liquid_restaking': Exclusion.LIQUID_STAKING,
    'wrapped_native': Exclusion.WRAPPED_NATIVE,
    'wrapped-tokens': Exclusion.WRAPPED_NATIVE,
}


class PortfolioKind(Enum):
    ALL = 'All'
    CEX = 'CEX'
    NON_CEX = 'nonCEX'
    LOCAL = 'Local'

    @classmethod
    def parse(cls, value) -> 'PortfolioKind':
        if isinstance(value, PortfolioKind):
            return value
        normalized = str(value).strip().replace('-', '').replace('_', '').lower()
        for kind in cls:
            if kind.value.lower() == normalized:
                return kind
        raise ValueError(f'Неизвестный тип портфеля: {value!r}')


@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    logical_id: str
    chain: Chain
    address: str = ''
    symbol: str = ''
    cex_listing_date: Optional[dt.date] = None
    exclusion: Exclusion = Exclusion.NONE
    multi_chain: bool = False
    tags: tuple = field(default_factory=tuple)


def exclusion_from_tags(tags) -> Exclusion:
    for tag in tags:
        exclusion = EXCLUSION_TAGS.get(str(tag).strip().lower())
        if exclusion is not None:
            return exclusion
    return Exclusion.NONE


def mark_multi_chain(records) -> list:
    """
    Проставляет multi_chain = True всем записям, чей logical_id встречается на двух и более разных сетях.
    """
    chains_by_logical = defaultdict(set)
    for record in records:
        chains_by_logical[record.logical_id].add(record.chain)
    return [replace(r, multi_chain=len(chains_by_logical[r.logical_id]) >= 2) for r in records]


def classify(records, as_of: HalfDayId, freeze_at: Optional[HalfDayId] = None) -> dict:
    """
    Раскладывает активы по портфелям каждой сети на полусутки as_of.

    All - все неисключённые активы сети; CEX - из них листинг на CEX не позже даты as_of;
    nonCEX = All \\ CEX; Local = All без мультичейн-активов.
    Если задан freeze_at, статус листинга фиксируется на этих полусутках.

    Returns:
        dict: {(Chain, PortfolioKind): frozenset(asset_id)} для всех сетей и типов.
    """
    listing_cutoff = (freeze_at or as_of).date
    members = {(chain, kind): set() for chain in CHAINS for kind in PortfolioKind}

    for record in records:
        if record.exclusion != Exclusion.NONE:
            continue
        chain = record.chain
        members[(chain, PortfolioKind.ALL)].add(record.asset_id)
        if record.cex_listing_date is not None and record.cex_listing_date <= listing_cutoff:
            members[(chain, PortfolioKind.CEX)].add(record.asset_id)
        else:
            members[(chain, PortfolioKind.NON_CEX)].add(record.asset_id)
        if not record.multi_chain:
            members[(chain, PortfolioKind.LOCAL)].add(record.asset_id)

    return {key: frozenset(value) for key, value in members.items()}


class UniverseClassifier:
    """
    Классификатор вселенной активов с ручным списком исключений из конфигурации.
    """

    def __init__(self, exclusion_overrides=None, freeze_cex_at: Optional[HalfDayId] = None):
        self.exclusion_overrides = self._validate_overrides(exclusion_overrides or {})
        self.freeze_cex_at = freeze_cex_at

    @classmethod
    def from_config(cls, universe_config):
        universe_config = universe_config or {}
        freeze = universe_config.get('freeze_cex_at')
        freeze_at = HalfDayId.parse(freeze, 'H1') if freeze else None
        return cls(exclusion_overrides=universe_config.get('exclusion'), freeze_cex_at=freeze_at)

    @staticmethod
    def _validate_overrides(overrides):
        validated = {}
        for class_name, asset_ids in overrides.items():
            try:
                exclusion = Exclusion(class_name)
            except ValueError:
                raise ValueError(f'Неизвестный класс исключения в конфигурации: exclusion.{class_name}')
            if exclusion == Exclusion.NONE:
                raise ValueError('Класс exclusion.none не может использоваться в списке исключений')
            if not isinstance(asset_ids, (list, tuple)):
                raise ValueError(f'exclusion.{class_name} должен быть списком asset_id')
            for asset_id in asset_ids:
                validated[str(asset_id)] = exclusion
        return validated

    def prepare(self, records) -> list:
        """
        Применяет ручные исключения и пересчитывает флаг multi_chain.
        """
        prepared = []
        for record in records:
            override = self.exclusion_overrides.get(record.asset_id)
            if override is not None and record.exclusion != override:
                logger.info(f'Актив {record.asset_id} исключён по списку конфигурации: {override.value}')
                record = replace(record, exclusion=override)
            prepared.append(record)
        return mark_multi_chain(prepared)

    def membership_grid(self, records, grid) -> dict:
        """
        Членство на каждых полусутках сетки: {HalfDayId: {(Chain, PortfolioKind): frozenset}}.
        Пересчёт происходит только при смене календарной даты.
        """
        result = {}
        current_date, current = None, None
        for half_day in grid:
            if half_day.date != current_date:
                current_date = half_day.date
                current = classify(records, half_day, self.freeze_cex_at)
            result[half_day] = current
        return result
