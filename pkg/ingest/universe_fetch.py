import json
import logging
import datetime as dt

from ingest.sources import SchemaMismatch, SourceDescriptor, SourceKind, open_source
from ingest.store import ASSET_FIELDS, asset_to_json, write_jsonl
from universe.classifier import AssetRecord, Chain, Exclusion, exclusion_from_tags, mark_multi_chain

logger = logging.getLogger(__name__)

ASSETS_FILE = 'assets.jsonl'


def _parse_asset(payload: dict, offset: int) -> AssetRecord:
    missing = [name for name in ASSET_FIELDS + ['tags'] if name not in payload]
    if missing:
        raise SchemaMismatch(f'Запись #{offset} метаданных актива без полей: {", ".join(missing)}')

    listing = payload.get('cex_listing_date')
    tags = tuple(str(tag) for tag in payload['tags'])
    try:
        return AssetRecord(
            asset_id=str(payload['asset_id']),
            logical_id=str(payload['logical_id']),
            chain=Chain.parse(payload['chain']),
            address=str(payload['address']).lower(),
            symbol=str(payload['symbol']),
            cex_listing_date=dt.date.fromisoformat(listing) if listing else None,
            exclusion=Exclusion(payload['exclusion']) if payload.get('exclusion') else exclusion_from_tags(tags),
            tags=tags,
        )
    except ValueError as e:
        raise SchemaMismatch(f'Запись #{offset} метаданных актива некорректна: {e}')


def _raw_payloads(source: SourceDescriptor) -> list:
    client = open_source(source)
    if source.kind == SourceKind.FIXTURE_FILE:
        return [json.loads(line) for line in client.request(0, filename=ASSETS_FILE)]

    payloads = []
    for page in client.iter_pages(endpoint='assets'):
        if not isinstance(page, list):
            raise SchemaMismatch(f'Источник {client.name} вернул страницу не в виде списка')
        payloads.extend(page)
    return payloads


def fetch_universe(source: SourceDescriptor, chain=None) -> list:
    """
    Загружает метаданные активов и возвращает AssetRecord выбранной сети (или всех сетей при chain=None).

    Флаг multi_chain вычисляется по полному списку источника до фильтрации по сети,
    поэтому актив, перенесённый мостом на другую сеть, помечается и там, и там.
    Для файлового источника результат детерминирован: записи упорядочены по asset_id.

    Raises:
        SourceUnavailable: источник недоступен или файл отсутствует.
        SchemaMismatch: в записи не хватает обязательного поля.
    """
    records = [_parse_asset(payload, offset) for offset, payload in enumerate(_raw_payloads(source))]
    records = mark_multi_chain(records)

    if chain is not None:
        chain = Chain.parse(chain)
        records = [r for r in records if r.chain == chain]

    records.sort(key=lambda r: (r.chain.value, r.asset_id))
    excluded = sum(1 for r in records if r.exclusion != Exclusion.NONE)
    logger.info(f'Источник {source.name}: {len(records)} активов, из них {excluded} исключены по тегам')
    return records


def write_assets_jsonl(path: str, records):
    write_jsonl(path, [asset_to_json(r) for r in records])
