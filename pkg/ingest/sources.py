import os
import time
import logging
from dataclasses import dataclass
from enum import Enum
from functools import wraps
from typing import Optional

import requests

logger = logging.getLogger(__name__)

FIXTURE_HEADER = '# chainspill-fixture v1'
API_KEY_ENV_PREFIX = 'CHAINSPILL_API_KEY_'
DATA_DIR_ENV = 'CHAINSPILL_DATA_DIR'


class SourceUnavailable(ConnectionError):
    pass


class SchemaMismatch(ValueError):
    pass


class SourceKind(Enum):
    FIXTURE_FILE = 'fixture_file'
    HTTP_ENDPOINT = 'http_endpoint'


@dataclass(frozen=True)
class SourceDescriptor:
    kind: SourceKind
    uri: str
    name: str = 'default'
    credentials: Optional[str] = None
    rate_limit: float = 1.0  # запросов в секунду

    @classmethod
    def from_config(cls, source_config):
        kind = SourceKind(source_config.get('kind', SourceKind.FIXTURE_FILE.value))
        name = source_config.get('name', 'default')
        credentials = source_config.get('credentials') or os.environ.get(f'{API_KEY_ENV_PREFIX}{name.upper()}')
        rate_limit = source_config.get('rate_limit', 1.0)
        if not isinstance(rate_limit, (int, float)) or rate_limit <= 0:
            raise ValueError('rate_limit должен быть положительным числом запросов в секунду')
        return cls(kind=kind, uri=str(source_config['uri']), name=name, credentials=credentials,
                   rate_limit=float(rate_limit))


def requires_key(method):
    """
    Декоратор для методов, требующих API-ключа. Проверяет наличие в классе заполненного поля _api_key.
    """

    @wraps(method)
    def wrapper(self, *args, **kwargs):
        if not getattr(self, '_api_key', None):
            raise PermissionError(
                f'Метод \'{method.__name__}\' требует API-ключа. Задайте {API_KEY_ENV_PREFIX}{self.name.upper()} '
                f'или credentials в конфигурации и повторите попытку.')
        return method(self, *args, **kwargs)

    return wrapper


class FixtureSource:
    """
    Источник из локальных файлов. Повторное чтение даёт идентичный поток записей.
    """

    def __init__(self, root: str, name: str = 'fixture'):
        self.root = root
        self.name = name

    def path(self, filename: str) -> str:
        return os.path.join(self.root, filename)

    def read_lines(self, filename: str) -> list:
        """
        Возвращает строки файла без заголовка версии схемы.
        """
        file_path = self.path(filename)
        if not os.path.isfile(file_path):
            raise SourceUnavailable(f'Файл источника не найден: {file_path}')

        with open(file_path, 'r', encoding='utf-8', newline='') as f:
            lines = f.read().split('\n')

        if lines and lines[0].startswith('#'):
            if lines[0].strip() != FIXTURE_HEADER:
                raise SchemaMismatch(f'Неподдерживаемая версия схемы в {file_path}: {lines[0].strip()}')
            lines = lines[1:]
        return [line for line in lines if line.strip()]

    def request(self, page: int = 0, filename: str = 'assets.jsonl') -> list:
        # У файлового источника одна страница
        return self.read_lines(filename) if page == 0 else []


class HttpSource:
    """
    HTTP-источник с ограничением частоты запросов. Разбор ответа выполняет адаптер конкретного API.
    """

    def __init__(self, base_url: str, name: str = 'http', api_key: str = None, rate_limit: float = 1.0,
                 session: requests.Session = None, timeout: float = 30.0):
        self._base_url = base_url.rstrip('/')
        self.name = name
        self._api_key = api_key
        self._min_interval = 1.0 / rate_limit
        self._last_request = 0.0
        self._session = session or requests.Session()
        self._timeout = timeout
        self._error_codes = {
            401: 'API-ключ не действителен или истёк',
            404: 'Запрошенный ресурс не найден у источника',
            429: 'Превышен лимит запросов источника',
        }

    @classmethod
    def from_descriptor(cls, descriptor: SourceDescriptor):
        return cls(base_url=descriptor.uri, name=descriptor.name, api_key=descriptor.credentials,
                   rate_limit=descriptor.rate_limit)

    def _throttle(self):
        wait = self._min_interval - (time.monotonic() - self._last_request)
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()

    def get_json(self, endpoint: str, params: dict = None):
        url = f'{self._base_url}/{endpoint.lstrip("/")}'
        headers = {'x-api-key': self._api_key} if self._api_key else {}
        self._throttle()

        try:
            response = self._session.get(url, params=params or {}, headers=headers, timeout=self._timeout)
        except requests.RequestException as e:
            raise SourceUnavailable(f'Ошибка подключения к источнику {self.name}: {e}')

        if response.status_code in self._error_codes:
            raise SourceUnavailable(f'Источник {self.name}: {self._error_codes[response.status_code]}')
        try:
            response.raise_for_status()
        except requests.RequestException as e:
            raise SourceUnavailable(f'Источник {self.name} вернул ошибку: {e}')

        try:
            return response.json()
        except ValueError:
            raise SchemaMismatch(f'Не удалось декодировать JSON-ответ источника {self.name}')

    def request(self, page: int = 0, endpoint: str = 'coins/list', page_size: int = 250):
        return self.get_json(endpoint, params={'page': page + 1, 'per_page': page_size})

    @requires_key
    def request_private(self, endpoint: str, params: dict = None):
        return self.get_json(endpoint, params)

    def iter_pages(self, endpoint: str = 'coins/list', max_pages: int = 1000):
        for page in range(max_pages):
            payload = self.request(page, endpoint=endpoint)
            if not payload:
                break
            logger.info(f'Источник {self.name}: получена страница {page + 1} ({len(payload)} записей)')
            yield payload


def open_source(descriptor: SourceDescriptor):
    if descriptor.kind == SourceKind.FIXTURE_FILE:
        return FixtureSource(descriptor.uri, descriptor.name)
    return HttpSource.from_descriptor(descriptor)
