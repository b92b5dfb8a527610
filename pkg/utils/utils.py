import hashlib
import json
import os
import logging
from dataclasses import dataclass

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'build_manifest.json'


class StaleArtifacts(RuntimeError):
    pass


def get_sha256(file_path):
    sha256_hash = hashlib.sha256()
    with open(file_path, "rb") as f:
        for byte_block in iter(lambda: f.read(4096), b""):
            sha256_hash.update(byte_block)
    return sha256_hash.hexdigest()


@dataclass(frozen=True)
class DataLayout:
    """
    Раскладка директории данных: raw - каноническое хранилище, build - панели и ковариаты,
    results - отчёты и архив моделей, synth - истинные ряды генератора.
    """
    root: str

    @property
    def raw(self) -> str:
        return os.path.join(self.root, 'raw')

    @property
    def build(self) -> str:
        return os.path.join(self.root, 'build')

    @property
    def results(self) -> str:
        return os.path.join(self.root, 'results')

    @property
    def synth(self) -> str:
        return os.path.join(self.root, 'synth')

    def raw_file(self, name: str) -> str:
        return os.path.join(self.raw, name)

    def build_file(self, name: str) -> str:
        return os.path.join(self.build, name)

    def results_file(self, name: str) -> str:
        return os.path.join(self.results, name)


def write_manifest(manifest_path: str, inputs: list, outputs: list):
    """
    Записывает SHA-256 входов и выходов стадии build.
    """
    manifest = {
        'inputs': {os.path.basename(p): get_sha256(p) for p in sorted(inputs) if os.path.exists(p)},
        'outputs': {os.path.basename(p): get_sha256(p) for p in sorted(outputs)},
    }
    os.makedirs(os.path.dirname(os.path.abspath(manifest_path)), exist_ok=True)
    with open(manifest_path, 'w', encoding='utf-8', newline='') as f:
        f.write(json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    logger.info(f'Манифест сборки записан в {manifest_path}')


def ensure_fresh(manifest_path: str, input_dir: str, output_dir: str):
    """
    Проверяет, что выходы build построены по текущим входам.

    Время изменения файлов не учитывается: вход считается новым, только если изменилось его содержимое.

    Raises:
        StaleArtifacts: манифеста нет, вход изменился или удалён, результат изменён или отсутствует.
    """
    if not os.path.isfile(manifest_path):
        raise StaleArtifacts(f'Нет манифеста сборки {manifest_path}: сначала выполните build')
    with open(manifest_path, 'r', encoding='utf-8') as f:
        manifest = json.load(f)

    outputs = [os.path.join(output_dir, name) for name in manifest.get('outputs', {})]
    missing = [p for p in outputs if not os.path.isfile(p)]
    if missing:
        raise StaleArtifacts(f'Отсутствуют результаты build: {", ".join(missing)}')

    for name, digest in manifest.get('inputs', {}).items():
        path = os.path.join(input_dir, name)
        if not os.path.isfile(path):
            raise StaleArtifacts(f'Вход сборки {path} удалён после build')
        if get_sha256(path) != digest:
            raise StaleArtifacts(f'Вход {path} изменился после build: выполните build повторно')
    for path in outputs:
        if get_sha256(path) != manifest['outputs'][os.path.basename(path)]:
            raise StaleArtifacts(f'Результат {path} изменён после build')
