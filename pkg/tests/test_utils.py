import json
import os

import pytest

from utils.utils import MANIFEST_FILE, DataLayout, StaleArtifacts, ensure_fresh, get_sha256, write_manifest


@pytest.fixture
def built(tmp_path):
    layout = DataLayout(str(tmp_path))
    os.makedirs(layout.raw)
    os.makedirs(layout.build)
    for name, text in (('swaps.csv', 'a\n'), ('caps.csv', 'b\n')):
        with open(layout.raw_file(name), 'w', encoding='utf-8') as f:
            f.write(text)
    with open(layout.build_file('panel.csv'), 'w', encoding='utf-8') as f:
        f.write('panel\n')
    write_manifest(layout.build_file(MANIFEST_FILE),
                   [layout.raw_file('swaps.csv'), layout.raw_file('caps.csv'), layout.raw_file('absent.csv')],
                   [layout.build_file('panel.csv')])
    return layout


def _rewrite(path, text):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)


def check(layout):
    ensure_fresh(layout.build_file(MANIFEST_FILE), layout.raw, layout.build)


def test_layout_paths(tmp_path):
    layout = DataLayout(str(tmp_path))
    assert layout.raw_file('caps.csv') == os.path.join(str(tmp_path), 'raw', 'caps.csv')
    assert layout.results_file('report.csv') == os.path.join(str(tmp_path), 'results', 'report.csv')
    assert layout.synth == os.path.join(str(tmp_path), 'synth')


def test_manifest_records_existing_inputs(built):
    with open(built.build_file(MANIFEST_FILE), encoding='utf-8') as f:
        manifest = json.load(f)
    assert sorted(manifest['inputs']) == ['caps.csv', 'swaps.csv']
    assert manifest['outputs'] == {'panel.csv': get_sha256(built.build_file('panel.csv'))}
    check(built)


def test_touching_without_change_keeps_build_fresh(built):
    _rewrite(built.raw_file('swaps.csv'), 'a\n')
    check(built)


@pytest.mark.parametrize('action', ['change_input', 'remove_input', 'change_output', 'remove_output',
                                    'remove_manifest'])
def test_stale_build_detected(built, action):
    if action == 'change_input':
        _rewrite(built.raw_file('caps.csv'), 'b2\n')
    elif action == 'remove_input':
        os.remove(built.raw_file('swaps.csv'))
    elif action == 'change_output':
        _rewrite(built.build_file('panel.csv'), 'edited\n')
    elif action == 'remove_output':
        os.remove(built.build_file('panel.csv'))
    else:
        os.remove(built.build_file(MANIFEST_FILE))
    with pytest.raises(StaleArtifacts):
        check(built)
