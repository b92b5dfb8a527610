import json
from dataclasses import replace

import numpy as np
import pytest

from econometrics.gjr_garch import GjrParams
from synth.dgp import DgpConfig, ExtremeEvent, UnstableConfig, generate_many, generate_panel, simulate_gjr, \
    write_synthetic
from universe.classifier import Chain, Exclusion, PortfolioKind


@pytest.fixture(scope='module')
def small_config():
    return DgpConfig(T=300, seed=7, spillover={(Chain.ETHEREUM, Chain.ARBITRUM): -0.15})


@pytest.fixture(scope='module')
def small_data(small_config):
    return generate_panel(small_config)


def test_same_seed_same_panel(small_config, small_data):
    again = generate_panel(small_config)
    for chain, panel in small_data.panels.items():
        for kind in PortfolioKind:
            np.testing.assert_array_equal(panel.series(kind).values.values, again.panels[chain].series(kind).values.values)
    other = generate_panel(replace(small_config, seed=8))
    assert not np.allclose(other.panels[Chain.ETHEREUM].all.values.values,
                           small_data.panels[Chain.ETHEREUM].all.values.values)


def test_panel_shape_and_universe(small_config, small_data):
    grid = small_config.grid
    assert len(grid) == 300
    assert set(small_data.panels) == set(Chain)
    for panel in small_data.panels.values():
        for kind in PortfolioKind:
            values = panel.series(kind).values
            assert list(values.index) == grid
            assert values.notna().all()
    stable = [r for r in small_data.assets if r.asset_id.endswith('-usd')]
    assert all(r.exclusion == Exclusion.STABLECOIN for r in stable)
    assert all(r.multi_chain for r in small_data.assets if r.asset_id.endswith('-bridged'))


def test_all_panel_mixes_segments(small_data):
    panel = small_data.panels[Chain.SOLANA]
    all_, cex, non_cex = (panel.series(k).values for k in (PortfolioKind.ALL, PortfolioKind.CEX,
                                                            PortfolioKind.NON_CEX))
    lower = np.minimum(cex, non_cex) - 1e-12
    upper = np.maximum(cex, non_cex) + 1e-12
    assert ((all_ >= lower) & (all_ <= upper)).all()


def test_unstable_configurations_rejected():
    with pytest.raises(UnstableConfig):
        DgpConfig(T=100, own_lag=2.5)
    with pytest.raises(UnstableConfig):
        DgpConfig(T=100, spillover={(Chain.ETHEREUM, Chain.SOLANA): 2.0, (Chain.SOLANA, Chain.ETHEREUM): 2.0})
    with pytest.raises(UnstableConfig):
        DgpConfig(T=100, garch={Chain.ETHEREUM: GjrParams(0.05, (0.5,), (0.2,), (0.5,))})
    with pytest.raises(ValueError):
        DgpConfig(T=100, spillover={(Chain.BSC, Chain.BSC): 0.1})
    with pytest.raises(ValueError):
        DgpConfig(T=100, events=(ExtremeEvent(Chain.BSC, 100, 0.1),))


def test_event_moves_non_cex_only_at_its_half_day(small_config):
    base_config = replace(small_config, spillover={})
    shocked_config = replace(base_config, events=(ExtremeEvent(Chain.BSC, 120, 0.25),))
    base, shocked = generate_panel(base_config), generate_panel(shocked_config)
    diff = shocked.panels[Chain.BSC].non_cex.values - base.panels[Chain.BSC].non_cex.values
    assert diff.iloc[120] == pytest.approx(0.25, abs=1e-9)
    assert np.allclose(diff.drop(diff.index[120]).values, 0.0, atol=1e-9)
    np.testing.assert_allclose(shocked.panels[Chain.BSC].cex.values.values, base.panels[Chain.BSC].cex.values.values)
    assert shocked.truth['events'][0]['half_day'] == str(base_config.grid[120])


def test_config_section_and_truth(tmp_path):
    config = DgpConfig.from_config({'T': 120, 'n_chains': 3, 'seed': 4,
                                    'spillover': [{'source': 'Ethereum', 'target': 'BSC', 'coef': 0.2}],
                                    'garch': {'omega': 0.1, 'alpha': [0.05], 'gamma': [], 'beta': [0.9]}})
    assert config.chains == (Chain.ETHEREUM, Chain.SOLANA, Chain.BSC)
    assert config.spillover_matrix()[2, 0] == 0.2
    data = generate_panel(config)
    write_synthetic(data, str(tmp_path / 'raw'), str(tmp_path / 'synth'))
    truth = json.loads((tmp_path / 'synth' / 'truth.json').read_text(encoding='utf-8'))
    assert truth['seed'] == 4
    assert truth['spillover'] == [{'source': 'Ethereum', 'target': 'BSC', 'coef': 0.2}]
    assert truth['garch']['BSC'] == {'omega': 0.1, 'alpha': [0.05], 'gamma': [], 'beta': [0.9]}
    assert truth['spectral_radius'] == 0.0
    for name in ('assets.jsonl', 'pools.jsonl', 'swaps.csv', 'caps.csv', 'series.csv'):
        assert (tmp_path / 'raw' / name).is_file()


def test_generate_many_uses_each_seed(small_config):
    runs = generate_many(replace(small_config, T=50), seeds=[1, 2])
    assert [run.config.seed for run in runs] == [1, 2]


@pytest.mark.slow
def test_gjr_simulation_matches_unconditional_variance():
    params = GjrParams(omega=0.05, arch=(0.10,), leverage=(0.10,), garch=(0.80,))
    e, sigma2 = simulate_gjr(params, np.random.default_rng(9).standard_normal(200_000))
    assert np.var(e) == pytest.approx(params.unconditional_variance, rel=0.1)
    assert np.all(sigma2 > 0)
    assert np.mean(e < 0) == pytest.approx(0.5, abs=0.01)
