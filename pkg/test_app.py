"""
Tests for the results explorer's building blocks.

The Streamlit page itself is not imported here (it configures the page at
import time); the charts and loaders it calls are.
"""

import numpy as np
import pandas as pd
import plotly.graph_objects as go
import pytest

from chart_utils import ChartCreator
from config import Config, SimulationParameters
from experiments import ExperimentSpec, run_experiment
from utils import (
    create_gain_summary,
    empirical_cdf,
    export_data_to_csv,
    format_db,
    format_duration,
    list_runs,
    load_data_from_csv,
    load_manifest,
    load_run,
)


def sample_tables() -> dict:
    rng = np.random.default_rng(0)
    designs = ['tunable', 'multi-design', 'wideband']
    return {
        'power': pd.DataFrame({'design': np.repeat(designs, 10), 'delivered_db': rng.normal(-40, 3, 30)}),
        'utilization': pd.DataFrame({'design': designs * 4, 'elements_on': rng.integers(100, 400, 12),
                                     'elements_total': 400}),
        'elements_needed': pd.DataFrame({'design': np.repeat(designs, 4), 'n_frequencies': [1, 2, 3, 4] * 3,
                                         'elements': [100, 169, 225, 324, 100, 400, 900, 1600] + [np.nan] * 4}),
        'gains': pd.DataFrame({'frequency': [915e6, 915e6, 2.412e9, 5.21e9], 'gain_db': [3.0, 7.5, 0.0, 12.0],
                               'elapsed_s': [40.0, 55.0, 61.0, 30.0]}),
        'roll_lengths': pd.DataFrame({'band': ['2.4GHz', '2.4GHz', '5GHz'], 'length_cm': [6.0, 7.0, 2.5]}),
        'panel_dynamics': pd.DataFrame({'n_links': [1, 1, 2, 2], 'panel_id': [0, 1, 0, 1],
                                        'extended_rolls': [2, 0, 3, 1]}),
        'timing': pd.DataFrame({'frequency': [915e6, 2.412e9], 'elapsed_s': [80.0, 60.0],
                                'elapsed_fast_s': [30.0, 25.0]}),
        'speedup': pd.DataFrame({'ratio': [0.4, 0.7, 1.0]}),
        'oracle_gap': pd.DataFrame({'linear_ratio': [1.0, 0.9, 0.95]}),
        'perturbation': pd.DataFrame({'gain_before_db': [5.0, 8.0], 'gain_after_db': [3.0, 7.5]}),
        'empty': pd.DataFrame(),
    }


def test_every_table_gets_a_figure():
    figures = ChartCreator.create_run_figures(sample_tables())
    assert set(figures) == set(sample_tables()) - {'empty'}
    assert all(isinstance(fig, go.Figure) for fig in figures.values())


def test_gain_cdf_has_one_curve_per_band():
    fig = ChartCreator.create_gain_cdf_chart(sample_tables()['gains'])
    assert [trace.name for trace in fig.data] == ['915 MHz', '2.41 GHz', '5.21 GHz']


def test_figures_from_a_real_run(tmp_path):
    params = SimulationParameters().with_overrides({'study_grid': 6})
    result = run_experiment(ExperimentSpec('fig3b-power', trials=2, output_dir=str(tmp_path)), params)
    run_experiment(ExperimentSpec('resonance-scan', output_dir=str(tmp_path)), params)

    runs = list_runs(tmp_path)
    assert [r.name for r in runs] == ['fig3b-power', 'resonance-scan']
    tables = {}
    for run in runs:
        tables.update(load_run(run))
    assert set(ChartCreator.create_run_figures(tables)) == {'power', 'resonance'}
    assert load_manifest(result.output_dir)['run']['trials'] == 2


def test_csv_round_trip(tmp_path):
    frame = pd.DataFrame({'link_id': ['link0', 'link1'], 'gain_db': [4.0, -0.5]})
    assert export_data_to_csv(frame, tmp_path / 'nested' / 'gains.csv')
    pd.testing.assert_frame_equal(load_data_from_csv(tmp_path / 'nested' / 'gains.csv'), frame)
    assert load_data_from_csv(tmp_path / 'absent.csv').empty
    assert list_runs(tmp_path / 'nowhere') == []


def test_gain_summary():
    stats = create_gain_summary(sample_tables()['gains'])
    assert stats['links'] == 4
    assert stats['median_gain_db'] == 5.25
    assert stats['max_gain_db'] == 12.0
    assert stats['improved_share'] == 0.75
    assert stats['median_elapsed_s'] == 47.5
    assert create_gain_summary(pd.DataFrame()) == {}


def test_empirical_cdf():
    cdf = empirical_cdf(pd.Series([3.0, np.nan, 1.0, 2.0]))
    assert cdf['value'].tolist() == [1.0, 2.0, 3.0]
    assert cdf['fraction'].tolist() == pytest.approx([1 / 3, 2 / 3, 1.0])
    assert empirical_cdf(pd.Series([], dtype=float)).empty


@pytest.mark.parametrize('value, text', [(4.0, '+4.0 dB'), (-0.25, '-0.2 dB'), (None, 'n/a'), (np.nan, 'n/a')])
def test_format_db(value, text):
    assert format_db(value) == text


def test_format_duration():
    assert format_duration(42.0) == '42.0 s'
    assert format_duration(150.0) == '2.5 min'
    assert format_duration(None) == 'n/a'


def test_streamlit_settings():
    settings = Config.get_streamlit_config()
    assert settings['server.port'] == Config.STREAMLIT_SERVER_PORT
    assert isinstance(settings['server.headless'], bool)
