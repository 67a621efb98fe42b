import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from baselines import (
    BASELINE_SIZE,
    DESIGNS,
    STUDY_FREQUENCIES,
    ArrayDesign,
    delivered_power,
    draw_links,
    elements_needed,
    power_by_size,
    rfocus_control,
    run_study_trial,
    study_trials,
)
from config import SimulationParameters
from errors import DomainError

phases = st.floats(min_value=-np.pi, max_value=np.pi, allow_nan=False)


def unit(angle):
    return np.exp(1j * angle)


def test_wideband_uses_double_spacing():
    assert ArrayDesign.square('wideband', 20).spacing == pytest.approx(0.06)
    assert ArrayDesign.square('tunable', 20).spacing == pytest.approx(0.03)
    with pytest.raises(DomainError):
        ArrayDesign.square('holographic', 4)


def test_tunable_element_follows_direct_phase():
    design = ArrayDesign('tunable', 1, 2, 0.03)
    phasors = np.array([[unit(0.3)], [unit(0.3 + np.pi)]])
    serve = rfocus_control(phasors, [0.3], design)
    assert serve[:, 0].tolist() == [True, False]


def test_tunable_element_serves_best_aligned_link():
    design = ArrayDesign('tunable', 1, 1, 0.03)
    phasors = np.array([[unit(1.0), unit(0.1)]])
    serve = rfocus_control(phasors, [0.0, 0.0], design)
    assert serve.tolist() == [[False, True]]


def test_strong_link_does_not_claim_every_element():
    design = ArrayDesign('tunable', 1, 2, 0.03)
    # link 0 arrives ten times stronger, but link 1 is better aligned on element 0
    phasors = np.array([[10 * unit(0.5), unit(0.1)], [10 * unit(0.0), unit(2.0)]])
    serve = rfocus_control(phasors, [0.0, 0.0], design)
    assert serve.tolist() == [[False, True], [True, False]]


def test_wideband_efficiency_scales_power_not_decisions():
    params = SimulationParameters()
    links = draw_links(np.random.default_rng(7), STUDY_FREQUENCIES[:3], params.room)
    full = run_study_trial(ArrayDesign.square('wideband', 8, wideband_efficiency=1.0), links, params.room)
    quarter = run_study_trial(ArrayDesign.square('wideband', 8, wideband_efficiency=0.25), links, params.room)
    assert quarter.elements_on == full.elements_on
    for link_id, value in full.delivered_db.items():
        assert quarter.delivered_db[link_id] == pytest.approx(value + 20 * np.log10(0.5), abs=1e-9)
    with pytest.raises(DomainError):
        ArrayDesign('wideband', 2, 2, 0.06, efficiency=0.0)


def test_multi_design_serves_only_its_band():
    design = ArrayDesign('multi-design', 3, 3, 0.03)
    phasors = np.ones((9, 3), dtype=complex)
    serve = rfocus_control(phasors, [0.0, 0.0, 0.0], design)
    rows, cols = design.grid_indices()
    for i in range(9):
        assert serve[i].tolist() == [band == (rows[i] + cols[i]) % 3 for band in range(3)]


def test_wideband_is_all_or_nothing():
    rng = np.random.default_rng(4)
    design = ArrayDesign('wideband', 4, 4, 0.06)
    phasors = unit(rng.uniform(0, 2 * np.pi, (16, 3)))
    serve = rfocus_control(phasors, [0.0, 1.0, 2.0], design)
    assert all(row.all() or not row.any() for row in serve)


def test_delivered_power_of_empty_set_is_finite():
    value = delivered_power(np.array([1 + 0j, 1j]), np.array([False, False]))
    assert np.isfinite(value) and value < -500


@settings(max_examples=200)
@given(st.lists(phases, min_size=1, max_size=30), phases, st.floats(min_value=0.01, max_value=10.0))
def test_aligned_element_never_reduces_power(angles, offset, magnitude):
    phasors = unit(np.array(angles))
    total = phasors.sum()
    # within a quarter cycle of the running sum
    extra = magnitude * unit(np.angle(total) + offset / 2.0)
    before = delivered_power(phasors, np.ones(len(phasors), dtype=bool))
    after = delivered_power(np.append(phasors, extra), np.ones(len(phasors) + 1, dtype=bool))
    assert after >= before - 1e-9


def test_trials_share_geometry_across_designs():
    results = study_trials(size=6, n_links=2, trials=3, seed=5)
    assert len(results) == 3 * len(DESIGNS)
    for t in range(3):
        freqs = {r.design: r.link_frequencies for r in results if r.trial == t}
        assert len({tuple(f.items()) for f in freqs.values()}) == 1
    again = study_trials(size=6, n_links=2, trials=3, seed=5)
    assert [r.delivered_db for r in again] == [r.delivered_db for r in results]


def test_tunable_uses_more_elements_than_multi_design():
    results = study_trials(('tunable', 'multi-design'), size=20, n_links=3, trials=20, seed=1)
    on = {(r.design, r.trial): r.elements_on for r in results}
    wins = sum(on[('tunable', t)] > on[('multi-design', t)] for t in range(20))
    assert wins >= 18


def test_single_link_switches_on_about_half():
    params = SimulationParameters()
    design = ArrayDesign.square('tunable', 20, params.study_spacing)
    fractions = []
    for t in range(40):
        links = draw_links(np.random.default_rng([2, t]), (5.21e9,), params.room)
        result = run_study_trial(design, links, params.room, t)
        fractions.append(result.elements_on / result.elements_total)
    assert np.mean(fractions) == pytest.approx(0.5, abs=0.08)


def test_prefix_sums_match_direct_evaluation():
    params = SimulationParameters()
    links = draw_links(np.random.default_rng(3), STUDY_FREQUENCIES[:2], params.room)
    amplitudes = power_by_size('tunable', links, 8, params.study_spacing, params.room)
    small = run_study_trial(ArrayDesign.square('tunable', 8, params.study_spacing), links, params.room)
    for i in range(2):
        assert 20 * np.log10(amplitudes[7, i]) == pytest.approx(small.delivered_db[f"link{i}"], abs=1e-9)


def test_baseline_needs_baseline_size():
    params = SimulationParameters().with_overrides({'grid_cap': 12})
    assert elements_needed('tunable', 1, trials=20, seed=0, params=params) == BASELINE_SIZE ** 2


def test_elements_needed_validates_frequency_count():
    with pytest.raises(DomainError):
        elements_needed('tunable', 5, trials=1)


@pytest.mark.slow
def test_tunable_power_advantage():
    results = study_trials(size=20, n_links=3, trials=200, seed=0)
    medians = {
        kind: np.median([v for r in results if r.design == kind for v in r.delivered_db.values()])
        for kind in DESIGNS
    }
    assert 4.0 <= medians['tunable'] - medians['multi-design'] <= 8.0
    assert 6.0 <= medians['tunable'] - medians['wideband'] <= 12.0


@pytest.mark.slow
@pytest.mark.parametrize('k', [2, 3, 4])
def test_elements_needed_ordering(k):
    params = SimulationParameters()
    needed = {kind: elements_needed(kind, k, trials=40, seed=0, params=params) for kind in DESIGNS}
    rank = {kind: float('inf') if n is None else n for kind, n in needed.items()}
    assert rank['wideband'] >= rank['multi-design'] >= rank['tunable']
