import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from em_core import (
    SPEED_OF_LIGHT,
    Position,
    ResonanceModel,
    direct_amplitude,
    path_contributions,
    reflectivity,
    reflectivity_array,
    resonance_curve,
    resonant_frequency,
    scattered_amplitude,
    total_channel,
    wavelength,
)
from errors import ConsistencyError, DomainError
from scene import element_positions
from conftest import small_scene

frequencies = st.floats(min_value=100e6, max_value=10e9, allow_nan=False)
coordinates = st.tuples(*[st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)] * 3)


@pytest.mark.parametrize('f, expected', [(915e6, 0.32764), (2.4e9, 0.12491), (5.21e9, 0.05754)])
def test_wavelength(f, expected):
    assert wavelength(f) == pytest.approx(expected, abs=1e-5)


@pytest.mark.parametrize('length, expected', [(0.164, 914.0e6), (0.0625, 2.398e9), (0.02877, 5.210e9)])
def test_resonant_frequency(length, expected):
    assert resonant_frequency(length) == pytest.approx(expected, rel=1e-3)


@pytest.mark.parametrize('bad', [50e6, 20e9, float('nan')])
def test_frequency_outside_envelope(bad):
    with pytest.raises(DomainError):
        wavelength(bad)


def test_non_positive_length_rejected():
    with pytest.raises(DomainError):
        resonant_frequency(0.0)


def test_reflectivity_examples():
    assert reflectivity(0.01, 2.4e9) == 0.0
    f_res = resonant_frequency(0.0625)
    assert reflectivity(0.0625, f_res) == pytest.approx(0.99)
    for sign in (1, -1):
        assert reflectivity(0.0625, f_res * (1 + sign * 0.05)) == pytest.approx(0.495)


@settings(max_examples=300)
@given(frequencies)
def test_half_wave_round_trip(f):
    assert resonant_frequency(wavelength(f) / 2.0) == pytest.approx(f, rel=1e-9)


@settings(max_examples=200)
@given(st.floats(min_value=0.012, max_value=0.16), st.floats(min_value=0.02, max_value=0.5))
def test_half_max_points(length, bandwidth):
    model = ResonanceModel(fractional_bandwidth=bandwidth)
    f_res = resonant_frequency(length)
    for sign in (1, -1):
        value = reflectivity(length, f_res * (1 + sign * bandwidth / 2.0), model)
        assert value == pytest.approx(model.peak_reflectivity / 2.0, rel=1e-9)


def test_resonance_is_unimodal():
    length = 0.0625
    grid = np.linspace(1e9, 4e9, 3001)
    curve = resonance_curve(length, grid)
    peak = int(np.argmax(curve))
    assert abs(grid[peak] - resonant_frequency(length)) < (grid[1] - grid[0])
    assert np.all(np.diff(curve[:peak + 1]) >= 0)
    assert np.all(np.diff(curve[peak:]) <= 0)


@pytest.mark.parametrize('tuned', [915e6, 2.412e9, 3.7e9, 5.21e9])
@pytest.mark.parametrize('other', [915e6, 2.412e9, 3.7e9, 5.21e9])
def test_strip_only_reflects_its_own_band(tuned, other):
    length = wavelength(tuned) / 2.0
    if tuned == other:
        assert reflectivity(length, other) == pytest.approx(0.99)
    else:
        assert reflectivity(length, other) < 0.05


def test_reflectivity_array_matches_scalar():
    lengths = np.array([0.0, 0.01, 0.03, 0.0625, 0.16])
    expected = [reflectivity(l, 2.4e9) for l in lengths]
    assert reflectivity_array(lengths, 2.4e9) == pytest.approx(expected, rel=1e-12)


def test_direct_amplitude_friis():
    lam = wavelength(2.4e9)
    a = direct_amplitude(Position(0, 0, 0), Position(lam, 0, 0), 2.4e9)
    assert abs(a) == pytest.approx(1.0 / (4.0 * math.pi))
    assert math.cos(math.atan2(a.imag, a.real)) == pytest.approx(1.0)
    far = direct_amplitude(Position(0, 0, 0), Position(2 * lam, 0, 0), 2.4e9)
    assert abs(far) == pytest.approx(abs(a) / 2.0)


def test_coincident_endpoints_rejected():
    with pytest.raises(DomainError):
        direct_amplitude(Position(1, 1, 1), Position(1, 1, 1), 2.4e9)


def test_scattered_off_element_is_zero():
    assert scattered_amplitude(Position(0, 0, 0), Position(1, 1, 0), Position(2, 0, 0), 2.4e9, 0.0) == 0


def test_scattered_midpoint_phase_is_pi():
    lam = wavelength(2.4e9)
    tx, rx = Position(0, 0, 0), Position(lam, 0, 0)
    a = scattered_amplitude(tx, Position(lam / 2.0, 0, 0), rx, 2.4e9, 1.0)
    assert a.real < 0
    assert abs(a.imag) < 1e-9 * abs(a)


@settings(max_examples=200)
@given(coordinates, coordinates, coordinates, frequencies, st.floats(min_value=0.0, max_value=1.0))
def test_scattered_reciprocity(tx, elem, rx, f, refl):
    tx, elem, rx = (Position(*p) for p in (tx, elem, rx))
    if min(tx.distance_to(elem), rx.distance_to(elem)) < 0.05:
        return
    forward = scattered_amplitude(tx, elem, rx, f, refl)
    backward = scattered_amplitude(rx, elem, tx, f, refl)
    assert abs(forward - backward) <= 1e-12 * max(abs(forward), 1e-300)


def test_off_configuration_is_direct_path():
    scene = small_scene(seed=4)
    link = scene.links[0]
    expected = direct_amplitude(link.tx.position, link.rx.position, link.frequency) * scene.multipath_factor(link)
    assert total_channel(link, scene, scene.off_config()) == expected


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_channel_reciprocity(seed):
    scene = small_scene((915e6, 2.412e9, 5.21e9), seed=seed % 1000)
    rng = np.random.default_rng(seed)
    config = scene.config_with({roll.id: float(rng.uniform(*roll.length_bounds)) for roll in scene.rolls})
    for link in scene.links:
        forward = abs(total_channel(link, scene, config))
        backward = abs(total_channel(link.swapped(), scene, config))
        assert backward == pytest.approx(forward, rel=1e-12)


def test_channel_matches_term_by_term_sum():
    scene = small_scene(panels=1, seed=2)
    link = scene.links[0]
    for lengths in ({0: 0.05, 1: 0.07, 2: 0.09}, {0: 0.06, 1: 0.01, 2: 0.08}):
        config = scene.config_with(lengths)
        scene_copy = scene.copy()
        for roll in scene_copy.rolls:
            roll.exposed_length = config.lengths[roll.id]
        expected = direct_amplitude(link.tx.position, link.rx.position, link.frequency) * scene.multipath_factor(link)
        for roll in scene_copy.rolls:
            for _, center, exposed in element_positions(roll):
                refl = reflectivity(exposed, link.frequency, scene.resonance)
                if refl > 0:
                    expected += scattered_amplitude(link.tx.position, center, link.rx.position, link.frequency, refl)
        actual = total_channel(link, scene, config)
        assert abs(actual - expected) <= 1e-12 * abs(expected)


def test_path_contributions_cover_extended_strips():
    scene = small_scene(panels=1)
    link = scene.links[0]
    config = scene.config_with({1: 0.06})
    terms = path_contributions(link, scene, config)
    assert terms[0].via == 'direct'
    assert len(terms) == 1 + 14
    assert all(t.via.startswith('r1s') for t in terms[1:])
    assert sum(t.amplitude for t in terms) == pytest.approx(total_channel(link, scene, config), rel=1e-12)


def test_config_must_cover_scene():
    scene = small_scene()
    lengths = dict(scene.off_config().lengths)
    lengths.pop(0)
    with pytest.raises(ConsistencyError):
        total_channel(scene.links[0], scene, lengths)
    lengths[0] = 0.01
    lengths[999] = 0.01
    with pytest.raises(ConsistencyError):
        total_channel(scene.links[0], scene, lengths)


def test_speed_of_light_constant():
    assert SPEED_OF_LIGHT == 299_792_458.0
