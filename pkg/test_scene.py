import numpy as np
import pytest

from em_core import Position
from errors import BoundsError, ConsistencyError, DomainError, SceneFileError
from scene import (
    PRESETS,
    Endpoint,
    Link,
    Scene,
    SurfaceConfig,
    apply_config,
    build_default_panel,
    element_positions,
    load_scene,
    preset_panels,
    preset_scene,
    save_scene,
    validate_scene,
)
from conftest import small_scene


def test_default_panel_layout():
    panel = build_default_panel(2, Position(1.0, 0.0, 1.2))
    assert len(panel.rolls) == 9
    assert [r.id for r in panel.rolls] == list(range(18, 27))
    assert sum(r.strip_count for r in panel.rolls) == 126
    for roll in panel.rolls:
        assert roll.exposed_length == roll.off_length == 0.01
        assert roll.max_length == 0.16
        extent = roll.strip_offsets[-1] - roll.strip_offsets[0]
        assert extent == pytest.approx(0.39)
        assert extent <= roll.roll_width


def test_panels_at_different_origins_do_not_overlap():
    scene = Scene([build_default_panel(0, Position(0, 0, 1.2)), build_default_panel(1, Position(0.5, 0, 1.2))])
    centers, _ = scene.element_arrays()
    assert len({tuple(np.round(c, 9)) for c in centers}) == scene.element_count == 252


def test_element_centres_follow_exposed_length():
    roll = build_default_panel(0, Position(0, 0, 1.2)).rolls[0]
    rod_z = roll.axis_origin.z
    assert all(p.z == pytest.approx(rod_z - 0.005) for _, p, _ in element_positions(roll))
    roll.exposed_length = 0.05
    at_five = [p.z for _, p, _ in element_positions(roll)]
    roll.exposed_length = 0.09
    at_nine = [p.z for _, p, _ in element_positions(roll)]
    assert np.allclose(np.array(at_five) - np.array(at_nine), 0.02)
    roll.exposed_length = 0.16
    assert all(p.z == pytest.approx(rod_z - 0.08) for _, p, _ in element_positions(roll))
    assert len(element_positions(roll)) == 14


def test_apply_config_advances_epoch():
    scene = small_scene()
    config = scene.config_with({0: 0.05, 10: 0.09})
    applied = apply_config(scene, config)
    assert scene.epoch == 1
    assert applied.lengths == config.lengths
    apply_config(scene, config)
    assert scene.epoch == 2
    assert scene.current_config().lengths == config.lengths


def test_apply_config_is_atomic():
    scene = small_scene()
    bad = dict(scene.config_with({0: 0.05}).lengths)
    bad[9] = 0.2
    with pytest.raises(BoundsError) as excinfo:
        apply_config(scene, bad)
    assert excinfo.value.roll_id == 9
    assert scene.epoch == 0
    assert all(roll.exposed_length == 0.01 for roll in scene.rolls)


def test_apply_config_requires_every_roll():
    scene = small_scene()
    partial = {0: 0.05}
    with pytest.raises(ConsistencyError):
        apply_config(scene, partial)


def test_link_validation():
    a = Endpoint('a', Position(0, 0, 0), 'transmitter')
    b = Endpoint('b', Position(1, 0, 0), 'receiver')
    with pytest.raises(DomainError):
        Link('l', a, a, 2.4e9)
    with pytest.raises(DomainError):
        Link('l', a, b, 50e6)
    link = Link('l', a, b, 2.4e9)
    assert link.swapped().tx == b


def test_multipath_factor_is_seeded_per_link():
    scene = small_scene((2.412e9, 5.21e9), seed=11)
    first, second = scene.links
    assert scene.multipath_factor(first) == scene.multipath_factor(first)
    assert scene.multipath_factor(first) != scene.multipath_factor(second)
    flat = small_scene(multipath_sigma_db=0.0)
    assert flat.multipath_factor(flat.links[0]) == 1.0


def test_digest_depends_on_lengths_only():
    a = SurfaceConfig({0: 0.05, 1: 0.01}, epoch=3)
    b = SurfaceConfig({1: 0.01, 0: 0.05}, epoch=9)
    c = SurfaceConfig({0: 0.06, 1: 0.01})
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


@pytest.mark.parametrize('name', PRESETS)
def test_presets_are_valid(name):
    scene = preset_scene(name, (915e6, 2.412e9, 3.7e9, 5.21e9), seed=1)
    assert validate_scene(scene) == []
    assert len(scene.panels) == 4
    assert scene.element_count == 4 * 9 * 14


def test_unknown_preset():
    with pytest.raises(SceneFileError):
        preset_panels('setup9')


def test_validate_reports_every_problem():
    scene = small_scene((2.412e9, 5.21e9))
    ghost = Endpoint('ghost', Position(3, 3, 1), 'receiver')
    scene.links.append(Link(scene.links[0].id, scene.links[0].tx, ghost, 2.4e9))
    scene.panels[0].rolls[1].exposed_length = 0.5
    problems = validate_scene(scene)
    assert any('duplicate link' in p for p in problems)
    assert any('unknown endpoint ghost' in p for p in problems)
    assert any('roll 1 length' in p for p in problems)


def test_scene_file_round_trip(tmp_path):
    scene = small_scene((915e6, 5.21e9), seed=7)
    apply_config(scene, scene.config_with({1: 0.12}))
    path = save_scene(scene, tmp_path / 'scene.toml')
    loaded = load_scene(path)
    assert validate_scene(loaded) == []
    assert [l.frequency for l in loaded.links] == [915e6, 5.21e9]
    assert loaded.links[0].tx.position == scene.links[0].tx.position
    assert loaded.current_config().lengths == scene.current_config().lengths
    assert loaded.multipath_factor(loaded.links[1]) == scene.multipath_factor(scene.links[1])


def test_scene_file_keeps_epoch(tmp_path):
    scene = small_scene(seed=2)
    for length in (0.05, 0.06, 0.07):
        apply_config(scene, scene.config_with({0: length}))
    assert scene.epoch == 3
    loaded = load_scene(save_scene(scene, tmp_path / 'scene.toml'))
    assert loaded.epoch == 3
    apply_config(loaded, loaded.config_with({0: 0.08}))
    assert loaded.epoch == 4

    (tmp_path / 'bad.toml').write_text('[scene]\nepoch = -1\n')
    with pytest.raises(SceneFileError):
        load_scene(tmp_path / 'bad.toml')


def test_bad_scene_file(tmp_path):
    path = tmp_path / 'broken.toml'
    path.write_text('[[links]]\nid = "l0"\ntx = "nobody"\n')
    with pytest.raises(SceneFileError):
        load_scene(path)
    with pytest.raises(SceneFileError):
        load_scene(tmp_path / 'missing.toml')
