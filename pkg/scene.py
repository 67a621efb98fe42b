"""
Surface geometry and roll state.

A scene is a set of panels (each a frame of rolls, each roll a row of copper
strips hanging from a rod), the endpoints around them and the links between
endpoints. Roll exposed lengths are the only mutable state and change only
through ``apply_config``.
"""

import copy
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import toml

from em_core import MAX_FREQUENCY, MIN_FREQUENCY, Position, ResonanceModel, check_frequency
from errors import BoundsError, ConsistencyError, DomainError, SceneFileError

logger = logging.getLogger(__name__)

ROLLS_PER_PANEL = 9
PANEL_SIZE = 0.45
ROLL_PITCH = 0.05
ROLL_WIDTH = 0.40
STRIPS_PER_ROLL = 14
DOWN = (0.0, 0.0, -1.0)

ROLES = ('transmitter', 'receiver')
FEEDBACK_TRANSPORTS = ('in-process', 'socket')


@dataclass(frozen=True)
class StripSpec:
    width: float = 0.006
    max_length: float = 0.16
    spacing: float = 0.03
    count: int = STRIPS_PER_ROLL


@dataclass
class Roll:
    """One rollable sheet; every strip on it shares ``exposed_length``."""

    id: int
    panel_id: int
    index: int
    axis_origin: Position
    rod_direction: Tuple[float, float, float]
    strip_offsets: Tuple[float, ...]
    exposed_length: float
    length_bounds: Tuple[float, float]
    orientation: Tuple[float, float, float] = DOWN
    roll_width: float = ROLL_WIDTH

    @property
    def off_length(self) -> float:
        return self.length_bounds[0]

    @property
    def max_length(self) -> float:
        return self.length_bounds[1]

    @property
    def strip_count(self) -> int:
        return len(self.strip_offsets)

    def within_bounds(self, length: float) -> bool:
        low, high = self.length_bounds
        return low <= length <= high


@dataclass
class Panel:
    """A frame of rolls; ``frame_orientation`` is the yaw of the rod axis in radians."""

    id: int
    frame_origin: Position
    frame_orientation: float
    rolls: List[Roll]
    template: str = 'default'

    @property
    def rod_direction(self) -> Tuple[float, float, float]:
        return (math.cos(self.frame_orientation), math.sin(self.frame_orientation), 0.0)

    @property
    def normal(self) -> Tuple[float, float, float]:
        return (-math.sin(self.frame_orientation), math.cos(self.frame_orientation), 0.0)

    def center(self) -> Position:
        ux, uy, _ = self.rod_direction
        half = PANEL_SIZE / 2.0
        return self.frame_origin.offset(ux * half, uy * half, -half)

    def point_in_front(self, distance: float) -> Position:
        nx, ny, _ = self.normal
        return self.center().offset(nx * distance, ny * distance, 0.0)


@dataclass(frozen=True)
class Endpoint:
    id: str
    position: Position
    role: str
    feedback_transport: str = 'in-process'


@dataclass(frozen=True)
class Link:
    """A transmitter/receiver pair on one carrier; the unit of feedback."""

    id: str
    tx: Endpoint
    rx: Endpoint
    frequency: float
    tx_power_dbm: float = 20.0

    def __post_init__(self):
        if self.tx.id == self.rx.id:
            raise DomainError(f"Link {self.id}: transmitter and receiver are the same endpoint")
        check_frequency(self.frequency)

    def swapped(self) -> 'Link':
        return replace(self, tx=self.rx, rx=self.tx)

    def with_tx(self, position: Position) -> 'Link':
        return replace(self, tx=replace(self.tx, position=position))

    def with_rx(self, position: Position) -> 'Link':
        return replace(self, rx=replace(self.rx, position=position))


@dataclass(frozen=True)
class SurfaceConfig:
    """Exposed length of every roll, tagged with the epoch it was applied at."""

    lengths: Mapping[int, float]
    epoch: int = 0

    def extended(self, off_length: float) -> Dict[int, float]:
        return {rid: length for rid, length in self.lengths.items() if length > off_length}

    def digest(self) -> str:
        canonical = ';'.join(f"{rid}={int(round(self.lengths[rid] * 1000))}" for rid in sorted(self.lengths))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass
class Scene:
    """Panels, endpoints and links plus the environment seed."""

    panels: List[Panel]
    endpoints: List[Endpoint] = field(default_factory=list)
    links: List[Link] = field(default_factory=list)
    multipath_seed: int = 0
    multipath_sigma_db: float = 3.0
    resonance: ResonanceModel = field(default_factory=ResonanceModel)
    epoch: int = 0

    def __post_init__(self):
        self._geometry = None

    @property
    def rolls(self) -> List[Roll]:
        """All rolls, panel-major then by index."""
        return [roll for panel in self.panels for roll in panel.rolls]

    @property
    def roll_ids(self) -> List[int]:
        return [roll.id for roll in self.rolls]

    def roll(self, roll_id: int) -> Roll:
        for roll in self.rolls:
            if roll.id == roll_id:
                return roll
        raise ConsistencyError(f"Unknown roll {roll_id}")

    def panel(self, panel_id: int) -> Panel:
        for panel in self.panels:
            if panel.id == panel_id:
                return panel
        raise ConsistencyError(f"Unknown panel {panel_id}")

    def link(self, link_id: str) -> Link:
        for link in self.links:
            if link.id == link_id:
                return link
        raise ConsistencyError(f"Unknown link {link_id}")

    @property
    def element_count(self) -> int:
        return sum(roll.strip_count for roll in self.rolls)

    @property
    def element_ids(self) -> List[str]:
        return [f"r{roll.id}s{j}" for roll in self.rolls for j in range(roll.strip_count)]

    def _element_geometry(self):
        if self._geometry is None:
            bases, directions, owners = [], [], []
            for k, roll in enumerate(self.rolls):
                origin = roll.axis_origin.as_array()
                rod = np.asarray(roll.rod_direction, dtype=float)
                for offset in roll.strip_offsets:
                    bases.append(origin + offset * rod)
                    directions.append(roll.orientation)
                    owners.append(k)
            self._geometry = (
                np.array(bases, dtype=float).reshape(-1, 3),
                np.array(directions, dtype=float).reshape(-1, 3),
                np.array(owners, dtype=int),
            )
        return self._geometry

    def element_arrays(self, lengths: Optional[Mapping[int, float]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Radiating centres ``(n, 3)`` and exposed lengths ``(n,)`` of every strip."""
        bases, directions, owners = self._element_geometry()
        rolls = self.rolls
        if lengths is None:
            per_roll = np.array([roll.exposed_length for roll in rolls], dtype=float)
        else:
            per_roll = np.array([lengths[roll.id] for roll in rolls], dtype=float)
        exposed = per_roll[owners]
        return bases + (exposed / 2.0)[:, None] * directions, exposed

    def multipath_factor(self, link: Link) -> complex:
        """Complex log-normal factor on the direct path, fixed per (scene seed, link id)."""
        if self.multipath_sigma_db <= 0.0:
            return 1.0 + 0j
        link_key = int.from_bytes(hashlib.sha256(link.id.encode()).digest()[:4], 'big')
        rng = np.random.default_rng([self.multipath_seed, link_key])
        gain_db = rng.normal(0.0, self.multipath_sigma_db)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        return 10.0 ** (gain_db / 20.0) * complex(math.cos(phase), math.sin(phase))

    def current_config(self) -> SurfaceConfig:
        return SurfaceConfig({roll.id: roll.exposed_length for roll in self.rolls}, self.epoch)

    def off_config(self) -> SurfaceConfig:
        return SurfaceConfig({roll.id: roll.off_length for roll in self.rolls}, self.epoch)

    def config_with(self, lengths: Mapping[int, float]) -> SurfaceConfig:
        """All-off configuration overlaid with ``lengths``."""
        base = {roll.id: roll.off_length for roll in self.rolls}
        base.update(lengths)
        return SurfaceConfig(base, self.epoch)

    def copy(self) -> 'Scene':
        clone = copy.deepcopy(self)
        clone._geometry = self._geometry
        return clone


def build_default_panel(panel_id: int, frame_origin: Position, frame_orientation: float = 0.0,
                        strip: StripSpec = StripSpec(), off_length: float = 0.01,
                        roll_count: int = ROLLS_PER_PANEL, template: str = 'default') -> Panel:
    """
    Build a 45 cm panel of ``roll_count`` rolls stacked at 5 cm pitch.

    Every roll carries ``strip.count`` strips centred along a 40 cm rod and
    starts fully rolled (exposed length = ``off_length``).
    """
    rod = (math.cos(frame_orientation), math.sin(frame_orientation), 0.0)
    extent = (strip.count - 1) * strip.spacing
    first = (PANEL_SIZE - extent) / 2.0
    offsets = tuple(first + j * strip.spacing for j in range(strip.count))
    rolls = []
    for i in range(roll_count):
        rolls.append(Roll(
            id=panel_id * ROLLS_PER_PANEL + i,
            panel_id=panel_id,
            index=i,
            axis_origin=frame_origin.offset(dz=-(ROLL_PITCH / 2.0 + i * ROLL_PITCH)),
            rod_direction=rod,
            strip_offsets=offsets,
            exposed_length=off_length,
            length_bounds=(off_length, strip.max_length),
        ))
    return Panel(panel_id, frame_origin, frame_orientation, rolls, template)


def element_positions(roll: Roll) -> List[Tuple[str, Position, float]]:
    """Radiating centre of each strip: rod point plus half the exposed length along the strip."""
    origin = roll.axis_origin.as_array()
    rod = np.asarray(roll.rod_direction, dtype=float)
    down = np.asarray(roll.orientation, dtype=float)
    out = []
    for j, offset in enumerate(roll.strip_offsets):
        center = origin + offset * rod + (roll.exposed_length / 2.0) * down
        out.append((f"r{roll.id}s{j}", Position.from_sequence(center), roll.exposed_length))
    return out


def apply_config(scene: Scene, config: Union[SurfaceConfig, Mapping[int, float]]) -> SurfaceConfig:
    """
    Set every roll to the length in ``config`` and advance the scene epoch.

    Nothing changes unless every length is valid.

    Raises:
        ConsistencyError: ``config`` does not cover exactly the scene's rolls
        BoundsError: a length outside its roll's bounds (names the roll)
    """
    lengths = getattr(config, 'lengths', config)
    rolls = scene.rolls
    missing = [roll.id for roll in rolls if roll.id not in lengths]
    if missing:
        raise ConsistencyError(f"Configuration missing rolls {missing}")
    extra = sorted(set(lengths) - {roll.id for roll in rolls})
    if extra:
        raise ConsistencyError(f"Configuration names unknown rolls {extra}")
    for roll in rolls:
        length = float(lengths[roll.id])
        if not roll.within_bounds(length):
            raise BoundsError(roll.id, length, *roll.length_bounds)

    for roll in rolls:
        roll.exposed_length = float(lengths[roll.id])
    scene.epoch += 1
    return scene.current_config()


def validate_scene(scene: Scene) -> List[str]:
    """Check every scene invariant and return all violations (empty when valid)."""
    problems: List[str] = []

    def duplicates(values: Iterable) -> List:
        seen, dup = set(), []
        for v in values:
            if v in seen:
                dup.append(v)
            seen.add(v)
        return dup

    for kind, ids in (
        ('panel', [p.id for p in scene.panels]),
        ('roll', scene.roll_ids),
        ('endpoint', [e.id for e in scene.endpoints]),
        ('link', [l.id for l in scene.links]),
    ):
        for dup in duplicates(ids):
            problems.append(f"duplicate {kind} id {dup}")

    for panel in scene.panels:
        for roll in panel.rolls:
            if roll.panel_id != panel.id:
                problems.append(f"roll {roll.id} claims panel {roll.panel_id} but sits on panel {panel.id}")
            low, high = roll.length_bounds
            if not 0.0 <= low <= high:
                problems.append(f"roll {roll.id} has invalid bounds ({low}, {high})")
            if not roll.within_bounds(roll.exposed_length):
                problems.append(f"roll {roll.id} length {roll.exposed_length} outside bounds ({low}, {high})")
            if roll.strip_count > 1:
                extent = roll.strip_offsets[-1] - roll.strip_offsets[0]
                if extent > roll.roll_width + 1e-9:
                    problems.append(f"roll {roll.id} strips span {extent:.3f} m beyond roll width {roll.roll_width} m")

    endpoints = {e.id: e for e in scene.endpoints}
    for endpoint in scene.endpoints:
        if endpoint.role not in ROLES:
            problems.append(f"endpoint {endpoint.id} has unknown role '{endpoint.role}'")
        if endpoint.feedback_transport not in FEEDBACK_TRANSPORTS:
            problems.append(f"endpoint {endpoint.id} has unknown transport '{endpoint.feedback_transport}'")
    for link in scene.links:
        for end, label in ((link.tx, 'tx'), (link.rx, 'rx')):
            known = endpoints.get(end.id)
            if known is None:
                problems.append(f"link {link.id} {label} references unknown endpoint {end.id}")
            elif known != end:
                problems.append(f"link {link.id} {label} disagrees with endpoint {end.id}")
        if not MIN_FREQUENCY <= link.frequency <= MAX_FREQUENCY:
            problems.append(f"link {link.id} frequency {link.frequency} Hz outside envelope")
        if link.tx.position == link.rx.position:
            problems.append(f"link {link.id} endpoints coincide")
    return problems


# ---------------------------------------------------------------------------
# Deployment presets

DESK_TOP = 1.2
PANEL_GAP = 0.05


def preset_panels(name: str, off_length: float = 0.01) -> List[Panel]:
    """
    Panel placements for the named setup.

    setup1: four panels in a row; setup2: two panels on each of two
    perpendicular walls; setup3: a 2x2 stack.
    """
    step = PANEL_SIZE + PANEL_GAP
    if name == 'setup1':
        placements = [(Position(i * step, 0.0, DESK_TOP), 0.0) for i in range(4)]
    elif name == 'setup2':
        placements = [
            (Position(0.0, 0.0, DESK_TOP), 0.0),
            (Position(step, 0.0, DESK_TOP), 0.0),
            (Position(2 * step + PANEL_GAP, PANEL_GAP, DESK_TOP), math.pi / 2),
            (Position(2 * step + PANEL_GAP, PANEL_GAP + step, DESK_TOP), math.pi / 2),
        ]
    elif name == 'setup3':
        placements = [
            (Position(0.0, 0.0, DESK_TOP), 0.0),
            (Position(step, 0.0, DESK_TOP), 0.0),
            (Position(0.0, 0.0, DESK_TOP + step + 0.2), 0.0),
            (Position(step, 0.0, DESK_TOP + step + 0.2), 0.0),
        ]
    else:
        raise SceneFileError(f"Unknown preset '{name}' (expected setup1, setup2 or setup3)")
    return [build_default_panel(i, origin, yaw, off_length=off_length, template=name)
            for i, (origin, yaw) in enumerate(placements)]


PRESETS = ('setup1', 'setup2', 'setup3')


def deploy_links(panels: Sequence[Panel], frequencies: Sequence[float], rng: np.random.Generator,
                 rx_offset: float = 0.35, tx_range: Tuple[float, float] = (3.0, 12.0),
                 tx_power_dbm: float = 20.0) -> Tuple[List[Endpoint], List[Link]]:
    """
    One link per entry of ``frequencies``.

    Receiver ``i`` sits ``rx_offset`` in front of panel ``i mod len(panels)``;
    its transmitter is placed ``tx_range`` meters away, in front of the panel
    wall, at a random bearing within +/-80 degrees of the panel normal.
    """
    endpoints, links = [], []
    for i, f in enumerate(frequencies):
        panel = panels[i % len(panels)]
        rx = Endpoint(f"rx{i}", panel.point_in_front(rx_offset), 'receiver')
        distance = rng.uniform(*tx_range)
        bearing = rng.uniform(-math.radians(80), math.radians(80))
        nx, ny, _ = panel.normal
        ux, uy, _ = panel.rod_direction
        dx = distance * (math.cos(bearing) * nx + math.sin(bearing) * ux)
        dy = distance * (math.cos(bearing) * ny + math.sin(bearing) * uy)
        dz = rng.uniform(-0.5, 0.5)
        tx = Endpoint(f"tx{i}", rx.position.offset(dx, dy, dz), 'transmitter')
        endpoints.extend([tx, rx])
        links.append(Link(f"link{i}", tx, rx, float(f), tx_power_dbm))
    return endpoints, links


def random_deployment(preset: str, frequencies: Sequence[float], rng: np.random.Generator,
                      rx_offset: float = 0.35, tx_range: Tuple[float, float] = (3.0, 12.0),
                      multipath_seed: Optional[int] = None, multipath_sigma_db: float = 3.0,
                      resonance: ResonanceModel = ResonanceModel(), tx_power_dbm: float = 20.0) -> Scene:
    """Preset panels with links placed by ``deploy_links``."""
    panels = preset_panels(preset, off_length=resonance.off_length)
    endpoints, links = deploy_links(panels, frequencies, rng, rx_offset, tx_range, tx_power_dbm)
    seed = int(rng.integers(0, 2**31 - 1)) if multipath_seed is None else multipath_seed
    return Scene(panels, endpoints, links, seed, multipath_sigma_db, resonance)


def preset_scene(name: str, frequencies: Sequence[float] = (2.4e9,), seed: int = 0, params=None) -> Scene:
    """Randomized deployment on a named preset, drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    if params is None:
        return random_deployment(name, frequencies, rng)
    return random_deployment(
        name, frequencies, rng,
        rx_offset=params.rx_offset,
        tx_range=(params.tx_min_distance, params.tx_max_distance),
        multipath_sigma_db=params.multipath_sigma_db,
        resonance=ResonanceModel.from_parameters(params),
    )


# ---------------------------------------------------------------------------
# Scene files

def scene_to_dict(scene: Scene) -> Dict:
    """Plain-dict form of ``scene`` in the scene-file schema."""
    data = {
        'scene': {
            'multipath_seed': scene.multipath_seed,
            'multipath_sigma_db': scene.multipath_sigma_db,
            'peak_reflectivity': scene.resonance.peak_reflectivity,
            'fractional_bandwidth': scene.resonance.fractional_bandwidth,
            'off_length': scene.resonance.off_length,
            'epoch': scene.epoch,
        },
        'panels': [],
        'endpoints': [],
        'links': [],
    }
    for panel in scene.panels:
        data['panels'].append({
            'id': panel.id,
            'origin': panel.frame_origin.to_list(),
            'yaw': panel.frame_orientation,
            'template': panel.template,
            'rolls': len(panel.rolls),
        })
    for endpoint in scene.endpoints:
        data['endpoints'].append({
            'id': endpoint.id,
            'position': endpoint.position.to_list(),
            'role': endpoint.role,
            'transport': endpoint.feedback_transport,
        })
    for link in scene.links:
        data['links'].append({
            'id': link.id,
            'tx': link.tx.id,
            'rx': link.rx.id,
            'frequency_hz': link.frequency,
            'tx_power_dbm': link.tx_power_dbm,
        })
    extended = scene.current_config().extended(scene.resonance.off_length)
    if extended:
        data['lengths'] = {str(rid): length for rid, length in sorted(extended.items())}
    return data


def scene_from_dict(data: Mapping) -> Scene:
    """Inverse of ``scene_to_dict``."""
    try:
        header = data.get('scene', {})
        resonance = ResonanceModel(
            peak_reflectivity=float(header.get('peak_reflectivity', 0.99)),
            fractional_bandwidth=float(header.get('fractional_bandwidth', 0.10)),
            off_length=float(header.get('off_length', 0.01)),
        )
        panels = [
            build_default_panel(
                int(p['id']),
                Position.from_sequence(p['origin']),
                float(p.get('yaw', 0.0)),
                off_length=resonance.off_length,
                roll_count=int(p.get('rolls', ROLLS_PER_PANEL)),
                template=str(p.get('template', 'default')),
            )
            for p in data.get('panels', [])
        ]
        endpoints = [
            Endpoint(str(e['id']), Position.from_sequence(e['position']), str(e['role']),
                     str(e.get('transport', 'in-process')))
            for e in data.get('endpoints', [])
        ]
        by_id = {e.id: e for e in endpoints}
        links = []
        for l in data.get('links', []):
            if l['tx'] not in by_id or l['rx'] not in by_id:
                raise SceneFileError(f"Link {l['id']} references an unknown endpoint")
            links.append(Link(str(l['id']), by_id[l['tx']], by_id[l['rx']],
                              float(l['frequency_hz']), float(l.get('tx_power_dbm', 20.0))))
        scene = Scene(panels, endpoints, links,
                      int(header.get('multipath_seed', 0)),
                      float(header.get('multipath_sigma_db', 3.0)),
                      resonance)
    except (KeyError, TypeError, ValueError) as e:
        raise SceneFileError(f"Malformed scene description: {e}") from e

    lengths = {int(k): float(v) for k, v in data.get('lengths', {}).items()}
    if lengths:
        apply_config(scene, scene.config_with(lengths))
    try:
        scene.epoch = int(header.get('epoch', 0))
    except (TypeError, ValueError) as e:
        raise SceneFileError(f"Bad scene epoch {header.get('epoch')!r}") from e
    if scene.epoch < 0:
        raise SceneFileError(f"Scene epoch must be non-negative, got {scene.epoch}")
    return scene


def save_scene(scene: Scene, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        toml.dump(scene_to_dict(scene), f)
    logger.info(f"Scene written to {path}")
    return path


def load_scene(path: Union[str, Path]) -> Scene:
    path = Path(path)
    try:
        data = toml.load(path)
    except (OSError, toml.TomlDecodeError) as e:
        raise SceneFileError(f"Cannot read scene file {path}: {e}") from e
    scene = scene_from_dict(data)
    logger.info(f"Loaded scene {path}: {len(scene.panels)} panels, {len(scene.links)} links")
    return scene
