"""
Surface optimization driven by RSSI feedback.

The algorithms here never look at the channel directly: they push roll
lengths through a ``SurfaceDriver`` and read back median RSSI per link.
``LocalSurface`` evaluates the channel in-process; ``ctrlnet`` provides a
driver whose commands and reports cross a message transport.
"""

import hashlib
import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import toml

from actuation import (ActuationLog, MotorSpec, from_mm, move_time, parallel_move_time, quantize_length, record_dwell,
                       record_parallel_move, to_mm)
from em_core import SPEED_OF_LIGHT, check_frequency, total_channel
from errors import BoundsError, DomainError, FeedbackTimeout, SceneFileError, SearchSpaceTooLarge
from scene import Link, Scene, SurfaceConfig, apply_config

logger = logging.getLogger(__name__)

# Seed stream for group sampling, kept apart from the per-link noise streams.
GROUP_STREAM = 7919


# ---------------------------------------------------------------------------
# Length state spaces

@dataclass(frozen=True)
class Band:
    tag: str
    low_hz: float
    high_hz: float
    min_mm: int
    max_mm: int
    step_mm: int

    @property
    def center_hz(self) -> float:
        return (self.low_hz + self.high_hz) / 2.0

    def contains(self, hertz: float) -> bool:
        return self.low_hz <= hertz <= self.high_hz


BAND_TABLE = (
    Band('900MHz', 850e6, 950e6, 100, 160, 10),
    Band('2.4GHz', 2.400e9, 2.500e9, 50, 90, 10),
    Band('3.7GHz', 3.300e9, 4.200e9, 20, 50, 5),
    Band('5GHz', 5.150e9, 5.850e9, 15, 40, 5),
)


@dataclass(frozen=True)
class LengthStateSpace:
    band: str
    lengths: Tuple[float, ...]

    def __iter__(self):
        return iter(self.lengths)

    def __len__(self):
        return len(self.lengths)


def state_space_for(frequency: float, max_length: float = 0.16, off_length: float = 0.01) -> LengthStateSpace:
    """
    Candidate roll lengths for a link on ``frequency``.

    Tabulated bands return their fixed grid. Any other frequency gets a grid
    over +/-25% of the half-wave length, stepped like the band whose centre is
    nearest and started at the first whole millimeter inside the range.
    Lengths outside (off_length, max_length] are dropped.
    """
    f = check_frequency(frequency)
    off_mm, max_mm = to_mm(off_length), to_mm(max_length)
    for band in BAND_TABLE:
        if band.contains(f):
            grid = range(band.min_mm, band.max_mm + 1, band.step_mm)
            return LengthStateSpace(band.tag, tuple(from_mm(mm) for mm in grid if off_mm < mm <= max_mm))

    nearest = min(BAND_TABLE, key=lambda b: abs(b.center_hz - f))
    half_wave_mm = SPEED_OF_LIGHT / (2.0 * f) * 1000.0
    start = math.ceil(0.75 * half_wave_mm - 1e-9)
    stop = 1.25 * half_wave_mm
    grid = []
    mm = start
    while mm <= stop + 1e-9:
        if off_mm < mm <= max_mm:
            grid.append(from_mm(mm))
        mm += nearest.step_mm
    return LengthStateSpace(f"synthetic-{f / 1e9:.3f}GHz", tuple(grid))


def sweep_space(links: Sequence[Link], max_length: float = 0.16, off_length: float = 0.01) -> Tuple[float, ...]:
    """Union of every link's state space in ascending order."""
    mm = set()
    for link in links:
        mm.update(to_mm(l) for l in state_space_for(link.frequency, max_length, off_length))
    return tuple(from_mm(v) for v in sorted(mm))


# ---------------------------------------------------------------------------
# Measurement

@dataclass(frozen=True)
class MeasurementPolicy:
    samples_per_point: int = 5
    noise_sigma_db: float = 0.8
    noise_floor_margin_db: float = 1.0
    dwell_s: float = 0.5
    rssi_offset_db: float = 0.0

    def __post_init__(self):
        if self.samples_per_point < 1 or self.samples_per_point % 2 == 0:
            raise DomainError(f"samples_per_point must be odd and >= 1, got {self.samples_per_point}")
        if self.noise_sigma_db < 0 or self.noise_floor_margin_db < 0 or self.dwell_s < 0:
            raise DomainError(f"Negative measurement setting in {self}")

    @classmethod
    def from_parameters(cls, params) -> 'MeasurementPolicy':
        return cls(
            samples_per_point=params.samples_per_point,
            noise_sigma_db=params.noise_sigma_db,
            noise_floor_margin_db=params.noise_floor_margin_db,
            dwell_s=params.dwell_s,
            rssi_offset_db=params.rssi_offset_db,
        )

    def noiseless(self) -> 'MeasurementPolicy':
        return MeasurementPolicy(self.samples_per_point, 0.0, self.noise_floor_margin_db,
                                 self.dwell_s, self.rssi_offset_db)


@dataclass(frozen=True)
class RssiReport:
    link_id: str
    value_dbm: float
    epoch: int
    seq: int


def true_rssi(link: Link, scene: Scene, config, policy: MeasurementPolicy = MeasurementPolicy()) -> float:
    """Noiseless, unquantized RSSI in dBm."""
    magnitude = abs(total_channel(link, scene, config))
    return 20.0 * math.log10(max(magnitude, 1e-30)) + link.tx_power_dbm + policy.rssi_offset_db


def draw_samples(true_dbm: float, policy: MeasurementPolicy, rng: np.random.Generator) -> List[float]:
    """``samples_per_point`` noisy readings, each quantized to 1 dB."""
    k = policy.samples_per_point
    noise = rng.normal(0.0, policy.noise_sigma_db, k) if policy.noise_sigma_db > 0 else np.zeros(k)
    return [float(v) for v in np.round(true_dbm + noise)]


def measure_rssi(link: Link, scene: Scene, config, policy: MeasurementPolicy,
                 rng: np.random.Generator) -> float:
    """Median of ``samples_per_point`` quantized noisy RSSI readings."""
    return float(np.median(draw_samples(true_rssi(link, scene, config, policy), policy, rng)))


def link_rng(seed: int, link_index: int) -> np.random.Generator:
    """Noise stream for one link; every driver uses the same streams."""
    return np.random.default_rng([seed, link_index])


# ---------------------------------------------------------------------------
# Surface drivers

class SurfaceDriver(ABC):
    """
    What the algorithms drive: set roll lengths, then read RSSI per link.

    Every ``apply`` that changes something starts a new epoch; ``measure``
    only trusts reports tagged with the current epoch.
    """

    def __init__(self, scene: Scene, links: Sequence[Link], policy: MeasurementPolicy,
                 motor: MotorSpec = MotorSpec()):
        self.links = list(links)
        self.policy = policy
        self.motor = motor
        self.log = ActuationLog()
        self.epoch = 0
        self.bounds = {roll.id: roll.length_bounds for roll in scene.rolls}
        self.off = {roll.id: roll.off_length for roll in scene.rolls}
        self.lengths = {roll.id: quantize_length(roll.exposed_length, motor.min_step) for roll in scene.rolls}
        self.measurements = 0

    def apply(self, targets: Mapping[int, float]) -> int:
        """Move the named rolls (in parallel) and return the resulting epoch."""
        moves = {}
        for roll_id, target in targets.items():
            low, high = self.bounds[roll_id]
            length = quantize_length(target, self.motor.min_step)
            if not low - 1e-12 <= length <= high + 1e-12:
                raise BoundsError(roll_id, length, low, high)
            if to_mm(length) != to_mm(self.lengths[roll_id]):
                moves[roll_id] = (self.lengths[roll_id], length)
        if not moves:
            return self.epoch
        self.epoch += 1
        self._actuate(moves, self.epoch)
        for roll_id, (_, stop) in moves.items():
            self.lengths[roll_id] = stop
        record_parallel_move(self.log, moves, self.motor)
        logger.debug(f"epoch {self.epoch}: moved {sorted(moves)}")
        return self.epoch

    def apply_off(self, roll_ids: Optional[Iterable[int]] = None) -> int:
        ids = self.off if roll_ids is None else roll_ids
        return self.apply({rid: self.off[rid] for rid in ids})

    def measure(self) -> Dict[str, float]:
        """Median RSSI per link under the current epoch."""
        epoch = self.epoch
        reports = self._collect(epoch)
        fresh: Dict[str, List[float]] = {link.id: [] for link in self.links}
        stale = 0
        for report in reports:
            if report.epoch != epoch or report.link_id not in fresh:
                stale += 1
                continue
            fresh[report.link_id].append(report.value_dbm)
        if stale:
            logger.warning(f"Discarded {stale} report(s) not matching epoch {epoch}")
        record_dwell(self.log, self.policy.dwell_s)
        self.measurements += 1
        values = {}
        for link in self.links:
            samples = fresh[link.id]
            if not samples:
                raise FeedbackTimeout(link.rx.id, f"no reports for {link.id} at epoch {epoch}")
            values[link.id] = float(np.median(samples))
        logger.debug(f"epoch {epoch}: {values}")
        return values

    def config(self) -> SurfaceConfig:
        return SurfaceConfig(dict(self.lengths), self.epoch)

    def close(self):
        pass

    @abstractmethod
    def _actuate(self, moves: Mapping[int, Tuple[float, float]], epoch: int):
        """Carry out ``moves`` (roll id -> (from, to)) before returning."""

    @abstractmethod
    def _collect(self, epoch: int) -> List[RssiReport]:
        """Gather the reports endpoints produced for ``epoch``."""


class LocalSurface(SurfaceDriver):
    """In-process driver over a private copy of the scene."""

    def __init__(self, scene: Scene, links: Sequence[Link], policy: MeasurementPolicy,
                 motor: MotorSpec = MotorSpec(), seed: int = 0):
        super().__init__(scene, links, policy, motor)
        self.scene = scene.copy()
        self._rngs = {link.id: link_rng(seed, i) for i, link in enumerate(self.links)}
        self._seq = 0

    def _actuate(self, moves, epoch):
        lengths = dict(self.lengths)
        lengths.update({rid: stop for rid, (_, stop) in moves.items()})
        apply_config(self.scene, lengths)

    def _collect(self, epoch):
        reports = []
        config = self.scene.current_config()
        for link in self.links:
            value = true_rssi(link, self.scene, config, self.policy)
            for sample in draw_samples(value, self.policy, self._rngs[link.id]):
                self._seq += 1
                reports.append(RssiReport(link.id, sample, epoch, self._seq))
        return reports


# ---------------------------------------------------------------------------
# Selection

@dataclass(frozen=True)
class Candidate:
    """A roll length and the RSSI change it produced on each link (links order)."""

    length: float
    deltas: Tuple[float, ...]

    @property
    def total(self) -> float:
        return sum(self.deltas)


def selection_rule(candidates: Sequence[Candidate], margin: float = 1.0) -> Optional[Candidate]:
    """
    Pick the state to keep, or None to leave the roll off.

    A candidate that costs any link more than ``margin`` is out; of the rest,
    only those gaining more than ``margin`` on some link qualify. Highest
    total wins, shortest length breaks ties.
    """
    survivors = [
        c for c in candidates
        if all(d >= -margin for d in c.deltas) and any(d > margin for d in c.deltas)
    ]
    if not survivors:
        return None
    return max(survivors, key=lambda c: (c.total, -c.length))


def _stops(driver: SurfaceDriver, roll_id: int, space: Sequence[float]) -> List[float]:
    low, high = driver.bounds[roll_id]
    return [length for length in space if low <= length <= high]


def _sweep_roll(driver: SurfaceDriver, roll_id: int, space: Sequence[float],
                base: Mapping[str, float], floors: Mapping[str, float],
                carry: Optional[Mapping[int, float]] = None) -> List[Candidate]:
    """
    Step one roll through ``space`` and collect a candidate per stop.

    ``carry`` holds moves of other rolls that ride along with the first stop.
    """
    pending = dict(carry or {})
    candidates = []
    for length in _stops(driver, roll_id, space):
        driver.apply({**pending, roll_id: length})
        pending = {}
        values = driver.measure()
        if any(values[l.id] < floors[l.id] for l in driver.links):
            continue
        candidates.append(Candidate(length, tuple(values[l.id] - base[l.id] for l in driver.links)))
    if pending:
        driver.apply(pending)
    return candidates


def _space_and_driver(links, scene, policy, motor, seed, driver, space):
    if not links:
        raise DomainError("At least one link is required")
    if driver is None:
        driver = LocalSurface(scene, links, policy, motor, seed)
    if space is None:
        max_length = max(roll.max_length for roll in scene.rolls)
        space = sweep_space(links, max_length, scene.resonance.off_length)
    return driver, tuple(space)


def enumerate_sweep(links: Sequence[Link], scene: Scene, policy: MeasurementPolicy,
                    motor: MotorSpec = MotorSpec(), seed: int = 0,
                    driver: Optional[SurfaceDriver] = None,
                    space: Optional[Sequence[float]] = None) -> Tuple[SurfaceConfig, ActuationLog]:
    """
    Sweep every roll one at a time, panel-major, and keep the best state.

    Starts from all rolls off. A stop is also refused if it pushes any link
    below its all-off reading, so small per-roll losses cannot accumulate.
    """
    driver, space = _space_and_driver(links, scene, policy, motor, seed, driver, space)
    margin = policy.noise_floor_margin_db
    driver.apply_off()
    floors = driver.measure()
    for roll in scene.rolls:
        base = driver.measure()
        choice = selection_rule(_sweep_roll(driver, roll.id, space, base, floors), margin)
        driver.apply({roll.id: choice.length if choice else roll.off_length})
        if choice:
            logger.debug(f"roll {roll.id} set to {choice.length:.3f} m (+{choice.total:.0f} dB)")
    logger.info(f"enumerate_sweep done: {len(driver.config().extended(scene.resonance.off_length))} rolls extended, "
                f"{driver.log.elapsed_s:.1f} s")
    return driver.config(), driver.log


class RollStatus(Enum):
    UNTESTED = 'untested'
    TESTED_OFF = 'tested-off'
    TESTED_SET = 'tested-set'


@dataclass
class TestLedger:
    status: Dict[int, RollStatus]
    lengths: Dict[int, float] = field(default_factory=dict)

    __test__ = False

    @classmethod
    def for_scene(cls, scene: Scene) -> 'TestLedger':
        return cls({rid: RollStatus.UNTESTED for rid in scene.roll_ids})

    def untested(self, roll_ids: Optional[Iterable[int]] = None) -> List[int]:
        ids = self.status if roll_ids is None else roll_ids
        return [rid for rid in ids if self.status[rid] is RollStatus.UNTESTED]

    def mark_off(self, roll_id: int):
        self.status[roll_id] = RollStatus.TESTED_OFF

    def mark_set(self, roll_id: int, length: float):
        self.status[roll_id] = RollStatus.TESTED_SET
        self.lengths[roll_id] = length


def _sample_group(scene: Scene, ledger: TestLedger, rng: np.random.Generator, sampling: str) -> List[int]:
    group = []
    for panel in sorted(scene.panels, key=lambda p: p.id):
        pool = ledger.untested(roll.id for roll in panel.rolls)
        if not pool:
            continue
        group.append(pool[int(rng.integers(len(pool)))] if sampling == 'random' else pool[0])
    return group


def _pick_single(scene: Scene, ledger: TestLedger, rng: np.random.Generator, sampling: str) -> int:
    """One untested roll from the panel with the most left, so later groups stay full."""
    pools = [ledger.untested(roll.id for roll in panel.rolls) for panel in sorted(scene.panels, key=lambda p: p.id)]
    pool = max(pools, key=len)
    return pool[int(rng.integers(len(pool)))] if sampling == 'random' else pool[0]


def _one_by_one_cost(driver: SurfaceDriver, roll_id: int, space: Sequence[float], choice: float) -> float:
    """Time ``enumerate_sweep`` spends on a roll that ends at ``choice``."""
    stops = _stops(driver, roll_id, space)
    dwell = driver.policy.dwell_s
    if not stops:
        return dwell
    top = stops[-1]
    return ((len(stops) + 1) * dwell + move_time(top - driver.off[roll_id], driver.motor)
            + move_time(top - choice, driver.motor))


def _round_risk(driver: SurfaceDriver, group: Sequence[int], space: Sequence[float]) -> float:
    """Most a group round can cost beyond what its decided rolls earn: the joint sweep and retraction."""
    lengths = [l for l in space if any(driver.bounds[rid][0] <= l <= driver.bounds[rid][1] for rid in group)]
    reach = 0.0
    for rid in group:
        stops = _stops(driver, rid, space)
        if stops:
            reach = max(reach, move_time(stops[-1] - driver.off[rid], driver.motor))
    return len(lengths) * driver.policy.dwell_s + 2.0 * reach


def _pending_time(driver: SurfaceDriver, pending: Mapping[int, float]) -> float:
    return parallel_move_time((driver.lengths[rid] - target for rid, target in pending.items()), driver.motor)


def group_sweep(links: Sequence[Link], scene: Scene, policy: MeasurementPolicy,
                motor: MotorSpec = MotorSpec(), seed: int = 0,
                driver: Optional[SurfaceDriver] = None,
                space: Optional[Sequence[float]] = None,
                sampling: str = 'random') -> Tuple[SurfaceConfig, ActuationLog]:
    """
    Group sweeping: test one untested roll per panel at once.

    Each round draws a group and sweeps the whole group together. No gain
    on any link marks the group tested and off. Otherwise the members are
    swept one by one in ascending panel order until one is accepted;
    members checked before it are marked off and the rest go back to the
    pool. A group of one is swept and decided directly.

    The sweep never takes longer than ``enumerate_sweep`` would for the
    rolls it has decided. It keeps a time credit: what one-by-one sweeping
    would have spent on the decided rolls, less the time actually used. A
    group round only starts while the credit covers its worst case, and
    until then single rolls are swept. A roll going back to off rides along
    with the next move, and the baseline is re-read only after a roll is
    kept, since rejected rolls return the surface to where it was read.

    Args:
        sampling: 'random' draws members with the seeded generator;
            'ordered' takes the lowest untested roll index per panel
    """
    if sampling not in ('random', 'ordered'):
        raise DomainError(f"Unknown sampling '{sampling}'")
    driver, space = _space_and_driver(links, scene, policy, motor, seed, driver, space)
    margin = policy.noise_floor_margin_db
    rng = np.random.default_rng([seed, GROUP_STREAM])
    ledger = TestLedger.for_scene(scene)
    off = driver.off

    driver.apply_off()
    floors = driver.measure()
    base: Optional[Dict[str, float]] = dict(floors)
    pending: Dict[int, float] = {}
    start = driver.log.elapsed_s
    earned = 0.0
    rounds = 0

    def credit() -> float:
        return earned - (driver.log.elapsed_s - start) - _pending_time(driver, pending)

    while ledger.untested():
        rounds += 1
        group = _sample_group(scene, ledger, rng, sampling)
        reread = 0.0 if base is not None else policy.dwell_s
        if len(group) > 1 and credit() < _round_risk(driver, group, space) + reread:
            group = [_pick_single(scene, ledger, rng, sampling)]

        if base is None:
            if pending:
                driver.apply(pending)
                pending = {}
            base = driver.measure()

        if len(group) == 1:
            rid = group[0]
            choice = None
            if _stops(driver, rid, space):
                choice = selection_rule(_sweep_roll(driver, rid, space, base, floors, pending), margin)
                pending = {}
            earned += _one_by_one_cost(driver, rid, space, choice.length if choice else off[rid])
            if choice:
                driver.apply({rid: choice.length})
                ledger.mark_set(rid, choice.length)
                base = None
            else:
                pending[rid] = off[rid]
                ledger.mark_off(rid)
            continue

        gained = False
        for length in space:
            targets = {rid: length for rid in group if driver.bounds[rid][0] <= length <= driver.bounds[rid][1]}
            if not targets:
                continue
            driver.apply({**pending, **targets})
            pending = {}
            values = driver.measure()
            if any(values[l.id] - base[l.id] > margin for l in driver.links):
                gained = True
                break
        pending.update({rid: off[rid] for rid in group})

        if not gained:
            for rid in group:
                ledger.mark_off(rid)
                earned += _one_by_one_cost(driver, rid, space, off[rid])
            continue

        found = None
        fallback: Optional[Tuple[int, Candidate]] = None
        for position, rid in enumerate(group):
            carry = {r: target for r, target in pending.items() if r != rid}
            candidates = _sweep_roll(driver, rid, space, base, floors, carry)
            pending = {}
            choice = selection_rule(candidates, margin)
            earned += _one_by_one_cost(driver, rid, space, choice.length if choice else off[rid])
            if choice:
                driver.apply({rid: choice.length})
                ledger.mark_set(rid, choice.length)
                for earlier in group[:position]:
                    ledger.mark_off(earlier)
                base = None
                found = rid
                break
            pending = {rid: off[rid]}
            safe = [c for c in candidates if all(d >= -margin for d in c.deltas) and c.total > 0]
            best = max(safe, key=lambda c: (c.total, -c.length), default=None)
            if best and (fallback is None or best.total > fallback[1].total):
                fallback = (rid, best)

        if found is not None:
            continue
        for rid in group:
            ledger.mark_off(rid)
        if fallback is None:
            driver.log.note(f"Group {group} gained together but no single roll did; left all off")
            continue
        rid, best = fallback
        if credit() < move_time(best.length - off[rid], driver.motor):
            driver.log.note(f"Group {group} gained together but no single roll did; roll {rid} left off, "
                            f"keeping it would cost more than one-by-one sweeping")
            continue
        driver.apply({**pending, rid: best.length})
        pending = {}
        ledger.mark_set(rid, best.length)
        base = None
        driver.log.note(f"Group {group} gained together but no single roll did; kept roll {rid} "
                        f"at {best.length:.3f} m")

    if pending:
        driver.apply(pending)
    logger.info(f"group_sweep done in {rounds} rounds: "
                f"{len(driver.config().extended(scene.resonance.off_length))} rolls extended, "
                f"{driver.log.elapsed_s:.1f} s")
    return driver.config(), driver.log


# ---------------------------------------------------------------------------
# Configuration cache

def link_set_key(links: Sequence[Link]) -> str:
    """
    Hash of endpoint positions (1 cm grid) and frequencies, independent of link order.

    Coordinates round to the nearest centimetre, so two positions share a key
    only inside the same cell: 4 mm apart can miss when a cell edge lies between.
    """
    def cm(position):
        return ','.join(str(int(round(v * 100.0))) for v in position.to_list())

    parts = sorted(f"{cm(l.tx.position)}|{cm(l.rx.position)}|{int(round(l.frequency))}" for l in links)
    return hashlib.sha256(';'.join(parts).encode()).hexdigest()


@dataclass(frozen=True)
class CacheEntry:
    key: str
    lengths: Mapping[int, float]
    recorded_gain_db: Mapping[str, float]


@dataclass
class ConfigCache:
    """Link set -> extended roll lengths that helped it. Safe to delete at any time."""

    entries: Dict[str, CacheEntry] = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = {'entries': [
            {
                'key': entry.key,
                'lengths': {str(rid): length for rid, length in sorted(entry.lengths.items())},
                'gains': dict(entry.recorded_gain_db),
            }
            for entry in self.entries.values()
        ]}
        with open(path, 'w') as f:
            toml.dump(data, f)
        logger.info(f"Cache with {len(self)} entries written to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'ConfigCache':
        path = Path(path)
        if not path.exists():
            logger.info(f"No cache at {path}, starting empty")
            return cls()
        try:
            data = toml.load(path)
            entries = {}
            for raw in data.get('entries', []):
                entry = CacheEntry(
                    str(raw['key']),
                    {int(k): float(v) for k, v in raw.get('lengths', {}).items()},
                    {str(k): float(v) for k, v in raw.get('gains', {}).items()},
                )
                entries[entry.key] = entry
        except (OSError, KeyError, TypeError, ValueError, toml.TomlDecodeError) as e:
            raise SceneFileError(f"Cannot read cache file {path}: {e}") from e
        return cls(entries)


def cache_store(cache: ConfigCache, links: Sequence[Link], config, gains: Mapping[str, float],
                off_length: float = 0.01) -> CacheEntry:
    """Record the extended rolls of ``config`` for this link set."""
    lengths = getattr(config, 'lengths', config)
    entry = CacheEntry(
        link_set_key(links),
        {rid: length for rid, length in lengths.items() if length > off_length},
        {link_id: float(g) for link_id, g in gains.items()},
    )
    cache.entries[entry.key] = entry
    return entry


def cache_lookup(cache: ConfigCache, links: Sequence[Link]) -> Optional[CacheEntry]:
    entry = cache.entries.get(link_set_key(links))
    logger.info(f"Cache {'hit' if entry else 'miss'} for {len(links)} link(s)")
    return entry


@dataclass
class CacheCheck:
    valid: bool
    gains_db: Dict[str, float]
    config: SurfaceConfig
    log: ActuationLog

    def __bool__(self):
        return self.valid


def cache_validate(entry: CacheEntry, links: Sequence[Link], scene: Scene, policy: MeasurementPolicy,
                   motor: MotorSpec = MotorSpec(), seed: int = 0, fraction: float = 0.5,
                   driver: Optional[SurfaceDriver] = None) -> CacheCheck:
    """
    Re-measure a cached configuration against the all-off baseline.

    Valid when every link that the entry recorded as gaining keeps at least
    ``fraction`` of that gain, and no other link loses more than the margin.
    Loading the entry is charged as one parallel move from all-off.
    """
    if driver is None:
        driver = LocalSurface(scene, links, policy, motor, seed)
    margin = policy.noise_floor_margin_db
    driver.apply_off()
    baseline = driver.measure()
    driver.apply({rid: length for rid, length in entry.lengths.items() if rid in driver.bounds})
    achieved = driver.measure()
    gains = {l.id: achieved[l.id] - baseline[l.id] for l in driver.links}
    valid = True
    for link in driver.links:
        recorded = entry.recorded_gain_db.get(link.id, 0.0)
        if recorded > margin:
            valid = valid and gains[link.id] >= fraction * recorded
        else:
            valid = valid and gains[link.id] >= -margin
    if not valid:
        logger.warning(f"Cached configuration no longer holds: gains {gains} vs recorded {dict(entry.recorded_gain_db)}")
    return CacheCheck(valid, gains, driver.config(), driver.log)


# ---------------------------------------------------------------------------
# Exhaustive reference

def config_gains(links: Sequence[Link], scene: Scene, config, policy: MeasurementPolicy = MeasurementPolicy()) -> Dict[str, float]:
    """Noiseless per-link gain in dB of ``config`` over all rolls off."""
    off = scene.off_config()
    return {l.id: true_rssi(l, scene, config, policy) - true_rssi(l, scene, off, policy) for l in links}


def brute_force_oracle(links: Sequence[Link], scene: Scene, policy: MeasurementPolicy,
                       rolls: Optional[Sequence[int]] = None, space: Optional[Sequence[float]] = None,
                       limit: int = 1_000_000) -> SurfaceConfig:
    """
    Best joint configuration by exhaustive noiseless search.

    Maximizes the summed dB gain over all links among configurations where
    no link loses more than the margin. Rolls outside ``rolls`` stay off.

    Raises:
        SearchSpaceTooLarge: (len(space) + 1) ** len(rolls) exceeds ``limit``
    """
    if not links:
        raise DomainError("At least one link is required")
    roll_ids = list(scene.roll_ids if rolls is None else rolls)
    if space is None:
        space = sweep_space(links, max(r.max_length for r in scene.rolls), scene.resonance.off_length)
    size = (len(space) + 1) ** len(roll_ids)
    if size > limit:
        raise SearchSpaceTooLarge(size, limit)

    off_config = scene.off_config()
    margin = policy.noise_floor_margin_db
    direct = np.array([total_channel(l, scene, off_config) for l in links])
    # Scattered terms add linearly, so each (roll, state) contributes a fixed vector.
    states = []
    contributions = []
    for rid in roll_ids:
        roll = scene.roll(rid)
        options = [roll.off_length] + [s for s in space if roll.off_length < s <= roll.max_length]
        states.append(options)
        per_state = []
        for length in options:
            if length == roll.off_length:
                per_state.append(np.zeros(len(links), dtype=complex))
                continue
            config = scene.config_with({rid: length})
            per_state.append(np.array([total_channel(l, scene, config) for l in links]) - direct)
        contributions.append(per_state)

    base_db = 20.0 * np.log10(np.abs(direct))
    best_total, best_choice = -math.inf, tuple(0 for _ in roll_ids)
    for choice in itertools.product(*(range(len(s)) for s in states)):
        h = direct.copy()
        for k, index in enumerate(choice):
            h = h + contributions[k][index]
        gains = 20.0 * np.log10(np.maximum(np.abs(h), 1e-30)) - base_db
        if np.any(gains < -margin):
            continue
        total = float(gains.sum())
        if total > best_total + 1e-12:
            best_total, best_choice = total, choice
    lengths = {rid: states[k][best_choice[k]] for k, rid in enumerate(roll_ids)}
    logger.debug(f"oracle searched {size} configurations, best total gain {best_total:.2f} dB")
    return scene.config_with(lengths)
