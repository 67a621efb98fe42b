"""
Motor kinematics and time accounting for roll moves.

Lengths that cross module boundaries are carried as whole millimeters
internally, so a length quantized here compares equal wherever it is produced.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Tuple

from errors import DomainError

logger = logging.getLogger(__name__)


def to_mm(length: float) -> int:
    return int(round(length * 1000.0))


def from_mm(mm: int) -> float:
    return mm / 1000.0


def quantize_length(length: float, min_step: float = 0.001) -> float:
    """Round ``length`` to the nearest multiple of ``min_step`` (millimeter grid)."""
    step_mm = max(1, int(round(min_step * 1000.0)))
    return from_mm(int(round(length * 1000.0 / step_mm)) * step_mm)


@dataclass(frozen=True)
class MotorSpec:
    """Stepper driving one roll's rod at constant angular speed."""

    rpm: float = 20.0
    rod_radius: float = 0.003
    min_step: float = 0.001

    def __post_init__(self):
        if self.rpm <= 0 or self.rod_radius <= 0 or self.min_step <= 0:
            raise DomainError(f"Motor parameters must be positive: {self}")

    @property
    def linear_speed(self) -> float:
        """Strip feed rate in m/s."""
        return 2.0 * math.pi * self.rod_radius * self.rpm / 60.0

    @classmethod
    def fast(cls) -> 'MotorSpec':
        return cls(rpm=80.0)

    @classmethod
    def from_parameters(cls, params) -> 'MotorSpec':
        return cls(rpm=params.motor_rpm, rod_radius=params.rod_radius, min_step=params.min_step)


def move_time(delta_length: float, motor: MotorSpec = MotorSpec()) -> float:
    return abs(delta_length) / motor.linear_speed


def parallel_move_time(deltas: Iterable[float], motor: MotorSpec = MotorSpec()) -> float:
    """Rolls on separate motors move together, so the slowest one sets the time."""
    return max((move_time(d, motor) for d in deltas), default=0.0)


def sweep_time(start: float, stop: float, n_stops: int, dwell_per_stop: float,
               motor: MotorSpec = MotorSpec()) -> float:
    """Time to roll from ``start`` to ``stop`` measuring at ``n_stops`` points on the way."""
    if n_stops < 1:
        raise DomainError(f"A sweep needs at least one stop, got {n_stops}")
    return move_time(stop - start, motor) + n_stops * dwell_per_stop


@dataclass
class ActuationLog:
    """
    Running account of motion and measurement time for one control run.

    ``elapsed_s`` is the wall-clock total: motion plus dwell.
    """

    travel: Dict[int, float] = field(default_factory=dict)
    motion_s: float = 0.0
    dwell_s: float = 0.0
    move_count: int = 0
    events: List[str] = field(default_factory=list)

    @property
    def elapsed_s(self) -> float:
        return self.motion_s + self.dwell_s

    @property
    def total_travel(self) -> float:
        return sum(self.travel.values())

    def note(self, message: str):
        self.events.append(message)
        logger.warning(message)

    def snapshot(self) -> 'ActuationLog':
        return replace(self, travel=dict(self.travel), events=list(self.events))

    def rescaled(self, motor_from: MotorSpec, motor_to: MotorSpec) -> 'ActuationLog':
        """Same run charged at another motor speed (dwell unchanged)."""
        ratio = motor_from.linear_speed / motor_to.linear_speed
        clone = self.snapshot()
        clone.motion_s = self.motion_s * ratio
        return clone


def record_move(log: ActuationLog, roll_id: int, from_length: float, to_length: float,
                motor: MotorSpec = MotorSpec()) -> ActuationLog:
    """Charge a single roll move."""
    delta = abs(to_length - from_length)
    log.travel[roll_id] = log.travel.get(roll_id, 0.0) + delta
    log.motion_s += move_time(delta, motor)
    log.move_count += 1
    return log


def record_parallel_move(log: ActuationLog, moves: Mapping[int, Tuple[float, float]],
                         motor: MotorSpec = MotorSpec()) -> ActuationLog:
    """Charge rolls that rotate simultaneously: travel per roll, time is the max."""
    deltas = []
    for roll_id, (start, stop) in moves.items():
        delta = abs(stop - start)
        if delta == 0.0:
            continue
        log.travel[roll_id] = log.travel.get(roll_id, 0.0) + delta
        log.move_count += 1
        deltas.append(delta)
    log.motion_s += parallel_move_time(deltas, motor)
    return log


def record_dwell(log: ActuationLog, seconds: float) -> ActuationLog:
    if seconds < 0:
        raise DomainError(f"Dwell cannot be negative, got {seconds}")
    log.dwell_s += seconds
    return log
