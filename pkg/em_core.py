"""
Complex-amplitude channel math for the rollable strip surface.

Amplitudes are plain Python/numpy complex numbers, relative to a 1 m
reference. A channel is the direct Friis term (scaled by a per-link multipath
factor drawn from the scene seed) plus one re-radiated term per exposed strip.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence, Tuple, Union

import numpy as np

from errors import ConsistencyError, DomainError

if TYPE_CHECKING:
    from scene import Link, Scene, SurfaceConfig

SPEED_OF_LIGHT = 299_792_458.0
MIN_FREQUENCY = 100e6
MAX_FREQUENCY = 10e9

# Metallic reflection, applied as a sign flip so it stays exact.
REFLECTION_SIGN = -1.0


@dataclass(frozen=True)
class Position:
    """A point in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise DomainError(f"Non-finite position ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: 'Position') -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def offset(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> 'Position':
        return Position(self.x + dx, self.y + dy, self.z + dz)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> 'Position':
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)

    def to_list(self) -> list:
        return [self.x, self.y, self.z]


@dataclass(frozen=True)
class ResonanceModel:
    """
    Lorentzian power-reflectivity curve of one strip.

    Attributes:
        peak_reflectivity: power fraction reflected at resonance
        fractional_bandwidth: full width at half maximum relative to the
            resonant frequency
        off_length: at or below this exposed length a strip reflects nothing
    """

    peak_reflectivity: float = 0.99
    fractional_bandwidth: float = 0.10
    off_length: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.peak_reflectivity <= 1.0:
            raise DomainError(f"peak_reflectivity must be in (0, 1], got {self.peak_reflectivity}")
        if not 0.0 < self.fractional_bandwidth < 1.0:
            raise DomainError(f"fractional_bandwidth must be in (0, 1), got {self.fractional_bandwidth}")
        if self.off_length < 0.0:
            raise DomainError(f"off_length must be non-negative, got {self.off_length}")

    @classmethod
    def from_parameters(cls, params) -> 'ResonanceModel':
        return cls(
            peak_reflectivity=params.peak_reflectivity,
            fractional_bandwidth=params.fractional_bandwidth,
            off_length=params.off_length,
        )


@dataclass(frozen=True)
class PathContribution:
    """One term of a channel sum: ``via`` is an element id or ``"direct"``."""

    amplitude: complex
    via: str


def check_frequency(hertz: float) -> float:
    """Return ``hertz`` as float, rejecting anything outside 100 MHz - 10 GHz."""
    hertz = float(hertz)
    if not math.isfinite(hertz) or not MIN_FREQUENCY <= hertz <= MAX_FREQUENCY:
        raise DomainError(f"Frequency {hertz} Hz outside [{MIN_FREQUENCY:.0f}, {MAX_FREQUENCY:.0f}] Hz")
    return hertz


def wavelength(frequency: float) -> float:
    """Free-space wavelength in meters."""
    return SPEED_OF_LIGHT / check_frequency(frequency)


def resonant_frequency(length: float) -> float:
    """Frequency at which a strip of ``length`` meters is a half-wave dipole."""
    if not length > 0.0:
        raise DomainError(f"Strip length must be positive, got {length}")
    return SPEED_OF_LIGHT / (2.0 * length)


def reflectivity(length: float, frequency: float, model: ResonanceModel = ResonanceModel()) -> float:
    """
    Power reflectivity of one strip with ``length`` exposed at ``frequency``.

    Zero at or below ``model.off_length``; otherwise a Lorentzian in frequency
    centred on the half-wave resonance, with its half-power points at
    ``f_res * (1 +/- fractional_bandwidth / 2)``.
    """
    if length < 0.0:
        raise DomainError(f"Strip length must be non-negative, got {length}")
    if length <= model.off_length:
        return 0.0
    f_res = resonant_frequency(length)
    half_width = 0.5 * model.fractional_bandwidth * f_res
    detuning = (float(frequency) - f_res) / half_width
    return model.peak_reflectivity / (1.0 + detuning * detuning)


def reflectivity_array(lengths: np.ndarray, frequency: float, model: ResonanceModel = ResonanceModel()) -> np.ndarray:
    """Vectorised ``reflectivity`` over an array of exposed lengths."""
    lengths = np.asarray(lengths, dtype=float)
    out = np.zeros_like(lengths)
    on = lengths > model.off_length
    if np.any(on):
        f_res = SPEED_OF_LIGHT / (2.0 * lengths[on])
        detuning = (float(frequency) - f_res) / (0.5 * model.fractional_bandwidth * f_res)
        out[on] = model.peak_reflectivity / (1.0 + detuning * detuning)
    return out


def resonance_curve(length: float, frequencies: Sequence[float], model: ResonanceModel = ResonanceModel()) -> np.ndarray:
    """Reflectivity of one strip over a frequency grid."""
    return np.array([reflectivity(length, f, model) for f in frequencies])


def _as_xyz(point: Union[Position, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(point, Position):
        return point.as_array()
    return np.asarray(point, dtype=float)


def direct_amplitude(tx: Position, rx: Position, frequency: float) -> complex:
    """Friis free-space amplitude ``lambda / (4 pi d)`` with phase ``-2 pi d / lambda``."""
    lam = wavelength(frequency)
    d = float(np.linalg.norm(_as_xyz(tx) - _as_xyz(rx)))
    if d == 0.0:
        raise DomainError("Transmitter and receiver coincide")
    return (lam / (4.0 * math.pi * d)) * complex(np.exp(-2j * math.pi * d / lam))


def scattered_amplitude(tx: Position, elem: Position, rx: Position, frequency: float, refl: float) -> complex:
    """
    Amplitude re-radiated by one isotropic element with power reflectivity ``refl``.

    Magnitude is ``sqrt(refl) * (lambda/(4 pi d1)) * (lambda/(4 pi d2)) * (4 pi/lambda)``;
    phase is the two-leg path phase plus the metallic reflection.
    """
    if not 0.0 <= refl <= 1.0:
        raise DomainError(f"Reflectivity must be in [0, 1], got {refl}")
    lam = wavelength(frequency)
    e = _as_xyz(elem)
    d1 = float(np.linalg.norm(_as_xyz(tx) - e))
    d2 = float(np.linalg.norm(e - _as_xyz(rx)))
    if d1 == 0.0 or d2 == 0.0:
        raise DomainError("Element coincides with an endpoint")
    if refl == 0.0:
        return 0j
    magnitude = (
        math.sqrt(refl)
        * (lam / (4.0 * math.pi * d1))
        * (lam / (4.0 * math.pi * d2))
        * (4.0 * math.pi / lam)
    )
    return REFLECTION_SIGN * magnitude * complex(np.exp(-2j * math.pi * (d1 + d2) / lam))


def scattered_array(tx: np.ndarray, elems: np.ndarray, rx: np.ndarray, frequency: float, refl: np.ndarray) -> np.ndarray:
    """Vectorised ``scattered_amplitude`` for an ``(n, 3)`` element array."""
    lam = wavelength(frequency)
    d1 = np.linalg.norm(elems - tx, axis=1)
    d2 = np.linalg.norm(elems - rx, axis=1)
    if np.any(d1 == 0.0) or np.any(d2 == 0.0):
        raise DomainError("Element coincides with an endpoint")
    magnitude = (
        np.sqrt(refl)
        * (lam / (4.0 * math.pi * d1))
        * (lam / (4.0 * math.pi * d2))
        * (4.0 * math.pi / lam)
    )
    return REFLECTION_SIGN * magnitude * np.exp(-2j * math.pi * (d1 + d2) / lam)


def _lengths_of(config: Union['SurfaceConfig', Mapping[int, float]]) -> Mapping[int, float]:
    return getattr(config, 'lengths', config)


def channel_terms(link: 'Link', scene: 'Scene', config) -> Tuple[complex, np.ndarray]:
    """
    Return the direct term and every element's scattered term for ``link``.

    Raises:
        ConsistencyError: ``config`` does not cover exactly the scene's rolls
    """
    lengths = _lengths_of(config)
    missing = [r.id for r in scene.rolls if r.id not in lengths]
    if missing:
        raise ConsistencyError(f"Configuration missing rolls {missing}")
    extra = sorted(set(lengths) - set(scene.roll_ids))
    if extra:
        raise ConsistencyError(f"Configuration names unknown rolls {extra}")

    f = link.frequency
    direct = direct_amplitude(link.tx.position, link.rx.position, f) * scene.multipath_factor(link)

    centers, exposed = scene.element_arrays(lengths)
    refl = reflectivity_array(exposed, f, scene.resonance)
    terms = np.zeros(len(exposed), dtype=complex)
    on = refl > 0.0
    if np.any(on):
        terms[on] = scattered_array(
            link.tx.position.as_array(), centers[on], link.rx.position.as_array(), f, refl[on]
        )
    return direct, terms


def path_contributions(link: 'Link', scene: 'Scene', config) -> list:
    """``channel_terms`` as a list of ``PathContribution`` for the non-zero terms."""
    direct, terms = channel_terms(link, scene, config)
    ids = scene.element_ids
    out = [PathContribution(direct, 'direct')]
    out.extend(PathContribution(complex(a), ids[i]) for i, a in enumerate(terms) if a != 0)
    return out


def total_channel(link: 'Link', scene: 'Scene', config) -> complex:
    """Complex channel at ``link.rx`` for the surface state ``config``."""
    direct, terms = channel_terms(link, scene, config)
    if not np.any(terms):
        return direct
    return direct + complex(terms.sum())
