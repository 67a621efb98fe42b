"""
Array-design comparison study under on/off phase-alignment control.

Three designs face the same random link geometries:

* tunable: any element can resonate on any band, but serves one link at a time
* multi-design: elements are split evenly across the bands and fixed
* wideband: every element reflects every band, on or off for all at once,
  at twice the tunable spacing and with a lower per-element efficiency

Elements are isotropic unit reflectors and the controller knows every
phase exactly. Delivered power counts only the surface paths.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import SimulationParameters
from em_core import scattered_array
from errors import DomainError

logger = logging.getLogger(__name__)

STUDY_FREQUENCIES = (915e6, 2.4e9, 5.21e9, 3.7e9)
DESIGNS = ('tunable', 'multi-design', 'wideband')
CAPABILITY = {'tunable': 'any-band', 'multi-design': 'fixed-band', 'wideband': 'all-bands'}
BASELINE_SIZE = 10
# Power fraction a wideband element reflects compared with a resonant strip.
WIDEBAND_EFFICIENCY = 0.4

# Near-zero amplitude floor so an empty on-set reports a finite dB value.
_FLOOR = 1e-30


@dataclass(frozen=True)
class ArrayDesign:
    kind: str
    rows: int
    cols: int
    spacing: float
    efficiency: float = 1.0

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise DomainError(f"Unknown array design '{self.kind}'")
        if self.rows < 1 or self.cols < 1 or self.spacing <= 0:
            raise DomainError(f"Bad array geometry {self.rows}x{self.cols} @ {self.spacing} m")
        if not 0.0 < self.efficiency <= 1.0:
            raise DomainError(f"Element efficiency must be in (0, 1], got {self.efficiency}")

    @classmethod
    def square(cls, kind: str, size: int, base_spacing: float = 0.03,
               wideband_efficiency: float = WIDEBAND_EFFICIENCY) -> 'ArrayDesign':
        """``size`` x ``size`` array; wideband elements sit twice as far apart and reflect less."""
        if kind == 'wideband':
            return cls(kind, size, size, 2.0 * base_spacing, wideband_efficiency)
        return cls(kind, size, size, base_spacing)

    @property
    def capability(self) -> str:
        return CAPABILITY[self.kind]

    @property
    def element_count(self) -> int:
        return self.rows * self.cols

    def grid_indices(self) -> Tuple[np.ndarray, np.ndarray]:
        rows, cols = np.divmod(np.arange(self.element_count), self.cols)
        return rows, cols

    def positions(self, corner: Sequence[float]) -> np.ndarray:
        """Element coordinates on the y = corner[1] wall, rows up, columns along x."""
        rows, cols = self.grid_indices()
        out = np.empty((self.element_count, 3))
        out[:, 0] = corner[0] + cols * self.spacing
        out[:, 1] = corner[1]
        out[:, 2] = corner[2] + rows * self.spacing
        return out


@dataclass(frozen=True)
class StudyLink:
    tx: np.ndarray
    rx: np.ndarray
    frequency: float
    direct_phase: float


@dataclass
class StudyResult:
    design: str
    trial: int
    delivered_db: Dict[str, float]
    elements_on: int
    elements_total: int
    seed: int = 0
    link_frequencies: Dict[str, float] = field(default_factory=dict)


def array_corner(room: Sequence[float]) -> Tuple[float, float, float]:
    """Lower-left element position: near the middle of the y = 0 wall, 1 m up."""
    return (room[0] / 2.0 - 0.3, 0.0, 1.0)


def draw_links(rng: np.random.Generator, frequencies: Sequence[float],
               room: Sequence[float] = (10.0, 10.0, 3.0)) -> List[StudyLink]:
    """Endpoints uniform in the room (at least 0.5 m off the array wall), direct phase uniform."""
    links = []
    low = np.array([0.0, 0.5, 0.0])
    high = np.asarray(room, dtype=float)
    for f in frequencies:
        tx = rng.uniform(low, high)
        rx = rng.uniform(low, high)
        links.append(StudyLink(tx, rx, float(f), float(rng.uniform(0.0, 2.0 * np.pi))))
    return links


def element_phasors(positions: np.ndarray, links: Sequence[StudyLink]) -> np.ndarray:
    """Surface path of every element to every link at full reflectivity, shape ``(n, k)``."""
    ones = np.ones(len(positions))
    return np.column_stack([
        scattered_array(link.tx, positions, link.rx, link.frequency, ones) for link in links
    ])


def design_phasors(design: ArrayDesign, links: Sequence[StudyLink], room: Sequence[float]) -> np.ndarray:
    """Element paths of ``design`` placed in ``room``, scaled by its element efficiency."""
    phasors = element_phasors(design.positions(array_corner(room)), links)
    return phasors * np.sqrt(design.efficiency)


def _projection(phasors: np.ndarray, direct_phases: np.ndarray) -> np.ndarray:
    """Component of each element path along each link's direct path."""
    return (phasors * np.exp(-1j * direct_phases)[None, :]).real


def rfocus_control(phasors: np.ndarray, direct_phases: Sequence[float], design: ArrayDesign) -> np.ndarray:
    """
    Decide which links each element serves; returns a boolean ``(n, k)`` matrix.

    An element helps a link when its path projects positively onto the
    link's direct path. Tunable elements take the link with the largest
    projection, each link's projections scaled by that link's mean element
    amplitude so a nearby low band does not claim the whole array.
    Multi-design elements only ever serve band ``(row + col) mod k``;
    wideband elements switch on when the projections summed over all links
    are positive, and then reflect every link.
    """
    phases = np.asarray(direct_phases, dtype=float)
    n, k = phasors.shape
    serve = np.zeros((n, k), dtype=bool)
    if design.kind == 'tunable':
        scores = _projection(phasors, phases) / np.maximum(np.abs(phasors).mean(axis=0), _FLOOR)[None, :]
        best = np.argmax(scores, axis=1)
        on = scores[np.arange(n), best] > 0.0
        serve[np.arange(n)[on], best[on]] = True
    elif design.kind == 'multi-design':
        rows, cols = design.grid_indices()
        band = (rows + cols) % k
        on = _projection(phasors, phases)[np.arange(n), band] > 0.0
        serve[np.arange(n)[on], band[on]] = True
    else:
        serve[_projection(phasors, phases).sum(axis=1) > 0.0, :] = True
    return serve


def delivered_power(phasors: np.ndarray, on: np.ndarray) -> float:
    """Surface-only received power in dB for one link: ``20 log10 |sum of on paths|``."""
    amplitude = abs(np.asarray(phasors)[np.asarray(on, dtype=bool)].sum())
    return float(20.0 * np.log10(max(amplitude, _FLOOR)))


def run_study_trial(design: ArrayDesign, links: Sequence[StudyLink], room: Sequence[float],
                    trial: int = 0, seed: int = 0) -> StudyResult:
    phasors = design_phasors(design, links, room)
    serve = rfocus_control(phasors, [l.direct_phase for l in links], design)
    delivered = {f"link{i}": delivered_power(phasors[:, i], serve[:, i]) for i in range(len(links))}
    return StudyResult(
        design=design.kind,
        trial=trial,
        delivered_db=delivered,
        elements_on=int(serve.any(axis=1).sum()),
        elements_total=design.element_count,
        seed=seed,
        link_frequencies={f"link{i}": l.frequency for i, l in enumerate(links)},
    )


def study_trials(kinds: Sequence[str] = DESIGNS, size: int = 20, n_links: int = 3,
                 trials: int = 200, seed: int = 0,
                 params: SimulationParameters = SimulationParameters()) -> List[StudyResult]:
    """Every design on the same ``trials`` geometries; trial ``t`` draws from ``[seed, t]``."""
    frequencies = STUDY_FREQUENCIES[:n_links]
    results = []
    for t in range(trials):
        links = draw_links(np.random.default_rng([seed, t]), frequencies, params.room)
        for kind in kinds:
            design = ArrayDesign.square(kind, size, params.study_spacing, params.wideband_efficiency)
            results.append(run_study_trial(design, links, params.room, t, seed))
    logger.info(f"Surface study: {len(kinds)} designs x {trials} trials, {size}x{size}, {n_links} links")
    return results


def power_by_size(kind: str, links: Sequence[StudyLink], cap: int, base_spacing: float,
                  room: Sequence[float], wideband_efficiency: float = WIDEBAND_EFFICIENCY) -> np.ndarray:
    """
    Delivered amplitude of every ``n x n`` corner sub-array, shape ``(cap, k)``.

    Control decisions are per element, so the on-set of a sub-array is the
    corresponding corner of the full array's; 2D prefix sums give all sizes
    at once.
    """
    design = ArrayDesign.square(kind, cap, base_spacing, wideband_efficiency)
    phasors = design_phasors(design, links, room)
    serve = rfocus_control(phasors, [l.direct_phase for l in links], design)
    grid = np.where(serve, phasors, 0).reshape(cap, cap, len(links))
    prefix = grid.cumsum(axis=0).cumsum(axis=1)
    diagonal = np.arange(cap)
    return np.abs(prefix[diagonal, diagonal, :])


def baseline_targets(n_frequencies: int, trials: int, seed: int,
                     params: SimulationParameters = SimulationParameters()) -> np.ndarray:
    """Median 10x10 tunable single-link power per frequency, in dB."""
    frequencies = STUDY_FREQUENCIES[:n_frequencies]
    design = ArrayDesign.square('tunable', BASELINE_SIZE, params.study_spacing)
    powers = np.empty((trials, n_frequencies))
    for t in range(trials):
        links = draw_links(np.random.default_rng([seed, t]), frequencies, params.room)
        for i, link in enumerate(links):
            powers[t, i] = run_study_trial(design, [link], params.room).delivered_db['link0']
    return np.median(powers, axis=0)


def elements_needed(kind: str, n_frequencies: int, trials: int = 200, seed: int = 0,
                    params: SimulationParameters = SimulationParameters(),
                    targets: Optional[np.ndarray] = None) -> Optional[int]:
    """
    Fewest elements of a square ``kind`` array whose median power meets every link's target.

    Returns None when even a ``grid_cap`` x ``grid_cap`` array falls short.
    """
    if not 1 <= n_frequencies <= len(STUDY_FREQUENCIES):
        raise DomainError(f"n_frequencies must be 1..{len(STUDY_FREQUENCIES)}, got {n_frequencies}")
    if targets is None:
        targets = baseline_targets(n_frequencies, trials, seed, params)
    cap = params.grid_cap
    frequencies = STUDY_FREQUENCIES[:n_frequencies]
    amplitudes = np.empty((trials, cap, n_frequencies))
    for t in range(trials):
        links = draw_links(np.random.default_rng([seed, t]), frequencies, params.room)
        amplitudes[t] = power_by_size(kind, links, cap, params.study_spacing, params.room,
                                      params.wideband_efficiency)
    medians = np.median(20.0 * np.log10(np.maximum(amplitudes, _FLOOR)), axis=0)
    meets = np.all(medians >= np.asarray(targets)[None, :] - 1e-9, axis=1)
    if not meets.any():
        logger.warning(f"{kind} with {n_frequencies} frequencies exceeds the {cap}x{cap} cap")
        return None
    size = int(np.argmax(meets)) + 1
    return size * size
