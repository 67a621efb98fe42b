"""
Named experiments and the trial harness that runs them.

Every experiment is a function of ``(context, trial)`` returning rows keyed
by table family (``gains``, ``timing``, ...). ``run_experiment`` fans trials
out (optionally over processes), keeps failing trials from affecting the
others, and writes one CSV per family plus a ``manifest.toml`` holding every
parameter of the run. Output depends only on the experiment spec file and the seed.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import toml

import baselines
from actuation import MotorSpec
from config import Config, SimulationParameters
from control import (
    CacheEntry,
    ConfigCache,
    MeasurementPolicy,
    cache_lookup,
    cache_store,
    cache_validate,
    config_gains,
    enumerate_sweep,
    group_sweep,
    state_space_for,
    brute_force_oracle,
    true_rssi,
)
from ctrlnet import make_transport, run_distributed
from em_core import Position, ResonanceModel, resonance_curve
from errors import ExperimentError, SceneFileError
from scene import (
    PRESETS,
    Link,
    Scene,
    SurfaceConfig,
    build_default_panel,
    deploy_links,
    load_scene,
    random_deployment,
    save_scene,
)
from utils import export_data_to_csv

logger = logging.getLogger(__name__)

__version__ = '1.0.0'

BAND_FREQUENCIES = (915e6, 2.412e9, 3.7e9, 5.21e9)
ALGORITHMS = ('enumerate', 'group', 'cache-replay', 'rfocus-study')
TRANSPORTS = ('inproc', 'socket')

_SEED_SPACE = 2**31 - 1


@dataclass
class ExperimentSpec:
    name: str
    scene: str = 'setup1'
    algorithm: Optional[str] = None
    trials: Optional[int] = None
    seed: Optional[int] = None
    output_dir: str = Config.OUTPUT_DIR
    overrides: Dict[str, str] = field(default_factory=dict)
    transport: str = 'inproc'


@dataclass
class ResultRow:
    experiment: str
    trial: int
    link_id: str
    frequency: float
    baseline_dbm: float
    achieved_dbm: float
    gain_db: float
    elapsed_s: float
    rolls_extended: int
    config_digest: str
    cache_status: str = ''

    @classmethod
    def build(cls, experiment: str, trial: int, link: Link, baseline: float, achieved: float,
              elapsed: float, config: SurfaceConfig, off_length: float, cache_status: str = '') -> 'ResultRow':
        return cls(experiment, trial, link.id, link.frequency, baseline, achieved, achieved - baseline,
                   elapsed, len(config.extended(off_length)), config.digest(), cache_status)


@dataclass(frozen=True)
class RunContext:
    """Everything a trial needs; picklable so trials can run in worker processes."""

    experiment: str
    spec: ExperimentSpec
    params: SimulationParameters
    algorithm: str

    @property
    def policy(self) -> MeasurementPolicy:
        return MeasurementPolicy.from_parameters(self.params)

    @property
    def motor(self) -> MotorSpec:
        return MotorSpec.from_parameters(self.params)

    @property
    def resonance(self) -> ResonanceModel:
        return ResonanceModel.from_parameters(self.params)

    def rng(self, trial: int) -> np.random.Generator:
        return np.random.default_rng([self.params.seed, trial])


@dataclass(frozen=True)
class ExperimentDef:
    name: str
    description: str
    runner: Callable
    default_algorithm: str
    algorithms: Tuple[str, ...]
    fixed_trials: Optional[int] = None


@dataclass
class RunResult:
    experiment: str
    output_dir: Path
    tables: Dict[str, pd.DataFrame]
    errors: List[dict]
    manifest_path: Path


# ---------------------------------------------------------------------------
# Shared trial helpers

def trial_scene(ctx: RunContext, rng: np.random.Generator, frequencies: Sequence[float]) -> Scene:
    """Random deployment on the run's preset, or its scene file as-is."""
    p = ctx.params
    if ctx.spec.scene in PRESETS:
        return random_deployment(
            ctx.spec.scene, frequencies, rng,
            rx_offset=p.rx_offset,
            tx_range=(p.tx_min_distance, p.tx_max_distance),
            multipath_sigma_db=p.multipath_sigma_db,
            resonance=ctx.resonance,
        )
    scene = load_scene(ctx.spec.scene)
    if not scene.links:
        raise SceneFileError(f"Scene file {ctx.spec.scene} defines no links")
    return scene


def algorithm_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, _SEED_SPACE))


def optimize(ctx: RunContext, scene: Scene, links: Sequence[Link], algorithm: str, seed: int,
             policy: Optional[MeasurementPolicy] = None):
    """Run ``algorithm`` in-process, or across the socket transport when the run asks for it."""
    policy = policy or ctx.policy
    if ctx.spec.transport == 'socket':
        p = ctx.params
        capture = Path(ctx.spec.output_dir) / ctx.experiment / 'traffic.log' if Config.CAPTURE_TRAFFIC else None
        transport = make_transport('socket', p.transport_latency_ms, p.transport_jitter_ms, p.transport_loss,
                                   seed, capture, Config.TRANSPORT_HOST, Config.TRANSPORT_PORT)
        return run_distributed(scene, links, algorithm, transport, policy, ctx.motor, seed,
                               feedback_timeout_s=p.feedback_timeout_s, max_retries=p.max_retries,
                               retry_floor_s=p.retry_floor_s)
    run = enumerate_sweep if algorithm == 'enumerate' else group_sweep
    return run(links, scene, policy, motor=ctx.motor, seed=seed)


def evaluate(links: Sequence[Link], scene: Scene, config, policy: MeasurementPolicy) -> List[Tuple[Link, float, float]]:
    """Noiseless (baseline, achieved) RSSI per link."""
    off = scene.off_config()
    return [(l, true_rssi(l, scene, off, policy), true_rssi(l, scene, config, policy)) for l in links]


def gain_rows(ctx: RunContext, trial: int, scene: Scene, links, config, elapsed: float,
              cache_status: str = '') -> List[dict]:
    off_length = scene.resonance.off_length
    return [
        asdict(ResultRow.build(ctx.experiment, trial, link, base, achieved, elapsed, config, off_length, cache_status))
        for link, base, achieved in evaluate(links, scene, config, ctx.policy)
    ]


def rotating_frequencies(trial: int, count: int) -> List[float]:
    start = trial % len(BAND_FREQUENCIES)
    return [BAND_FREQUENCIES[(start + i) % len(BAND_FREQUENCIES)] for i in range(count)]


# ---------------------------------------------------------------------------
# Control experiments

def run_single_link_gain(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    rows = []
    rng = ctx.rng(trial)
    for f in BAND_FREQUENCIES:
        scene = trial_scene(ctx, rng, [f])
        link = scene.links[0]
        config, log = optimize(ctx, scene, [link], ctx.algorithm, algorithm_seed(rng))
        rows.extend(gain_rows(ctx, trial, scene, [link], config, log.elapsed_s))
    return {'gains': rows}


def run_concurrent_links(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    rng = ctx.rng(trial)
    scene = trial_scene(ctx, rng, rotating_frequencies(trial, 2 + trial % 3))
    config, log = optimize(ctx, scene, scene.links, ctx.algorithm, algorithm_seed(rng))
    return {'gains': gain_rows(ctx, trial, scene, scene.links, config, log.elapsed_s)}


def run_roll_length_distribution(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    rng = ctx.rng(trial)
    gains, lengths = [], []
    for f in BAND_FREQUENCIES:
        scene = trial_scene(ctx, rng, [f])
        config, log = optimize(ctx, scene, scene.links, ctx.algorithm, algorithm_seed(rng))
        gains.extend(gain_rows(ctx, trial, scene, scene.links, config, log.elapsed_s))
        band = state_space_for(f).band
        for roll in scene.rolls:
            length = config.lengths[roll.id]
            if length > scene.resonance.off_length:
                lengths.append({
                    'trial': trial, 'band': band, 'frequency': f, 'panel_id': roll.panel_id,
                    'roll_id': roll.id, 'length_cm': round(length * 100.0, 1),
                })
    return {'gains': gains, 'roll_lengths': lengths}


def run_extended_rolls_per_panel(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    rng = ctx.rng(trial)
    n_links = 1 + trial % 4
    scene = trial_scene(ctx, rng, rotating_frequencies(trial, n_links))
    config, log = optimize(ctx, scene, scene.links, ctx.algorithm, algorithm_seed(rng))
    extended = config.extended(scene.resonance.off_length)
    dynamics = [
        {
            'trial': trial, 'n_links': len(scene.links), 'panel_id': panel.id,
            'extended_rolls': sum(1 for roll in panel.rolls if roll.id in extended),
            'rolls': len(panel.rolls),
        }
        for panel in scene.panels
    ]
    return {'gains': gain_rows(ctx, trial, scene, scene.links, config, log.elapsed_s), 'panel_dynamics': dynamics}


def run_convergence_time(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    """Convergence time per band, with the same run recharged at the faster motor."""
    rng = ctx.rng(trial)
    fast = MotorSpec(MotorSpec.fast().rpm, ctx.motor.rod_radius, ctx.motor.min_step)
    rows = []
    for f in BAND_FREQUENCIES:
        scene = trial_scene(ctx, rng, [f])
        _, log = optimize(ctx, scene, scene.links, ctx.algorithm, algorithm_seed(rng))
        quick = log.rescaled(ctx.motor, fast)
        rows.append({
            'trial': trial, 'algorithm': ctx.algorithm, 'frequency': f,
            'elapsed_s': log.elapsed_s, 'motion_s': log.motion_s, 'dwell_s': log.dwell_s,
            'moves': log.move_count, 'travel_m': log.total_travel,
            'elapsed_fast_s': quick.elapsed_s, 'motion_fast_s': quick.motion_s,
        })
    return {'timing': rows}


def run_group_speedup(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    rng = ctx.rng(trial)
    f = BAND_FREQUENCIES[trial % len(BAND_FREQUENCIES)]
    scene = trial_scene(ctx, rng, [f])
    seed = algorithm_seed(rng)
    enum_config, enum_log = optimize(ctx, scene, scene.links, 'enumerate', seed)
    group_config, group_log = optimize(ctx, scene, scene.links, 'group', seed)
    link = scene.links[0]
    return {'speedup': [{
        'trial': trial, 'frequency': f,
        'enumerate_s': enum_log.elapsed_s, 'group_s': group_log.elapsed_s,
        'ratio': group_log.elapsed_s / enum_log.elapsed_s if enum_log.elapsed_s else math.nan,
        'enumerate_gain_db': config_gains([link], scene, enum_config, ctx.policy)[link.id],
        'group_gain_db': config_gains([link], scene, group_config, ctx.policy)[link.id],
    }]}


def recorded_gains(ctx: RunContext, scene: Scene, links, config, seed: int) -> Dict[str, float]:
    """Per-link gain as the controller reads it: all-off, then ``config``."""
    recorded = CacheEntry('', config.extended(scene.resonance.off_length), {})
    return cache_validate(recorded, links, scene, ctx.policy, ctx.motor, seed).gains_db


def _replay(ctx: RunContext, cache: ConfigCache, scene: Scene, links, trial: int, seed: int) -> List[dict]:
    """Look the links up; a valid hit is kept, anything else falls back to a fresh group sweep."""
    entry = cache_lookup(cache, links)
    if entry is not None:
        check = cache_validate(entry, links, scene, ctx.policy, ctx.motor, seed, ctx.params.cache_validity_fraction)
        if check.valid:
            return gain_rows(ctx, trial, scene, links, check.config, check.log.elapsed_s, 'hit-valid')
        status = 'hit-invalid'
    else:
        status = 'miss'
    config, log = optimize(ctx, scene, links, 'group', seed)
    cache_store(cache, links, config, recorded_gains(ctx, scene, links, config, seed), scene.resonance.off_length)
    return gain_rows(ctx, trial, scene, links, config, log.elapsed_s, status)


def run_cache_replay(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    """
    Optimize, cache, then replay: the same links (hit), and the receiver moved
    50 cm (miss, re-optimized). Loading a hit is charged as one parallel move.
    """
    rng = ctx.rng(trial)
    scene = trial_scene(ctx, rng, [BAND_FREQUENCIES[trial % len(BAND_FREQUENCIES)]])
    links = scene.links
    seed = algorithm_seed(rng)
    algorithm = 'group' if ctx.algorithm == 'cache-replay' else ctx.algorithm
    config, log = optimize(ctx, scene, links, algorithm, seed)
    cache = ConfigCache()
    entry = cache_store(cache, links, config, recorded_gains(ctx, scene, links, config, seed),
                        scene.resonance.off_length)
    rows = gain_rows(ctx, trial, scene, links, config, log.elapsed_s, 'stored')
    rows.extend(_replay(ctx, cache, scene, links, trial, seed))

    moved = [l.with_rx(l.rx.position.offset(dx=0.5)) for l in links]
    rows.extend(_replay(ctx, cache, scene, moved, trial, seed))
    return {'gains': rows, '_cache': [entry], '_scene': [scene]}


def run_perturbation_stability(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    """Optimize, move the transmitter, and re-measure without re-optimizing."""
    rng = ctx.rng(trial)
    f = BAND_FREQUENCIES[trial % len(BAND_FREQUENCIES)]
    scene = trial_scene(ctx, rng, [f])
    link = scene.links[0]
    config, _ = optimize(ctx, scene, [link], ctx.algorithm, algorithm_seed(rng))
    angle = rng.uniform(0.0, 2.0 * math.pi)
    d = ctx.params.perturbation_distance
    moved = link.with_tx(link.tx.position.offset(d * math.cos(angle), d * math.sin(angle), 0.0))
    before = config_gains([link], scene, config, ctx.policy)[link.id]
    after = config_gains([moved], scene, config, ctx.policy)[moved.id]
    return {'perturbation': [{
        'trial': trial, 'link_id': link.id, 'frequency': f, 'moved_m': d,
        'gain_before_db': before, 'gain_after_db': after, 'gain_loss_db': before - after,
    }]}


def run_resonance_scan(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    """Reflectivity over 0.5-6.5 GHz for the middle length of each band."""
    model = ctx.resonance
    frequencies = np.linspace(0.5e9, 6.5e9, 241)
    rows = []
    for f in BAND_FREQUENCIES:
        space = state_space_for(f)
        length = space.lengths[len(space.lengths) // 2]
        for freq, refl in zip(frequencies, resonance_curve(length, frequencies, model)):
            rows.append({'band': space.band, 'length_cm': round(length * 100.0, 1),
                         'frequency': float(freq), 'reflectivity': float(refl)})
    return {'resonance': rows}


def tiny_scene(rng: np.random.Generator, frequency: float, params: SimulationParameters,
               rolls: int = 3) -> Scene:
    """One panel of ``rolls`` rolls and one link in front of it."""
    resonance = ResonanceModel.from_parameters(params)
    panel = build_default_panel(0, Position(0.0, 0.0, 1.2), 0.0, off_length=resonance.off_length,
                                roll_count=rolls, template='tiny')
    endpoints, links = deploy_links([panel], [frequency], rng, params.rx_offset,
                                    (params.tx_min_distance, params.tx_max_distance))
    return Scene([panel], endpoints, links, int(rng.integers(0, _SEED_SPACE)), params.multipath_sigma_db, resonance)


def run_oracle_gap(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    """Noiseless greedy vs exhaustive search on 3 rolls x (3 lengths + off)."""
    rng = ctx.rng(trial)
    f = 2.412e9
    scene = tiny_scene(rng, f, ctx.params)
    space = state_space_for(f).lengths[:3]
    policy = ctx.policy.noiseless()
    link = scene.links[0]
    greedy, _ = enumerate_sweep([link], scene, policy, ctx.motor, algorithm_seed(rng), space=space)
    oracle = brute_force_oracle([link], scene, policy, space=space, limit=ctx.params.oracle_limit)
    greedy_db = config_gains([link], scene, greedy, policy)[link.id]
    oracle_db = config_gains([link], scene, oracle, policy)[link.id]
    return {'oracle_gap': [{
        'trial': trial, 'greedy_gain_db': greedy_db, 'oracle_gain_db': oracle_db,
        'linear_ratio': 10.0 ** ((greedy_db - oracle_db) / 10.0),
        'greedy_digest': greedy.digest(), 'oracle_digest': oracle.digest(),
    }]}


# ---------------------------------------------------------------------------
# Surface-design study

def _study_links(ctx: RunContext, trial: int, n_links: int = 3):
    return baselines.draw_links(ctx.rng(trial), baselines.STUDY_FREQUENCIES[:n_links], ctx.params.room)


def run_delivered_power(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    links = _study_links(ctx, trial)
    rows = []
    for kind in baselines.DESIGNS:
        design = baselines.ArrayDesign.square(kind, ctx.params.study_grid, ctx.params.study_spacing,
                                              ctx.params.wideband_efficiency)
        result = baselines.run_study_trial(design, links, ctx.params.room, trial, ctx.params.seed)
        for link_id, power in result.delivered_db.items():
            rows.append({'trial': trial, 'design': kind, 'link_id': link_id,
                         'frequency': result.link_frequencies[link_id], 'delivered_db': power})
    return {'power': rows}


def run_element_utilization(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    links = _study_links(ctx, trial)
    rows = []
    for kind in baselines.DESIGNS:
        design = baselines.ArrayDesign.square(kind, ctx.params.study_grid, ctx.params.study_spacing,
                                              ctx.params.wideband_efficiency)
        result = baselines.run_study_trial(design, links, ctx.params.room, trial, ctx.params.seed)
        rows.append({'trial': trial, 'design': kind, 'elements_on': result.elements_on,
                     'elements_total': result.elements_total,
                     'utilization': result.elements_on / result.elements_total})
    return {'utilization': rows}


def run_elements_needed(ctx: RunContext, trial: int) -> Dict[str, List[dict]]:
    """Single pass: the Monte-Carlo trials live inside ``elements_needed``."""
    p = ctx.params
    rows = []
    for k in range(1, len(baselines.STUDY_FREQUENCIES) + 1):
        targets = baselines.baseline_targets(k, p.trials, p.seed, p)
        for kind in baselines.DESIGNS:
            count = baselines.elements_needed(kind, k, p.trials, p.seed, p, targets)
            rows.append({'design': kind, 'n_frequencies': k,
                         'elements': count if count is not None else math.nan,
                         'exceeds_cap': count is None, 'grid_cap': p.grid_cap})
    return {'elements_needed': rows}


CATALOG: Dict[str, ExperimentDef] = {d.name: d for d in (
    ExperimentDef('fig3a-elements-needed', 'Elements each design needs to match a 10x10 tunable array',
                  run_elements_needed, 'rfocus-study', ('rfocus-study',), fixed_trials=1),
    ExperimentDef('fig3b-power', 'Delivered surface power of the three designs, 3 links, 20x20',
                  run_delivered_power, 'rfocus-study', ('rfocus-study',)),
    ExperimentDef('fig3c-utilization', 'Turned-on elements per design, 3 links, 20x20',
                  run_element_utilization, 'rfocus-study', ('rfocus-study',)),
    ExperimentDef('single-link-gain', 'RSSI gain for one link per band',
                  run_single_link_gain, 'group', ('enumerate', 'group')),
    ExperimentDef('concurrent-links', '2-4 concurrent links across bands on four panels',
                  run_concurrent_links, 'group', ('enumerate', 'group')),
    ExperimentDef('roll-length-distribution', 'Extended roll lengths per band',
                  run_roll_length_distribution, 'group', ('enumerate', 'group')),
    ExperimentDef('extended-rolls-per-panel', 'Extended rolls on each panel as links are added',
                  run_extended_rolls_per_panel, 'group', ('enumerate', 'group')),
    ExperimentDef('convergence-time', 'Actuation plus measurement time per band, both motors',
                  run_convergence_time, 'group', ('enumerate', 'group')),
    ExperimentDef('group-speedup', 'Group sweeping vs one-by-one enumeration on the same scene',
                  run_group_speedup, 'group', ('enumerate', 'group')),
    ExperimentDef('cache-replay', 'Store, replay and invalidate cached configurations',
                  run_cache_replay, 'cache-replay', ('cache-replay', 'enumerate', 'group')),
    ExperimentDef('perturbation-stability', 'Gain kept after moving the transmitter',
                  run_perturbation_stability, 'group', ('enumerate', 'group')),
    ExperimentDef('resonance-scan', 'Strip reflectivity over frequency, one length per band',
                  run_resonance_scan, 'rfocus-study', ('rfocus-study', 'enumerate', 'group'), fixed_trials=1),
    ExperimentDef('oracle-gap', 'Greedy vs exhaustive optimum on tiny instances',
                  run_oracle_gap, 'enumerate', ('enumerate',)),
)}


# ---------------------------------------------------------------------------
# Harness

def load_spec(path: Union[str, Path]) -> ExperimentSpec:
    """
    Read an experiment spec file.

    Layout::

        [experiment]
        name = "concurrent-links"
        scene = "setup1"          # preset name or scene file path
        algorithm = "group"
        trials = 50
        seed = 1
        output_dir = "results"
        transport = "inproc"

        [overrides]
        noise_sigma_db = 0.0
    """
    try:
        data = toml.load(path)
    except (OSError, toml.TomlDecodeError) as e:
        raise ExperimentError(f"Cannot read spec {path}: {e}") from e
    section = data.get('experiment', {})
    if 'name' not in section:
        raise ExperimentError(f"Spec {path} has no [experiment] name")
    return ExperimentSpec(
        name=str(section['name']),
        scene=str(section.get('scene', 'setup1')),
        algorithm=section.get('algorithm'),
        trials=section.get('trials'),
        seed=section.get('seed'),
        output_dir=str(section.get('output_dir', Config.OUTPUT_DIR)),
        overrides={str(k): v for k, v in data.get('overrides', {}).items()},
        transport=str(section.get('transport', 'inproc')),
    )


def resolve(spec: ExperimentSpec, params: Optional[SimulationParameters] = None) -> RunContext:
    """
    Check ``spec`` and fold it into the run parameters.

    Raises:
        ExperimentError: unknown experiment, algorithm or transport
        ParameterError: bad override
    """
    if spec.name not in CATALOG:
        raise ExperimentError(f"Unknown experiment '{spec.name}'. Known: {', '.join(sorted(CATALOG))}")
    definition = CATALOG[spec.name]
    algorithm = spec.algorithm or definition.default_algorithm
    if algorithm not in definition.algorithms:
        raise ExperimentError(f"Experiment {spec.name} does not run with algorithm '{algorithm}'")
    if spec.transport not in TRANSPORTS:
        raise ExperimentError(f"Unknown transport '{spec.transport}'")
    if spec.scene not in PRESETS and not Path(spec.scene).exists():
        raise ExperimentError(f"Scene '{spec.scene}' is neither a preset nor a file")

    params = (params or SimulationParameters.from_config()).with_overrides(spec.overrides)
    direct = {}
    if spec.trials is not None:
        direct['trials'] = spec.trials
    if spec.seed is not None:
        direct['seed'] = spec.seed
    params = params.with_overrides(direct)
    if params.trials < 1:
        raise ExperimentError(f"trials must be at least 1, got {params.trials}")
    return RunContext(spec.name, spec, params, algorithm)


def _run_trial(ctx: RunContext, trial: int) -> Tuple[int, Dict[str, list], Optional[dict]]:
    try:
        return trial, CATALOG[ctx.experiment].runner(ctx, trial), None
    except Exception as e:
        logger.error(f"{ctx.experiment} trial {trial} failed: {e}")
        return trial, {}, {'trial': trial, 'error_type': type(e).__name__, 'message': str(e)}


def run_experiment(spec: ExperimentSpec, params: Optional[SimulationParameters] = None) -> RunResult:
    """Run every trial of ``spec`` and write its CSV files and manifest."""
    ctx = resolve(spec, params)
    definition = CATALOG[spec.name]
    trials = definition.fixed_trials or ctx.params.trials
    out_dir = Path(spec.output_dir) / spec.name
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"🚀 Running {spec.name}: {trials} trial(s), seed {ctx.params.seed}, "
                f"algorithm {ctx.algorithm}, transport {spec.transport}")

    workers = max(1, ctx.params.workers)
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_trial, [ctx] * trials, range(trials)))
    else:
        outcomes = [_run_trial(ctx, t) for t in range(trials)]
    outcomes.sort(key=lambda o: o[0])

    families: Dict[str, List[dict]] = {}
    errors: List[dict] = []
    cache = ConfigCache()
    scenes: List[Tuple[int, Scene]] = []
    for trial, produced, error in outcomes:
        if error:
            errors.append(error)
        for family, rows in produced.items():
            if family == '_cache':
                for entry in rows:
                    cache.entries[entry.key] = entry
            elif family == '_scene':
                scenes.extend((trial, s) for s in rows)
            else:
                families.setdefault(family, []).extend(rows)

    files = []
    tables = {}
    for family in sorted(families):
        frame = pd.DataFrame(families[family])
        tables[family] = frame
        if export_data_to_csv(frame, out_dir / f"{family}.csv"):
            files.append(f"{family}.csv")
    if errors:
        export_data_to_csv(pd.DataFrame(errors), out_dir / 'errors.csv')
        files.append('errors.csv')
        logger.warning(f"{len(errors)} of {trials} trials failed; see errors.csv")
    if len(cache):
        cache.save(out_dir / 'cache.toml')
        files.append('cache.toml')
    for trial, scene in scenes:
        name = f"scenes/trial{trial}.toml"
        save_scene(scene, out_dir / name)
        files.append(name)

    manifest = {
        'run': {
            'experiment': spec.name,
            'description': definition.description,
            'algorithm': ctx.algorithm,
            'scene': spec.scene,
            'transport': spec.transport,
            'trials': trials,
            'seed': ctx.params.seed,
            'version': __version__,
            'files': files,
        },
        'parameters': ctx.params.as_dict(),
        'overrides': {k: str(v) for k, v in spec.overrides.items()},
    }
    manifest_path = out_dir / 'manifest.toml'
    with open(manifest_path, 'w') as f:
        toml.dump(manifest, f)
    logger.info(f"✅ {spec.name} finished: {len(files)} file(s) in {out_dir}")
    return RunResult(spec.name, out_dir, tables, errors, manifest_path)


def replay_cached(cache_path: Union[str, Path], scene_path: Union[str, Path],
                  params: Optional[SimulationParameters] = None) -> pd.DataFrame:
    """Validate the cached configuration for the links in a scene file."""
    params = params or SimulationParameters.from_config()
    scene = load_scene(scene_path)
    cache = ConfigCache.load(cache_path)
    entry = cache_lookup(cache, scene.links)
    if entry is None:
        return pd.DataFrame([{'link_id': l.id, 'cache_status': 'miss'} for l in scene.links])
    policy = MeasurementPolicy.from_parameters(params)
    check = cache_validate(entry, scene.links, scene, policy, MotorSpec.from_parameters(params),
                           params.seed, params.cache_validity_fraction)
    status = 'hit-valid' if check.valid else 'hit-invalid'
    return pd.DataFrame([
        {'link_id': l.id, 'cache_status': status, 'recorded_gain_db': entry.recorded_gain_db.get(l.id, math.nan),
         'measured_gain_db': check.gains_db[l.id], 'load_s': check.log.elapsed_s}
        for l in scene.links
    ])
