import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping

from dotenv import load_dotenv

from errors import ParameterError

# Load environment variables
load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == 'true'


class Config:
    """Configuration class for the rollable-surface simulator."""

    # Element resonance model
    PEAK_REFLECTIVITY = float(os.getenv('PEAK_REFLECTIVITY', '0.99'))
    FRACTIONAL_BANDWIDTH = float(os.getenv('FRACTIONAL_BANDWIDTH', '0.10'))
    OFF_LENGTH = float(os.getenv('OFF_LENGTH', '0.01'))

    # Channel settings
    MULTIPATH_SIGMA_DB = float(os.getenv('MULTIPATH_SIGMA_DB', '3.0'))
    RSSI_NOISE_SIGMA_DB = float(os.getenv('RSSI_NOISE_SIGMA_DB', '0.8'))
    RSSI_OFFSET_DB = float(os.getenv('RSSI_OFFSET_DB', '0.0'))

    # Measurement policy
    SAMPLES_PER_POINT = int(os.getenv('SAMPLES_PER_POINT', '5'))
    NOISE_FLOOR_MARGIN_DB = float(os.getenv('NOISE_FLOOR_MARGIN_DB', '1.0'))
    DWELL_S = float(os.getenv('DWELL_S', '0.5'))

    # Motor settings
    MOTOR_RPM = float(os.getenv('MOTOR_RPM', '20'))
    ROD_RADIUS = float(os.getenv('ROD_RADIUS', '0.003'))
    MIN_STEP = float(os.getenv('MIN_STEP', '0.001'))

    # Configuration cache
    CACHE_VALIDITY_FRACTION = float(os.getenv('CACHE_VALIDITY_FRACTION', '0.5'))

    # Control network
    FEEDBACK_TIMEOUT_S = float(os.getenv('FEEDBACK_TIMEOUT_S', '5.0'))
    MAX_RETRIES = int(os.getenv('MAX_RETRIES', '5'))
    RETRY_FLOOR_S = float(os.getenv('RETRY_FLOOR_S', '0.05'))
    TRANSPORT_HOST = os.getenv('TRANSPORT_HOST', '127.0.0.1')
    TRANSPORT_PORT = int(os.getenv('TRANSPORT_PORT', '0'))
    TRANSPORT_LATENCY_MS = float(os.getenv('TRANSPORT_LATENCY_MS', '0'))
    TRANSPORT_JITTER_MS = float(os.getenv('TRANSPORT_JITTER_MS', '0'))
    TRANSPORT_LOSS = float(os.getenv('TRANSPORT_LOSS', '0'))
    CAPTURE_TRAFFIC = _env_bool('CAPTURE_TRAFFIC', 'false')

    # Experiment settings
    DEFAULT_SEED = int(os.getenv('DEFAULT_SEED', '0'))
    DEFAULT_TRIALS = int(os.getenv('DEFAULT_TRIALS', '200'))
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'results')
    MAX_WORKERS = int(os.getenv('MAX_WORKERS', '1'))
    GRID_CAP = int(os.getenv('GRID_CAP', '60'))
    ORACLE_LIMIT = int(os.getenv('ORACLE_LIMIT', '1000000'))

    # Deployment geometry
    RX_OFFSET = float(os.getenv('RX_OFFSET', '0.35'))
    TX_MIN_DISTANCE = float(os.getenv('TX_MIN_DISTANCE', '3.0'))
    TX_MAX_DISTANCE = float(os.getenv('TX_MAX_DISTANCE', '12.0'))
    STUDY_SPACING = float(os.getenv('STUDY_SPACING', '0.03'))
    WIDEBAND_EFFICIENCY = float(os.getenv('WIDEBAND_EFFICIENCY', '0.4'))
    ROOM_SIZE = os.getenv('ROOM_SIZE', '10,10,3')

    # Results explorer
    STREAMLIT_SERVER_PORT = int(os.getenv('STREAMLIT_SERVER_PORT', '8501'))
    STREAMLIT_SERVER_ADDRESS = os.getenv('STREAMLIT_SERVER_ADDRESS', '127.0.0.1')
    STREAMLIT_SERVER_HEADLESS = _env_bool('STREAMLIT_SERVER_HEADLESS', 'true')
    STREAMLIT_BROWSER_GATHER_USAGE_STATS = _env_bool('STREAMLIT_BROWSER_GATHER_USAGE_STATS', 'false')

    # Logging settings
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    @classmethod
    def get_streamlit_config(cls):
        """Get Streamlit configuration as a dictionary."""
        return {
            'server.port': cls.STREAMLIT_SERVER_PORT,
            'server.address': cls.STREAMLIT_SERVER_ADDRESS,
            'server.headless': cls.STREAMLIT_SERVER_HEADLESS,
            'browser.gatherUsageStats': cls.STREAMLIT_BROWSER_GATHER_USAGE_STATS,
        }


@dataclass(frozen=True)
class SimulationParameters:
    """Snapshot of every tunable that can influence a run.

    Built from ``Config`` and then adjusted per experiment. The run manifest
    is written from ``as_dict()``, so a field added here is recorded
    automatically.
    """

    peak_reflectivity: float = 0.99
    fractional_bandwidth: float = 0.10
    off_length: float = 0.01
    multipath_sigma_db: float = 3.0
    noise_sigma_db: float = 0.8
    rssi_offset_db: float = 0.0
    samples_per_point: int = 5
    noise_floor_margin_db: float = 1.0
    dwell_s: float = 0.5
    motor_rpm: float = 20.0
    rod_radius: float = 0.003
    min_step: float = 0.001
    cache_validity_fraction: float = 0.5
    feedback_timeout_s: float = 5.0
    max_retries: int = 5
    retry_floor_s: float = 0.05
    transport_latency_ms: float = 0.0
    transport_jitter_ms: float = 0.0
    transport_loss: float = 0.0
    trials: int = 200
    seed: int = 0
    workers: int = 1
    grid_cap: int = 60
    oracle_limit: int = 1000000
    rx_offset: float = 0.35
    tx_min_distance: float = 3.0
    tx_max_distance: float = 12.0
    study_spacing: float = 0.03
    room_size: str = '10,10,3'
    study_grid: int = 20
    wideband_efficiency: float = 0.4
    perturbation_distance: float = 0.20

    @classmethod
    def from_config(cls) -> 'SimulationParameters':
        """Build parameters from the environment-backed ``Config``."""
        return cls(
            peak_reflectivity=Config.PEAK_REFLECTIVITY,
            fractional_bandwidth=Config.FRACTIONAL_BANDWIDTH,
            off_length=Config.OFF_LENGTH,
            multipath_sigma_db=Config.MULTIPATH_SIGMA_DB,
            noise_sigma_db=Config.RSSI_NOISE_SIGMA_DB,
            rssi_offset_db=Config.RSSI_OFFSET_DB,
            samples_per_point=Config.SAMPLES_PER_POINT,
            noise_floor_margin_db=Config.NOISE_FLOOR_MARGIN_DB,
            dwell_s=Config.DWELL_S,
            motor_rpm=Config.MOTOR_RPM,
            rod_radius=Config.ROD_RADIUS,
            min_step=Config.MIN_STEP,
            cache_validity_fraction=Config.CACHE_VALIDITY_FRACTION,
            feedback_timeout_s=Config.FEEDBACK_TIMEOUT_S,
            max_retries=Config.MAX_RETRIES,
            retry_floor_s=Config.RETRY_FLOOR_S,
            transport_latency_ms=Config.TRANSPORT_LATENCY_MS,
            transport_jitter_ms=Config.TRANSPORT_JITTER_MS,
            transport_loss=Config.TRANSPORT_LOSS,
            trials=Config.DEFAULT_TRIALS,
            seed=Config.DEFAULT_SEED,
            workers=Config.MAX_WORKERS,
            grid_cap=Config.GRID_CAP,
            oracle_limit=Config.ORACLE_LIMIT,
            rx_offset=Config.RX_OFFSET,
            tx_min_distance=Config.TX_MIN_DISTANCE,
            tx_max_distance=Config.TX_MAX_DISTANCE,
            study_spacing=Config.STUDY_SPACING,
            wideband_efficiency=Config.WIDEBAND_EFFICIENCY,
            room_size=Config.ROOM_SIZE,
        )

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'SimulationParameters':
        """
        Return a copy with ``overrides`` applied.

        String values (as they arrive from ``--set key=value``) are coerced to
        the type of the field they replace.

        Raises:
            ParameterError: unknown key or a value that cannot be coerced
        """
        known = {f.name: type(getattr(self, f.name)) for f in fields(self)}
        changes: Dict[str, Any] = {}
        for key, value in overrides.items():
            if key not in known:
                raise ParameterError(f"Unknown parameter '{key}'")
            target = known[key]
            try:
                if target is bool and isinstance(value, str):
                    changes[key] = value.lower() in ('1', 'true', 'yes')
                else:
                    changes[key] = target(value)
            except (TypeError, ValueError) as e:
                raise ParameterError(f"Bad value for '{key}': {value!r} ({e})") from e
        return replace(self, **changes)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def room(self) -> tuple:
        return tuple(float(v) for v in self.room_size.split(','))
