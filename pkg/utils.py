import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
import toml

from config import Config

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def setup_logging(level: Optional[str] = None):
    """Configure root logging from ``Config``; call once from an entry point."""
    logging.basicConfig(
        level=getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO),
        format=Config.LOG_FORMAT,
    )


def export_data_to_csv(df: pd.DataFrame, filename: PathLike) -> bool:
    """
    Export DataFrame to CSV file.

    Args:
        df: DataFrame to export
        filename: Output filename

    Returns:
        True if successful, False otherwise
    """
    try:
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(filename, index=False)
        logger.info(f"Data exported to {filename}")
        return True

    except Exception as e:
        logger.error(f"Error exporting data to {filename}: {e}")
        return False


def load_data_from_csv(filename: PathLike) -> pd.DataFrame:
    """
    Load DataFrame from CSV file.

    Args:
        filename: Input filename

    Returns:
        Loaded DataFrame (empty on failure)
    """
    try:
        df = pd.read_csv(filename)
        logger.info(f"Data loaded from {filename}")
        return df

    except Exception as e:
        logger.error(f"Error loading data from {filename}: {e}")
        return pd.DataFrame()


def list_runs(output_dir: PathLike = Config.OUTPUT_DIR) -> List[Path]:
    """Run directories (those holding a manifest) under ``output_dir``, newest name last."""
    root = Path(output_dir)
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if (p / 'manifest.toml').is_file())


def load_manifest(run_dir: PathLike) -> Dict:
    try:
        return toml.load(Path(run_dir) / 'manifest.toml')
    except Exception as e:
        logger.error(f"Error reading manifest in {run_dir}: {e}")
        return {}


def load_run(run_dir: PathLike) -> Dict[str, pd.DataFrame]:
    """Every CSV of a run directory, keyed by file stem."""
    tables = {}
    for path in sorted(Path(run_dir).glob('*.csv')):
        frame = load_data_from_csv(path)
        if not frame.empty:
            tables[path.stem] = frame
    return tables


def format_db(value: float, decimal_places: int = 1) -> str:
    """
    Format a dB quantity with an explicit sign.

    Args:
        value: Value in dB
        decimal_places: Number of decimal places

    Returns:
        Formatted string, "n/a" for missing values
    """
    try:
        if value is None or pd.isna(value):
            return "n/a"
        return f"{value:+.{decimal_places}f} dB"

    except Exception as e:
        logger.error(f"Error formatting dB value {value}: {e}")
        return "n/a"


def format_duration(seconds: float) -> str:
    if seconds is None or pd.isna(seconds):
        return "n/a"
    if seconds >= 60:
        return f"{seconds / 60:.1f} min"
    return f"{seconds:.1f} s"


def create_gain_summary(df: pd.DataFrame) -> Dict[str, float]:
    """
    Summary statistics of a gains table.

    Args:
        df: DataFrame with ``gain_db`` and ``elapsed_s`` columns

    Returns:
        Dictionary with median/max gain, share of links that gained, and median time
    """
    try:
        if df.empty or 'gain_db' not in df.columns:
            return {}

        gains = df['gain_db']
        stats = {
            'links': float(len(gains)),
            'median_gain_db': float(gains.median()),
            'max_gain_db': float(gains.max()),
            'p90_gain_db': float(np.percentile(gains, 90)),
            'improved_share': float((gains > 0).mean()),
        }
        if 'elapsed_s' in df.columns:
            stats['median_elapsed_s'] = float(df['elapsed_s'].median())

        for key in stats:
            stats[key] = round(stats[key], 2)
        return stats

    except Exception as e:
        logger.error(f"Error creating gain summary: {e}")
        return {}


def empirical_cdf(values: pd.Series) -> pd.DataFrame:
    """Sorted values with their cumulative fraction, for CDF plots."""
    clean = np.sort(pd.Series(values).dropna().to_numpy())
    if clean.size == 0:
        return pd.DataFrame({'value': [], 'fraction': []})
    return pd.DataFrame({'value': clean, 'fraction': np.arange(1, clean.size + 1) / clean.size})
