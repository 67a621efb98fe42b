#!/usr/bin/env python3
"""
Start the results explorer with headless server settings.
"""

import os
import sys
import subprocess
import logging

from config import Config
from utils import setup_logging

logger = logging.getLogger(__name__)


def start_explorer():
    """Launch ``app.py`` under Streamlit with settings taken from ``Config``."""
    setup_logging()
    try:
        env = os.environ.copy()
        env.update({
            'STREAMLIT_SERVER_HEADLESS': str(Config.STREAMLIT_SERVER_HEADLESS).lower(),
            'STREAMLIT_BROWSER_GATHER_USAGE_STATS': str(Config.STREAMLIT_BROWSER_GATHER_USAGE_STATS).lower(),
            'STREAMLIT_LOGGER_LEVEL': Config.LOG_LEVEL,
        })

        logger.info("🚀 Starting Rollable Surface Explorer...")
        logger.info(f"📂 Results: {Config.OUTPUT_DIR}")
        logger.info(f"🌐 Access URL: http://{Config.STREAMLIT_SERVER_ADDRESS}:{Config.STREAMLIT_SERVER_PORT}")
        logger.info("=" * 60)

        cmd = [sys.executable, '-m', 'streamlit', 'run', 'app.py']
        for key, value in Config.get_streamlit_config().items():
            cmd += [f'--{key}', str(value).lower() if isinstance(value, bool) else str(value)]

        subprocess.run(cmd, env=env, check=True)

    except subprocess.CalledProcessError as e:
        logger.error(f"❌ Failed to start explorer: {e}")
        sys.exit(1)
    except KeyboardInterrupt:
        logger.info("🛑 Explorer stopped by user")
        sys.exit(0)


if __name__ == "__main__":
    start_explorer()
