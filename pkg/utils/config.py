"""
Process-level settings for the simulator.
Reads environment variables, loading a local .env file first if present.
"""
import logging
import os
from pathlib import Path

DEFAULT_LOG_LEVEL = "WARNING"
DEFAULT_WORKERS = 4


def load_dotenv(path=".env"):
    """
    Load KEY=VALUE pairs from a .env file into os.environ.

    Existing environment variables win over the file.

    Args:
        path (str): Location of the .env file

    Returns:
        bool: True if a file was read
    """
    env_path = Path(path)
    if not env_path.exists():
        return False
    try:
        with open(env_path) as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith('#') and '=' in line:
                    key, value = line.split('=', 1)
                    os.environ.setdefault(key.strip(), value.strip())
    except OSError as e:
        logging.getLogger(__name__).warning("Could not read %s: %s", env_path, e)
        return False
    return True


def segment_cache_url():
    """SQLAlchemy URL for the segment cache store, or None for memory only."""
    return os.environ.get("SEGMENT_CACHE_URL") or None


def log_level():
    level = os.environ.get("STRETCHSIM_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()
    # logging.getLevelNamesMapping() is 3.11+; same mapping on older interpreters
    names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
    return level if level in names else DEFAULT_LOG_LEVEL


def worker_count():
    raw = os.environ.get("STRETCHSIM_WORKERS")
    try:
        workers = int(raw) if raw else DEFAULT_WORKERS
    except ValueError:
        workers = DEFAULT_WORKERS
    return max(1, workers)


def configure_logging():
    """Configure root logging once; output goes to stderr only."""
    load_dotenv()
    logging.basicConfig(
        level=log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
