# utils/resource_path.py
from pathlib import Path
import os

CONFIG_DIR_ENV = "FEDSIM_CONFIG_DIR"


def app_base_dir() -> Path:
    """Project root: the folder holding main.py and config/."""
    return Path(__file__).resolve().parent.parent


def resource_path(*relative_parts: str) -> Path:
    """
    Build a resource path with fallbacks:
    - ENV override: FEDSIM_CONFIG_DIR (only when asking for 'config/...')
    - under the project root
    """
    parts = Path(*relative_parts)
    if len(parts.parts) >= 1 and parts.parts[0] == "config":
        env_dir = os.environ.get(CONFIG_DIR_ENV)
        if env_dir:
            p = Path(env_dir).joinpath(*parts.parts[1:])
            if p.exists():
                return p

    # returned even when missing so callers can report the expected location
    return app_base_dir().joinpath(*relative_parts)
