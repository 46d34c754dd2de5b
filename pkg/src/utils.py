import logging
import math
import sys
from pathlib import Path
from typing import Union

logger = logging.getLogger(__name__)

LOG_LEVELS = {
    'error': logging.ERROR,
    'warn': logging.WARNING,
    'warning': logging.WARNING,
    'info': logging.INFO,
    'debug': logging.DEBUG,
}


def setup_logging(level: str = 'warn') -> None:
    """Setup logging configuration (standard error only)"""
    resolved = LOG_LEVELS.get(str(level).strip().lower(), logging.WARNING)
    logging.basicConfig(
        level=resolved,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def quantize(value: float, digits: int = 9) -> float:
    """Round a real to the given number of significant digits"""
    return float(f"{value:.{digits}g}")


def format_real(value: float, digits: int = 9) -> str:
    """Format a real with significant digits, locale independent"""
    text = f"{value:.{digits}g}"
    return '0' if text == '-0' else text


def format_fixed(value: float, decimals: int = 9) -> str:
    """Format a real with fixed decimals, never printing a negative zero"""
    if math.isnan(value):
        return 'nan'
    text = f"{value:.{decimals}f}"
    if text.startswith('-') and float(text) == 0.0:
        text = text[1:]
    return text


def ensure_directory(path: Union[str, Path]) -> Path:
    """Create a directory (and parents) if missing"""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory
