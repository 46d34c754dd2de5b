"""TUM trajectory files: `timestamp tx ty tz qx qy qz qw`, planar poses embedded about z."""

import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional, Union

from src.core import PoseSE2
from src.exceptions import ParseError
from src.odometry import Trajectory
from src.utils import format_fixed

logger = logging.getLogger(__name__)

TUM_FIELDS = 8
TUM_HEADER = '# timestamp tx ty tz qx qy qz qw'


def format_tum_line(timestamp: float, pose: PoseSE2) -> str:
    half = pose.theta / 2.0
    values = (timestamp, pose.x, pose.y, 0.0, 0.0, 0.0, math.sin(half), math.cos(half))
    return ' '.join(format_fixed(v) for v in values)


def format_trajectory(traj: Trajectory) -> List[str]:
    return [TUM_HEADER] + [format_tum_line(t, pose) for t, pose in traj]


def parse_trajectory(lines: Iterable[str], path: Optional[str] = None) -> Trajectory:
    traj = Trajectory()
    for line_number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        fields = stripped.split()
        if len(fields) != TUM_FIELDS:
            raise ParseError(f"Expected {TUM_FIELDS} fields, got {len(fields)}", line_number, path)
        try:
            t, x, y, _, _, _, qz, qw = (float(v) for v in fields)
            traj.append(t, PoseSE2(x, y, 2.0 * math.atan2(qz, qw)))
        except ValueError as e:
            raise ParseError(str(e), line_number, path) from e
    return traj


def as_written(traj: Trajectory) -> Trajectory:
    """The trajectory exactly as it reads back from its TUM file"""
    return parse_trajectory(format_trajectory(traj))


def write_trajectory(traj: Trajectory, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.write_text('\n'.join(format_trajectory(traj)) + '\n', encoding='utf-8')
    except OSError as e:
        raise OSError(f"Cannot write trajectory {path}: {e}") from e
    logger.debug(f"Wrote {len(traj)} poses to {path}")
    return path


def read_trajectory(path: Union[str, Path]) -> Trajectory:
    path = Path(path)
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ParseError(f"Cannot read trajectory: {e}", 0, str(path)) from e
    return parse_trajectory(lines, str(path))
