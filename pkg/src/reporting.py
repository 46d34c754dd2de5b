"""
Run artifacts: metrics.csv (one row per run), diagnostics.csv (one row per frame),
sweep tables and deterministic SVG plots.
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from src.pipeline import RunResult  # noqa: E402
from src.utils import ensure_directory  # noqa: E402

logger = logging.getLogger(__name__)

METRICS_FILE = 'metrics.csv'
DIAGNOSTICS_FILE = 'diagnostics.csv'
SWEEP_FILE = 'sweep.csv'
FLOAT_FORMAT = '%.9g'
SWITCH_COLUMNS = ['mask', 'adaptive_r', 'compensation', 'sort']

# fixed ids and no timestamp so repeated runs give byte-identical SVGs
plt.rcParams['svg.hashsalt'] = 'adugs'
_SVG_METADATA = {'Date': None, 'Creator': None}


def metrics_row(result: RunResult) -> Dict[str, object]:
    switches = result.config.ablation
    features = result.config.features
    tracking = result.tracking
    return {
        'scene': result.scene_name,
        'seed': result.seed,
        'mask': int(switches.mask_enabled),
        'adaptive_r': int(switches.adaptive_r_enabled),
        'compensation': int(switches.compensation_enabled),
        'sort': int(switches.sort_enabled),
        'n_max': features.n_max,
        'd_min': features.d_min,
        'frames': len(result.diagnostics),
        'ate_rmse': result.ate.rmse,
        'ate_mean': result.ate.mean,
        'ate_median': result.ate.median,
        'ate_max': result.ate.max,
        'ate_matched': result.ate.matched,
        'cr': result.cr.correct_rate,
        'cr_epsilon': result.cr.epsilon,
        'degenerate_frames': result.degenerate_frames,
        'contaminated_frames': result.contaminated_frames,
        'mean_iou_vs_gt': tracking.mean_iou_vs_gt,
        'id_switches': tracking.id_switches,
        'miss_frames': tracking.miss_frames,
        'occlusions': len(tracking.occlusion_survival),
        'occlusions_survived': sum(1 for *_, ok in tracking.occlusion_survival if ok),
    }


def diagnostics_frame(result: RunResult) -> pd.DataFrame:
    return pd.DataFrame([asdict(d) for d in result.diagnostics])


def _to_csv(frame: pd.DataFrame, path: Path, append: bool = False) -> None:
    header = not (append and path.exists() and path.stat().st_size > 0)
    try:
        frame.to_csv(path, mode='a' if append else 'w', header=header, index=False,
                     float_format=FLOAT_FORMAT, na_rep='nan', lineterminator='\n')
    except OSError as e:
        raise OSError(f"Cannot write {path}: {e}") from e


def _save_svg(fig, path: Path) -> Path:
    try:
        fig.savefig(path, format='svg', metadata=_SVG_METADATA)
    except OSError as e:
        raise OSError(f"Cannot write {path}: {e}") from e
    finally:
        plt.close(fig)
    return path


def plot_ate(result: RunResult, path: Union[str, Path]) -> Path:
    """Per-frame aligned position error"""
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(result.ate.per_frame_errors, '-', color='tab:blue', linewidth=1.0)
    ax.set_title(f"{result.scene_name} seed {result.seed}: ATE RMSE {result.ate.rmse:.4f} m")
    ax.set_xlabel('frame')
    ax.set_ylabel('position error [m]')
    ax.grid(True, alpha=0.3)
    return _save_svg(fig, Path(path))


def write_metrics(result: RunResult, out_dir: Union[str, Path], svg: bool = False) -> List[Path]:
    """Append the run to metrics.csv and (re)write its per-frame diagnostics"""
    out_dir = ensure_directory(out_dir)
    metrics_path = out_dir / METRICS_FILE
    diagnostics_path = out_dir / DIAGNOSTICS_FILE
    _to_csv(pd.DataFrame([metrics_row(result)]), metrics_path, append=True)
    _to_csv(diagnostics_frame(result), diagnostics_path)
    written = [metrics_path, diagnostics_path]
    if svg:
        written.append(plot_ate(result, out_dir / 'ate.svg'))
    logger.info(f"Wrote {', '.join(p.name for p in written)} to {out_dir}")
    return written


def read_metrics(in_dir: Union[str, Path]) -> pd.DataFrame:
    path = Path(in_dir) / METRICS_FILE
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise OSError(f"Cannot read {path}: {e}") from e


def summarize(metrics: pd.DataFrame) -> pd.DataFrame:
    """Median/spread of ATE and mean CR per scene and switch combination"""
    keys = ['scene'] + [c for c in SWITCH_COLUMNS if c in metrics.columns]
    grouped = metrics.groupby(keys, sort=True)
    summary = grouped.agg(
        runs=('seed', 'count'),
        ate_rmse_median=('ate_rmse', 'median'),
        ate_rmse_min=('ate_rmse', 'min'),
        ate_rmse_max=('ate_rmse', 'max'),
        cr_mean=('cr', 'mean'),
        degenerate_frames=('degenerate_frames', 'sum'),
    )
    return summary.reset_index()


def plot_summary(summary: pd.DataFrame, path: Union[str, Path]) -> Path:
    labels = [
        f"{row.scene}\n" + ''.join(k[0].upper() if getattr(row, k) else '-' for k in SWITCH_COLUMNS)
        for row in summary.itertuples()
    ]
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 0.9), 4))
    ax.bar(range(len(labels)), summary['ate_rmse_median'], color='tab:blue')
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel('median ATE RMSE [m]')
    ax.set_title('Switches: M=mask A=adaptive R C=compensation S=SORT')
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def write_report(in_dir: Union[str, Path], svg: bool = False) -> pd.DataFrame:
    in_dir = Path(in_dir)
    summary = summarize(read_metrics(in_dir))
    _to_csv(summary, in_dir / 'summary.csv')
    if svg:
        plot_summary(summary, in_dir / 'summary.svg')
    return summary


def write_sweep(rows: Sequence[Dict[str, object]], out_dir: Union[str, Path],
                svg: bool = False) -> pd.DataFrame:
    """Feature-budget grid: one row per (n_max, d_min)"""
    out_dir = ensure_directory(out_dir)
    table = pd.DataFrame(list(rows)).sort_values(['n_max', 'd_min'], kind='stable').reset_index(drop=True)
    _to_csv(table, out_dir / SWEEP_FILE)
    if svg:
        plot_sweep(table, out_dir / 'sweep.svg')
    return table


def plot_sweep(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    grid = table.pivot_table(index='n_max', columns='d_min', values='ate_rmse', aggfunc='median')
    fig, ax = plt.subplots(figsize=(6, 4.5))
    image = ax.imshow(grid.values, origin='lower', aspect='auto', cmap='viridis')
    ax.set_xticks(range(len(grid.columns)))
    ax.set_xticklabels([f"{v:g}" for v in grid.columns])
    ax.set_yticks(range(len(grid.index)))
    ax.set_yticklabels([f"{v:g}" for v in grid.index])
    ax.set_xlabel('D_min [px]')
    ax.set_ylabel('N_max')
    fig.colorbar(image, ax=ax, label='ATE RMSE [m]')
    return _save_svg(fig, Path(path))
