"""
Static SVG figures for run outputs
"""

import io
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

# Non-interactive backend for headless runs
import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from utils.file_ops import file_ops

logger = logging.getLogger(__name__)

MAX_PATHS = 50
QQ_POINTS = 200

# fixed salt and no date so identical data gives identical bytes
SVG_RC = {
    'svg.hashsalt': 'ebcl',
    'svg.fonttype': 'none',
    'font.size': 10,
    'axes.spines.top': False,
    'axes.spines.right': False,
    'axes.grid': True,
    'grid.alpha': 0.2,
}


def _save_svg(fig, out_path: Union[str, Path]) -> Path:
    buffer = io.BytesIO()
    fig.savefig(buffer, format='svg', metadata={'Date': None}, bbox_inches='tight')
    plt.close(fig)
    out_path = Path(out_path)
    file_ops.atomic_write_bytes(out_path, buffer.getvalue())
    logger.info("wrote figure %s", out_path)
    return out_path


def plot_series_paths(
    times: Sequence[float],
    paths: np.ndarray,
    out_path: Union[str, Path],
    title: str = '',
    max_paths: int = MAX_PATHS
) -> Path:
    """
    Replicate paths of a functional across scaled query times

    Args:
        times: scaled times s_1 < ... < s_d
        paths: array (replicates, d)
        out_path: destination .svg
    """
    paths = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for row in paths[:max_paths]:
            ax.plot(times, row, drawstyle='steps-post', linewidth=0.8, alpha=0.6)
        ax.set_xlabel("scaled time s")
        ax.set_ylabel("J_n,s(f)")
        ax.set_title(title or f"{min(len(paths), max_paths)} of {len(paths)} replicate paths")
        return _save_svg(fig, out_path)


def plot_qq(
    sample: np.ndarray,
    reference: np.ndarray,
    out_path: Union[str, Path],
    title: str = '',
    points: int = QQ_POINTS,
    clip: Optional[float] = 0.005
) -> Path:
    """Quantiles of a simulated sample against a reference stable sample"""
    probs = np.linspace(0.0, 1.0, points + 2)[1:-1]
    if clip:
        probs = probs[(probs >= clip) & (probs <= 1.0 - clip)]
    qs = np.quantile(np.asarray(sample, dtype=np.float64), probs)
    qr = np.quantile(np.asarray(reference, dtype=np.float64), probs)
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.scatter(qr, qs, s=6)
        lo = min(qr[0], qs[0])
        hi = max(qr[-1], qs[-1])
        ax.plot([lo, hi], [lo, hi], color='gray', linewidth=0.8)
        ax.set_xlabel("reference quantile")
        ax.set_ylabel("sample quantile")
        ax.set_title(title or "QQ against stable reference")
        return _save_svg(fig, out_path)
