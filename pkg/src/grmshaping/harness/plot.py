"""Dependency-free SVG plots of run logs and greedy-policy grids."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..errors import ConfigError
from .runner import RunLog

WINDOW = 50
WIDTH, HEIGHT, PAD = 640, 360, 50
ARROW_GLYPHS = ("↑", "↓", "←", "→")


def moving_average(x: np.ndarray, window: int = WINDOW) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` points average what exists so far."""
    x = np.asarray(x, dtype=float)
    c = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def curve_stats(logs: Sequence[RunLog], column: str, window: int = WINDOW):
    """Mean and std (None for a single log) across runs of the smoothed curves."""
    if not logs:
        raise ConfigError("no run logs to plot")
    lengths = {len(r.rows) for r in logs}
    if len(lengths) != 1:
        raise ConfigError(f"run logs disagree on episode count: {sorted(lengths)}")
    curves = np.stack([moving_average(r.column(column), window) for r in logs])
    std = curves.std(axis=0) if len(logs) > 1 else None
    return curves.mean(axis=0), std


def line_plot_svg(mean: np.ndarray, std, title: str, ylabel: str) -> str:
    lo = float(np.min(mean - std)) if std is not None else float(mean.min())
    hi = float(np.max(mean + std)) if std is not None else float(mean.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    n = mean.size
    iw, ih = WIDTH - 2 * PAD, HEIGHT - 2 * PAD

    def xy(i, v):
        x = PAD + (i / max(n - 1, 1)) * iw
        y = PAD + (1 - (v - lo) / (hi - lo)) * ih
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{PAD}" y="{HEIGHT - PAD + 18}" font-size="11">0</text>',
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 18}" font-size="11" text-anchor="end">{n}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="11" text-anchor="end">{hi:.4g}</text>',
        f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" font-size="11" text-anchor="end">{lo:.4g}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">episode</text>',
        f'<text x="14" y="{HEIGHT / 2}" font-size="12" transform="rotate(-90 14 {HEIGHT / 2})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    if std is not None:
        upper = [xy(i, v) for i, v in enumerate(mean + std)]
        lower = [xy(i, v) for i, v in enumerate(mean - std)][::-1]
        parts.append(f'<polygon class="band" points="{" ".join(upper + lower)}" '
                     'fill="steelblue" fill-opacity="0.25" stroke="none"/>')
    pts = " ".join(xy(i, v) for i, v in enumerate(mean))
    parts.append(f'<polyline class="mean" points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _shade(value: float, lo: float, hi: float) -> str:
    f = 0.0 if hi - lo < 1e-12 else (value - lo) / (hi - lo)
    g = int(40 + 200 * f)
    return f"rgb({g // 3},{g // 2},{g})"


def policy_grid_svg(dump: dict, cell: int = 36) -> str:
    """Arrow per cell for the greedy action, background brightness by max Q."""
    grid = dump["grid"]
    w, h = grid["width"], grid["height"]
    q = np.array(dump["q_values"], dtype=float)
    best = q.max(axis=1)
    free = [s for s in range(w * h) if s not in grid["cliff"] and s != grid["goal"]]
    lo, hi = float(best[free].min()), float(best[free].max())
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * cell}" height="{h * cell}">']
    for s in range(w * h):
        row, col = divmod(s, w)
        x, y = col * cell, row * cell
        if s in grid["cliff"]:
            fill = "rgb(90,20,20)"
        elif s == grid["goal"]:
            fill = "rgb(30,120,30)"
        else:
            fill = _shade(best[s], lo, hi)
        parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="gray"/>')
        if s in grid["cliff"] or s == grid["goal"]:
            label = "G" if s == grid["goal"] else ""
        else:
            label = ARROW_GLYPHS[dump["policy"][s]]
            if s == grid["start"]:
                label = "S" + label
        if label:
            parts.append(f'<text class="cell" x="{x + cell / 2}" y="{y + cell / 2 + 5}" text-anchor="middle" '
                         f'font-size="14" fill="white">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def load_logs(run_dir: Path) -> list[RunLog]:
    logs = []
    for path in sorted(run_dir.glob("run_*_seed*.csv")):
        seed = int(path.stem.rsplit("seed", 1)[1])
        logs.append(RunLog.from_csv(path.read_text(), seed))
    return logs


def plot(run_dir: str | Path, window: int = WINDOW) -> list[Path]:
    """Write return, length and policy-grid SVGs next to the run logs."""
    run_dir = Path(run_dir)
    logs = load_logs(run_dir)
    if not logs:
        raise ConfigError(f"no run CSVs in {run_dir}")
    written = []
    for column, fname, label in (("extrinsic_return", "returns.svg", "extrinsic return"),
                                 ("steps", "lengths.svg", "episode length")):
        mean, std = curve_stats(logs, column, window)
        title = f"{run_dir.name}: {label} ({len(logs)} runs, window {window})"
        out = run_dir / fname
        out.write_text(line_plot_svg(mean, std, title, label), encoding="utf-8")
        written.append(out)
    for path in sorted(run_dir.glob("run_*_policy.json")):
        dump = json.loads(path.read_text())
        if "grid" in dump:
            out = path.with_suffix(".svg")
            out.write_text(policy_grid_svg(dump), encoding="utf-8")
            written.append(out)
    return written
