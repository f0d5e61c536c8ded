"""CSV and SVG output for the feature-space and ICA figures."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .dataset import ChannelKind, Recording
from .features import FeatureMatrix, fit_pca, fit_standardizer, project
from .ica import IcaModel

# right hand (label 1) red, left hand (label 0) blue
LABEL_COLORS = {0: "#1f4fd1", 1: "#d11f1f"}


def pca_rows(fm: FeatureMatrix) -> np.ndarray:
    """``[n, 3]`` array of (pc1, pc2, label) for standardized features."""
    Z = fit_standardizer(fm.X).transform(fm.X)
    pcs = project(fit_pca(Z, 2), Z)
    return np.column_stack([pcs, fm.y])


def write_pca_csv(rows: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pc1", "pc2", "label"])
        for pc1, pc2, label in rows:
            w.writerow([repr(float(pc1)), repr(float(pc2)), int(label)])


def svg_scatter(rows: np.ndarray, title: str = "", size: int = 480, margin: int = 40) -> str:
    """Self-contained SVG scatter of (x, y, label) rows with framed axes."""
    xy = rows[:, :2].astype(float)
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    inner = size - 2 * margin
    px = margin + (xy[:, 0] - lo[0]) / span[0] * inner
    py = size - margin - (xy[:, 1] - lo[1]) / span[1] * inner

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" fill="none" stroke="#333"/>',
        f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="12">PC1</text>',
        f'<text x="12" y="{size / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 12 {size / 2})">PC2</text>',
    ]
    if title:
        parts.append(f'<text x="{size / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for x, y, label in zip(px, py, rows[:, 2].astype(int)):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{LABEL_COLORS.get(label, "#777")}" fill-opacity="0.7"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def ica_timecourse_rows(
    model: IcaModel, rec: Recording, start_s: float = 0.0, duration_s: float | None = None
) -> tuple[list[str], np.ndarray]:
    """Header and rows (t, ic0.., eog0..) for a window of ``rec``."""
    eeg_idx = rec.indices_of(ChannelKind.EEG)
    eog_idx = rec.indices_of(ChannelKind.EOG)
    a = int(round(start_s * rec.fs))
    b = rec.n_samples if duration_s is None else min(rec.n_samples, a + int(round(duration_s * rec.fs)))
    seg = rec.samples[a:b]
    sources = model.sources(seg[:, eeg_idx])
    t = (a + np.arange(b - a)) / rec.fs
    header = ["t"] + [f"ic{i}" for i in range(sources.shape[1])] + [f"eog{j}" for j in range(len(eog_idx))]
    return header, np.column_stack([t, sources, seg[:, eog_idx]])


def write_rows_csv(header: Sequence[str], rows: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.6g}" for v in row])
