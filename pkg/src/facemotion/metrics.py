"""Evaluation metrics for synthesized mesh sequences.

Frame-aligned errors follow the usual lip/face vertex-distance protocol;
F-DTW aligns two sequences with dynamic time warping over mean per-vertex
distances, so small timing offsets are not punished as hard as spatial
errors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MaskError
from .mesh import MeshSequence, RegionMask

METRIC_COLUMNS = ("L_mean_lip", "L_max_lip", "L_mean_upper", "L_mean_face", "F-DTW")


def _check_pair(pred: MeshSequence, truth: MeshSequence, same_length: bool):
    if pred.vertex_count != truth.vertex_count:
        raise ValueError(
            f"vertex counts differ: pred {pred.vertex_count}, truth {truth.vertex_count}"
        )
    if same_length and pred.frame_count != truth.frame_count:
        raise ValueError(
            f"frame counts differ: pred {pred.frame_count}, truth {truth.frame_count}"
        )


def _masked_distances(pred: MeshSequence, truth: MeshSequence, mask: RegionMask) -> np.ndarray:
    mask.check_bounds(pred.vertex_count)
    diff = pred.frames[:, mask.indices] - truth.frames[:, mask.indices]
    return np.linalg.norm(diff, axis=2)  # (T, |mask|)


def lip_errors(pred: MeshSequence, truth: MeshSequence, lip: RegionMask) -> tuple[float, float]:
    """(L_mean_lip, L_max_lip): mean distance, and mean of per-frame maxima."""
    _check_pair(pred, truth, same_length=True)
    dist = _masked_distances(pred, truth, lip)
    return float(dist.mean()), float(dist.max(axis=1).mean())


def region_mean_error(pred: MeshSequence, truth: MeshSequence, mask: RegionMask) -> float:
    """Mean vertex distance over frames and the masked vertices."""
    _check_pair(pred, truth, same_length=True)
    return float(_masked_distances(pred, truth, mask).mean())


def face_mean_error(pred: MeshSequence, truth: MeshSequence) -> float:
    """Mean vertex distance over frames and all vertices."""
    _check_pair(pred, truth, same_length=True)
    diff = pred.frames - truth.frames
    return float(np.linalg.norm(diff, axis=2).mean())


def fdtw(pred: MeshSequence, truth: MeshSequence, normalized: bool = False) -> float:
    """Dynamic-time-warping error between two clips of the same topology.

    The frame-pair cost is the mean per-vertex Euclidean distance; steps
    are (1,0), (0,1), (1,1) with both endpoints aligned; each visited cell
    counts once. Returns the accumulated cost along the best path, or the
    per-cell average when ``normalized``.
    """
    _check_pair(pred, truth, same_length=False)
    ta, tb = pred.frame_count, truth.frame_count
    a = pred.frames[:, None]           # (Ta, 1, N, 3)
    b = truth.frames[None, :]          # (1, Tb, N, 3)
    cost = np.linalg.norm(a - b, axis=3).mean(axis=2)  # (Ta, Tb)
    acc = np.full((ta + 1, tb + 1), np.inf)
    acc[0, 0] = 0.0
    steps = np.zeros((ta + 1, tb + 1), dtype=np.int64)
    for i in range(1, ta + 1):
        for j in range(1, tb + 1):
            choices = (acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
            pick = int(np.argmin(choices))
            acc[i, j] = cost[i - 1, j - 1] + choices[pick]
            prev = ((i - 1, j), (i, j - 1), (i - 1, j - 1))[pick]
            steps[i, j] = steps[prev] + 1
    total = float(acc[ta, tb])
    if normalized:
        return total / int(steps[ta, tb])
    return total


@dataclass(frozen=True)
class MetricReport:
    """One row of evaluation results, in template units."""

    l_mean_lip: float
    l_max_lip: float
    l_mean_upper: float
    l_mean_face: float
    f_dtw: float

    def as_tuple(self):
        return (self.l_mean_lip, self.l_max_lip, self.l_mean_upper, self.l_mean_face, self.f_dtw)


def evaluate_pair(
    pred: MeshSequence, truth: MeshSequence, lip: RegionMask, upper: RegionMask
) -> MetricReport:
    if lip.size < 1 or upper.size < 1:
        raise MaskError("evaluation masks must be non-empty")
    mean_lip, max_lip = lip_errors(pred, truth, lip)
    return MetricReport(
        l_mean_lip=mean_lip,
        l_max_lip=max_lip,
        l_mean_upper=region_mean_error(pred, truth, upper),
        l_mean_face=face_mean_error(pred, truth),
        f_dtw=fdtw(pred, truth),
    )


def aggregate_reports(reports) -> MetricReport:
    stacked = np.array([r.as_tuple() for r in reports])
    return MetricReport(*stacked.mean(axis=0))


def write_report_csv(path, named_reports: dict[str, MetricReport]) -> None:
    """Per-sequence rows plus a trailing mean row."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sequence", *METRIC_COLUMNS])
        for name, report in named_reports.items():
            writer.writerow([name] + [f"{v:.8g}" for v in report.as_tuple()])
        if named_reports:
            mean = aggregate_reports(named_reports.values())
            writer.writerow(["mean"] + [f"{v:.8g}" for v in mean.as_tuple()])


def format_table(named_reports: dict[str, MetricReport]) -> str:
    """Aligned text table with the standard metric column names."""
    rows = [("sequence", *METRIC_COLUMNS)]
    for name, report in named_reports.items():
        rows.append((name, *(f"{v:.6f}" for v in report.as_tuple())))
    if named_reports:
        mean = aggregate_reports(named_reports.values())
        rows.append(("mean", *(f"{v:.6f}" for v in mean.as_tuple())))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
