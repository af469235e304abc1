"""Data-observation tools: style scatter, region correlations, activations.

These reproduce three analyses over mesh clips and trained weights:

* ``style_scatter``: per-vertex temporal std vectors projected to 2-D by
  PCA; clips from the same identity should cluster.
* ``region_correlation``: Pearson correlation between per-region mean
  displacement magnitude series, averaged over clips, with a graph
  thresholded at 0.5 plus per-region self-correlation.
* ``weight_activation``: per-motion-feature vertex activation maps from
  the embedding matrix, with a sparsity summary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MaskError
from .mesh import MeshSequence, RegionMask, per_vertex_temporal_std

EDGE_THRESHOLD = 0.5
SPARSITY_CUTOFF = 1e-3


@dataclass(frozen=True, eq=False)
class StyleScatter:
    points: np.ndarray          # (K, 2) PCA scores
    labels: list                # K labels, caller-defined (e.g. identity)
    components: np.ndarray      # (2, 3N) loadings, axis sign fixed


def style_scatter(sequences, labels) -> StyleScatter:
    """Project per-clip motion-spread vectors to 2-D.

    Each clip reduces to its flattened per-vertex temporal std (3N values);
    the stack is mean-centered and projected onto its top two principal
    axes. Each axis is oriented so its loadings sum to a non-negative
    value, making the projection deterministic. Identical clips land on
    identical points.
    """
    sequences = list(sequences)
    labels = list(labels)
    if len(sequences) < 3:
        raise ValueError(f"need at least 3 sequences, got {len(sequences)}")
    if len(labels) != len(sequences):
        raise ValueError("one label per sequence required")
    vectors = np.stack(
        [per_vertex_temporal_std(seq).per_vertex_std.reshape(-1) for seq in sequences]
    )
    if np.unique(vectors, axis=0).shape[0] < 2:
        raise ValueError("need at least 2 distinct sequences to spread a scatter")
    centered = vectors - vectors.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros_like(vt[:1])])
    components = components.copy()
    for axis in range(2):
        if components[axis].sum() < 0:
            components[axis] = -components[axis]
    return StyleScatter(
        points=centered @ components.T, labels=labels, components=components
    )


def write_scatter_csv(path, scatter: StyleScatter) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "x", "y"])
        for label, (x, y) in zip(scatter.labels, scatter.points):
            writer.writerow([label, f"{x:.8g}", f"{y:.8g}"])


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    # Constant series have no linear relationship to report; call it zero.
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0:
        return 0.0
    return float((da * db).sum() / denom)


@dataclass(frozen=True, eq=False)
class CorrelationGraph:
    names: list[str]
    matrix: np.ndarray          # (R, R) mean pairwise Pearson, diag 1
    self_correlation: np.ndarray  # (R,) mean pairwise per-vertex Pearson
    edges: list                 # (i, j, corr) with corr >= EDGE_THRESHOLD, i < j

    def correlation(self, name_a: str, name_b: str) -> float:
        return float(self.matrix[self.names.index(name_a), self.names.index(name_b)])

    def has_edge(self, name_a: str, name_b: str) -> bool:
        i, j = self.names.index(name_a), self.names.index(name_b)
        return any({e[0], e[1]} == {i, j} for e in self.edges)


def region_series(seq: MeshSequence, mask: RegionMask) -> np.ndarray:
    """Mean displacement magnitude per frame, relative to the clip's mean face."""
    mask.check_bounds(seq.vertex_count)
    part = seq.frames[:, mask.indices]
    displacement = part - part.mean(axis=0)
    return np.linalg.norm(displacement, axis=2).mean(axis=1)


def _vertex_series(seq: MeshSequence, mask: RegionMask) -> np.ndarray:
    part = seq.frames[:, mask.indices]
    displacement = part - part.mean(axis=0)
    return np.linalg.norm(displacement, axis=2)  # (T, |mask|)


def region_correlation(sequences, masks: dict[str, RegionMask]) -> CorrelationGraph:
    """Cross-region movement correlation averaged over clips.

    Edges keep pairs whose mean correlation reaches 0.5. Self-correlation
    is the mean pairwise Pearson correlation between the per-vertex
    displacement series inside a region (needs >= 2 vertices).
    """
    sequences = list(sequences)
    if not sequences:
        raise ValueError("need at least one sequence")
    names = list(masks)
    for name in names:
        if masks[name].size < 2:
            raise MaskError(f"region {name!r} needs >= 2 vertices for self-correlation")
    r = len(names)
    matrix = np.zeros((r, r))
    self_corr = np.zeros(r)
    for seq in sequences:
        series = [region_series(seq, masks[name]) for name in names]
        for i in range(r):
            matrix[i, i] += 1.0
            for j in range(i + 1, r):
                c = _pearson(series[i], series[j])
                matrix[i, j] += c
                matrix[j, i] += c
        for i, name in enumerate(names):
            per_vertex = _vertex_series(seq, masks[name])
            count = per_vertex.shape[1]
            pair_sum, pairs = 0.0, 0
            for a in range(count):
                for b in range(a + 1, count):
                    pair_sum += _pearson(per_vertex[:, a], per_vertex[:, b])
                    pairs += 1
            self_corr[i] += pair_sum / pairs
    matrix /= len(sequences)
    self_corr /= len(sequences)
    edges = [
        (i, j, float(matrix[i, j]))
        for i in range(r)
        for j in range(i + 1, r)
        if matrix[i, j] >= EDGE_THRESHOLD
    ]
    return CorrelationGraph(names=names, matrix=matrix, self_correlation=self_corr, edges=edges)


def write_graph_dot(path, graph: CorrelationGraph) -> None:
    """GraphViz rendering: nodes labeled with self-correlation, weighted edges."""
    lines = ["graph regions {"]
    for i, name in enumerate(graph.names):
        lines.append(f'  {name} [label="{name}\\nself={graph.self_correlation[i]:.2f}"];')
    for i, j, corr in graph.edges:
        lines.append(f'  {graph.names[i]} -- {graph.names[j]} [label="{corr:.2f}"];')
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class ActivationMaps:
    """Per-motion-feature vertex activations derived from the embedding."""

    maps: np.ndarray            # (E, N): norm of each vertex's 3 rows per column
    sparsity: float             # fraction of |embedding| entries below cutoff

    @property
    def feature_count(self) -> int:
        return self.maps.shape[0]


def weight_activation(embedding: np.ndarray, vertex_count: int) -> ActivationMaps:
    """How strongly each motion feature moves each vertex.

    ``embedding`` is (3N, E); activation of feature e at vertex v is the
    Euclidean norm of rows 3v..3v+2 in column e.
    """
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.shape[0] != 3 * vertex_count:
        raise ValueError(
            f"embedding rows {embedding.shape[0]} do not match 3 * {vertex_count} vertices"
        )
    per_vertex = embedding.reshape(vertex_count, 3, -1)
    maps = np.linalg.norm(per_vertex, axis=1).T  # (E, N)
    sparsity = float((np.abs(embedding) < SPARSITY_CUTOFF).mean())
    return ActivationMaps(maps=maps, sparsity=sparsity)


def activation_entropy(maps: ActivationMaps) -> float:
    """Mean spatial-support entropy over motion features.

    Each feature's activation over vertices is normalized to a
    distribution; features that touch fewer vertices have lower entropy.
    All-zero features contribute zero (no spatial support at all).
    """
    total = 0.0
    for row in maps.maps:
        mass = row.sum()
        if mass <= 0:
            continue
        p = row / mass
        nonzero = p[p > 0]
        total += float(-(nonzero * np.log(nonzero)).sum())
    return total / maps.feature_count
