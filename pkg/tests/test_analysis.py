import numpy as np
import pytest

from facemotion.analysis import (
    EDGE_THRESHOLD,
    SPARSITY_CUTOFF,
    activation_entropy,
    region_correlation,
    region_series,
    style_scatter,
    weight_activation,
    write_graph_dot,
    write_scatter_csv,
)
from facemotion.errors import MaskError
from facemotion.mesh import MeshSequence, RegionMask


def seq(frames, fps=30.0):
    return MeshSequence(frames=np.asarray(frames, dtype=np.float64), fps=fps)


def wave_clip(rng, t, n, scale):
    """A clip whose per-vertex motion spread is proportional to scale."""
    base = rng.normal(size=(n, 3))
    phase = rng.uniform(0, 2 * np.pi, size=n)
    motion = scale * np.sin(np.linspace(0, 6 * np.pi, t)[:, None] + phase)
    frames = base[None, :, :].repeat(t, axis=0)
    frames[:, :, 1] += motion
    return seq(frames)


class TestStyleScatter:
    def test_groups_by_motion_scale(self, rng):
        # two "identities" with 4x different motion spread separate cleanly
        clips, labels = [], []
        for k in range(6):
            scale = 0.05 if k % 2 == 0 else 0.2
            clips.append(wave_clip(rng, 40, 15, scale))
            labels.append(k % 2)
        scatter = style_scatter(clips, labels)
        assert scatter.points.shape == (6, 2)
        a = scatter.points[np.array(labels) == 0]
        b = scatter.points[np.array(labels) == 1]
        between = np.linalg.norm(a.mean(axis=0) - b.mean(axis=0))
        within = np.concatenate(
            [
                np.linalg.norm(a - a.mean(axis=0), axis=1),
                np.linalg.norm(b - b.mean(axis=0), axis=1),
            ]
        ).mean()
        assert between > within

    def test_deterministic_including_axis_sign(self, rng):
        clips = [wave_clip(rng, 30, 10, 0.1 * (k + 1)) for k in range(4)]
        s1 = style_scatter(clips, list(range(4)))
        s2 = style_scatter(clips, list(range(4)))
        np.testing.assert_array_equal(s1.points, s2.points)
        assert s1.components[0].sum() >= 0
        assert s1.components[1].sum() >= 0

    def test_identical_clips_land_on_identical_points(self, rng):
        clip = wave_clip(rng, 25, 8, 0.1)
        other = wave_clip(rng, 25, 8, 0.3)
        scatter = style_scatter([clip, seq(clip.frames.copy()), other], [0, 0, 1])
        np.testing.assert_allclose(scatter.points[0], scatter.points[1], atol=1e-10)

    def test_too_few_or_degenerate_inputs_rejected(self, rng):
        clip = wave_clip(rng, 20, 6, 0.1)
        with pytest.raises(ValueError, match="at least 3"):
            style_scatter([clip, clip], [0, 1])
        with pytest.raises(ValueError, match="one label per sequence"):
            style_scatter([clip, clip, clip], [0, 1])
        with pytest.raises(ValueError, match="distinct"):
            style_scatter([clip, seq(clip.frames.copy()), seq(clip.frames.copy())], [0, 1, 2])

    def test_csv_writer(self, tmp_path, rng):
        clips = [wave_clip(rng, 20, 6, 0.1 * (k + 1)) for k in range(3)]
        scatter = style_scatter(clips, ["a", "b", "c"])
        write_scatter_csv(tmp_path / "scatter.csv", scatter)
        lines = (tmp_path / "scatter.csv").read_text().splitlines()
        assert lines[0] == "label,x,y"
        assert len(lines) == 4
        assert lines[1].startswith("a,")


def two_region_masks():
    return {
        "lip": RegionMask(name="lip", indices=np.arange(0, 4)),
        "upper": RegionMask(name="upper", indices=np.arange(4, 8)),
    }


def driven_clip(t, n, lip_idx, upper_idx, lip_env, upper_env, rng):
    """Vertices in each region move along fixed directions by the envelope."""
    base = rng.normal(size=(n, 3))
    frames = base[None, :, :].repeat(t, axis=0)
    lip_dir = rng.normal(size=(len(lip_idx), 3))
    upper_dir = rng.normal(size=(len(upper_idx), 3))
    frames[:, lip_idx] += lip_env[:, None, None] * lip_dir
    frames[:, upper_idx] += upper_env[:, None, None] * upper_dir
    return seq(frames)


class TestRegionCorrelation:
    def test_shared_envelope_keeps_edge_independent_drops_it(self, rng):
        t = 60
        masks = two_region_masks()
        shared = np.sin(np.linspace(0, 4 * np.pi, t))
        independent = np.cos(np.linspace(0, 9 * np.pi, t)) * np.linspace(1, 0.2, t)
        coupled = driven_clip(t, 8, masks["lip"].indices, masks["upper"].indices,
                              shared, shared, rng)
        decoupled = driven_clip(t, 8, masks["lip"].indices, masks["upper"].indices,
                                shared, independent, rng)
        g_coupled = region_correlation([coupled], masks)
        g_decoupled = region_correlation([decoupled], masks)
        assert g_coupled.correlation("lip", "upper") > 0.9
        assert g_coupled.has_edge("lip", "upper")
        assert abs(g_decoupled.correlation("lip", "upper")) < EDGE_THRESHOLD
        assert not g_decoupled.has_edge("lip", "upper")

    def test_matrix_is_symmetric_with_unit_diagonal(self, rng):
        masks = two_region_masks()
        clip = driven_clip(40, 8, masks["lip"].indices, masks["upper"].indices,
                           rng.normal(size=40), rng.normal(size=40), rng)
        graph = region_correlation([clip], masks)
        np.testing.assert_array_equal(graph.matrix, graph.matrix.T)
        np.testing.assert_array_equal(np.diag(graph.matrix), np.ones(2))

    def test_self_correlation_high_for_rigidly_driven_region(self, rng):
        # all vertices in a region share one envelope: self-correlation ~1
        masks = two_region_masks()
        env = np.sin(np.linspace(0, 5 * np.pi, 50))
        clip = driven_clip(50, 8, masks["lip"].indices, masks["upper"].indices,
                           env, env, rng)
        graph = region_correlation([clip], masks)
        assert graph.self_correlation[graph.names.index("lip")] > 0.95

    def test_region_series_is_mean_displacement_magnitude(self, rng):
        masks = two_region_masks()
        frames = rng.normal(size=(12, 8, 3))
        clip = seq(frames)
        series = region_series(clip, masks["lip"])
        part = frames[:, masks["lip"].indices]
        want = np.linalg.norm(part - part.mean(axis=0), axis=2).mean(axis=1)
        np.testing.assert_allclose(series, want, atol=1e-12)

    def test_constant_region_correlates_to_nothing(self, rng):
        # frozen region: zero-variance series counts as zero correlation
        masks = two_region_masks()
        frames = np.zeros((30, 8, 3))
        frames[:, masks["lip"].indices, 1] += np.sin(np.linspace(0, 3, 30))[:, None]
        graph = region_correlation([seq(frames)], masks)
        assert graph.correlation("lip", "upper") == 0.0

    def test_empty_input_and_tiny_regions_rejected(self, rng):
        masks = two_region_masks()
        with pytest.raises(ValueError, match="at least one"):
            region_correlation([], masks)
        bad = {"lip": RegionMask(name="lip", indices=np.array([0]))}
        clip = seq(rng.normal(size=(10, 4, 3)))
        with pytest.raises(MaskError, match=">= 2 vertices"):
            region_correlation([clip], bad)

    def test_dot_writer_lists_edges(self, tmp_path, rng):
        masks = two_region_masks()
        env = np.sin(np.linspace(0, 5 * np.pi, 50))
        clip = driven_clip(50, 8, masks["lip"].indices, masks["upper"].indices,
                           env, env, rng)
        graph = region_correlation([clip], masks)
        write_graph_dot(tmp_path / "regions.dot", graph)
        text = (tmp_path / "regions.dot").read_text()
        assert text.startswith("graph regions {")
        assert "lip -- upper" in text


class TestWeightActivation:
    def test_maps_are_per_vertex_row_norms(self):
        n, e = 4, 3
        embedding = np.arange(3 * n * e, dtype=np.float64).reshape(3 * n, e)
        acts = weight_activation(embedding, n)
        assert acts.maps.shape == (e, n)
        want = np.linalg.norm(embedding.reshape(n, 3, e), axis=1).T
        np.testing.assert_allclose(acts.maps, want, atol=1e-12)

    def test_sparsity_counts_small_entries(self):
        embedding = np.full((6, 2), 1.0)
        embedding[0, 0] = 1e-4  # below cutoff
        embedding[1, 1] = 0.0
        acts = weight_activation(embedding, 2)
        assert acts.sparsity == pytest.approx(2 / 12)
        assert SPARSITY_CUTOFF == 1e-3

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValueError, match="embedding rows"):
            weight_activation(np.zeros((7, 2)), 2)

    def test_entropy_orders_spatial_support(self):
        # a feature touching one vertex has lower entropy than one
        # spreading uniformly over all vertices
        n = 8
        narrow = np.zeros((3 * n, 1))
        narrow[0] = 1.0
        wide = np.ones((3 * n, 1))
        assert activation_entropy(weight_activation(narrow, n)) < activation_entropy(
            weight_activation(wide, n)
        )
        # uniform support over N vertices is exactly log N
        assert activation_entropy(weight_activation(wide, n)) == pytest.approx(np.log(n))

    def test_entropy_skips_dead_features(self):
        n = 4
        embedding = np.zeros((3 * n, 2))
        embedding[:, 0] = 1.0
        acts = weight_activation(embedding, n)
        # dead feature contributes zero, mean over both features
        assert activation_entropy(acts) == pytest.approx(np.log(n) / 2)
