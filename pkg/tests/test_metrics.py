import numpy as np
import pytest

from facemotion.errors import MaskError
from facemotion.mesh import MeshSequence, RegionMask
from facemotion.metrics import (
    MetricReport,
    aggregate_reports,
    evaluate_pair,
    face_mean_error,
    fdtw,
    format_table,
    lip_errors,
    region_mean_error,
    write_report_csv,
)
from helpers import dtw_by_enumeration, frame_cost


def seq(frames, fps=30.0):
    return MeshSequence(frames=np.asarray(frames, dtype=np.float64), fps=fps)


def random_seq(rng, t, n):
    return seq(rng.normal(size=(t, n, 3)))


@pytest.fixture
def lip_mask():
    return RegionMask(name="lip", indices=np.arange(0, 10))


class TestLipErrors:
    def test_identical_sequences_are_zero(self, rng, lip_mask):
        a = random_seq(rng, 5, 12)
        assert lip_errors(a, a, lip_mask) == (0.0, 0.0)

    def test_uniform_offset_gives_offset_twice(self, rng, lip_mask):
        truth = random_seq(rng, 4, 12)
        pred = seq(truth.frames.copy())
        pred.frames[:, lip_mask.indices, 0] += 0.003
        mean_lip, max_lip = lip_errors(pred, truth, lip_mask)
        assert mean_lip == pytest.approx(0.003, rel=1e-12)
        assert max_lip == pytest.approx(0.003, rel=1e-12)

    def test_single_bad_vertex_splits_mean_and_max(self, rng, lip_mask):
        # one vertex off by 0.01 among 10 masked, one frame:
        # mean = 0.001, max = 0.01
        truth = random_seq(rng, 1, 12)
        pred = seq(truth.frames.copy())
        pred.frames[0, 3, 1] += 0.01
        mean_lip, max_lip = lip_errors(pred, truth, lip_mask)
        assert mean_lip == pytest.approx(0.001, rel=1e-12)
        assert max_lip == pytest.approx(0.01, rel=1e-12)

    def test_mean_never_exceeds_max(self, rng, lip_mask):
        a = random_seq(rng, 7, 12)
        b = random_seq(rng, 7, 12)
        mean_lip, max_lip = lip_errors(a, b, lip_mask)
        assert 0.0 < mean_lip <= max_lip

    def test_length_mismatch_rejected(self, rng, lip_mask):
        with pytest.raises(ValueError, match="frame counts"):
            lip_errors(random_seq(rng, 3, 12), random_seq(rng, 4, 12), lip_mask)

    def test_mask_out_of_bounds_rejected(self, rng):
        mask = RegionMask(name="lip", indices=np.array([11]))
        with pytest.raises(MaskError):
            lip_errors(random_seq(rng, 2, 8), random_seq(rng, 2, 8), mask)


class TestFaceErrors:
    def test_uniform_offset_everywhere(self, rng):
        truth = random_seq(rng, 3, 9)
        pred = seq(truth.frames + np.array([0.0, 0.004, 0.0]))
        upper = RegionMask(name="upper", indices=np.arange(4, 7))
        assert region_mean_error(pred, truth, upper) == pytest.approx(0.004, rel=1e-12)
        assert face_mean_error(pred, truth) == pytest.approx(0.004, rel=1e-12)

    def test_offset_only_on_mask_dilutes_face_mean(self, rng):
        truth = random_seq(rng, 2, 10)
        pred = seq(truth.frames.copy())
        upper = RegionMask(name="upper", indices=np.arange(0, 4))
        pred.frames[:, upper.indices, 2] += 0.05
        assert region_mean_error(pred, truth, upper) == pytest.approx(0.05, rel=1e-12)
        assert face_mean_error(pred, truth) == pytest.approx(0.05 * 4 / 10, rel=1e-12)


class TestFdtw:
    def test_identical_sequences_cost_zero(self, rng):
        a = random_seq(rng, 6, 4)
        assert fdtw(a, a) == 0.0

    def test_single_frame_against_sequence(self, rng):
        # with one prediction frame every truth frame aligns against it
        one = random_seq(rng, 1, 3)
        many = random_seq(rng, 5, 3)
        want = frame_cost(one.frames, many.frames).sum()
        assert fdtw(one, many) == pytest.approx(want, rel=1e-12)

    def test_symmetry(self, rng):
        a = random_seq(rng, 5, 3)
        b = random_seq(rng, 7, 3)
        assert fdtw(a, b) == pytest.approx(fdtw(b, a), rel=1e-12)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            ta, tb = rng.integers(1, 7, size=2)
            n = int(rng.integers(1, 4))
            a = random_seq(rng, int(ta), n)
            b = random_seq(rng, int(tb), n)
            want = dtw_by_enumeration(a.frames, b.frames)
            assert fdtw(a, b) == pytest.approx(want, rel=1e-12)

    def test_normalized_divides_by_path_cells(self, rng):
        a = random_seq(rng, 1, 3)
        b = random_seq(rng, 6, 3)
        # the only path visits all six cells
        assert fdtw(a, b, normalized=True) == pytest.approx(fdtw(a, b) / 6, rel=1e-12)

    def test_different_vertex_counts_rejected(self, rng):
        with pytest.raises(ValueError, match="vertex counts"):
            fdtw(random_seq(rng, 3, 4), random_seq(rng, 3, 5))


class TestReports:
    def test_evaluate_pair_invariants(self, rng):
        pred = random_seq(rng, 6, 12)
        truth = random_seq(rng, 6, 12)
        lip = RegionMask(name="lip", indices=np.arange(0, 5))
        upper = RegionMask(name="upper", indices=np.arange(6, 11))
        report = evaluate_pair(pred, truth, lip, upper)
        assert report.l_mean_lip <= report.l_max_lip
        assert all(v >= 0 for v in report.as_tuple())
        assert report.l_mean_lip == pytest.approx(lip_errors(pred, truth, lip)[0], rel=1e-12)
        assert report.f_dtw == pytest.approx(fdtw(pred, truth), rel=1e-12)

    def test_empty_mask_rejected_at_construction(self):
        # the metric layer can never see an empty mask
        with pytest.raises(MaskError):
            RegionMask(name="lip", indices=np.array([], dtype=np.int64))

    def test_aggregate_is_columnwise_mean(self):
        a = MetricReport(1.0, 2.0, 3.0, 4.0, 5.0)
        b = MetricReport(3.0, 6.0, 5.0, 8.0, 7.0)
        mean = aggregate_reports([a, b])
        assert mean.as_tuple() == (2.0, 4.0, 4.0, 6.0, 6.0)

    def test_csv_and_table_share_columns(self, tmp_path, rng):
        lip = RegionMask(name="lip", indices=np.arange(0, 5))
        upper = RegionMask(name="upper", indices=np.arange(6, 11))
        reports = {}
        for name in ("a", "b"):
            reports[name] = evaluate_pair(
                random_seq(rng, 4, 12), random_seq(rng, 4, 12), lip, upper
            )
        path = tmp_path / "report.csv"
        write_report_csv(path, reports)
        lines = path.read_text().splitlines()
        assert lines[0] == "sequence,L_mean_lip,L_max_lip,L_mean_upper,L_mean_face,F-DTW"
        assert len(lines) == 4  # header, two rows, mean
        assert lines[-1].startswith("mean,")
        table = format_table(reports)
        assert "L_mean_lip" in table.splitlines()[0]
        assert table.splitlines()[-1].startswith("mean")
