import numpy as np
import pytest

from facemotion.bench import bench_inputs, format_report, run_benchmark


class TestBenchInputs:
    def test_sized_for_model_and_duration(self, tiny_model):
        template, feat, style = bench_inputs(tiny_model, duration=0.5)
        cfg = tiny_model.cfg
        assert template.shape == (cfg.vertex_count, 3)
        assert feat.frame_count == round(0.5 * cfg.fps)
        assert feat.rows.shape[1] == cfg.frontend_in
        assert style.vertex_count == cfg.vertex_count

    def test_deterministic_per_seed(self, tiny_model):
        _, a, _ = bench_inputs(tiny_model, duration=0.3, seed=4)
        _, b, _ = bench_inputs(tiny_model, duration=0.3, seed=4)
        _, c, _ = bench_inputs(tiny_model, duration=0.3, seed=5)
        np.testing.assert_array_equal(a.rows, b.rows)
        assert not np.array_equal(a.rows, c.rows)


class TestRunBenchmark:
    def test_reports_positive_times_and_restores_mode(self, tiny_model):
        tiny_model.train(True)
        result = run_benchmark(tiny_model, duration=0.2, iterations=3, threads=2)
        assert tiny_model.training  # mode restored
        assert result.frames == round(0.2 * tiny_model.cfg.fps)
        assert result.cold_seconds > 0
        assert result.median_seconds > 0
        assert result.p95_seconds >= result.median_seconds
        assert result.thread_calls == 4
        assert result.seconds_per_synth_second == pytest.approx(
            result.median_seconds / 0.2
        )

    def test_rejects_bad_arguments(self, tiny_model):
        with pytest.raises(ValueError):
            run_benchmark(tiny_model, duration=0.0)
        with pytest.raises(ValueError):
            run_benchmark(tiny_model, duration=1.0, iterations=0)
        with pytest.raises(ValueError):
            run_benchmark(tiny_model, duration=1.0, threads=0)


class TestFormatReport:
    def test_single_result_table(self, tiny_model):
        result = run_benchmark(tiny_model, duration=0.2, iterations=2, threads=1)
        text = format_report([result])
        lines = text.splitlines()
        assert "s/synth-s" in lines[1]
        assert len(lines) == 3  # title, header, one row
        assert "doubling" not in text

    def test_two_results_add_doubling_check(self, tiny_model):
        short = run_benchmark(tiny_model, duration=0.2, iterations=2, threads=1)
        long = run_benchmark(tiny_model, duration=0.4, iterations=2, threads=1)
        text = format_report([short, long])
        assert "doubling check" in text.splitlines()[-1]
