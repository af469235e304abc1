"""Synthesis throughput measurement.

Times the duration-dependent inference path (feature resampling,
frontend, modulation, decoding, reconstruction) on deterministic random
inputs and reports wall time per synthesized second of animation. The
style reference is encoded once up front, as in deployment: one style
clip conditions arbitrarily many utterances, and its cost does not grow
with the driving audio. Also runs the same workload across a small
thread pool: the heavy lifting is BLAS matrix products that release the
GIL, so threads give a rough multi-core figure without any model changes
(parameters are only read).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .audio import FeatureSequence
from .mesh import MeshSequence
from .model import FaceAnimator


@dataclass(frozen=True)
class BenchResult:
    duration: float            # synthesized seconds per call
    frames: int
    iterations: int
    cold_seconds: float        # first call, includes warm-up effects
    median_seconds: float      # median warm wall time per call
    p95_seconds: float
    threads: int
    thread_calls: int
    thread_seconds: float      # wall time for thread_calls concurrent calls

    @property
    def seconds_per_synth_second(self) -> float:
        return self.median_seconds / self.duration

    @property
    def thread_seconds_per_synth_second(self) -> float:
        return self.thread_seconds / (self.thread_calls * self.duration)


def bench_inputs(model: FaceAnimator, duration: float, seed: int = 0):
    """Deterministic random template/features/style sized for the model."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 555]))
    cfg = model.cfg
    frames = max(1, round(duration * cfg.fps))
    template = rng.normal(size=(cfg.vertex_count, 3))
    feat = FeatureSequence(
        rows=rng.normal(size=(frames, cfg.frontend_in)), frame_rate=cfg.fps
    )
    style = MeshSequence(
        frames=template + 0.05 * rng.normal(size=(32, cfg.vertex_count, 3)),
        fps=cfg.fps,
    )
    return template, feat, style


def run_benchmark(
    model: FaceAnimator,
    duration: float = 1.0,
    iterations: int = 20,
    threads: int = 4,
    seed: int = 0,
) -> BenchResult:
    if duration <= 0 or iterations < 1 or threads < 1:
        raise ValueError("duration, iterations, and threads must be positive")
    was_training = model.training
    model.eval()
    template, feat, style = bench_inputs(model, duration, seed)
    code = model.style_code(style)

    def run_once():
        return model.synthesize(template, feat, code)

    try:
        # Single-thread figures mean exactly that: BLAS pools are pinned to
        # one thread, which also removes their small-matrix launch jitter.
        with threadpool_limits(limits=1):
            started = time.perf_counter()
            run_once()
            cold = time.perf_counter() - started

            warm = []
            for _ in range(iterations):
                started = time.perf_counter()
                run_once()
                warm.append(time.perf_counter() - started)
            warm = np.array(warm)

            thread_calls = threads * 2
            started = time.perf_counter()
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(run_once) for _ in range(thread_calls)]
                for future in futures:
                    future.result()
            thread_seconds = time.perf_counter() - started
    finally:
        model.train(was_training)

    return BenchResult(
        duration=duration,
        frames=feat.frame_count,
        iterations=iterations,
        cold_seconds=cold,
        median_seconds=float(np.median(warm)),
        p95_seconds=float(np.percentile(warm, 95)),
        threads=threads,
        thread_calls=thread_calls,
        thread_seconds=thread_seconds,
    )


def format_report(results) -> str:
    lines = [
        "synthesis benchmark (wall seconds; per-second figures are per synthesized second)",
        f"{'duration':>9} {'frames':>7} {'cold':>9} {'median':>9} {'p95':>9} "
        f"{'s/synth-s':>10} {'threads':>8} {'mt s/synth-s':>13}",
    ]
    for r in results:
        lines.append(
            f"{r.duration:>9.2f} {r.frames:>7d} {r.cold_seconds:>9.4f} "
            f"{r.median_seconds:>9.4f} {r.p95_seconds:>9.4f} "
            f"{r.seconds_per_synth_second:>10.4f} {r.threads:>8d} "
            f"{r.thread_seconds_per_synth_second:>13.4f}"
        )
    if len(results) >= 2:
        ratio = results[1].median_seconds / results[0].median_seconds
        lines.append(
            f"doubling check: median({results[1].duration:.2f}s) / "
            f"median({results[0].duration:.2f}s) = {ratio:.3f}"
        )
    return "\n".join(lines)
