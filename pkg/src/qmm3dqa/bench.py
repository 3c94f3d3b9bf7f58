"""Efficiency accounting: per-stage wall-clock, extractor-work counters,
the three ablation input modes, and the projection-count sweep.

Instead of backbone-specific Gflops, reports carry two exact integers
per mode -- extractor invocations and processed pixels -- which encode
the 6x feature-extraction reduction of the single-map mode, plus
measured per-stage times (monotonic clock, warm-up pass discarded,
mean/std/median over trials).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .evaluation import CrossValResult, ModelFitter, run_cross_validation
from .model_io import DatasetManifest, load_model, normalize_model
from .predictor import FeatureExtractor, PredictorState, score_features
from .projector import RenderConfig, render_projections
from .sampler import GridSpec, assemble_per_view_maps, assemble_qmm

STAGES = ("load", "render", "sample", "extract", "regress")


class AblationMode(enum.Enum):
    """Input configurations compared by the ablation study."""

    MODE_I_RESIZE_CROP6 = "I"    # six resized/cropped projections
    MODE_II_SIX_MAPS = "II"       # six per-view mini-patch maps, mean-fused
    MODE_III_QMM = "III"         # one spliced mini-patch map


@dataclass(frozen=True)
class StageStats:
    mean: float
    std: float
    median: float

    @staticmethod
    def of(samples: list[float]) -> "StageStats":
        arr = np.asarray(samples)
        return StageStats(
            mean=float(arr.mean()),
            std=float(arr.std()),
            median=float(np.median(arr)),
        )


@dataclass(frozen=True)
class BenchReport:
    mode: AblationMode
    trials: int
    num_models: int
    stage_stats: dict[str, StageStats]
    extractor_invocations: int  # per trial, exact
    processed_pixels: int       # per trial, exact
    head_params: int

    def counts_dict(self) -> dict:
        """The deterministic accounting part (no wall-clock)."""
        return {
            "mode": self.mode.value,
            "trials": self.trials,
            "num_models": self.num_models,
            "extractor_invocations": self.extractor_invocations,
            "processed_pixels": self.processed_pixels,
            "head_params": self.head_params,
        }

    def to_dict(self) -> dict:
        out = self.counts_dict()
        out["stage_seconds"] = {
            s: {"mean": st.mean, "std": st.std, "median": st.median}
            for s, st in self.stage_stats.items()
        }
        return out

    def to_text(self) -> str:
        lines = [
            f"mode {self.mode.value}: {self.num_models} model(s), "
            f"{self.trials} trial(s)",
            f"{'stage':>8}  {'mean s':>10}  {'std s':>10}  {'median s':>10}",
        ]
        for s in STAGES:
            st = self.stage_stats[s]
            lines.append(
                f"{s:>8}  {st.mean:>10.4f}  {st.std:>10.4f}  {st.median:>10.4f}"
            )
        lines.append(
            f"extractor invocations/trial: {self.extractor_invocations}; "
            f"pixels/trial: {self.processed_pixels}; "
            f"head params: {self.head_params}"
        )
        return "\n".join(lines)


def count_head_params(state: PredictorState) -> int:
    """Total trainable scalars in the two-stage head."""
    return state.head_param_count()


def resize_center_crop(img: np.ndarray, size: int) -> np.ndarray:
    """Resize the shorter side to ``size`` (bilinear) and center-crop."""
    h, w = img.shape[:2]
    scale = size / min(h, w)
    nh, nw = max(size, round(h * scale)), max(size, round(w * scale))
    pil = Image.fromarray(img, mode="RGB").resize((nw, nh), Image.BILINEAR)
    arr = np.asarray(pil)
    r0 = (nh - size) // 2
    c0 = (nw - size) // 2
    return arr[r0:r0 + size, c0:c0 + size]


def _mode_inputs(mode: AblationMode, ps, gs: GridSpec) -> list:
    if mode is AblationMode.MODE_I_RESIZE_CROP6:
        return [resize_center_crop(ps.images[k], gs.map_px) for k in range(6)]
    if mode is AblationMode.MODE_II_SIX_MAPS:
        return list(assemble_per_view_maps(ps, gs))
    return [assemble_qmm(ps, gs)]


def run_pipeline_once(
    ps, gs: GridSpec, state: PredictorState, ext: FeatureExtractor,
    mode: AblationMode,
) -> tuple[float, dict[str, float]]:
    """Sample + extract + regress one rendered model in the given mode."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    inputs = _mode_inputs(mode, ps, gs)
    timings["sample"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    feats = [ext.extract(x) for x in inputs]
    timings["extract"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    fused = feats[0] if len(feats) == 1 else np.mean(feats, axis=0)
    score = score_features(fused, state)
    timings["regress"] = time.perf_counter() - t0
    return score, timings


def run_benchmark(
    model_paths: list[str | Path],
    render_cfg: RenderConfig,
    grid_spec: GridSpec,
    state: PredictorState,
    mode: AblationMode,
    trials: int = 3,
    warmup: int = 1,
    parallel_render: bool = False,
) -> BenchReport:
    """Time every stage of the mode's pipeline over repeated trials.

    Single-threaded by default for stable timings; ``parallel_render``
    measures the six-views-in-parallel configuration instead.

    Raises:
        ValueError: no models or fewer than 3 trials.
    """
    if not model_paths:
        raise ValueError("benchmark needs at least one model")
    if trials < 3:
        raise ValueError("benchmark needs at least 3 trials")
    per_call = {
        AblationMode.MODE_I_RESIZE_CROP6: 6,
        AblationMode.MODE_II_SIX_MAPS: 6,
        AblationMode.MODE_III_QMM: 1,
    }[mode]
    ext = FeatureExtractor(state.extractor)
    stage_samples: dict[str, list[float]] = {s: [] for s in STAGES}
    invocations = 0
    try:
        for trial in range(trials + warmup):
            sums = dict.fromkeys(STAGES, 0.0)
            inv_before = ext.invocations
            for path in model_paths:
                t0 = time.perf_counter()
                model = normalize_model(load_model(path))
                sums["load"] += time.perf_counter() - t0

                t0 = time.perf_counter()
                ps = render_projections(model, render_cfg, parallel=parallel_render)
                sums["render"] += time.perf_counter() - t0

                _, timings = run_pipeline_once(ps, grid_spec, state, ext, mode)
                for s in ("sample", "extract", "regress"):
                    sums[s] += timings[s]
            if trial < warmup:
                continue
            invocations = ext.invocations - inv_before
            for s in STAGES:
                stage_samples[s].append(sums[s])
    finally:
        ext.close()
    pixels = len(model_paths) * per_call * grid_spec.map_px ** 2
    return BenchReport(
        mode=mode,
        trials=trials,
        num_models=len(model_paths),
        stage_stats={s: StageStats.of(v) for s, v in stage_samples.items()},
        extractor_invocations=invocations,
        processed_pixels=pixels,
        head_params=count_head_params(state),
    )


@dataclass(frozen=True)
class SweepPoint:
    num_views: int
    quota: int
    metrics: CrossValResult

    def to_dict(self) -> dict:
        return {
            "num_views": self.num_views,
            "quota": self.quota,
            "metrics": self.metrics.to_dict(),
        }


def projection_sweep(
    manifest: DatasetManifest,
    grid_spec: GridSpec,
    k: int,
    n_values: list[int],
    fitter_factory,
    threads: int = 1,
) -> list[SweepPoint]:
    """Cross-validate the pipeline at each projection count.

    ``fitter_factory(grid_spec_with_n)`` must return a
    :class:`~qmm3dqa.evaluation.ModelFitter`; the sampler quota follows
    the per-view formula for each n.
    """
    points = []
    for n in n_values:
        gs = replace(grid_spec, num_views=n)
        fitter: ModelFitter = fitter_factory(gs)
        result = run_cross_validation(manifest, k, fitter, threads=threads)
        points.append(SweepPoint(num_views=n, quota=gs.quota, metrics=result))
    return points


def sweep_to_csv(points: list[SweepPoint]) -> str:
    lines = ["num_views,quota,srcc,plcc,krcc,rmse"]
    for p in points:
        m = p.metrics.mean
        lines.append(
            f"{p.num_views},{p.quota},{m.srcc:.6f},{m.plcc:.6f},"
            f"{m.krcc:.6f},{m.rmse:.6f}"
        )
    return "\n".join(lines) + "\n"
