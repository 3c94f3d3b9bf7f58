"""Quality prediction: pluggable feature extraction, a two-stage rectified
regression head, and a seeded mini-batch trainer.

Two extractor kinds share one 768-dim feature contract:

* ``BUILTIN`` -- a deterministic statistics extractor over the map's
  patch lattice (per-patch mean / std / gradient stats pooled across the
  lattice, plus per-quadrant luminance and gradient histograms, zero-
  padded to the feature width).  It is an explicitly labeled stand-in
  that keeps the pipeline self-contained and trainable on a laptop.
* ``BRIDGE`` -- features fetched from an external executable speaking a
  newline-delimited JSON protocol over stdin/stdout (see
  :class:`BridgeClient`), hash-cached by map bytes.

The head is ``score = W2 @ relu(W1 @ f + b1) + b2`` (768 -> 64 -> 1).
Training runs plain mini-batch gradient descent on the head weights with
a step-decay schedule; the extractor stays frozen.  When feature
standardization is enabled (the default) an affine per-feature transform
is fitted on the first training epoch, stored in the state, and applied
before the head at both training and prediction time.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import shlex
import struct
import subprocess
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BridgeError,
    DegenerateLabels,
    DivergedLoss,
    EmptyManifest,
    ShapeMismatch,
)
from .model_io import DatasetManifest, Model3D, load_model, normalize_model
from .projector import ProjectionSet, RenderConfig, render_projections
from .quality_loss import LossConfig, combined_loss
from .rng import derive_seed, substream
from .sampler import GridSpec, Qmm, assemble_qmm, qmm_to_png

HIDDEN_DIM = 64
STATE_MAGIC = b"QMM3DQA1"
BRIDGE_ENV = "QMM3DQA_BRIDGE"

_STAT_NAMES = ("mean", "std", "grad_mean", "grad_std")


class ExtractorKind(enum.Enum):
    BUILTIN = "builtin"
    BRIDGE = "bridge"


@dataclass(frozen=True)
class FeatureExtractorSpec:
    """Which extractor to use and the width of its feature vector."""

    kind: ExtractorKind = ExtractorKind.BUILTIN
    feature_dim: int = 768
    pooling_grid: int = 7
    stats: tuple[str, ...] = _STAT_NAMES
    bridge_command: str | None = None

    def __post_init__(self) -> None:
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        unknown = set(self.stats) - set(_STAT_NAMES)
        if unknown:
            raise ValueError(f"unknown statistics: {sorted(unknown)}")


@dataclass(frozen=True)
class TrainConfig:
    """Trainer hyperparameters; defaults follow the standard recipe."""

    learning_rate: float = 1e-4
    decay: float = 0.9
    decay_every: int = 5
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    optimizer: str = "gd"  # plain mini-batch gradient descent
    standardize_features: bool = True
    resample_epochs: bool = True  # fresh maps each epoch (augmentation)

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.optimizer != "gd":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")


@dataclass
class PredictorState:
    """Extractor configuration plus trainable regression-head weights."""

    extractor: FeatureExtractorSpec
    w1: np.ndarray  # (HIDDEN_DIM, feature_dim)
    b1: np.ndarray  # (HIDDEN_DIM,)
    w2: np.ndarray  # (1, HIDDEN_DIM)
    b2: np.ndarray  # (1,)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    feature_offset: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    def head_param_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


@dataclass(frozen=True)
class EpochStats:
    total: float
    mse: float
    rank: float


@dataclass(frozen=True)
class TrainReport:
    epochs: tuple[EpochStats, ...]
    state: PredictorState
    wall_clock_s: float


@dataclass(frozen=True)
class PredictionResult:
    score: float
    timings: dict[str, float]  # render / sample / extract / regress seconds


def init_state(
    spec: FeatureExtractorSpec | None = None,
    train_config: TrainConfig | None = None,
    zero: bool = False,
) -> PredictorState:
    """Create a head with seeded uniform Glorot weights (biases zero)."""
    spec = spec or FeatureExtractorSpec()
    cfg = train_config or TrainConfig()
    dim = spec.feature_dim
    if zero:
        w1 = np.zeros((HIDDEN_DIM, dim))
        w2 = np.zeros((1, HIDDEN_DIM))
    else:
        rng = substream(derive_seed(cfg.seed, "head-init"), 0)
        lim1 = np.sqrt(6.0 / (dim + HIDDEN_DIM))
        lim2 = np.sqrt(6.0 / (HIDDEN_DIM + 1))
        w1 = rng.uniform(-lim1, lim1, size=(HIDDEN_DIM, dim))
        w2 = rng.uniform(-lim2, lim2, size=(1, HIDDEN_DIM))
    return PredictorState(
        extractor=spec,
        w1=w1,
        b1=np.zeros(HIDDEN_DIM),
        w2=w2,
        b2=np.zeros(1),
        train_config=cfg,
    )


# -- builtin feature extraction ------------------------------------------


def extract_features_builtin(
    qmm: Qmm | np.ndarray, spec: FeatureExtractorSpec | None = None
) -> np.ndarray:
    """Deterministic statistics features of a mini-patch map or raw image.

    Per lattice patch and color channel: mean, standard deviation, mean
    central-difference gradient magnitude, and its standard deviation;
    each statistic is pooled over the lattice with mean/std/min/max.
    Appended are a 16-bin luminance histogram and a 16-bin gradient-
    magnitude histogram per image quadrant, then the vector is zero-
    padded (or truncated) to exactly ``spec.feature_dim``.
    """
    spec = spec or FeatureExtractorSpec()
    if isinstance(qmm, Qmm):
        img = qmm.image.astype(np.float64)
        grid = qmm.grid
    else:
        img = np.asarray(qmm, dtype=np.float64)
        grid = spec.pooling_grid
    h, w = img.shape[:2]
    ph, pw = h // grid, w // grid

    # Per-patch, per-channel statistics over the grid x grid lattice.
    patches = img[: grid * ph, : grid * pw].reshape(grid, ph, grid, pw, 3)
    patches = patches.transpose(0, 2, 1, 3, 4).reshape(grid * grid, ph, pw, 3)
    stats = {}
    stats["mean"] = patches.mean(axis=(1, 2))
    stats["std"] = patches.std(axis=(1, 2))
    if ph >= 3 and pw >= 3:
        gy = (patches[:, 2:, 1:-1] - patches[:, :-2, 1:-1]) / 2.0
        gx = (patches[:, 1:-1, 2:] - patches[:, 1:-1, :-2]) / 2.0
        mag = np.sqrt(gx * gx + gy * gy)
        stats["grad_mean"] = mag.mean(axis=(1, 2))
        stats["grad_std"] = mag.std(axis=(1, 2))
    else:
        stats["grad_mean"] = np.zeros((grid * grid, 3))
        stats["grad_std"] = np.zeros((grid * grid, 3))
    per_patch = np.concatenate([stats[s] for s in spec.stats], axis=1)
    pooled = np.concatenate(
        [
            per_patch.mean(axis=0),
            per_patch.std(axis=0),
            per_patch.min(axis=0),
            per_patch.max(axis=0),
        ]
    )

    # Quadrant luminance and gradient histograms (fractions of pixels).
    lum = img @ np.array([0.299, 0.587, 0.114])
    hists = []
    hy, hx = h // 2, w // 2
    for qs in (
        lum[:hy, :hx], lum[:hy, hx:], lum[hy:, :hx], lum[hy:, hx:]
    ):
        hist = np.histogram(qs, bins=16, range=(0.0, 256.0))[0]
        hists.append(hist / max(qs.size, 1))
        if qs.shape[0] >= 3 and qs.shape[1] >= 3:
            gy = (qs[2:, 1:-1] - qs[:-2, 1:-1]) / 2.0
            gx = (qs[1:-1, 2:] - qs[1:-1, :-2]) / 2.0
            mag = np.clip(np.sqrt(gx * gx + gy * gy), 0.0, 255.0)
            ghist = np.histogram(mag, bins=16, range=(0.0, 256.0))[0]
            hists.append(ghist / mag.size)
        else:
            hists.append(np.zeros(16))
    feat = np.concatenate([pooled] + hists)

    out = np.zeros(spec.feature_dim)
    keep = min(feat.size, spec.feature_dim)
    out[:keep] = feat[:keep]
    return out


# -- bridge client ---------------------------------------------------------


class BridgeClient:
    """Line-oriented JSON client for an external feature extractor.

    One request line yields exactly one response line.  The executable is
    taken from ``command`` or the ``QMM3DQA_BRIDGE`` environment variable.
    """

    def __init__(self, command: str | None = None):
        cmd = command or os.environ.get(BRIDGE_ENV)
        if not cmd:
            raise BridgeError(
                f"no bridge command given and {BRIDGE_ENV} is not set"
            )
        self._proc = subprocess.Popen(
            shlex.split(cmd),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        self.feature_dim = int(self._request({"op": "hello"})["feature_dim"])

    def _request(self, payload: dict) -> dict:
        assert self._proc.stdin and self._proc.stdout
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"bridge process died: {exc}") from exc
        if not line:
            raise BridgeError("bridge closed its output stream")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"bridge sent invalid JSON: {line!r}") from exc
        if not resp.get("ok"):
            raise BridgeError(f"bridge error: {resp.get('error', 'unknown')}")
        return resp

    def features(self, png_path: str | Path) -> np.ndarray:
        resp = self._request({"op": "features", "qmm_path": str(png_path)})
        feats = np.asarray(resp["features"], dtype=np.float64)
        if feats.size != self.feature_dim:
            raise BridgeError(
                f"bridge returned {feats.size} features, advertised "
                f"{self.feature_dim}"
            )
        return feats

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class FeatureExtractor:
    """Uniform front end over the builtin and bridge extractors.

    Counts invocations (for efficiency accounting) and, for the bridge,
    caches features keyed by the SHA-256 of the image bytes.
    """

    def __init__(self, spec: FeatureExtractorSpec):
        self.spec = spec
        self.invocations = 0
        self._client: BridgeClient | None = None
        self._cache: dict[str, np.ndarray] = {}
        self._tmpdir: tempfile.TemporaryDirectory | None = None

    def extract(self, qmm: Qmm | np.ndarray) -> np.ndarray:
        self.invocations += 1
        if self.spec.kind is ExtractorKind.BUILTIN:
            return extract_features_builtin(qmm, self.spec)
        img = qmm.image if isinstance(qmm, Qmm) else np.asarray(qmm)
        key = hashlib.sha256(
            img.tobytes() + repr(img.shape).encode()
        ).hexdigest()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self._client is None:
            self._client = BridgeClient(self.spec.bridge_command)
            if self._client.feature_dim != self.spec.feature_dim:
                raise BridgeError(
                    f"bridge advertises {self._client.feature_dim} features, "
                    f"spec expects {self.spec.feature_dim}"
                )
            self._tmpdir = tempfile.TemporaryDirectory(prefix="qmm-bridge-")
        path = Path(self._tmpdir.name) / "qmm.png"
        if isinstance(qmm, Qmm):
            qmm_to_png(qmm, path)
        else:
            from PIL import Image

            Image.fromarray(np.asarray(qmm, dtype=np.uint8), "RGB").save(path)
        feats = self._client.features(path)
        self._cache[key] = feats
        return feats

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None
        if self._tmpdir is not None:
            self._tmpdir.cleanup()
            self._tmpdir = None

    def __enter__(self) -> "FeatureExtractor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- regression head -------------------------------------------------------


def regress(features: np.ndarray, state: PredictorState) -> float:
    """Raw two-stage head: W2 @ relu(W1 @ f + b1) + b2."""
    f = np.asarray(features, dtype=np.float64).ravel()
    if f.size != state.extractor.feature_dim:
        raise ShapeMismatch(
            f"feature length {f.size} != feature_dim "
            f"{state.extractor.feature_dim}"
        )
    hidden = state.w1 @ f + state.b1
    return float((state.w2 @ np.maximum(hidden, 0.0) + state.b2)[0])


def _standardize(features: np.ndarray, state: PredictorState) -> np.ndarray:
    if state.feature_offset is None:
        return features
    return (features - state.feature_offset) * state.feature_scale


def score_features(features: np.ndarray, state: PredictorState) -> float:
    """Standardize (when fitted) and run the head."""
    return regress(_standardize(np.asarray(features, np.float64), state), state)


def _forward_batch(feats: np.ndarray, state: PredictorState):
    # Divergence is detected from the loss value, not from warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        hidden = feats @ state.w1.T + state.b1
        act = np.maximum(hidden, 0.0)
        scores = act @ state.w2.T + state.b2
    return scores.ravel(), hidden, act


def _backward_batch(
    feats: np.ndarray,
    hidden: np.ndarray,
    act: np.ndarray,
    dscores: np.ndarray,
    state: PredictorState,
):
    ds = dscores[:, None]
    dw2 = ds.T @ act
    db2 = ds.sum(axis=0)
    dact = ds @ state.w2
    dhid = dact * (hidden > 0.0)
    dw1 = dhid.T @ feats
    db1 = dhid.sum(axis=0)
    return dw1, db1, dw2, db2


# -- pipeline ---------------------------------------------------------------


def render_model(path: str | Path, render_cfg: RenderConfig) -> ProjectionSet:
    """Load, normalize, and render one model file."""
    return render_projections(normalize_model(load_model(path)), render_cfg)


def render_manifest(
    manifest: DatasetManifest,
    render_cfg: RenderConfig,
    base_dir: str | Path | None = None,
    cache: dict[str, ProjectionSet] | None = None,
) -> list[ProjectionSet]:
    """Render every manifest entry once, reusing ``cache`` across calls."""
    base = Path(base_dir) if base_dir else None
    out = []
    for entry in manifest.entries:
        path = Path(entry.model_path)
        if base and not path.is_absolute():
            path = base / path
        key = str(path)
        if cache is not None and key in cache:
            out.append(cache[key])
            continue
        ps = render_model(path, render_cfg)
        if cache is not None:
            cache[key] = ps
        out.append(ps)
    return out


def predict(
    model: Model3D,
    render_cfg: RenderConfig,
    grid_spec: GridSpec,
    state: PredictorState,
    extractor: FeatureExtractor | None = None,
) -> PredictionResult:
    """Render, sample, extract, and regress one model into a score."""
    own = extractor is None
    ext = extractor or FeatureExtractor(state.extractor)
    timings: dict[str, float] = {}
    try:
        t0 = time.perf_counter()
        ps = render_projections(normalize_model(model), render_cfg)
        timings["render"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        qmm = assemble_qmm(ps, grid_spec)
        timings["sample"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        feats = ext.extract(qmm)
        timings["extract"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        score = score_features(feats, state)
        timings["regress"] = time.perf_counter() - t0
    finally:
        if own:
            ext.close()
    return PredictionResult(score=score, timings=timings)


def _epoch_features(
    projections: list[ProjectionSet],
    grid_spec: GridSpec,
    sample_seed: int,
    ext: FeatureExtractor,
) -> np.ndarray:
    feats = []
    for i, ps in enumerate(projections):
        gs = replace(grid_spec, seed=derive_seed(sample_seed, f"entry:{i}"))
        feats.append(ext.extract(assemble_qmm(ps, gs)))
    return np.asarray(feats)


def train(
    manifest: DatasetManifest,
    render_cfg: RenderConfig,
    grid_spec: GridSpec,
    state: PredictorState | None = None,
    loss_cfg: LossConfig | None = None,
    extractor: FeatureExtractor | None = None,
    base_dir: str | Path | None = None,
    projections: list[ProjectionSet] | None = None,
) -> TrainReport:
    """Mini-batch gradient descent on the head over a labeled manifest.

    Renders each entry once; mini-patch maps are resampled with a fresh
    derived seed every epoch (sampling acts as augmentation) and each
    epoch's features are extracted up front, with bridge features cached
    by map bytes.  All shuffling and sampling derives from
    ``state.train_config.seed``.

    Raises:
        EmptyManifest: no entries.
        DegenerateLabels: fewer than 2 distinct subjective scores.
        DivergedLoss: non-finite loss during training.
    """
    if len(manifest) == 0:
        raise EmptyManifest("cannot train on an empty manifest")
    labels = np.array([e.mos for e in manifest.entries])
    if np.unique(labels).size < 2:
        raise DegenerateLabels("training needs >= 2 distinct mos values")
    state = state or init_state()
    cfg = state.train_config
    loss_cfg = loss_cfg or LossConfig()
    resample = cfg.resample_epochs

    t_start = time.perf_counter()
    if projections is None:
        projections = render_manifest(manifest, render_cfg, base_dir)

    own = extractor is None
    ext = extractor or FeatureExtractor(state.extractor)
    n = len(manifest)
    epoch_stats: list[EpochStats] = []
    try:
        fixed_feats = None
        if not resample:
            fixed_feats = _epoch_features(
                projections, grid_spec, derive_seed(cfg.seed, "epoch:0"), ext
            )
        for epoch in range(1, cfg.epochs + 1):
            if resample:
                feats = _epoch_features(
                    projections, grid_spec,
                    derive_seed(cfg.seed, f"epoch:{epoch}"), ext,
                )
            else:
                feats = fixed_feats
            if epoch == 1 and cfg.standardize_features:
                sigma = feats.std(axis=0)
                scale = np.ones_like(sigma)
                np.divide(1.0, sigma, out=scale, where=sigma > 0)
                state.feature_offset = feats.mean(axis=0)
                state.feature_scale = scale
            sfeats = _standardize(feats, state)

            lr = cfg.learning_rate * cfg.decay ** ((epoch - 1) // cfg.decay_every)
            order = substream(derive_seed(cfg.seed, f"shuffle:{epoch}"), 0)
            perm = order.permutation(n)
            sums = np.zeros(3)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                batch = sfeats[idx]
                scores, hidden, act = _forward_batch(batch, state)
                loss = combined_loss(scores, labels[idx], loss_cfg)
                if not np.isfinite(loss.total):
                    raise DivergedLoss(f"non-finite loss at epoch {epoch}")
                dw1, db1, dw2, db2 = _backward_batch(
                    batch, hidden, act, loss.grad, state
                )
                state.w1 = state.w1 - lr * dw1
                state.b1 = state.b1 - lr * db1
                state.w2 = state.w2 - lr * dw2
                state.b2 = state.b2 - lr * db2
                sums += np.array([loss.total, loss.mse, loss.rank]) * idx.size
            epoch_stats.append(EpochStats(*(sums / n)))
    finally:
        if own:
            ext.close()
    return TrainReport(
        epochs=tuple(epoch_stats),
        state=state,
        wall_clock_s=time.perf_counter() - t_start,
    )


def pipeline_fitter(
    render_cfg: RenderConfig,
    grid_spec: GridSpec,
    spec: FeatureExtractorSpec | None = None,
    train_cfg: TrainConfig | None = None,
    loss_cfg: LossConfig | None = None,
    base_dir: str | Path | None = None,
    cache: dict[str, ProjectionSet] | None = None,
    extractor: FeatureExtractor | None = None,
    report_sink: list[TrainReport] | None = None,
):
    """Build a ModelFitter running the full train/predict pipeline.

    Every call to the returned fitter initializes a fresh head, trains it
    on the given manifest, and returns a per-entry scorer whose sampling
    seed derives from the grid seed and the entry's model path.  Pass a
    shared ``cache`` to render each distinct model only once across
    folds, a shared ``extractor`` to reuse one bridge process, and a
    ``report_sink`` list to collect each fold's TrainReport.
    """
    spec = spec or FeatureExtractorSpec()
    render_cache = cache if cache is not None else {}

    def fit(train_manifest: DatasetManifest):
        ext = extractor or FeatureExtractor(spec)
        state = init_state(spec, train_cfg)
        projections = render_manifest(
            train_manifest, render_cfg, base_dir, render_cache
        )
        report = train(
            train_manifest,
            render_cfg,
            grid_spec,
            state=state,
            loss_cfg=loss_cfg,
            extractor=ext,
            base_dir=base_dir,
            projections=projections,
        )
        if report_sink is not None:
            report_sink.append(report)

        def predict_entry(entry) -> float:
            ps = render_manifest(
                DatasetManifest((entry,)), render_cfg, base_dir, render_cache
            )[0]
            gs = replace(
                grid_spec,
                seed=derive_seed(grid_spec.seed, f"eval:{entry.model_path}"),
            )
            feats = ext.extract(assemble_qmm(ps, gs))
            return score_features(feats, state)

        return predict_entry

    return fit


# -- persistence -------------------------------------------------------------


def save_state(state: PredictorState, path: str | Path) -> None:
    """Write the binary weight file and its JSON sidecar (``<path>.json``)."""
    path = Path(path)
    dim = state.extractor.feature_dim
    has_norm = state.feature_offset is not None
    blob = bytearray()
    blob += STATE_MAGIC
    blob += struct.pack("<IIB", dim, HIDDEN_DIM, 1 if has_norm else 0)
    for arr in (state.w1, state.b1, state.w2, state.b2):
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    if has_norm:
        blob += np.ascontiguousarray(state.feature_offset, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(state.feature_scale, dtype="<f8").tobytes()
    path.write_bytes(bytes(blob))

    sidecar = {
        "extractor": {
            "kind": state.extractor.kind.value,
            "feature_dim": dim,
            "pooling_grid": state.extractor.pooling_grid,
            "stats": list(state.extractor.stats),
            "bridge_command": state.extractor.bridge_command,
        },
        "train_config": {
            "learning_rate": state.train_config.learning_rate,
            "decay": state.train_config.decay,
            "decay_every": state.train_config.decay_every,
            "batch_size": state.train_config.batch_size,
            "epochs": state.train_config.epochs,
            "seed": state.train_config.seed,
            "optimizer": state.train_config.optimizer,
            "standardize_features": state.train_config.standardize_features,
            "resample_epochs": state.train_config.resample_epochs,
        },
        "hidden_dim": HIDDEN_DIM,
        "normalized": has_norm,
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_state(path: str | Path) -> PredictorState:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != STATE_MAGIC:
        raise ShapeMismatch(f"{path}: bad magic {blob[:8]!r}")
    dim, hidden, has_norm = struct.unpack_from("<IIB", blob, 8)
    if hidden != HIDDEN_DIM:
        raise ShapeMismatch(f"{path}: unsupported hidden width {hidden}")
    off = 8 + struct.calcsize("<IIB")

    def block(count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).copy()
        off += count * 8
        return arr

    w1 = block(hidden * dim).reshape(hidden, dim)
    b1 = block(hidden)
    w2 = block(hidden).reshape(1, hidden)
    b2 = block(1)
    offset = scale = None
    if has_norm:
        offset = block(dim)
        scale = block(dim)

    sidecar_path = Path(str(path) + ".json")
    spec = FeatureExtractorSpec(feature_dim=dim)
    tcfg = TrainConfig()
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
        e = meta.get("extractor", {})
        spec = FeatureExtractorSpec(
            kind=ExtractorKind(e.get("kind", "builtin")),
            feature_dim=dim,
            pooling_grid=e.get("pooling_grid", 7),
            stats=tuple(e.get("stats", _STAT_NAMES)),
            bridge_command=e.get("bridge_command"),
        )
        t = meta.get("train_config", {})
        tcfg = TrainConfig(**t) if t else TrainConfig()
    return PredictorState(
        extractor=spec, w1=w1, b1=b1, w2=w2, b2=b2, train_config=tcfg,
        feature_offset=offset, feature_scale=scale,
    )
