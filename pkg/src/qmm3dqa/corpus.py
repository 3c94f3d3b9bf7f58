"""Synthetic desk-scale corpus: colored point-cloud contents corrupted by
additive color noise and point decimation at monotone strengths.

The corpus exists so the full pipeline (training, cross validation,
benchmarks) can be exercised without licensed databases.  Contents are
four bump-modulated spheres with distinct lobe patterns and color
orientations: geometrically disjoint sources drawn from one statistical
family, the way a rated database holds different objects of one kind.
Each level applies noise and decimation together and the assigned score
decreases linearly with the level.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model_io import DatasetManifest, ManifestEntry, Model3D, ModelKind, write_ply
from .rng import derive_seed, substream

# (angular frequencies, bump amplitude, phase, color-axis roll) per content
SHAPE_PARAMS = {
    "blobA": (3, 2, 0.25, 0.0, 0),
    "blobB": (5, 3, 0.20, 1.0, 1),
    "blobC": (2, 4, 0.30, 2.0, 2),
    "blobD": (4, 5, 0.15, 0.5, 1),
    "blobE": (6, 2, 0.22, 1.5, 0),
    "blobF": (3, 5, 0.28, 2.5, 2),
}
SHAPE_NAMES = tuple(SHAPE_PARAMS)

NOISE_SIGMA_MAX = 120.0  # color noise at the worst level
DECIMATION_KEEP_MIN = 0.6  # fraction of points kept at the worst level


def make_shape(name: str, points: int, seed: int) -> Model3D:
    """Sample one bump-modulated sphere with a smooth color ramp."""
    f1, f2, amp, phase, roll = SHAPE_PARAMS[name]
    rng = substream(seed, 0)
    v = rng.normal(size=(points, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    theta = np.arctan2(v[:, 1], v[:, 0])
    phi = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    radius = 0.5 * (1.0 + amp * np.sin(f1 * theta + phase) * np.cos(f2 * phi))
    pos = v * radius[:, None]
    # Position-based ramp, axes rolled per content so palettes differ.
    p = (pos - pos.min(0)) / (pos.max(0) - pos.min(0) + 1e-12)
    ramp = np.roll(p, roll, axis=1)
    colors = np.clip(np.rint(80.0 + 120.0 * ramp), 0, 255).astype(np.uint8)
    return Model3D(ModelKind.POINT_CLOUD, pos, colors, np.empty((0, 3), np.int64))


def add_color_noise(
    model: Model3D, sigma: float, rng: np.random.Generator
) -> Model3D:
    """Additive Gaussian noise on the vertex colors, clipped to [0, 255]."""
    if sigma <= 0:
        return model
    noisy = model.colors.astype(np.float64) + rng.normal(
        scale=sigma, size=model.colors.shape
    )
    colors = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    return Model3D(model.kind, model.positions, colors, model.faces)


def decimate_points(
    model: Model3D, keep_fraction: float, rng: np.random.Generator
) -> Model3D:
    """Keep a uniformly chosen fraction of points (point clouds only)."""
    if model.kind is not ModelKind.POINT_CLOUD or keep_fraction >= 1.0:
        return model
    n = model.num_vertices
    keep = max(1, int(round(n * keep_fraction)))
    idx = np.sort(rng.permutation(n)[:keep])
    return Model3D(
        model.kind, model.positions[idx], model.colors[idx],
        np.empty((0, 3), np.int64),
    )


def corrupt(model: Model3D, level: int, levels: int, seed: int) -> Model3D:
    """Apply the level's noise and decimation; level 0 is pristine."""
    frac = level / max(levels - 1, 1)
    sigma = NOISE_SIGMA_MAX * frac
    keep = 1.0 - (1.0 - DECIMATION_KEEP_MIN) * frac
    out = add_color_noise(model, sigma, substream(seed, 1))
    return decimate_points(out, keep, substream(seed, 2))


def make_corpus(
    out_dir: str | Path,
    contents: int = 4,
    levels: int = 6,
    points: int = 3000,
    seed: int = 0,
) -> Path:
    """Write a contents x levels PLY corpus plus manifest; returns its path.

    Scores decrease linearly from 5 to 1 with the distortion level.
    """
    if not 1 <= contents <= len(SHAPE_NAMES):
        raise ValueError(f"contents must be in 1..{len(SHAPE_NAMES)}")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in SHAPE_NAMES[:contents]:
        base = make_shape(name, points, derive_seed(seed, f"shape:{name}"))
        for level in range(levels):
            distorted = corrupt(
                base, level, levels, derive_seed(seed, f"corrupt:{name}:{level}")
            )
            fname = f"{name}_l{level}.ply"
            write_ply(distorted, out_dir / fname)
            mos = 5.0 - 4.0 * level / (levels - 1)
            entries.append(
                ManifestEntry(
                    model_path=fname,
                    content_id=name,
                    distortion=f"noise+decimate:{level}",
                    mos=mos,
                )
            )
    manifest_path = out_dir / "manifest.json"
    records = [
        {
            "model_path": e.model_path,
            "content_id": e.content_id,
            "distortion": e.distortion,
            "mos": e.mos,
        }
        for e in entries
    ]
    manifest_path.write_text(
        json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path


def corpus_manifest(out_dir: str | Path) -> DatasetManifest:
    from .model_io import load_manifest

    return load_manifest(Path(out_dir) / "manifest.json")
