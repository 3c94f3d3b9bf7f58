import numpy as np
import pytest

from qmm3dqa.model_io import Model3D, ModelKind
from qmm3dqa.projector import NUM_VIEWS, ProjectionSet
from qmm3dqa.rng import substream


def make_projection_set(
    resolution: int = 224,
    masks: np.ndarray | None = None,
    seed: int = 7,
    background=(255, 255, 255),
) -> ProjectionSet:
    """Synthetic six-view set with pseudo-random foreground pixels."""
    rng = substream(seed, 99)
    images = rng.integers(
        0, 255, size=(NUM_VIEWS, resolution, resolution, 3), dtype=np.uint8
    )
    if masks is None:
        masks = np.ones((NUM_VIEWS, resolution, resolution), dtype=bool)
    images = images.copy()
    images[~masks] = np.asarray(background, dtype=np.uint8)
    return ProjectionSet(images, masks.copy(), (0.0,) * NUM_VIEWS, background)


def make_point_cloud(n: int = 500, seed: int = 3) -> Model3D:
    rng = substream(seed, 0)
    pos = rng.uniform(-0.5, 0.5, size=(n, 3))
    col = rng.integers(0, 256, size=(n, 3), dtype=np.int64).astype(np.uint8)
    return Model3D(ModelKind.POINT_CLOUD, pos, col, np.empty((0, 3), np.int64))


def make_cube_mesh(face_colors=None) -> Model3D:
    """Axis-aligned unit cube; each face carries one uniform color."""
    if face_colors is None:
        face_colors = [
            (255, 0, 0), (0, 255, 0), (0, 0, 255),
            (255, 255, 0), (255, 0, 255), (0, 255, 255),
        ]
    # Face order matches the view order: +X, -X, +Y, -Y, +Z, -Z.
    quads = {
        0: [(+0.5, -0.5, -0.5), (+0.5, +0.5, -0.5), (+0.5, +0.5, +0.5), (+0.5, -0.5, +0.5)],
        1: [(-0.5, -0.5, -0.5), (-0.5, +0.5, -0.5), (-0.5, +0.5, +0.5), (-0.5, -0.5, +0.5)],
        2: [(-0.5, +0.5, -0.5), (+0.5, +0.5, -0.5), (+0.5, +0.5, +0.5), (-0.5, +0.5, +0.5)],
        3: [(-0.5, -0.5, -0.5), (+0.5, -0.5, -0.5), (+0.5, -0.5, +0.5), (-0.5, -0.5, +0.5)],
        4: [(-0.5, -0.5, +0.5), (+0.5, -0.5, +0.5), (+0.5, +0.5, +0.5), (-0.5, +0.5, +0.5)],
        5: [(-0.5, -0.5, -0.5), (+0.5, -0.5, -0.5), (+0.5, +0.5, -0.5), (-0.5, +0.5, -0.5)],
    }
    positions = []
    colors = []
    faces = []
    for f in range(6):
        base = len(positions)
        positions.extend(quads[f])
        colors.extend([face_colors[f]] * 4)
        faces.append((base, base + 1, base + 2))
        faces.append((base, base + 2, base + 3))
    return Model3D(
        ModelKind.TRIANGLE_MESH,
        np.asarray(positions, dtype=np.float64),
        np.asarray(colors, dtype=np.uint8),
        np.asarray(faces, dtype=np.int64),
    )


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """2 contents x 3 levels, small clouds: cheap pipeline smoke data."""
    from qmm3dqa.corpus import make_corpus
    from qmm3dqa.model_io import load_manifest

    out = tmp_path_factory.mktemp("corpus")
    manifest_path = make_corpus(out, contents=2, levels=5, points=600, seed=11)
    return load_manifest(manifest_path), out
