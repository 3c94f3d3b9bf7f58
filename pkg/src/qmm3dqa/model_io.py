"""Loading, validation, and normalization of 3D models and dataset manifests.

Supported model formats:

* PLY (``.ply``), ascii or binary little-endian, loaded as a point cloud.
  The vertex element must carry float ``x, y, z``; ``red, green, blue``
  uchar properties are used when present, otherwise vertices default to
  mid-gray.  Unrecognized scalar properties are skipped.
* OBJ (``.obj``), loaded as a triangle mesh.  Vertex lines may carry an
  optional ``r g b`` color triple in [0, 1]; faces are 1-based and
  fan-triangulated on load.  An OBJ without any face line degrades to a
  point cloud.

Manifests are flat JSON arrays of
``{"model_path", "content_id", "distortion", "mos"}`` records.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateModel,
    EmptyModel,
    MissingField,
    NonFiniteMos,
    ParseError,
    UnsupportedFormat,
)

GRAY = (128, 128, 128)

# PLY scalar type -> (numpy type char, byte size)
_PLY_SCALARS = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


class ModelKind(enum.Enum):
    POINT_CLOUD = "point_cloud"
    TRIANGLE_MESH = "triangle_mesh"


@dataclass(frozen=True)
class Model3D:
    """An immutable colored point cloud or triangle mesh.

    Attributes:
        kind: point cloud or triangle mesh.
        positions: (N, 3) float64 vertex coordinates in model units.
        colors: (N, 3) uint8 RGB, one triple per vertex.
        faces: (M, 3) int64 vertex-index triples; empty for point clouds.
    """

    kind: ModelKind
    positions: np.ndarray
    colors: np.ndarray
    faces: np.ndarray

    def __post_init__(self) -> None:
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        col = np.ascontiguousarray(self.colors, dtype=np.uint8)
        fac = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] == 0:
            raise EmptyModel("model has no vertices")
        if col.shape != pos.shape:
            raise ParseError(
                f"color count {col.shape[0]} != vertex count {pos.shape[0]}"
            )
        if self.kind is ModelKind.POINT_CLOUD:
            if fac.size:
                raise ParseError("point cloud carries faces")
        else:
            if not fac.size:
                raise ParseError("triangle mesh carries no faces")
            if fac.min() < 0 or fac.max() >= pos.shape[0]:
                raise ParseError("face index out of range")
        for arr, name in ((pos, "positions"), (col, "colors"), (fac, "faces")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_vertices(self) -> int:
        return self.positions.shape[0]

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box as (min, max) corners."""
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass(frozen=True)
class ManifestEntry:
    model_path: str
    content_id: str
    distortion: str
    mos: float


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered list of labeled models; order is preserved on load."""

    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def content_ids(self) -> list[str]:
        """Distinct content ids in first-appearance order."""
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.content_id, None)
        return list(seen)

    def subset(self, indices: list[int]) -> "DatasetManifest":
        return DatasetManifest(tuple(self.entries[i] for i in indices))


# -- model loading ------------------------------------------------------


def load_model(path: str | Path) -> Model3D:
    """Load and validate a model file by extension (.ply or .obj)."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    ext = path.suffix.lower()
    if ext == ".ply":
        return _load_ply(path)
    if ext == ".obj":
        return _load_obj(path)
    raise UnsupportedFormat(f"unsupported model format: {ext or '(none)'}")


def _load_ply(path: Path) -> Model3D:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(f"{path}: not a PLY file")
    header = data[: end + 11].decode("ascii", errors="replace")
    body = data[end + 11:]

    fmt = None
    count = 0
    props: list[tuple[str, str]] = []  # (type, name) of the vertex element
    in_vertex = False
    for line in header.splitlines():
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info", "end_header"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise UnsupportedFormat(f"{path}: PLY format {tok[1:2]} not supported")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) < 3:
                raise ParseError(f"{path}: malformed element line")
            if tok[1] == "vertex":
                in_vertex = True
                count = int(tok[2])
            else:
                if tok[1] == "face" and int(tok[2]) > 0:
                    raise UnsupportedFormat(
                        f"{path}: PLY meshes are not supported (use OBJ)"
                    )
                in_vertex = False
        elif tok[0] == "property" and in_vertex:
            if tok[1] == "list":
                raise ParseError(f"{path}: list property in vertex element")
            if tok[1] not in _PLY_SCALARS:
                raise ParseError(f"{path}: unknown property type {tok[1]!r}")
            props.append((tok[1], tok[2]))
    if fmt is None:
        raise ParseError(f"{path}: missing format line")
    names = [n for _, n in props]
    if not {"x", "y", "z"} <= set(names):
        raise ParseError(f"{path}: vertex element lacks x/y/z")
    if count == 0:
        raise EmptyModel(f"{path}: zero vertices")

    if fmt == "ascii":
        rows = _ply_ascii_rows(path, body, count, len(props))
    else:
        rows = _ply_binary_rows(path, body, count, props)

    xyz = np.column_stack([rows[:, names.index(a)] for a in "xyz"])
    if {"red", "green", "blue"} <= set(names):
        rgb = np.column_stack(
            [rows[:, names.index(c)] for c in ("red", "green", "blue")]
        )
        rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    else:
        rgb = np.full((count, 3), GRAY[0], dtype=np.uint8)
    return Model3D(ModelKind.POINT_CLOUD, xyz, rgb, np.empty((0, 3), np.int64))


def _ply_ascii_rows(path: Path, body: bytes, count: int, width: int) -> np.ndarray:
    lines = [ln for ln in body.decode("ascii", errors="replace").splitlines()
             if ln.strip()]
    if len(lines) < count:
        raise ParseError(
            f"{path}: header declares {count} vertices, found {len(lines)} records"
        )
    rows = np.empty((count, width), dtype=np.float64)
    for i in range(count):
        tok = lines[i].split()
        if len(tok) < width:
            raise ParseError(f"{path}: vertex record {i} has {len(tok)} fields")
        try:
            rows[i] = [float(t) for t in tok[:width]]
        except ValueError as exc:
            raise ParseError(f"{path}: vertex record {i}: {exc}") from exc
    return rows


def _ply_binary_rows(
    path: Path, body: bytes, count: int, props: list[tuple[str, str]]
) -> np.ndarray:
    dtype = np.dtype([
        (f"f{i}", "<" + _PLY_SCALARS[t][0]) for i, (t, _) in enumerate(props)
    ])
    if len(body) < count * dtype.itemsize:
        raise ParseError(
            f"{path}: header declares {count} vertices, body holds "
            f"{len(body) // dtype.itemsize} records"
        )
    data = np.frombuffer(body, dtype=dtype, count=count)
    rows = np.empty((count, len(props)), dtype=np.float64)
    for i in range(len(props)):
        rows[:, i] = data[f"f{i}"]
    return rows


def _load_obj(path: Path) -> Model3D:
    positions: list[list[float]] = []
    colors: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "v":
                if len(tok) not in (4, 7):
                    raise ParseError(f"{path}:{lineno}: vertex needs 3 or 6 values")
                try:
                    vals = [float(t) for t in tok[1:]]
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from exc
                positions.append(vals[:3])
                colors.append(vals[3:6] if len(vals) == 6 else [])
            elif tok[0] == "f":
                idx = []
                for ref in tok[1:]:
                    head = ref.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise ParseError(f"{path}:{lineno}: bad face index") from exc
                    if i <= 0:
                        raise ParseError(
                            f"{path}:{lineno}: only positive 1-based indices supported"
                        )
                    idx.append(i - 1)
                if len(idx) < 3:
                    raise ParseError(f"{path}:{lineno}: face with <3 vertices")
                for a, b in zip(idx[1:], idx[2:]):
                    faces.append((idx[0], a, b))
            # vt/vn/usemtl/mtllib/o/g/s lines carry no supported data
    if not positions:
        raise EmptyModel(f"{path}: no vertices")
    pos = np.asarray(positions, dtype=np.float64)
    rgb = np.full((len(positions), 3), GRAY[0], dtype=np.uint8)
    for i, c in enumerate(colors):
        if c:
            rgb[i] = np.clip(np.rint(np.asarray(c) * 255.0), 0, 255)
    if faces:
        fac = np.asarray(faces, dtype=np.int64)
        if fac.max() >= pos.shape[0]:
            raise ParseError(f"{path}: face index {fac.max() + 1} out of range")
        return Model3D(ModelKind.TRIANGLE_MESH, pos, rgb, fac)
    return Model3D(ModelKind.POINT_CLOUD, pos, rgb, np.empty((0, 3), np.int64))


def write_ply(model: Model3D, path: str | Path) -> None:
    """Write positions and colors as ascii PLY.

    Coordinates are printed with shortest round-trip precision, so
    reloading reproduces them exactly.  Faces are not serialized.
    """
    path = Path(path)
    n = model.num_vertices
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    pos, col = model.positions, model.colors
    for i in range(n):
        x, y, z = (float(v) for v in pos[i])
        r, g, b = (int(v) for v in col[i])
        lines.append(f"{x!r} {y!r} {z!r} {r} {g} {b}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


# -- normalization ------------------------------------------------------


def normalize_model(model: Model3D) -> Model3D:
    """Isotropically map the model into the unit cube centered at origin.

    After normalization the AABB center is the origin and the longest
    AABB edge equals 1.  Idempotent; colors and faces are unchanged.

    Raises:
        DegenerateModel: if all points coincide.
    """
    lo, hi = model.aabb()
    extent = float((hi - lo).max())
    if extent == 0.0:
        raise DegenerateModel("all points coincide; zero bounding box")
    center = (lo + hi) / 2.0
    pos = (model.positions - center) / extent
    return Model3D(model.kind, pos, model.colors, model.faces)


# -- manifests ----------------------------------------------------------

_MANIFEST_FIELDS = ("model_path", "content_id", "distortion", "mos")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a JSON manifest; entry order is preserved."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: manifest must be a JSON array")
    entries = []
    for i, rec in enumerate(raw):
        if not isinstance(rec, dict):
            raise ParseError(f"{path}: entry {i} is not an object")
        for f in _MANIFEST_FIELDS:
            if f not in rec:
                raise MissingField(f"{path}: entry {i} missing {f!r}")
        if not isinstance(rec["content_id"], str) or not rec["content_id"]:
            raise ParseError(f"{path}: entry {i}: content_id must be nonempty")
        mos = rec["mos"]
        if not isinstance(mos, (int, float)) or isinstance(mos, bool) \
                or not math.isfinite(mos):
            raise NonFiniteMos(f"{path}: entry {i}: mos not finite")
        entries.append(
            ManifestEntry(
                model_path=str(rec["model_path"]),
                content_id=rec["content_id"],
                distortion=str(rec["distortion"]),
                mos=float(mos),
            )
        )
    return DatasetManifest(tuple(entries))


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    records = [
        {
            "model_path": e.model_path,
            "content_id": e.content_id,
            "distortion": e.distortion,
            "mos": e.mos,
        }
        for e in manifest.entries
    ]
    Path(path).write_text(
        json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
