"""Grid mini-patch sampling: split views into grids, sample raw-resolution
mini-patches, and splice one quality mini-patch map.

Each projection is partitioned into an L x L grid of cells with integer
boundaries ``floor(i * R / L)``.  A cell is *blank* when its foreground
mask coverage falls below ``blank_threshold``; blank cells are never
sampled while non-blank ones remain.  Each of the first ``num_views``
views contributes ``floor(L^2 / num_views)`` uniformly chosen non-blank
cells (without replacement); the remaining slots are filled by extra
draws from the last used view.  If a view runs short, its deficit moves
round-robin to the following views.  Within every selected cell a
patch_px-square sub-window is copied verbatim at an offset drawn
uniformly from the valid range, and the collected patches are placed
into the output canvas by a seeded random slot permutation.

Randomness: view ``k`` owns Philox substream ``k`` of the grid seed
(cell permutation first, then one (dy, dx) pair per sampled patch); the
slot permutation owns substream 0.  Per-view maps derive an independent
seed per view.  Identical inputs therefore reproduce bit-identical maps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import AllViewsBlank, CellTooSmall, ConfigMismatch
from .projector import NUM_VIEWS, ProjectionSet
from .rng import derive_seed, substream


@dataclass(frozen=True)
class GridSpec:
    """Sampling configuration: grid side, patch size, views, seed, blank cutoff."""

    grid: int = 7
    patch_px: int = 32
    num_views: int = 6
    seed: int = 0
    blank_threshold: float = 0.05

    def __post_init__(self) -> None:
        if self.grid < 3:
            raise ValueError("grid side must be >= 3")
        if not 1 <= self.num_views <= NUM_VIEWS:
            raise ValueError("num_views must be in 1..6")
        if not 0.0 <= self.blank_threshold < 1.0:
            raise ValueError("blank_threshold must be in [0, 1)")
        if self.patch_px < 1:
            raise ValueError("patch_px must be >= 1")

    @property
    def slots(self) -> int:
        return self.grid * self.grid

    @property
    def quota(self) -> int:
        """Per-view patch count floor(L^2 / num_views)."""
        return self.slots // self.num_views

    @property
    def map_px(self) -> int:
        return self.grid * self.patch_px


@dataclass(frozen=True)
class Cell:
    """One grid cell of a view: pixel rect [r0, r1) x [c0, c1) and coverage."""

    view: int
    row: int
    col: int
    r0: int
    r1: int
    c0: int
    c1: int
    coverage: float

    @property
    def height(self) -> int:
        return self.r1 - self.r0

    @property
    def width(self) -> int:
        return self.c1 - self.c0


@dataclass(frozen=True)
class PatchRef:
    """Provenance of one QMM slot: source cell and sub-window offset."""

    view: int
    row: int
    col: int
    dy: int
    dx: int


@dataclass(frozen=True)
class MiniPatch:
    pixels: np.ndarray  # (P, P, 3) uint8
    dy: int
    dx: int


@dataclass(frozen=True)
class Qmm:
    """Spliced quality mini-patch map plus per-slot sampling provenance.

    ``provenance[s]`` describes the row-major slot ``(s // grid,
    s % grid)``; ``None`` marks a background-filled slot (no non-blank
    cell was left to sample).
    """

    image: np.ndarray  # (grid*patch_px, grid*patch_px, 3) uint8
    grid: int
    patch_px: int
    seed: int
    provenance: tuple[PatchRef | None, ...]

    def __post_init__(self) -> None:
        self.image.flags.writeable = False

    def counts_per_view(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for ref in self.provenance:
            if ref is not None:
                counts[ref.view] = counts.get(ref.view, 0) + 1
        return counts


def grid_bounds(extent: int, grid: int) -> list[int]:
    """Integer grid boundaries floor(i * extent / grid), i = 0..grid."""
    return [i * extent // grid for i in range(grid + 1)]


def build_grid(ps: ProjectionSet, gs: GridSpec) -> list[list[Cell]]:
    """Partition every view into L x L cells with mask coverage.

    Returns one row-major cell list per view (all six views).  Cells
    tile each raster exactly.

    Raises:
        ConfigMismatch: when grid * patch_px exceeds the resolution.
    """
    res = ps.resolution
    if gs.map_px > res:
        raise ConfigMismatch(
            f"grid {gs.grid} x patch {gs.patch_px} = {gs.map_px} px "
            f"exceeds projection resolution {res}"
        )
    bounds = grid_bounds(res, gs.grid)
    per_view: list[list[Cell]] = []
    for k in range(1, NUM_VIEWS + 1):
        mask = ps.masks[k - 1]
        cells = []
        for i in range(gs.grid):
            r0, r1 = bounds[i], bounds[i + 1]
            for j in range(gs.grid):
                c0, c1 = bounds[j], bounds[j + 1]
                cov = float(mask[r0:r1, c0:c1].mean())
                cells.append(Cell(k, i, j, r0, r1, c0, c1, cov))
        per_view.append(cells)
    return per_view


def sample_minipatch(
    cell: Cell, image: np.ndarray, gs: GridSpec, rng: np.random.Generator
) -> MiniPatch:
    """Copy one patch_px-square sub-window of ``cell`` at a random offset.

    The offset is drawn uniformly from the valid range (dy first, then
    dx); pixels are copied verbatim with no rescaling.
    """
    p = gs.patch_px
    if cell.height < p or cell.width < p:
        raise CellTooSmall(
            f"cell {cell.height}x{cell.width} smaller than patch {p}"
        )
    dy = int(rng.integers(0, cell.height - p + 1))
    dx = int(rng.integers(0, cell.width - p + 1))
    pixels = image[cell.r0 + dy:cell.r0 + dy + p,
                   cell.c0 + dx:cell.c0 + dx + p].copy()
    return MiniPatch(pixels, dy, dx)


def assemble_qmm(ps: ProjectionSet, gs: GridSpec) -> Qmm:
    """Sample mini-patches from views 1..num_views and splice one map.

    Raises:
        AllViewsBlank: when no used view has a single non-blank cell.
    """
    cells = build_grid(ps, gs)
    n = gs.num_views
    targets = [gs.quota] * n
    targets[n - 1] += gs.slots - n * gs.quota
    candidates = [
        [c for c in cells[k - 1] if c.coverage >= gs.blank_threshold]
        for k in range(1, n + 1)
    ]
    if not any(candidates):
        raise AllViewsBlank("every used view is fully blank")
    rngs = {k: substream(gs.seed, k) for k in range(1, n + 1)}
    slot_rng = substream(gs.seed, 0)
    return _splice(ps, gs, list(range(1, n + 1)), targets, candidates,
                   rngs, slot_rng)


def assemble_per_view_maps(ps: ProjectionSet, gs: GridSpec) -> tuple[Qmm, ...]:
    """One single-view map per view, L^2 patches each from that view alone.

    A view without non-blank cells yields a fully background-filled map
    (every provenance entry None).
    """
    cells = build_grid(ps, gs)
    maps = []
    for v in range(1, NUM_VIEWS + 1):
        seed_v = derive_seed(gs.seed, f"per-view:{v}")
        cand = [c for c in cells[v - 1] if c.coverage >= gs.blank_threshold]
        maps.append(
            _splice(ps, gs, [v], [gs.slots], [cand],
                    {v: substream(seed_v, v)}, substream(seed_v, 0))
        )
    return tuple(maps)


def _splice(
    ps: ProjectionSet,
    gs: GridSpec,
    view_ids: list[int],
    targets: list[int],
    candidates: list[list[Cell]],
    rngs: dict[int, np.random.Generator],
    slot_rng: np.random.Generator,
) -> Qmm:
    picked: list[tuple[int, Cell]] = []
    ordered: dict[int, list[Cell]] = {}
    cursor_pos: dict[int, int] = {}
    shortfalls: list[tuple[int, int]] = []
    for k, target, cand in zip(view_ids, targets, candidates):
        perm = rngs[k].permutation(len(cand)) if cand else []
        ordered[k] = [cand[j] for j in perm]
        take = min(target, len(ordered[k]))
        picked.extend((k, c) for c in ordered[k][:take])
        cursor_pos[k] = take
        if take < target:
            shortfalls.append((k, target - take))

    # Deficits move round-robin to the views after the one that ran short.
    nv = len(view_ids)
    pos = {k: i for i, k in enumerate(view_ids)}
    blanks = 0
    for k, deficit in shortfalls:
        cursor = pos[k]
        for _ in range(deficit):
            taken = False
            for step in range(1, nv + 1):
                j = view_ids[(cursor + step) % nv]
                if cursor_pos[j] < len(ordered[j]):
                    picked.append((j, ordered[j][cursor_pos[j]]))
                    cursor_pos[j] += 1
                    cursor = pos[j]
                    taken = True
                    break
            if not taken:
                blanks += 1

    # Sub-window offsets, drawn from each source view's own substream in
    # pick order.
    items: list[tuple[PatchRef, np.ndarray] | None] = []
    for k, cell in picked:
        mp = sample_minipatch(cell, ps.images[k - 1], gs, rngs[k])
        items.append((PatchRef(k, cell.row, cell.col, mp.dy, mp.dx), mp.pixels))
    items.extend([None] * blanks)

    p, grid = gs.patch_px, gs.grid
    canvas = np.empty((grid * p, grid * p, 3), dtype=np.uint8)
    canvas[:] = np.asarray(ps.background, dtype=np.uint8)
    provenance: list[PatchRef | None] = [None] * gs.slots
    perm = slot_rng.permutation(gs.slots)
    for i, item in enumerate(items):
        s = int(perm[i])
        if item is None:
            continue
        ref, pixels = item
        r, c = (s // grid) * p, (s % grid) * p
        canvas[r:r + p, c:c + p] = pixels
        provenance[s] = ref
    return Qmm(canvas, grid, gs.patch_px, gs.seed, tuple(provenance))


def patch_source_window(
    ps: ProjectionSet, grid: int, ref: PatchRef, patch_px: int
) -> np.ndarray:
    """The source pixels a provenance entry points at (for verification)."""
    bounds = grid_bounds(ps.resolution, grid)
    r0 = bounds[ref.row] + ref.dy
    c0 = bounds[ref.col] + ref.dx
    return ps.images[ref.view - 1][r0:r0 + patch_px, c0:c0 + patch_px]


def qmm_to_png(qmm: Qmm, path: str | Path) -> None:
    Image.fromarray(qmm.image, mode="RGB").save(Path(path))


def provenance_to_dict(qmm: Qmm) -> dict:
    slots = []
    for s, ref in enumerate(qmm.provenance):
        if ref is None:
            slots.append({"slot": s, "blank": True})
        else:
            slots.append({
                "slot": s,
                "view": ref.view,
                "row": ref.row,
                "col": ref.col,
                "offset": [ref.dy, ref.dx],
            })
    return {
        "grid": qmm.grid,
        "patch_px": qmm.patch_px,
        "seed": qmm.seed,
        "slots": slots,
    }


def provenance_to_json(qmm: Qmm, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(provenance_to_dict(qmm), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
