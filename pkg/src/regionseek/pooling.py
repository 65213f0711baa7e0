"""Region and query descriptors pooled from a descriptor map.

A region's patch mask (or a query's pixel box) is projected onto the
descriptor map by exact pixel-rectangle overlap: a map cell participates
when at least half of its area lies under the footprint, falling back to
the single best-overlapping cell so every region pools at least one
cell. Participating cells are mean-pooled per channel and the result is
L2-normalized; an all-zero pooled vector is flagged degenerate instead
of normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_io import DescriptorMap

POOL_METHODS = ("mean", "max")


@dataclass
class RegionDescriptor:
    image_id: str
    region_id: int
    vector: np.ndarray
    bbox: tuple[float, float, float, float]
    patch_count: int
    degenerate: bool = False


def _interval_overlap(n_a: int, step_a: float, n_b: int, step_b: float) -> np.ndarray:
    """O[i, j] = length of [i*step_a, (i+1)*step_a) ∩ [j*step_b, (j+1)*step_b)."""
    a0 = np.arange(n_a, dtype=np.float64)[:, None] * step_a
    b0 = np.arange(n_b, dtype=np.float64)[None, :] * step_b
    lo = np.maximum(a0, b0)
    hi = np.minimum(a0 + step_a, b0 + step_b)
    return np.clip(hi - lo, 0.0, None)


def _rect_overlap_1d(n_cells: int, stride: float, lo: float, hi: float) -> np.ndarray:
    c0 = np.arange(n_cells, dtype=np.float64) * stride
    return np.clip(np.minimum(c0 + stride, hi) - np.maximum(c0, lo), 0.0, None)


def _participating(areas: np.ndarray, cell_area: float) -> np.ndarray:
    """Cells covered by >= 50% of their area, else the single best cell."""
    keep = areas >= 0.5 * cell_area
    if not keep.any():
        best = int(np.argmax(areas))
        if areas.reshape(-1)[best] <= 0.0:
            raise ValueError("footprint does not overlap the descriptor map")
        keep = np.zeros_like(keep)
        keep.reshape(-1)[best] = True
    return keep


def _finish(pooled: np.ndarray, image_id, region_id, bbox, count, method) -> RegionDescriptor:
    norm = float(np.linalg.norm(pooled))
    if norm <= 1e-12:
        vec = np.zeros_like(pooled, dtype=np.float32)
        return RegionDescriptor(image_id, region_id, vec, bbox, count, degenerate=True)
    return RegionDescriptor(
        image_id, region_id, (pooled / norm).astype(np.float32), bbox, count
    )


def pool_region(
    dmap: DescriptorMap,
    mask: np.ndarray,
    patch_px: int,
    image_id: str = "",
    region_id: int = 0,
    bbox=None,
    method: str = "mean",
) -> RegionDescriptor:
    """Pool one descriptor over the map cells under a patch mask."""
    if method not in POOL_METHODS:
        raise ValueError(f"method must be one of {POOL_METHODS}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask must select at least one patch")
    gh, gw = mask.shape

    # cell-vs-footprint overlap areas via separable 1D overlaps:
    # areas = O_rows @ mask @ O_cols^T
    o_rows = _interval_overlap(dmap.map_h, dmap.stride_px, gh, patch_px)
    o_cols = _interval_overlap(dmap.map_w, dmap.stride_px, gw, patch_px)
    areas = o_rows @ mask.astype(np.float64) @ o_cols.T
    keep = _participating(areas, float(dmap.stride_px) ** 2)

    cells = dmap.data.reshape(dmap.map_h, dmap.map_w, dmap.dim_d)[keep]
    pooled = _pool(cells, method)
    if bbox is None:
        rows, cols = np.nonzero(mask)
        bbox = (
            float(cols.min() * patch_px),
            float(rows.min() * patch_px),
            float((cols.max() + 1) * patch_px),
            float((rows.max() + 1) * patch_px),
        )
    return _finish(pooled, image_id, region_id, tuple(bbox), int(keep.sum()), method)


def pool_query(
    dmap: DescriptorMap,
    query_bbox,
    image_id: str = "",
    method: str = "mean",
) -> RegionDescriptor:
    """Pool one descriptor over the map cells under a pixel box."""
    if method not in POOL_METHODS:
        raise ValueError(f"method must be one of {POOL_METHODS}")
    x0, y0, x1, y1 = (float(v) for v in query_bbox)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"query bbox has no area: {query_bbox}")

    ox = _rect_overlap_1d(dmap.map_w, dmap.stride_px, x0, x1)
    oy = _rect_overlap_1d(dmap.map_h, dmap.stride_px, y0, y1)
    areas = oy[:, None] * ox[None, :]
    keep = _participating(areas, float(dmap.stride_px) ** 2)

    cells = dmap.data.reshape(dmap.map_h, dmap.map_w, dmap.dim_d)[keep]
    pooled = _pool(cells, method)
    return _finish(pooled, image_id, -1, (x0, y0, x1, y1), int(keep.sum()), method)


def _pool(cells: np.ndarray, method: str) -> np.ndarray:
    cells = cells.astype(np.float64)
    if method == "max":
        return cells.max(axis=0)
    return cells.mean(axis=0)
