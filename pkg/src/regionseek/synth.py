"""Synthetic feature corpora with planted, recoverable instance regions.

Each generated image is a patch grid holding a low-energy background and
a few high-energy rectangular blobs. Within one image the background and
blob prototype directions are exactly orthogonal (QR of a random
matrix), blob rows carry large magnitudes so they land in the
high-energy set, and per-cell noise is small enough that every
similarity threshold outcome is forced. Some images nest a small "logo"
blob inside a larger object blob to exercise multi-scale recovery.

The generator also writes matching descriptor maps, a manifest with
ground truth, a query list (one planted blob in exactly one image per
query), and a truth file recording every planted mask, so end-to-end
behavior is checkable against construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .feature_io import (
    DatasetManifest,
    DescriptorMap,
    FeatureGrid,
    GroundTruthRecord,
    ManifestEntry,
    write_descriptor_map,
    write_feature_grid,
    write_manifest,
)

BLOB_MAGNITUDE = 4.0
BACKGROUND_MAGNITUDE = 0.5
# noise levels are the L2 norm of the perturbation, not a per-coordinate sigma
FEATURE_NOISE = 0.1
DESCRIPTOR_NOISE = 0.02


@dataclass
class SynthParams:
    n_images: int = 50
    grid_h: int = 20
    grid_w: int = 16
    dim: int = 64
    dim_d: int = 64
    patch_px: int = 8
    stride_px: int = 8
    min_blobs: int = 2
    max_blobs: int = 4
    min_blob_side: int = 3
    max_blob_side: int = 6
    # every image index < n_nested gets a logo planted inside its first blob
    n_nested: int = 10
    n_queries: int = 20

    def __post_init__(self):
        if self.min_blobs < 1 or self.max_blobs < self.min_blobs:
            raise ValueError("need 1 <= min_blobs <= max_blobs")
        if not 2 <= self.min_blob_side <= self.max_blob_side:
            raise ValueError("need 2 <= min_blob_side <= max_blob_side")
        if self.n_nested > self.n_images:
            raise ValueError("n_nested cannot exceed n_images")


@dataclass
class PlantedRegion:
    label: str
    rect: tuple[int, int, int, int]  # (r0, c0, r1, c1), half-open patch cells
    kind: str  # "blob" | "object" | "logo"
    descriptor_prototype: np.ndarray | None = None

    def mask(self, grid_h: int, grid_w: int) -> np.ndarray:
        m = np.zeros((grid_h, grid_w), dtype=bool)
        r0, c0, r1, c1 = self.rect
        m[r0:r1, c0:c1] = True
        return m

    def bbox_px(self, patch_px: int) -> tuple[float, float, float, float]:
        r0, c0, r1, c1 = self.rect
        return (
            float(c0 * patch_px),
            float(r0 * patch_px),
            float(c1 * patch_px),
            float(r1 * patch_px),
        )


@dataclass
class SynthImage:
    image_id: str
    grid: FeatureGrid
    dmap: DescriptorMap
    planted: list[PlantedRegion] = field(default_factory=list)


def _sample_rects(rng, grid_h, grid_w, n_blobs, nested, lo_side=3, hi_side=6):
    """Non-touching blob rectangles, one cell clear of the borders.

    Retries until the blobs cover 16-26% of the grid: blob cells then all
    fall inside the top-30% energy set while the background's overlap
    with it stays at most (0.30-0.16)/(1-0.16) ~ 0.17, safely below the
    default dummy threshold.
    """
    total = grid_h * grid_w
    for _ in range(400):
        rects = []
        for _ in range(n_blobs):
            h = int(rng.integers(lo_side, hi_side + 1))
            w = int(rng.integers(lo_side, hi_side + 1))
            for _ in range(80):
                r0 = int(rng.integers(1, grid_h - h))
                c0 = int(rng.integers(1, grid_w - w))
                cand = (r0, c0, r0 + h, c0 + w)
                if all(not _expanded_overlap(cand, r) for r in rects):
                    rects.append(cand)
                    break
        if len(rects) != n_blobs:
            continue
        if nested and (rects[0][2] - rects[0][0] < 5 or rects[0][3] - rects[0][1] < 5):
            continue
        cover = sum((r1 - r0) * (c1 - c0) for r0, c0, r1, c1 in rects) / total
        if 0.16 <= cover <= 0.26:
            return rects
    raise RuntimeError("could not place blobs; grid too small for the requested count")


def _expanded_overlap(a, b) -> bool:
    # one-cell margin so blobs are never 4- or 8-adjacent
    ar0, ac0, ar1, ac1 = a
    br0, bc0, br1, bc1 = b
    return not (ar1 + 1 <= br0 or br1 + 1 <= ar0 or ac1 + 1 <= bc0 or bc1 + 1 <= ac0)


def _logo_rect(rng, rect):
    r0, c0, r1, c1 = rect
    h = r1 - r0
    w = c1 - c0
    lh = int(rng.integers(2, h - 2)) if h > 4 else 2
    lw = int(rng.integers(2, w - 2)) if w > 4 else 2
    lr = r0 + 1 + int(rng.integers(0, h - lh - 1))
    lc = c0 + 1 + int(rng.integers(0, w - lw - 1))
    return (lr, lc, lr + lh, lc + lw)


def _orthonormal(rng, dim, count) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, count)))
    return q.T.copy()


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _noisy_directions(proto: np.ndarray, count: int, sigma: float, rng) -> np.ndarray:
    """Unit rows near ``proto``: each perturbed by a random vector of norm sigma."""
    g = rng.standard_normal((count, proto.shape[0]))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    d = proto[None, :] + sigma * g
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def make_image(
    image_id: str,
    params: SynthParams,
    rng: np.random.Generator,
    nested: bool = False,
    n_blobs: int | None = None,
) -> SynthImage:
    """Generate one synthetic image: feature grid, descriptor map, truth."""
    gh, gw = params.grid_h, params.grid_w
    if n_blobs is None:
        n_blobs = int(rng.integers(params.min_blobs, params.max_blobs + 1))
    rects = _sample_rects(
        rng, gh, gw, n_blobs, nested, params.min_blob_side, params.max_blob_side
    )

    planted = []
    for i, rect in enumerate(rects):
        kind = "object" if (nested and i == 0) else "blob"
        planted.append(PlantedRegion(label=f"{kind}-{i}", rect=rect, kind=kind))
    if nested:
        planted.append(
            PlantedRegion(label="logo-0", rect=_logo_rect(rng, rects[0]), kind="logo")
        )

    # per-image exactly-orthogonal feature prototypes: background + regions
    protos = _orthonormal(rng, params.dim, len(planted) + 1)
    bg_proto, region_protos = protos[0], protos[1:]

    raw = np.zeros((gh * gw, params.dim), dtype=np.float64)
    mags = BACKGROUND_MAGNITUDE * (1.0 + 0.1 * rng.random(gh * gw))
    raw[:] = _noisy_directions(bg_proto, gh * gw, FEATURE_NOISE, rng) * mags[:, None]

    owner = np.full(gh * gw, -1, dtype=np.int64)
    for i, region in enumerate(planted):
        owner[region.mask(gh, gw).reshape(-1)] = i  # logo overrides its object
    for i, region in enumerate(planted):
        cells = np.flatnonzero(owner == i)
        d = _noisy_directions(region_protos[i], cells.size, FEATURE_NOISE, rng)
        raw[cells] = d * (BLOB_MAGNITUDE * (1.0 + 0.05 * rng.random(cells.size)))[:, None]

    grid = FeatureGrid.from_raw(raw.astype(np.float32), gh, gw, params.patch_px)

    # descriptor map: same cell layout scaled to stride_px, fresh prototypes
    if (gh * params.patch_px) % params.stride_px or (gw * params.patch_px) % params.stride_px:
        raise ValueError("stride_px must evenly divide the image extent")
    mh = gh * params.patch_px // params.stride_px
    mw = gw * params.patch_px // params.stride_px
    scale_r = mh / gh
    scale_c = mw / gw
    bg_desc = _unit(rng.standard_normal(params.dim_d))
    desc = np.tile(bg_desc, (mh * mw, 1))
    for region in planted:
        proto = _unit(rng.standard_normal(params.dim_d))
        region.descriptor_prototype = proto
    cell_owner = owner.reshape(gh, gw)
    for mr in range(mh):
        for mc in range(mw):
            o = cell_owner[int(mr / scale_r), int(mc / scale_c)]
            if o >= 0:
                desc[mr * mw + mc] = planted[o].descriptor_prototype
    jitter = rng.standard_normal(desc.shape)
    jitter /= np.linalg.norm(jitter, axis=1, keepdims=True)
    desc = desc + DESCRIPTOR_NOISE * jitter
    dmap = DescriptorMap.from_array(
        desc.astype(np.float32), mh, mw, params.stride_px
    )
    return SynthImage(image_id=image_id, grid=grid, dmap=dmap, planted=planted)


def make_corpus(params: SynthParams | None = None, seed: int = 0) -> list[SynthImage]:
    """All corpus images, in id order, deterministically from one seed."""
    params = params or SynthParams()
    images = []
    for i in range(params.n_images):
        rng = np.random.Generator(np.random.PCG64([seed, i]))
        images.append(
            make_image(f"img{i:04d}", params, rng, nested=i < params.n_nested)
        )
    return images


def select_queries(images: list[SynthImage], n_queries: int, seed: int = 0):
    """Pick planted blobs from distinct images as verbatim-instance queries."""
    rng = np.random.Generator(np.random.PCG64([seed, 999983]))
    order = rng.permutation(len(images))
    queries = []
    for pos in order:
        img = images[pos]
        if not img.planted:
            continue
        pick = img.planted[int(rng.integers(0, len(img.planted)))]
        queries.append(
            {
                "query_id": f"q{len(queries):03d}",
                "image_id": img.image_id,
                "bbox": list(pick.bbox_px(img.grid.patch_px)),
                "label": pick.label,
            }
        )
        if len(queries) == n_queries:
            break
    if len(queries) < n_queries:
        raise ValueError(f"corpus too small for {n_queries} queries")
    return queries


def write_corpus(out_dir, params: SynthParams | None = None, seed: int = 0) -> DatasetManifest:
    """Materialize a corpus: .cft/.cdm files, manifest, queries, truth."""
    params = params or SynthParams()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = make_corpus(params, seed)
    queries = select_queries(images, params.n_queries, seed)
    gt_by_image: dict[str, list[GroundTruthRecord]] = {}
    for q in queries:
        gt_by_image.setdefault(q["image_id"], []).append(
            GroundTruthRecord(query_id=q["query_id"], bbox=tuple(q["bbox"]), relevant=True)
        )

    entries = []
    truth = {}
    for img in images:
        fpath = f"{img.image_id}.cft"
        dpath = f"{img.image_id}.cdm"
        write_feature_grid(img.grid, out / fpath)
        write_descriptor_map(img.dmap, out / dpath)
        entries.append(
            ManifestEntry(
                image_id=img.image_id,
                feature_path=fpath,
                descriptor_path=dpath,
                image_w_px=img.grid.grid_w * img.grid.patch_px,
                image_h_px=img.grid.grid_h * img.grid.patch_px,
                ground_truth=gt_by_image.get(img.image_id, []),
            )
        )
        truth[img.image_id] = [
            {
                "label": r.label,
                "kind": r.kind,
                "rect": list(r.rect),
                "bbox": list(r.bbox_px(img.grid.patch_px)),
            }
            for r in img.planted
        ]

    manifest = DatasetManifest(entries, out)
    write_manifest(manifest, out / "manifest.json")
    (out / "queries.json").write_text(
        json.dumps({"queries": queries}, indent=2, sort_keys=True) + "\n"
    )
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return manifest


def make_timing_grid(
    grid_h: int = 60, grid_w: int = 45, dim: int = 768, seed: int = 7
) -> FeatureGrid:
    """A large heterogeneous grid for throughput measurement.

    Four orthogonal background textures in quadrants plus scattered
    high-energy blobs give the decomposition real work at every level.
    """
    rng = np.random.Generator(np.random.PCG64([seed, 60, 45]))
    # scale 8 blobs to ~20% cover on any grid size
    side = int(round(np.sqrt(0.2 * grid_h * grid_w / 8)))
    params = SynthParams(
        n_images=1, grid_h=grid_h, grid_w=grid_w, dim=dim, dim_d=8,
        min_blobs=8, max_blobs=8,
        min_blob_side=max(2, side - 1), max_blob_side=side + 1, n_nested=0,
    )
    img = make_image("timing", params, rng, nested=False, n_blobs=8)
    raw = img.grid.raw.astype(np.float64).copy()

    quads = _orthonormal(rng, dim, 4)
    half_r, half_c = grid_h // 2, grid_w // 2
    owner = np.zeros((grid_h, grid_w), dtype=np.int64)
    owner[:half_r, half_c:] = 1
    owner[half_r:, :half_c] = 2
    owner[half_r:, half_c:] = 3
    flat_owner = owner.reshape(-1)
    energies = np.abs(raw).sum(axis=1)
    bg_cells = np.flatnonzero(energies < energies.mean())  # keep blob rows intact
    for quad in range(4):
        cells = bg_cells[flat_owner[bg_cells] == quad]
        d = _noisy_directions(quads[quad], cells.size, FEATURE_NOISE, rng)
        raw[cells] = d * BACKGROUND_MAGNITUDE
    return FeatureGrid.from_raw(raw.astype(np.float32), grid_h, grid_w, 8)
