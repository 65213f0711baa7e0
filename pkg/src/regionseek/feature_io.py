"""Binary patch-feature / descriptor-map file formats and the dataset manifest.

These formats decouple backbone inference from everything downstream: an
extractor (any language) writes ``.cft`` feature grids and ``.cdm``
descriptor maps, and this package consumes them. Both files share a fixed
little-endian layout: 4 magic bytes, five unsigned 32-bit header fields,
then a raw row-major float32 payload.

Feature rows are stored with their raw magnitudes. Loading produces two
views of the same grid: ``raw`` (exactly the file payload, used for L1
energies and bit-exact round trips) and ``data`` (rows L2-normalized,
used for all dot products). Zero rows survive normalization as zeros and
flag the grid as degenerate.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CFT_MAGIC = b"CFT1"
CDM_MAGIC = b"CDM1"
DTYPE_F32 = 0

_HEADER = struct.Struct("<5I")

# Row norms below this are treated as zero rows rather than normalized.
_ZERO_NORM_EPS = 1e-12


class FormatError(ValueError):
    """Bad magic, header, or payload length in a binary feature file."""


class ManifestError(ValueError):
    """Structurally invalid dataset manifest."""


def _normalize_rows(raw: np.ndarray) -> tuple[np.ndarray, bool]:
    norms = np.linalg.norm(raw.astype(np.float64), axis=1)
    zero = norms <= _ZERO_NORM_EPS
    safe = np.where(zero, 1.0, norms)
    unit = (raw / safe[:, None].astype(np.float32)).astype(np.float32)
    unit[zero] = 0.0
    return unit, bool(zero.any())


@dataclass
class FeatureGrid:
    """An H x W grid of D-dimensional patch features for one image.

    ``raw`` holds the rows exactly as stored on disk; ``data`` is the
    row-normalized view every similarity computation uses. ``patch_px``
    is the pixel size of the source patch (8 for an 8-px-patch backbone).
    """

    grid_h: int
    grid_w: int
    dim: int
    patch_px: int
    raw: np.ndarray
    data: np.ndarray = field(repr=False)
    has_degenerate_rows: bool = False

    @classmethod
    def from_raw(cls, raw, grid_h, grid_w, patch_px=8) -> "FeatureGrid":
        raw = np.ascontiguousarray(raw, dtype=np.float32).reshape(grid_h * grid_w, -1)
        dim = raw.shape[1]
        if grid_h < 1 or grid_w < 1 or dim < 1:
            raise ValueError("grid must have at least one patch and one channel")
        data, degenerate = _normalize_rows(raw)
        return cls(grid_h, grid_w, dim, patch_px, raw, data, degenerate)

    @property
    def n_patches(self) -> int:
        return self.grid_h * self.grid_w

    def l1_norms(self) -> np.ndarray:
        """Per-patch L1 energy of the raw (pre-normalization) rows."""
        return np.abs(self.raw.astype(np.float64)).sum(axis=1)


@dataclass
class DescriptorMap:
    """Grid of descriptor cells pooled over during feature extraction.

    ``stride_px`` is the pixel extent of one cell on the source image.
    """

    map_h: int
    map_w: int
    dim_d: int
    stride_px: int
    data: np.ndarray

    @classmethod
    def from_array(cls, data, map_h, map_w, stride_px) -> "DescriptorMap":
        data = np.ascontiguousarray(data, dtype=np.float32).reshape(map_h * map_w, -1)
        if stride_px <= 0:
            raise ValueError("stride_px must be positive")
        return cls(map_h, map_w, data.shape[1], stride_px, data)

    def cell(self, row: int, col: int) -> np.ndarray:
        return self.data[row * self.map_w + col]


def write_feature_grid(grid: FeatureGrid, path) -> None:
    """Write a grid as magic "CFT1", u32 (h, w, dim, patch_px, dtype=0), f32 payload."""
    payload = np.ascontiguousarray(grid.raw, dtype="<f4")
    if payload.size != grid.grid_h * grid.grid_w * grid.dim:
        raise ValueError("grid payload size does not match its declared shape")
    header = CFT_MAGIC + _HEADER.pack(
        grid.grid_h, grid.grid_w, grid.dim, grid.patch_px, DTYPE_F32
    )
    try:
        Path(path).write_bytes(header + payload.tobytes())
    except OSError as exc:
        raise OSError(f"failed to write feature grid to {path}: {exc}") from exc


def read_feature_grid(path) -> FeatureGrid:
    """Read a ``.cft`` file; rows are L2-normalized into the ``data`` view on load."""
    blob = Path(path).read_bytes()
    h, w, dim, patch_px = _read_header(blob, CFT_MAGIC, path)
    raw = _read_payload(blob, h * w, dim, path)
    data, degenerate = _normalize_rows(raw)
    return FeatureGrid(h, w, dim, patch_px, raw, data, degenerate)


def write_descriptor_map(dmap: DescriptorMap, path) -> None:
    """Write a map as magic "CDM1", u32 (map_h, map_w, dim_d, stride_px, dtype=0), f32 payload."""
    payload = np.ascontiguousarray(dmap.data, dtype="<f4")
    header = CDM_MAGIC + _HEADER.pack(
        dmap.map_h, dmap.map_w, dmap.dim_d, dmap.stride_px, DTYPE_F32
    )
    try:
        Path(path).write_bytes(header + payload.tobytes())
    except OSError as exc:
        raise OSError(f"failed to write descriptor map to {path}: {exc}") from exc


def read_descriptor_map(path) -> DescriptorMap:
    blob = Path(path).read_bytes()
    h, w, dim_d, stride_px = _read_header(blob, CDM_MAGIC, path)
    if stride_px <= 0:
        raise FormatError(f"{path}: stride_px must be positive, got {stride_px}")
    data = _read_payload(blob, h * w, dim_d, path)
    return DescriptorMap(h, w, dim_d, stride_px, data)


def _read_header(blob: bytes, magic: bytes, path) -> tuple[int, int, int, int]:
    if len(blob) < 4 + _HEADER.size:
        raise FormatError(f"{path}: file shorter than the {4 + _HEADER.size}-byte header")
    if blob[:4] != magic:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {magic!r}")
    a, b, c, d, dtype = _HEADER.unpack_from(blob, 4)
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if a < 1 or b < 1 or c < 1:
        raise FormatError(f"{path}: degenerate header dims ({a}, {b}, {c})")
    return a, b, c, d


def _read_payload(blob: bytes, rows: int, cols: int, path) -> np.ndarray:
    body = blob[4 + _HEADER.size:]
    expected = rows * cols * 4
    if len(body) != expected:
        raise FormatError(
            f"{path}: payload is {len(body)} bytes, header implies {expected}"
        )
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).copy()


@dataclass
class GroundTruthRecord:
    query_id: str
    bbox: tuple[float, float, float, float]
    relevant: bool = True


@dataclass
class ManifestEntry:
    image_id: str
    feature_path: str
    descriptor_path: str
    image_w_px: int
    image_h_px: int
    ground_truth: list[GroundTruthRecord] = field(default_factory=list)


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    base_dir: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, rel_path: str) -> Path:
        return self.base_dir / rel_path


def read_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse ``manifest.json``; image ids must be unique, referenced files present.

    Relative feature/descriptor paths are resolved against the manifest's
    directory. Set ``check_files=False`` to skip the existence check (e.g.
    when validating a manifest before the extractor has run).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list):
        raise ManifestError(f"{path}: top-level 'entries' list missing")

    base = path.parent
    seen: set[str] = set()
    entries = []
    for i, rec in enumerate(raw_entries):
        try:
            image_id = rec["image_id"]
            entry = ManifestEntry(
                image_id=image_id,
                feature_path=rec["feature_path"],
                descriptor_path=rec["descriptor_path"],
                image_w_px=int(rec["image_w_px"]),
                image_h_px=int(rec["image_h_px"]),
                ground_truth=[
                    GroundTruthRecord(
                        query_id=g["query_id"],
                        bbox=tuple(float(v) for v in g["bbox"]),
                        relevant=bool(g.get("relevant", True)),
                    )
                    for g in rec.get("ground_truth") or []
                ],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: entry {i} malformed: {exc}") from exc
        if image_id in seen:
            raise ManifestError(f"{path}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        if check_files:
            for p in (entry.feature_path, entry.descriptor_path):
                if not (base / p).exists():
                    raise ManifestError(
                        f"{path}: entry {image_id!r} references missing file {p}"
                    )
        entries.append(entry)
    return DatasetManifest(entries, base)


def write_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "entries": [
            {
                "image_id": e.image_id,
                "feature_path": e.feature_path,
                "descriptor_path": e.descriptor_path,
                "image_w_px": e.image_w_px,
                "image_h_px": e.image_h_px,
                "ground_truth": [
                    {"query_id": g.query_id, "bbox": list(g.bbox), "relevant": g.relevant}
                    for g in e.ground_truth
                ],
            }
            for e in manifest.entries
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
