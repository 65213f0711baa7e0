"""Exhaustive descriptor index with per-image ranking and localization.

Every emitted region contributes one unit-norm row. A query is scored by
dot product against all rows (vectors are unit-norm, so dot ordering
equals cosine ordering); an image's score is the maximum over its rows
and its localization is the box of that best row. Images tie-break by
ascending image_id, and the image-retrieval mode (rank images by where
they first appear in the region-level ranking) provably reduces to the
same ordering.

On disk the index is a fixed little-endian binary (magic "CIX1") plus a
JSON sidecar mapping image ordinals back to image ids.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pooling import RegionDescriptor

CIX_MAGIC = b"CIX1"

_COUNTS = struct.Struct("<2I")


class IndexBuildError(ValueError):
    """Inconsistent inputs while assembling an index."""


@dataclass
class DescriptorIndex:
    """Immutable row store: (image ordinal, region id, bbox, unit vector)."""

    dim_d: int
    image_ids: list[str]
    image_ord: np.ndarray
    region_ids: np.ndarray
    bboxes: np.ndarray
    vectors: np.ndarray

    @property
    def row_count(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def image_count(self) -> int:
        return len(self.image_ids)


@dataclass
class ResultEntry:
    image_id: str
    score: float
    region_id: int
    bbox: tuple[float, float, float, float]


@dataclass
class RankedResult:
    entries: list[ResultEntry] = field(default_factory=list)

    def image_ids(self) -> list[str]:
        return [e.image_id for e in self.entries]


def build_index(manifest, hierarchies, descriptors) -> DescriptorIndex:
    """Assemble the index from per-image hierarchies and pooled descriptors.

    ``hierarchies`` and ``descriptors`` map image_id to a Hierarchy and
    its list of RegionDescriptors. Every emitted region must have a
    descriptor; degenerate descriptors are dropped. Rows keep manifest
    order, then per-image emission order.
    """
    image_ids: list[str] = []
    ords: list[int] = []
    regions: list[int] = []
    boxes: list[tuple] = []
    vecs: list[np.ndarray] = []
    dim_d = None

    for entry in manifest:
        image_id = entry.image_id
        hier = hierarchies[image_id]
        descs: list[RegionDescriptor] = descriptors[image_id]
        by_region = {d.region_id: d for d in descs}
        missing = [nid for nid in hier.emitted if nid not in by_region]
        if missing:
            raise IndexBuildError(
                f"image {image_id!r}: emitted regions {missing} have no descriptor"
            )
        ordinal = len(image_ids)
        image_ids.append(image_id)
        for nid in hier.emitted:
            d = by_region[nid]
            if d.degenerate:
                continue
            if dim_d is None:
                dim_d = int(d.vector.shape[0])
            elif d.vector.shape[0] != dim_d:
                raise IndexBuildError(
                    f"image {image_id!r} region {nid}: descriptor dim "
                    f"{d.vector.shape[0]} != index dim {dim_d}"
                )
            vec = np.asarray(d.vector, dtype=np.float32)
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if abs(norm - 1.0) > 1e-3:
                raise IndexBuildError(
                    f"image {image_id!r} region {nid}: descriptor norm {norm:.6f}, "
                    "expected unit length"
                )
            ords.append(ordinal)
            regions.append(nid)
            boxes.append(tuple(float(v) for v in d.bbox))
            vecs.append(vec)

    if dim_d is None:
        dim_d = 0
    return DescriptorIndex(
        dim_d=dim_d,
        image_ids=image_ids,
        image_ord=np.asarray(ords, dtype=np.uint32),
        region_ids=np.asarray(regions, dtype=np.uint32),
        bboxes=np.asarray(boxes, dtype=np.float32).reshape(len(vecs), 4),
        vectors=(
            np.stack(vecs) if vecs else np.zeros((0, dim_d), dtype=np.float32)
        ),
    )


def save_index(index: DescriptorIndex, path) -> None:
    """Write ``.cix`` rows plus a ``<path>.json`` sidecar with the id table."""
    path = Path(path)
    parts = [CIX_MAGIC, _COUNTS.pack(index.dim_d, index.row_count)]
    for i in range(index.row_count):
        parts.append(struct.pack("<2I", int(index.image_ord[i]), int(index.region_ids[i])))
        parts.append(np.ascontiguousarray(index.bboxes[i], dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(index.vectors[i], dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))
    sidecar = {
        "dim_d": index.dim_d,
        "row_count": index.row_count,
        "image_ids": index.image_ids,
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, separators=(",", ":")) + "\n"
    )


def load_index(path) -> DescriptorIndex:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != CIX_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    dim_d, row_count = _COUNTS.unpack_from(blob, 4)
    row_bytes = 8 + 16 + 4 * dim_d
    expected = 4 + _COUNTS.size + row_count * row_bytes
    if len(blob) != expected:
        raise ValueError(f"{path}: file is {len(blob)} bytes, expected {expected}")
    sidecar = json.loads(Path(str(path) + ".json").read_text())

    ords = np.zeros(row_count, dtype=np.uint32)
    regions = np.zeros(row_count, dtype=np.uint32)
    boxes = np.zeros((row_count, 4), dtype=np.float32)
    vecs = np.zeros((row_count, dim_d), dtype=np.float32)
    off = 4 + _COUNTS.size
    for i in range(row_count):
        ords[i], regions[i] = struct.unpack_from("<2I", blob, off)
        off += 8
        boxes[i] = np.frombuffer(blob, dtype="<f4", count=4, offset=off)
        off += 16
        vecs[i] = np.frombuffer(blob, dtype="<f4", count=dim_d, offset=off)
        off += 4 * dim_d
    return DescriptorIndex(
        dim_d=dim_d,
        image_ids=list(sidecar["image_ids"]),
        image_ord=ords,
        region_ids=regions,
        bboxes=boxes,
        vectors=vecs,
    )


def _row_scores(index: DescriptorIndex, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape[0] != index.dim_d:
        raise ValueError(f"query dim {q.shape[0]} != index dim {index.dim_d}")
    return index.vectors.astype(np.float64) @ q


def search(index: DescriptorIndex, query, k: int = 10) -> RankedResult:
    """Rank images by their best region's dot product with the query.

    Exhaustive scoring. Ordering: score descending, then image_id
    ascending; within one image the best region is the highest-scoring
    row, earliest insertion winning ties.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    qvec = query.vector if isinstance(query, RegionDescriptor) else query
    if index.row_count == 0:
        return RankedResult([])
    scores = _row_scores(index, qvec)

    best_row: dict[int, int] = {}
    for row in range(index.row_count):
        ordn = int(index.image_ord[row])
        if ordn not in best_row or scores[row] > scores[best_row[ordn]]:
            best_row[ordn] = row
    ranked = sorted(
        best_row.values(), key=lambda r: (-scores[r], index.image_ids[int(index.image_ord[r])])
    )
    return RankedResult(
        [
            ResultEntry(
                image_id=index.image_ids[int(index.image_ord[r])],
                score=float(scores[r]),
                region_id=int(index.region_ids[r]),
                bbox=tuple(float(v) for v in index.bboxes[r]),
            )
            for r in ranked[:k]
        ]
    )


def image_retrieval_rank(index: DescriptorIndex, query, k: int = 10) -> RankedResult:
    """Order images by first appearance in the full region-level ranking.

    Equivalent to :func:`search` (per-image max aggregation); exposed as
    a named mode so the retrieval protocol is explicit.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    qvec = query.vector if isinstance(query, RegionDescriptor) else query
    if index.row_count == 0:
        return RankedResult([])
    scores = _row_scores(index, qvec)
    order = sorted(
        range(index.row_count),
        key=lambda r: (-scores[r], index.image_ids[int(index.image_ord[r])], r),
    )
    seen: set[int] = set()
    entries = []
    for r in order:
        ordn = int(index.image_ord[r])
        if ordn in seen:
            continue
        seen.add(ordn)
        entries.append(
            ResultEntry(
                image_id=index.image_ids[ordn],
                score=float(scores[r]),
                region_id=int(index.region_ids[r]),
                bbox=tuple(float(v) for v in index.bboxes[r]),
            )
        )
        if len(entries) == k:
            break
    return RankedResult(entries)


def write_results_jsonl(path, results: dict[str, RankedResult]) -> None:
    """One line per (query, rank): {query_id, rank, image_id, score, bbox}."""
    lines = []
    for query_id in sorted(results):
        for rank, e in enumerate(results[query_id].entries, start=1):
            lines.append(
                json.dumps(
                    {
                        "query_id": query_id,
                        "rank": rank,
                        "image_id": e.image_id,
                        "score": e.score,
                        "region_id": e.region_id,
                        "bbox": list(e.bbox),
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_results_jsonl(path) -> dict[str, RankedResult]:
    ranked: dict[str, list[tuple[int, ResultEntry]]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        ranked.setdefault(rec["query_id"], []).append(
            (
                int(rec["rank"]),
                ResultEntry(
                    image_id=rec["image_id"],
                    score=rec["score"],
                    region_id=rec.get("region_id", 0),
                    bbox=tuple(rec["bbox"]),
                ),
            )
        )
    return {
        qid: RankedResult([e for _, e in sorted(rows, key=lambda t: t[0])])
        for qid, rows in ranked.items()
    }
