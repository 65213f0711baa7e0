"""Top-down region hierarchy: repeated bisecting with spatial splitting.

Starting from the full patch set, each worklist node is scored against
the high-energy set (computed once per image) and its own internal
connectivity. A node is emitted as a region unless it is the root, too
small, or a dummy (low high-energy overlap); it is bisected further
unless it is already compact. Both bisection halves are broken into
4-connected components on the patch grid, and every component becomes a
child node. Dummy nodes are never emitted but still split, so salient
descendants of a mixed region are recovered.

The worklist is FIFO, node ids are assigned in creation order, and all
randomness is derived from the configured seed, so a decomposition is
fully deterministic.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .affinity import (
    AffinityParams,
    SubsetStats,
    _connectivity_from_degrees,
    _seeds_from_degrees,
    affinity_edges,
    dummy_score,
    high_energy_mask,
)
from .feature_io import FeatureGrid
from .ksums import KsumsParams, bisect, mix_seed

# A node can only be bisected into two sides of at least this size.
MIN_BISECT_SIZE = 2

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class DecomposeParams:
    """Thresholds and safety limits for one decomposition.

    ``tau1`` stops splitting once a node's internal connectivity reaches
    it; ``tau2`` marks nodes with at most that high-energy overlap as
    dummies (set to -1 to disable the dummy filter entirely).
    """

    tau1: float = 0.97
    tau2: float = 0.2
    min_region_patches: int = 4
    max_nodes: int = 256
    connectivity: int = 4
    affinity: AffinityParams = field(default_factory=AffinityParams)
    ksums: KsumsParams = field(default_factory=KsumsParams)

    def __post_init__(self):
        if not 0.0 < self.tau1 <= 1.0:
            raise ValueError(f"tau1 must be in (0, 1], got {self.tau1}")
        if not -1.0 <= self.tau2 < 1.0:
            raise ValueError(f"tau2 must be in [-1, 1), got {self.tau2}")
        if self.min_region_patches < 1:
            raise ValueError("min_region_patches must be >= 1")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass
class RegionNode:
    id: int
    members: np.ndarray
    mask: np.ndarray
    parent: int | None
    depth: int
    stats: SubsetStats | None = None
    children: list[int] = field(default_factory=list)
    is_dummy: bool = False
    is_emitted: bool = False

    @property
    def size(self) -> int:
        return int(self.members.size)


@dataclass
class Hierarchy:
    nodes: dict[int, RegionNode]
    root: int
    emitted: list[int]
    cut_count: int
    grid_h: int
    grid_w: int
    patch_px: int
    truncated: bool = False

    def emitted_nodes(self):
        return [self.nodes[i] for i in self.emitted]


def members_to_mask(members, grid_h: int, grid_w: int) -> np.ndarray:
    mask = np.zeros(grid_h * grid_w, dtype=bool)
    mask[np.asarray(members, dtype=np.intp)] = True
    return mask.reshape(grid_h, grid_w)


def get_objects(members, grid_h: int, grid_w: int, connectivity: int = 4):
    """Split a patch set into spatially connected components.

    Returns a list of sorted flat-index arrays, ordered by descending
    size then by lowest member index. Components are disjoint and their
    union is the input set.
    """
    members = np.asarray(sorted(members), dtype=np.intp)
    if members.size == 0:
        return []
    mask = members_to_mask(members, grid_h, grid_w)
    structure = _FOUR_CONNECTED if connectivity == 4 else np.ones((3, 3), dtype=bool)
    labels, n_comp = ndimage.label(mask, structure=structure)
    flat = labels.reshape(-1)
    comps = [np.flatnonzero(flat == lab) for lab in range(1, n_comp + 1)]
    comps.sort(key=lambda c: (-c.size, int(c[0])))
    return comps


def node_bbox(node: RegionNode, patch_px: int, image_w: int, image_h: int):
    """Tight pixel box (x0, y0, x1, y1) over a node's patch cells."""
    rows, cols = np.nonzero(node.mask)
    if rows.size == 0:
        raise ValueError("node has no members")
    x0 = int(cols.min()) * patch_px
    y0 = int(rows.min()) * patch_px
    x1 = (int(cols.max()) + 1) * patch_px
    y1 = (int(rows.max()) + 1) * patch_px
    return (max(0, x0), max(0, y0), min(image_w, x1), min(image_h, y1))


def decompose(grid: FeatureGrid, params: DecomposeParams | None = None) -> Hierarchy:
    """Run the full hierarchical decomposition of one feature grid."""
    params = params or DecomposeParams()
    h_mask = high_energy_mask(grid, params.affinity)
    gh, gw = grid.grid_h, grid.grid_w

    root_members = np.arange(grid.n_patches, dtype=np.intp)
    root = RegionNode(
        id=0,
        members=root_members,
        mask=members_to_mask(root_members, gh, gw),
        parent=None,
        depth=0,
    )
    nodes = {0: root}
    emitted: list[int] = []
    cut_count = 0
    truncated = False
    next_id = 1

    worklist: deque[int] = deque([0])
    while worklist:
        node = nodes[worklist.popleft()]
        n = node.size
        if n == 1:
            degrees = np.zeros(1, dtype=np.int64)
        else:
            degrees = affinity_edges(grid, node.members, params.affinity)
        c_total, c_bar = _connectivity_from_degrees(degrees)
        xi = dummy_score(node.members, h_mask)
        node.stats = SubsetStats(degree=None, c_total=c_total, c_bar=c_bar, xi=xi)

        is_root = node.id == 0
        node.is_dummy = is_root or xi <= params.tau2
        node.is_emitted = (
            not is_root and xi > params.tau2 and n >= params.min_region_patches
        )
        if node.is_emitted:
            emitted.append(node.id)

        if c_bar >= params.tau1 or n < 2 * MIN_BISECT_SIZE:
            continue
        if len(nodes) + 2 > params.max_nodes:
            truncated = True
            continue

        seeds = None
        kp = replace(params.ksums, rng_seed=mix_seed(params.ksums.rng_seed, node.id))
        if kp.init_mode == "seeded":
            seeds = _seeds_from_degrees(
                node.members, degrees, params.affinity.seeds_follow_prose
            )
        split = bisect(grid, node.members, seeds=seeds, params=kp)

        children = []
        for half in (split.members_b, split.members_w):
            children.extend(get_objects(half, gh, gw, params.connectivity))
        if len(nodes) + len(children) > params.max_nodes:
            truncated = True
            continue

        cut_count += 1
        for comp in children:
            child = RegionNode(
                id=next_id,
                members=comp,
                mask=members_to_mask(comp, gh, gw),
                parent=node.id,
                depth=node.depth + 1,
            )
            nodes[next_id] = child
            node.children.append(next_id)
            worklist.append(next_id)
            next_id += 1

    return Hierarchy(
        nodes=nodes,
        root=0,
        emitted=emitted,
        cut_count=cut_count,
        grid_h=gh,
        grid_w=gw,
        patch_px=grid.patch_px,
        truncated=truncated,
    )


def _mask_to_rle(mask: np.ndarray) -> list[list[int]]:
    rows = []
    for row in mask:
        runs = []
        padded = np.diff(np.concatenate(([0], row.astype(np.int8), [0])))
        starts = np.flatnonzero(padded == 1)
        ends = np.flatnonzero(padded == -1)
        for s, e in zip(starts, ends):
            runs.extend([int(s), int(e - s)])
        rows.append(runs)
    return rows


def _rle_to_mask(rows: list[list[int]], grid_w: int) -> np.ndarray:
    mask = np.zeros((len(rows), grid_w), dtype=bool)
    for r, runs in enumerate(rows):
        for s, length in zip(runs[::2], runs[1::2]):
            mask[r, s : s + length] = True
    return mask


def hierarchy_to_dict(hier: Hierarchy, image_id: str = "") -> dict:
    nodes = []
    for nid in sorted(hier.nodes):
        node = hier.nodes[nid]
        stats = node.stats
        nodes.append(
            {
                "id": node.id,
                "parent": node.parent,
                "children": list(node.children),
                "depth": node.depth,
                "size": node.size,
                "is_dummy": node.is_dummy,
                "is_emitted": node.is_emitted,
                "stats": {
                    "c_total": stats.c_total if stats else 0,
                    "c_bar": stats.c_bar if stats else 0.0,
                    "xi": stats.xi if stats else 0.0,
                },
                "mask_rle": _mask_to_rle(node.mask),
            }
        )
    return {
        "image_id": image_id,
        "grid_h": hier.grid_h,
        "grid_w": hier.grid_w,
        "patch_px": hier.patch_px,
        "root": hier.root,
        "cut_count": hier.cut_count,
        "truncated": hier.truncated,
        "emitted": list(hier.emitted),
        "nodes": nodes,
    }


def hierarchy_from_dict(doc: dict) -> Hierarchy:
    gh, gw = doc["grid_h"], doc["grid_w"]
    nodes = {}
    for rec in doc["nodes"]:
        mask = _rle_to_mask(rec["mask_rle"], gw)
        members = np.flatnonzero(mask.reshape(-1))
        nodes[rec["id"]] = RegionNode(
            id=rec["id"],
            members=members,
            mask=mask,
            parent=rec["parent"],
            depth=rec["depth"],
            stats=SubsetStats(
                degree=None,
                c_total=rec["stats"]["c_total"],
                c_bar=rec["stats"]["c_bar"],
                xi=rec["stats"]["xi"],
            ),
            children=list(rec["children"]),
            is_dummy=rec["is_dummy"],
            is_emitted=rec["is_emitted"],
        )
    return Hierarchy(
        nodes=nodes,
        root=doc["root"],
        emitted=list(doc["emitted"]),
        cut_count=doc["cut_count"],
        grid_h=gh,
        grid_w=gw,
        patch_px=doc["patch_px"],
        truncated=doc.get("truncated", False),
    )


def save_hierarchy(hier: Hierarchy, path, image_id: str = "") -> None:
    doc = hierarchy_to_dict(hier, image_id)
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_hierarchy(path) -> Hierarchy:
    return hierarchy_from_dict(json.loads(Path(path).read_text()))
