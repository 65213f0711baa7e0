"""Thresholded affinity statistics over patch subsets.

Two unit-normalized patch features count as connected when their dot
product strictly exceeds ``alpha``. All statistics here (per-member
degrees, edge counts, average internal connectivity, bisection seeds)
are defined on that binary structure restricted to the subset at hand,
so they are recomputed per subset rather than cached globally.

The adjacency matrix is never materialized for large subsets; degrees
and edge counts come from blocked dot-product passes. Similarities are
computed in float64 regardless of the stored feature dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_io import FeatureGrid

_BLOCK = 256


@dataclass
class AffinityParams:
    """Similarity threshold and high-energy fraction.

    ``seeds_follow_prose`` swaps the roles of the min- and max-degree
    patches in seed selection; the default follows the argmin/argmax
    convention used everywhere else in this package.
    """

    alpha: float = 0.2
    theta_fraction: float = 0.30
    seeds_follow_prose: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if not 0.0 < self.theta_fraction <= 1.0:
            raise ValueError(
                f"theta_fraction must be in (0, 1], got {self.theta_fraction}"
            )


@dataclass
class SubsetStats:
    """Affinity statistics of one patch subset.

    ``c_total`` is the number of edges within the subset, ``c_bar`` the
    edge density in [0, 1] (1 by convention for singletons), and ``xi``
    the fraction of the subset lying in the high-energy set.
    """

    degree: np.ndarray | None
    c_total: int
    c_bar: float
    xi: float


def _unit_features(grid) -> np.ndarray:
    if isinstance(grid, FeatureGrid):
        return grid.data
    return np.asarray(grid)


def _subset_array(subset, n_total: int) -> np.ndarray:
    idx = np.asarray(sorted(subset), dtype=np.intp)
    if idx.size == 0:
        raise ValueError("subset must be nonempty")
    if idx[0] < 0 or idx[-1] >= n_total:
        raise IndexError(f"subset indices out of range [0, {n_total})")
    if np.unique(idx).size != idx.size:
        raise ValueError("subset contains duplicate indices")
    return idx


def affinity_edges(grid, subset, params: AffinityParams) -> np.ndarray:
    """Per-member degree within ``subset``: |{j != i : x_i . x_j > alpha}|.

    Self-pairs are excluded. Returned degrees are aligned with the
    subset's indices in ascending order.
    """
    feats = _unit_features(grid)
    idx = _subset_array(subset, feats.shape[0])
    sub = feats[idx].astype(np.float64)
    n = sub.shape[0]
    degrees = np.zeros(n, dtype=np.int64)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        sims = sub[start:stop] @ sub.T
        hits = sims > params.alpha
        # drop the diagonal self-similarities of this block
        rows = np.arange(start, stop)
        hits[np.arange(stop - start), rows] = False
        degrees[start:stop] = hits.sum(axis=1)
    return degrees


def connectivity(grid, subset, params: AffinityParams) -> tuple[int, float]:
    """Edge count and average internal connectivity 2c / (n(n-1)).

    A singleton subset is maximally compact by convention: (0, 1.0).
    """
    idx = _subset_array(subset, _unit_features(grid).shape[0])
    if idx.size == 1:
        return 0, 1.0
    degrees = affinity_edges(grid, idx, params)
    return _connectivity_from_degrees(degrees)


def _connectivity_from_degrees(degrees: np.ndarray) -> tuple[int, float]:
    n = degrees.shape[0]
    if n == 1:
        return 0, 1.0
    c_total = int(degrees.sum()) // 2
    return c_total, 2.0 * c_total / (n * (n - 1))


def select_seeds(grid, subset, params: AffinityParams) -> tuple[int, int]:
    """Pick the minimum- and maximum-degree patches as bisection seeds.

    Returns original patch indices (seed_b, seed_w), always distinct.
    Ties break toward the lowest patch index; the max-degree search
    never considers the patch already chosen as seed_b.
    """
    feats = _unit_features(grid)
    idx = _subset_array(subset, feats.shape[0])
    if idx.size < 2:
        raise ValueError("seed selection needs at least two patches")
    degrees = affinity_edges(grid, idx, params)
    return _seeds_from_degrees(idx, degrees, params.seeds_follow_prose)


def _seeds_from_degrees(idx, degrees, follow_prose: bool = False) -> tuple[int, int]:
    b_pos = int(np.argmin(degrees))  # argmin/argmax pick the first (lowest index) tie
    rest = np.arange(idx.size) != b_pos
    rest_pos = np.flatnonzero(rest)
    w_pos = int(rest_pos[np.argmax(degrees[rest_pos])])
    if follow_prose:
        b_pos, w_pos = w_pos, b_pos
    return int(idx[b_pos]), int(idx[w_pos])


def high_energy_set(grid: FeatureGrid, params: AffinityParams) -> np.ndarray:
    """Indices of the top ceil(theta * N) patches by raw-feature L1 norm.

    Computed once per image over the full grid. Ties at the cutoff go to
    the lower patch index. The result is sorted ascending.
    """
    energies = grid.l1_norms()
    n = energies.shape[0]
    count = int(np.ceil(params.theta_fraction * n))
    # stable sort on -energy keeps equal-energy patches in index order
    order = np.argsort(-energies, kind="stable")
    return np.sort(order[:count])


def high_energy_mask(grid: FeatureGrid, params: AffinityParams) -> np.ndarray:
    mask = np.zeros(grid.n_patches, dtype=bool)
    mask[high_energy_set(grid, params)] = True
    return mask


def dummy_score(subset, high_energy) -> float:
    """Overlap ratio |H intersect S| / |S| in [0, 1]."""
    idx = np.asarray(sorted(subset), dtype=np.intp)
    if idx.size == 0:
        raise ValueError("subset must be nonempty")
    h = np.asarray(high_energy)
    if h.dtype == bool:
        overlap = int(h[idx].sum())
    else:
        overlap = int(np.isin(idx, h).sum())
    return overlap / idx.size


def subset_stats(grid, subset, high_energy, params: AffinityParams) -> SubsetStats:
    """All affinity statistics of one subset in a single pass."""
    feats = _unit_features(grid)
    idx = _subset_array(subset, feats.shape[0])
    if idx.size == 1:
        degrees = np.zeros(1, dtype=np.int64)
    else:
        degrees = affinity_edges(grid, idx, params)
    c_total, c_bar = _connectivity_from_degrees(degrees)
    xi = dummy_score(idx, high_energy)
    return SubsetStats(degree=degrees, c_total=c_total, c_bar=c_bar, xi=xi)
