"""Greedy two-way partition minimizing intra-cluster pairwise squared distance.

The objective for a partition {S_b, S_w} is

    sum_{S in {S_b, S_w}} sum_{i < j in S} ||x_i - x_j||^2 .

No centroid exists for this objective, so instead of a Lloyd loop the
optimizer performs greedy single-point moves: the cost of keeping point
x in its cluster (sum vector D, size n, sum of squared norms q) is

    d(x, S) = n * x.x - 2 * x.D + q ,

and the cost of joining the other cluster has the identical closed form
evaluated with that cluster's (D, n, q). For unit-norm rows both reduce
to 2n - 2 x.D. A point moves when the destination cost is strictly
smaller, with moves that would empty a cluster forbidden; cluster sums
are updated immediately, so each accepted move strictly decreases the
objective and the per-round objective sequence is non-increasing.

One bisection is deliberately sequential (the greedy order matters);
callers parallelize across independent subsets instead.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .feature_io import FeatureGrid

_M64 = (1 << 64) - 1

INIT_MODES = ("seeded", "random")


@dataclass
class KsumsParams:
    max_rounds: int = 100
    rng_seed: int = 0
    init_mode: str = "seeded"
    sample_with_replacement: bool = False
    # evaluate the full (non-normalized) cost form instead of 2n - 2x.D
    exact_costs: bool = False

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")


@dataclass
class Bisection:
    """Converged two-way split of a patch subset.

    Member arrays are sorted ascending and partition the input subset;
    ``sums_*`` are exact float64 vector sums over the members.
    ``objective_history`` holds the objective after each completed round.
    """

    members_b: np.ndarray
    members_w: np.ndarray
    sums_b: np.ndarray
    sums_w: np.ndarray
    n_b: int
    n_w: int
    objective: float
    rounds_used: int
    objective_history: list[float] = field(default_factory=list)


def point_to_cluster_cost(x, cluster, member: bool) -> float:
    """Summed squared distance between a point and one cluster's members.

    ``cluster`` is ``(D, n)`` for unit-norm rows (cost 2n - 2 x.D) or
    ``(D, n, q)`` with q the cluster's sum of squared norms for the full
    form. For a member, (D, n, q) must include the point itself; for a
    candidate destination they must exclude it. The closed form is the
    same in both cases.
    """
    if len(cluster) == 2:
        d, n = cluster
        q = None
    else:
        d, n, q = cluster
    n = int(n)
    if member and n < 1:
        raise ValueError("a member's own cluster cannot be empty")
    if n < 0:
        raise ValueError("cluster size cannot be negative")
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q is None:
        return float(2.0 * n - 2.0 * (x @ d))
    return float(n * (x @ x) - 2.0 * (x @ d) + q)


def pairwise_objective(points: np.ndarray) -> float:
    """Objective contribution of one cluster, computed from its sums.

    Equals sum_{i<j} ||x_i - x_j||^2 via n * sum_i x_i.x_i - ||D||^2.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        return 0.0
    d = pts.sum(axis=0)
    return float(pts.shape[0] * np.einsum("ij,ij->", pts, pts) - d @ d)


def derive_seed(image_id: str, user_seed: int) -> int:
    """Per-image RNG seed: 64-bit blake2b of the image id XOR the user seed."""
    digest = hashlib.blake2b(image_id.encode("utf-8"), digest_size=8).digest()
    return (int.from_bytes(digest, "little") ^ (user_seed & _M64)) & _M64


def mix_seed(seed: int, salt: int) -> int:
    """splitmix64-style finalizer; stable stream per (seed, salt) pair."""
    z = (seed ^ (salt * 0x9E3779B97F4A7C15)) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def bisect(grid, subset, seeds=None, params: KsumsParams | None = None) -> Bisection:
    """Split ``subset`` into two nonempty clusters by greedy point moves.

    With ``seeds=(b, w)`` every other patch starts beside whichever seed
    it has the larger dot product with (ties go to the b side). With
    ``init_mode="random"`` the initial split is a uniform random
    assignment, repaired to keep both sides nonempty. Rounds visit the
    members in a fresh seeded random permutation until a full round
    moves nothing or ``max_rounds`` is reached.
    """
    params = params or KsumsParams()
    feats = grid.data if isinstance(grid, FeatureGrid) else np.asarray(grid)
    idx = np.asarray(sorted(subset), dtype=np.intp)
    if idx.size < 2:
        raise ValueError(f"bisect needs at least 2 patches, got {idx.size}")

    x = feats[idx].astype(np.float64)
    n = idx.size
    rng = np.random.Generator(np.random.PCG64(params.rng_seed))

    if seeds is not None:
        assign = _seeded_assignment(x, idx, seeds)
    elif params.init_mode == "random":
        assign = _random_assignment(n, rng)
    else:
        raise ValueError("init_mode='seeded' requires explicit seeds")

    sq = np.einsum("ij,ij->i", x, x)
    sums = np.stack([x[assign == 0].sum(axis=0), x[assign == 1].sum(axis=0)])
    counts = np.array([int((assign == 0).sum()), int((assign == 1).sum())])
    sumsq = np.array([sq[assign == 0].sum(), sq[assign == 1].sum()])

    history: list[float] = []
    rounds = 0
    for _ in range(params.max_rounds):
        rounds += 1
        if params.sample_with_replacement:
            order = rng.integers(0, n, size=n)
        else:
            order = rng.permutation(n)
        moves = 0
        for i in order:
            own = int(assign[i])
            if counts[own] == 1:
                continue  # moving would empty the cluster
            oth = 1 - own
            xi = x[i]
            if params.exact_costs:
                d_own = counts[own] * sq[i] - 2.0 * (xi @ sums[own]) + sumsq[own]
                d_oth = counts[oth] * sq[i] - 2.0 * (xi @ sums[oth]) + sumsq[oth]
            else:
                d_own = 2.0 * counts[own] - 2.0 * (xi @ sums[own])
                d_oth = 2.0 * counts[oth] - 2.0 * (xi @ sums[oth])
            if d_oth < d_own:
                sums[own] -= xi
                sums[oth] += xi
                counts[own] -= 1
                counts[oth] += 1
                sumsq[own] -= sq[i]
                sumsq[oth] += sq[i]
                assign[i] = oth
                moves += 1
        history.append(_objective(counts, sumsq, sums))
        if moves == 0:
            break

    members_b = idx[assign == 0]
    members_w = idx[assign == 1]
    return Bisection(
        members_b=members_b,
        members_w=members_w,
        sums_b=sums[0].copy(),
        sums_w=sums[1].copy(),
        n_b=int(counts[0]),
        n_w=int(counts[1]),
        objective=history[-1],
        rounds_used=rounds,
        objective_history=history,
    )


def _objective(counts, sumsq, sums) -> float:
    total = 0.0
    for c in (0, 1):
        total += counts[c] * sumsq[c] - float(sums[c] @ sums[c])
    return float(total)


def _seeded_assignment(x, idx, seeds) -> np.ndarray:
    seed_b, seed_w = seeds
    pos = {int(v): p for p, v in enumerate(idx)}
    if seed_b not in pos or seed_w not in pos:
        raise ValueError("seeds must be members of the subset")
    if seed_b == seed_w:
        raise ValueError("seeds must be distinct")
    b_pos, w_pos = pos[seed_b], pos[seed_w]
    sim_b = x @ x[b_pos]
    sim_w = x @ x[w_pos]
    assign = (sim_w > sim_b).astype(np.int8)  # tie -> b side
    assign[b_pos] = 0
    assign[w_pos] = 1
    return assign


def _random_assignment(n, rng) -> np.ndarray:
    assign = rng.integers(0, 2, size=n).astype(np.int8)
    if assign.min() == assign.max():  # degenerate draw: flip one member
        assign[int(rng.integers(0, n))] ^= 1
    return assign
