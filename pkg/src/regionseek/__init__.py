"""Instance-level region discovery and search over patch-feature grids.

The pipeline: read a feature grid, decompose it into a hierarchy of
compact spatially connected regions, pool a descriptor per emitted
region, index the descriptors, and answer instance queries with ranked
images plus localization boxes.
"""

from .affinity import (
    AffinityParams,
    SubsetStats,
    affinity_edges,
    connectivity,
    dummy_score,
    high_energy_set,
    select_seeds,
    subset_stats,
)
from .evaluation import (
    EvalReport,
    QueryGroundTruth,
    average_precision,
    evaluate,
    iou,
    localization_miou,
    mask_iou,
    recall_at_iou,
)
from .feature_io import (
    DatasetManifest,
    DescriptorMap,
    FeatureGrid,
    FormatError,
    ManifestError,
    read_descriptor_map,
    read_feature_grid,
    read_manifest,
    write_descriptor_map,
    write_feature_grid,
    write_manifest,
)
from .hierarchy import (
    DecomposeParams,
    Hierarchy,
    RegionNode,
    decompose,
    get_objects,
    load_hierarchy,
    node_bbox,
    save_hierarchy,
)
from .index import (
    DescriptorIndex,
    RankedResult,
    build_index,
    image_retrieval_rank,
    load_index,
    save_index,
    search,
)
from .ksums import Bisection, KsumsParams, bisect, derive_seed, point_to_cluster_cost
from .pooling import RegionDescriptor, pool_query, pool_region

__version__ = "0.1.0"

__all__ = [
    "AffinityParams",
    "Bisection",
    "DatasetManifest",
    "DecomposeParams",
    "DescriptorIndex",
    "DescriptorMap",
    "EvalReport",
    "FeatureGrid",
    "FormatError",
    "Hierarchy",
    "KsumsParams",
    "ManifestError",
    "QueryGroundTruth",
    "RankedResult",
    "RegionDescriptor",
    "RegionNode",
    "SubsetStats",
    "affinity_edges",
    "average_precision",
    "bisect",
    "build_index",
    "connectivity",
    "decompose",
    "derive_seed",
    "dummy_score",
    "evaluate",
    "get_objects",
    "high_energy_set",
    "image_retrieval_rank",
    "iou",
    "load_hierarchy",
    "load_index",
    "localization_miou",
    "mask_iou",
    "node_bbox",
    "point_to_cluster_cost",
    "pool_query",
    "pool_region",
    "read_descriptor_map",
    "read_feature_grid",
    "read_manifest",
    "recall_at_iou",
    "save_hierarchy",
    "save_index",
    "search",
    "select_seeds",
    "subset_stats",
    "write_descriptor_map",
    "write_feature_grid",
    "write_manifest",
]
