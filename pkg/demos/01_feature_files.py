"""Feature-grid and descriptor-map files: the contract with the extractor.

A feature grid (.cft) holds one row of 32-bit floats per image patch,
with raw magnitudes preserved. The reader produces two views: the raw
rows (their L1 norms drive the high-energy set) and the L2-normalized
rows (used for every similarity). This script writes both file kinds,
reads them back, and shows the views.
"""

import tempfile
from pathlib import Path

import numpy as np

from regionseek import (
    DescriptorMap,
    FeatureGrid,
    read_descriptor_map,
    read_feature_grid,
    write_descriptor_map,
    write_feature_grid,
)

workdir = Path(tempfile.mkdtemp(prefix="regionseek_demo_"))
print(f"working in {workdir}\n")

# a 3x4 grid of 8-dimensional patch features with varied magnitudes
rng = np.random.default_rng(0)
raw = rng.standard_normal((12, 8)).astype(np.float32)
raw[5] *= 10.0    # one high-energy patch
raw[7] *= 0.05    # one near-silent patch
grid = FeatureGrid.from_raw(raw, grid_h=3, grid_w=4, patch_px=8)

path = workdir / "demo.cft"
write_feature_grid(grid, path)
print(f"wrote {path.stat().st_size} bytes: 24-byte header + {raw.size * 4} payload")

back = read_feature_grid(path)
print(f"header: {back.grid_h}x{back.grid_w} patches, dim {back.dim}, "
      f"patch {back.patch_px}px")
print("raw payload survives bit-exactly:", np.array_equal(back.raw, raw))
print("normalized rows all unit length:",
      bool(np.allclose(np.linalg.norm(back.data, axis=1), 1.0, atol=1e-4)))
print("L1 energies (high patch 5, quiet patch 7):")
print(np.round(back.l1_norms(), 2))

# descriptor maps use the same layout under a different magic
dmap = DescriptorMap.from_array(
    rng.standard_normal((6 * 8, 16)).astype(np.float32), 6, 8, stride_px=16
)
dpath = workdir / "demo.cdm"
write_descriptor_map(dmap, dpath)
back_map = read_descriptor_map(dpath)
print(f"\ndescriptor map: {back_map.map_h}x{back_map.map_w} cells, "
      f"{back_map.dim_d} channels, {back_map.stride_px}px stride")
print("map payload round-trips:", np.array_equal(back_map.data, dmap.data))
