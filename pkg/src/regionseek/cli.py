"""Command-line pipeline driver.

Stages communicate through files (feature grids in, hierarchy JSON,
descriptor JSON, binary index, JSON-lines rankings, report JSON out) so
runs can be resumed, diffed, and fed by extractors in other languages.

Exit codes: 0 success, 1 validation error, 2 completed with per-item
failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, synth
from .config import RunConfig, load_config_file, resolve_config
from .feature_io import (
    ManifestError,
    read_descriptor_map,
    read_feature_grid,
    read_manifest,
)
from .hierarchy import decompose, load_hierarchy, node_bbox, save_hierarchy
from .index import (
    build_index,
    image_retrieval_rank,
    load_index,
    read_results_jsonl,
    save_index,
    search,
    write_results_jsonl,
)
from .ksums import derive_seed
from .pooling import RegionDescriptor, pool_query, pool_region

OK, VALIDATION_ERROR, PARTIAL_FAILURE = 0, 1, 2


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_queries(path) -> list[dict]:
    doc = json.loads(Path(path).read_text())
    queries = doc["queries"] if isinstance(doc, dict) else doc
    for q in queries:
        if "query_id" not in q or "image_id" not in q or "bbox" not in q:
            raise ValueError(f"{path}: query records need query_id, image_id, bbox")
    return queries


def _decompose_one(entry, manifest, cfg: RunConfig, hier_dir: Path):
    grid = read_feature_grid(manifest.resolve(entry.feature_path))
    params = cfg.decompose_params(rng_seed=derive_seed(entry.image_id, cfg.seed))
    t0 = time.perf_counter()
    hier = decompose(grid, params)
    wall = time.perf_counter() - t0
    save_hierarchy(hier, hier_dir / f"{entry.image_id}.json", entry.image_id)
    return {
        "image_id": entry.image_id,
        "cut_count": hier.cut_count,
        "n_nodes": len(hier.nodes),
        "n_emitted": len(hier.emitted),
        "truncated": hier.truncated,
        "wall_s": wall,
    }


def cmd_decompose(args) -> int:
    cfg = _config_from_args(args)
    manifest = read_manifest(args.manifest)
    out = Path(args.out)
    hier_dir = out / "hier"
    hier_dir.mkdir(parents=True, exist_ok=True)

    rows, errors = [], []

    def run(entry):
        try:
            return _decompose_one(entry, manifest, cfg, hier_dir)
        except Exception as exc:  # keep going; record the failure per image
            return {"image_id": entry.image_id, "error": str(exc)}

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, manifest.entries))
    else:
        results = [run(e) for e in manifest.entries]
    for rec in results:
        (errors if "error" in rec else rows).append(rec)

    summary = {
        "config": cfg.to_dict(),
        "images": rows,
        "errors": errors,
        "total_cuts": sum(r["cut_count"] for r in rows),
        "total_wall_s": sum(r["wall_s"] for r in rows),
    }
    _write_json(out / "decompose_summary.json", summary)
    print(f"decomposed {len(rows)}/{len(manifest)} images -> {hier_dir}")
    return PARTIAL_FAILURE if errors else OK


def cmd_describe(args) -> int:
    cfg = _config_from_args(args)
    manifest = read_manifest(args.manifest)
    hier_dir = Path(args.hier)
    out = Path(args.out)
    desc_dir = out / "desc"
    desc_dir.mkdir(parents=True, exist_ok=True)

    errors = []
    n_regions = 0
    for entry in manifest:
        try:
            hier = load_hierarchy(hier_dir / f"{entry.image_id}.json")
            dmap = read_descriptor_map(manifest.resolve(entry.descriptor_path))
            records = []
            for node in hier.emitted_nodes():
                bbox = node_bbox(node, hier.patch_px, entry.image_w_px, entry.image_h_px)
                desc = pool_region(
                    dmap,
                    node.mask,
                    hier.patch_px,
                    image_id=entry.image_id,
                    region_id=node.id,
                    bbox=bbox,
                    method=cfg.pool_method,
                )
                records.append(
                    {
                        "region_id": desc.region_id,
                        "bbox": list(desc.bbox),
                        "patch_count": desc.patch_count,
                        "degenerate": desc.degenerate,
                        "vector": [float(v) for v in desc.vector],
                    }
                )
                n_regions += 1
            (desc_dir / f"{entry.image_id}.json").write_text(
                json.dumps({"image_id": entry.image_id, "regions": records},
                           sort_keys=True, separators=(",", ":")) + "\n"
            )
        except Exception as exc:
            errors.append({"image_id": entry.image_id, "error": str(exc)})
    _write_json(
        out / "describe_summary.json",
        {"config": cfg.to_dict(), "n_regions": n_regions, "errors": errors},
    )
    print(f"pooled {n_regions} region descriptors -> {desc_dir}")
    return PARTIAL_FAILURE if errors else OK


def _load_descriptors(desc_dir: Path, image_id: str) -> list[RegionDescriptor]:
    doc = json.loads((desc_dir / f"{image_id}.json").read_text())
    return [
        RegionDescriptor(
            image_id=image_id,
            region_id=r["region_id"],
            vector=np.asarray(r["vector"], dtype=np.float32),
            bbox=tuple(r["bbox"]),
            patch_count=r["patch_count"],
            degenerate=r["degenerate"],
        )
        for r in doc["regions"]
    ]


def cmd_index(args) -> int:
    manifest = read_manifest(args.manifest)
    hier_dir, desc_dir = Path(args.hier), Path(args.desc)
    hierarchies = {
        e.image_id: load_hierarchy(hier_dir / f"{e.image_id}.json") for e in manifest
    }
    descriptors = {
        e.image_id: _load_descriptors(desc_dir, e.image_id) for e in manifest
    }
    index = build_index(manifest, hierarchies, descriptors)
    save_index(index, args.out)
    print(f"indexed {index.row_count} rows over {index.image_count} images -> {args.out}")
    return OK


def cmd_search(args) -> int:
    cfg = _config_from_args(args)
    index = load_index(args.index)
    manifest = read_manifest(args.manifest)
    by_id = {e.image_id: e for e in manifest}
    queries = _load_queries(args.queries)

    rank_fn = image_retrieval_rank if args.mode == "first-appearance" else search
    results = {}
    errors = []
    for q in queries:
        try:
            entry = by_id[q["image_id"]]
            dmap = read_descriptor_map(manifest.resolve(entry.descriptor_path))
            desc = pool_query(dmap, q["bbox"], image_id=q["image_id"], method=cfg.pool_method)
            results[q["query_id"]] = rank_fn(index, desc, k=cfg.k)
        except Exception as exc:
            errors.append({"query_id": q["query_id"], "error": str(exc)})
    write_results_jsonl(args.out, results)
    print(f"ran {len(results)} queries -> {args.out}")
    return PARTIAL_FAILURE if errors else OK


def _proposals_from_hierarchies(manifest, hier_dir: Path):
    proposals = {}
    for entry in manifest:
        hier = load_hierarchy(hier_dir / f"{entry.image_id}.json")
        proposals[entry.image_id] = [
            node_bbox(n, hier.patch_px, entry.image_w_px, entry.image_h_px)
            for n in hier.emitted_nodes()
        ]
    return proposals


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    manifest = read_manifest(args.manifest)
    results = read_results_jsonl(args.results)
    ground_truth = evaluation.ground_truth_from_manifest(manifest)

    proposals = gt_boxes = None
    if args.hier:
        proposals = _proposals_from_hierarchies(manifest, Path(args.hier))
        gt_boxes = {}
        for gt in ground_truth.values():
            for image_id, box in gt.gt_boxes.items():
                gt_boxes.setdefault(image_id, []).append(box)

    report = evaluation.evaluate(
        results, ground_truth, proposals, gt_boxes, config=cfg.to_dict()
    )
    if not ground_truth:
        print("note: manifest carries no ground truth; metrics are empty")
    evaluation.save_report(report, args.out, args.table)
    print(evaluation.format_report_table(report))
    return OK


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    cfg = _config_from_args(args)
    ns = argparse.Namespace(**vars(args))

    ns.out = str(out)
    rc = cmd_decompose(ns)
    if rc == VALIDATION_ERROR:
        return rc
    ns.hier = str(out / "hier")
    rc = max(rc, cmd_describe(ns))
    ns.desc = str(out / "desc")
    ns.out = str(out / "index.cix")
    rc = max(rc, cmd_index(ns))
    ns.index = str(out / "index.cix")
    ns.out = str(out / "results.jsonl")
    rc = max(rc, cmd_search(ns))
    ns.results = str(out / "results.jsonl")
    ns.out = str(out / "eval_report.json")
    ns.table = str(out / "eval_report.txt")
    rc = max(rc, cmd_eval(ns))

    if args.no_dummy_filter:
        _report_feature_count_delta(out, cfg)
    return rc


def _report_feature_count_delta(out: Path, cfg: RunConfig) -> None:
    """Emitted-region counts under the active run vs the default dummy filter.

    The tree itself does not depend on tau2 (dummy nodes still split), so
    both counts come from the already-written hierarchies.
    """
    default_tau2 = RunConfig().tau2
    active = default = 0
    for path in sorted((out / "hier").glob("*.json")):
        doc = json.loads(path.read_text())
        for node in doc["nodes"]:
            if node["id"] == doc["root"] or node["size"] < cfg.min_region_patches:
                continue
            if node["stats"]["xi"] > cfg.tau2:
                active += 1
            if node["stats"]["xi"] > default_tau2:
                default += 1
    delta = {
        "feature_count_active": active,
        "feature_count_default_filter": default,
        "tau2_active": cfg.tau2,
        "tau2_default": default_tau2,
    }
    _write_json(out / "feature_count_delta.json", delta)
    print(
        f"emitted features: {active} with dummy filter disabled "
        f"vs {default} under the default filter"
    )


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    manifest = read_manifest(args.manifest)
    rows = []
    for entry in manifest:
        grid = read_feature_grid(manifest.resolve(entry.feature_path))
        params = cfg.decompose_params(rng_seed=derive_seed(entry.image_id, cfg.seed))
        t0 = time.perf_counter()
        hier = decompose(grid, params)
        wall = time.perf_counter() - t0
        rows.append(
            {
                "image_id": entry.image_id,
                "n_patches": grid.n_patches,
                "cut_count": hier.cut_count,
                "wall_s": wall,
                "per_cut_s": wall / hier.cut_count if hier.cut_count else None,
            }
        )
    doc = {"config": cfg.to_dict(), "images": rows}
    if args.out:
        _write_json(args.out, doc)
    for r in rows:
        per_cut = f"{r['per_cut_s']:.4f}" if r["per_cut_s"] is not None else "n/a"
        print(
            f"{r['image_id']}: {r['n_patches']} patches, {r['cut_count']} cuts, "
            f"{r['wall_s']:.3f}s total, {per_cut}s/cut"
        )
    return OK


def cmd_synth(args) -> int:
    params = synth.SynthParams(
        n_images=args.images,
        grid_h=args.grid_h,
        grid_w=args.grid_w,
        dim=args.dim,
        dim_d=args.dim_d,
        n_nested=min(args.nested, args.images),
        n_queries=args.queries,
    )
    synth.write_corpus(args.out, params, seed=args.seed)
    print(f"wrote {args.images}-image synthetic corpus -> {args.out}")
    return OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--alpha", type=float)
    p.add_argument("--theta-fraction", type=float, dest="theta_fraction")
    p.add_argument("--seeds-follow-prose", action="store_const", const=True,
                   dest="seeds_follow_prose")
    p.add_argument("--tau1", type=float)
    p.add_argument("--tau2", type=float)
    p.add_argument("--no-dummy-filter", action="store_true",
                   help="disable the dummy filter (forces tau2 = -1)")
    p.add_argument("--min-region-patches", type=int, dest="min_region_patches")
    p.add_argument("--max-nodes", type=int, dest="max_nodes")
    p.add_argument("--connectivity", type=int, choices=(4, 8))
    p.add_argument("--max-rounds", type=int, dest="max_rounds")
    p.add_argument("--seed", type=int)
    p.add_argument("--init-mode", choices=("seeded", "random"), dest="init_mode")
    p.add_argument("--pool-method", choices=("mean", "max"), dest="pool_method")
    p.add_argument("--k", type=int)
    p.add_argument("--threads", type=int)


def _config_from_args(args) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    keys = (
        "alpha", "theta_fraction", "seeds_follow_prose", "tau1", "tau2",
        "min_region_patches", "max_nodes", "connectivity", "max_rounds",
        "seed", "init_mode", "pool_method", "k", "threads",
    )
    overrides = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "no_dummy_filter", False):
        overrides["tau2"] = -1.0
    return resolve_config(file_values, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regionseek",
        description="Instance-region discovery, descriptor indexing, and search "
        "over precomputed patch-feature grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="build region hierarchies for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("describe", help="pool a descriptor for every emitted region")
    p.add_argument("--manifest", required=True)
    p.add_argument("--hier", required=True, help="directory of hierarchy JSON files")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_describe)

    p = sub.add_parser("index", help="assemble the binary descriptor index")
    p.add_argument("--manifest", required=True)
    p.add_argument("--hier", required=True)
    p.add_argument("--desc", required=True, help="directory of descriptor JSON files")
    p.add_argument("--out", required=True, help="index file path (.cix)")
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("search", help="rank images for each query")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True, help="results JSON-lines path")
    p.add_argument("--mode", choices=("best-region", "first-appearance"),
                   default="best-region")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("eval", help="score rankings against manifest ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--hier", help="hierarchy dir; enables the recall-vs-IoU curve")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--table", help="optional aligned-column text report path")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pipeline", help="decompose, describe, index, search, eval")
    p.add_argument("--manifest", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("best-region", "first-appearance"),
                   default="best-region")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("bench", help="single-threaded decomposition timing")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="timing report JSON path")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=50)
    p.add_argument("--grid-h", type=int, default=20, dest="grid_h")
    p.add_argument("--grid-w", type=int, default=16, dest="grid_w")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--dim-d", type=int, default=64, dest="dim_d")
    p.add_argument("--nested", type=int, default=10,
                   help="images with a nested logo planting")
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, ManifestError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR


if __name__ == "__main__":
    sys.exit(main())
