"""Retrieval and localization metrics: AP at cutoffs, IoU, recall curves.

Average precision uses the truncated-denominator convention: with a
ranking cutoff k the denominator is min(|relevant|, k), so AP at a
cutoff of corpus size equals plain AP. Localization quality is reported
three ways because the single-number convention is ambiguous: plain mean
IoU over retrieved-relevant pairs, the fraction of pairs at IoU >= 0.5,
and the mean restricted to those pairs. Proposal recall matches ground
truth greedily, highest-IoU pairs first, one-to-one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IOU_MATCH_LEVEL = 0.5

DEFAULT_RECALL_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass
class QueryGroundTruth:
    query_id: str
    relevant_image_ids: set[str] = field(default_factory=set)
    gt_boxes: dict[str, tuple] = field(default_factory=dict)


@dataclass
class EvalReport:
    map_50: float
    map_100: float
    map_all: float
    miou: float
    miou_over_50: float
    rate_at_50: float
    recall_curve: list[tuple[float, float]]
    per_query: dict[str, dict]
    queries_scored: int
    queries_skipped: list[str]
    pairs_scored: int
    pairs_missing_gt_box: int
    config: dict = field(default_factory=dict)


def average_precision(ranking, relevant, cutoff=None) -> float | None:
    """AP of one duplicate-free ranking against a relevant set.

    Returns None when the relevant set is empty (the query is skipped).
    """
    relevant = set(relevant)
    if not relevant:
        return None
    if len(set(ranking)) != len(list(ranking)):
        raise ValueError("ranking contains duplicate ids")
    top = list(ranking)[:cutoff] if cutoff is not None else list(ranking)
    hits = 0
    precision_sum = 0.0
    for rank, image_id in enumerate(top, start=1):
        if image_id in relevant:
            hits += 1
            precision_sum += hits / rank
    denom = min(len(relevant), cutoff) if cutoff is not None else len(relevant)
    return precision_sum / denom


def iou(box_a, box_b) -> float:
    """Intersection over union of two (x0, y0, x1, y1) boxes; 0 if disjoint
    or either box has no area."""
    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    area_a = max(0.0, ax1 - ax0) * max(0.0, ay1 - ay0)
    area_b = max(0.0, bx1 - bx0) * max(0.0, by1 - by0)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def mask_iou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def localization_miou(results, ground_truth) -> dict:
    """Localization accuracy over retrieved relevant images.

    ``results`` maps query_id to a RankedResult; ``ground_truth`` maps
    query_id to QueryGroundTruth. Every retrieved relevant image with a
    ground-truth box contributes one (returned box, true box) pair.
    Pairs lacking a ground-truth box are skipped but counted.
    """
    ious: list[float] = []
    missing = 0
    for query_id, ranked in results.items():
        gt = ground_truth.get(query_id)
        if gt is None or not gt.relevant_image_ids:
            continue
        for entry in ranked.entries:
            if entry.image_id not in gt.relevant_image_ids:
                continue
            box = gt.gt_boxes.get(entry.image_id)
            if box is None:
                missing += 1
                continue
            ious.append(iou(entry.bbox, box))
    arr = np.asarray(ious, dtype=np.float64)
    over = arr[arr >= IOU_MATCH_LEVEL] if arr.size else arr
    return {
        "miou": float(arr.mean()) if arr.size else 0.0,
        "miou_over_50": float(over.mean()) if over.size else 0.0,
        "rate_at_50": float(over.size / arr.size) if arr.size else 0.0,
        "pairs_scored": int(arr.size),
        "pairs_missing_gt_box": missing,
    }


def _greedy_match_ious(proposals, gt_boxes) -> list[float]:
    """IoUs of the greedy one-to-one matching, highest-IoU pairs first.

    Only overlapping pairs participate. The matches of a threshold-t run
    are exactly the matched pairs here with IoU >= t, because pruning
    pairs below t removes a suffix of the greedy visiting order and the
    earlier decisions are unchanged.
    """
    pairs = []
    for pi, p in enumerate(proposals):
        for gi, g in enumerate(gt_boxes):
            v = iou(p, g)
            if v > 0.0:
                pairs.append((v, pi, gi))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    matched = []
    for v, pi, gi in pairs:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        matched.append(v)
    return matched


def recall_at_iou(proposals, gt, thresholds=DEFAULT_RECALL_THRESHOLDS):
    """Fraction of ground-truth boxes matched by some proposal, per threshold.

    ``proposals`` and ``gt`` map image_id to box lists. Matching is
    greedy one-to-one within each image. Thresholds must be ascending;
    the resulting curve is non-increasing.
    """
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    matched_ious: list[float] = []
    total_gt = 0
    for image_id, boxes in gt.items():
        total_gt += len(boxes)
        matched_ious.extend(_greedy_match_ious(proposals.get(image_id, []), boxes))
    arr = np.asarray(matched_ious, dtype=np.float64)
    curve = []
    for t in thresholds:
        hit = int((arr >= t).sum()) if arr.size else 0
        curve.append((t, hit / total_gt if total_gt else 0.0))
    return curve


def ground_truth_from_manifest(manifest) -> dict[str, QueryGroundTruth]:
    """Collect per-query relevance sets and boxes from manifest entries."""
    gts: dict[str, QueryGroundTruth] = {}
    for entry in manifest:
        for rec in entry.ground_truth:
            gt = gts.setdefault(rec.query_id, QueryGroundTruth(rec.query_id))
            if rec.relevant:
                gt.relevant_image_ids.add(entry.image_id)
                gt.gt_boxes[entry.image_id] = tuple(rec.bbox)
    return gts


def evaluate(
    results,
    ground_truth,
    proposals=None,
    gt_boxes_by_image=None,
    thresholds=DEFAULT_RECALL_THRESHOLDS,
    config=None,
) -> EvalReport:
    """Full report: mAP at 50/100/all, localization, and proposal recall."""
    per_query: dict[str, dict] = {}
    skipped: list[str] = [q for q in sorted(results) if q not in ground_truth]
    ap_sums = {"ap_50": [], "ap_100": [], "ap_all": []}
    for query_id in sorted(ground_truth):
        gt = ground_truth[query_id]
        ranked = results.get(query_id)
        if ranked is None or not gt.relevant_image_ids:
            skipped.append(query_id)
            continue
        ids = ranked.image_ids()
        row = {
            "ap_50": average_precision(ids, gt.relevant_image_ids, 50),
            "ap_100": average_precision(ids, gt.relevant_image_ids, 100),
            "ap_all": average_precision(ids, gt.relevant_image_ids, None),
        }
        per_query[query_id] = row
        for key in ap_sums:
            ap_sums[key].append(row[key])

    loc = localization_miou(results, ground_truth)
    curve = (
        recall_at_iou(proposals, gt_boxes_by_image, thresholds)
        if proposals is not None and gt_boxes_by_image is not None
        else []
    )

    def _mean(values):
        return float(np.mean(values)) if values else 0.0

    return EvalReport(
        map_50=_mean(ap_sums["ap_50"]),
        map_100=_mean(ap_sums["ap_100"]),
        map_all=_mean(ap_sums["ap_all"]),
        miou=loc["miou"],
        miou_over_50=loc["miou_over_50"],
        rate_at_50=loc["rate_at_50"],
        recall_curve=curve,
        per_query=per_query,
        queries_scored=len(per_query),
        queries_skipped=skipped,
        pairs_scored=loc["pairs_scored"],
        pairs_missing_gt_box=loc["pairs_missing_gt_box"],
        config=config or {},
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "map_50": report.map_50,
        "map_100": report.map_100,
        "map_all": report.map_all,
        "miou": report.miou,
        "miou_over_50": report.miou_over_50,
        "rate_at_50": report.rate_at_50,
        "recall_curve": [[t, r] for t, r in report.recall_curve],
        "per_query": report.per_query,
        "queries_scored": report.queries_scored,
        "queries_skipped": report.queries_skipped,
        "pairs_scored": report.pairs_scored,
        "pairs_missing_gt_box": report.pairs_missing_gt_box,
        "config": report.config,
    }


def save_report(report: EvalReport, json_path, table_path=None) -> None:
    Path(json_path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
    )
    if table_path is not None:
        Path(table_path).write_text(format_report_table(report))


def format_report_table(report: EvalReport) -> str:
    """Aligned-column text rendering of the headline metrics."""
    lines = [
        "metric        value",
        "------------  ------",
        f"mAP-50        {report.map_50:.4f}",
        f"mAP-100       {report.map_100:.4f}",
        f"mAP-all       {report.map_all:.4f}",
        f"mIoU          {report.miou:.4f}",
        f"mIoU@0.5      {report.miou_over_50:.4f}",
        f"loc-rate@0.5  {report.rate_at_50:.4f}",
        f"queries       {report.queries_scored}",
    ]
    if report.queries_skipped:
        lines.append(f"skipped       {len(report.queries_skipped)}")
    if report.recall_curve:
        lines.append("")
        lines.append("recall vs IoU threshold")
        lines.append("  t      recall")
        for t, r in report.recall_curve:
            lines.append(f"  {t:.2f}   {r:.4f}")
    return "\n".join(lines) + "\n"
