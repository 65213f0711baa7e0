import numpy as np
import pytest

from regionseek.feature_io import DatasetManifest, ManifestEntry
from regionseek.index import (
    DescriptorIndex,
    IndexBuildError,
    build_index,
    image_retrieval_rank,
    load_index,
    read_results_jsonl,
    save_index,
    search,
    write_results_jsonl,
)
from regionseek.pooling import RegionDescriptor


def unit(v):
    v = np.asarray(v, dtype=np.float32)
    return v / np.linalg.norm(v)


def make_index(rows):
    """rows: list of (image_id, region_id, vector)."""
    image_ids = []
    ords, regions, boxes, vecs = [], [], [], []
    for image_id, region_id, vec in rows:
        if image_id not in image_ids:
            image_ids.append(image_id)
        ords.append(image_ids.index(image_id))
        regions.append(region_id)
        boxes.append((0.0, 0.0, 8.0, 8.0))
        vecs.append(unit(vec))
    return DescriptorIndex(
        dim_d=len(vecs[0]) if vecs else 0,
        image_ids=image_ids,
        image_ord=np.array(ords, dtype=np.uint32),
        region_ids=np.array(regions, dtype=np.uint32),
        bboxes=np.array(boxes, dtype=np.float32).reshape(len(vecs), 4),
        vectors=np.stack(vecs) if vecs else np.zeros((0, 0), dtype=np.float32),
    )


# -- search --------------------------------------------------------------------

def test_self_match_ranks_first_with_score_one():
    q = unit([1.0, 2.0, 3.0])
    index = make_index([("a", 0, [0, 0, 1]), ("b", 0, q), ("c", 0, [1, 0, 0])])
    result = search(index, q, k=3)
    assert result.entries[0].image_id == "b"
    assert result.entries[0].score == pytest.approx(1.0, abs=1e-6)


def test_orthogonal_query_ties_break_by_image_id():
    q = np.array([0.0, 0.0, 1.0], dtype=np.float32)
    index = make_index([("zed", 0, [1, 0, 0]), ("abc", 0, [0, 1, 0]), ("mid", 0, [1, 0, 0])])
    result = search(index, q, k=3)
    assert result.image_ids() == ["abc", "mid", "zed"]
    assert all(e.score == pytest.approx(0.0, abs=1e-7) for e in result.entries)


def test_search_matches_bruteforce_on_random_corpus():
    rng = np.random.default_rng(0)
    rows = []
    for img in range(40):
        for reg in range(5):
            rows.append((f"img{img:03d}", reg, rng.standard_normal(16)))
    index = make_index(rows)
    q = unit(rng.standard_normal(16))
    result = search(index, q, k=40)

    # oracle: per-image max by direct dots
    best = {}
    for image_id, reg, vec in rows:
        s = float(np.dot(q.astype(np.float64), unit(vec).astype(np.float64)))
        if image_id not in best or s > best[image_id]:
            best[image_id] = s
    want = sorted(best, key=lambda im: (-best[im], im))
    assert result.image_ids() == want
    for e in result.entries:
        assert e.score == pytest.approx(best[e.image_id], abs=1e-6)


def test_one_entry_per_image_and_cut_at_k():
    rng = np.random.default_rng(1)
    rows = [(f"i{n}", r, rng.standard_normal(8)) for n in range(6) for r in range(4)]
    index = make_index(rows)
    result = search(index, unit(rng.standard_normal(8)), k=4)
    assert len(result.entries) == 4
    assert len(set(result.image_ids())) == 4


def test_scores_non_increasing():
    rng = np.random.default_rng(2)
    rows = [(f"i{n}", 0, rng.standard_normal(8)) for n in range(20)]
    index = make_index(rows)
    scores = [e.score for e in search(index, unit(rng.standard_normal(8)), k=20).entries]
    assert scores == sorted(scores, reverse=True)


def test_empty_index_returns_empty_result():
    index = DescriptorIndex(
        dim_d=4,
        image_ids=[],
        image_ord=np.zeros(0, dtype=np.uint32),
        region_ids=np.zeros(0, dtype=np.uint32),
        bboxes=np.zeros((0, 4), dtype=np.float32),
        vectors=np.zeros((0, 4), dtype=np.float32),
    )
    assert search(index, unit([1, 0, 0, 0]), k=5).entries == []


def test_best_region_is_argmax_row():
    q = np.array([1.0, 0.0], dtype=np.float32)
    index = make_index([("a", 7, [0.1, 1.0]), ("a", 9, [1.0, 0.05]), ("a", 3, [0.5, 0.5])])
    result = search(index, q, k=1)
    assert result.entries[0].region_id == 9


def test_irrelevant_rows_do_not_reorder_existing_images():
    rng = np.random.default_rng(3)
    rows = [(f"i{n}", 0, rng.standard_normal(6)) for n in range(10)]
    q = unit(rng.standard_normal(6))
    before = search(make_index(rows), q, k=10).image_ids()
    orth = np.zeros(6)
    # construct a vector orthogonal to the query
    basis = np.eye(6)[np.argmin(np.abs(q))]
    orth = basis - float(basis @ q) * q
    rows_plus = rows + [("zzz", 0, orth)]
    after = search(make_index(rows_plus), q, k=11).image_ids()
    assert [i for i in after if i != "zzz"] == before


# -- image_retrieval_rank --------------------------------------------------------

def test_single_region_per_image_equals_search():
    rng = np.random.default_rng(4)
    rows = [(f"i{n}", 0, rng.standard_normal(8)) for n in range(12)]
    index = make_index(rows)
    q = unit(rng.standard_normal(8))
    assert image_retrieval_rank(index, q, k=12).image_ids() == search(index, q, k=12).image_ids()


def test_second_best_region_outranks_other_images_best():
    q = np.array([1.0, 0.0], dtype=np.float32)
    index = make_index(
        [("a", 0, [0.9, np.sqrt(1 - 0.81)]), ("a", 1, [0.8, 0.6]), ("b", 0, [0.7, np.sqrt(1 - 0.49)])]
    )
    result = image_retrieval_rank(index, q, k=2)
    assert result.image_ids() == ["a", "b"]


def test_first_appearance_equals_sort_dedupe_oracle():
    rng = np.random.default_rng(5)
    rows = []
    for img in range(25):
        for reg in range(int(rng.integers(1, 6))):
            rows.append((f"im{img:02d}", reg, rng.standard_normal(10)))
    index = make_index(rows)
    q = unit(rng.standard_normal(10))
    got = image_retrieval_rank(index, q, k=25).image_ids()

    scored = []
    for pos, (image_id, reg, vec) in enumerate(rows):
        s = float(np.dot(q.astype(np.float64), unit(vec).astype(np.float64)))
        scored.append((-s, image_id, pos))
    scored.sort()
    want, seen = [], set()
    for _, image_id, _ in scored:
        if image_id not in seen:
            seen.add(image_id)
            want.append(image_id)
    assert got == want


def test_search_invariant_to_row_insertion_order():
    rng = np.random.default_rng(8)
    rows = [
        (f"i{n}", r, rng.standard_normal(9))
        for n in range(12)
        for r in range(int(rng.integers(1, 4)))
    ]
    q = unit(rng.standard_normal(9))
    baseline = search(make_index(rows), q, k=12)
    for trial in range(5):
        shuffled = list(rows)
        rng.shuffle(shuffled)
        result = search(make_index(shuffled), q, k=12)
        assert result.image_ids() == baseline.image_ids()
        for a, b in zip(result.entries, baseline.entries):
            assert a.score == pytest.approx(b.score, abs=1e-6)
            assert a.region_id == b.region_id  # no within-image score ties here


def test_both_modes_identical_on_random_corpora():
    rng = np.random.default_rng(6)
    for trial in range(10):
        rows = [
            (f"i{n}", r, rng.standard_normal(7))
            for n in range(15)
            for r in range(int(rng.integers(1, 4)))
        ]
        index = make_index(rows)
        q = unit(rng.standard_normal(7))
        a = search(index, q, k=15).image_ids()
        b = image_retrieval_rank(index, q, k=15).image_ids()
        assert a == b


# -- build / save / load ----------------------------------------------------------

def corpus_with_descriptors(tmp_path):
    from regionseek import synth
    from regionseek.hierarchy import decompose, node_bbox
    from regionseek.pooling import pool_region

    params = synth.SynthParams(n_images=3, n_nested=1, n_queries=2)
    images = synth.make_corpus(params, seed=1)
    entries, hierarchies, descriptors = [], {}, {}
    for img in images:
        hier = decompose(img.grid)
        hierarchies[img.image_id] = hier
        descs = []
        for node in hier.emitted_nodes():
            bbox = node_bbox(node, 8, img.grid.grid_w * 8, img.grid.grid_h * 8)
            descs.append(
                pool_region(img.dmap, node.mask, 8, image_id=img.image_id,
                            region_id=node.id, bbox=bbox)
            )
        descriptors[img.image_id] = descs
        entries.append(
            ManifestEntry(img.image_id, "x.cft", "x.cdm",
                          img.grid.grid_w * 8, img.grid.grid_h * 8)
        )
    return DatasetManifest(entries, tmp_path), hierarchies, descriptors


def test_build_counts_rows(tmp_path):
    manifest, hierarchies, descriptors = corpus_with_descriptors(tmp_path)
    index = build_index(manifest, hierarchies, descriptors)
    want = sum(
        sum(0 if d.degenerate else 1 for d in descs) for descs in descriptors.values()
    )
    assert index.row_count == want
    assert index.image_count == 3


def test_build_empty_manifest(tmp_path):
    index = build_index(DatasetManifest([], tmp_path), {}, {})
    assert index.row_count == 0


def test_build_missing_descriptor_rejected(tmp_path):
    manifest, hierarchies, descriptors = corpus_with_descriptors(tmp_path)
    first = manifest.entries[0].image_id
    descriptors[first] = descriptors[first][:-1]
    with pytest.raises(IndexBuildError, match="no descriptor"):
        build_index(manifest, hierarchies, descriptors)


def test_build_dim_mismatch_rejected(tmp_path):
    manifest, hierarchies, descriptors = corpus_with_descriptors(tmp_path)
    first = manifest.entries[0].image_id
    bad = descriptors[first][0]
    descriptors[first][0] = RegionDescriptor(
        bad.image_id, bad.region_id, np.ones(3, dtype=np.float32) / np.sqrt(3),
        bad.bbox, bad.patch_count,
    )
    with pytest.raises(IndexBuildError, match="dim"):
        build_index(manifest, hierarchies, descriptors)


def test_save_load_round_trip(tmp_path):
    manifest, hierarchies, descriptors = corpus_with_descriptors(tmp_path)
    index = build_index(manifest, hierarchies, descriptors)
    path = tmp_path / "corpus.cix"
    save_index(index, path)
    assert path.read_bytes()[:4] == b"CIX1"
    back = load_index(path)
    assert back.dim_d == index.dim_d
    assert back.image_ids == index.image_ids
    assert np.array_equal(back.image_ord, index.image_ord)
    assert np.array_equal(back.region_ids, index.region_ids)
    assert np.array_equal(back.vectors, index.vectors)
    assert np.array_equal(back.bboxes, index.bboxes)


def test_save_bytes_deterministic(tmp_path):
    manifest, hierarchies, descriptors = corpus_with_descriptors(tmp_path)
    index = build_index(manifest, hierarchies, descriptors)
    p1, p2 = tmp_path / "a.cix", tmp_path / "b.cix"
    save_index(index, p1)
    save_index(index, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a.cix.json").read_bytes() == (tmp_path / "b.cix.json").read_bytes()


def test_results_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    rows = [(f"i{n}", 0, rng.standard_normal(5)) for n in range(8)]
    index = make_index(rows)
    q = unit(rng.standard_normal(5))
    results = {"q1": search(index, q, k=5), "q0": search(index, -q, k=5)}
    path = tmp_path / "results.jsonl"
    write_results_jsonl(path, results)
    back = read_results_jsonl(path)
    assert set(back) == {"q0", "q1"}
    for qid in results:
        assert back[qid].image_ids() == results[qid].image_ids()
        assert [e.bbox for e in back[qid].entries] == [e.bbox for e in results[qid].entries]
