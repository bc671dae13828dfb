import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from voxwheat.dataset import (DatasetManifest, MissingLabelError, SampleRecord,
                              allocate_test_counts, assign_folds, check_label_ranges,
                              compute_severity, make_splits, read_manifest, stratified_split,
                              stratum_keys, write_manifest)
from voxwheat.errors import FoldError, LabelError, ManifestError


def manifest(counts, prefix="s"):
    recs = []
    for label, n in counts.items():
        recs += [SampleRecord(f"{prefix}/{label}_{i:04d}.ply", class_label=label) for i in range(n)]
    return DatasetManifest(tuple(recs))


# --- severity -------------------------------------------------------------

def test_severity_examples():
    assert compute_severity(7, 14) == 50.0
    assert compute_severity(0, 16) == 0.0
    assert round(compute_severity(12, 13), 1) == 92.3


def test_only_one_count_pair_gives_92_3():
    # infected in [2, 15], total in [13, 21], infected <= total
    pairs = [(i, t) for t in range(13, 22) for i in range(2, min(15, t) + 1)
             if round(compute_severity(i, t), 1) == 92.3]
    assert pairs == [(12, 13)]
    assert round(compute_severity(2, 18), 1) == 11.1


@pytest.mark.parametrize("infected, total", [(1, 0), (5, 4), (-1, 3)])
def test_severity_errors(infected, total):
    with pytest.raises(LabelError):
        compute_severity(infected, total)


def test_record_severity_consistency():
    r = SampleRecord("a", total_spikelets=13, infected_spikelets=12).with_severity()
    assert abs(r.severity_pct - 100 * 12 / 13) < 1e-9
    with pytest.raises(LabelError):
        SampleRecord("a", total_spikelets=13, infected_spikelets=12, severity_pct=90.0)
    with pytest.raises(LabelError):
        SampleRecord("a", class_label="sick")


def test_label_ranges():
    recs = [SampleRecord("a", total_spikelets=6), SampleRecord("b", total_spikelets=22)]
    assert check_label_ranges(recs, "heads") == [("a", "total_spikelets", 6)]
    recs = [SampleRecord("c", total_spikelets=13, infected_spikelets=1)]
    assert check_label_ranges(recs, "dataset2") == [("c", "infected_spikelets", 1)]


# --- split ------------------------------------------------------------------

def test_split_exact_proportions():
    m = stratified_split(manifest({"FHB": 5, "WC": 5}), 0.2, seed=1)
    test = m.by_split("test")
    assert Counter(r.class_label for r in test) == {"FHB": 1, "WC": 1}


def test_split_216():
    assert allocate_test_counts({"FHB": 42, "WC": 174}, 0.1) == {"FHB": 4, "WC": 18}
    m = stratified_split(manifest({"FHB": 42, "WC": 174}), 0.1, seed=42)
    assert Counter(r.class_label for r in m.by_split("test")) == {"FHB": 4, "WC": 18}
    assert len(m.by_split("train")) == 194


def test_split_80_20():
    m = stratified_split(manifest({"FHB": 96}), 0.2, seed=3)
    assert len(m.by_split("test")) == round(96 * 0.2) == 19
    assert len(m.by_split("train")) == 77


def test_decimal_fraction_not_floored_by_float_error():
    # 0.29 * 100 == 28.999999999999996 in binary floating point
    assert allocate_test_counts({"A": 100}, 0.29) == {"A": 29}


def test_tiny_stratum_goes_to_train():
    with pytest.warns(UserWarning):
        m = stratified_split(manifest({"FHB": 1, "WC": 9}), 0.2, seed=0)
    assert all(r.split == "train" for r in m.records if r.class_label == "FHB")


def test_split_bad_fraction():
    with pytest.raises(ValueError):
        stratified_split(manifest({"WC": 4}), 1.0, seed=0)


def test_split_deterministic_and_order_free():
    m = manifest({"FHB": 30, "WC": 70})
    shuffled = list(m.records)
    random.Random(5).shuffle(shuffled)
    a = stratified_split(m, 0.1, seed=9)
    b = stratified_split(DatasetManifest(tuple(shuffled)), 0.1, seed=9)
    assert a.records == b.records
    assert a.records != stratified_split(m, 0.1, seed=10).records


def test_missing_labels():
    m = DatasetManifest((SampleRecord("a", class_label="WC"), SampleRecord("b")))
    with pytest.raises(MissingLabelError) as exc:
        stratified_split(m, 0.5, seed=0, strata="class_label")
    assert exc.value.paths == ["b"]


def test_numeric_strata_quantile_bins():
    recs = tuple(SampleRecord(f"h{i:02d}", total_spikelets=7 + i % 16) for i in range(72))
    keys = stratum_keys(recs)
    assert set(keys.values()) == {"q0", "q1", "q2", "q3"}
    by_value = {}
    for r in recs:
        by_value.setdefault(r.total_spikelets, set()).add(keys[r.path])
    assert all(len(v) == 1 for v in by_value.values())
    m = make_splits(DatasetManifest(recs), 0.1, 5, seed=1)
    assert len(m.by_split("test")) == 7


# --- folds ------------------------------------------------------------------

def test_folds_even():
    recs = tuple(SampleRecord(f"r{i:03d}", class_label=("FHB", "WC")[i % 2], split="train")
                 for i in range(100))
    m = assign_folds(DatasetManifest(recs), 5, seed=0)
    sizes = Counter(r.fold for r in m.records)
    assert sizes == {1: 20, 2: 20, 3: 20, 4: 20, 5: 20}
    per = Counter((r.fold, r.class_label) for r in m.records)
    assert set(per.values()) == {10}


def test_folds_97():
    recs = tuple(SampleRecord(f"r{i:03d}", class_label="WC", split="train") for i in range(97))
    m = assign_folds(DatasetManifest(recs), 5, seed=4)
    assert sorted(Counter(r.fold for r in m.records).values()) == [19, 19, 19, 20, 20]
    assert assign_folds(DatasetManifest(recs), 5, seed=4) == m


def test_folds_leave_test_alone():
    m = make_splits(manifest({"FHB": 42, "WC": 174}), 0.1, 5, seed=42)
    assert all(r.fold is None for r in m.by_split("test"))
    assert all(1 <= r.fold <= 5 for r in m.by_split("train"))


def test_fold_errors():
    recs = tuple(SampleRecord(f"r{i}", class_label="WC", split="train") for i in range(3))
    with pytest.raises(FoldError):
        assign_folds(DatasetManifest(recs), 4, seed=0)
    with pytest.raises(FoldError):
        assign_folds(DatasetManifest(recs), 1, seed=0)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.sampled_from(["FHB", "WC"]), st.integers(8, 150), min_size=1),
       st.sampled_from([0.1, 0.2, 0.25, 0.3]), st.integers(0, 10**6))
def test_stratification_invariants(counts, frac, seed):
    m = make_splits(manifest(counts), frac, 5, seed)
    for label, n in counts.items():
        test_n = sum(1 for r in m.by_split("test") if r.class_label == label)
        assert abs(test_n - n * frac) <= 1
        folds = Counter(r.fold for r in m.by_split("train") if r.class_label == label)
        sizes = [folds.get(k, 0) for k in range(1, 6)]
        assert max(sizes) - min(sizes) <= 1
    all_folds = Counter(r.fold for r in m.by_split("train"))
    assert max(all_folds.values()) - min(all_folds.values()) <= 1
    assert len(m.by_split("test")) == math.floor(sum(counts.values()) * frac + 0.5)


# --- file format --------------------------------------------------------------

def test_manifest_round_trip():
    recs = (SampleRecord("a.ply", class_label="FHB", dpi=7),
            SampleRecord("b.ply", total_spikelets=13, infected_spikelets=12).with_severity())
    m = DatasetManifest(recs, seed=3, test_fraction=0.2, fold_count=5)
    text = write_manifest(m)
    assert text.startswith("# seed=3\n# test_fraction=0.2\n# folds=5\n")
    assert "\r" not in text
    back = read_manifest(text)
    assert back == m


def test_manifest_rejects_duplicates_and_garbage():
    with pytest.raises(ManifestError):
        DatasetManifest((SampleRecord("a"), SampleRecord("a")))
    with pytest.raises(ManifestError):
        read_manifest("name,label\nx,y\n")
    with pytest.raises(ManifestError):
        read_manifest("path,dpi\nx,seven\n")
