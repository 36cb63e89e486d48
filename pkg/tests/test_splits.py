import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contrastsurv.data_model import ClinicalTable
from contrastsurv.pipeline import (LeakageAudit, SplitSpec, apply_percentile_cutoffs, classifier_labeling,
                                   kfold_indices, percentile_cutoffs, stratify_by_median_hr,
                                   stratify_by_percentiles, train_test_split)
from contrastsurv.pipeline.synthetic import synthetic_cohort


def small_cohort(n=10, seed=0):
    return synthetic_cohort(n, 6, 2, 1.0, 0.0, seed=seed)[0]


def test_split_sizes_and_determinism():
    ds = small_cohort()
    tr, te = train_test_split(ds, SplitSpec(0.8, 3))
    assert (len(tr), len(te)) == (8, 2)
    tr2, te2 = train_test_split(ds, SplitSpec(0.8, 3))
    assert tr.sample_ids == tr2.sample_ids
    assert tr.provenance == "train" and te.provenance == "test"
    with pytest.raises(ValueError):
        SplitSpec(1.0)
    with pytest.raises(ValueError):
        train_test_split(small_cohort(4), SplitSpec())


@given(st.integers(5, 60), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_split_is_partition(n, frac, seed):
    ds = small_cohort(n)
    tr, te = train_test_split(ds, SplitSpec(frac, seed))
    a, b = set(tr.sample_ids), set(te.sample_ids)
    assert not a & b and a | b == set(ds.sample_ids)
    assert len(tr) == int(np.ceil(frac * n))


@given(st.integers(5, 80), st.integers(2, 5), st.integers(0, 1000))
def test_kfold_partition(n, k, seed):
    folds = kfold_indices(n, k, seed)
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1 and len(folds) == k
    assert all(np.array_equal(a, b) for a, b in zip(folds, kfold_indices(n, k, seed)))


def test_classifier_labeling_rules():
    c = ClinicalTable(["a", "b", "c", "d", "e"], [730, 730, 1095, 1095, 2000], [1, 0, 0, 1, 1])
    rl = classifier_labeling(c)
    assert rl.kept.tolist() == [0, 2, 3, 4] and rl.dropped.tolist() == [1]
    assert rl.labels.tolist() == [1, 0, 0, 0]
    with pytest.raises(ValueError):
        classifier_labeling(ClinicalTable(["a"], [10], [0]))


@given(st.lists(st.tuples(st.integers(0, 3000), st.booleans()), min_size=1, max_size=30))
def test_labeling_partition(rows):
    t = [r[0] for r in rows]
    e = [int(r[1]) for r in rows]
    c = ClinicalTable([f"s{i}" for i in range(len(rows))], t, e)
    try:
        rl = classifier_labeling(c)
    except ValueError:
        assert all(ti < 1095 and not ei for ti, ei in zip(t, e))
        return
    assert sorted(np.r_[rl.kept, rl.dropped].tolist()) == list(range(len(rows)))
    again = classifier_labeling(c)
    assert np.array_equal(again.kept, rl.kept)


def test_median_stratification():
    labels, cut = stratify_by_median_hr([1, 2, 3], [2.5, 2.0, 1.0])
    assert cut == 2.0 and labels.tolist() == ["high", "low", "low"]
    assert stratify_by_median_hr([1, 2, 3, 4], [2.5])[1] == 2.5


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=25), st.lists(st.floats(0.01, 100), min_size=1, max_size=25))
def test_stratification_monotone_invariance(train, test):
    # an odd number of training values keeps the median an order statistic
    train = train if len(train) % 2 else train + [train[0]]
    a, _ = stratify_by_median_hr(train, test)
    b, _ = stratify_by_median_hr(np.log(train), np.log(test))
    assert np.array_equal(a, b)


def test_percentile_examples():
    labels = stratify_by_percentiles([2.0] * 5, [2.0, 1.9])
    assert labels.tolist() == ["high", "low"]
    hr = np.arange(1.0, 101.0)
    c1, c2 = percentile_cutoffs(hr)
    assert abs(c1 - (1 + 0.73 * 99)) <= 1e-12 and abs(c2 - (1 + 0.51 * 99)) <= 1e-12
    probe = [c1, c1 - 1e-9, c2, c2 - 1e-9]
    assert apply_percentile_cutoffs(probe, c1, c2).tolist() == ["high", "medium", "medium", "low"]
    with pytest.raises(ValueError):
        percentile_cutoffs(hr, 0.5, 0.6)


@given(st.lists(st.floats(0.01, 50), min_size=1, max_size=20), st.lists(st.floats(0.01, 50), min_size=1, max_size=20))
def test_percentiles_partition(train, test):
    labels = stratify_by_percentiles(train, test)
    assert len(labels) == len(test) and set(labels) <= {"high", "medium", "low"}


def test_leakage_audit():
    audit = LeakageAudit(["t1", "t2"])
    audit.check(["a", "b"], "fit")
    assert audit.to_dict() == {"fit_calls": 1, "violations": 0, "details": []}
    audit.check(["a", "t2"], "bad fit")
    audit.check(["a"], "tagged", provenance="test")
    d = audit.to_dict()
    assert d["fit_calls"] == 3 and d["violations"] == 2
