import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contrastsurv.contrastive import (DegenerateBatchError, EmbeddingTap, SupConConfig, assign_pfi_groups,
                                      extract_features, make_batches, mean_supcon, supcon_loss, train_cl,
                                      write_features_tsv, write_groups_tsv)
from contrastsurv.neural import MLPArchitecture, MLPParams, TrainConfig, forward, init_params
from oracles import central_diff, rel_err, supcon_scalar


def test_groups_exact_division():
    g = assign_pfi_groups(np.arange(45.0), 15)
    assert g.m == 3 and g.group_sizes == (15, 15, 15)


def test_groups_remainder():
    g = assign_pfi_groups(np.random.default_rng(0).permutation(47).astype(float), 15)
    assert g.m == 3 and g.group_sizes == (16, 16, 15)
    assert list(np.bincount(g.labels)) == [16, 16, 15]


def test_groups_stable_ties():
    t = np.array([5.0, 1.0, 5.0, 5.0, 5.0, 0.0])
    g = assign_pfi_groups(t, 3)
    # sorted stable order: 5,1,0,2,3,4 -> labels 0,0,0,1,1,1
    assert g.labels.tolist() == [0, 0, 1, 1, 1, 0]


def test_groups_minimum_two_and_error():
    assert assign_pfi_groups(np.arange(10.0), 15).m == 2
    with pytest.raises(ValueError):
        assign_pfi_groups([1.0], 15)


@given(st.lists(st.floats(0, 1e4), min_size=2, max_size=120), st.integers(1, 30))
def test_group_invariants(times, target):
    t = np.array(times)
    g = assign_pfi_groups(t, target)
    assert sum(g.group_sizes) == len(t)
    assert max(g.group_sizes) - min(g.group_sizes) <= 1
    assert set(g.labels.tolist()) == set(range(g.m))
    order = np.argsort(t, kind="stable")
    assert np.all(np.diff(g.labels[order]) >= 0)
    assert np.all(g.assign(t)[order] == np.maximum.accumulate(g.assign(t)[order]))


def test_assign_uses_training_boundaries():
    g = assign_pfi_groups(np.arange(30.0), 15)   # groups 0..14, 15..29
    assert g.assign([-1.0, 14.0, 14.5, 29.0, 100.0]).tolist() == [0, 0, 1, 1, 1]


def test_supcon_pair_same_label_is_zero():
    loss, grad = supcon_loss(np.array([[1.0, 2.0], [-3.0, 0.5]]), [4, 4])
    assert loss == 0.0
    assert np.allclose(grad, 0.0, atol=1e-12)


def test_supcon_singleton_anchor_excluded():
    z = np.random.default_rng(0).normal(size=(3, 4))
    cfg = SupConConfig(temperature=0.5)
    full, _ = supcon_loss(z, [0, 0, 1], cfg)
    assert abs(full - supcon_scalar(z, [0, 0, 1], 0.5)) <= 1e-12
    with pytest.raises(DegenerateBatchError, match="degenerate batch"):
        supcon_loss(z, [0, 1, 2], cfg)


def test_supcon_three_unit_embeddings_enumeration():
    ang = np.array([0.0, 0.7, 2.1])
    z = np.column_stack([np.cos(ang), np.sin(ang)])
    labels = [0, 0, 1]
    cfg = SupConConfig(temperature=1.0)
    loss, grad = supcon_loss(z, labels, cfg)
    assert abs(loss - supcon_scalar(z, labels, 1.0)) <= 1e-12
    num = central_diff(lambda v: supcon_loss(v, labels, cfg)[0], z)
    assert rel_err(grad, num) <= 1e-4


@pytest.mark.parametrize("normalize", [True, False])
@pytest.mark.parametrize("seed", range(4))
def test_supcon_gradient_fd(normalize, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(7, 3)) * (1.0 if normalize else 0.4)
    labels = rng.integers(0, 3, size=7)
    labels[:2] = 0
    cfg = SupConConfig(temperature=0.3, normalize_embeddings=normalize)
    loss, grad = supcon_loss(z, labels, cfg)
    assert abs(loss - supcon_scalar(z, labels, 0.3, normalize)) <= 1e-10 * max(1.0, abs(loss))
    num = central_diff(lambda v: supcon_loss(v, labels, cfg)[0], z)
    assert rel_err(grad, num) <= 1e-4


def test_supcon_scale_invariant_and_permutation():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(9, 4))
    y = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
    a, _ = supcon_loss(z, y)
    b, _ = supcon_loss(3 * z, y)
    assert abs(a - b) <= 1e-9
    perm = rng.permutation(9)
    c, g = supcon_loss(z[perm], y[perm])
    assert abs(a - c) <= 1e-12
    _, g0 = supcon_loss(z, y)
    assert np.allclose(g, g0[perm], atol=1e-12)


def test_supcon_zero_when_all_candidates_positive():
    z = np.random.default_rng(2).normal(size=(5, 3))
    loss, _ = supcon_loss(z, [1] * 5)
    assert loss >= 0
    loss2, _ = supcon_loss(z[:2], [1, 1])
    assert loss2 == 0.0


@given(st.integers(0, 10_000))
def test_supcon_non_negative_with_negatives(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(6, 3))
    loss, _ = supcon_loss(z, [0, 0, 0, 1, 1, 2])
    assert loss >= -1e-12


def test_supcon_rejects_non_finite():
    with pytest.raises(ValueError):
        supcon_loss(np.array([[np.nan, 1.0], [1.0, 1.0]]), [0, 0])


def test_make_batches_cases():
    y = np.arange(20) % 4
    full = make_batches(y, 20, 0)
    assert len(full) == 1 and sorted(full[0].tolist()) == list(range(20))
    assert all(np.array_equal(a, b) for a, b in zip(make_batches(y, 6, 3), make_batches(y, 6, 3)))


@pytest.mark.parametrize("seed", range(25))
def test_make_batches_scan(seed):
    g = assign_pfi_groups(np.random.default_rng(seed).exponential(size=30), 15)
    batches = make_batches(g, 10, seed)
    for b in batches:
        _, counts = np.unique(g.labels[b], return_counts=True)
        assert counts.max() >= 2
    seen = np.concatenate(batches)
    assert len(set(seen.tolist())) == len(seen)


def test_make_batches_drops_irrecoverable():
    assert make_batches(np.arange(6), 3, 0) == []


def _two_group_fixture(seed=0, n=60, p=8):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    x = rng.normal(scale=0.5, size=(n, p))
    x[:, 0] += np.where(y == 1, 2.0, -2.0)
    return x, y


def _cos_stats(z, y):
    u = z / np.linalg.norm(z, axis=1, keepdims=True)
    c = u @ u.T
    same = (y[:, None] == y[None, :]) & ~np.eye(len(y), dtype=bool)
    diff = y[:, None] != y[None, :]
    return c[same].mean(), c[diff].mean()


def test_train_cl_separates_groups():
    x, y = _two_group_fixture()
    arch = MLPArchitecture((8, 16, 4))
    res = train_cl(x, y, arch, TrainConfig(learning_rate=0.05, l2_weight=1e-4, max_epochs=60, seed=1),
                   SupConConfig(temperature=0.5, batch_size=16))
    within, between = _cos_stats(forward(res.params, x)[-1], y)
    assert within > between
    w0, b0 = _cos_stats(forward(init_params(arch, 1), x)[-1], y)
    assert within - between > w0 - b0


def test_train_cl_zero_epochs_and_determinism():
    x, y = _two_group_fixture(n=20)
    arch = MLPArchitecture((8, 5, 3))
    res = train_cl(x, y, arch, TrainConfig(max_epochs=0, seed=4))
    assert np.array_equal(res.params.flat(), init_params(arch, 4).flat())
    cfg = TrainConfig(max_epochs=3, seed=4)
    a = train_cl(x, y, arch, cfg, SupConConfig(batch_size=8), validation=(x[:6], y[:6]))
    b = train_cl(x, y, arch, cfg, SupConConfig(batch_size=8), validation=(x[:6], y[:6]))
    assert np.array_equal(a.params.flat(), b.params.flat())
    assert len(a.val_loss) == len(a.train_loss) > 0


def test_mean_supcon_is_per_anchor_mean():
    x, y = _two_group_fixture(n=10)
    p = init_params(MLPArchitecture((8, 4, 3)), 0)
    total, _ = supcon_loss(forward(p, x)[-1], y, SupConConfig())
    assert abs(mean_supcon(p, x, y, SupConConfig()) - total / 10) <= 1e-12


def test_extract_features():
    zero = MLPParams([np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.all(extract_features(zero, 2, x) == 0)
    assert np.all(extract_features(zero, EmbeddingTap(1), x) == 0.5)
    p = init_params(MLPArchitecture((3, 4, 2)), 1)
    for tap in (1, 2):
        assert np.array_equal(extract_features(p, tap, x), forward(p, x)[tap - 1])
    with pytest.raises(ValueError):
        extract_features(p, 3, x)


def test_tsv_exports(tmp_path):
    t = np.array([3.0, 1.0, 2.0, 4.0])
    g = assign_pfi_groups(t, 2)
    write_groups_tsv(["a", "b", "c", "d"], g, t, tmp_path / "g.tsv")
    lines = (tmp_path / "g.tsv").read_text().splitlines()
    assert lines[0] == "sample_id\ttime_days\tgroup" and lines[2] == "b\t1.0\t0"
    write_features_tsv(["a"], np.array([[0.5, 1.0]]), tmp_path / "f.tsv")
    assert (tmp_path / "f.tsv").read_text() == "sample_id\tf0\tf1\na\t0.5\t1.0\n"
