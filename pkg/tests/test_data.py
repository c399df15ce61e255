import dataclasses

import numpy as np
import pytest

from aiol.data import (NO_LABEL, SPLITS, DatasetBundle, OodTruth, SampleSet, SyntheticSpec,
                       generate_synthetic, load_bundle, load_csv, make_batches, save_bundle,
                       write_csv)
from aiol.errors import IngestionError, InvalidArgument


@pytest.fixture(scope="module")
def bundle():
    return generate_synthetic(SyntheticSpec(seed=3))


def _moon_bayes_accuracy(X, y, noise):
    # class-conditional density of a noisy half-circle, integrated over the arc
    t = np.linspace(0, np.pi, 801)
    arcs = [np.column_stack([np.cos(t), np.sin(t)]),
            np.column_stack([1 - np.cos(t), 0.5 - np.sin(t)])]
    dens = [np.exp(-((X[:, None, :] - a[None]) ** 2).sum(-1) / (2 * noise ** 2)).mean(1) for a in arcs]
    return float(((dens[1] > dens[0]).astype(int) == y).mean())


def test_default_sizes(bundle):
    assert len(bundle.L) == 50
    assert len(bundle.U) == 4000
    assert len(bundle.V) == 100 and len(bundle.test_id) == 900
    assert len(bundle.test_seen_ood) == len(bundle.test_unseen_ood) == 1000
    assert np.bincount(bundle.L.labels).tolist() == [25, 25]


def test_n_per_class_100_gives_200_labels():
    b = generate_synthetic(SyntheticSpec(n_per_class=100, seed=1))
    assert len(b.L) == 200


def test_generation_is_deterministic():
    a = generate_synthetic(SyntheticSpec(seed=5))
    b = generate_synthetic(SyntheticSpec(seed=5))
    for name in SPLITS:
        sa, sb = a.split(name), b.split(name)
        assert np.array_equal(sa.features, sb.features)
        assert np.array_equal(sa.labels, sb.labels)
        assert np.array_equal(sa.ood_truth, sb.ood_truth)


def test_m_out_zero_has_no_seen_ood():
    b = generate_synthetic(SyntheticSpec(m_out=0, seed=2))
    assert not (b.U.ood_truth == OodTruth.SEEN_OOD).any()


def test_truth_and_label_invariants(bundle):
    assert (bundle.U.labels == NO_LABEL).all()
    assert set(np.unique(bundle.U.ood_truth)) == {OodTruth.ID, OodTruth.SEEN_OOD}
    assert (bundle.U.ood_truth == OodTruth.ID).sum() == 2000
    for name in ("V", "test_id", "L"):
        assert bundle.split(name).has_labels
    for name in ("test_seen_ood", "test_unseen_ood"):
        assert (bundle.split(name).labels == NO_LABEL).all()
    assert (bundle.test_unseen_ood.ood_truth == OodTruth.UNSEEN_OOD).all()


def test_training_view_hides_truth(bundle):
    XU = bundle.unlabeled_features()
    assert isinstance(XU, np.ndarray) and XU.shape == (4000, 2)
    with pytest.raises(ValueError):
        XU[0, 0] = 1.0


def test_moons_bayes_accuracy_above_090():
    b = generate_synthetic(SyntheticSpec(n_test_id=4000, seed=11))
    acc = _moon_bayes_accuracy(b.test_id.features, b.test_id.labels, SyntheticSpec().noise_scale)
    assert acc > 0.9


def test_clusters_separable_and_seen_ood_far_from_means():
    spec = SyntheticSpec(family="gaussian-clusters", K=6, unseen_family="uniform-box", seed=4)
    b = generate_synthetic(spec)
    angles = 2 * np.pi * np.arange(6) / 6
    means = 3.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    X, y = b.test_id.features, b.test_id.labels
    nearest = ((X[:, None] - means[None]) ** 2).sum(-1).argmin(1)
    assert (nearest == y).mean() > 0.9
    d = np.sqrt(((b.test_seen_ood.features[:, None] - means[None]) ** 2).sum(-1)).min(1)
    assert d.min() > 1.0


def test_ring_is_disjoint_from_moon_means(bundle):
    means = np.array([[0.0, 2 / np.pi], [1.0, 0.5 - 2 / np.pi]])
    d = np.sqrt(((bundle.test_seen_ood.features[:, None] - means[None]) ** 2).sum(-1)).min(1)
    assert d.min() > 1.0


def test_unseen_family_must_differ_from_seen():
    with pytest.raises(InvalidArgument):
        generate_synthetic(SyntheticSpec(unseen_family="ring"))


@pytest.mark.parametrize("kw", [dict(K=1), dict(n_per_class=-1), dict(family="spirals"),
                                dict(m_in=10, m_out=0), dict(K=3)])
def test_invalid_specs(kw):
    with pytest.raises(InvalidArgument):
        generate_synthetic(SyntheticSpec(**kw))


def test_higher_dimension_padding():
    b = generate_synthetic(SyntheticSpec(d=5, seed=1))
    assert b.dim == 5 and b.test_unseen_ood.features.shape[1] == 5


def test_bundle_requires_large_unlabeled_pool(bundle):
    with pytest.raises(InvalidArgument):
        dataclasses.replace(bundle, U=SampleSet.build(bundle.U.features[:100], None,
                                                      bundle.U.ood_truth[:100]))


def test_labeled_sample_must_be_id():
    with pytest.raises(InvalidArgument):
        SampleSet.build([[0.0, 1.0]], [0], [int(OodTruth.SEEN_OOD)])


# ---------------------------------------------------------------- CSV


def test_csv_round_trip_is_exact(tmp_path, bundle):
    paths = save_bundle(bundle, tmp_path)
    assert [p.name for p in paths] == [f"{s}.csv" for s in SPLITS]
    back = load_bundle(tmp_path, 2)
    for name in SPLITS:
        assert np.array_equal(back.split(name).features, bundle.split(name).features)
        assert np.array_equal(back.split(name).labels, bundle.split(name).labels)
    assert np.array_equal(back.U.ood_truth, bundle.U.ood_truth)
    assert len((tmp_path / "L.csv").read_text().splitlines()) == 51


def test_csv_header_only_is_empty(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("f1,f2,label\n")
    assert len(load_csv(p)) == 0


def test_csv_rows_in_order(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("f1,f2,label,ood_truth\n1,2,0,id\n3,4,,seen\n5,6,1,id\n")
    s = load_csv(p)
    assert s.features.tolist() == [[1, 2], [3, 4], [5, 6]]
    assert s.labels.tolist() == [0, NO_LABEL, 1]
    assert s.ood_truth.tolist() == [0, 1, 0]


def test_csv_bad_cell_names_line(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("f1,f2\n1,2\nabc,3\n4,5,6\n")
    with pytest.raises(IngestionError) as ei:
        load_csv(p)
    assert ei.value.lines == [3, 4]
    assert "line 3" in str(ei.value)


def test_csv_missing_file(tmp_path):
    with pytest.raises(IngestionError, match="no such data file"):
        load_csv(tmp_path / "nope.csv")


def test_csv_write_header(tmp_path, bundle):
    p = tmp_path / "t.csv"
    write_csv(p, bundle.test_id, True, True)
    assert p.read_text().splitlines()[0] == "f1,f2,label,ood_truth"


# ---------------------------------------------------------------- batching


def test_batches_cover_small_L_before_repeating():
    batches = make_batches(range(4), range(20), 2, 5, seed=0, epoch=1, iterations=6)
    flat = np.concatenate([b[0] for b in batches])
    for k in range(0, 12, 4):
        assert sorted(flat[k:k + 4]) == [0, 1, 2, 3]
    assert all(len(bl) == 2 and len(bu) == 5 for bl, bu in batches)


def test_batches_keyed_by_seed_and_epoch():
    a = make_batches(range(10), range(50), 3, 7, seed=1, epoch=2, iterations=5)
    b = make_batches(range(10), range(50), 3, 7, seed=1, epoch=2, iterations=5)
    c = make_batches(range(10), range(50), 3, 7, seed=1, epoch=3, iterations=5)
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert any(not np.array_equal(x[1], y[1]) for x, y in zip(a, c))


def test_default_iteration_count_is_512():
    assert len(make_batches(range(5), range(30), 2, 4, seed=0, epoch=1)) == 512


def test_batches_reject_empty():
    with pytest.raises(InvalidArgument):
        make_batches([], range(3), 1, 1, 0, 1)
    with pytest.raises(InvalidArgument):
        make_batches(range(3), range(3), 0, 1, 0, 1)
