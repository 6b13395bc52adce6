import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_dataset
from fedpot.dataset import (
    DatasetError,
    PartitionPlan,
    SyntheticSpec,
    generate_synthetic,
    holdout_split,
    load_csv,
    normalize_minmax,
    partition,
    write_csv,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_two_rows(self, tmp_path):
        ds = load_csv(_write(tmp_path, "a,b,label\n1,2,x\n3,4,y\n"))
        assert len(ds) == 2
        assert ds.dimension == 2
        np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4]])

    def test_labels_factorized_in_first_appearance_order(self, tmp_path):
        ds = load_csv(_write(tmp_path, "label,f\nmirai,1\nbenign,2\nmirai,3\ngafgyt,4\n"))
        assert ds.class_names == ("mirai", "benign", "gafgyt")
        assert ds.labels.tolist() == [0, 1, 0, 2]
        assert ds.num_classes == 3

    def test_baiot_width_row(self, tmp_path):
        header = ",".join(f"f{i}" for i in range(115)) + ",label\n"
        row = ",".join("0.5" for _ in range(115)) + ",benign\n"
        ds = load_csv(_write(tmp_path, header + row))
        assert ds.dimension == 115

    def test_text_in_feature_column_names_row(self, tmp_path):
        with pytest.raises(DatasetError, match="row 1.*column 'b'"):
            load_csv(_write(tmp_path, "a,b,label\n1,2,x\n3,oops,y\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="no such file"):
            load_csv(tmp_path / "nope.csv")

    def test_missing_label_column(self, tmp_path):
        with pytest.raises(DatasetError, match="label column"):
            load_csv(_write(tmp_path, "a,b\n1,2\n"))

    def test_custom_label_column(self, tmp_path):
        ds = load_csv(_write(tmp_path, "cls,a\nq,1\n"), label_column="cls")
        assert ds.class_names == ("q",)

    def test_fixed_class_names_reject_unknown(self, tmp_path):
        with pytest.raises(DatasetError, match="unknown label"):
            load_csv(_write(tmp_path, "a,label\n1,z\n"), class_names=["x", "y"])

    def test_round_trip(self, tmp_path, small_synthetic):
        path = tmp_path / "rt.csv"
        write_csv(small_synthetic, path)
        back = load_csv(path)
        np.testing.assert_array_equal(back.features, small_synthetic.features)
        np.testing.assert_array_equal(back.labels, small_synthetic.labels)


class TestNormalize:
    def test_affine_column(self):
        out, rec = normalize_minmax(make_dataset([[2.0], [4.0], [6.0]], [0, 0, 1]))
        np.testing.assert_allclose(out.features[:, 0], [0.0, 0.5, 1.0])
        assert rec.minimum[0] == 2.0 and rec.maximum[0] == 6.0

    def test_constant_column_maps_to_zero(self):
        out, _ = normalize_minmax(make_dataset([[5.0, 1.0], [5.0, 3.0]], [0, 1]))
        np.testing.assert_array_equal(out.features[:, 0], [0.0, 0.0])

    def test_unit_range_data_unchanged(self):
        x = np.array([[0.0, 1.0], [0.25, 0.0], [1.0, 0.5]])
        out, _ = normalize_minmax(make_dataset(x, [0, 1, 0]))
        np.testing.assert_array_equal(out.features, x)

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            normalize_minmax(make_dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2))

    def test_record_reused_on_heldout(self):
        _, rec = normalize_minmax(make_dataset([[0.0], [10.0]], [0, 1]))
        held = rec.apply(make_dataset([[5.0], [20.0]], [0, 1]))
        np.testing.assert_allclose(held.features[:, 0], [0.5, 1.0])

    @given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=1, max_size=30))
    def test_output_in_unit_cube(self, rows):
        out, _ = normalize_minmax(make_dataset(rows, [0] * len(rows), 1))
        assert out.features.min() >= 0.0 and out.features.max() <= 1.0


def _multiset(ds):
    return collections.Counter((tuple(x), int(y)) for x, y in zip(ds.features, ds.labels))


class TestPartition:
    def test_iid_two_clients(self):
        ds = make_dataset([[0.0], [0.1], [0.2], [0.3]], [0, 0, 1, 1])
        parts = partition(ds, PartitionPlan(2, "iid", seed=0))
        for p in parts:
            assert sorted(p.labels.tolist()) == [0, 1]

    def test_single_client_holds_everything(self, small_synthetic):
        (only,) = partition(small_synthetic, PartitionPlan(1, "iid"))
        assert _multiset(only) == _multiset(small_synthetic)

    def test_noniid_nine_clients_at_most_two_attacks(self):
        ds = generate_synthetic(SyntheticSpec(3, 11, 30, 0.05, seed=2))
        parts = partition(ds, PartitionPlan(9, "noniid", max_classes_per_client=2, seed=5))
        for p in parts:
            attacks = set(p.labels.tolist()) - {0}
            assert len(attacks) <= 2
            assert 0 in set(p.labels.tolist())

    def test_noniid_benign_shared_equally(self):
        ds = generate_synthetic(SyntheticSpec(2, 5, 36, 0.05, seed=2))
        parts = partition(ds, PartitionPlan(4, "noniid", seed=1))
        assert [int(np.sum(p.labels == 0)) for p in parts] == [9, 9, 9, 9]

    def test_noniid_without_attack_classes(self):
        ds = make_dataset([[0.0], [1.0]], [0, 0], 2)
        with pytest.raises(DatasetError, match="attack class"):
            partition(ds, PartitionPlan(2, "noniid"))

    def test_noniid_classes_do_not_fit(self):
        ds = generate_synthetic(SyntheticSpec(2, 6, 5, 0.0, seed=0))
        with pytest.raises(DatasetError, match="do not fit"):
            partition(ds, PartitionPlan(2, "noniid", max_classes_per_client=1))

    def test_more_clients_than_samples(self):
        with pytest.raises(DatasetError):
            partition(make_dataset([[0.0]], [0]), PartitionPlan(2))

    @settings(max_examples=40, deadline=None)
    @given(
        m=st.integers(1, 12),
        classes=st.integers(2, 8),
        per_class=st.integers(2, 25),
        mode=st.sampled_from(["iid", "noniid"]),
        k=st.integers(1, 3),
        seed=st.integers(0, 2**32),
    )
    def test_exhaustive_disjoint_and_bounded(self, m, classes, per_class, mode, k, seed):
        ds = generate_synthetic(SyntheticSpec(2, classes, per_class, 0.3, seed=seed % 1000))
        if m > len(ds) or (mode == "noniid" and (classes - 1) > m * k):
            return
        plan = PartitionPlan(m, mode, max_classes_per_client=k, seed=seed)
        parts = partition(ds, plan)
        assert len(parts) == m
        total = collections.Counter()
        for p in parts:
            total += _multiset(p)
        assert total == _multiset(ds)
        assert sum(len(p) for p in parts) == len(ds)
        if mode == "noniid":
            for p in parts:
                assert len(set(p.labels.tolist()) - {0}) <= k
        else:
            counts = np.array([p.label_counts() for p in parts])
            assert (counts.max(axis=0) - counts.min(axis=0)).max() <= 1
        again = partition(ds, plan)
        for a, b in zip(parts, again):
            np.testing.assert_array_equal(a.features, b.features)


class TestHoldout:
    def test_balanced_half(self):
        ds = make_dataset(np.arange(10.0).reshape(-1, 1), [0] * 5 + [1] * 5)
        train, test = holdout_split(ds, 0.5, seed=3)
        assert len(train) == 5 and len(test) == 5
        assert abs(int(np.sum(test.labels == 0)) - int(np.sum(test.labels == 1))) <= 1

    def test_deterministic(self, small_synthetic):
        a = holdout_split(small_synthetic, 0.3, seed=9)
        b = holdout_split(small_synthetic, 0.3, seed=9)
        np.testing.assert_array_equal(a[1].features, b[1].features)

    def test_empty_split_rejected(self):
        ds = make_dataset([[0.0], [1.0]], [0, 1])
        with pytest.raises(DatasetError, match="empty split"):
            holdout_split(ds, 0.999, seed=0)

    def test_disjoint_and_exhaustive(self, small_synthetic):
        train, test = holdout_split(small_synthetic, 0.25, seed=1)
        assert _multiset(train) + _multiset(test) == _multiset(small_synthetic)


class TestSynthetic:
    def test_counts(self):
        ds = generate_synthetic(SyntheticSpec(dim=2, num_classes=2, per_class=50, seed=0))
        assert len(ds) == 100
        assert set(ds.labels.tolist()) == {0, 1}

    def test_zero_spread_collapses_to_center(self):
        ds = generate_synthetic(SyntheticSpec(dim=3, num_classes=2, per_class=10, spread=0.0, seed=4))
        for c in range(2):
            pts = ds.features[ds.labels == c]
            assert np.all(pts == pts[0])

    def test_same_seed_same_data(self):
        spec = SyntheticSpec(dim=5, num_classes=3, per_class=7, spread=0.2, seed=11)
        np.testing.assert_array_equal(generate_synthetic(spec).features, generate_synthetic(spec).features)

    def test_in_unit_cube(self):
        ds = generate_synthetic(SyntheticSpec(dim=4, num_classes=3, per_class=100, spread=1.0, seed=1))
        assert ds.features.min() >= 0 and ds.features.max() <= 1

    @pytest.mark.parametrize("kw", [{"per_class": 0}, {"dim": 0}, {"num_classes": 1}])
    def test_bad_spec(self, kw):
        args = dict(dim=2, num_classes=2, per_class=3)
        args.update(kw)
        with pytest.raises(DatasetError):
            generate_synthetic(SyntheticSpec(**args))
