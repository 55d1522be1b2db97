import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_dataset
from mtsfusion.data import (
    Dataset,
    DataError,
    FeatureSchema,
    FeatureSpec,
    PatientSample,
    apply_normalizer,
    fit_normalizer,
    invert_normalizer,
    kfold,
    kfold_indices,
    load_dataset,
    save_dataset,
    select_features,
    split,
    split_indices,
    to_batch,
    window,
    window_dataset,
)


def write_tables(tmp_path, static_rows, mts_rows, schema):
    (tmp_path / "schema.json").write_text(json.dumps(schema))
    (tmp_path / "static.csv").write_text("\n".join(static_rows) + "\n")
    (tmp_path / "mts.csv").write_text("\n".join(mts_rows) + "\n")
    return tmp_path / "static.csv", tmp_path / "mts.csv", tmp_path / "schema.json"


SCHEMA = {"static": [{"name": "age", "kind": "numeric"}],
          "mts": [{"name": "vent", "kind": "binary"}, {"name": "nb", "kind": "count"}]}


def test_load_minimal_tables(tmp_path):
    paths = write_tables(
        tmp_path,
        ["patient_id,label,age", "p1,1,70"],
        ["patient_id,time_slot,feature,value", "p1,0,vent,1", "p1,1,vent,0", "p1,0,nb,2", "p1,1,nb,3"],
        SCHEMA,
    )
    ds = load_dataset(*paths)
    assert len(ds) == 1 and ds.schema.D == 2 and ds.schema.G == 1
    s = ds.samples[0]
    assert s.T == 2 and s.label == 1 and s.static == (70.0,)
    np.testing.assert_array_equal(s.mts, [[1, 0], [2, 3]])


def test_load_zero_fills_gaps(tmp_path):
    paths = write_tables(tmp_path, ["patient_id,label,age", "p1,0,50"],
                         ["patient_id,time_slot,feature,value", "p1,5,nb,4"], SCHEMA)
    s = load_dataset(*paths).samples[0]
    assert s.T == 6
    assert np.all(s.mts[:, :5] == 0) and s.mts[1, 5] == 4


@pytest.mark.parametrize(
    "mts_rows, fragment",
    [
        (["patient_id,time_slot,feature,value", "p1,0,nb,1", "p1,0,nb,2"], "duplicate"),
        (["patient_id,time_slot,feature,value", "p9,0,nb,1"], "unknown patient"),
        (["patient_id,time_slot,feature,value", "p1,0,zz,1"], "unknown feature"),
        (["patient_id,time_slot,feature,value", "p1,0,nb,abc"], "numeric"),
        (["patient_id,time_slot,feature,value", "p1,-1,nb,1"], ">= 0"),
    ],
)
def test_load_structured_errors(tmp_path, mts_rows, fragment):
    paths = write_tables(tmp_path, ["patient_id,label,age", "p1,0,50"], mts_rows, SCHEMA)
    with pytest.raises(DataError) as err:
        load_dataset(*paths)
    assert fragment in str(err.value)
    assert "mts.csv:3" in str(err.value) or "mts.csv:2" in str(err.value)


def test_save_load_round_trip(tmp_path, small_ds):
    paths = save_dataset(small_ds, tmp_path)
    back = load_dataset(paths["static"], paths["mts"], paths["schema"])
    assert back.schema == small_ds.schema
    for a, b in zip(small_ds.samples, back.samples):
        assert a.id == b.id and a.label == b.label and a.static == b.static
        np.testing.assert_array_equal(a.mts, b.mts)


def test_schema_rejects_duplicates_and_bad_kinds():
    with pytest.raises(DataError):
        FeatureSchema((FeatureSpec("a", "numeric"),), (FeatureSpec("a", "binary"),))
    with pytest.raises(DataError):
        FeatureSchema((FeatureSpec("a", "text"),), ())
    with pytest.raises(DataError):
        FeatureSchema((FeatureSpec("a", "categorical"),), ())


def test_dataset_validates_shapes():
    schema = FeatureSchema((FeatureSpec("a", "numeric"),), (FeatureSpec("m", "binary"),))
    with pytest.raises(DataError):
        Dataset(schema, (PatientSample("x", (1.0,), np.zeros((2, 3)), 0),))
    with pytest.raises(DataError):
        Dataset(schema, (PatientSample("x", (1.0,), np.zeros((1, 3)), 2),))


def _sample(T, D=2):
    return PatientSample("s", (0.0,), np.arange(D * T, dtype=float).reshape(D, T), 1)


def test_window_truncates_long_stays():
    s = _sample(20)
    w = window(s, 14)
    assert w.T == 14
    np.testing.assert_array_equal(w.mts, s.mts[:, :14])


@pytest.mark.parametrize("T", [5, 14])
def test_window_keeps_short_stays(T):
    s = _sample(T)
    assert window(s, 14).T == T
    np.testing.assert_array_equal(window(s, 14).mts, s.mts)


def _numeric_ds(values):
    schema = FeatureSchema((FeatureSpec("a", "numeric"),), (FeatureSpec("m", "count"),))
    samples = tuple(PatientSample(f"p{i}", (float(v),), np.full((1, 2), float(v)), i % 2)
                    for i, v in enumerate(values))
    return Dataset(schema, samples)


def test_normalizer_population_std():
    ds = _numeric_ds([1, 2, 3])
    out = apply_normalizer(fit_normalizer(ds), ds)
    got = [s.static[0] for s in out.samples]
    np.testing.assert_allclose(got, [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)


def test_normalizer_constant_feature_and_centering():
    ds = _numeric_ds([4, 4, 4])
    stats = fit_normalizer(ds)
    out = apply_normalizer(stats, ds)
    assert all(s.static[0] == 0.0 for s in out.samples)
    train = _numeric_ds([1, 2, 3])
    test = _numeric_ds([2])
    assert apply_normalizer(fit_normalizer(train), test).samples[0].static[0] == 0.0


def test_normalizer_skips_binary_and_categorical(small_ds):
    stats = fit_normalizer(small_ds)
    assert set(stats.static) == {"age"} and set(stats.mts) == {"m1"}
    out = apply_normalizer(stats, small_ds)
    for a, b in zip(small_ds.samples, out.samples):
        assert a.static[1:] == b.static[1:]
        np.testing.assert_array_equal(a.mts[0], b.mts[0])


def test_normalizer_inverse(small_ds):
    stats = fit_normalizer(small_ds)
    back = invert_normalizer(stats, apply_normalizer(stats, small_ds))
    for a, b in zip(small_ds.samples, back.samples):
        np.testing.assert_allclose(a.mts, b.mts, atol=1e-12)
        assert a.static[0] == pytest.approx(b.static[0])


def test_split_stratified_arithmetic():
    labels = np.array([1] * 5 + [0] * 5)
    tr, te = split_indices(labels, 0.2, 0)
    assert len(te) == 2 and labels[te].sum() == 1
    assert sorted(np.concatenate([tr, te])) == list(range(10))


def test_kfold_partition():
    labels = np.array([0, 1] * 50)
    folds = kfold_indices(labels, 5, 3)
    vals = [set(v) for _, v in folds]
    assert all(len(v) == 20 for v in vals)
    assert set().union(*vals) == set(range(100))
    assert all(not (a & b) for i, a in enumerate(vals) for b in vals[i + 1:])
    for tr, va in folds:
        assert set(tr) | set(va) == set(range(100))
        assert labels[va].sum() == 10


def test_split_determinism(small_ds):
    a = split(small_ds, 0.25, 9)
    b = split(small_ds, 0.25, 9)
    assert [s.id for s in a[1].samples] == [s.id for s in b[1].samples]
    assert [s.id for s in kfold(small_ds, 4, 1)[0][1].samples] == [s.id for s in kfold(small_ds, 4, 1)[0][1].samples]


def test_kfold_rejects_bad_k():
    with pytest.raises(ValueError):
        kfold_indices([0, 1, 0], 1, 0)
    with pytest.raises(ValueError):
        kfold_indices([0, 1, 0], 4, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=10, max_size=60), st.integers(2, 5), st.integers(0, 2**32))
def test_kfold_properties(labels, k, seed):
    labels = np.array(labels)
    folds = kfold_indices(labels, k, seed)
    sizes = [len(v) for _, v in folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate([v for _, v in folds])) == list(range(len(labels)))


def test_to_batch_pads_and_codes(small_ds):
    ds = window_dataset(small_ds, 5)
    b = to_batch(ds, 5)
    assert b.X.shape == (len(ds), 5, 2)
    for i, s in enumerate(ds.samples):
        assert b.lengths[i] == s.T
        np.testing.assert_array_equal(b.X[i, : s.T].T, s.mts)
        assert np.all(b.X[i, s.T:] == 0)
        assert b.static_cat[i, 0] == ["a", "b", "c"].index(s.static[2])
    assert b.mask.sum() == sum(s.T for s in ds.samples)


def test_select_features(small_ds):
    sub = select_features(small_ds, ["age", "m1"])
    assert sub.schema.feature_names == ["age", "m1"]
    assert sub.samples[0].mts.shape[0] == 1
    with pytest.raises(DataError):
        select_features(small_ds, ["nope"])


def test_make_dataset_helper_is_valid():
    ds = make_dataset(n=10, D=3)
    assert ds.schema.D == 3 and len(ds) == 10
