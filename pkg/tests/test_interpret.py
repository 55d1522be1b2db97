import re

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from mtsfusion.data import Dataset, FeatureSchema, FeatureSpec, PatientSample, StaticLayout, to_batch
from mtsfusion.interpret import (
    DynamaskConfig,
    SaliencyMatrix,
    cell_fractions,
    dynamask_fit,
    dynamask_perturb,
    emit_heatmap,
    fit_mask,
    ham_heatmap,
    nlha_attention,
    nlha_heatmap,
    slot_mean,
    tpi_drops,
    tpi_scores,
    trailing_mean,
)
from mtsfusion.models import HyperParams, TensorBatch, TrainedModel, build_network, init_params, train
from mtsfusion.numerics import DTYPE, RngStream


def mts_ds(X, y):
    """Dataset with no static features from an (I, D, T) array."""
    D = X.shape[1]
    schema = FeatureSchema((), tuple(FeatureSpec(f"x{d}", "numeric") for d in range(D)))
    return Dataset(schema, tuple(PatientSample(f"p{i}", (), X[i], int(y[i])) for i in range(len(y))))


def wrap(net, ds, arch, window):
    return TrainedModel(arch, HyperParams(width=3), net, ds.schema, window)


class CellScorer(torch.nn.Module):
    """Probability driven by a single MTS cell."""

    def __init__(self, t, d, gain=3.0):
        super().__init__()
        self.t, self.d, self.gain = t, d, gain

    def forward(self, b: TensorBatch):
        return torch.sigmoid(self.gain * b.X[:, self.t, self.d])


# --- attention -----------------------------------------------------------------------


def test_nlha_zero_grn_is_uniform(small_ds):
    net = build_network("NLHA-GRU", StaticLayout.of(small_ds.schema), 2, 5, 3, 0.0)
    init_params(net, RngStream(0, 0))
    with torch.no_grad():
        for p in net.attn.parameters():
            p.zero_()
    model = wrap(net, small_ds, "NLHA-GRU", 5)
    A, lengths = nlha_attention(model, small_ds)
    assert A.shape == (len(small_ds), 2, 5)
    assert np.all(A == 0.5)


def test_nlha_columns_sum_to_one_and_mean(small_ds):
    net = build_network("NLHA-FHSI", StaticLayout.of(small_ds.schema), 2, 5, 3, 0.0)
    init_params(net, RngStream(0, 0))
    model = wrap(net, small_ds, "NLHA-FHSI", 5)
    A, _ = nlha_attention(model, small_ds)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    two = small_ds.subset([0, 1])
    A2, lengths = nlha_attention(model, two)
    heat = nlha_heatmap(model, two).scores
    t = int(min(lengths))
    np.testing.assert_allclose(heat[:, :t], (A2[0, :, :t] + A2[1, :, :t]) / 2, atol=1e-15)


def test_ham_uniform_and_shared(small_ds):
    net = build_network("HAM-GRU", StaticLayout.of(small_ds.schema), 2, 5, 3, 0.0)
    model = wrap(net, small_ds, "HAM-GRU", 5)
    assert np.all(ham_heatmap(model).scores == 0.5)
    with torch.no_grad():
        net.logits.copy_(torch.randn(2, 5, dtype=DTYPE, generator=torch.Generator().manual_seed(0)))
    A = net.matrix().detach()
    seen = []
    net.inner.forward = lambda b: seen.append(b.X) or torch.zeros(len(b), dtype=DTYPE)
    tb = TensorBatch.of(to_batch(small_ds.subset([0, 1]), 5))
    net(tb)
    np.testing.assert_allclose(seen[0].detach().numpy(), tb.X.numpy() * A.T.numpy()[None], atol=0)


def test_ham_concentrates_on_planted_feature():
    rng = np.random.default_rng(0)
    I, D, T = 600, 4, 6
    X = rng.normal(size=(I, D, T))
    y = (X[:, 2, :].sum(axis=1) + rng.normal(0, 0.5, I) > 0).astype(int)
    ds = mts_ds(X, y)
    fit, val = ds.subset(range(450)), ds.subset(range(450, I))
    m = train("HAM-GRU", HyperParams(lr=0.1, width=5), fit, val, seed=0, window=T)
    A = ham_heatmap(m).scores
    assert A[2].mean() > 2 / D


# --- heatmaps ---------------------------------------------------------------------------


def test_heatmap_2x3_fixture(tmp_path):
    m = SaliencyMatrix(("a", "b"), np.arange(6.0).reshape(2, 3), "NLHA")
    svg = emit_heatmap(m, tmp_path / "h.svg").read_text()
    assert len(re.findall(r'<rect class="cell"', svg)) == 6
    assert len(re.findall(r'<text class="label"', svg)) == 5
    assert emit_heatmap(m, tmp_path / "h2.svg").read_text() == svg


def test_heatmap_degenerate_colors(tmp_path):
    one = emit_heatmap(SaliencyMatrix(("a",), np.array([[0.3]]), "TPI"), tmp_path / "1.svg").read_text()
    assert re.findall(r'fill="(#[0-9a-f]{6})"', one) == ["#08306b"]
    const = emit_heatmap(SaliencyMatrix(("a", "b"), np.full((2, 2), 4.0), "TPI"), tmp_path / "c.svg").read_text()
    fills = set(re.findall(r'fill="(#[0-9a-f]{6})"', const))
    assert len(fills) == 1
    np.testing.assert_array_equal(cell_fractions(np.full((2, 2), 4.0)), 0.5)


def test_saliency_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        SaliencyMatrix(("a",), np.zeros((2, 3)), "X")
    with pytest.raises(ValueError):
        SaliencyMatrix(("a",), np.array([[np.nan]]), "X")
    m = SaliencyMatrix(("a", "b"), np.array([[0.1, 0.2, 0.3], [1.0, 2.0, 3.0]]), "X")
    m.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "slot,a,b"
    back = SaliencyMatrix.read_csv(tmp_path / "s.csv", "X")
    np.testing.assert_array_equal(back.scores, m.scores)


def test_slot_mean_counts_observed_only():
    per = np.stack([np.ones((1, 3)), 3 * np.ones((1, 3))])
    np.testing.assert_array_equal(slot_mean(per, np.array([3, 1]), fill=-1), [[2.0, 1.0, 1.0]])
    np.testing.assert_array_equal(slot_mean(per, np.array([1, 1]), fill=-1), [[2.0, -1.0, -1.0]])


# --- TPI ----------------------------------------------------------------------------------


class SlotReader:
    """Scores each patient by the sum of features at one slot."""

    window = 5

    def __init__(self, t):
        self.t = t

    def predict(self, batch):
        return batch.X[:, self.t, :].sum(axis=1)


def _tpi_data(seed=0, I=200, T=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(I, 2, T))
    y = (X[:, :, 0].sum(axis=1) + rng.normal(0, 0.3, I) > 0).astype(int)
    return mts_ds(X, y)


def test_tpi_sigma_zero_all_zero():
    ds = _tpi_data()
    assert np.all(tpi_scores(SlotReader(0), ds, sigma=0.0, repeats=3) == 0.0)


def test_tpi_slot_zero_reader():
    ds = _tpi_data()
    np.testing.assert_array_equal(tpi_scores(SlotReader(0), ds, sigma=1.0, repeats=3, seed=1), [1, 0, 0, 0, 0])


def test_tpi_reproducible_and_rejects_negative_sigma():
    ds = _tpi_data()
    a = tpi_drops(SlotReader(0), ds, 1.0, 3, 4)
    assert np.array_equal(a, tpi_drops(SlotReader(0), ds, 1.0, 3, 4))
    with pytest.raises(ValueError):
        tpi_drops(SlotReader(0), ds, -1.0)


class LinearScorer:
    window = 6

    def __init__(self, w):
        self.w = w

    def predict(self, batch):
        return batch.X.reshape(len(batch), -1) @ self.w


def test_tpi_planted_slots_rank_top():
    rng = np.random.default_rng(3)
    I, D, T = 400, 2, 6
    X = rng.normal(size=(I, D, T))
    y = (X[:, :, 2:4].sum(axis=(1, 2)) + rng.normal(0, 0.5, I) > 0).astype(int)
    ds = mts_ds(X, y)
    flat = to_batch(ds, T).X.reshape(I, -1)
    w, *_ = np.linalg.lstsq(flat, 2 * y - 1.0, rcond=None)
    scores = tpi_scores(LinearScorer(w), ds, sigma=1.0, repeats=5, seed=0)
    assert set(np.argsort(-scores)[:2]) == {2, 3}


# --- Dynamask -------------------------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 8), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_perturb_identities(D, T, W, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(D, T)) * 10
    M = rng.uniform(size=(D, T))
    assert np.array_equal(dynamask_perturb(X, np.ones((D, T)), W), X)
    assert np.array_equal(dynamask_perturb(X, M, 0), X)
    Xt = torch.tensor(X, dtype=DTYPE)
    assert torch.equal(dynamask_perturb(Xt, torch.ones(D, T, dtype=DTYPE), W), Xt)


def test_trailing_mean_fixture():
    X = np.array([[2.0, 4.0, 6.0]])
    np.testing.assert_allclose(dynamask_perturb(X, np.zeros_like(X), 1), [[2.0, 3.0, 5.0]])
    np.testing.assert_allclose(trailing_mean(X, 2), [[2.0, 3.0, 4.0]])


def test_perturb_shape_mismatch():
    with pytest.raises(ValueError):
        dynamask_perturb(np.zeros((2, 3)), np.zeros((3, 2)), 1)


def _one_sample(T=6, D=3, seed=0):
    rng = np.random.default_rng(seed)
    return mts_ds(rng.normal(size=(1, D, T)) * 2, [1])


def test_dynamask_no_signal_keeps_mask():
    fit = fit_mask(CellScorer(2, 1), _one_sample(), DynamaskConfig(W=0, sparsity=0.0, steps=30), window=6)
    assert np.all(fit.mask == 0.5)


def test_dynamask_heavy_sparsity_zeroes_mask():
    fit = fit_mask(CellScorer(2, 1), _one_sample(), DynamaskConfig(sparsity=1e4, steps=100), window=6)
    assert np.all(fit.mask == 0.0)


def test_dynamask_single_cell_scorer():
    ds = _one_sample(seed=4)
    sal = dynamask_fit(CellScorer(3, 2), ds, DynamaskConfig(steps=300), window=6)
    assert sal.aggregation == "per-sample"
    assert np.unravel_index(np.argmax(sal.scores), sal.scores.shape) == (2, 3)


def test_dynamask_does_not_touch_model(small_ds):
    net = build_network("GRU", StaticLayout.of(small_ds.schema), 2, 5, 3, 0.0)
    init_params(net, RngStream(1, 0))
    model = wrap(net, small_ds, "GRU", 5)
    before = model.fingerprint()
    fit_mask(model, small_ds.subset([0]), DynamaskConfig(steps=20))
    assert model.fingerprint() == before
