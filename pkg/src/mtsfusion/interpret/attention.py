"""White-box attention wrappers (per-sample NLHA, shared HAM) and their heatmaps."""
from __future__ import annotations

import numpy as np
import torch

from ..data import Batch, Dataset, to_batch
from ..models.archs import HAMNet, NLHANet
from ..models.layers import TensorBatch
from ..models.training import HyperParams, TrainedModel, train
from .saliency import SaliencyMatrix, slot_mean


def _tensor_batch(data, window: int) -> tuple[TensorBatch, np.ndarray]:
    if isinstance(data, Dataset):
        data = to_batch(data, window)
    if isinstance(data, Batch):
        return TensorBatch.of(data), data.lengths
    raise TypeError("expected a Dataset or Batch")


def nlha_attention(model: TrainedModel, data) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample attention maps, shape (I, D, L), and the sample lengths."""
    net = model.network
    if not isinstance(net, NLHANet):
        raise TypeError("model is not an NLHA network")
    tb, lengths = _tensor_batch(data, model.window)
    with torch.no_grad():
        A = net.attention(tb).numpy()  # (I, L, D)
    return np.transpose(A, (0, 2, 1)), lengths


def nlha_heatmap(model: TrainedModel, data) -> SaliencyMatrix:
    """Mean attention over the samples observed at each slot; unreached slots are uniform."""
    A, lengths = nlha_attention(model, data)
    D = A.shape[1]
    return SaliencyMatrix(tuple(model.schema.mts_names), slot_mean(A, lengths, fill=1.0 / D),
                          "NLHA", "mean-over-samples")


def ham_heatmap(model: TrainedModel) -> SaliencyMatrix:
    net = model.network
    if not isinstance(net, HAMNet):
        raise TypeError("model is not a HAM network")
    with torch.no_grad():
        A = net.matrix().numpy()
    return SaliencyMatrix(tuple(model.schema.mts_names), A, "HAM", "shared")


def nlha_train(base: str, train_ds: Dataset, val_ds: Dataset, hp: HyperParams, seed=0,
               window: int = 14, heatmap_data: Dataset | None = None) -> tuple[TrainedModel, SaliencyMatrix]:
    """Train an NLHA-wrapped ``base`` ("GRU" or "FHSI"); heatmap averages over ``heatmap_data`` (default val)."""
    model = train(f"NLHA-{base}", hp, train_ds, val_ds, seed, window)
    return model, nlha_heatmap(model, heatmap_data if heatmap_data is not None else val_ds)


def ham_train(base: str, train_ds: Dataset, val_ds: Dataset, hp: HyperParams, seed=0,
              window: int = 14) -> tuple[TrainedModel, SaliencyMatrix]:
    model = train(f"HAM-{base}", hp, train_ds, val_ds, seed, window)
    return model, ham_heatmap(model)
