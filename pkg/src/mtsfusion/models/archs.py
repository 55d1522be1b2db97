"""Classifier architectures. Every ``forward`` maps a TensorBatch to probabilities of shape (I,)."""
from __future__ import annotations

import torch
from torch import nn

from ..data import StaticLayout
from ..numerics import DTYPE, softmax
from .layers import GRN, Dense, Dropout, GRUSeq, StaticEmbedding, StaticEncoder, TensorBatch

ARCHITECTURES = ("MLP", "GRU", "JHF", "FHSI", "NLHA-GRU", "NLHA-FHSI", "HAM-GRU", "HAM-FHSI")
FUSIONS = ("LFCO", "LFLR")


class MLPNet(nn.Module):
    """Static-only classifier on numeric/binary columns plus one-hot categoricals."""

    def __init__(self, layout: StaticLayout, width: int, dropout: float = 0.0, n_layers: int = 1):
        super().__init__()
        self.cat_sizes = list(layout.cat_sizes)
        n_in = len(layout.num_names) + sum(self.cat_sizes)
        dims = [n_in] + [width] * n_layers
        self.hidden = nn.ModuleList(Dense(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.drop = Dropout(dropout)
        self.out = Dense(dims[-1], 1)

    def encode(self, num, cat):
        parts = [num]
        for j, v in enumerate(self.cat_sizes):
            parts.append(torch.nn.functional.one_hot(cat[:, j], v).to(DTYPE))
        return torch.cat(parts, dim=-1)

    def forward(self, b: TensorBatch):
        h = self.encode(b.num, b.cat)
        for layer in self.hidden:
            h = self.drop(torch.nn.functional.leaky_relu(layer(h)))
        return torch.sigmoid(self.out(h)).squeeze(-1)


class GRUNet(nn.Module):
    """GRU over the MTS; the probability is read from the last observed hidden state."""

    def __init__(self, n_features: int, width: int, dropout: float = 0.0):
        super().__init__()
        self.gru = GRUSeq(n_features, width)
        self.drop = Dropout(dropout)
        self.out = Dense(width, 1)

    def forward(self, b: TensorBatch, h0=None):
        h = self.gru(b.X, b.mask, h0)
        return torch.sigmoid(self.out(self.drop(h))).squeeze(-1)


class FHSINet(nn.Module):
    """Static encoder context initializes the GRU hidden state."""

    def __init__(self, layout: StaticLayout, n_features: int, width: int, dropout: float = 0.0):
        super().__init__()
        self.encoder = StaticEncoder(layout, width, dropout)
        self.rnn = GRUNet(n_features, width, dropout)

    def forward(self, b: TensorBatch):
        context, _ = self.encoder(b.num, b.cat)
        return self.rnn(b, h0=context)

    def selection_weights(self, b: TensorBatch):
        return self.encoder(b.num, b.cat)[1]


class JHFNet(nn.Module):
    """Concatenates the GRU summary with static embeddings before one dense output layer."""

    def __init__(self, layout: StaticLayout, n_features: int, width: int, dropout: float = 0.0):
        super().__init__()
        self.gru = GRUSeq(n_features, width)
        self.static_num = Dense(len(layout.num_names), width) if layout.num_names else None
        self.embed = StaticEmbedding(StaticLayout((), layout.cat_names, layout.cat_sizes), width)
        n_static = (width if layout.num_names else 0) + sum(t.shape[1] for t in self.embed.tables)
        self.drop = Dropout(dropout)
        self.out = Dense(width + n_static, 1)

    def forward(self, b: TensorBatch):
        parts = [self.gru(b.X, b.mask)]
        if self.static_num is not None:
            parts.append(self.static_num(b.num))
        parts.extend(self.embed(b.num[:, :0], b.cat))
        return torch.sigmoid(self.out(self.drop(torch.cat(parts, dim=-1)))).squeeze(-1)


class NLHANet(nn.Module):
    """Per-sample attention: a GRN maps each time-slot column to logits over features.

    Softmax runs across features within each slot; the attention-modulated
    MTS feeds the wrapped classifier.
    """

    def __init__(self, inner: nn.Module, n_features: int, width: int, dropout: float = 0.0):
        super().__init__()
        self.attn = GRN(n_features, width, n_features, dropout)
        self.inner = inner

    def attention(self, b: TensorBatch):
        return softmax(self.attn(b.X), dim=-1)  # (I, L, D)

    def forward(self, b: TensorBatch):
        return self.inner(b.with_X(self.attention(b) * b.X))


class HAMNet(nn.Module):
    """One learnable attention matrix shared by every sample (column softmax over features)."""

    def __init__(self, inner: nn.Module, n_features: int, n_slots: int):
        super().__init__()
        self.logits = nn.Parameter(torch.zeros(n_features, n_slots, dtype=DTYPE))
        self.inner = inner

    def matrix(self):
        return softmax(self.logits, dim=0)  # (D, L)

    def forward(self, b: TensorBatch):
        L = b.X.shape[1]
        A = self.matrix()[:, :L].T  # (L, D)
        return self.inner(b.with_X(A.unsqueeze(0) * b.X))


def build_network(arch: str, layout: StaticLayout, n_features: int, n_slots: int,
                  width: int, dropout: float) -> nn.Module:
    if arch == "MLP":
        return MLPNet(layout, width, dropout)
    if arch == "GRU":
        return GRUNet(n_features, width, dropout)
    if arch == "JHF":
        return JHFNet(layout, n_features, width, dropout)
    if arch == "FHSI":
        return FHSINet(layout, n_features, width, dropout)
    if arch.startswith(("NLHA-", "HAM-")):
        kind, base = arch.split("-", 1)
        inner = build_network(base, layout, n_features, n_slots, width, dropout)
        if kind == "NLHA":
            return NLHANet(inner, n_features, width, dropout)
        return HAMNet(inner, n_features, n_slots)
    raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
