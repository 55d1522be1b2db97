"""Building blocks: dense layers, GRU, GRN, entity embeddings, static encoder."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..data import Batch, StaticLayout
from ..numerics import DTYPE, RngStream, softmax


@dataclass
class TensorBatch:
    """Torch view of a :class:`~mtsfusion.data.Batch`."""

    X: torch.Tensor  # (I, L, D)
    mask: torch.Tensor  # (I, L)
    num: torch.Tensor  # (I, G_num)
    cat: torch.Tensor  # (I, G_cat) long
    y: torch.Tensor

    @classmethod
    def of(cls, b: Batch) -> "TensorBatch":
        return cls(
            torch.as_tensor(b.X, dtype=DTYPE),
            torch.as_tensor(b.mask, dtype=DTYPE),
            torch.as_tensor(b.static_num, dtype=DTYPE),
            torch.as_tensor(b.static_cat, dtype=torch.long),
            torch.as_tensor(b.y, dtype=DTYPE),
        )

    def take(self, idx) -> "TensorBatch":
        idx = torch.as_tensor(np.asarray(idx), dtype=torch.long)
        return TensorBatch(self.X[idx], self.mask[idx], self.num[idx], self.cat[idx], self.y[idx])

    def with_X(self, X: torch.Tensor) -> "TensorBatch":
        return TensorBatch(X, self.mask, self.num, self.cat, self.y)

    def __len__(self) -> int:
        return self.X.shape[0]


class Dropout(nn.Module):
    """Inverted dropout drawing from an explicit generator (set by the trainer)."""

    def __init__(self, p: float):
        super().__init__()
        self.p = float(p)
        self.generator: torch.Generator | None = None

    def forward(self, x):
        if not self.training or self.p == 0.0:
            return x
        keep = torch.rand(x.shape, generator=self.generator, dtype=x.dtype) >= self.p
        return x * keep / (1.0 - self.p)


class Dense(nn.Module):
    def __init__(self, n_in: int, n_out: int, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(n_out, n_in, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(n_out, dtype=DTYPE)) if bias else None

    def forward(self, x):
        out = x @ self.weight.T
        return out + self.bias if self.bias is not None else out


class LayerNorm(nn.Module):
    def __init__(self, n: int, eps: float = 1e-5):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(n, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(n, dtype=DTYPE))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(dim=-1, keepdim=True)
        var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
        return (x - mu) / torch.sqrt(var + self.eps) * self.gain + self.bias


class GRN(nn.Module):
    """Gated residual network: ``LayerNorm(skip(a) + GLU(dense(ELU(dense(a)))))``."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, dropout: float = 0.0):
        super().__init__()
        self.fc1 = Dense(n_in, n_hidden)
        self.fc2 = Dense(n_hidden, n_out)
        self.glu_value = Dense(n_out, n_out)
        self.glu_gate = Dense(n_out, n_out)
        self.skip = None if n_in == n_out else Dense(n_in, n_out)
        self.drop = Dropout(dropout)
        self.norm = LayerNorm(n_out)

    def forward(self, a):
        eta = self.fc2(torch.nn.functional.elu(self.fc1(a)))
        eta = self.drop(eta)
        glu = self.glu_value(eta) * torch.sigmoid(self.glu_gate(eta))
        res = a if self.skip is None else self.skip(a)
        return self.norm(res + glu)


class GRUCell(nn.Module):
    """``h' = (1 - z) * h + z * tanh(W_n x + U_n (r * h) + b_n)``."""

    def __init__(self, n_in: int, n_hidden: int):
        super().__init__()
        self.H = n_hidden
        self.W = Dense(n_in, 3 * n_hidden)  # rows: reset, update, candidate
        self.U = Dense(n_hidden, 3 * n_hidden, bias=False)

    def forward(self, x, h):
        H = self.H
        wx = self.W(x)
        Uw = self.U.weight
        r = torch.sigmoid(wx[:, :H] + h @ Uw[:H].T)
        z = torch.sigmoid(wx[:, H : 2 * H] + h @ Uw[H : 2 * H].T)
        n = torch.tanh(wx[:, 2 * H :] + (r * h) @ Uw[2 * H :].T)
        return (1.0 - z) * h + z * n


class GRUSeq(nn.Module):
    """Runs a GRU cell over padded sequences; padded slots leave the state unchanged."""

    def __init__(self, n_in: int, n_hidden: int):
        super().__init__()
        self.cell = GRUCell(n_in, n_hidden)
        self.H = n_hidden

    def forward(self, X, mask, h0=None, return_states: bool = False):
        I, L, _ = X.shape
        h = torch.zeros(I, self.H, dtype=X.dtype) if h0 is None else h0
        states = []
        for t in range(L):
            m = mask[:, t : t + 1]
            h_new = self.cell(X[:, t, :], h)
            h = m * h_new + (1.0 - m) * h
            if return_states:
                states.append(h)
        if return_states:
            return h, torch.stack(states, dim=1)
        return h


def embedding_dim(vocab: int, width: int) -> int:
    return max(1, min(math.ceil(vocab / 2), width))


class StaticEmbedding(nn.Module):
    """Per-variable vectors: an entity embedding for each categorical, a linear map otherwise.

    With ``project_to`` set, every variable ends up as a vector of that size
    (categorical embeddings get an extra linear projection).
    """

    def __init__(self, layout: StaticLayout, width: int, project_to: int | None = None):
        super().__init__()
        self.layout = layout
        out = project_to or width
        self.num_maps = nn.ModuleList(Dense(1, out) for _ in layout.num_names)
        self.tables = nn.ParameterList(
            nn.Parameter(torch.zeros(v, embedding_dim(v, width), dtype=DTYPE)) for v in layout.cat_sizes
        )
        self.cat_proj = nn.ModuleList(
            Dense(embedding_dim(v, width), project_to) for v in layout.cat_sizes
        ) if project_to else None

    @property
    def names(self) -> list[str]:
        return list(self.layout.num_names) + list(self.layout.cat_names)

    def forward(self, num, cat) -> list[torch.Tensor]:
        vecs = [m(num[:, j : j + 1]) for j, m in enumerate(self.num_maps)]
        for j, table in enumerate(self.tables):
            e = table[cat[:, j]]
            vecs.append(self.cat_proj[j](e) if self.cat_proj is not None else e)
        return vecs


class StaticEncoder(nn.Module):
    """Embedding + variable selection (GRN -> softmax) + per-variable GRNs -> context vector."""

    def __init__(self, layout: StaticLayout, width: int, dropout: float = 0.0):
        super().__init__()
        self.embed = StaticEmbedding(layout, width, project_to=width)
        G = len(self.embed.names)
        self.G = G
        self.selector = GRN(G * width, width, G, dropout)
        self.var_grns = nn.ModuleList(GRN(width, width, width, dropout) for _ in range(G))

    def forward(self, num, cat):
        vecs = self.embed(num, cat)
        weights = softmax(self.selector(torch.cat(vecs, dim=-1)), dim=-1)
        processed = torch.stack([grn(v) for grn, v in zip(self.var_grns, vecs)], dim=1)
        context = (weights.unsqueeze(-1) * processed).sum(dim=1)
        return context, weights


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def init_params(module: nn.Module, rng: RngStream) -> None:
    """Glorot-uniform for matrices, zeros for biases and logits, ones for norm gains."""
    with torch.no_grad():
        for name, p in module.named_parameters():
            leaf = name.rsplit(".", 1)[-1]
            if leaf == "gain":
                p.fill_(1.0)
            elif p.ndim == 2 and leaf != "logits":
                fan_out, fan_in = p.shape
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                p.copy_(torch.as_tensor(rng.uniform(tuple(p.shape)) * 2 * bound - bound, dtype=DTYPE))
            else:
                p.zero_()
