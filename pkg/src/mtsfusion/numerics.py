"""Dense numeric kernel shared by every model and selection routine.

Tensors are ``torch.float64``; reverse-mode gradients come from torch
autograd. Everything in this module that the rest of the package relies
on for correctness (Adam, the finite-difference checker, RNG streams) is
implemented here explicitly.
"""
from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np
import torch

DTYPE = torch.float64
PROB_EPS = 1e-7


class ShapeError(ValueError):
    """Raised when a gradient or tensor does not match the parameter it targets."""

    def __init__(self, name: str, expected, got):
        super().__init__(f"parameter {name!r}: expected shape {tuple(expected)}, got {tuple(got)}")
        self.name = name


def as_tensor(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def clip_probs(p):
    """Clip probabilities away from 0 and 1 before taking logarithms."""
    if isinstance(p, torch.Tensor):
        return p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    shifted = x - x.max(dim=dim, keepdim=True).values.detach()
    e = torch.exp(shifted)
    return e / e.sum(dim=dim, keepdim=True)


# ---------------------------------------------------------------------------
# Parameters and Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: torch.Tensor
    v: torch.Tensor


@dataclass
class ParamSet:
    """Named parameter tensors plus per-parameter Adam moments.

    The tensors are shared with whatever module produced them, so an
    in-place update here is visible to that module.
    """

    params: dict[str, torch.Tensor]
    state: dict[str, AdamState] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def from_module(cls, module: torch.nn.Module) -> "ParamSet":
        return cls({n: p for n, p in module.named_parameters() if p.requires_grad})

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, object]) -> "ParamSet":
        return cls({k: as_tensor(v).requires_grad_(True) for k, v in arrays.items()})

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def grads(self) -> dict[str, torch.Tensor]:
        """Current ``.grad`` of every parameter (zeros where autograd left none)."""
        return {
            n: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
            for n, p in self.params.items()
        }

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def snapshot(self) -> dict[str, torch.Tensor]:
        return {n: p.detach().clone() for n, p in self.params.items()}

    def load(self, values: Mapping[str, torch.Tensor]) -> None:
        with torch.no_grad():
            for n, p in self.params.items():
                p.copy_(values[n])


def adam_step(
    params: ParamSet,
    grads: Mapping[str, torch.Tensor],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParamSet:
    """Apply one bias-corrected Adam update to ``params`` in place."""
    b1, b2 = betas
    if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
        raise ValueError(f"betas must lie in [0, 1), got {betas}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    for name, p in params.items():
        if name not in grads:
            raise ShapeError(name, p.shape, ())
        if tuple(grads[name].shape) != tuple(p.shape):
            raise ShapeError(name, p.shape, grads[name].shape)
    params.step += 1
    t = params.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name].to(DTYPE)
            st = params.state.get(name)
            if st is None:
                st = params.state[name] = AdamState(torch.zeros_like(p), torch.zeros_like(p))
            st.m.mul_(b1).add_(g, alpha=1.0 - b1)
            st.v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            if lr == 0.0:
                continue
            update = (st.m / c1) / (torch.sqrt(st.v / c2) + eps)
            p.sub_(lr * update)
    return params


# ---------------------------------------------------------------------------
# Finite-difference gradient check
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[ParamSet], torch.Tensor],
    params: ParamSet,
    h: float = 1e-5,
    names: Iterable[str] | None = None,
) -> float:
    """Max relative error between autograd and central differences.

    The error for one coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    ``f`` must return a scalar tensor built from the tensors in ``params``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params.zero_grad()
    out = f(params)
    if not torch.isfinite(out).all():
        raise FloatingPointError("f is not finite at the base point")
    out.backward()
    analytic = params.grads()
    params.zero_grad()

    worst = 0.0
    selected = list(names) if names is not None else list(params.params)
    with torch.no_grad():
        for name in selected:
            p = params[name]
            flat = p.view(-1)
            a = analytic[name].view(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                fp = float(f(params))
                flat[k] = orig - h
                fm = float(f(params))
                flat[k] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise FloatingPointError(f"f not finite when perturbing {name}[{k}]")
                num = (fp - fm) / (2.0 * h)
                err = abs(a[k].item() - num) / max(1.0, abs(num))
                worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Counter-based RNG streams
# ---------------------------------------------------------------------------


class RngStream:
    """Deterministic random stream keyed by ``(root, task path)``.

    Streams are built on Philox through ``numpy.random.SeedSequence`` so the
    output depends only on the key and the number of draws taken, never on
    which thread or process consumes it.
    """

    def __init__(self, root: int, task: int | tuple[int, ...] = 0):
        self.root = int(root) & 0xFFFFFFFFFFFFFFFF
        self.key = (task,) if isinstance(task, int) else tuple(task)
        seq = np.random.SeedSequence(entropy=self.root, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def child(self, task: int) -> "RngStream":
        return RngStream(self.root, self.key + (int(task),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None, scale: float = 1.0):
        return self._gen.normal(0.0, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def bits64(self) -> int:
        return int(self._gen.integers(0, 2**64, dtype=np.uint64))

    def torch_generator(self) -> torch.Generator:
        """A torch generator seeded from this stream (consumes one draw)."""
        g = torch.Generator()
        g.manual_seed(int(self._gen.integers(0, 2**63 - 1)))
        return g

    def __repr__(self) -> str:
        return f"RngStream(root={self.root}, key={self.key})"


def rng_stream(root: int, task: int | tuple[int, ...] = 0) -> RngStream:
    return RngStream(root, task)
