"""Feature x time-slot importance matrices: CSV and standalone SVG heatmaps."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

AGGREGATIONS = ("per-sample", "mean-over-samples", "shared")

_LIGHT = np.array([255.0, 255.0, 255.0])
_DARK = np.array([8.0, 48.0, 107.0])


@dataclass(frozen=True)
class SaliencyMatrix:
    features: tuple[str, ...]
    scores: np.ndarray  # (D, L)
    method: str
    aggregation: str = "mean-over-samples"

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 2 or s.shape[0] != len(self.features):
            raise ValueError(f"scores must be (D, L) with D={len(self.features)}, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("saliency scores must be finite")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        object.__setattr__(self, "scores", s)

    @property
    def n_slots(self) -> int:
        return self.scores.shape[1]

    def write_csv(self, path) -> None:
        """Slots as rows, features as columns (slot 0 = admission day)."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slot", *self.features])
            for t in range(self.n_slots):
                w.writerow([t, *(repr(float(v)) for v in self.scores[:, t])])

    @classmethod
    def read_csv(cls, path, method: str, aggregation: str = "mean-over-samples") -> "SaliencyMatrix":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        features = tuple(rows[0][1:])
        scores = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).T
        return cls(features, scores.reshape(len(features), -1), method, aggregation)


def _color(frac: float) -> str:
    rgb = np.rint(_LIGHT + (_DARK - _LIGHT) * frac).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def cell_fractions(scores: np.ndarray) -> np.ndarray:
    """Position of each cell on the colour ramp.

    A single cell is drawn fully saturated; any other constant matrix sits
    at the ramp midpoint.
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 1:
        return np.ones_like(s)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full_like(s, 0.5)
    return (s - lo) / (hi - lo)


def emit_heatmap(matrix: SaliencyMatrix, path, cell: int = 24) -> Path:
    """Deterministic SVG with features along x and time slots along y."""
    D, L = matrix.scores.shape
    frac = cell_fractions(matrix.scores)
    left, top = 40, 8 + 7 * max((len(f) for f in matrix.features), default=1)
    width = left + D * cell + 8
    height = top + L * cell + 8
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<desc>{escape(matrix.method)} ({escape(matrix.aggregation)})</desc>",
    ]
    for d in range(D):
        for t in range(L):
            parts.append(
                f'<rect class="cell" x="{left + d * cell}" y="{top + t * cell}" width="{cell}" '
                f'height="{cell}" fill="{_color(float(frac[d, t]))}"/>'
            )
    for d, name in enumerate(matrix.features):
        x = left + d * cell + cell // 2
        parts.append(
            f'<text class="label" x="{x}" y="{top - 4}" font-size="10" '
            f'transform="rotate(-90 {x} {top - 4})">{escape(name)}</text>'
        )
    for t in range(L):
        parts.append(
            f'<text class="label" x="{left - 4}" y="{top + t * cell + cell // 2 + 4}" font-size="10" '
            f'text-anchor="end">{t}</text>'
        )
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out


def slot_mean(per_sample: np.ndarray, lengths: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Average (I, D, L) maps over the samples observed at each slot.

    Slots no sample reaches get ``fill``.
    """
    I, D, L = per_sample.shape
    obs = (np.arange(L)[None, :] < np.asarray(lengths)[:, None]).astype(float)  # (I, L)
    count = obs.sum(axis=0)
    total = np.einsum("idl,il->dl", per_sample, obs)
    out = np.full((D, L), float(fill))
    seen = count > 0
    out[:, seen] = total[:, seen] / count[seen]
    return out
