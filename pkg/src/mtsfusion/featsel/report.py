from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SelectionReport:
    method: str
    selected: tuple[str, ...]
    scores: dict[str, float]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, v in self.scores.items():
            if not np.isfinite(v):
                raise ValueError(f"{self.method}: score of {name!r} is not finite")

    def to_dict(self) -> dict:
        return {"schema_version": 1, "method": self.method, "selected": list(self.selected),
                "scores": dict(self.scores), "config": self.config}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionReport":
        return cls(d["method"], tuple(d["selected"]), dict(d["scores"]), d.get("config", {}))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def vote(reports: list[SelectionReport], min_votes: int = 2) -> SelectionReport:
    """Keep the features chosen by at least ``min_votes`` of the input reports."""
    if len(reports) < 2:
        raise ValueError("voting needs at least two reports")
    counts = Counter(name for r in reports for name in set(r.selected))
    order = []
    for r in reports:
        for name in r.selected:
            if name not in order:
                order.append(name)
    selected = tuple(n for n in order if counts[n] >= min_votes)
    return SelectionReport("vote", selected, {n: float(counts[n]) for n in order},
                           {"methods": [r.method for r in reports], "min_votes": min_votes})


def write_selection_matrix(reports: list[SelectionReport], features: list[str], path) -> None:
    """Methods x features matrix: one 0/1 row and one score row per method."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "row", *features])
        for r in reports:
            sel = set(r.selected)
            w.writerow([r.method, "selected", *(int(f in sel) for f in features)])
            w.writerow([r.method, "score", *(repr(float(r.scores.get(f, 0.0))) for f in features)])
