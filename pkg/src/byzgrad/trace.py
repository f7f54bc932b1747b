"""Run traces and their CSV / JSONL serializations."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

CSV_COLUMNS = ("t", "alpha", "diameter", "max_dist_to_Xstar", "gap")


@dataclass
class RoundRecord:
    """Everything observable about one synchronous round.

    ``states`` are the normal states x(t) *before* the update, rows ordered
    like ``RunTrace.normal``.  ``picks[i]`` holds agent i's intersection
    points y_ij(t), one row per A-set.
    """

    t: int
    alpha: float
    states: np.ndarray
    v: np.ndarray
    picks: dict[int, np.ndarray] | None = None
    certificates: dict[int, list] | None = None
    inbox: dict[int, dict[int, np.ndarray]] | None = None
    metrics: dict[str, float] = field(default_factory=dict)
    containment: bool | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "type": "round",
            "t": self.t,
            "alpha": self.alpha,
            "states": self.states.tolist(),
            "v": self.v.tolist(),
            "metrics": _clean(self.metrics),
        }
        if self.picks is not None:
            out["picks"] = {str(i): p.tolist() for i, p in self.picks.items()}
        if self.certificates is not None:
            out["certificates"] = {
                str(i): [
                    {"point": c.point.tolist(), "weights": c.weights.tolist()} for c in certs
                ]
                for i, certs in self.certificates.items()
            }
        if self.containment is not None:
            out["containment"] = self.containment
        return out

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> RoundRecord:
        picks = data.get("picks")
        return cls(
            t=int(data["t"]),
            alpha=float(data["alpha"]),
            states=np.asarray(data["states"], dtype=float),
            v=np.asarray(data["v"], dtype=float),
            picks=None if picks is None else {int(i): np.asarray(p, float) for i, p in picks.items()},
            metrics={k: (math.nan if v is None else float(v)) for k, v in data.get("metrics", {}).items()},
            containment=data.get("containment"),
        )


@dataclass
class RunTrace:
    header: dict[str, Any]
    normal: tuple[int, ...]
    rounds: list[RoundRecord] = field(default_factory=list)
    final_states: np.ndarray | None = None
    final_metrics: dict[str, float] = field(default_factory=dict)
    outcome: str = "ok"
    message: str = ""

    @property
    def horizon(self) -> int:
        return len(self.rounds)

    def state_history(self) -> np.ndarray:
        """x(0..T) stacked as (T+1, |H|, d); the last slice is the final state."""
        parts = [r.states for r in self.rounds]
        if self.final_states is not None:
            parts.append(self.final_states)
        return np.stack(parts)

    # -- serialization -------------------------------------------------

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for rec in self.rounds:
                writer.writerow([rec.t, rec.alpha] + [rec.metrics.get(c, math.nan) for c in CSV_COLUMNS[2:]])
            if self.final_states is not None:
                writer.writerow(
                    [self.horizon, ""] + [self.final_metrics.get(c, math.nan) for c in CSV_COLUMNS[2:]]
                )

    def iter_json(self) -> Iterator[dict[str, Any]]:
        yield {"type": "header", "normal": list(self.normal), **_clean(self.header)}
        for rec in self.rounds:
            yield rec.to_json()
        yield {
            "type": "final",
            "t": self.horizon,
            "states": None if self.final_states is None else self.final_states.tolist(),
            "metrics": _clean(self.final_metrics),
            "outcome": self.outcome,
            "message": self.message,
        }

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for line in self.iter_json():
                fh.write(json.dumps(line) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> RunTrace:
        header: dict[str, Any] = {}
        normal: tuple[int, ...] = ()
        rounds: list[RoundRecord] = []
        trace = None
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                data = json.loads(line)
                kind = data.pop("type")
                if kind == "header":
                    normal = tuple(data.pop("normal"))
                    header = data
                elif kind == "round":
                    rounds.append(RoundRecord.from_json(data))
                elif kind == "final":
                    trace = cls(
                        header,
                        normal,
                        rounds,
                        None if data["states"] is None else np.asarray(data["states"], float),
                        {k: (math.nan if v is None else float(v)) for k, v in data["metrics"].items()},
                        data.get("outcome", "ok"),
                        data.get("message", ""),
                    )
        if trace is None:
            trace = cls(header, normal, rounds)
        return trace


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
