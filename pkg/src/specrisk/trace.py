"""Training traces: per-checkpoint passes, wall time, objective and suboptimality."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = ("k", "passes", "seconds", "objective", "subopt")


def suboptimality(objective_value: float, objective_at_w0: float, objective_at_ref: float) -> float:
    """Relative optimality gap, 1 at the starting point and 0 at the reference.

    Negative values mean the iterate beats the reference solution.
    """
    den = objective_at_w0 - objective_at_ref
    if abs(den) < 1e-15:
        raise ZeroDivisionError("starting point is already at the reference objective")
    return (objective_value - objective_at_ref) / den


class Stopwatch:
    """Monotonic clock that can be paused while metrics are computed."""

    def __init__(self):
        self._elapsed = 0.0
        self._started = None

    def start(self):
        if self._started is None:
            self._started = time.perf_counter()
        return self

    def pause(self):
        if self._started is not None:
            self._elapsed += time.perf_counter() - self._started
            self._started = None

    @property
    def elapsed(self) -> float:
        extra = 0.0 if self._started is None else time.perf_counter() - self._started
        return self._elapsed + extra


@dataclass
class TraceRow:
    k: int
    passes: float
    seconds: float
    objective: float
    subopt: float | None = None


@dataclass
class TrainingTrace:
    method: str
    rows: list[TraceRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    w_final: np.ndarray | None = None
    iterates: list[np.ndarray] | None = None

    def record(self, k: int, passes: float, seconds: float, objective: float) -> None:
        if self.rows:
            last = self.rows[-1]
            if passes < last.passes or seconds < last.seconds:
                raise ValueError("trace rows must have nondecreasing passes and seconds")
        self.rows.append(TraceRow(int(k), float(passes), float(seconds), float(objective)))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        vals = [getattr(r, name) for r in self.rows]
        return np.array([np.nan if v is None else v for v in vals], dtype=np.float64)

    @property
    def final_objective(self) -> float:
        return self.rows[-1].objective

    def attach_reference(self, objective_at_w0: float, objective_at_ref: float) -> None:
        for r in self.rows:
            r.subopt = suboptimality(r.objective, objective_at_w0, objective_at_ref)
        self.metadata["objective_at_w0"] = objective_at_w0
        self.metadata["objective_at_ref"] = objective_at_ref

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for r in self.rows:
                writer.writerow([
                    r.k,
                    repr(r.passes),
                    repr(r.seconds),
                    repr(r.objective),
                    "" if r.subopt is None else repr(r.subopt),
                ])

    @classmethod
    def from_csv(cls, path, method: str = "") -> "TrainingTrace":
        trace = cls(method=method)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"{path}: header {header!r} does not match {TRACE_COLUMNS}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(TRACE_COLUMNS):
                    raise ValueError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields")
                trace.record(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
                if row[4] != "":
                    trace.rows[-1].subopt = float(row[4])
        return trace


def validate_trace_file(path) -> list[str]:
    """Schema and monotonicity problems of a trace file (empty when valid)."""
    problems = []
    try:
        trace = TrainingTrace.from_csv(path)
    except (ValueError, OSError) as exc:
        return [str(exc)]
    for r in trace.rows:
        if not math.isfinite(r.objective):
            problems.append(f"row k={r.k}: non-finite objective")
    return problems
