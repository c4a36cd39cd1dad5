"""Tidy trace table and static suboptimality charts."""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from ..trace import TrainingTrace
from .experiment import read_manifest

TABLE_NAME = "traces_long.csv"
TABLE_COLUMNS = ("dataset", "spectrum", "method", "label", "run_id", "seed",
                 "k", "passes", "seconds", "objective", "subopt")
DEFAULT_FLOOR = 1e-12


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", text).strip("_")


def find_trace_files(location) -> list[Path]:
    """Trace CSVs under a folder (recursively), or the given files as paths."""
    if isinstance(location, (str, Path)) and Path(location).is_dir():
        return sorted(p for p in Path(location).rglob("*.csv") if p.name != TABLE_NAME)
    if isinstance(location, (str, Path)):
        return [Path(location)]
    return [Path(p) for p in location]


def collect_traces(location) -> list[dict]:
    """Load trace CSVs with dataset/spectrum/method labels from their manifest.

    Each file is matched against the manifest in its own folder; traces the
    manifest does not know are labelled ``unknown``.
    """
    manifests: dict[Path, dict] = {}
    out = []
    for path in find_trace_files(location):
        folder = path.parent
        if folder not in manifests:
            manifest = read_manifest(folder) or {}
            manifests[folder] = manifest
        manifest = manifests[folder]
        by_file = {e.get("trace"): (rid, e) for rid, e in manifest.get("runs", {}).items()
                   if e.get("status") == "ok"}
        rid, entry = by_file.get(path.name, (path.stem, {}))
        method = entry.get("method") or path.stem.split("-", 1)[0]
        trace = TrainingTrace.from_csv(path, method=method)
        out.append({
            "trace": trace, "run_id": rid, "method": method,
            "label": entry.get("label", method), "seed": entry.get("seed", ""),
            "dataset": manifest.get("dataset", "unknown"),
            "spectrum": manifest.get("spectrum", "unknown"),
        })
    return out


def write_table(records, path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_COLUMNS)
        for rec in records:
            for r in rec["trace"].rows:
                writer.writerow([rec["dataset"], rec["spectrum"], rec["method"], rec["label"],
                                 rec["run_id"], rec["seed"], r.k, repr(r.passes), repr(r.seconds),
                                 repr(r.objective), "" if r.subopt is None else repr(r.subopt)])
    return Path(path)


def _method_curve(records, x_axis):
    """Seed-averaged curve of the best setting (lowest final mean suboptimality)."""
    by_label: dict[str, list] = {}
    for rec in records:
        by_label.setdefault(rec["label"], []).append(rec["trace"])
    best = None
    for label, traces in by_label.items():
        rows = min(len(t) for t in traces)
        ys = np.array([t.column("subopt")[:rows] for t in traces])
        if np.all(np.isnan(ys)):
            continue
        xs = np.array([t.column(x_axis)[:rows] for t in traces]).mean(axis=0)
        y = np.nanmean(ys, axis=0)
        score = y[-1] if np.isfinite(y[-1]) else np.inf
        if best is None or score < best[0]:
            best = (score, label, xs, y)
    return best


def plot_group(records, path, x_axis="passes", floor=DEFAULT_FLOOR, title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # keep labels as SVG text rather than glyph outlines
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    clamped_any = False
    methods = sorted({r["method"] for r in records})
    for method in methods:
        best = _method_curve([r for r in records if r["method"] == method], x_axis)
        if best is None:
            continue
        _, label, xs, y = best
        ok = np.isfinite(y)
        low = ok & (y <= floor)
        yc = np.where(low, floor, y)
        (line,) = ax.plot(xs[ok], yc[ok], label=label, lw=1.5)
        if low.any():
            clamped_any = True
            ax.plot(xs[low], yc[low], ls="none", marker="v", ms=4, color=line.get_color())
    ax.set_yscale("log")
    ax.set_xlabel("passes" if x_axis == "passes" else "seconds")
    ax.set_ylabel("suboptimality")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    if clamped_any:
        fig.text(0.01, 0.01, f"v: suboptimality at or below {floor:g} (negative: better than the reference), drawn at the floor",
                 fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def emit_plots(traces, x_axis: str = "passes", floor: float = DEFAULT_FLOOR,
               out_dir=None) -> list[Path]:
    """Write the long-format table and one SVG per (dataset, spectrum).

    ``traces`` is a folder (searched recursively, so several experiments can
    share one chart set) or a list of trace files. Suboptimality at or below
    ``floor``, including negative values, is drawn at the floor with a
    marker. Returns the written paths, table first.
    """
    if x_axis not in ("passes", "seconds"):
        raise ValueError("x axis must be 'passes' or 'seconds'")
    if not floor > 0:
        raise ValueError("clamp floor must be positive")
    records = collect_traces(traces)
    if not records:
        raise ValueError(f"no trace files found in {traces}")
    if out_dir is None:
        out_dir = traces if Path(str(traces)).is_dir() else Path(find_trace_files(traces)[0]).parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_table(records, out_dir / TABLE_NAME)]
    groups: dict[tuple, list] = {}
    for rec in records:
        groups.setdefault((rec["dataset"], rec["spectrum"]), []).append(rec)
    for (dataset, spectrum), recs in sorted(groups.items()):
        name = f"subopt_{_slug(dataset)}_{_slug(spectrum)}_{x_axis}.svg"
        written.append(plot_group(recs, out_dir / name, x_axis, floor, f"{dataset}, {spectrum}"))
    return written
