"""Run every (method, setting, seed) of a config and persist traces plus a manifest."""

from __future__ import annotations

import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..baselines import (BaselineConfig, ReferenceNotConverged, reference_solution,
                         run_lsvrg, run_prospect, run_sgd)
from ..objective import ObjectiveModel
from ..sorel import practical_schedule, run_sorel, theoretical_schedule
from ..spectra import make_spectrum
from ..trace import TrainingTrace
from .config import ExperimentConfig, RunSpec
from .data import load_csv, make_synthetic, standardize

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
LAST_ROWS = 10


def build_model(cfg: ExperimentConfig) -> ObjectiveModel:
    data = cfg.data
    if data["source"] == "synthetic":
        ds = make_synthetic(n=data["n"], d=data["d"], seed=data["seed"], noise=data["noise"],
                            weight_scale=data["weight_scale"], feature_scale=data["feature_scale"])
    else:
        ds = load_csv(data["source"])
    if data["standardize"]:
        ds, _ = standardize(ds)
    return ObjectiveModel(ds, loss_kind=data["loss"], reg_mu=data["mu"], w_radius=data["w_radius"])


def dataset_label(cfg: ExperimentConfig) -> str:
    src = cfg.data["source"]
    if src == "synthetic":
        return f"synthetic-n{cfg.data['n']}-d{cfg.data['d']}-s{cfg.data['seed']}"
    return Path(src).stem


def spectrum_label(cfg: ExperimentConfig) -> str:
    return f"{cfg.spectrum_family}({cfg.spectrum_param:g})"


def execute_run(model: ObjectiveModel, sigma, spec: RunSpec, pass_budget: float) -> TrainingTrace:
    """Dispatch one run to its optimiser."""
    p = spec.params
    if spec.method == "sorel":
        if p["mode"] == "practical":
            sched = practical_schedule(model.n, p["C"], p["alpha"], batch_size=p["batch_size"],
                                       G=model.lipschitz_G)
        else:
            sched = theoretical_schedule(model.reg_mu, model.smoothness_L, model.lipschitz_G,
                                         c_T=p["c_T"], m_rule=p["m_rule"], inner=p["inner"])
        return run_sorel(model, sigma, sched, K=p["max_outer"], seed=spec.seed,
                         pass_budget=pass_budget)
    kwargs = {"step_size": p["step_size"], "seed": spec.seed, "pass_budget": pass_budget}
    if spec.method == "sgd":
        return run_sgd(model, sigma, BaselineConfig("sgd", batch_size=p["batch_size"], **kwargs))
    if spec.method == "lsvrg":
        return run_lsvrg(model, sigma, BaselineConfig(
            "lsvrg", epoch_length=p["epoch_length"] or None, **kwargs))
    if spec.method == "prospect":
        return run_prospect(model, sigma, BaselineConfig("prospect", **kwargs))
    raise ValueError(f"unknown method {spec.method!r}")


def _reference_path(cfg):
    return cfg.output_dir / f"reference-{cfg.reference_key()}.json"


def get_reference(cfg: ExperimentConfig, model=None, sigma=None) -> dict:
    """Reference objective for the config's (dataset, spectrum, mu), cached on disk."""
    path = _reference_path(cfg)
    if path.is_file():
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    model = model or build_model(cfg)
    sigma = sigma or make_spectrum(cfg.spectrum_family, model.n, cfg.spectrum_param)
    try:
        ref = reference_solution(model, sigma, tol=cfg.reference_tol)
        converged = True
    except ReferenceNotConverged as exc:
        log.warning("%s", exc)
        ref, converged = exc.result, False
    w0 = np.zeros(model.d)
    out = {
        "w": ref.w.tolist(), "objective": ref.objective, "gap": ref.gap,
        "iterations": ref.iterations, "converged": converged,
        "objective_at_w0": model.primal_objective(sigma, w0),
        "dataset": dataset_label(cfg), "spectrum": spectrum_label(cfg), "mu": model.reg_mu,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, sort_keys=True, indent=2)
    return out


@dataclass
class _Job:
    cfg: ExperimentConfig
    spec: RunSpec
    run_id: str
    reference: dict


def _run_job(job: _Job) -> dict:
    """Worker body; builds its own model so nothing mutable is shared."""
    entry = {"method": job.spec.method, "params": job.spec.params, "seed": job.spec.seed,
             "label": job.spec.label()}
    t0 = time.perf_counter()
    try:
        model = build_model(job.cfg)
        sigma = make_spectrum(job.cfg.spectrum_family, model.n, job.cfg.spectrum_param)
        trace = execute_run(model, sigma, job.spec, job.cfg.pass_budget)
        trace.attach_reference(job.reference["objective_at_w0"], job.reference["objective"])
        path = job.cfg.output_dir / f"{job.run_id}.csv"
        trace.to_csv(path)
        subopt = trace.column("subopt")
        entry.update(status="ok", trace=path.name, rows=len(trace),
                     final_subopt=float(subopt[-1]),
                     last_rows_mean_subopt=float(np.mean(subopt[-LAST_ROWS:])),
                     passes=trace.rows[-1].passes)
    except Exception as exc:  # recorded, the other runs continue
        entry.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                     traceback=traceback.format_exc(limit=3))
    entry["elapsed"] = time.perf_counter() - t0
    return entry


def read_manifest(output_dir) -> dict | None:
    path = Path(output_dir) / MANIFEST_NAME
    if not path.is_file():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_manifest(output_dir, manifest: dict) -> Path:
    path = Path(output_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")
    tmp.replace(path)
    return path


def summarize(runs: dict) -> dict:
    """Mean over seeds of the last-rows suboptimality for each method setting."""
    groups: dict[str, list] = {}
    for entry in runs.values():
        if entry.get("status") == "ok":
            groups.setdefault(entry["label"], []).append(entry["last_rows_mean_subopt"])
    table = {label: {"mean_last_subopt": float(np.mean(v)), "seeds": len(v)}
             for label, v in groups.items()}
    best = {}
    for label, row in table.items():
        method = label.split("[", 1)[0]
        score = row["mean_last_subopt"]
        if math.isfinite(score) and (method not in best or score < table[best[method]]["mean_last_subopt"]):
            best[method] = label
    return {"settings": table, "best": best}


def run_experiment(cfg: ExperimentConfig, *, force: bool = False) -> dict:
    """Execute all runs of ``cfg``; returns the manifest that was written.

    A run is skipped when the manifest already holds a successful entry with
    the same content hash and its trace file is still present.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    old = read_manifest(out) or {}
    old_runs = old.get("runs", {})

    runs, todo = {}, []
    for spec in cfg.runs():
        rid = cfg.run_id(spec)
        prev = old_runs.get(rid)
        if (not force and prev and prev.get("status") == "ok"
                and prev.get("run_hash") == cfg.run_hash(spec)
                and (out / prev.get("trace", "")).is_file()):
            runs[rid] = dict(prev, cache="hit")
        else:
            todo.append((rid, spec))

    reference = None
    if todo:
        try:
            if force:
                _reference_path(cfg).unlink(missing_ok=True)
            reference = get_reference(cfg)
        except Exception as exc:
            for rid, spec in todo:
                runs[rid] = {"method": spec.method, "params": spec.params, "seed": spec.seed,
                             "label": spec.label(), "status": "failed", "cache": "miss",
                             "run_hash": cfg.run_hash(spec),
                             "error": f"reference: {type(exc).__name__}: {exc}"}
            todo = []
    jobs = [_Job(cfg, spec, rid, reference) for rid, spec in todo]
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]
    for job, entry in zip(jobs, results):
        entry.update(cache="miss", run_hash=cfg.run_hash(job.spec))
        runs[job.run_id] = entry
        log.info("%s: %s", job.run_id, entry["status"])

    manifest = {
        "config_hash": cfg.config_hash,
        "config": cfg.semantic_dict(),
        "config_file": None if cfg.source_path is None else str(cfg.source_path),
        "dataset": dataset_label(cfg),
        "spectrum": spectrum_label(cfg),
        "version": __version__,
        "reference": None if reference is None else {
            k: reference[k] for k in ("objective", "gap", "converged", "objective_at_w0", "mu")},
        "runs": runs,
        "summary": summarize(runs),
        "failed": sorted(rid for rid, e in runs.items() if e["status"] != "ok"),
    }
    if reference is None and old.get("reference") and not todo and old.get("config_hash") == cfg.config_hash:
        manifest["reference"] = old["reference"]
    write_manifest(out, manifest)
    return manifest


def record_config_failure(output_dir, message: str, config_file=None) -> dict:
    """Manifest for a config that could not be loaded (nothing was run)."""
    manifest = {"config_hash": None, "config_file": config_file, "version": __version__,
                "runs": {}, "failed": ["<config>"], "error": message}
    write_manifest(output_dir, manifest)
    return manifest
