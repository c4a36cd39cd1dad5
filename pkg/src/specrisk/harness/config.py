"""Experiment configuration files (INI-style ``key = value`` sections).

Example::

    [data]
    source = synthetic        # or a path to a CSV file, target in the last column
    n = 200
    d = 10
    seed = 0
    standardize = true

    [spectrum]
    family = cvar
    param = 0.5

    [run]
    methods = sorel, sgd
    seeds = 0, 1
    pass_budget = 50
    output_dir = runs/demo

    [sorel]
    mode = practical
    C = 0.3, 1, 3             # comma-separated values expand into a grid
    alpha = 0.003

Method sections are optional; missing keys fall back to ``METHOD_DEFAULTS``.
"""

from __future__ import annotations

import configparser
import hashlib
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..spectra import FAMILIES

ENV_OUTPUT_DIR = "SPECRISK_OUTPUT_DIR"
ENV_THREADS = "SPECRISK_THREADS"

RUN_METHODS = ("sorel", "sgd", "lsvrg", "prospect")

METHOD_DEFAULTS = {
    "sorel": {
        "mode": "practical", "C": 1.0, "alpha": 0.003, "batch_size": 1,
        "c_T": 2.0, "m_rule": "theorem", "inner": "stochastic", "max_outer": 100000,
    },
    "sgd": {"step_size": 0.003, "batch_size": 16},
    "lsvrg": {"step_size": 0.003, "epoch_length": 0},
    "prospect": {"step_size": 0.003},
}

_DATA_DEFAULTS = {
    "source": "synthetic", "n": 200, "d": 10, "seed": 0, "noise": 0.5,
    "weight_scale": 1.0, "feature_scale": 1.0, "standardize": False,
    "loss": "least_squares", "mu": None, "w_radius": 100.0,
}


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _coerce(raw: str, like):
    """Parse ``raw`` to the type of the default value ``like``."""
    raw = raw.strip()
    if isinstance(like, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float) or like is None:
        return float(raw)
    return raw


def _grid_values(raw: str, like) -> list:
    return [_coerce(part, like) for part in raw.split(",") if part.strip()]


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode("utf-8")).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunSpec:
    """One optimiser, one setting, one seed."""

    method: str
    params: dict
    seed: int

    def label(self) -> str:
        bits = [f"{k}={self.params[k]:g}" if isinstance(self.params[k], float)
                else f"{k}={self.params[k]}" for k in sorted(self.params)]
        return f"{self.method}[{','.join(bits)}]"


@dataclass
class ExperimentConfig:
    data: dict
    spectrum_family: str
    spectrum_param: float
    methods: dict          # method -> list of parameter dicts (the grid)
    seeds: list
    pass_budget: float
    output_dir: Path
    reference_tol: float = 1e-10
    threads: int = 1
    source_path: Path | None = None
    data_digest: str | None = field(default=None, repr=False)

    # -- identity ----------------------------------------------------------

    def dataset_key(self) -> dict:
        key = {k: v for k, v in self.data.items()}
        if self.data["source"] != "synthetic":
            key["source"] = self.data_digest
        return key

    def semantic_dict(self) -> dict:
        """Every field that changes results; output location and threads excluded."""
        return {
            "data": self.dataset_key(),
            "spectrum": [self.spectrum_family, self.spectrum_param],
            "methods": self.methods,
            "seeds": list(self.seeds),
            "pass_budget": self.pass_budget,
            "reference_tol": self.reference_tol,
        }

    @property
    def config_hash(self) -> str:
        return content_hash(self.semantic_dict())

    def reference_key(self) -> str:
        return content_hash({"data": self.dataset_key(),
                             "spectrum": [self.spectrum_family, self.spectrum_param],
                             "tol": self.reference_tol})[:16]

    def run_hash(self, spec: RunSpec) -> str:
        return content_hash({
            "data": self.dataset_key(),
            "spectrum": [self.spectrum_family, self.spectrum_param],
            "method": spec.method, "params": spec.params, "seed": spec.seed,
            "pass_budget": self.pass_budget, "reference_tol": self.reference_tol,
        })

    def runs(self) -> list[RunSpec]:
        out = []
        for method in sorted(self.methods):
            for params in self.methods[method]:
                for seed in self.seeds:
                    out.append(RunSpec(method, params, int(seed)))
        return out

    def run_id(self, spec: RunSpec) -> str:
        return f"{spec.method}-{self.run_hash(spec)[:10]}-seed{spec.seed}"


def _section(cp, name):
    return dict(cp[name]) if cp.has_section(name) else {}


def _method_grid(method: str, raw: dict) -> list[dict]:
    defaults = METHOD_DEFAULTS[method]
    lower = {k.lower(): k for k in defaults}
    axes = {}
    for key, value in raw.items():
        canon = lower.get(key.lower())
        if canon is None:
            raise ConfigError(f"[{method}] unknown key {key!r}")
        try:
            axes[canon] = _grid_values(value, defaults[canon])
        except ValueError as exc:
            raise ConfigError(f"[{method}] {key}: {exc}") from None
        if not axes[canon]:
            raise ConfigError(f"[{method}] {key} is empty")
    names = sorted(defaults)
    choices = [axes.get(k, [defaults[k]]) for k in names]
    grid = [dict(zip(names, combo)) for combo in itertools.product(*choices)]
    for params in grid:
        _check_method_params(method, params)
    return grid


def _check_method_params(method, p):
    if method == "sorel":
        if p["mode"] not in ("practical", "theoretical"):
            raise ConfigError(f"[sorel] mode must be practical or theoretical, got {p['mode']!r}")
        if p["inner"] not in ("stochastic", "exact"):
            raise ConfigError(f"[sorel] inner must be stochastic or exact, got {p['inner']!r}")
        if p["m_rule"] not in ("theorem", "lemma"):
            raise ConfigError(f"[sorel] m_rule must be theorem or lemma, got {p['m_rule']!r}")
        if not (p["C"] > 0 and p["alpha"] > 0 and p["c_T"] > 0):
            raise ConfigError("[sorel] C, alpha and c_T must be positive")
        if p["batch_size"] < 1 or p["max_outer"] < 1:
            raise ConfigError("[sorel] batch_size and max_outer must be at least 1")
    else:
        if not p["step_size"] > 0:
            raise ConfigError(f"[{method}] step_size must be positive")
        if p.get("batch_size", 1) < 1 or p.get("epoch_length", 0) < 0:
            raise ConfigError(f"[{method}] batch_size must be >= 1 and epoch_length >= 0")


def _parse_data(raw: dict, base: Path) -> dict:
    data = dict(_DATA_DEFAULTS)
    for key, value in raw.items():
        if key not in data:
            raise ConfigError(f"[data] unknown key {key!r}")
        if key in ("source", "loss"):
            data[key] = value.strip()
            continue
        try:
            data[key] = None if (key == "mu" and value.strip() == "") else _coerce(value, data[key])
        except ValueError as exc:
            raise ConfigError(f"[data] {key}: {exc}") from None
    if data["loss"] not in ("least_squares", "logistic"):
        raise ConfigError(f"[data] unknown loss {data['loss']!r}")
    if data["mu"] is not None and not data["mu"] > 0:
        raise ConfigError("[data] mu must be positive")
    if data["source"] != "synthetic":
        path = Path(data["source"])
        if not path.is_absolute():
            path = base / path
        data["source"] = str(path)
    return data


def parse_config(text: str, *, base_dir=".", source_path=None, check_files: bool = True) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    known = {"data", "spectrum", "run", *RUN_METHODS}
    for name in cp.sections():
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")
    base = Path(base_dir)
    data = _parse_data(_section(cp, "data"), base)

    spec = _section(cp, "spectrum")
    family = spec.get("family", "").strip().lower()
    if family not in FAMILIES or family == "custom":
        raise ConfigError(f"[spectrum] family must be one of cvar, esrm, extremile; got {family!r}")
    try:
        param = float(spec["param"])
    except (KeyError, ValueError):
        raise ConfigError("[spectrum] param must be a number") from None

    run = _section(cp, "run")
    methods_raw = [m.strip().lower() for m in run.get("methods", "").split(",") if m.strip()]
    if not methods_raw:
        raise ConfigError("[run] methods must list at least one method")
    bad = [m for m in methods_raw if m not in RUN_METHODS]
    if bad:
        raise ConfigError(f"[run] unknown method(s) {bad}; choose from {list(RUN_METHODS)}")
    try:
        seeds = _grid_values(run.get("seeds", "0"), 0)
        budget = float(run.get("pass_budget", "50"))
        tol = float(run.get("reference_tol", "1e-10"))
        threads = int(run.get("threads", "1"))
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from None
    if not seeds or not budget > 0 or not tol > 0 or threads < 1:
        raise ConfigError("[run] needs seeds, a positive pass_budget and reference_tol, threads >= 1")
    out = run.get("output_dir", "runs")
    out_path = Path(out) if Path(out).is_absolute() else base / out

    methods = {m: _method_grid(m, _section(cp, m)) for m in dict.fromkeys(methods_raw)}
    cfg = ExperimentConfig(
        data=data, spectrum_family=family, spectrum_param=param, methods=methods,
        seeds=[int(s) for s in seeds], pass_budget=budget, output_dir=out_path,
        reference_tol=tol, threads=threads,
        source_path=None if source_path is None else Path(source_path),
    )
    if data["source"] != "synthetic":
        if Path(data["source"]).is_file():
            cfg.data_digest = file_digest(data["source"])
        elif check_files:
            raise ConfigError(f"[data] dataset file not found: {data['source']}")
    return cfg


def apply_env_overrides(cfg: ExperimentConfig, environ=None) -> ExperimentConfig:
    env = os.environ if environ is None else environ
    if env.get(ENV_OUTPUT_DIR):
        cfg.output_dir = Path(env[ENV_OUTPUT_DIR])
    if env.get(ENV_THREADS):
        try:
            cfg.threads = max(1, int(env[ENV_THREADS]))
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer") from None
    return cfg


def load_config(path, *, check_files: bool = True, environ=None) -> ExperimentConfig:
    """Read a config file; relative paths inside it resolve against its folder."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text, base_dir=path.parent, source_path=path, check_files=check_files)
    return apply_env_overrides(cfg, environ)
