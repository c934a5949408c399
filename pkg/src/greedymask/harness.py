"""Experiment configuration, orchestration and result emission.

An experiment is one JSON document. ``run_experiment`` builds the dataset,
optimizes (or generates) a mask on the training split, evaluates it together
with any comparison baselines on the test split over a grid of sampling
rates, and writes::

    out/
      manifest.json
      masks/<method>.json          # nested methods: full acquisition order
      masks/<method>_<lines>.json  # non-nested methods: one mask per budget
      traces/<optimizer>.jsonl
      curves/<metric>.csv          # policy, image_id, rate, accel, score
      curves/auc.csv               # mean/std of per-image AUC, both views
      curves/summary.json          # mean score per method and rate
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .baselines import DensitySpec, coherence_vd, golden_cartesian, lowpass_mask, sample_vds
from .core import CandidateSpace, CartesianMask, Dataset, RngPolicy
from .metrics import METRICS, MetricCurve, aggregate_per_image, score
from .optimize import GreedyTrace, ReconScoreOracle, lbcs, llbcs, slbcs
from .phantoms import PhantomSpec, generate_phantoms
from .policy import FixedReplay, OneStepOracle, ZeroStepOracle, compare_policies
from .recon import ReconConfig
from .transform import box_sensitivities

BASELINE_KINDS = ("vds-poly", "vds-gauss", "coherence-vd", "lowpass", "lth", "golden")
OPTIMIZER_KINDS = ("lbcs", "slbcs", "llbcs", "baseline")
GOLDEN_RULE = "line t=1,2,...: round(frac(t/phi)*(n-1)) in centered positions, nearest free line, higher first"


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# --------------------------------------------------------------------------
# configuration

def _strict(cls, obj: Any, nested: dict | None = None):
    """Build dataclass ``cls`` from a dict, rejecting unknown keys."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{cls.__name__}: expected an object, got {type(obj).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown fields {sorted(unknown)}")
    kw = dict(obj)
    for key, builder in (nested or {}).items():
        if kw.get(key) is not None:
            kw[key] = builder(kw[key])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


@dataclass(frozen=True)
class DataConfig:
    phantom: PhantomSpec | None = None
    path: str | None = None

    def __post_init__(self):
        if (self.phantom is None) == (self.path is None):
            raise ValueError("exactly one of 'phantom' or 'path' is required")


@dataclass(frozen=True)
class ForwardConfig:
    orientation: str = "rows"
    noise_sigma: float = 0.0
    coils: int | None = None

    def __post_init__(self):
        if self.orientation not in ("rows", "columns"):
            raise ValueError("orientation must be 'rows' or 'columns'")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.coils is not None and self.coils < 1:
            raise ValueError("coils must be >= 1")


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = "vds-poly"
    decay: float = 4.0
    width: float = 0.15
    center_lines: int = 2
    n_candidates: int = 20
    name: str | None = None

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; expected one of {BASELINE_KINDS}")

    @property
    def label(self) -> str:
        return self.name or self.kind

    @property
    def nested(self) -> bool:
        return self.kind in ("lowpass", "lth", "golden")

    def density(self) -> DensitySpec:
        kind = "gaussian" if self.kind == "vds-gauss" else "polynomial"
        return DensitySpec(kind=kind, decay=self.decay, width=self.width, center_lines=self.center_lines)


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "lbcs"
    k: int | None = None
    l: int | None = None
    cycle_frames: bool = False
    refresh: int | None = None
    baseline: BaselineConfig | None = None

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.kind == "slbcs" and self.k is None:
            raise ValueError("slbcs requires k")
        if self.kind == "baseline" and self.baseline is None:
            raise ValueError("optimizer kind 'baseline' requires a baseline spec")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig
    budget: int
    rate_grid: tuple[float, ...]
    n_train: int = 1
    forward: ForwardConfig = field(default_factory=ForwardConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    metrics: tuple[str, ...] = ("psnr",)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    compare: tuple[BaselineConfig, ...] = ()
    policies: tuple[str, ...] = ()
    init_center_lines: int = 0
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "rate_grid", tuple(float(r) for r in self.rate_grid))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "compare", tuple(self.compare))
        object.__setattr__(self, "policies", tuple(self.policies))
        if not self.rate_grid:
            raise ValueError("rate_grid must not be empty")
        if any(not 0 < r <= 1 for r in self.rate_grid):
            raise ValueError("rates must lie in (0, 1]")
        if any(b <= a for a, b in zip(self.rate_grid, self.rate_grid[1:])):
            raise ValueError("rate_grid must be strictly increasing")
        if not self.metrics or any(m not in METRICS for m in self.metrics):
            raise ValueError(f"metrics must be a non-empty subset of {METRICS}")
        if self.budget < 1 or self.init_center_lines < 0:
            raise ValueError("budget must be >= 1 and init_center_lines >= 0")
        if self.n_train < 1:
            raise ValueError("n_train must be >= 1")
        if any(p not in ("zero_step_oracle", "one_step_oracle", "fixed_replay") for p in self.policies):
            raise ValueError("policies must be among zero_step_oracle, one_step_oracle, fixed_replay")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        data = lambda o: _strict(DataConfig, o, {"phantom": lambda p: _strict(PhantomSpec, p)})  # noqa: E731
        baseline = lambda o: _strict(BaselineConfig, o)  # noqa: E731
        optimizer = lambda o: _strict(OptimizerConfig, o, {"baseline": baseline})  # noqa: E731

        def recon(o):
            try:
                return ReconConfig.from_json(o)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"recon: {exc}") from exc

        return _strict(cls, obj, {
            "data": data, "forward": lambda o: _strict(ForwardConfig, o), "recon": recon,
            "optimizer": optimizer, "compare": lambda lst: tuple(baseline(b) for b in lst),
        })

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(obj)

    def to_json(self) -> dict:
        def enc(v):
            if hasattr(v, "to_json"):
                return v.to_json()
            if hasattr(v, "__dataclass_fields__"):
                return {f.name: enc(getattr(v, f.name)) for f in fields(v)}
            if isinstance(v, (tuple, list)):
                return [enc(x) for x in v]
            return v
        return {f.name: enc(getattr(self, f.name)) for f in fields(self)}

    def hash(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


# --------------------------------------------------------------------------
# building blocks

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data.path is not None:
        return Dataset.load(cfg.data.path)
    return generate_phantoms(cfg.data.phantom, RngPolicy(cfg.seed).generator("phantoms"))


def split_dataset(cfg: ExperimentConfig, dataset: Dataset) -> tuple[Dataset, Dataset]:
    if cfg.n_train >= len(dataset):
        raise ConfigError(f"n_train={cfg.n_train} leaves no test images out of {len(dataset)}")
    return dataset.subset(range(cfg.n_train)), dataset.subset(range(cfg.n_train, len(dataset)))


def _coils(cfg: ExperimentConfig, dims):
    if cfg.forward.coils is None:
        return None
    return box_sensitivities(dims[0], dims[1], cfg.forward.coils)


def initial_mask(cfg: ExperimentConfig, dims) -> CartesianMask:
    """``init_center_lines`` lowest frequencies in every frame."""
    h, w, t = dims
    return lowpass_mask(cfg.init_center_lines * t, dims, cfg.forward.orientation)


def rate_budgets(rate_grid: Sequence[float], total: int) -> list[int]:
    budgets = [int(round(r * total)) for r in rate_grid]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ConfigError("rate grid maps to repeated line counts on this grid")
    return budgets


def baseline_mask(spec: BaselineConfig, budget: int, dims, orientation: str,
                  rng: np.random.Generator) -> CartesianMask:
    if spec.kind in ("lowpass", "lth"):
        return lowpass_mask(budget, dims, orientation)
    if spec.kind == "golden":
        return golden_cartesian(budget, dims, orientation)
    if spec.kind == "coherence-vd":
        return coherence_vd(spec.density(), budget, dims, spec.n_candidates, rng, orientation)
    return sample_vds(spec.density(), budget, dims, rng, orientation)


def make_oracle(cfg: ExperimentConfig, dataset: Dataset, metric: str | None = None) -> ReconScoreOracle:
    return ReconScoreOracle(dataset, cfg.recon, metric or cfg.metrics[0], cfg.forward.orientation,
                            cfg.forward.noise_sigma, _coils(cfg, dataset.shape), cfg.seed)


def optimize_mask(cfg: ExperimentConfig, train: Dataset) -> tuple[CartesianMask, GreedyTrace | None, dict]:
    """Run the configured optimizer on the training split.

    Returns the mask, its trace (None for baselines) and oracle counters.
    """
    dims = train.shape
    init = initial_mask(cfg, dims)
    total = init.total_lines
    if cfg.budget > total:
        raise ConfigError(f"budget {cfg.budget} exceeds {total} lines")
    if len(init) > cfg.budget:
        raise ConfigError("initial center lines exceed the budget")
    opt = cfg.optimizer
    policy = RngPolicy(cfg.seed)
    if opt.kind == "baseline":
        mask = baseline_mask(opt.baseline, cfg.budget, dims, cfg.forward.orientation,
                             policy.generator(f"baseline-{opt.baseline.label}", cfg.budget))
        return mask, None, {"calls": 0, "sample_evaluations": 0}
    oracle = make_oracle(cfg, train)
    space = CandidateSpace.from_mask_dims(dims[0], dims[1], dims[2], cfg.budget, cfg.forward.orientation)
    threads = cfg.threads or default_threads()
    if opt.kind == "lbcs":
        mask, trace = lbcs(oracle, space, init, n_jobs=threads)
    elif opt.kind == "llbcs":
        mask, trace = llbcs(oracle, space, init, refresh_period=opt.refresh, n_jobs=threads)
    else:
        mask, trace = slbcs(oracle, space, init, k=opt.k, l=opt.l, cycle_frames=opt.cycle_frames,
                            rng=policy, n_jobs=threads)
    return mask, trace, {"calls": oracle.calls, "sample_evaluations": oracle.sample_evaluations}


def evaluate_masks(cfg: ExperimentConfig, test: Dataset, masks_by_budget: dict[int, CartesianMask],
                   method: str) -> list[dict]:
    """Score each mask on every test image; one reconstruction serves all metrics."""
    oracle = make_oracle(cfg, test)
    rows = []
    total = next(iter(masks_by_budget.values())).total_lines
    x = test.stack()
    for budget in sorted(masks_by_budget):
        x_hat = oracle.reconstruct(list(masks_by_budget[budget].lines))
        for metric in cfg.metrics:
            vals = np.atleast_1d(score(metric, x, x_hat, batched=True))
            for iid, v in zip(test.ids, vals):
                rows.append({"policy": method, "image_id": iid, "metric": metric,
                             "rate": budget / total, "accel": total / budget, "score": float(v)})
    return rows


def rows_to_curves(rows: Sequence[dict]) -> dict[tuple[str, str], list[MetricCurve]]:
    """Group result rows into per-image curves keyed by (method, metric)."""
    grouped: dict[tuple[str, str, str], list[tuple[float, float]]] = {}
    for r in rows:
        grouped.setdefault((r["policy"], r["metric"], r["image_id"]), []).append((r["rate"], r["score"]))
    out: dict[tuple[str, str], list[MetricCurve]] = {}
    for (method, metric, iid), pts in grouped.items():
        pts.sort()
        out.setdefault((method, metric), []).append(
            MetricCurve(tuple(p[0] for p in pts), tuple(p[1] for p in pts), metric, iid))
    return out


def auc_table(rows: Sequence[dict]) -> list[dict]:
    table = []
    for (method, metric), curves in sorted(rows_to_curves(rows).items()):
        for view in ("rate", "accel"):
            if len(curves[0].rates) < 2:
                continue
            mean, std = aggregate_per_image(curves, view)
            table.append({"policy": method, "metric": metric, "view": view,
                          "auc_mean": mean, "auc_std": std, "n_images": len(curves)})
    return table


def emit_curves(rows: Sequence[dict], out_dir) -> dict[str, Path]:
    """Write ``<metric>.csv`` per metric and ``auc.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    cols = ["policy", "image_id", "rate", "accel", "score"]
    for metric in sorted({r["metric"] for r in rows}):
        path = out_dir / f"{metric}.csv"
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(r for r in rows if r["metric"] == metric)
        written[metric] = path
    path = out_dir / "auc.csv"
    table = auc_table(rows)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["policy", "metric", "view", "auc_mean", "auc_std", "n_images"])
        w.writeheader()
        w.writerows(table)
    written["auc"] = path
    return written


def read_curves(path, metric: str) -> list[dict]:
    """Parse a ``<metric>.csv`` written by :func:`emit_curves` back into rows."""
    rows = []
    with Path(path).open() as fh:
        for r in csv.DictReader(fh):
            rows.append({"policy": r["policy"], "image_id": r["image_id"], "metric": metric,
                         "rate": float(r["rate"]), "accel": float(r["accel"]), "score": float(r["score"])})
    return rows


def summarize(rows: Sequence[dict]) -> dict:
    """Mean score per (metric, method, rate)."""
    acc: dict = {}
    for r in rows:
        acc.setdefault(r["metric"], {}).setdefault(r["policy"], {}).setdefault(r["rate"], []).append(r["score"])
    return {metric: {method: {f"{rate:.6g}": float(np.mean(v)) for rate, v in sorted(by_rate.items())}
                     for method, by_rate in methods.items()}
            for metric, methods in acc.items()}


def make_policy(name: str, mask: CartesianMask):
    return {"zero_step_oracle": ZeroStepOracle, "one_step_oracle": OneStepOracle}.get(
        name, lambda: FixedReplay(mask))()


def simulate_policies(cfg: ExperimentConfig, test: Dataset, mask: CartesianMask, budgets: Sequence[int],
                      trace_dir) -> list[dict]:
    """Run the configured sequential policies; episodes go to ``<policy>_episodes.jsonl``."""
    init = initial_mask(cfg, test.shape)
    total = init.total_lines
    rates = [b / total for b in budgets]
    rows = []
    for metric in cfg.metrics:
        res = compare_policies({p: make_policy(p, mask) for p in cfg.policies}, test, cfg.recon, metric,
                               rates, init, cfg.forward.noise_sigma, _coils(cfg, test.shape), cfg.seed)
        for name, eps in res["episodes"].items():
            path = _mkparent(Path(trace_dir) / f"{name}_{metric}_episodes.jsonl")
            path.write_text("".join(e.to_json() + "\n" for e in eps))
        for name, curves in res["curves"].items():
            for c in curves:
                for rate, s in zip(c.rates, c.scores):
                    rows.append({"policy": name, "image_id": c.image_id, "metric": metric,
                                 "rate": rate, "accel": 1.0 / rate, "score": float(s)})
    return rows


def _versions() -> dict:
    import scipy

    return {"greedymask": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Optimize, evaluate and write every artifact under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {
        "config": cfg.to_json(), "config_hash": cfg.hash(), "seed": int(cfg.seed),
        "versions": _versions(), "psnr_cap_db": 300.0, "golden_rule": GOLDEN_RULE,
        "partial": True, "timing": {},
    }
    t0 = time.perf_counter()
    stage = "dataset"
    try:
        dataset = load_dataset(cfg)
        train, test = split_dataset(cfg, dataset)
        dims = dataset.shape
        total = initial_mask(cfg, dims).total_lines
        budgets = rate_budgets(cfg.rate_grid, total)
        if budgets[-1] > cfg.budget:
            raise ConfigError("largest rate in rate_grid exceeds the budget")
        manifest["data"] = {"train_ids": list(train.ids), "test_ids": list(test.ids), "dims_hwt": list(dims)}
        manifest["budgets"] = budgets

        stage = "optimize"
        t1 = time.perf_counter()
        mask, trace, counters = optimize_mask(cfg, train)
        manifest["timing"]["optimize_s"] = time.perf_counter() - t1
        method = cfg.optimizer.kind if cfg.optimizer.kind != "baseline" else cfg.optimizer.baseline.label
        mask.save(_mkparent(out / "masks" / f"{method}.json"))
        manifest["mask"] = {"policy": method, "lines": len(mask)}
        if trace is not None:
            (_mkparent(out / "traces" / f"{method}.jsonl")).write_text(trace.to_jsonl())
            manifest["oracle_calls"] = {**trace.summary(), "oracle_calls": counters["calls"],
                                        "oracle_sample_evaluations": counters["sample_evaluations"],
                                        "train_size": len(train)}

        stage = "evaluate"
        t1 = time.perf_counter()
        policy = RngPolicy(cfg.seed)
        rows = evaluate_masks(cfg, test, {b: mask.prefix(b) for b in budgets}, method)
        for spec in cfg.compare:
            by_budget = {}
            for b in budgets:
                m = baseline_mask(spec, b, dims, cfg.forward.orientation,
                                  policy.generator(f"baseline-{spec.label}", b))
                by_budget[b] = m
                if not spec.nested:
                    m.save(_mkparent(out / "masks" / f"{spec.label}_{b}.json"))
            if spec.nested:
                by_budget[budgets[-1]].save(_mkparent(out / "masks" / f"{spec.label}.json"))
            rows += evaluate_masks(cfg, test, by_budget, spec.label)
        if cfg.policies:
            rows += simulate_policies(cfg, test, mask, budgets, out / "traces")
        manifest["timing"]["evaluate_s"] = time.perf_counter() - t1

        stage = "emit"
        emit_curves(rows, out / "curves")
        summary = summarize(rows)
        _write_json(out / "curves" / "summary.json", summary)
        manifest["partial"] = False
    except ConfigError:
        raise
    except Exception as exc:
        manifest["error"] = {"stage": stage, "message": str(exc)}
        manifest["timing"]["total_s"] = time.perf_counter() - t0
        _write_json(out / "manifest.json", manifest)
        raise ExperimentError(stage, exc) from exc
    manifest["timing"]["total_s"] = time.perf_counter() - t0
    _write_json(out / "manifest.json", manifest)
    return {"mask": mask, "trace": trace, "rows": rows, "summary": summary,
            "auc": auc_table(rows), "manifest": manifest}


def _mkparent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def strip_timing(manifest: dict) -> dict:
    """Manifest without wall-clock fields, for reproducibility comparisons."""
    return {k: v for k, v in manifest.items() if k != "timing"}


def default_threads() -> int:
    return os.cpu_count() or 1


__all__ = [
    "ConfigError", "ExperimentError", "ExperimentConfig", "DataConfig", "ForwardConfig", "BaselineConfig",
    "OptimizerConfig", "run_experiment", "emit_curves", "read_curves", "auc_table", "summarize",
    "evaluate_masks", "optimize_mask", "baseline_mask", "load_dataset", "split_dataset", "initial_mask",
    "rate_budgets", "rows_to_curves", "strip_timing", "make_oracle", "simulate_policies", "GOLDEN_RULE",
    "BASELINE_KINDS",
]
