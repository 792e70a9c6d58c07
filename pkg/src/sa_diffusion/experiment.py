"""Config-driven train -> sample -> metrics -> gap-eval pipeline.

A config is a JSON object; every section is optional:

    {
      "seed": 0,
      "seeds": [0, 1, 2],                       # overrides "seed" when present
      "schedule": {"kind": "linear", "T": 100, "beta_start": 1e-4, "beta_end": 0.02},
      "model":    {"hidden_sizes": [128, 128, 128], "time_embed_dim": 16, "activation": "silu"},
      "train":    {TrainConfig fields; "lambda" accepted for "lam"},
      "dataset":  {"kind": "gaussian_ring", "n_points": 8000, "n_heldout": 4096},
      "sampler":  {"kind": "ddim", "n_steps": [10, 100], "batch": 2048, "variance_kind": "beta_tilde"},
      "metrics":  {"n_projections": 128, "radius": 0.15},
      "gap":      {"t_start": 30, "batch": 2000, "sampler_kind": "ddpm"},
      "runs":     [{"name": "vanilla", "train": {"lambda": 0}}, {"name": "sa", "train": {"lambda": 1}}],
      "sweep":    {"lambda": [0, 0.5, 1, 2]},   # shorthand that expands into "runs"
      "out_dir":  "runs/example"
    }

Every run trains with the experiment seed, so paired runs share data,
minibatch order and noise draws.
"""

from __future__ import annotations

import copy
from contextlib import contextmanager
import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svg
from .data import generate_dataset
from .errors import ConfigError
from .gaps import gap_experiment_x_start
from .metrics import mode_coverage, sliced_wasserstein
from .sampler import sample
from .schedule import build_schedule
from .training import TrainConfig, train

log = logging.getLogger(__name__)

OUT_ENV = "SA_DIFFUSION_OUT"

DEFAULTS = {
    "seed": 0,
    "schedule": {"kind": "linear", "T": 100},
    "model": {"hidden_sizes": [128, 128, 128], "time_embed_dim": 16, "activation": "silu"},
    "train": {},
    "dataset": {"kind": "gaussian_ring", "n_points": 8000, "n_heldout": 4096},
    "sampler": {"kind": "ddim", "n_steps": [10, 100], "batch": 2048, "variance_kind": "beta_tilde"},
    "metrics": {"n_projections": 128, "radius": 0.15},
    "gap": {"t_start": 30, "batch": 2000, "sampler_kind": "ddpm"},
}
SECTIONS = set(DEFAULTS) | {"seeds", "runs", "sweep", "out_dir", "name"}


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "sa_runs"))


@dataclass
class ExperimentConfig:
    schedule: dict
    model: dict
    train: dict
    dataset: dict
    sampler: dict
    metrics: dict
    gap: dict
    seeds: list
    runs: list
    out_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - SECTIONS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = copy.deepcopy(DEFAULTS)
        for key, val in d.items():
            if key in merged and isinstance(merged[key], dict):
                if not isinstance(val, dict):
                    raise ConfigError(f"config key {key!r} must be an object")
                merged[key].update(val)
            else:
                merged[key] = val
        seeds = [int(s) for s in merged.get("seeds", [merged["seed"]])]
        runs = merged.get("runs") or [{"name": merged.get("name", "run")}]
        if "sweep" in merged:
            sweep = merged["sweep"]
            if set(sweep) != {"lambda"}:
                raise ConfigError(f"config key 'sweep' supports only 'lambda', got {sorted(sweep)}")
            runs = [{"name": f"lambda_{lam:g}", "train": {"lambda": lam}} for lam in sweep["lambda"]]
        names = [r.get("name") for r in runs]
        if None in names or len(set(names)) != len(names):
            raise ConfigError(f"config key 'runs' needs unique names, got {names}")
        ns = merged["sampler"]["n_steps"]
        merged["sampler"]["n_steps"] = [int(ns)] if np.ndim(ns) == 0 else [int(n) for n in ns]
        cfg = cls(
            schedule=merged["schedule"],
            model=merged["model"],
            train=merged["train"],
            dataset=merged["dataset"],
            sampler=merged["sampler"],
            metrics=merged["metrics"],
            gap=merged["gap"],
            seeds=seeds,
            runs=runs,
            out_dir=merged.get("out_dir"),
            raw=d,
        )
        for run in runs:
            cfg.train_config(run, seeds[0])  # validate early
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError:
            raise FileNotFoundError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)

    def train_config(self, run: dict, seed: int) -> TrainConfig:
        d = dict(self.train)
        d.update(run.get("train", {}))
        d["seed"] = seed
        try:
            return TrainConfig.from_dict(d)
        except TypeError as exc:
            raise ConfigError(f"config key 'train' of run {run.get('name')!r}: {exc}") from None


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


class StageError(RuntimeError):
    pass


@contextmanager
def _stage(name: str, key: str):
    """Re-raise failures with the stage and the config key behind it."""
    try:
        yield
    except Exception as exc:
        raise StageError(f"stage '{name}' failed (config key '{key}'): {exc}") from exc


def run_single(cfg: ExperimentConfig, run: dict, seed: int, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    with _stage("schedule", "schedule"):
        sched = build_schedule(**cfg.schedule)
    with _stage("dataset", "dataset"):
        ds_spec = dict(cfg.dataset)
        n_heldout = int(ds_spec.pop("n_heldout", 4096))
        ds = generate_dataset(seed=seed, **ds_spec)
        heldout = generate_dataset(seed=seed + 10_000, **{**ds_spec, "n_points": n_heldout}).raw
    tcfg = cfg.train_config(run, seed)
    with _stage("train", "train"):
        meta = {
            "schedule": cfg.schedule,
            "dataset": {**ds_spec, "seed": seed},
            "normalization": {"shift": ds.shift.tolist(), "scale": ds.scale.tolist()},
        }
        result = train(tcfg, ds.points, sched, model_kwargs=cfg.model, out_dir=out, checkpoint_meta=meta)
    model = result.ema.shadow
    summary = {
        "name": run["name"],
        "seed": seed,
        "loss_kind": tcfg.loss_kind,
        "K": tcfg.K,
        "lambda": tcfg.lam,
        "final_l_simple": float(np.mean([lb.l_simple for _, lb in result.metrics[-200:]])) if result.metrics else None,
    }
    rows, groups = [], {"data": heldout[:2048]}
    with _stage("sample", "sampler"):
        for n in cfg.sampler["n_steps"]:
            traj = sample(
                model,
                sched,
                cfg.sampler["kind"],
                n,
                int(cfg.sampler["batch"]),
                np.random.default_rng([seed, 3, n]),
                variance_kind=cfg.sampler.get("variance_kind", "beta_tilde"),
            )
            raw = ds.to_raw(traj.final)
            rows += [[n, *map(repr, map(float, r))] for r in raw]
            groups[f"n={n}"] = raw
            summary[f"sw_n{n}"] = sliced_wasserstein(
                raw, heldout, int(cfg.metrics.get("n_projections", 128)), seed=seed
            )
            if ds.centers is not None and ds.kind == "gaussian_ring":
                summary[f"coverage_n{n}"] = mode_coverage(raw, ds.centers, float(cfg.metrics.get("radius", 0.15)))
        _write_rows(out / "samples.csv", ["n_steps"] + [f"x{i}" for i in range(ds.dim)], rows)
        if ds.dim == 2:
            svg.scatter(out / "samples.svg", groups, title=f"{run['name']} seed {seed}")
    with _stage("gap-eval", "gap"):
        g = cfg.gap
        rep = gap_experiment_x_start(
            model,
            sched,
            ds.points,
            int(g["t_start"]),
            g.get("sampler_kind", "ddpm"),
            int(g.get("batch", 2000)),
            np.random.default_rng([seed, 4]),
            csv_path=out / "gaps.csv",
        )
        summary["terminal_gap"] = rep.terminal_gap_norm
        svg.lines(
            out / "gaps.svg",
            rep.timesteps,
            {"per-step": rep.per_step_gap_norm, "cumulative": rep.cumulative_gap_norm},
            title=f"gap trace from t={rep.start_timestep}",
        )
    with _stage("plots", "train"):
        if result.metrics:
            steps = [s for s, _ in result.metrics]
            stride = max(1, len(steps) // 500)
            svg.lines(
                out / "loss.svg",
                steps[::stride],
                {"l_simple": [lb.l_simple for _, lb in result.metrics][::stride]},
                title="training loss",
            )
    summary["_gap_curve"] = (rep.timesteps, rep.cumulative_gap_norm.tolist())
    return summary


def _aggregate(rows: list, runs: list) -> list:
    agg = []
    for run in runs:
        mine = [r for r in rows if r["name"] == run["name"]]
        entry = {k: mine[0][k] for k in ("name", "loss_kind", "K", "lambda")}
        entry["n_seeds"] = len(mine)
        for key in mine[0]:
            if key.startswith(("sw_", "coverage_", "terminal_gap", "final_l_simple")) and mine[0][key] is not None:
                entry[f"mean_{key}"] = float(np.mean([r[key] for r in mine]))
        agg.append(entry)
    base = next((a for a in agg if a["lambda"] == 0 or a["loss_kind"] == "simple"), None)
    if base is not None:
        for a in agg:
            a["terminal_gap_ratio"] = a["mean_terminal_gap"] / base["mean_terminal_gap"]
            a["baseline"] = base["name"]
    return agg


def run_experiment(config, out_dir=None, seed: int | None = None) -> Path:
    """Execute every (run, seed) pair of ``config`` and write artefacts; returns the output directory."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    if seed is not None:
        cfg.seeds = [int(seed)]
    out = Path(out_dir or cfg.out_dir or default_out_root() / "run")
    out.mkdir(parents=True, exist_ok=True)
    rows, curves = [], {}
    for run in cfg.runs:
        for s in cfg.seeds:
            log.info("run %s seed %d", run["name"], s)
            row = run_single(cfg, run, s, out / run["name"] / f"seed_{s}")
            curves.setdefault(run["name"], []).append(row.pop("_gap_curve"))
            rows.append(row)
    agg = _aggregate(rows, cfg.runs)
    keys = sorted({k for r in rows for k in r}, key=lambda k: (k not in ("name", "seed"), k))
    _write_rows(out / "summary.csv", keys, [[_fmt(r.get(k)) for k in keys] for r in rows])
    summary = {"config": cfg.raw, "seeds": cfg.seeds, "runs": rows, "aggregate": agg}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    series = {name: np.mean([c[1] for c in cs], axis=0) for name, cs in curves.items()}
    ts = next(iter(curves.values()))[0][0]
    svg.lines(out / "gaps.svg", ts, series, title="cumulative gap (seed mean)")
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v
