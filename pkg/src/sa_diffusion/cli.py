"""Command-line entry point: ``sa-diffusion {train|sample|gap-eval|bounds-check|schedule-dump|run}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .data import generate_dataset
from .errors import ConfigError
from .experiment import default_out_root, run_experiment
from .gaps import bounds_check, gap_experiment_x_start
from .predictor import MLPPredictor
from .sampler import sample
from .schedule import build_schedule
from .training import TrainConfig, train

TRAIN_SECTIONS = ("schedule", "model", "dataset")


def _out_dir(args, sub: str) -> Path:
    out = Path(args.out) if args.out else default_out_root() / sub
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def cmd_train(args) -> int:
    d = _read_json(args.config) if args.config else {}
    sections = {k: d.pop(k, {}) for k in TRAIN_SECTIONS}
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = TrainConfig.from_dict(d)
    sched_spec = {"kind": "linear", "T": 100, **sections["schedule"]}
    ds_spec = {"kind": "gaussian_ring", "n_points": 8000, **sections["dataset"]}
    sched = build_schedule(**sched_spec)
    ds = generate_dataset(seed=cfg.seed, **ds_spec)
    out = _out_dir(args, "train")
    meta = {
        "schedule": sched_spec,
        "dataset": {**ds_spec, "seed": cfg.seed},
        "normalization": {"shift": ds.shift.tolist(), "scale": ds.scale.tolist()},
    }
    res = train(cfg, ds.points, sched, model_kwargs=sections["model"], out_dir=out, checkpoint_meta=meta)
    last = res.metrics[-1][1] if res.metrics else None
    print(f"wrote {out / 'metrics.csv'} and {out / 'checkpoint.npz'}")
    if last is not None:
        print(f"final step {len(res.metrics)}: l_simple={last.l_simple:.6g} l_sa={last.l_sa:.6g} l_total={last.l_total:.6g}")
    return 0


def _checkpoint_context(path):
    ck = load_checkpoint(path)
    meta = ck.meta
    if "schedule" not in meta:
        raise ConfigError(f"{path}: checkpoint has no schedule metadata")
    sched = build_schedule(**meta["schedule"])
    norm = meta.get("normalization")
    shift = np.asarray(norm["shift"]) if norm else 0.0
    scale = np.asarray(norm["scale"]) if norm else 1.0
    return ck, sched, shift, scale


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_sample(args) -> int:
    ck, sched, shift, scale = _checkpoint_context(args.checkpoint)
    model = ck.ema.shadow
    seed = 0 if args.seed is None else args.seed
    traj = sample(
        model,
        sched,
        args.kind,
        args.n_steps,
        args.batch,
        np.random.default_rng(seed),
        variance_kind=args.variance_kind,
    )
    out = _out_dir(args, "sample")
    dim = model.data_dim
    cols = [f"x{i}" for i in range(dim)]
    final = traj.final * scale + shift
    _write_csv(out / "samples.csv", cols, [[repr(float(v)) for v in row] for row in final])
    print(f"wrote {out / 'samples.csv'} ({final.shape[0]} samples)")
    if args.trajectory:
        ts = traj.timesteps + [0]
        rows = []
        for t, state in zip(ts, traj.states):
            raw = state * scale + shift
            rows += [[t, i, *(repr(float(v)) for v in r)] for i, r in enumerate(raw)]
        _write_csv(out / "trajectory.csv", ["t", "sample"] + cols, rows)
        print(f"wrote {out / 'trajectory.csv'}")
    return 0


def cmd_gap_eval(args) -> int:
    ck, sched, _, _ = _checkpoint_context(args.checkpoint)
    ds_spec = dict(ck.meta.get("dataset", {"kind": "gaussian_ring", "n_points": 8000, "seed": 0}))
    ds_seed = ds_spec.pop("seed", 0)
    ds = generate_dataset(seed=ds_seed, **ds_spec)
    seed = 0 if args.seed is None else args.seed
    out = _out_dir(args, "gap-eval")
    rep = gap_experiment_x_start(
        ck.ema.shadow,
        sched,
        ds.points,
        args.t_start,
        args.sampler,
        args.batch,
        np.random.default_rng(seed),
        csv_path=out / "gaps.csv",
    )
    print(f"wrote {out / 'gaps.csv'}")
    print(f"terminal cumulative gap (t=2): {rep.terminal_gap_norm:.6g}")
    return 0


def cmd_bounds_check(args) -> int:
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    if args.checkpoint:
        ck, sched, _, _ = _checkpoint_context(args.checkpoint)
        model = ck.ema.shadow
        ds_spec = dict(ck.meta.get("dataset", {"kind": "gaussian_ring", "n_points": 8000, "seed": 0}))
        ds = generate_dataset(seed=ds_spec.pop("seed", 0), **ds_spec)
        x0 = ds.points[rng.choice(ds.n_points, size=args.batch)]
    else:
        sched = build_schedule(args.schedule, args.T)
        model = random_predictor(2, sched.T, rng)
        x0 = generate_dataset("gaussian_ring", args.batch, seed=seed).points
    rep = bounds_check(model, sched, args.K, x0, n_mc=args.n_mc, rng=rng, mode=args.mode)
    print(rep.format())
    return 0 if rep.upper_holds and rep.lower_holds else 1


def random_predictor(dim: int, T: int, rng: np.random.Generator, hidden=(16, 16), scale: float = 0.5):
    """Small MLP with a random (non-zero) output layer, for bound checks without a checkpoint."""
    p = MLPPredictor.init(dim, T, hidden_sizes=hidden, time_embed_dim=8, rng=rng)
    arrays = p.arrays()
    arrays[-2] = scale * rng.standard_normal(arrays[-2].shape)
    arrays[-1] = scale * rng.standard_normal(arrays[-1].shape)
    return p.with_arrays(arrays)


def cmd_schedule_dump(args) -> int:
    kw = {}
    if args.schedule == "linear":
        kw = {"beta_start": args.beta_start, "beta_end": args.beta_end}
    else:
        kw = {"s_offset": args.s_offset}
    text = build_schedule(args.schedule, args.T, **kw).to_csv()
    if args.out:
        path = Path(args.out)
        if path.is_dir():
            path = path / "schedule.csv"
        path.write_text(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    if not args.config:
        raise ConfigError("run needs --config PATH")
    out = run_experiment(args.config, out_dir=args.out, seed=args.seed)
    summary = json.loads((out / "summary.json").read_text())
    for row in summary["aggregate"]:
        print(json.dumps(row, sort_keys=True))
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sa-diffusion", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (default: $SA_DIFFUSION_OUT/<command>)")
        return p

    common(sub.add_parser("train", help="train a noise predictor")).set_defaults(func=cmd_train)

    p = common(sub.add_parser("sample", help="draw samples from a checkpoint"), config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kind", choices=["ddpm", "ddim"], default="ddim")
    p.add_argument("--n-steps", type=int, default=100)
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--variance-kind", choices=["beta_tilde", "beta"], default="beta_tilde")
    p.add_argument("--trajectory", action="store_true", help="also dump every intermediate state")
    p.set_defaults(func=cmd_sample)

    p = common(sub.add_parser("gap-eval", help="trace the cumulative gap from a noised data start"), config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--t-start", type=int, default=30)
    p.add_argument("--sampler", choices=["ddpm", "ddim"], default="ddpm")
    p.add_argument("--batch", type=int, default=2000)
    p.set_defaults(func=cmd_gap_eval)

    p = common(sub.add_parser("bounds-check", help="check the L_simple^tau >= L_sa >= L_theta sandwich"), config=False)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--mode", choices=["exact", "mc"], default="exact")
    p.add_argument("--n-mc", type=int, default=1024)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--schedule", choices=["linear", "cosine"], default="linear")
    p.add_argument("--T", type=int, default=32)
    p.set_defaults(func=cmd_bounds_check)

    p = sub.add_parser("schedule-dump", help="write schedule coefficients as CSV")
    p.add_argument("--schedule", choices=["linear", "cosine"], default="linear")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=0.02)
    p.add_argument("--s-offset", type=float, default=0.008)
    p.add_argument("--out", default=None, help="file or directory (default: stdout)")
    p.set_defaults(func=cmd_schedule_dump)

    common(sub.add_parser("run", help="run a full experiment config")).set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"sa-diffusion {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
