"""Command-line interface: ``hybridseg {generate,train,segment,benchmark,metrics}``.

Every command reads flat JSON configuration (``--config``), and every key can
be overridden with a flag of the same name (``--batch-size 64``).  Each run
writes ``run.json`` with the resolved configuration and seed next to its
outputs.  Exit codes: 0 success, 2 invalid configuration, 3 numerical
failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("hybridseg")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
REPORT_VERSION = 1


class ConfigError(ValueError):
    pass


# --- configuration schema -------------------------------------------------

def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt(kind):
    def parse(s):
        if s is None or (isinstance(s, str) and s.lower() in ("none", "null", "")):
            return None
        return kind(s)
    parse.__name__ = f"optional {kind.__name__}"
    return parse


def _list(kind):
    def parse(s):
        if s is None:
            return None
        if isinstance(s, (list, tuple)):
            return [kind(x) for x in s]
        if isinstance(s, str) and s.lower() in ("none", "null", ""):
            return None
        return [kind(x) for x in str(s).split(",") if x.strip()]
    parse.__name__ = f"list of {kind.__name__}"
    return parse


def _float(s):
    return float(s)


GLOBAL_KEYS = {"seed": (0, int), "threads": (1, int), "out": ("out", str)}

GENERATE = {
    "family": ("sine", str, "trajectory family: sine or lv"),
    "variant": ("JD", str, "Lotka-Volterra variant: JD (jumps) or SD (switches only)"),
    "n_train": (7050, int, "training trajectories"),
    "n_val": (300, int, "validation trajectories"),
    "n_test": (150, int, "test trajectories"),
    "total_obs": (None, _opt(int), "fixed observation count per train/val trajectory"),
    "test_total_obs": (None, _opt(int), "fixed observation count per test trajectory"),
    "aligned": (True, _bool, "share observation grids across train/val trajectories"),
    "noise_std": (None, _opt(_float), "observation noise (family default if unset)"),
    "mask_test": (True, _bool, "apply the held-out masking protocol to the test split"),
    "shared_mask": (True, _bool, "same interior mask for equal-length test trajectories"),
    "extract_sdfs": (False, _bool, "also write train_sdfs/ and val_sdfs/ split at changepoints"),
}

TRAIN = {
    "data": (None, str, "dataset directory"),
    "train_split": ("train_sdfs", str, "split with training SDFs"),
    "val_split": ("val_sdfs", _opt(str), "split with validation SDFs"),
    "model": ("sine", str, "architecture preset: sine or lv"),
    "epochs": (100, int, "training epochs"),
    "batch_size": (256, int, "batch size"),
    "lr": (0.01, _float, "initial learning rate"),
    "lr_decay": (0.1, _float, "plateau decay factor"),
    "lr_patience": (10, int, "epochs without validation improvement before decay"),
    "min_lr": (1e-3, _float, "learning-rate floor"),
    "kl_anneal_epochs": (5, int, "epochs to ramp the KL weight from 0 to 1"),
    "n_z0_samples": (1, int, "latent initial-state samples per trajectory"),
    "clip_norm": (None, _opt(_float), "global gradient-norm clip"),
    "subsample": (None, _list(int), "min,max points kept per trajectory"),
    "truncate": (None, _list(int), "min,max leading points cropped"),
    "time_decimals": (2, _opt(int), "rounding of decoder query times"),
    "max_train": (None, _opt(int), "use only the first N training SDFs"),
    "max_val": (None, _opt(int), "use only the first N validation SDFs"),
    "resume": (None, _opt(str), "checkpoint to continue from"),
    "latent_rtol": (None, _opt(_float), "latent solver relative tolerance"),
    "latent_atol": (None, _opt(_float), "latent solver absolute tolerance"),
}

SEGMENT = {
    "checkpoint": (None, str, "trained base model"),
    "data": (None, str, "dataset directory, CSV directory or single CSV"),
    "split": ("test", _opt(str), "dataset split"),
    "n_samples": (100, int, "Monte Carlo samples for the marginal likelihood"),
    "beta": (0.0, _float, "per-segment penalty"),
    "K": (200.0, _float, "PELT pruning constant (inf disables pruning)"),
    "min_size": (20, int, "minimum segment length"),
    "time_decimals": (2, _opt(int), "rounding of decoder query times"),
    "no_segment": (False, _bool, "single-segment (vanilla) mode"),
    "limit": (None, _opt(int), "process only the first N trajectories"),
}

BENCHMARK = dict(SEGMENT)
BENCHMARK.update({
    "checkpoint": (None, _opt(str), "trained base model (needed for latseg)"),
    "methods": (["latseg", "rbf", "ar", "norm"], _list(str), "methods to run"),
    "k_sweep": (None, _list(_float), "comma-separated K values for a pruning sweep"),
    "grid_size": (None, _opt(int), "interpolation grid for baselines (default: visible count)"),
    "tolerance": (10, int, "F1 matching tolerance in indices"),
    "baseline_min_size": (None, _opt(int), "minimum segment for baselines (default: the cost's own)"),
    "ar_order": (10, int, "AR baseline lag order"),
    "rbf_gamma": (None, _opt(_float), "RBF bandwidth (median heuristic if unset)"),
    "plots": (3, int, "trajectories to plot"),
})

METRICS = {
    "truth": (None, str, "dataset directory, CSV directory or single CSV"),
    "split": ("test", _opt(str), "dataset split"),
    "pred": (None, str, "segmentation.json from the segment command"),
    "tolerance": (10, int, "F1 matching tolerance in indices"),
}

SCHEMAS = {"generate": GENERATE, "train": TRAIN, "segment": SEGMENT, "benchmark": BENCHMARK,
           "metrics": METRICS}


def _flag(key):
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flat configuration keys")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="hybridseg", description=__doc__.splitlines()[0],
                                     parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, parents=[common])
        for key, (default, kind, help_) in schema.items():
            kw = dict(dest=key, default=argparse.SUPPRESS, help=f"{help_} (default: {default})")
            if kind is _bool:
                p.add_argument(_flag(key), nargs="?", const=True, type=_bool, **kw)
            else:
                p.add_argument(_flag(key), type=kind, **kw)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the JSON file, then command-line flags."""
    schema = dict(SCHEMAS[command])
    for k, (d, t) in GLOBAL_KEYS.items():
        schema[k] = (d, t, "")
    cfg = {k: v[0] for k, v in schema.items()}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config}: expected a JSON object of flat keys")
        for k, v in raw.items():
            if k not in schema:
                raise ConfigError(f"{args.config}: unknown key {k!r} for '{command}'")
            try:
                cfg[k] = v if v is None else schema[k][1](v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{args.config}: bad value for {k!r}: {exc}") from None
    for k in schema:
        if hasattr(args, k):
            cfg[k] = getattr(args, k)
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"missing required setting {k!r} (use {_flag(k)} or the config file)")


def _write_run(out: Path, command: str, cfg: dict, extra: dict | None = None):
    out.mkdir(parents=True, exist_ok=True)
    doc = {"version": REPORT_VERSION, "tool_version": __version__, "command": command,
           "seed": cfg["seed"], "config": cfg}
    doc.update(extra or {})
    (out / "run.json").write_text(json.dumps(_strict(doc), indent=2, sort_keys=True, default=str)
                                  + "\n")


def _csv_writer(path: Path, header, kind: str, seed):
    fh = open(path, "w", newline="")
    fh.write(f"# hybridseg {kind} v{REPORT_VERSION} seed={seed} config=run.json\n")
    w = csv.writer(fh)
    w.writerow(header)
    return fh, w


# --- data helpers ---------------------------------------------------------

def load_trajectories(data: str, split: str | None):
    from .datagen import read_csv

    p = Path(data)
    if p.is_file():
        return [(p.name, read_csv(p))]
    if not p.is_dir():
        raise FileNotFoundError(f"no such dataset: {p}")
    d = p / split if split and (p / split).is_dir() else p
    files = sorted(d.glob("*.csv"))
    if not files:
        if split and not (p / split).is_dir() and (p / "manifest.json").exists():
            raise FileNotFoundError(f"dataset {p} has no split {split!r}")
        raise FileNotFoundError(f"no trajectory CSV files in {d}")
    return [(f.name, read_csv(f)) for f in files]


# --- commands -------------------------------------------------------------

def cmd_generate(cfg: dict) -> int:
    from dataclasses import replace

    from .datagen import (LvSpec, SineSpec, apply_masking, extract_sdfs, gen_lv, gen_sine,
                          write_dataset)

    fam = cfg["family"]
    if fam not in ("sine", "lv"):
        raise ConfigError(f"family must be 'sine' or 'lv', got {fam!r}")
    for k in ("n_train", "n_val", "n_test"):
        if cfg[k] < 0:
            raise ConfigError(f"{k} must be >= 0")
    base = SineSpec() if fam == "sine" else LvSpec(variant=cfg["variant"])
    if cfg["noise_std"] is not None:
        base = replace(base, noise_std=cfg["noise_std"])
    gen = gen_sine if fam == "sine" else gen_lv
    seed = cfg["seed"]
    train_spec = replace(base, total_obs=cfg["total_obs"], aligned=cfg["aligned"])
    test_spec = replace(base, total_obs=cfg["test_total_obs"], aligned=False)
    t0 = time.perf_counter()
    splits = {}
    offset = 0
    for name, count, spec in (("train", cfg["n_train"], train_spec),
                              ("val", cfg["n_val"], train_spec),
                              ("test", cfg["n_test"], test_spec)):
        splits[name] = gen(spec, count, seed, start_index=offset) if count else []
        offset += count
    if cfg["mask_test"]:
        splits["test"] = [apply_masking(tr, seed, cfg["shared_mask"], i)
                          for i, tr in enumerate(splits["test"])]
    if cfg["extract_sdfs"]:
        for name in ("train", "val"):
            splits[f"{name}_sdfs"] = [s for tr in splits[name] for s in extract_sdfs(tr)]
    out = Path(cfg["out"])
    manifest = {"family": fam, "seed": seed, "config": cfg,
                "spec": {"train": train_spec.to_dict(), "test": test_spec.to_dict()},
                "tool_version": __version__}
    write_dataset(out, splits, manifest)
    _write_run(out, "generate", cfg, {"seconds": time.perf_counter() - t0,
                                      "counts": {k: len(v) for k, v in splits.items()}})
    log.info("wrote %s", {k: len(v) for k, v in splits.items()})
    return EXIT_OK


def _model_config(cfg):
    from dataclasses import replace

    from .latent_ode import lotka_volterra_config, sine_config

    if cfg["model"] not in ("sine", "lv"):
        raise ConfigError(f"model must be 'sine' or 'lv', got {cfg['model']!r}")
    mc = sine_config() if cfg["model"] == "sine" else lotka_volterra_config()
    if cfg["latent_rtol"] is not None or cfg["latent_atol"] is not None:
        s = mc.latent_solver
        s = replace(s, rtol=cfg["latent_rtol"] or s.rtol, atol=cfg["latent_atol"] or s.atol)
        mc = replace(mc, latent_solver=s)
    return mc


def cmd_train(cfg: dict) -> int:
    from .latent_ode import (LatentOdeModel, TrainConfig, load_checkpoint, save_checkpoint,
                             train)

    _require(cfg, "data")
    out = Path(cfg["out"])
    train_set = [t for _, t in load_trajectories(cfg["data"], cfg["train_split"])]
    val_set = [t for _, t in load_trajectories(cfg["data"], cfg["val_split"])] \
        if cfg["val_split"] else None
    if cfg["max_train"]:
        train_set = train_set[: cfg["max_train"]]
    if val_set and cfg["max_val"]:
        val_set = val_set[: cfg["max_val"]]
    for t in train_set:
        if t.changepoints:
            raise ConfigError("training trajectories must be single SDFs; use --extract-sdfs")
    mc = _model_config(cfg)
    if cfg["resume"]:
        model = load_checkpoint(cfg["resume"], expect=mc)
    else:
        model = LatentOdeModel.initialize(mc, cfg["seed"])
    try:
        tc = TrainConfig(
            epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
            lr_decay=cfg["lr_decay"], lr_patience=cfg["lr_patience"], min_lr=cfg["min_lr"],
            kl_anneal_epochs=cfg["kl_anneal_epochs"], n_z0_samples=cfg["n_z0_samples"],
            clip_norm=cfg["clip_norm"],
            subsample=tuple(cfg["subsample"]) if cfg["subsample"] else None,
            truncate=tuple(cfg["truncate"]) if cfg["truncate"] else None,
            time_decimals=cfg["time_decimals"], seed=cfg["seed"], latent_solver=mc.latent_solver)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write_run(out, "train", cfg, {"n_train": len(train_set),
                                   "n_val": len(val_set) if val_set else 0,
                                   "n_parameters": model.n_parameters()})
    ckpt = out / "model.ckpt"
    lineage = {"init_seed": model.seed, "train_seed": cfg["seed"], "resumed_from": cfg["resume"]}
    save_checkpoint(model, ckpt, {"epoch": None, "lineage": lineage})
    fh, w = _csv_writer(out / "history.csv", ["epoch", "train_loss", "val_loss", "kl_weight",
                                              "lr", "seconds"], "loss-history", cfg["seed"])

    def on_epoch(epoch, m, rec):
        w.writerow([rec["epoch"], repr(rec["train_loss"]), repr(rec["val_loss"]),
                    rec["kl_weight"], rec["lr"], f"{rec['seconds']:.3f}"])
        fh.flush()
        if rec.get("improved"):
            save_checkpoint(m, ckpt, {"epoch": epoch, "val_loss": rec["val_loss"],
                                      "lineage": lineage})

    try:
        train(model, train_set, tc, val_set, on_epoch)
    finally:
        fh.close()
    return EXIT_OK


def _segment_one(model, traj, cost, pcfg, no_segment):
    from .segmentation import Segmentation, pelt_segment, reconstruct

    vis = traj.visible()
    t0 = time.perf_counter()
    if no_segment:
        seg = Segmentation((), len(vis))
        objective = float(cost.cost(vis.values, vis.times, 0, len(vis) - 1))
        stats = {"evaluated": 1, "pruned": 0}
    else:
        seg = pelt_segment(vis.values, vis.times, cost, pcfg)
        objective, stats = seg.objective, dict(seg.stats)
    stats["seconds"] = time.perf_counter() - t0
    recon = reconstruct(model, vis.values, vis.times, seg, traj.times)
    return vis, seg, objective, stats, recon


def _seg_setup(cfg):
    from .latent_ode import MarginalLikelihoodConfig, load_checkpoint
    from .segmentation import PeltConfig, marginal_cost

    model = load_checkpoint(cfg["checkpoint"])
    try:
        ml = MarginalLikelihoodConfig(n_samples=cfg["n_samples"], seed=cfg["seed"])
        pcfg = PeltConfig(beta=cfg["beta"], K=cfg["K"], min_size=cfg["min_size"],
                          time_decimals=cfg["time_decimals"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cost = marginal_cost(model, ml, cfg["time_decimals"], cfg["threads"])
    return model, pcfg, cost


def cmd_segment(cfg: dict) -> int:
    _require(cfg, "checkpoint", "data")
    trajs = load_trajectories(cfg["data"], cfg["split"])
    if cfg["limit"]:
        trajs = trajs[: cfg["limit"]]
    model, pcfg, cost = _seg_setup(cfg)
    out = Path(cfg["out"])
    _write_run(out, "segment", cfg)
    rows = []
    fh, w = _csv_writer(out / "reconstruction.csv",
                        ["file", "t", "mask"] + [f"dim_{d}" for d in range(model.config.data_dim)]
                        + [f"pred_{d}" for d in range(model.config.data_dim)],
                        "reconstruction", cfg["seed"])
    try:
        for name, traj in trajs:
            vis, seg, objective, stats, recon = _segment_one(model, traj, cost, pcfg,
                                                             cfg["no_segment"])
            vidx = traj.visible_index()
            rows.append({
                "file": name, "n": len(traj), "n_visible": len(vis),
                "changepoints_visible": list(seg.changepoints),
                "changepoints": [int(vidx[c]) for c in seg.changepoints],
                "joint_log_prob": -(objective - cfg["beta"] * len(seg)),
                "objective": objective, "stats": stats,
            })
            for i in range(len(traj)):
                w.writerow([name, repr(float(traj.times[i])), int(traj.mask[i])]
                           + [repr(float(v)) for v in traj.values[i]]
                           + [repr(float(v)) for v in recon[i]])
            log.info("%s: changepoints %s (%.1fs)", name, rows[-1]["changepoints"],
                     stats["seconds"])
    finally:
        fh.close()
    doc = {"version": REPORT_VERSION, "seed": cfg["seed"], "config": cfg, "trajectories": rows}
    (out / "segmentation.json").write_text(json.dumps(_strict(doc), indent=2, default=str) + "\n")
    return EXIT_OK


def _nanmean(xs):
    xs = [x for x in xs if x is not None and not (isinstance(x, float) and math.isnan(x))]
    return float(np.mean(xs)) if xs else math.nan


def _aggregate(rows, method, scope):
    sel = [r for r in rows if r["method"] == method and (scope == "all" or r["n_true"] > 0)]
    haus = [r["hausdorff"] for r in sel if r["hausdorff_defined"] and r["n_true"] > 0]
    return {
        "method": method, "scope": scope, "count": len(sel),
        "rand_index": _nanmean([r["rand_index"] for r in sel]),
        "f1": _nanmean([r["f1"] for r in sel]),
        "hausdorff": _nanmean(haus), "hausdorff_count": len(haus),
        "annotation_error": _nanmean([r["annotation_error"] for r in sel]),
        "abs_annotation_error": _nanmean([abs(r["annotation_error"]) for r in sel]),
        "mse": _nanmean([r["mse"] for r in sel]),
        "mse_interp": _nanmean([r["mse_interp"] for r in sel]),
        "mse_extrap": _nanmean([r["mse_extrap"] for r in sel]),
        "seconds": float(np.sum([r["seconds"] for r in sel])) if sel else 0.0,
    }


def _row(name, method, truth, pred, n, tol, seconds, recon=None, traj=None, extra=None):
    from .metrics import mse_split, segmentation_metrics

    m = segmentation_metrics(truth, pred, n, tol)
    row = {"file": name, "method": method, "n_visible": n, "n_true": len(truth),
           "n_pred": len(pred), "true_changepoints": list(truth),
           "pred_changepoints": list(pred), **m.to_dict(), "seconds": seconds,
           "mse": math.nan, "mse_interp": math.nan, "mse_extrap": math.nan}
    if recon is not None and np.any(traj.mask != 0):
        r = mse_split(traj.values, recon, traj.mask)
        row.update(mse=r.total, mse_interp=r.interpolation, mse_extrap=r.extrapolation)
    row.update(extra or {})
    return row


def cmd_benchmark(cfg: dict) -> int:
    from .baselines import (ArCost, ArCostConfig, NormCost, RbfCost, RbfCostConfig,
                            interpolate_to_grid, segment_known_k)
    from .plotting import line_plot_svg
    from .segmentation import PeltConfig, pelt_segment

    _require(cfg, "data")
    methods = cfg["methods"] or []
    unknown = set(methods) - {"latseg", "rbf", "ar", "norm"}
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}")
    if ("latseg" in methods or cfg["k_sweep"]) and not cfg["checkpoint"]:
        raise ConfigError("latseg and k_sweep need --checkpoint")
    trajs = load_trajectories(cfg["data"], cfg["split"])
    if cfg["limit"]:
        trajs = trajs[: cfg["limit"]]
    out = Path(cfg["out"])
    _write_run(out, "benchmark", cfg)
    model = pcfg = cost = None
    if "latseg" in methods or cfg["k_sweep"]:
        model, pcfg, cost = _seg_setup(cfg)
    baselines = {"rbf": RbfCost(RbfCostConfig(cfg["rbf_gamma"])),
                 "ar": ArCost(ArCostConfig(cfg["ar_order"])), "norm": NormCost()}
    rows, timings = [], {"latseg": 0.0, "baselines": 0.0, "k_sweep": 0.0}
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    for idx, (name, traj) in enumerate(trajs):
        vis = traj.visible()
        truth = list(vis.changepoints)
        n = len(vis)
        recon = None
        if "latseg" in methods:
            vis, seg, objective, stats, recon = _segment_one(model, traj, cost, pcfg,
                                                             cfg["no_segment"])
            timings["latseg"] += stats["seconds"]
            rows.append(_row(name, "latseg", truth, list(seg.changepoints), n, cfg["tolerance"],
                             stats["seconds"], recon, traj,
                             {"objective": objective, "evaluated": stats.get("evaluated"),
                              "pruned": stats.get("pruned")}))
        base_preds = {}
        if truth:  # known-k baselines only where there is something to find
            grid = interpolate_to_grid(traj, cfg["grid_size"] or n)
            for meth in ("rbf", "ar", "norm"):
                if meth not in methods:
                    continue
                t0 = time.perf_counter()
                try:
                    s = segment_known_k(grid.values, grid.times, baselines[meth], len(truth),
                                        cfg["baseline_min_size"] or 1)
                    pred, failed = grid.map_changepoints(s.changepoints), False
                except ValueError as exc:
                    log.warning("%s on %s: %s", meth, name, exc)
                    pred, failed = [], True
                dt = time.perf_counter() - t0
                timings["baselines"] += dt
                base_preds[meth] = pred
                rows.append(_row(name, meth, truth, pred, n, cfg["tolerance"], dt,
                                 extra={"failed": failed}))
        if idx < cfg["plots"]:
            _plot_one(plots, idx, name, traj, vis, truth, recon, rows, base_preds, line_plot_svg)
        log.info("%s done", name)
    sweep = []
    if cfg["k_sweep"]:
        t0 = time.perf_counter()
        for K in sorted(cfg["k_sweep"]):
            kcfg = PeltConfig(beta=cfg["beta"], K=K, min_size=cfg["min_size"],
                              time_decimals=cfg["time_decimals"])
            per, before = [], cost.evaluations
            tk = time.perf_counter()
            for name, traj in trajs:
                vis = traj.visible()
                seg = pelt_segment(vis.values, vis.times, cost, kcfg)
                per.append(_row(name, "latseg", list(vis.changepoints), list(seg.changepoints),
                                len(vis), cfg["tolerance"], seg.stats["seconds"], extra={
                                    "objective": seg.objective,
                                    "evaluated": seg.stats["evaluated"],
                                    "pruned": seg.stats["pruned"]}))
            sweep.append({"K": K, "objective_sum": float(sum(r["objective"] for r in per)),
                          "objectives": [r["objective"] for r in per],
                          "pruned_counts": [r["pruned"] for r in per],
                          "evaluated": int(sum(r["evaluated"] for r in per)),
                          "pruned": int(sum(r["pruned"] for r in per)),
                          "new_cost_evaluations": cost.evaluations - before,
                          "seconds": time.perf_counter() - tk,
                          **{k: v for k, v in _aggregate(per, "latseg", "all").items()
                             if k in ("rand_index", "f1", "hausdorff", "abs_annotation_error")}})
        timings["k_sweep"] = time.perf_counter() - t0
    aggregates = [_aggregate(rows, m, scope) for m in methods for scope in ("all", "with_changepoints")
                  if any(r["method"] == m for r in rows)]
    report = {"version": REPORT_VERSION, "seed": cfg["seed"], "config": cfg,
              "rows": rows, "aggregates": aggregates, "k_sweep": sweep, "timings": timings}
    (out / "report.json").write_text(json.dumps(_strict(report), indent=2, default=_json_default)
                                     + "\n")
    cols = ["file", "method", "n_visible", "n_true", "n_pred", "rand_index", "hausdorff",
            "hausdorff_defined", "f1", "annotation_error", "mse", "mse_interp", "mse_extrap",
            "seconds"]
    fh, w = _csv_writer(out / "report.csv", cols, "benchmark-rows", cfg["seed"])
    with fh:
        for r in rows:
            w.writerow([r.get(c) for c in cols])
    acols = ["method", "scope", "count", "rand_index", "f1", "hausdorff", "hausdorff_count",
             "annotation_error", "abs_annotation_error", "mse", "mse_interp", "mse_extrap",
             "seconds"]
    fh, w = _csv_writer(out / "aggregates.csv", acols, "benchmark-aggregates", cfg["seed"])
    with fh:
        for a in aggregates:
            w.writerow([a[c] for c in acols])
    if sweep:
        scols = ["K", "objective_sum", "rand_index", "f1", "hausdorff", "abs_annotation_error",
                 "evaluated", "pruned", "new_cost_evaluations", "seconds"]
        fh, w = _csv_writer(out / "k_sweep.csv", scols, "k-sweep", cfg["seed"])
        with fh:
            for s in sweep:
                w.writerow([s[c] for c in scols])
    for a in aggregates:
        log.info("%-7s %-18s rand %.3f f1 %.3f hausdorff %.2f mse %.4g", a["method"], a["scope"],
                 a["rand_index"], a["f1"], a["hausdorff"], a["mse"])
    return EXIT_OK


def _strict(o):
    """NaN becomes null and infinities become strings, so the output is strict JSON."""
    if isinstance(o, dict):
        return {k: _strict(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_strict(v) for v in o]
    if isinstance(o, (float, np.floating)):
        o = float(o)
        if math.isnan(o):
            return None
        if math.isinf(o):
            return "inf" if o > 0 else "-inf"
    return o


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    return str(o)


def _plot_one(plots, idx, name, traj, vis, truth, recon, rows, base_preds, line_plot_svg):
    stem = f"{idx:03d}"
    times = vis.times
    with open(plots / f"{stem}_reconstruction.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mask"] + [f"dim_{d}" for d in range(traj.dim)]
                   + ([f"pred_{d}" for d in range(traj.dim)] if recon is not None else []))
        for i in range(len(traj)):
            w.writerow([repr(float(traj.times[i])), int(traj.mask[i])]
                       + [repr(float(v)) for v in traj.values[i]]
                       + ([repr(float(v)) for v in recon[i]] if recon is not None else []))
    pred = next((r["pred_changepoints"] for r in reversed(rows)
                 if r["file"] == name and r["method"] == "latseg"), None)
    with open(plots / f"{stem}_segments.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "segment", "t_start", "t_end"])
        sets = {"truth": truth, **({"latseg": pred} if pred is not None else {}), **base_preds}
        for meth, cps in sets.items():
            bounds = [-1, *cps, len(times) - 1]
            for j, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
                w.writerow([meth, j, repr(float(times[a + 1])), repr(float(times[b]))])
    series = [(traj.times, traj.values[:, 0], "data", {"points": True, "color": "#777777"})]
    if recon is not None:
        series.append((traj.times, recon[:, 0], "latseg", {"color": "#d62728"}))
    bounds = [-1, *truth, len(times) - 1]
    bands = [(times[a + 1], times[b]) for a, b in zip(bounds[:-1], bounds[1:])]
    vlines = [times[c] for c in (pred or [])]
    line_plot_svg(plots / f"{stem}.svg", series, bands, vlines, title=name)


def cmd_metrics(cfg: dict) -> int:
    from .metrics import segmentation_metrics

    _require(cfg, "truth", "pred")
    truth = dict(load_trajectories(cfg["truth"], cfg["split"]))
    pred = json.loads(Path(cfg["pred"]).read_text())
    rows = []
    for r in pred["trajectories"]:
        if r["file"] not in truth:
            raise ConfigError(f"prediction for unknown trajectory {r['file']}")
        vis = truth[r["file"]].visible()
        m = segmentation_metrics(vis.changepoints, r["changepoints_visible"], len(vis),
                                 cfg["tolerance"])
        rows.append({"file": r["file"], **m.to_dict()})
    agg = {k: _nanmean([r[k] for r in rows if k != "hausdorff" or r["hausdorff_defined"]])
           for k in ("rand_index", "f1", "hausdorff", "annotation_error", "abs_annotation_error")}
    out = Path(cfg["out"])
    _write_run(out, "metrics", cfg)
    doc = {"version": REPORT_VERSION, "seed": cfg["seed"], "config": cfg, "rows": rows,
           "aggregate": agg}
    (out / "metrics.json").write_text(json.dumps(_strict(doc), indent=2, default=_json_default)
                                      + "\n")
    print(json.dumps(_strict(agg), indent=2))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "segment": cmd_segment,
            "benchmark": cmd_benchmark, "metrics": cmd_metrics}


def main(argv=None) -> int:
    from .latent_ode import CheckpointError, TrainingDivergedError
    from .ode import NonConvergenceError, NumericalError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        if cfg["threads"] < 1:
            raise ConfigError("threads must be >= 1")
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"hybridseg: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"hybridseg: training diverged at epoch {exc.epoch}, batch {exc.batch}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except (NumericalError, NonConvergenceError, FloatingPointError) as exc:
        print(f"hybridseg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointError) as exc:
        print(f"hybridseg: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"hybridseg: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
