"""Command-line surface: gen | train | eval | ablate | analyze.

One executable covers the whole workflow: generate a synthetic dataset,
train (writing a self-describing run directory), evaluate a checkpoint,
sweep the module/gate ablation grid, and export the propagation analyses.
Users consume the emitted files; nothing is interactive.

Exit codes: 0 success, 2 configuration error, 3 numeric abort during
training, 4 missing artifact (dataset or checkpoint). The environment
variable SSP_DETERMINISTIC=1 forces single-threaded bitwise mode.
"""

from __future__ import annotations

import os

if os.environ.get("SSP_DETERMINISTIC") == "1":
    # Pin BLAS pools before numpy loads so runs are bitwise reproducible.
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, "1")

import argparse
import hashlib
import json
import statistics
import sys
from pathlib import Path

import numpy as np

from . import analysis, dataset, training
from .config import RunConfig, load_config
from .errors import ConfigError, ContractError, FormatError, NumericError
from .model import VideoModel, build_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_MISSING = 4

ABLATION_ARMS = [
    # (name, use_ifg, use_ifs, use_entropy_gate, use_variance_gate)
    ("ifg+ifs", True, True, True, True),
    ("ifg_only", True, False, True, True),
    ("ifs_only", False, True, True, True),
    ("neither", False, False, True, True),
    ("gates_both", True, True, True, True),
    ("entropy_only", True, True, True, False),
    ("variance_only", True, True, False, True),
    ("gates_neither", True, True, False, False),
]


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    if getattr(args, "policy", None) is not None:
        cfg.policy = args.policy
    if getattr(args, "strategy", None) is not None:
        cfg.strategy = args.strategy
    if getattr(args, "n_ifs", None) is not None:
        cfg.n_ifs = args.n_ifs
    cfg.validate()
    return cfg


def _load_splits(cfg: RunConfig):
    root = Path(cfg.data_dir)
    if not (root / "index.csv").exists():
        raise FileNotFoundError(f"dataset not found at {root}; run `sspvideo gen` first")
    index = dataset.read_dataset(root)
    train_v, train_l = dataset.load_split_arrays(index, "train")
    val_v, val_l = dataset.load_split_arrays(index, "val")
    return train_v, train_l, val_v, val_l


def _load_run_model(run_dir: Path) -> tuple[VideoModel, RunConfig]:
    cfg_path = run_dir / "config.json"
    ckpt = run_dir / "checkpoints" / "best"
    if not cfg_path.exists():
        raise FileNotFoundError(f"no config.json under {run_dir}")
    if not ckpt.exists():
        raise FileNotFoundError(f"no checkpoint under {ckpt}")
    cfg = load_config(cfg_path)
    model = VideoModel.load(ckpt, cfg.model_config())
    return model, cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _build_config(args)
    root = Path(args.out if args.out else cfg.data_dir)
    index = dataset.write_dataset(root, cfg.synth_spec())
    digest = hashlib.sha256((root / "index.csv").read_bytes()).hexdigest()
    print(f"dataset: {len(index.entries)} samples "
          f"({cfg.n_classes} classes x {cfg.samples_per_class}) -> {root}")
    print(f"index sha256 {digest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _build_config(args)
    train_v, train_l, val_v, val_l = _load_splits(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    model = build_model(cfg.model_config(), seed=cfg.seed)
    result = training.train(model, train_v, train_l, val_v, val_l,
                            cfg.train_settings(), out_dir=out)
    frozen = "unchanged" if result.frozen_intact else "CHANGED"
    print(f"run dir: {out}")
    print(f"best val top1 {result.best_val_top1:.4f} at epoch {result.best_epoch}")
    print(f"frozen backbone hashes: {frozen}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg_cli = _build_config(args)
    model, cfg = _load_run_model(Path(cfg_cli.out))
    _, _, val_v, val_l = _load_splits(cfg)
    loss, top1 = training.evaluate(model, val_v, val_l)
    print(f"val loss {loss:.6f}  top1 {top1:.4f}  ({len(val_l)} samples)")
    return EXIT_OK


def _run_arm(payload) -> dict:
    base, name, ifg, ifs, w_gate, v_gate, seed = payload
    cfg = RunConfig.from_dict(base)
    cfg.use_ifg, cfg.use_ifs = ifg, ifs
    cfg.use_entropy_gate, cfg.use_variance_gate = w_gate, v_gate
    cfg.seed = seed
    # The sweep isolates the prompt modules: with the backbone frozen, the
    # (off, off) arm is exactly the head-only baseline, so every gap in the
    # table is attributable to prompting and nothing else.
    cfg.policy = "ssp_peft"
    train_v, train_l, val_v, val_l = _load_splits(cfg)
    model = build_model(cfg.model_config(), seed=seed)
    result = training.train(model, train_v, train_l, val_v, val_l, cfg.train_settings())
    return {"arm": name, "seed": seed, "val_top1": result.best_val_top1}


def cmd_ablate(args) -> int:
    cfg = _build_config(args)
    threads = 1 if os.environ.get("SSP_DETERMINISTIC") == "1" else (args.threads or 1)
    base = cfg.to_dict()
    jobs = [(base, name, ifg, ifs, w_g, v_g, cfg.seed + k)
            for (name, ifg, ifs, w_g, v_g) in ABLATION_ARMS for k in range(3)]
    if threads > 1:
        from multiprocessing import Pool
        with Pool(threads) as pool:
            rows = pool.map(_run_arm, jobs)
    else:
        rows = [_run_arm(j) for j in jobs]

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.csv", "w") as fh:
        fh.write("arm,seed,val_top1\n")
        for r in rows:
            fh.write(f"{r['arm']},{r['seed']},{r['val_top1']:.6f}\n")
    summary = []
    for name, *_ in ABLATION_ARMS:
        vals = [r["val_top1"] for r in rows if r["arm"] == name]
        mean = statistics.mean(vals)
        sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
        summary.append((name, mean, sd))
    with open(out / "ablation_summary.csv", "w") as fh:
        fh.write("arm,mean_val_top1,sd\n")
        for name, mean, sd in summary:
            fh.write(f"{name},{mean:.6f},{sd:.6f}\n")
    for name, mean, sd in summary:
        print(f"{name:14s} {mean:.4f} +- {sd:.4f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    run_dir = Path(args.out) if args.out else Path(RunConfig().out)
    model, cfg = _load_run_model(run_dir)
    exports = run_dir / "exports"
    exports.mkdir(parents=True, exist_ok=True)
    mc = cfg.model_config()

    rng = np.random.default_rng(cfg.seed)
    video = rng.random((mc.frames, mc.channels, mc.height, mc.width))
    _, trace = model.forward(video, collect_trace=True)

    wrote = []
    if args.decay:
        for layer in range(mc.n_layers):
            for channel in range(mc.d_inner):
                wrote.append(analysis.export_decay(trace, layer, channel, exports))
    if args.paths:
        wrote.append(analysis.export_paths(mc, exports))
        n = mc.tokens_per_frame
        scan_only = analysis.build_graph(mc, with_ifs=False)
        print(f"scan-only graph diameter: {scan_only.n_nodes - 1} hops; "
              f"with prompt slots every frame pair is within {2 * n + 2} hops")
    if args.gates:
        for layer in range(mc.n_layers):
            wrote.append(analysis.export_update_gates(trace, layer, exports))
            wrote.append(analysis.export_prompt_summary(trace, layer, exports))
    if not (args.decay or args.paths or args.gates):
        print("nothing to do: pass --decay, --paths, and/or --gates")
    for path in wrote:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sspvideo",
        description="Selective state-space video classifier with prompt modules")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="JSON config file (empty object = reference run)")
        sp.add_argument("--seed", type=int, help="override the run seed")
        sp.add_argument("--out", help=out_help)

    g = sub.add_parser("gen", help="generate the synthetic dataset")
    common(g, "dataset directory (default: config data_dir)")
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="train a model, writing a run directory")
    common(t, "run directory")
    t.add_argument("--policy", choices=("ssp_peft", "full", "head_only"))
    t.add_argument("--strategy",
                   choices=("last_forward", "middle", "bidirection", "bi_independent"))
    t.add_argument("--n-ifs", dest="n_ifs", type=int)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a run's best checkpoint on the val split")
    common(e, "run directory to evaluate")
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("ablate", help="run the 8-arm module/gate ablation grid, 3 seeds")
    common(a, "output directory for the ablation tables")
    a.add_argument("--threads", type=int, default=1,
                   help="worker processes for ablation arms")
    a.set_defaults(fn=cmd_ablate)

    z = sub.add_parser("analyze", help="export propagation analyses from a run")
    common(z, "run directory holding the checkpoint")
    z.add_argument("--decay", action="store_true", help="export transmission decay curves")
    z.add_argument("--paths", action="store_true", help="export BFS path lengths")
    z.add_argument("--gates", action="store_true", help="export update-gate and prompt CSVs")
    z.set_defaults(fn=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as err:
        print(f"numeric abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as err:
        print(f"missing artifact: {err}", file=sys.stderr)
        return EXIT_MISSING
    except (ContractError, FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
