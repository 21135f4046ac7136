"""Command-line entry point.

    embaug <subcommand> --config <path> [--set key=value ...] [--out <dir>]

Subcommands cover the pipeline stages in order: gen-data, train-base,
train-omega, transfer, cost, gradcheck, report. Stages communicate through
files in the output directory (checkpoints, metrics CSVs); synthetic
datasets are regenerated from the config seed instead of being read back,
so only checkpoints count as required inputs. Exit codes: 0 success,
2 missing input, 3 numeric divergence.
"""
import argparse
import concurrent.futures
import glob
import os
import sys

import numpy as np

from .augment import IDENTITY, enumerate_set
from .config import ConfigError, load_config
from .cost import FlopMeter, breakdown_from_specs, measured_ratio, predicted_ratio
from .data import save_cifar_binary
from .data import generate_synthetic
from .networks import (
    CheckpointError,
    build_omega,
    freeze,
    load_checkpoint,
    omega_spec,
    phi_spec,
    psi_spec,
    save_checkpoint,
)
from .omega import extract_pairs, split_pairs, train_omega, eval_omega, variance_baseline
from .report import (
    accuracy_chart,
    cost_summary,
    curves_csv,
    metrics_from_csv,
    metrics_to_csv,
    summary,
    svg_line_chart,
    write_json,
)
from .tensor import (
    SGD,
    NumericError,
    Tensor,
    affine,
    conv2d,
    grad_check,
    maxpool2x2,
    mse,
    relu,
    reshape,
    softmax_xent,
)
from .transfer import (
    _synth,
    aggregate_metrics,
    make_datasets,
    run_transfer,
    train_base,
)
from .util import atomic_write_text, rng_for

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_DIVERGED = 3


class MissingInput(RuntimeError):
    pass


def _phi_path(out_dir, setup, seed):
    return os.path.join(out_dir, f"phi-{setup}-seed{seed}.ckpt")


def _psi_path(out_dir, setup, seed):
    return os.path.join(out_dir, f"psi-base-{setup}-seed{seed}.ckpt")


def _omega_path(out_dir, setup, kind_name, seed):
    return os.path.join(out_dir, f"omega-{kind_name}-{setup}-seed{seed}.ckpt")


def _load_required(path, role):
    if not os.path.exists(path):
        raise MissingInput(f"missing {role} checkpoint: {path} "
                           "(run the earlier pipeline stage first)")
    model = load_checkpoint(path, expect_role=role)
    # phi/omega checkpoints are post-freeze artifacts by protocol
    return freeze(model) if role in ("phi", "omega") else model


def _regen_raw(cfg, name):
    """The un-normalized render for one of the four dataset roles; the byte
    format stores [0,1] pixels, so normalization is left to the loader."""
    shapes = cfg.base_shapes if name.startswith("base") else cfg.target_shapes
    per = {"base-train": cfg.base_per_class, "base-eval": cfg.base_eval_per_class,
           "target-train": cfg.target_per_class,
           "target-eval": cfg.target_eval_per_class}[name]
    split = "train" if name.endswith("train") else "eval"
    id_base = {"base-train": 0, "base-eval": 1_000_000,
               "target-train": 2_000_000, "target-eval": 3_000_000}[name]
    return generate_synthetic(_synth(cfg, shapes, per, split, id_base))


def cmd_gen_data(rc):
    cfg = rc.experiment()
    if tuple(cfg.image_size) != (3, 32, 32):
        raise ConfigError("the byte format stores 3x32x32 records; "
                          f"data.image_size is {cfg.image_size}")
    os.makedirs(rc.out_dir, exist_ok=True)
    for name in ("base-train", "base-eval", "target-train", "target-eval"):
        ds = _regen_raw(cfg, name)
        path = os.path.join(rc.out_dir, f"{name}.bin")
        save_cifar_binary(ds, path)
        print(f"{name}: {len(ds)} samples, {ds.class_count} classes -> {path}")
    return EXIT_OK


def cmd_train_base(rc):
    cfg = rc.experiment()
    os.makedirs(rc.out_dir, exist_ok=True)
    datasets = make_datasets(cfg)[:2]
    records = []
    for seed in cfg.seeds:
        phi, psi, recs = train_base(cfg.base_setup, cfg, seed, datasets=datasets)
        save_checkpoint(phi, _phi_path(rc.out_dir, cfg.base_setup, seed))
        save_checkpoint(psi, _psi_path(rc.out_dir, cfg.base_setup, seed))
        records.extend(recs)
        print(f"base[{cfg.base_setup}] seed {seed}: "
              f"final eval top-1 {recs[-1].eval_top1:.4f}")
    atomic_write_text(os.path.join(rc.out_dir,
                                   f"metrics-base-{cfg.base_setup}.csv"),
                      metrics_to_csv(records))
    return EXIT_OK


def cmd_train_omega(rc):
    cfg = rc.experiment()
    os.makedirs(rc.out_dir, exist_ok=True)
    base_train = make_datasets(cfg)[0]
    kinds = [k for k in enumerate_set(cfg.base_setup) if k != IDENTITY]
    if not kinds:
        print("augset 'none' has no non-identity augmentations; nothing to train")
        return EXIT_OK
    for seed in cfg.seeds:
        phi = _load_required(_phi_path(rc.out_dir, cfg.base_setup, seed), "phi")
        for kind in kinds:
            pairs = extract_pairs(phi, base_train, kind)
            tr, ev = split_pairs(pairs)
            om = build_omega(phi.spec.embedding_dim, seed=seed, tag=kind.name)
            opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
            state = train_omega(tr, om, opt, cfg.omega_epochs,
                                batch_size=cfg.batch_size, seed=seed,
                                eval_pairs=ev)
            save_checkpoint(freeze(om),
                            _omega_path(rc.out_dir, cfg.base_setup, kind.name, seed))
            final = eval_omega(om, ev)
            vb = variance_baseline(ev)
            print(f"omega[{kind.name}] seed {seed}: eval mse {final:.5f} "
                  f"({final / vb:.4%} of variance baseline)")
            series = {"train": list(enumerate(state.train_losses)),
                      "eval": list(enumerate(state.eval_losses))}
            atomic_write_text(
                os.path.join(rc.out_dir,
                             f"omega-loss-{kind.name}-seed{seed}.svg"),
                svg_line_chart(series, f"transformer loss ({kind.name})",
                               "epoch", "mse"))
    return EXIT_OK


def _transfer_one(scenario, cfg, seed, out_dir, datasets):
    setup = "none" if scenario == "none-none" else cfg.base_setup
    phi = _load_required(_phi_path(out_dir, setup, seed), "phi")
    omegas = {}
    if scenario == "pixel-embed":
        for kind in enumerate_set(cfg.base_setup):
            if kind == IDENTITY:
                continue
            omegas[kind.name] = _load_required(
                _omega_path(out_dir, cfg.base_setup, kind.name, seed), "omega")
    meter = FlopMeter()
    _, recs = run_transfer(scenario, phi, omegas, cfg, seed,
                           datasets=datasets, meter=meter)
    return recs, meter


def cmd_transfer(rc):
    cfg = rc.experiment()
    os.makedirs(rc.out_dir, exist_ok=True)
    datasets = make_datasets(cfg)[2:]
    jobs = [(scenario, seed) for scenario in cfg.scenarios for seed in cfg.seeds]
    records = []
    meters = {}
    threads = max(1, rc.threads)
    if threads == 1:
        results = [_transfer_one(s, cfg, seed, rc.out_dir, datasets)
                   for s, seed in jobs]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda j: _transfer_one(j[0], cfg, j[1], rc.out_dir, datasets),
                jobs))
    for (scenario, seed), (recs, meter) in zip(jobs, results):
        records.extend(recs)
        meters[(scenario, seed)] = meter
        print(f"{scenario} seed {seed}: final eval top-1 {recs[-1].eval_top1:.4f}")
    atomic_write_text(os.path.join(rc.out_dir, "metrics-transfer.csv"),
                      metrics_to_csv(records))
    cost = None
    pp = [m for (s, _), m in meters.items() if s == "pixel-pixel"]
    pe = [m for (s, _), m in meters.items() if s == "pixel-embed"]
    if pp and pe:
        cb = _default_breakdown(cfg)
        cost = cost_summary(cb, predicted_ratio(cb),
                            measured_ratio(pp[0], pe[0]))
    agg = aggregate_metrics(records)
    transfer_agg = {k: v for k, v in agg.items() if not k.startswith("base-")}
    atomic_write_text(os.path.join(rc.out_dir, "curves-transfer.csv"),
                      curves_csv(transfer_agg))
    atomic_write_text(os.path.join(rc.out_dir, "accuracy-transfer.svg"),
                      accuracy_chart(transfer_agg))
    write_json(os.path.join(rc.out_dir, "summary.json"), summary(records, cost=cost))
    return EXIT_OK


def _default_breakdown(cfg):
    phi = phi_spec(in_shape=cfg.image_size)
    psi = psi_spec(phi.embedding_dim, len(cfg.target_shapes), head="transfer",
                   hidden=cfg.transfer_hidden)
    omega = omega_spec(phi.embedding_dim)
    n = len(enumerate_set(cfg.base_setup))
    return breakdown_from_specs(phi, psi, omega, n_variants=n)


def cmd_cost(rc):
    cfg = rc.experiment()
    os.makedirs(rc.out_dir, exist_ok=True)
    cb = _default_breakdown(cfg)
    payload = cost_summary(cb, predicted_ratio(cb))
    write_json(os.path.join(rc.out_dir, "cost.json"), payload)
    for k, v in sorted(payload.items()):
        print(f"{k}: {v}")
    return EXIT_OK


def _gradcheck_cases(seed):
    rng = rng_for(seed, "cli-gradcheck")
    f64 = lambda *shape: rng.normal(0, 1, shape)

    def case_affine():
        p = {"w": Tensor(f64(3, 4), is_param=True),
             "b": Tensor(f64(3), is_param=True)}
        x = f64(5, 4)
        return lambda t: mse(affine(Tensor(x), p["w"], p["b"], tape=t),
                             Tensor(np.zeros((5, 3))), tape=t), p

    def case_conv():
        p = {"k": Tensor(f64(2, 1, 3, 3), is_param=True),
             "b": Tensor(f64(2), is_param=True)}
        x = f64(1, 6, 6)
        return lambda t: mse(conv2d(Tensor(x), p["k"], p["b"], padding=1, tape=t),
                             Tensor(np.zeros((2, 6, 6))), tape=t), p

    def case_composed():
        p = {"k": Tensor(f64(2, 1, 3, 3), is_param=True),
             "kb": Tensor(f64(2), is_param=True),
             "w": Tensor(0.2 * f64(3, 8), is_param=True),
             "b": Tensor(0.2 * f64(3), is_param=True)}
        x = f64(1, 4, 4)

        def fn(t):
            h = relu(conv2d(Tensor(x), p["k"], p["kb"], padding=1, tape=t), tape=t)
            h = maxpool2x2(h, tape=t)
            h = reshape(h, (-1,), tape=t)
            return softmax_xent(affine(h, p["w"], p["b"], tape=t),
                                np.array(1), tape=t)
        return fn, p

    return [case_affine(), case_conv(), case_composed()]


def cmd_gradcheck(rc):
    worst = 0.0
    for seed in range(10):
        for fn, params in _gradcheck_cases(seed):
            report = grad_check(fn, params)
            worst = max(worst, report.max_rel_error)
    print(f"max relative error over all cases: {worst:.3e}")
    if worst >= 1e-4:
        print("gradient check FAILED")
        return 1
    return EXIT_OK


def cmd_report(rc):
    paths = sorted(glob.glob(os.path.join(rc.out_dir, "metrics*.csv")))
    if not paths:
        raise MissingInput(f"no metrics CSVs found in {rc.out_dir}")
    records = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            records.extend(metrics_from_csv(fh.read()))
    agg = aggregate_metrics(records)
    transfer_agg = {k: v for k, v in agg.items() if not k.startswith("base-")}
    if transfer_agg:
        atomic_write_text(os.path.join(rc.out_dir, "curves.csv"),
                          curves_csv(transfer_agg))
        atomic_write_text(os.path.join(rc.out_dir, "accuracy.svg"),
                          accuracy_chart(transfer_agg))
    write_json(os.path.join(rc.out_dir, "summary.json"), summary(records))
    print(f"merged {len(paths)} CSV(s), {len(records)} records, "
          f"{len(agg)} scenario(s)")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-base": cmd_train_base,
    "train-omega": cmd_train_omega,
    "transfer": cmd_transfer,
    "cost": cmd_cost,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="embaug",
        description="embedding-space augmentation experiments")
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="config file path")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    dest="overrides", help="override a config key")
    ap.add_argument("--out", default=None, help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not os.path.exists(args.config):
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    try:
        rc = load_config(args.config, overrides=args.overrides,
                         subcommand=args.subcommand, out_dir=args.out)
        threads = os.environ.get("EMBAUG_THREADS")
        if threads:
            rc.threads = int(threads)
        return COMMANDS[args.subcommand](rc)
    except MissingInput as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except CheckpointError as e:
        print(f"error: bad checkpoint: {e}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except NumericError as e:
        print(f"error: numeric divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_MISSING_INPUT


if __name__ == "__main__":
    sys.exit(main())
