"""Base training, the four transfer scenarios, and seed-sweep aggregation.

Base stage: feature extractor and a single-affine head are trained jointly
on the base shapes with one augmentation drawn per sample per epoch from the
configured set. The extractor is then frozen; everything downstream treats
it as read-only.

Transfer stage: a fresh three-layer head is trained on the scarce target
shapes while the extractor stays frozen. The four scenarios differ only in
how training variants are produced, never in evaluation:

  pixel-pixel  every augmented variant is rendered in pixel space and runs
               through the frozen extractor each epoch,
  pixel-none   only the original sample is used,
  pixel-embed  the extractor runs once per sample; the other variants are
               produced from its embedding by the frozen transformers,
  none-none    as pixel-none, but the extractor comes from a base trained
               without augmentation.

All FLOP metering happens here, analytically, per forward/backward actually
executed; evaluation passes are never metered so the meters compare pure
training cost. Base-stage training is not metered either, only transfer
runs are (the cost model compares transfer scenarios).
"""
import math
import statistics
from dataclasses import dataclass

import numpy as np

from .augment import IDENTITY, apply_augmentation, enumerate_set
from .cost import FlopMeter, count_flops
from .data import SyntheticSpec, batch_iter, compute_stats, generate_synthetic, normalize
from .networks import (
    Model,
    build_omega,
    build_phi,
    build_psi,
    forward_classify,
    forward_embedding,
    freeze,
    predict_class,
)
from .omega import apply_omega, extract_pairs, split_pairs, train_omega
from .tensor import SGD, Tape, Tensor, softmax_xent
from .util import rng_for

SCENARIOS = ("pixel-pixel", "pixel-none", "pixel-embed", "none-none")


@dataclass(frozen=True)
class ExperimentConfig:
    base_setup: str = "hflip"
    scenarios: tuple = SCENARIOS
    seeds: tuple = (0, 1, 2, 3, 4)
    data_seed: int = 0
    out_dir: str = ""
    # base task
    base_shapes: tuple = ("disk", "square", "triangle")
    base_per_class: int = 1000
    base_eval_per_class: int = 200
    base_epochs: int = 12
    base_lr: float = 0.05
    base_warmup_epochs: float = 0.0
    base_schedule: str = "cosine"
    # target task
    target_shapes: tuple = ("ring", "cross", "bar")
    target_per_class: int = 100
    target_eval_per_class: int = 200
    transfer_epochs: int = 100
    transfer_lr: float = 0.01
    transfer_hidden: tuple = (1024, 128)
    # transformer training
    omega_epochs: int = 100
    omega_lr: float = 0.05
    # shared optimizer/loader knobs
    momentum: float = 0.9
    batch_size: int = 64
    # renderer difficulty; train_mirror_rate skews the facing of the chiral
    # shapes in train splits only (eval splits stay balanced), so flip
    # augmentation supplies poses the train data undersamples
    image_size: tuple = (3, 32, 32)
    pos_jitter: float = 7.0
    scale_range: tuple = (3.5, 7.5)
    intensity_range: tuple = (0.35, 1.0)
    noise_std: float = 0.15
    train_mirror_rate: float = 0.08


@dataclass(frozen=True)
class MetricsRecord:
    scenario: str
    seed: int
    epoch: int
    train_loss: float
    eval_top1: float
    flops_phi: int = 0
    flops_psi_fwd: int = 0
    flops_psi_bwd: int = 0
    flops_omega: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eval_top1 <= 1.0:
            raise ValueError(f"accuracy out of range: {self.eval_top1}")


def _synth(cfg: ExperimentConfig, shapes, per_class, split, id_base):
    return SyntheticSpec(
        shapes=shapes, per_class=per_class, image_size=cfg.image_size,
        seed=cfg.data_seed, split=split, id_base=id_base,
        pos_jitter=cfg.pos_jitter, scale_range=cfg.scale_range,
        intensity_range=cfg.intensity_range, noise_std=cfg.noise_std,
        mirror_rate=cfg.train_mirror_rate if split == "train" else 0.5)


def make_datasets(cfg: ExperimentConfig):
    """Base train/eval and target train/eval, all normalized with the base
    train-split statistics (the frozen extractor's input distribution must
    not shift between stages)."""
    base_tr = generate_synthetic(_synth(cfg, cfg.base_shapes, cfg.base_per_class,
                                        "train", 0))
    base_ev = generate_synthetic(_synth(cfg, cfg.base_shapes, cfg.base_eval_per_class,
                                        "eval", 1_000_000))
    tgt_tr = generate_synthetic(_synth(cfg, cfg.target_shapes, cfg.target_per_class,
                                       "train", 2_000_000))
    tgt_ev = generate_synthetic(_synth(cfg, cfg.target_shapes, cfg.target_eval_per_class,
                                       "eval", 3_000_000))
    stats = compute_stats(base_tr)
    return (normalize(base_tr, stats), normalize(base_ev, stats),
            normalize(tgt_tr, stats), normalize(tgt_ev, stats))


def evaluate_top1(psi: Model, phi: Model, dataset, batch_size: int = 256) -> float:
    """Fraction of samples whose argmax logit hits the label. No
    augmentation, no metering: evaluation cost is outside the comparison."""
    if len(dataset) == 0:
        raise ValueError("empty eval set")
    correct = 0
    for s in range(0, len(dataset), batch_size):
        z = forward_embedding(phi, Tensor(dataset.pixels[s:s + batch_size]))
        pred = predict_class(forward_classify(psi, z).data)
        correct += int((pred == dataset.labels[s:s + batch_size]).sum())
    return correct / len(dataset)


def train_base(setup: str, cfg: ExperimentConfig, seed: int, datasets=None):
    """Joint extractor+head training on the base task. Returns the frozen
    extractor (tagged with the setup), the head, and per-epoch records."""
    if cfg.base_schedule not in ("constant", "cosine"):
        raise ValueError(f"unknown base schedule {cfg.base_schedule!r}")
    if datasets is None:
        datasets = make_datasets(cfg)[:2]
    base_tr, base_ev = datasets[0], datasets[1]
    kinds = enumerate_set(setup)
    phi = build_phi(in_shape=cfg.image_size, seed=seed, tag=setup)
    psi = build_psi(phi.spec.embedding_dim, base_tr.class_count, head="base", seed=seed)
    opt = SGD({**{f"phi.{k}": v for k, v in phi.params.items()},
               **{f"psi.{k}": v for k, v in psi.params.items()}},
              lr=cfg.base_lr, momentum=cfg.momentum)
    records = []
    n = len(base_tr)
    # relu channels die in cascades when a momentum-amplified step lands;
    # warm steps ramp the lr so the ragged first batches cannot kill the
    # net, and the cosine tail shrinks late steps so a single hard batch
    # near the end cannot either (with zero bias a dead channel never
    # recovers, so one spike can zero the embedding for good)
    steps_per_epoch = -(-n // cfg.batch_size)
    warm = max(0, round(cfg.base_warmup_epochs * steps_per_epoch))
    total = cfg.base_epochs * steps_per_epoch
    step = 0
    for epoch in range(cfg.base_epochs):
        draws = rng_for(seed, "base-aug", epoch).integers(0, len(kinds), n)
        loss_sum = 0.0
        for idx in batch_iter(base_tr, cfg.batch_size, seed, epoch):
            imgs = np.stack([apply_augmentation(base_tr.pixels[i], kinds[draws[i]])
                             for i in idx])
            opt.zero_grad()
            tape = Tape()
            z = forward_embedding(phi, Tensor(imgs), tape=tape)
            loss = softmax_xent(forward_classify(psi, z, tape=tape),
                                base_tr.labels[idx], tape=tape)
            tape.backward(loss)
            if step < warm:
                scale = (step + 1) / warm
            elif cfg.base_schedule == "cosine":
                scale = 0.5 * (1.0 + math.cos(math.pi * (step - warm)
                                              / max(1, total - warm)))
            else:
                scale = 1.0
            opt.lr = cfg.base_lr * scale
            opt.step()
            step += 1
            loss_sum += float(loss.data) * len(idx)
        records.append(MetricsRecord(
            scenario=f"base-{setup}", seed=seed, epoch=epoch,
            train_loss=loss_sum / n, eval_top1=evaluate_top1(psi, phi, base_ev)))
    freeze(phi)
    return phi, psi, records


def train_omegas(phi: Model, base_train, setup: str, cfg: ExperimentConfig, seed: int):
    """One frozen transformer per non-identity augmentation in the setup.
    Returns ({name: model}, {name: training state})."""
    models, states = {}, {}
    for kind in enumerate_set(setup):
        if kind == IDENTITY:
            continue
        pairs = extract_pairs(phi, base_train, kind)
        tr, ev = split_pairs(pairs)
        om = build_omega(phi.spec.embedding_dim, seed=seed, tag=kind.name)
        opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
        states[kind.name] = train_omega(tr, om, opt, cfg.omega_epochs,
                                        batch_size=cfg.batch_size, seed=seed,
                                        eval_pairs=ev)
        models[kind.name] = freeze(om)
    return models, states


def _expected_tag(scenario: str, cfg: ExperimentConfig) -> str:
    return "none" if scenario == "none-none" else cfg.base_setup


def run_transfer(scenario: str, phi: Model, omegas: dict, cfg: ExperimentConfig,
                 seed: int, datasets=None, meter: FlopMeter | None = None):
    """Train a fresh transfer head on the target task under one scenario.
    Returns (psi, records); meters accumulate analytic training FLOPs."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}, expected one of {SCENARIOS}")
    if not phi.frozen:
        raise ValueError("transfer needs a frozen extractor")
    want_tag = _expected_tag(scenario, cfg)
    if phi.spec.tag != want_tag:
        raise ValueError(f"scenario {scenario} needs an extractor from the "
                         f"{want_tag!r} base setup, got {phi.spec.tag!r}")
    kinds = enumerate_set(cfg.base_setup) if scenario in ("pixel-pixel", "pixel-embed") \
        else (IDENTITY,)
    if scenario == "pixel-embed":
        missing = [k.name for k in kinds if k != IDENTITY and k.name not in omegas]
        if missing:
            raise ValueError(f"pixel-embed lacks transformers for {missing}")
    if datasets is None:
        datasets = make_datasets(cfg)[2:]
    tgt_tr, tgt_ev = datasets[0], datasets[1]
    if meter is None:
        meter = FlopMeter()

    psi = build_psi(phi.spec.embedding_dim, tgt_tr.class_count, head="transfer",
                    hidden=cfg.transfer_hidden, seed=seed)
    opt = SGD(psi.params, lr=cfg.transfer_lr, momentum=cfg.momentum)
    psi_bwd = count_flops(psi.spec, "backward")
    records = []
    n = len(tgt_tr)
    for epoch in range(cfg.transfer_epochs):
        loss_sum = 0.0
        rows_total = 0
        for idx in batch_iter(tgt_tr, cfg.batch_size, seed, epoch):
            raw = tgt_tr.pixels[idx]
            if scenario == "pixel-embed":
                z0 = forward_embedding(phi, Tensor(raw), meter=meter)
                parts = [z0.data]
                for kind in kinds:
                    if kind == IDENTITY:
                        continue
                    parts.append(apply_omega(omegas[kind.name], z0, meter=meter).data)
                z = np.concatenate(parts, axis=0)
            else:
                imgs = raw if kinds == (IDENTITY,) else np.concatenate(
                    [np.stack([apply_augmentation(im, kind) for im in raw])
                     for kind in kinds], axis=0)
                z = forward_embedding(phi, Tensor(imgs), meter=meter).data
            labels = np.tile(tgt_tr.labels[idx], len(kinds))
            opt.zero_grad()
            tape = Tape()
            logits = forward_classify(psi, Tensor(z), tape=tape, meter=meter)
            loss = softmax_xent(logits, labels, tape=tape)
            tape.backward(loss)
            meter.add("psi_bwd", len(labels) * psi_bwd)
            opt.step()
            loss_sum += float(loss.data) * len(labels)
            rows_total += len(labels)
        snap = meter.snapshot()
        records.append(MetricsRecord(
            scenario=scenario, seed=seed, epoch=epoch,
            train_loss=loss_sum / rows_total,
            eval_top1=evaluate_top1(psi, phi, tgt_ev),
            flops_phi=snap["phi"], flops_psi_fwd=snap["psi_fwd"],
            flops_psi_bwd=snap["psi_bwd"], flops_omega=snap["omega"]))
    return psi, records


def aggregate_metrics(records) -> dict:
    """Per scenario and epoch: median/min/max of eval accuracy over seeds.
    Order-independent; rejects seeds with mismatched epoch grids."""
    by_scenario = {}
    for r in records:
        by_scenario.setdefault(r.scenario, {}).setdefault(r.seed, {})[r.epoch] = r
    out = {}
    for scenario, seeds in sorted(by_scenario.items()):
        grids = {s: tuple(sorted(eps)) for s, eps in seeds.items()}
        first = next(iter(grids.values()))
        if any(g != first for g in grids.values()):
            raise ValueError(f"inconsistent epoch counts across seeds in {scenario}")
        rows = []
        for epoch in first:
            accs = sorted(seeds[s][epoch].eval_top1 for s in seeds)
            rows.append({"epoch": epoch, "median": statistics.median(accs),
                         "min": accs[0], "max": accs[-1]})
        out[scenario] = rows
    return out


def seed_sweep(cfg: ExperimentConfig) -> dict:
    """Run every configured scenario for every seed and aggregate.

    Bases are trained per seed as needed: the configured setup for the
    pixel-* scenarios, plus a no-augmentation base when none-none is in the
    scenario list. Returns records, aggregation, and the final FLOP meters
    keyed by (scenario, seed)."""
    if not cfg.seeds:
        raise ValueError("need at least one seed")
    datasets = make_datasets(cfg)
    base_ds, tgt_ds = datasets[:2], datasets[2:]
    records = []
    meters = {}
    for seed in cfg.seeds:
        bases = {}
        for setup in {_expected_tag(s, cfg) for s in cfg.scenarios}:
            phi, _, base_recs = train_base(setup, cfg, seed, datasets=base_ds)
            bases[setup] = phi
            records.extend(base_recs)
        omegas = {}
        if "pixel-embed" in cfg.scenarios:
            omegas, _ = train_omegas(bases[cfg.base_setup], base_ds[0],
                                     cfg.base_setup, cfg, seed)
        for scenario in cfg.scenarios:
            meter = FlopMeter()
            _, recs = run_transfer(scenario, bases[_expected_tag(scenario, cfg)],
                                   omegas, cfg, seed, datasets=tgt_ds, meter=meter)
            records.extend(recs)
            meters[(scenario, seed)] = meter
    return {"records": records, "aggregate": aggregate_metrics(records),
            "meters": meters}
