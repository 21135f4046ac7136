"""Generic arm sweep at desk scale: base health, hflip-vs-none gap,
per-class recall, identity-transformer ratio per arm."""
import statistics
import time
from dataclasses import replace

from embaug.augment import IDENTITY
from embaug.networks import build_omega, forward_classify, forward_embedding
from embaug.omega import extract_pairs, split_pairs, train_omega, variance_baseline
from embaug.tensor import SGD, Tensor
from embaug.transfer import ExperimentConfig, make_datasets, train_base

BASE = ExperimentConfig(
    base_per_class=1000, base_eval_per_class=200, base_epochs=14,
    base_warmup_epochs=3.0, pos_jitter=8.0,
    scale_range=(3.0, 7.5), intensity_range=(0.35, 1.0))

ARMS = [
    dict(noise_std=0.15, base_lr=0.04, intensity_range=(0.25, 1.0)),
    dict(noise_std=0.15, base_lr=0.04, intensity_range=(0.25, 1.0),
         scale_range=(2.5, 7.5)),
    dict(noise_std=0.12, base_lr=0.04, intensity_range=(0.25, 1.0),
         scale_range=(2.5, 7.5)),
]


def per_class_recall(phi, psi, ds):
    out = []
    for cls in range(ds.class_count):
        mask = ds.labels == cls
        z = forward_embedding(phi, Tensor(ds.pixels[mask]))
        pred = forward_classify(psi, z).data.argmax(axis=1)
        out.append(float((pred == cls).mean()))
    return out


def main():
    for arm in ARMS:
        cfg = replace(BASE, **arm)
        ds = make_datasets(cfg)[:2]
        print(f"=== {arm}", flush=True)
        phis = {}
        medians = {}
        for setup in ("none", "hflip"):
            finals = []
            for seed in range(3):
                t0 = time.time()
                phi, psi, recs = train_base(setup, cfg, seed, datasets=ds)
                phis[(setup, seed)] = phi
                finals.append(recs[-1].eval_top1)
                rec = per_class_recall(phi, psi, ds[1])
                print(f"  {setup} seed={seed} final={recs[-1].eval_top1:.4f} "
                      f"recall={[f'{r:.3f}' for r in rec]} "
                      f"({time.time() - t0:.0f}s)", flush=True)
            medians[setup] = statistics.median(finals)
            print(f"  {setup}: median={medians[setup]:.4f}", flush=True)
        print(f"  gap hflip-none={medians['hflip'] - medians['none']:+.4f}",
              flush=True)
        ratios = []
        for seed in range(3):
            t0 = time.time()
            phi = phis[("hflip", seed)]
            pairs = extract_pairs(phi, ds[0], IDENTITY)
            tr, ev = split_pairs(pairs)
            vb = variance_baseline(ev)
            if vb == 0.0:
                print(f"  omega seed={seed} SKIPPED (collapsed base)", flush=True)
                continue
            om = build_omega(phi.spec.embedding_dim, seed=seed, tag="identity")
            opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
            state = train_omega(tr, om, opt, cfg.omega_epochs,
                                batch_size=cfg.batch_size, seed=seed,
                                eval_pairs=ev)
            ratios.append(min(state.eval_losses) / vb)
            print(f"  omega seed={seed} ratio={ratios[-1]:.5f} "
                  f"({time.time() - t0:.0f}s)", flush=True)
        if ratios:
            print(f"  C4 median of {len(ratios)}: "
                  f"{statistics.median(ratios):.5f}", flush=True)


if __name__ == "__main__":
    main()
