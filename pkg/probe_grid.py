"""Grid probe: task hardness + base length vs criteria 4/7 (single seed)."""
import sys
import time

import numpy as np

from embaug.augment import IDENTITY
from embaug.networks import build_omega
from embaug.omega import extract_pairs, split_pairs, train_omega, eval_omega, variance_baseline
from embaug.tensor import SGD
from embaug.transfer import ExperimentConfig, make_datasets, train_base

GRID = [
    dict(base_per_class=1000, base_epochs=12),
    dict(base_per_class=1000, base_epochs=20),
]
HARD = dict(noise_std=0.25, pos_jitter=8.0, scale_range=(3.0, 7.5),
            intensity_range=(0.3, 1.0))

for g in GRID:
    cfg = ExperimentConfig(**g, **HARD)
    ds = make_datasets(cfg)[:2]
    t0 = time.time()
    accs = {}
    phis = {}
    for setup in ("none", "hflip"):
        phi, _, recs = train_base(setup, cfg, 0, datasets=ds)
        accs[setup] = recs[-1].eval_top1
        phis[setup] = phi
    pairs = extract_pairs(phis["hflip"], ds[0], IDENTITY)
    tr, ev = split_pairs(pairs)
    znorm = float(np.abs(pairs.inputs).mean())
    om = build_omega(phis["hflip"].spec.embedding_dim, seed=0, tag="identity")
    opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
    st = train_omega(tr, om, opt, cfg.omega_epochs, batch_size=cfg.batch_size,
                     seed=0, eval_pairs=ev)
    m = eval_omega(om, ev)
    vb = variance_baseline(ev)
    print(f"per_class={g['base_per_class']} epochs={g['base_epochs']}: "
          f"none={accs['none']:.4f} hflip={accs['hflip']:.4f} "
          f"d_acc={accs['hflip']-accs['none']:+.4f} | id ratio={m/vb:.5f} "
          f"(mse={m:.4f} vb={vb:.3f} |z|={znorm:.3f}) "
          f"[{time.time()-t0:.0f}s]", flush=True)
