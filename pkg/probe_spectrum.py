"""Probe: factor-diverse low-noise task vs criteria 4/7, with spectrum stats."""
import sys
import time

import numpy as np

from embaug.augment import IDENTITY
from embaug.networks import build_omega
from embaug.omega import extract_pairs, split_pairs, train_omega, eval_omega, variance_baseline
from embaug.tensor import SGD
from embaug.transfer import ExperimentConfig, make_datasets, train_base

CONFIGS = {
    "P1": dict(base_per_class=1000, base_epochs=12),
    "P2": dict(base_per_class=1500, base_epochs=12),
    "P3": dict(base_per_class=1000, base_epochs=18),
}
FACTOR_HARD = dict(noise_std=0.08, pos_jitter=10.0, scale_range=(2.5, 8.0),
                   intensity_range=(0.3, 1.0))

which = sys.argv[1]
cfg = ExperimentConfig(**CONFIGS[which], **FACTOR_HARD)
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
centered = pairs.targets.astype(np.float64) - pairs.targets.mean(axis=0)
sv = np.linalg.svd(centered, compute_uv=False)
var = sv ** 2 / centered.shape[0]
frac5 = var[:5].sum() / var.sum()
frac20 = var[:20].sum() / var.sum()
om = build_omega(phis["hflip"].spec.embedding_dim, seed=0, tag="identity")
opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
train_omega(tr, om, opt, cfg.omega_epochs, batch_size=cfg.batch_size, seed=0,
            eval_pairs=ev)
m = eval_omega(om, ev)
vb = variance_baseline(ev)
print(f"{which} per_class={cfg.base_per_class} epochs={cfg.base_epochs}: "
      f"none={accs['none']:.4f} hflip={accs['hflip']:.4f} "
      f"d={accs['hflip']-accs['none']:+.4f} | ratio={m/vb:.5f} "
      f"(mse={m:.5f} vb={vb:.3f}) top5={frac5:.3f} top20={frac20:.3f} "
      f"|z|={float(np.abs(pairs.inputs).mean()):.3f} [{time.time()-t0:.0f}s]",
      flush=True)
