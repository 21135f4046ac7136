"""Probe: finalist configs, C7 gap + real identity-transformer ratio."""
import sys
import time

import numpy as np

from embaug.augment import IDENTITY
from embaug.networks import build_omega
from embaug.omega import (
    extract_pairs,
    split_pairs,
    train_omega,
    eval_omega,
    variance_baseline,
)
from embaug.tensor import SGD
from embaug.transfer import ExperimentConfig, make_datasets, train_base

noise, pc, ep, lr = (float(sys.argv[1]), int(sys.argv[2]),
                     int(sys.argv[3]), float(sys.argv[4]))

cfg = ExperimentConfig(noise_std=noise, base_per_class=pc, base_epochs=ep,
                       base_lr=lr, pos_jitter=8.0, scale_range=(3.0, 7.5),
                       intensity_range=(0.3, 1.0))
ds = make_datasets(cfg)[:2]

t0 = time.time()
phi_none, _, recs_none = train_base("none", cfg, 0, datasets=ds)
t_base = time.time() - t0
phi, _, recs = train_base("hflip", cfg, 0, datasets=ds)

t0 = time.time()
pairs = extract_pairs(phi, ds[0], IDENTITY)
tr, ev = split_pairs(pairs)
vb = variance_baseline(ev)
om = build_omega(phi.spec.embedding_dim, seed=0, tag="identity")
opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
train_omega(tr, om, opt, cfg.omega_epochs, batch_size=cfg.batch_size, seed=0)
ratio = eval_omega(om, ev) / vb
t_om = time.time() - t0

acc_n, acc_h = recs_none[-1].eval_top1, recs[-1].eval_top1
print(f"noise={noise} pc={pc} ep={ep} lr={lr}: none={acc_n:.4f} "
      f"hflip={acc_h:.4f} d={acc_h - acc_n:+.4f} | ratio={ratio:.5f} "
      f"vb={vb:.3f} |z|={float(np.abs(pairs.inputs).mean()):.3f} "
      f"[base {t_base:.0f}s omega-side {t_om:.0f}s]", flush=True)
