"""Probe: stage timings + spectral closed-form C4 prediction vs noise level."""
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

BASE = dict(base_per_class=1500, base_epochs=16, base_lr=0.08,
            pos_jitter=8.0, scale_range=(3.0, 7.5),
            intensity_range=(0.3, 1.0))

noise = float(sys.argv[1])
train_real_omega = len(sys.argv) > 2 and sys.argv[2] == "omega"

cfg = ExperimentConfig(noise_std=noise, **BASE)
ds = make_datasets(cfg)[:2]

t0 = time.time()
phi_none, _, recs_none = train_base("none", cfg, 0, datasets=ds)
t_none = time.time() - t0
t0 = time.time()
phi, _, recs = train_base("hflip", cfg, 0, datasets=ds)
t_hflip = time.time() - t0

t0 = time.time()
pairs = extract_pairs(phi, ds[0], IDENTITY)
t_extract = time.time() - t0
tr, ev = split_pairs(pairs)
vb = variance_baseline(ev)

centered = tr.targets.astype(np.float64) - tr.targets.mean(axis=0)
sv = np.linalg.svd(centered, compute_uv=False)
lam = sv ** 2 / centered.shape[0]
d = lam.size
total = lam.sum()

lr, m = cfg.omega_lr, cfg.momentum


def predicted(T, c):
    rate = c * T * lr * lam / (d * (1.0 - m))
    return float((lam * np.exp(-rate)).sum() / total)


n_tr = len(tr.inputs)
print(f"noise={noise} none={recs_none[-1].eval_top1:.4f} "
      f"hflip={recs[-1].eval_top1:.4f} d={recs[-1].eval_top1 - recs_none[-1].eval_top1:+.4f}")
print(f"  t_base none={t_none:.0f}s hflip={t_hflip:.0f}s extract={t_extract:.1f}s "
      f"n_tr={n_tr} vb={vb:.3f} |z|={float(np.abs(pairs.inputs).mean()):.3f}")
for pc in (1500, 1750, 2000):
    T = 100 * -(-int(0.8 * 3 * pc) // 64)
    print(f"  per_class={pc} T~{T}: pred(c=2)={predicted(T, 2):.5f} "
          f"pred(c=4)={predicted(T, 4):.5f}")

if train_real_omega:
    om = build_omega(phi.spec.embedding_dim, seed=0, tag="identity")
    opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
    t0 = time.time()
    train_omega(tr, om, opt, cfg.omega_epochs, batch_size=cfg.batch_size, seed=0)
    t_om = time.time() - t0
    mse_ev = eval_omega(om, ev)
    T = 100 * -(-n_tr // 64)
    print(f"  REAL omega: {t_om:.0f}s ratio={mse_ev / vb:.5f} (T={T} "
          f"pred2={predicted(T, 2):.5f} pred4={predicted(T, 4):.5f})")
