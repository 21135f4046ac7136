"""Calibration probe: criteria 4/5/7 feasibility at candidate config."""
import sys
import time

from embaug.augment import AugmentationKind, IDENTITY
from embaug.networks import build_omega, freeze
from embaug.omega import extract_pairs, split_pairs, train_omega, eval_omega, variance_baseline
from embaug.tensor import SGD
from embaug.transfer import ExperimentConfig, make_datasets, train_base

cfg = ExperimentConfig(
    base_per_class=int(sys.argv[1]) if len(sys.argv) > 1 else 500,
    base_epochs=int(sys.argv[2]) if len(sys.argv) > 2 else 12,
    base_lr=float(sys.argv[3]) if len(sys.argv) > 3 else 0.05,
)
print("cfg:", cfg.base_per_class, "per class,", cfg.base_epochs, "epochs, lr", cfg.base_lr, flush=True)
ds = make_datasets(cfg)
base_ds = ds[:2]

VFLIP = AugmentationKind(tag="vflip")

def omega_eval(phi, kind, seed):
    pairs = extract_pairs(phi, base_ds[0], kind)
    tr, ev = split_pairs(pairs)
    om = build_omega(phi.spec.embedding_dim, seed=seed, tag=kind.name)
    opt = SGD(om.params, lr=cfg.omega_lr, momentum=cfg.momentum)
    st = train_omega(tr, om, opt, cfg.omega_epochs, batch_size=cfg.batch_size,
                     seed=seed, eval_pairs=ev)
    return eval_omega(om, ev), variance_baseline(ev)

acc = {s: [] for s in ("none", "hflip", "hflip+vflip")}
id_ratio = []
vflip_with, vflip_without = [], []
for seed in (0, 1, 2):
    t0 = time.time()
    phis = {}
    for setup in ("none", "hflip", "hflip+vflip"):
        phi, psi, recs = train_base(setup, cfg, seed, datasets=base_ds)
        phis[setup] = phi
        acc[setup].append(recs[-1].eval_top1)
        print(f"  seed {seed} base {setup}: acc={recs[-1].eval_top1:.4f} "
              f"loss={recs[-1].train_loss:.4f} ({time.time()-t0:.0f}s)", flush=True)
    m, vb = omega_eval(phis["hflip"], IDENTITY, seed)
    id_ratio.append(m / vb)
    print(f"  seed {seed} identity-omega: mse={m:.5f} vb={vb:.4f} ratio={m/vb:.5f}", flush=True)
    m_with, vb_w = omega_eval(phis["hflip+vflip"], VFLIP, seed)
    m_without, vb_wo = omega_eval(phis["hflip"], VFLIP, seed)
    vflip_with.append(m_with)
    vflip_without.append(m_without)
    print(f"  seed {seed} vflip-omega: with={m_with:.5f} (vb {vb_w:.3f}) "
          f"without={m_without:.5f} (vb {vb_wo:.3f}) ordered={m_with < m_without}", flush=True)

import statistics
print("== medians ==")
print("base acc none", statistics.median(acc["none"]),
      "hflip", statistics.median(acc["hflip"]),
      "hflip+vflip", statistics.median(acc["hflip+vflip"]))
print("C7 hflip>none:", statistics.median(acc["hflip"]) > statistics.median(acc["none"]))
print("C4 id ratio median", statistics.median(id_ratio), "<0.01:", statistics.median(id_ratio) < 0.01)
print("C5 vflip with", statistics.median(vflip_with), "without", statistics.median(vflip_without),
      "ordered:", statistics.median(vflip_with) < statistics.median(vflip_without))
