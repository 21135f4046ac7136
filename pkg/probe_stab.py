"""Stability probe: base training health across seeds under the trapezoid
lr schedule (2-epoch warmup + cosine tail)."""
import time
from dataclasses import replace

import numpy as np

from embaug.networks import forward_embedding
from embaug.tensor import Tensor
from embaug.transfer import ExperimentConfig, make_datasets, train_base

HOT = ExperimentConfig(
    base_per_class=1750, base_eval_per_class=200, base_epochs=14,
    base_lr=0.05, base_warmup_epochs=3.0, pos_jitter=8.0,
    scale_range=(3.0, 7.5), intensity_range=(0.3, 1.0), noise_std=0.22)


def z_health(phi, ds):
    z = forward_embedding(phi, Tensor(ds.pixels[:256])).data
    dead = int((z.max(axis=0) == 0).sum())
    return float(np.abs(z).mean()), dead


def main():
    t0 = time.time()
    ds = make_datasets(HOT)[:2]
    print(f"datasets {time.time() - t0:.0f}s", flush=True)
    for setup, seeds in (("none", range(5)), ("hflip", range(3))):
        finals = []
        for seed in seeds:
            t0 = time.time()
            phi, _, recs = train_base(setup, HOT, seed, datasets=ds)
            accs = [r.eval_top1 for r in recs]
            finals.append(accs[-1])
            mz, dead = z_health(phi, ds[1])
            print(f"{setup} seed={seed} final={accs[-1]:.4f} "
                  f"best={max(accs):.4f} |z|={mz:.3f} dead={dead}/512 "
                  f"({time.time() - t0:.0f}s) traj={[f'{a:.2f}' for a in accs]}",
                  flush=True)
        print(f"{setup}: median={np.median(finals):.4f} min={min(finals):.4f}",
              flush=True)


if __name__ == "__main__":
    main()
