"""Three-seed preview of the ordering checks, reusing the acceptance
harness's artifact memoizer so timings match the real run."""
import statistics
import sys
import time
from dataclasses import replace

sys.path.insert(0, "tests")
import test_acceptance as ta  # noqa: E402

from embaug.omega import variance_baseline  # noqa: E402
from embaug.transfer import SCENARIOS, ExperimentConfig  # noqa: E402

CANDIDATE = ExperimentConfig(
    base_per_class=1750, base_eval_per_class=500, base_epochs=14,
    base_lr=0.05, base_warmup_epochs=3.0, pos_jitter=8.0,
    scale_range=(3.0, 7.5), intensity_range=(0.3, 1.0), noise_std=0.25)

SEEDS = (0, 1, 2)


def main():
    ta.CFG = CANDIDATE
    t_all = time.time()
    sh = ta.SharedArtifacts()
    print(f"datasets {sh.seconds['datasets']:.0f}s", flush=True)

    for setup in ("none", "hflip", "hflip+vflip"):
        accs = []
        for s in SEEDS:
            _, recs = sh.base(setup, s)
            accs.append(recs[-1].eval_top1)
            print(f"  base {setup} seed {s}: final={recs[-1].eval_top1:.4f} "
                  f"({sh.seconds[('base', setup, s)]:.0f}s)", flush=True)
        print(f"C7-ish base {setup}: median={statistics.median(accs):.4f}",
              flush=True)

    ratios = []
    for s in SEEDS:
        om, ev, state = sh.identity_omega(s)
        ratios.append(min(state.eval_losses) / variance_baseline(ev))
        print(f"  identity omega seed {s}: ratio={ratios[-1]:.5f} "
              f"({sh.seconds[('omega-identity', s)]:.0f}s)", flush=True)
    print(f"C4 ratio median: {statistics.median(ratios):.5f}", flush=True)

    m_with = [sh.vflip_mse("hflip+vflip", s)[0] for s in SEEDS]
    m_without = [sh.vflip_mse("hflip", s)[0] for s in SEEDS]
    print(f"C5 vflip MSE: with={statistics.median(m_with):.4f} "
          f"without={statistics.median(m_without):.4f} "
          f"ordered={statistics.median(m_with) < statistics.median(m_without)}",
          flush=True)

    finals = {}
    for sc in SCENARIOS:
        finals[sc] = []
        for s in SEEDS:
            recs, _ = sh.transfer(sc, s)
            finals[sc].append(recs[-1].eval_top1)
            print(f"  transfer {sc} seed {s}: final={recs[-1].eval_top1:.4f} "
                  f"({sh.seconds[('transfer', sc, s)]:.0f}s)", flush=True)
    med = {sc: statistics.median(v) for sc, v in finals.items()}
    print("C6 medians: " + ", ".join(f"{sc}={med[sc]:.4f}" for sc in SCENARIOS),
          flush=True)
    print(f"  pe>pn: {med['pixel-embed'] > med['pixel-none']}  "
          f"pn>nn: {med['pixel-none'] > med['none-none']}  "
          f"pp>=pe-1pt: {med['pixel-pixel'] >= med['pixel-embed'] - 0.01}",
          flush=True)
    print(f"total {time.time() - t_all:.0f}s", flush=True)


if __name__ == "__main__":
    main()
