"""Embedding-pair extraction and training of the augmentation transformers.

For an augmentation g and frozen feature extractor phi, each base-dataset
sample yields the pair (phi(x), phi(g(x))). A transformer is regressed onto
those pairs with MSE so that, at transfer time, the embedding of an
augmented image can be produced without running the extractor again.

MSE is mean per dimension throughout (the loss op averages over batch and
dims), and eval means are accumulated with exact summation so the result
does not depend on pair order.
"""
import math
from dataclasses import dataclass

import numpy as np

from .augment import AugmentationKind, apply_augmentation
from .data import Dataset
from .networks import Model, forward_embedding, forward_network
from .tensor import NumericError, Tape, Tensor, mse
from .util import fnv1a64, rng_for


@dataclass(frozen=True)
class EmbeddingPair:
    input: np.ndarray
    target: np.ndarray
    augmentation: AugmentationKind
    sample_id: int


@dataclass(frozen=True)
class PairSet:
    """All pairs for one augmentation kind, column-stacked."""
    inputs: np.ndarray   # (n, d) float32
    targets: np.ndarray  # (n, d)
    ids: np.ndarray      # (n,)
    kind: AugmentationKind

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def pair(self, i: int) -> EmbeddingPair:
        return EmbeddingPair(self.inputs[i], self.targets[i], self.kind, int(self.ids[i]))


@dataclass
class OmegaTrainingState:
    epoch: int
    train_losses: list
    eval_losses: list
    seed: int


def extract_pairs(phi: Model, dataset: Dataset, kind: AugmentationKind,
                  meter=None, batch_size: int = 256) -> PairSet:
    """One pair per sample, in dataset order. The extractor runs exactly
    twice per sample: once on the original, once on the augmented image."""
    if not phi.frozen:
        raise ValueError("pair extraction needs a frozen feature extractor")
    n = len(dataset)
    inputs = np.empty((n, phi.spec.embedding_dim), np.float32)
    targets = np.empty_like(inputs)
    for s in range(0, n, batch_size):
        batch = dataset.pixels[s:s + batch_size]
        aug = np.stack([apply_augmentation(img, kind) for img in batch])
        inputs[s:s + batch_size] = forward_embedding(phi, Tensor(batch), meter=meter).data
        targets[s:s + batch_size] = forward_embedding(phi, Tensor(aug), meter=meter).data
    return PairSet(inputs, targets, dataset.ids.copy(), kind)


def split_pairs(pairs: PairSet) -> tuple:
    """Deterministic 80/20 train/eval split keyed on sample id."""
    hashes = np.array([fnv1a64(str(i).encode()) % 5 for i in pairs.ids])
    ev = hashes == 0
    def take(mask):
        return PairSet(pairs.inputs[mask], pairs.targets[mask], pairs.ids[mask], pairs.kind)
    return take(~ev), take(ev)


def variance_baseline(pairs: PairSet) -> float:
    """MSE of the constant predictor that outputs the mean target: the
    per-dimension variance of the targets, averaged over dimensions."""
    t = pairs.targets.astype(np.float64)
    return float(t.var(axis=0).mean())


def eval_omega(omega: Model, pairs: PairSet) -> float:
    """Mean over pairs of the per-pair mean squared error. Exact summation
    makes the value independent of pair order."""
    if len(pairs) == 0:
        raise ValueError("empty pair set")
    out = forward_network(omega, Tensor(pairs.inputs))
    per_pair = ((out.data.astype(np.float64) - pairs.targets) ** 2).mean(axis=1)
    return math.fsum(per_pair.tolist()) / len(pairs)


def apply_omega(omega: Model, z: Tensor, tape=None, meter=None) -> Tensor:
    """z' approximating the embedding of the augmented image."""
    from .cost import count_flops
    out = forward_network(omega, z, tape=tape)
    if meter is not None:
        n = z.data.shape[0] if z.data.ndim == 2 else 1
        meter.add("omega", n * count_flops(omega.spec, "forward"))
    return out


def train_omega(pairs: PairSet, omega: Model, optimizer, epochs: int,
                batch_size: int = 64, seed: int = 0,
                eval_pairs: PairSet | None = None) -> OmegaTrainingState:
    """SGD on batch MSE over the pair set. Appends one train loss (and one
    eval loss when a held-out set is given) per epoch. A non-finite batch
    loss rolls the parameters back to the end of the last finished epoch
    and raises."""
    n = len(pairs)
    if n == 0:
        raise ValueError("empty pair set")
    state = OmegaTrainingState(0, [], [], seed)
    last_good = {k: p.data.copy() for k, p in omega.params.items()}
    for epoch in range(epochs):
        perm = rng_for(seed, "omega-batch", epoch).permutation(n)
        sq_sum = []
        for s in range(0, n, batch_size):
            idx = perm[s:s + batch_size]
            x = Tensor(pairs.inputs[idx])
            t = Tensor(pairs.targets[idx])
            optimizer.zero_grad()
            tape = Tape()
            loss = mse(forward_network(omega, x, tape=tape), t, tape=tape)
            val = float(loss.data)
            if not np.isfinite(val):
                for k, p in omega.params.items():
                    p.data[...] = last_good[k]
                raise NumericError(
                    f"non-finite transformer loss in epoch {epoch}; "
                    f"parameters rolled back to epoch {state.epoch}")
            tape.backward(loss)
            optimizer.step()
            sq_sum.append(val * len(idx))
        state.train_losses.append(math.fsum(sq_sum) / n)
        if eval_pairs is not None:
            state.eval_losses.append(eval_omega(omega, eval_pairs))
        state.epoch = epoch + 1
        last_good = {k: p.data.copy() for k, p in omega.params.items()}
    return state
