"""Dataset provisioning: synthetic shape images and CIFAR-style binary files.

The synthetic generator renders anti-aliased shapes from signed distance
fields at seeded random positions, scales and intensities. Class identity is
the shape type, so flipping an image never changes its label. Six shapes are
available; the default base task uses disk/square/triangle and the transfer
task uses ring/cross/bar. The triangle (right triangle) and bar (diagonal)
are mirror-asymmetric and drawn in one of two horizontal facings per sample.
The mirrored facing is drawn at a configurable rate: train splits default to
a low rate while eval splits draw both facings equally, the way photo
collections overrepresent a canonical facing although the world shows both.
Vertically flipped triangles never occur in either split.

Regeneration with an equal spec is bitwise identical: every sample draws from
its own tagged rng stream, so nothing depends on generation order.
"""
from dataclasses import dataclass

import numpy as np

from .util import rng_for

SHAPES = ("disk", "square", "triangle", "ring", "cross", "bar")

_RETRY_LIMIT = 100
_STD_FLOOR = 1e-6

CIFAR10_RECORD = 3073   # 1 label byte + 3*1024 planar pixels
CIFAR100_RECORD = 3074  # coarse byte, fine byte, pixels


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray  # (C,H,W)
    label: int
    id: int


@dataclass
class Dataset:
    pixels: np.ndarray  # (N,C,H,W) float32
    labels: np.ndarray  # (N,) int64
    ids: np.ndarray     # (N,) int64
    split: str
    class_count: int
    stats: tuple | None = None  # (mean, std) per channel, from a train split

    def __len__(self):
        return self.pixels.shape[0]

    def sample(self, i: int) -> ImageSample:
        return ImageSample(self.pixels[i], int(self.labels[i]), int(self.ids[i]))


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the shape renderer. Equal specs regenerate equal datasets."""
    shapes: tuple = ("disk", "square", "triangle")
    per_class: int = 100
    image_size: tuple = (3, 32, 32)
    seed: int = 0
    split: str = "train"
    id_base: int = 0
    pos_jitter: float = 5.0
    scale_range: tuple = (4.0, 7.0)
    intensity_range: tuple = (0.6, 1.0)
    noise_std: float = 0.1
    mirror_rate: float = 0.5

    def __post_init__(self):
        for s in self.shapes:
            if s not in SHAPES:
                raise ValueError(f"unknown shape {s!r}, expected one of {SHAPES}")
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if self.split not in ("train", "eval"):
            raise ValueError(f"split must be train or eval, got {self.split!r}")
        if not 0.0 <= self.mirror_rate <= 1.0:
            raise ValueError(f"mirror_rate must lie in [0, 1], got {self.mirror_rate}")


def _box_sdf(dx, dy, ax, ay):
    qx = np.abs(dx) - ax
    qy = np.abs(dy) - ay
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    return outside + np.minimum(np.maximum(qx, qy), 0.0)


# right triangle, right angle at the bottom (larger row index). A horizontal
# facing is drawn per sample at the spec's mirror_rate, so left/right flipped
# triangles are rare in train splits but common in eval splits; vertically
# flipped ones never occur at all. Horizontal flip augmentation therefore
# supplies a facing the train split undersamples, and vertical flip produces
# genuinely novel images.
_TRI_VERTS = np.array([[-0.75, 0.75], [-0.75, -0.75], [0.75, 0.75]])

_SQRT_HALF = np.sqrt(0.5)


def _shape_sdf(shape, dx, dy, r, mirror=1.0):
    """Signed distance to the shape boundary; mirror=-1 flips x for the two
    pose-varied shapes (triangle, bar)."""
    if shape == "disk":
        return np.hypot(dx, dy) - r
    if shape == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) - 0.8 * r
    if shape == "triangle":
        # max of signed edge-plane distances; exact inside a convex polygon
        d = np.full(dx.shape, -np.inf)
        v = _TRI_VERTS * r
        mx = mirror * dx
        for i in range(3):
            a, b = v[i], v[(i + 1) % 3]
            ex, ey = b[0] - a[0], b[1] - a[1]
            n = np.hypot(ex, ey)
            nx, ny = ey / n, -ex / n  # outward for clockwise winding in y-down coords
            d = np.maximum(d, (mx - a[0]) * nx + (dy - a[1]) * ny)
        return d
    if shape == "ring":
        return np.abs(np.hypot(dx, dy) - 0.72 * r) - 0.28 * r
    if shape == "cross":
        return np.minimum(_box_sdf(dx, dy, r, 0.32 * r), _box_sdf(dx, dy, 0.32 * r, r))
    if shape == "bar":
        # diagonal bar; the mirror pose selects the other diagonal
        u = (mirror * dx + dy) * _SQRT_HALF
        v = (dy - mirror * dx) * _SQRT_HALF
        return _box_sdf(u, v, r, 0.28 * r)
    raise ValueError(f"unknown shape {shape!r}")


_POSE_VARIED = ("triangle", "bar")


def _outer_radius(shape, r):
    if shape == "square":
        return 0.8 * r * np.sqrt(2.0)
    if shape == "triangle":
        return 0.75 * r * np.sqrt(2.0)
    return r


def _render_sample(spec: SyntheticSpec, shape: str, rng) -> np.ndarray:
    c, h, w = spec.image_size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    for _ in range(_RETRY_LIMIT):
        cy = h / 2 + rng.uniform(-spec.pos_jitter, spec.pos_jitter)
        cx = w / 2 + rng.uniform(-spec.pos_jitter, spec.pos_jitter)
        r = rng.uniform(*spec.scale_range)
        m = _outer_radius(shape, r) + 1.0
        if cy - m >= 0 and cy + m <= h and cx - m >= 0 and cx + m <= w:
            break
    else:
        raise RuntimeError(f"{shape} sample does not fit the canvas after {_RETRY_LIMIT} draws")
    mirror = 1.0
    if shape in _POSE_VARIED:
        mirror = -1.0 if rng.random() < spec.mirror_rate else 1.0
    alpha = np.clip(0.5 - _shape_sdf(shape, xx - cx, yy - cy, r, mirror), 0.0, 1.0)
    base = rng.uniform(*spec.intensity_range)
    chan = base * rng.uniform(0.7, 1.0, c)
    img = alpha[None, :, :] * chan[:, None, None]
    if spec.noise_std > 0:
        img = img + rng.normal(0.0, spec.noise_std, (c, h, w))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    n = len(spec.shapes) * spec.per_class
    c, h, w = spec.image_size
    pixels = np.empty((n, c, h, w), np.float32)
    labels = np.empty(n, np.int64)
    i = 0
    for label, shape in enumerate(spec.shapes):
        for k in range(spec.per_class):
            rng = rng_for(spec.seed, "synth", spec.split, shape, k)
            pixels[i] = _render_sample(spec, shape, rng)
            labels[i] = label
            i += 1
    ids = spec.id_base + np.arange(n, dtype=np.int64)
    return Dataset(pixels, labels, ids, spec.split, len(spec.shapes))


def load_cifar_binary(path, layout: str = "cifar10", max_records=None,
                      split: str = "train") -> Dataset:
    if layout == "cifar10":
        rec, n_labels, class_count = CIFAR10_RECORD, 1, 10
    elif layout == "cifar100":
        rec, n_labels, class_count = CIFAR100_RECORD, 2, 100
    else:
        raise ValueError(f"unknown layout {layout!r}")
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) == 0 or len(raw) % rec != 0:
        raise ValueError(f"{path}: length {len(raw)} is not a positive multiple of {rec}")
    n = len(raw) // rec
    if max_records is not None:
        n = min(n, max_records)
    buf = np.frombuffer(raw, np.uint8)[:n * rec].reshape(n, rec)
    if layout == "cifar10":
        labels = buf[:, 0].astype(np.int64)
        if labels.max(initial=0) >= 10:
            raise ValueError("label byte out of range for cifar10 layout")
    else:
        coarse = buf[:, 0]
        labels = buf[:, 1].astype(np.int64)  # fine label is the class
        if coarse.max(initial=0) >= 20 or labels.max(initial=0) >= 100:
            raise ValueError("label byte out of range for cifar100 layout")
    pixels = buf[:, n_labels:].reshape(n, 3, 32, 32).astype(np.float32) / 255.0
    ids = np.arange(n, dtype=np.int64)
    return Dataset(np.ascontiguousarray(pixels), labels, ids, split, class_count)


def save_cifar_binary(dataset: Dataset, path):
    """Write in the 3073-byte-record layout; pixels quantized to u8."""
    n, c, h, w = dataset.pixels.shape
    if (c, h, w) != (3, 32, 32):
        raise ValueError(f"cifar10 layout needs 3x32x32 images, got {(c, h, w)}")
    if dataset.labels.max(initial=0) >= 10 or dataset.labels.min(initial=0) < 0:
        raise ValueError("labels exceed the single byte cifar10 range")
    quant = np.clip(np.round(dataset.pixels * 255.0), 0, 255).astype(np.uint8)
    rows = np.empty((n, CIFAR10_RECORD), np.uint8)
    rows[:, 0] = dataset.labels.astype(np.uint8)
    rows[:, 1:] = quant.reshape(n, 3072)
    with open(path, "wb") as f:
        f.write(rows.tobytes())


def compute_stats(dataset: Dataset) -> tuple:
    """Per-channel mean and std over every pixel; std floored at 1e-6."""
    px = dataset.pixels.astype(np.float64)
    mean = px.mean(axis=(0, 2, 3))
    std = np.maximum(px.std(axis=(0, 2, 3)), _STD_FLOOR)
    return mean, std


def normalize(dataset: Dataset, stats: tuple | None = None) -> Dataset:
    """Shift and scale per channel. Stats default to the dataset's own only
    when it is a train split; eval splits must receive train-split stats."""
    if stats is None:
        if dataset.split != "train":
            raise ValueError("eval split needs train-split stats")
        stats = compute_stats(dataset)
    mean, std = stats
    px = (dataset.pixels - mean[None, :, None, None]) / std[None, :, None, None]
    return Dataset(px.astype(np.float32), dataset.labels.copy(), dataset.ids.copy(),
                   dataset.split, dataset.class_count, stats=stats)


def batch_iter(dataset: Dataset, batch_size: int, seed: int, epoch: int):
    """Yield index batches under a permutation that is a pure function of
    (seed, epoch). The last partial batch is kept."""
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = rng_for(seed, "batch", epoch).permutation(n)
    for s in range(0, n, batch_size):
        yield perm[s:s + batch_size]
