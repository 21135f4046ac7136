"""Pixel-space augmentations applied to C,H,W images before the feature extractor.

Every function here is pure and operates on plain numpy arrays. Flips reverse
an index axis, rotation is by quarter turns (square images only), crop zero
pads then cuts a window at a seeded offset. The identity element is always
first in any enumerated set so that position 0 of a variant list is the
untouched image.
"""
from dataclasses import dataclass

import numpy as np

from .util import rng_for

SETUPS = ("none", "hflip", "hflip+vflip")


@dataclass(frozen=True)
class AugmentationKind:
    """One element of the augmentation set.

    tag: identity | hflip | vflip | rot90 | crop
    turns: quarter turns, rot90 only (1..3)
    pad: zero padding width, crop only
    offset_seed: seeds the crop window offset, crop only
    """
    tag: str
    turns: int = 0
    pad: int = 0
    offset_seed: int = 0

    def __post_init__(self):
        if self.tag not in ("identity", "hflip", "vflip", "rot90", "crop"):
            raise ValueError(f"unknown augmentation tag {self.tag!r}")
        if self.tag == "rot90" and self.turns not in (1, 2, 3):
            raise ValueError(f"rot90 needs turns in 1..3, got {self.turns}")
        if self.tag == "crop" and self.pad < 0:
            raise ValueError("crop pad must be >= 0")

    @property
    def name(self) -> str:
        if self.tag == "rot90":
            return f"rot90x{self.turns}"
        if self.tag == "crop":
            return f"crop{self.pad}"
        return self.tag


IDENTITY = AugmentationKind("identity")
HFLIP = AugmentationKind("hflip")
VFLIP = AugmentationKind("vflip")


def apply_augmentation(image: np.ndarray, kind: AugmentationKind) -> np.ndarray:
    """Transform one C,H,W image. Identity returns the input object itself."""
    if image.ndim != 3:
        raise ValueError(f"expected C,H,W image, got shape {image.shape}")
    if kind.tag == "identity":
        return image
    if kind.tag == "hflip":
        return np.ascontiguousarray(image[:, :, ::-1])
    if kind.tag == "vflip":
        return np.ascontiguousarray(image[:, ::-1, :])
    if kind.tag == "rot90":
        if image.shape[1] != image.shape[2]:
            raise ValueError(f"rot90 needs a square image, got {image.shape}")
        return np.ascontiguousarray(np.rot90(image, kind.turns, axes=(1, 2)))
    if kind.tag == "crop":
        c, h, w = image.shape
        p = kind.pad
        if p == 0:
            return image
        padded = np.zeros((c, h + 2 * p, w + 2 * p), image.dtype)
        padded[:, p:p + h, p:p + w] = image
        rng = rng_for(kind.offset_seed, "crop-offset")
        oy = int(rng.integers(0, 2 * p + 1))
        ox = int(rng.integers(0, 2 * p + 1))
        return np.ascontiguousarray(padded[:, oy:oy + h, ox:ox + w])
    raise ValueError(f"unknown augmentation tag {kind.tag!r}")


def enumerate_set(setup: str) -> tuple:
    """Map a setup name to its ordered augmentation set (identity first)."""
    if setup == "none":
        return (IDENTITY,)
    if setup == "hflip":
        return (IDENTITY, HFLIP)
    if setup == "hflip+vflip":
        return (IDENTITY, HFLIP, VFLIP)
    raise ValueError(f"unknown augmentation setup {setup!r}, expected one of {SETUPS}")
