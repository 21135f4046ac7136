"""Seed derivation, the checkpoint/file hash, and atomic text output."""

import os

import numpy as np

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3


def fnv1a64(data: bytes, state: int = _FNV64_OFFSET) -> int:
    """64-bit FNV-1a; `state` allows incremental hashing."""
    h = state
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Independent generator for (seed, purpose); pure function of its inputs."""
    words = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, int):
            words.append(tag & 0xFFFFFFFF)
        else:
            words.append(fnv1a64(str(tag).encode()) & 0xFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def atomic_write_text(path: str, text: str):
    """Write-then-rename so a killed run never leaves a partial file under
    the final name."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
