import numpy as np
import pytest

from embaug.data import (
    CIFAR10_RECORD,
    Dataset,
    SyntheticSpec,
    batch_iter,
    compute_stats,
    generate_synthetic,
    load_cifar_binary,
    normalize,
    save_cifar_binary,
)


def _tiny_spec(**kw):
    base = dict(per_class=5, seed=0, noise_std=0.05)
    base.update(kw)
    return SyntheticSpec(**base)


class TestSynthetic:
    def test_regeneration_bitwise_identical(self):
        a = generate_synthetic(_tiny_spec())
        b = generate_synthetic(_tiny_spec())
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.ids, b.ids)

    def test_counts_exactly_equal_per_class(self):
        ds = generate_synthetic(_tiny_spec(per_class=100))
        assert len(ds) == 300
        assert all(np.sum(ds.labels == c) == 100 for c in range(3))

    def test_pixels_bounded(self):
        ds = generate_synthetic(_tiny_spec(per_class=20))
        assert ds.pixels.min() >= 0.0 and ds.pixels.max() <= 1.0
        assert ds.pixels.dtype == np.float32

    def test_flip_label_invariance_by_construction(self):
        # flipping an image cannot change which shape was drawn; the dataset
        # carries that through: a flipped disk is still labeled disk
        ds = generate_synthetic(_tiny_spec())
        s = ds.sample(0)
        flipped = s.pixels[:, :, ::-1]
        assert flipped.shape == s.pixels.shape
        assert s.label == ds.labels[0]

    def test_seed_injectivity(self):
        renders = []
        for seed in range(20):
            ds = generate_synthetic(_tiny_spec(per_class=2, seed=seed))
            renders.append(ds.pixels.tobytes())
        assert len(set(renders)) == 20

    def test_target_shapes_render(self):
        ds = generate_synthetic(_tiny_spec(shapes=("ring", "cross", "bar")))
        assert ds.class_count == 3
        # every sample has visible foreground
        assert (ds.pixels.reshape(len(ds), -1).max(axis=1) > 0.3).all()

    def test_oversized_shape_errors(self):
        spec = _tiny_spec(per_class=1, scale_range=(40.0, 50.0))
        with pytest.raises(RuntimeError):
            generate_synthetic(spec)

    def test_unknown_shape_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(shapes=("disk", "pentagon"))

    def test_id_base_offsets_ids(self):
        tr = generate_synthetic(_tiny_spec(split="train", id_base=0))
        ev = generate_synthetic(_tiny_spec(split="eval", id_base=1_000_000, seed=1))
        assert len(np.intersect1d(tr.ids, ev.ids)) == 0


class TestCifarBinary:
    def _dataset(self, n=4, seed=0):
        rng = np.random.default_rng(seed)
        pixels = rng.random((n, 3, 32, 32)).astype(np.float32)
        labels = rng.integers(0, 10, n).astype(np.int64)
        return Dataset(pixels, labels, np.arange(n, dtype=np.int64), "train", 10)

    def test_two_record_file(self, tmp_path):
        p = tmp_path / "two.bin"
        save_cifar_binary(self._dataset(2), p)
        assert p.stat().st_size == 2 * CIFAR10_RECORD == 6146
        ds = load_cifar_binary(p)
        assert len(ds) == 2

    def test_label_byte_passthrough(self, tmp_path):
        src = self._dataset(3)
        src.labels[:] = [7, 0, 9]
        p = tmp_path / "lab.bin"
        save_cifar_binary(src, p)
        ds = load_cifar_binary(p)
        assert list(ds.labels) == [7, 0, 9]

    def test_pixel_byte_255_scales_to_one(self, tmp_path):
        src = self._dataset(1)
        src.pixels[:] = 1.0
        p = tmp_path / "ones.bin"
        save_cifar_binary(src, p)
        ds = load_cifar_binary(p)
        assert ds.pixels.max() == 1.0 and ds.pixels.min() == 1.0

    def test_round_trip_exact_on_quantized_pixels(self, tmp_path):
        src = self._dataset(6, seed=3)
        p = tmp_path / "rt.bin"
        save_cifar_binary(src, p)
        ds = load_cifar_binary(p)
        quant = np.clip(np.round(src.pixels * 255.0), 0, 255) / 255.0
        assert np.array_equal(ds.pixels, quant.astype(np.float32))
        assert np.array_equal(ds.labels, src.labels)
        # second trip is lossless
        p2 = tmp_path / "rt2.bin"
        save_cifar_binary(ds, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_truncated_file_rejected(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"\x00" * (CIFAR10_RECORD + 17))
        with pytest.raises(ValueError):
            load_cifar_binary(p)

    def test_label_out_of_range_rejected(self, tmp_path):
        rec = bytearray(CIFAR10_RECORD)
        rec[0] = 11
        p = tmp_path / "oob.bin"
        p.write_bytes(bytes(rec))
        with pytest.raises(ValueError):
            load_cifar_binary(p)

    def test_cifar100_layout_uses_fine_label(self, tmp_path):
        rec = bytearray(3074)
        rec[0] = 5   # coarse
        rec[1] = 42  # fine
        p = tmp_path / "c100.bin"
        p.write_bytes(bytes(rec))
        ds = load_cifar_binary(p, layout="cifar100")
        assert ds.labels[0] == 42
        assert ds.class_count == 100

    def test_max_records(self, tmp_path):
        p = tmp_path / "many.bin"
        save_cifar_binary(self._dataset(5), p)
        assert len(load_cifar_binary(p, max_records=3)) == 3


class TestNormalize:
    def test_constant_channel_floored_to_zero(self):
        pixels = np.full((4, 3, 8, 8), 0.5, np.float32)
        ds = Dataset(pixels, np.zeros(4, np.int64), np.arange(4), "train", 1)
        out = normalize(ds)
        assert np.array_equal(out.pixels, np.zeros_like(pixels))

    def test_train_mean_near_zero_after(self):
        ds = generate_synthetic(_tiny_spec(per_class=30))
        out = normalize(ds)
        mean, _ = compute_stats(out)
        assert np.abs(mean).max() < 1e-5

    def test_eval_uses_train_stats(self):
        tr = generate_synthetic(_tiny_spec(per_class=30, split="train"))
        ev = generate_synthetic(_tiny_spec(per_class=10, split="eval", seed=9))
        stats = compute_stats(tr)
        out = normalize(ev, stats)
        own = normalize(Dataset(ev.pixels, ev.labels, ev.ids, "train", 3))
        assert not np.array_equal(out.pixels, own.pixels)
        assert out.stats == stats

    def test_eval_without_stats_rejected(self):
        ev = generate_synthetic(_tiny_spec(split="eval"))
        with pytest.raises(ValueError):
            normalize(ev)


class TestBatchIter:
    def _ds(self, n):
        return Dataset(np.zeros((n, 1, 2, 2), np.float32), np.zeros(n, np.int64),
                       np.arange(n), "train", 1)

    def test_deterministic_per_seed_epoch(self):
        ds = self._ds(32)
        a = [b.tolist() for b in batch_iter(ds, 5, seed=1, epoch=2)]
        b = [b.tolist() for b in batch_iter(ds, 5, seed=1, epoch=2)]
        assert a == b
        c = [b.tolist() for b in batch_iter(ds, 5, seed=1, epoch=3)]
        assert a != c

    def test_partial_batch_sizes(self):
        ds = self._ds(10)
        sizes = [len(b) for b in batch_iter(ds, 4, 0, 0)]
        assert sizes == [4, 4, 2]

    def test_batches_partition_dataset(self):
        ds = self._ds(23)
        seen = np.concatenate(list(batch_iter(ds, 6, 7, 1)))
        assert sorted(seen.tolist()) == list(range(23))

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            next(batch_iter(self._ds(0), 4, 0, 0))
