import numpy as np
import pytest

from embaug.cost import FlopMeter, count_flops
from embaug.networks import (
    CheckpointError,
    Layer,
    NetworkSpec,
    build_omega,
    build_phi,
    build_psi,
    forward_classify,
    forward_embedding,
    forward_network,
    freeze,
    load_checkpoint,
    omega_spec,
    parse_descriptor,
    phi_spec,
    predict_class,
    psi_spec,
    save_checkpoint,
    spec_digest,
)
from embaug.tensor import DimensionError, Tape, Tensor, softmax_xent


def _img(seed=0, shape=(3, 32, 32)):
    return Tensor(np.random.default_rng(seed).standard_normal(shape).astype(np.float32))


class TestSpecs:
    def test_default_phi_embedding_is_512(self):
        spec = phi_spec()
        assert spec.embedding_dim == 32 * 4 * 4 == 512
        assert spec.layers[-1].kind == "flatten"

    def test_phi_shape_chain(self):
        spec = phi_spec()
        kinds = [l.kind for l in spec.layers]
        assert kinds == ["conv", "relu", "maxpool2x2"] * 3 + ["flatten"]

    def test_transfer_head_widths(self):
        spec = psi_spec(512, 10, head="transfer")
        affines = [l for l in spec.layers if l.kind == "affine"]
        assert [l.out_shape[0] for l in affines] == [1024, 128, 10]

    def test_transfer_head_three_class_target(self):
        spec = psi_spec(512, 3, head="transfer")
        assert spec.layers[-1].out_shape == (3,)

    def test_base_head_param_count(self):
        m = build_psi(512, 3, head="base")
        total = sum(p.data.size for p in m.params.values())
        assert total == 512 * 3 + 3

    def test_omega_widths_and_param_count(self):
        spec = omega_spec(512)
        assert [l.out_shape[0] for l in spec.layers] == [1024, 1024, 512]
        m = build_omega(512)
        total = sum(p.data.size for p in m.params.values())
        assert total == 512 * 1024 + 1024 + 1024 * 512 + 512

    def test_omega_in_equals_out(self):
        for d in (8, 64, 512):
            spec = omega_spec(d)
            assert spec.in_shape == spec.out_shape == (d,)

    def test_non_composable_rejected(self):
        with pytest.raises(DimensionError):
            NetworkSpec("psi", (Layer("affine", (4,), (8,)),
                                Layer("affine", (9,), (2,))), 4)

    def test_phi_must_end_in_flatten(self):
        with pytest.raises(ValueError):
            NetworkSpec("phi", (Layer("relu", (4,), (4,)),), 4)

    def test_bad_omega_shape_rejected(self):
        with pytest.raises(ValueError):
            NetworkSpec("omega", (Layer("affine", (4,), (12,)),
                                  Layer("relu", (12,), (12,)),
                                  Layer("affine", (12,), (4,))), 4)

    def test_descriptor_round_trip(self):
        for spec in (phi_spec(tag="hflip+vflip"), psi_spec(512, 3, head="transfer"),
                     omega_spec(64, tag="vflip")):
            assert parse_descriptor(spec.descriptor()) == spec

    def test_same_seed_same_init(self):
        a = build_phi(seed=7)
        b = build_phi(seed=7)
        assert all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)
        c = build_phi(seed=8)
        assert any(not np.array_equal(a.params[k].data, c.params[k].data) for k in a.params)


class TestForward:
    def test_embedding_length(self):
        z = forward_embedding(build_phi(seed=0), _img())
        assert z.shape == (512,)

    def test_deterministic(self):
        phi = build_phi(seed=1)
        a = forward_embedding(phi, _img(2))
        b = forward_embedding(phi, _img(2))
        assert np.array_equal(a.data, b.data)

    def test_zero_image_zero_embedding(self):
        phi = build_phi(seed=3)
        z = forward_embedding(phi, Tensor(np.zeros((3, 32, 32), np.float32)))
        assert np.array_equal(z.data, np.zeros(512, np.float32))

    def test_batched_matches_single(self):
        phi = build_phi(seed=4)
        imgs = np.random.default_rng(0).standard_normal((3, 3, 32, 32)).astype(np.float32)
        zb = forward_embedding(phi, Tensor(imgs))
        for n in range(3):
            zs = forward_embedding(phi, Tensor(imgs[n]))
            assert np.array_equal(zb.data[n], zs.data)

    def test_phi_meter_counts_per_image(self):
        phi = build_phi(seed=0)
        meter = FlopMeter()
        forward_embedding(phi, Tensor(np.zeros((5, 3, 32, 32), np.float32)), meter=meter)
        assert meter.counts["phi"] == 5 * count_flops(phi.spec, "forward")

    def test_classify_logit_length_and_meter(self):
        psi = build_psi(512, 3, head="transfer")
        meter = FlopMeter()
        logits = forward_classify(psi, Tensor(np.zeros(512, np.float32)), meter=meter)
        assert logits.shape == (3,)
        assert meter.counts["psi_fwd"] == count_flops(psi.spec, "forward")

    def test_identity_head_argmax(self):
        psi = build_psi(3, 3, head="base")
        psi.params["layer0.weight"].data[:] = np.eye(3, dtype=np.float32)
        logits = forward_classify(psi, Tensor(np.array([3.0, 1.0, 2.0], np.float32)))
        assert predict_class(logits.data) == 0

    def test_tie_break_lowest_index(self):
        assert predict_class(np.array([1.0, 1.0, 0.0])) == 0
        assert predict_class(np.array([[0.0, 2.0, 2.0], [5.0, 5.0, 5.0]])).tolist() == [1, 0]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            forward_embedding(build_phi(), Tensor(np.zeros((1, 32, 32), np.float32)))

    def test_composition_equals_fused_spec(self):
        phi = build_phi(seed=5)
        psi = build_psi(512, 3, head="base", seed=6)
        x = _img(7)
        split = forward_classify(psi, forward_embedding(phi, x))
        fused_spec = NetworkSpec("psi", phi.spec.layers + psi.spec.layers, 512)
        fused = type(phi)(fused_spec, {**{k: v for k, v in phi.params.items()},
                                       **{f"layer{len(phi.spec.layers) + int(k[5])}{k[k.index('.'):]}": v
                                          for k, v in psi.params.items()}})
        out = forward_network(fused, x)
        assert np.array_equal(split.data, out.data)

    def test_zero_init_omega_maps_to_zero(self):
        om = build_omega(16, zero_init=True)
        out = forward_network(om, Tensor(np.ones(16, np.float32)))
        assert np.array_equal(out.data, np.zeros(16, np.float32))


class TestFreeze:
    def test_frozen_gets_no_gradient(self):
        phi = freeze(build_phi(seed=0))
        psi = build_psi(512, 3, head="base")
        tape = Tape()
        z = forward_embedding(phi, _img(1), tape=tape)
        loss = softmax_xent(forward_classify(psi, z, tape=tape), 0, tape=tape)
        tape.backward(loss)
        assert all(p.grad is None for p in phi.params.values())
        assert all(p.grad is not None for p in psi.params.values())


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        m = build_phi(seed=11, tag="hflip")
        p = tmp_path / "phi.ckpt"
        save_checkpoint(m, p)
        back = load_checkpoint(p)
        assert back.spec == m.spec
        assert sorted(back.params) == sorted(m.params)
        for k in m.params:
            assert np.array_equal(back.params[k].data, m.params[k].data)

    def test_save_is_deterministic(self, tmp_path):
        m = build_omega(32, seed=2, tag="vflip")
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(m, a)
        save_checkpoint(m, b)
        assert a.read_bytes() == b.read_bytes()

    def test_corrupted_magic_refused(self, tmp_path):
        m = build_psi(8, 2)
        p = tmp_path / "m.ckpt"
        save_checkpoint(m, p)
        raw = bytearray(p.read_bytes())
        raw[0] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_flipped_payload_bit_refused(self, tmp_path):
        m = build_psi(8, 2)
        p = tmp_path / "m.ckpt"
        save_checkpoint(m, p)
        raw = bytearray(p.read_bytes())
        raw[len(raw) // 2] ^= 0x01
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_truncation_refused(self, tmp_path):
        m = build_psi(8, 2)
        p = tmp_path / "m.ckpt"
        save_checkpoint(m, p)
        p.write_bytes(p.read_bytes()[:-20])
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_wrong_role_refused(self, tmp_path):
        p = tmp_path / "phi.ckpt"
        save_checkpoint(build_phi(seed=0), p)
        with pytest.raises(CheckpointError, match="digest mismatch"):
            load_checkpoint(p, expect_role="omega")
        assert load_checkpoint(p, expect_role="phi").spec.role == "phi"

    def test_unknown_version_refused(self, tmp_path):
        m = build_psi(8, 2)
        p = tmp_path / "m.ckpt"
        save_checkpoint(m, p)
        raw = bytearray(p.read_bytes())
        raw[8] = 99  # version field
        # digest must be recomputed or the digest check fires first
        from embaug.util import fnv1a64
        import struct
        body = bytes(raw[:-8])
        p.write_bytes(body + struct.pack("<Q", fnv1a64(body)))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(p)

    def test_digest_differs_across_roles(self):
        assert spec_digest(phi_spec()) != spec_digest(omega_spec(512))
