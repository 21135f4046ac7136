"""Network construction, forward passes and checkpoint persistence.

Three roles exist. phi maps images to a flat embedding through conv stages
and is frozen after base training. psi is a fully connected head on top of
the embedding: a single affine during base training, the wider three-layer
stack during transfer. omega maps an embedding to the embedding of an
augmented image: affine d->2d, relu, affine 2d->d.

Checkpoints are a fixed little-endian wire format with a trailing integrity
digest; the network structure rides along as a textual descriptor so a file
can be refused when it does not hold the network the caller expects.
"""
import os
import struct
from dataclasses import dataclass

import numpy as np

from .cost import count_flops
from .tensor import (
    DimensionError,
    Tensor,
    activation_pool,
    affine,
    conv2d,
    reshape,
)
from .util import fnv1a64, rng_for

MAGIC = b"EMBAUG01"
VERSION = 1
_META_PREFIX = "__meta__ "


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class Layer:
    """One resolved layer: kind plus concrete input/output shapes."""
    kind: str        # conv | affine | relu | maxpool2x2 | flatten
    in_shape: tuple
    out_shape: tuple
    kernel: int = 0  # conv only
    stride: int = 1
    padding: int = 0


def _shape_str(shape):
    return "x".join(str(d) for d in shape)


def _parse_shape(text):
    return tuple(int(d) for d in text.split("x"))


def _conv_layer(in_shape, out_channels, kernel, stride, padding):
    cin, h, w = in_shape
    hout = (h + 2 * padding - kernel) // stride + 1
    wout = (w + 2 * padding - kernel) // stride + 1
    if hout < 1 or wout < 1:
        raise DimensionError(f"conv output collapses for input {in_shape}")
    return Layer("conv", in_shape, (out_channels, hout, wout), kernel, stride, padding)


def _pool_layer(in_shape):
    c, h, w = in_shape
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool2x2 needs both dims >= 2, got {in_shape}")
    return Layer("maxpool2x2", in_shape, (c, h // 2, w // 2))


@dataclass(frozen=True)
class NetworkSpec:
    role: str  # phi | psi | omega
    layers: tuple
    embedding_dim: int
    tag: str = ""  # augmentation setup (phi) or augmentation name (omega)

    def __post_init__(self):
        if self.role not in ("phi", "psi", "omega"):
            raise ValueError(f"unknown role {self.role!r}")
        if any(c in self.tag for c in ";,\n"):
            raise ValueError(f"tag may not contain separators: {self.tag!r}")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.out_shape != cur.in_shape:
                raise DimensionError(
                    f"layer shapes do not compose: {prev.kind} out {prev.out_shape} "
                    f"vs {cur.kind} in {cur.in_shape}")
        if self.role == "phi":
            if not self.layers or self.layers[-1].kind != "flatten":
                raise ValueError("phi must end in flatten")
            if self.layers[-1].out_shape != (self.embedding_dim,):
                raise ValueError("phi output length must equal embedding_dim")
        if self.role == "omega":
            kinds = tuple(l.kind for l in self.layers)
            d = self.embedding_dim
            ok = (kinds == ("affine", "relu", "affine")
                  and self.layers[0].in_shape == (d,)
                  and self.layers[0].out_shape == (2 * d,)
                  and self.layers[2].out_shape == (d,))
            if not ok:
                raise ValueError("omega must be affine d->2d, relu, affine 2d->d")

    @property
    def in_shape(self):
        return self.layers[0].in_shape

    @property
    def out_shape(self):
        return self.layers[-1].out_shape

    def descriptor(self) -> str:
        """Stable textual form; the checkpoint digest is taken over this."""
        parts = []
        for l in self.layers:
            extra = f":k{l.kernel}:s{l.stride}:p{l.padding}" if l.kind == "conv" else ""
            parts.append(f"{l.kind}[{_shape_str(l.in_shape)}>{_shape_str(l.out_shape)}{extra}]")
        return (f"role={self.role};dim={self.embedding_dim};tag={self.tag};"
                f"layers={' '.join(parts)}")


def parse_descriptor(text: str) -> NetworkSpec:
    try:
        role_f, dim_f, tag_f, layers_f = text.split(";", 3)
        role = role_f.removeprefix("role=")
        dim = int(dim_f.removeprefix("dim="))
        tag = tag_f.removeprefix("tag=")
        layers = []
        for part in layers_f.removeprefix("layers=").split(" "):
            kind, rest = part.split("[", 1)
            fields = rest.rstrip("]").split(":")
            i, o = fields[0].split(">")
            kw = {}
            for f in fields[1:]:
                kw[{"k": "kernel", "s": "stride", "p": "padding"}[f[0]]] = int(f[1:])
            layers.append(Layer(kind, _parse_shape(i), _parse_shape(o), **kw))
    except (ValueError, KeyError, IndexError) as e:
        raise CheckpointError(f"malformed network descriptor: {e}") from e
    return NetworkSpec(role, tuple(layers), dim, tag)


def spec_digest(spec: NetworkSpec) -> int:
    return fnv1a64(spec.descriptor().encode())


@dataclass
class Model:
    spec: NetworkSpec
    params: dict  # name -> Tensor, insertion order == layer order
    frozen: bool = False


def freeze(model: Model):
    """Mark the model non-trainable; its tensors stop accumulating grads."""
    model.frozen = True
    for p in model.params.values():
        p.is_param = False
    return model


def _init_weight(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, shape).astype(np.float32), is_param=True)


def _init_params(spec: NetworkSpec, seed: int, zero_init=False) -> dict:
    params = {}
    for i, l in enumerate(spec.layers):
        if l.kind == "conv":
            cin, cout = l.in_shape[0], l.out_shape[0]
            shape = (cout, cin, l.kernel, l.kernel)
            if zero_init:
                params[f"layer{i}.kernel"] = Tensor(np.zeros(shape, np.float32), is_param=True)
            else:
                rng = rng_for(seed, "init", spec.role, i)
                fan = l.kernel * l.kernel
                params[f"layer{i}.kernel"] = _init_weight(rng, shape, cin * fan, cout * fan)
            params[f"layer{i}.bias"] = Tensor(np.zeros(cout, np.float32), is_param=True)
        elif l.kind == "affine":
            d_in, d_out = l.in_shape[0], l.out_shape[0]
            if zero_init:
                params[f"layer{i}.weight"] = Tensor(np.zeros((d_out, d_in), np.float32),
                                                    is_param=True)
            else:
                rng = rng_for(seed, "init", spec.role, i)
                params[f"layer{i}.weight"] = _init_weight(rng, (d_out, d_in), d_in, d_out)
            params[f"layer{i}.bias"] = Tensor(np.zeros(d_out, np.float32), is_param=True)
    return params


def phi_spec(in_shape=(3, 32, 32), channels=(8, 16, 32), kernel=3, tag="") -> NetworkSpec:
    layers = []
    shape = tuple(in_shape)
    for cout in channels:
        conv = _conv_layer(shape, cout, kernel, 1, kernel // 2)
        layers.append(conv)
        layers.append(Layer("relu", conv.out_shape, conv.out_shape))
        pool = _pool_layer(conv.out_shape)
        layers.append(pool)
        shape = pool.out_shape
    dim = shape[0] * shape[1] * shape[2]
    layers.append(Layer("flatten", shape, (dim,)))
    return NetworkSpec("phi", tuple(layers), dim, tag)


def psi_spec(embedding_dim: int, classes: int, head: str = "base",
             hidden=(1024, 128)) -> NetworkSpec:
    if head == "base":
        layers = (Layer("affine", (embedding_dim,), (classes,)),)
    elif head == "transfer":
        layers = []
        d = embedding_dim
        for width in hidden:
            layers.append(Layer("affine", (d,), (width,)))
            layers.append(Layer("relu", (width,), (width,)))
            d = width
        layers.append(Layer("affine", (d,), (classes,)))
        layers = tuple(layers)
    else:
        raise ValueError(f"head must be base or transfer, got {head!r}")
    return NetworkSpec("psi", layers, embedding_dim)


def omega_spec(embedding_dim: int, tag="") -> NetworkSpec:
    d = embedding_dim
    layers = (Layer("affine", (d,), (2 * d,)),
              Layer("relu", (2 * d,), (2 * d,)),
              Layer("affine", (2 * d,), (d,)))
    return NetworkSpec("omega", layers, d, tag)


def build_phi(in_shape=(3, 32, 32), channels=(8, 16, 32), kernel=3, seed=0,
              tag="") -> Model:
    spec = phi_spec(in_shape, channels, kernel, tag)
    return Model(spec, _init_params(spec, seed))


def build_psi(embedding_dim: int, classes: int, head: str = "base",
              hidden=(1024, 128), seed=0) -> Model:
    spec = psi_spec(embedding_dim, classes, head, hidden)
    return Model(spec, _init_params(spec, seed))


def build_omega(embedding_dim: int, seed=0, tag="", zero_init=False) -> Model:
    spec = omega_spec(embedding_dim, tag)
    return Model(spec, _init_params(spec, seed, zero_init=zero_init))


def forward_network(model: Model, x: Tensor, tape=None) -> Tensor:
    """Run x through every layer. x may carry a leading batch axis."""
    spec = model.spec
    batched = x.data.ndim == len(spec.in_shape) + 1
    want = x.data.shape[1:] if batched else x.data.shape
    if want != spec.in_shape:
        raise DimensionError(f"{spec.role} expects input {spec.in_shape}, got {x.data.shape}")
    h = x
    for i, l in enumerate(spec.layers):
        if l.kind == "conv":
            h = conv2d(h, model.params[f"layer{i}.kernel"], model.params[f"layer{i}.bias"],
                       stride=l.stride, padding=l.padding, tape=tape)
        elif l.kind == "affine":
            h = affine(h, model.params[f"layer{i}.weight"], model.params[f"layer{i}.bias"],
                       tape=tape)
        elif l.kind == "flatten" and batched:
            h = reshape(h, (h.data.shape[0], l.out_shape[0]), tape=tape)
        else:
            h = activation_pool(h, l.kind, tape=tape)
    return h


def _batch_size(x: Tensor, spec: NetworkSpec) -> int:
    return x.data.shape[0] if x.data.ndim == len(spec.in_shape) + 1 else 1


def forward_embedding(phi: Model, images: Tensor, tape=None, meter=None) -> Tensor:
    """z = phi(x). Increments the phi meter by one analytic forward count
    per image in the batch."""
    z = forward_network(phi, images, tape=tape)
    if meter is not None:
        meter.add("phi", _batch_size(images, phi.spec) * count_flops(phi.spec, "forward"))
    return z


def forward_classify(psi: Model, z: Tensor, tape=None, meter=None) -> Tensor:
    logits = forward_network(psi, z, tape=tape)
    if meter is not None:
        meter.add("psi_fwd", _batch_size(z, psi.spec) * count_flops(psi.spec, "forward"))
    return logits


def predict_class(logits: np.ndarray) -> np.ndarray:
    """Argmax over the class axis; ties go to the lowest index."""
    return np.argmax(logits, axis=-1)


def _pack_tensor(name: str, data: np.ndarray) -> bytes:
    if data.dtype != np.float32:
        raise CheckpointError(f"checkpoint stores float32 only, {name} is {data.dtype}")
    nb = name.encode()
    head = struct.pack("<I", len(nb)) + nb + struct.pack("<BB", 0, data.ndim)
    dims = struct.pack(f"<{data.ndim}I", *data.shape)
    payload = data.astype("<f4", copy=False).tobytes()
    return head + dims + payload


def save_checkpoint(model: Model, path):
    """Write atomically: a killed run leaves no readable partial file."""
    names = sorted(model.params)
    blob = MAGIC + struct.pack("<II", VERSION, len(names) + 1)
    meta = _META_PREFIX + model.spec.descriptor()
    blob += _pack_tensor(meta, np.zeros(0, np.float32))
    for name in names:
        blob += _pack_tensor(name, model.params[name].data)
    blob += struct.pack("<Q", fnv1a64(blob))
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(blob)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def load_checkpoint(path, expect_role: str | None = None) -> Model:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 8 + 8:
        raise CheckpointError(f"{path}: truncated header")
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:8]!r}")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unknown format version {version}")
    stored = struct.unpack_from("<Q", blob, len(blob) - 8)[0]
    if fnv1a64(blob[:-8]) != stored:
        raise CheckpointError(f"{path}: digest mismatch, file corrupt or truncated")

    off = 16
    tensors = {}
    order = []
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + nlen].decode()
            off += nlen
            dtype_code, rank = struct.unpack_from("<BB", blob, off)
            off += 2
            if dtype_code != 0:
                raise CheckpointError(f"{path}: unknown dtype code {dtype_code}")
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            n = 1
            for d in dims:
                n *= d
            data = np.frombuffer(blob, "<f4", count=n, offset=off).reshape(dims).copy()
            off += 4 * n
            tensors[name] = data
            order.append(name)
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: truncated tensor table: {e}") from e
    if off != len(blob) - 8:
        raise CheckpointError(f"{path}: trailing garbage after tensor table")

    if not order or not order[0].startswith(_META_PREFIX):
        raise CheckpointError(f"{path}: missing network descriptor")
    spec = parse_descriptor(order[0][len(_META_PREFIX):])
    if expect_role is not None and spec.role != expect_role:
        raise CheckpointError(
            f"{path}: network digest mismatch, expected role {expect_role} "
            f"but file holds {spec.role} (digest {spec_digest(spec):016x})")
    expected_names = sorted(_init_params(spec, 0, zero_init=True))
    got_names = sorted(n for n in order if not n.startswith(_META_PREFIX))
    if expected_names != got_names:
        raise CheckpointError(f"{path}: parameter names do not match the descriptor")
    params = {name: Tensor(tensors[name], is_param=True) for name in expected_names}
    return Model(spec, params)
