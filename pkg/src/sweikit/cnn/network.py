"""Dense 3D regression network: architecture, parameters, forward/backward.

Structure: three stem convolutions (the first carries the spatial stride),
three densely connected blocks of four composite layers (BN -> ReLU ->
conv, feature concatenation), average pooling between blocks, then a final
BN -> ReLU, global average pooling and an affine head producing one value
per window (elasticity in kPa).
"""

import io
import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError, ChecksumError
from . import layers as L

MODEL_MAGIC = b"SWM1"
MODEL_VERSION = 1

BLOCKS = 3
LAYERS_PER_BLOCK = 4


@dataclass(frozen=True)
class ArchSpec:
    stem_channels: tuple = (8, 16, 16)
    growth_rate: int = 12
    kernel: int = 3
    spatial_stride: int = 2
    pool: tuple = (2, 2, 2)
    window_size: int = 33
    frames: int = 35

    def __post_init__(self):
        object.__setattr__(self, "stem_channels", tuple(int(c) for c in self.stem_channels))
        object.__setattr__(self, "pool", tuple(int(p) for p in self.pool))
        if len(self.stem_channels) != 3 or any(c < 1 for c in self.stem_channels):
            raise ValueError("stem needs three positive channel counts")
        if self.growth_rate < 1:
            raise ValueError("growth rate must be positive")
        if self.spatial_stride not in (1, 2):
            raise ValueError("spatial stride must be 1 or 2")
        if self.window_size % 2 == 0 or self.window_size < 5:
            raise ValueError("window size must be odd and >= 5")
        if self.window_size <= 9 and self.spatial_stride != 1:
            raise ValueError("windows of 9 px and below require spatial stride 1")

    @classmethod
    def for_window(cls, window_size: int, **overrides) -> "ArchSpec":
        """Spec with the stride rule applied: stride 1 for 9 px and smaller."""
        stride = 1 if window_size <= 9 else 2
        return cls(window_size=window_size, spatial_stride=stride, **overrides)

    def to_json(self) -> dict:
        return {
            "stem_channels": list(self.stem_channels),
            "growth_rate": self.growth_rate,
            "kernel": self.kernel,
            "spatial_stride": self.spatial_stride,
            "pool": list(self.pool),
            "window_size": self.window_size,
            "frames": self.frames,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ArchSpec":
        return cls(
            stem_channels=tuple(obj["stem_channels"]),
            growth_rate=int(obj["growth_rate"]),
            kernel=int(obj["kernel"]),
            spatial_stride=int(obj["spatial_stride"]),
            pool=tuple(obj["pool"]),
            window_size=int(obj["window_size"]),
            frames=int(obj["frames"]),
        )


@dataclass
class ModelParams:
    arch: ArchSpec
    tensors: dict
    step: int = 0
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            step=self.step,
            adam_m={k: v.copy() for k, v in self.adam_m.items()},
            adam_v={k: v.copy() for k, v in self.adam_v.items()},
        )


def _block_channels(arch: ArchSpec):
    """Channel count entering each dense layer, per block."""
    cin = arch.stem_channels[-1]
    plan = []
    for _ in range(BLOCKS):
        rows = []
        for _ in range(LAYERS_PER_BLOCK):
            rows.append(cin)
            cin += arch.growth_rate
        plan.append(rows)
    return plan, cin


def head_channels(arch: ArchSpec) -> int:
    _, cin = _block_channels(arch)
    return cin


def init_params(arch: ArchSpec, seed: int = 0, dtype=np.float32) -> ModelParams:
    """He-initialized weights, unit batch-norm scales, zero biases."""
    rng = np.random.default_rng(seed)
    k = arch.kernel
    tensors = {}

    def conv(name, cin, cout):
        fan_in = cin * k**3
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k, k))
        tensors[name + ".w"] = w.astype(dtype)
        tensors[name + ".b"] = np.zeros(cout, dtype=dtype)

    def bn(name, c):
        tensors[name + ".gamma"] = np.ones(c, dtype=dtype)
        tensors[name + ".beta"] = np.zeros(c, dtype=dtype)
        tensors[name + ".rmean"] = np.zeros(c, dtype=dtype)
        tensors[name + ".rvar"] = np.ones(c, dtype=dtype)

    cin = 1
    for i, cout in enumerate(arch.stem_channels):
        conv(f"stem{i}", cin, cout)
        bn(f"stem{i}", cout)
        cin = cout
    plan, final_c = _block_channels(arch)
    for b in range(BLOCKS):
        for j in range(LAYERS_PER_BLOCK):
            c_in = plan[b][j]
            bn(f"block{b}.{j}", c_in)
            conv(f"block{b}.{j}", c_in, arch.growth_rate)
    bn("final", final_c)
    tensors["head.w"] = rng.normal(0.0, 1.0 / np.sqrt(final_c), size=(final_c,)).astype(dtype)
    tensors["head.b"] = np.zeros((), dtype=dtype)
    return ModelParams(arch=arch, tensors=tensors)


def net_forward(params: ModelParams, x, training: bool = False):
    """Forward pass over a window batch (N, hs, ws, t) or (N, 1, hs, ws, t).

    Returns per-window predictions (N,) and the cache list for backward.
    Training mode updates the batch-norm running statistics in place.
    """
    arch = params.arch
    p = params.tensors
    if x.ndim == 4:
        x = x[:, None]
    x = np.ascontiguousarray(x, dtype=p["head.w"].dtype)
    caches = []

    s = arch.spatial_stride
    for i in range(3):
        stride = (s, s, 1) if i == 0 else 1
        x, c_conv = L.conv3_forward(x, p[f"stem{i}.w"], p[f"stem{i}.b"], stride=stride, pad=1)
        x, c_bn = L.bn_forward(
            x, p[f"stem{i}.gamma"], p[f"stem{i}.beta"],
            p[f"stem{i}.rmean"], p[f"stem{i}.rvar"], training,
        )
        x, c_relu = L.relu_forward(x)
        caches.append(("stem", i, c_conv, c_bn, c_relu))

    for b in range(BLOCKS):
        block_caches = []
        for j in range(LAYERS_PER_BLOCK):
            name = f"block{b}.{j}"
            h, c_bn = L.bn_forward(
                x, p[name + ".gamma"], p[name + ".beta"],
                p[name + ".rmean"], p[name + ".rvar"], training,
            )
            h, c_relu = L.relu_forward(h)
            h, c_conv = L.conv3_forward(h, p[name + ".w"], p[name + ".b"], stride=1, pad=1)
            x = np.concatenate([x, h], axis=1)
            block_caches.append((c_bn, c_relu, c_conv))
        caches.append(("block", b, block_caches))
        if b < BLOCKS - 1:
            x, c_pool = L.avgpool3_forward(x, arch.pool)
            caches.append(("pool", b, c_pool))

    x, c_bn = L.bn_forward(
        x, p["final.gamma"], p["final.beta"], p["final.rmean"], p["final.rvar"], training
    )
    x, c_relu = L.relu_forward(x)
    caches.append(("final", None, c_bn, c_relu))
    x, c_gap = L.global_avgpool_forward(x)
    caches.append(("gap", None, c_gap))
    pred, c_head = L.affine_forward(x, p["head.w"], p["head.b"])
    caches.append(("head", None, c_head))
    return pred, caches


def net_backward(params: ModelParams, caches, dpred):
    """Exact gradients for every parameter given d(loss)/d(pred)."""
    p = params.tensors
    arch = params.arch
    grads = {}
    it = list(caches)

    kind, _, c_head = it.pop()
    assert kind == "head"
    dx, dw, db = L.affine_backward(dpred, c_head, p["head.w"])
    grads["head.w"] = dw
    grads["head.b"] = np.asarray(db, dtype=dx.dtype)

    kind, _, c_gap = it.pop()
    assert kind == "gap"
    dx = L.global_avgpool_backward(dx, c_gap)

    kind, _, c_bn, c_relu = it.pop()
    assert kind == "final"
    dx = L.relu_backward(dx, c_relu)
    dx, dgamma, dbeta = L.bn_backward(dx, c_bn)
    grads["final.gamma"] = dgamma
    grads["final.beta"] = dbeta

    for entry in reversed(it):
        kind = entry[0]
        if kind == "pool":
            dx = L.avgpool3_backward(dx, entry[2])
        elif kind == "block":
            b, block_caches = entry[1], entry[2]
            for j in reversed(range(LAYERS_PER_BLOCK)):
                name = f"block{b}.{j}"
                c_bn, c_relu, c_conv = block_caches[j]
                cin = c_conv[0][1]
                d_prev, d_new = dx[:, :cin], dx[:, cin:]
                dh, dw, db = L.conv3_backward(d_new, c_conv)
                grads[name + ".w"] = dw
                grads[name + ".b"] = db
                dh = L.relu_backward(dh, c_relu)
                dh, dgamma, dbeta = L.bn_backward(dh, c_bn)
                grads[name + ".gamma"] = dgamma
                grads[name + ".beta"] = dbeta
                dx = d_prev + dh
        elif kind == "stem":
            i = entry[1]
            c_conv, c_bn, c_relu = entry[2], entry[3], entry[4]
            dx = L.relu_backward(dx, c_relu)
            dx, dgamma, dbeta = L.bn_backward(dx, c_bn)
            grads[f"stem{i}.gamma"] = dgamma
            grads[f"stem{i}.beta"] = dbeta
            dx, dw, db = L.conv3_backward(dx, c_conv)
            grads[f"stem{i}.w"] = dw
            grads[f"stem{i}.b"] = db
        else:
            raise AssertionError(f"unknown cache entry {kind}")
    return grads


def save_params(params: ModelParams, path):
    """Write a model container: JSON architecture header + float32 blobs + CRC."""
    names = sorted(params.tensors)
    m_names = sorted(params.adam_m)
    header = {
        "version": MODEL_VERSION,
        "arch": params.arch.to_json(),
        "step": params.step,
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in names],
        "adam": [{"name": n, "shape": list(params.adam_m[n].shape)} for n in m_names],
    }
    buf = io.BytesIO()
    for n in names:
        buf.write(np.ascontiguousarray(params.tensors[n], dtype="<f4").tobytes())
    for n in m_names:
        buf.write(np.ascontiguousarray(params.adam_m[n], dtype="<f4").tobytes())
    for n in m_names:
        buf.write(np.ascontiguousarray(params.adam_v[n], dtype="<f4").tobytes())
    payload = buf.getvalue()
    head = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model container")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    if header.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version")
    sizes = [int(np.prod(t["shape"])) for t in header["tensors"]]
    m_sizes = [int(np.prod(t["shape"])) for t in header["adam"]]
    total = 4 * (sum(sizes) + 2 * sum(m_sizes))
    payload = raw[8 + hlen : 8 + hlen + total]
    if len(payload) != total or len(raw) < 8 + hlen + total + 4:
        raise ChecksumError(f"{path}: model payload truncated")
    (crc,) = struct.unpack("<I", raw[8 + hlen + total : 8 + hlen + total + 4])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumError(f"{path}: model payload CRC mismatch")

    offset = 0

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
        offset += 4 * n
        return arr.reshape([int(s) for s in shape]).copy()

    tensors = {t["name"]: take(t["shape"]) for t in header["tensors"]}
    adam_m = {t["name"]: take(t["shape"]) for t in header["adam"]}
    adam_v = {t["name"]: take(t["shape"]) for t in header["adam"]}
    return ModelParams(
        arch=ArchSpec.from_json(header["arch"]),
        tensors=tensors,
        step=int(header["step"]),
        adam_m=adam_m,
        adam_v=adam_v,
    )
