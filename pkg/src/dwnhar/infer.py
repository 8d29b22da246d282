"""Frozen models: static routing plus packed truth tables.

Model file layout (all integers little-endian)::

    magic            4 bytes  b"DWNM"
    version          u32      FORMAT_VERSION
    num_layers       u32
    input_width      u32      bits entering layer 0
    per layer:       u32 L, u32 n
    num_classes      u32
    tau              f64
    encoder dims     u32 C, u32 T, u32 B   (all zero when no encoder)
    thresholds       f64[C * B]            row-major per channel
    per layer:       u32 routing[L * n]    row-major (lut, pin)
    per layer:       ceil(L * 2**n / 8) bytes of truth bits; entry u of LUT l is
                     bit l * 2**n + u, least significant bit of each byte first
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .encoding import ThermometerEncoder, encode
from .model import DwnModel

MAGIC = b"DWNM"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FrozenLayer:
    routing: np.ndarray   # [L, n] int64
    lut_bits: np.ndarray  # [L, 2**n] uint8 in {0, 1}

    @property
    def num_luts(self) -> int:
        return self.routing.shape[0]

    @property
    def arity(self) -> int:
        return self.routing.shape[1]

    def packed_tables(self) -> np.ndarray:
        """Truth bits as ``[L, ceil(2**n / 64)]`` uint64 words."""
        size = self.lut_bits.shape[1]
        words = (size + 63) // 64
        padded = np.zeros((self.num_luts, words * 64), dtype=np.uint8)
        padded[:, :size] = self.lut_bits
        by = np.packbits(padded, axis=1, bitorder="little")
        return by.view("<u8").astype(np.uint64)


@dataclass(frozen=True)
class FrozenModel:
    layers: tuple
    num_classes: int
    tau: float
    input_width: int
    thresholds: np.ndarray | None = None  # [C, B]
    timesteps: int = 0

    def __post_init__(self):
        width = self.input_width
        for i, layer in enumerate(self.layers):
            if layer.lut_bits.shape != (layer.num_luts, 1 << layer.arity):
                raise ValueError(f"layer {i}: truth table shape {layer.lut_bits.shape}")
            if layer.routing.size and (layer.routing.min() < 0 or layer.routing.max() >= width):
                raise ValueError(f"layer {i}: routing index outside input width {width}")
            width = layer.num_luts
        if self.layers[-1].num_luts < self.num_classes:
            raise ValueError("final layer smaller than the number of classes")

    @property
    def group_size(self) -> int:
        return self.layers[-1].num_luts // self.num_classes

    @property
    def encoder(self) -> ThermometerEncoder | None:
        if self.thresholds is None or self.thresholds.size == 0:
            return None
        return ThermometerEncoder(self.thresholds)

    @property
    def total_lut_bits(self) -> int:
        return sum(l.num_luts << l.arity for l in self.layers)


def freeze(model: DwnModel) -> FrozenModel:
    """Argmax routing per pin (ties to lowest candidate) and entry bit = weight > 0."""
    layers = tuple(
        FrozenLayer(l.sources().astype(np.int64), (l.entry_weights > 0).astype(np.uint8))
        for l in model.layers
    )
    thr = None if model.encoder is None else np.array(model.encoder.thresholds)
    return FrozenModel(layers, model.num_classes, float(model.tau), model.input_width,
                       thr, int(model.timesteps))


def model_size_bytes(frozen: FrozenModel) -> int:
    """LUT contents only, in bytes (routing and encoder are not counted)."""
    return (frozen.total_lut_bits + 7) // 8


class _Packed:
    """Per-model arrays prepared once for the numba kernels."""

    def __init__(self, frozen: FrozenModel):
        self.route_word = [np.ascontiguousarray(l.routing >> 6) for l in frozen.layers]
        self.route_shift = [(l.routing & 63).astype(np.uint64) for l in frozen.layers]
        self.tables = [np.ascontiguousarray(l.packed_tables()) for l in frozen.layers]


_PACK_CACHE: dict = {}


def _packed(frozen: FrozenModel) -> _Packed:
    key = id(frozen)
    hit = _PACK_CACHE.get(key)
    if hit is None or hit[0] is not frozen:
        hit = (frozen, _Packed(frozen))
        _PACK_CACHE.clear()
        _PACK_CACHE[key] = hit
    return hit[1]


def pack_words(bits) -> np.ndarray:
    """Pack ``[N, W]`` 0/1 bits into ``[N, ceil(W/64)]`` uint64 words, bit i at word i>>6, i&63."""
    n, w = bits.shape
    pad = (-w) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros((n, pad), dtype=np.uint8)], axis=1)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64)


def predict_bits(frozen: FrozenModel, bits):
    """Integer-only inference on encoded bits ``[W]`` or ``[N, W]``.

    Returns (labels, popcounts). Class scores are the raw group popcounts; the
    label is their argmax, ties to the lowest class index.
    """
    x = np.asarray(bits, dtype=np.uint8)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != frozen.input_width:
        raise ValueError(f"input has {x.shape[1]} bits, model expects {frozen.input_width}")
    pk = _packed(frozen)
    words = pack_words(x)
    for rw, rs, tables, layer in zip(pk.route_word, pk.route_shift, pk.tables, frozen.layers):
        out = np.empty((words.shape[0], (layer.num_luts + 63) // 64), dtype=np.uint64)
        _kernels.frozen_layer(words, rw, rs, tables, out)
        words = out
    counts = _kernels.group_popcount(words, frozen.num_classes, frozen.group_size)
    labels = np.argmax(counts, axis=1)
    if single:
        return int(labels[0]), counts[0]
    return labels, counts


def predict(frozen: FrozenModel, window):
    """Encode a real window ``[C, T]`` (or batch ``[N, C, T]``) and classify it."""
    enc = frozen.encoder
    if enc is None:
        raise ValueError("frozen model carries no encoder; use predict_bits")
    return predict_bits(frozen, encode(enc, window))


def scores_to_logits(frozen: FrozenModel, counts) -> np.ndarray:
    return frozen.tau * np.asarray(counts) / frozen.group_size


# -- serialization -----------------------------------------------------------

def to_bytes(frozen: FrozenModel) -> bytes:
    parts = [MAGIC, struct.pack("<III", FORMAT_VERSION, len(frozen.layers), frozen.input_width)]
    for l in frozen.layers:
        parts.append(struct.pack("<II", l.num_luts, l.arity))
    parts.append(struct.pack("<Id", frozen.num_classes, frozen.tau))
    thr = frozen.thresholds
    if thr is None or thr.size == 0:
        parts.append(struct.pack("<III", 0, 0, 0))
    else:
        parts.append(struct.pack("<III", thr.shape[0], frozen.timesteps, thr.shape[1]))
        parts.append(np.ascontiguousarray(thr, dtype="<f8").tobytes())
    for l in frozen.layers:
        parts.append(np.ascontiguousarray(l.routing, dtype="<u4").tobytes())
    for l in frozen.layers:
        parts.append(np.packbits(l.lut_bits.ravel(), bitorder="little").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"truncated model file: {what} needs {n} bytes at offset {self.pos}, "
                f"{len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(data: bytes) -> FrozenModel:
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format version {version} at offset 4, expected {FORMAT_VERSION}"
        )
    num_layers, input_width = r.unpack("<II", "header")
    shapes = [r.unpack("<II", f"layer {i} shape") for i in range(num_layers)]
    num_classes, tau = r.unpack("<Id", "head")
    c, t, b = r.unpack("<III", "encoder dims")
    thresholds = None
    if c:
        thresholds = np.frombuffer(r.take(8 * c * b, "thresholds"), dtype="<f8").reshape(c, b)
        thresholds = thresholds.astype(np.float64)
    routings = []
    for i, (L, n) in enumerate(shapes):
        raw = r.take(4 * L * n, f"layer {i} routing")
        routings.append(np.frombuffer(raw, dtype="<u4").reshape(L, n).astype(np.int64))
    layers = []
    for i, (L, n) in enumerate(shapes):
        nbits = L << n
        raw = r.take((nbits + 7) // 8, f"layer {i} truth bits")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:nbits]
        layers.append(FrozenLayer(routings[i], bits.reshape(L, 1 << n).astype(np.uint8)))
    if r.pos != len(data):
        raise ModelFormatError(f"{len(data) - r.pos} trailing bytes at offset {r.pos}")
    return FrozenModel(tuple(layers), num_classes, tau, input_width, thresholds, t)


def save(frozen: FrozenModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(frozen))


def load(path) -> FrozenModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


# -- benchmarking ------------------------------------------------------------

def bench(frozen: FrozenModel, bits, repetitions: int = 5, batch_size: int = 256,
          latency_samples: int = 200) -> dict:
    """Wall-clock throughput of ``predict_bits`` over pre-encoded inputs.

    One warmup pass is excluded. Per-sample latency is timed on single-sample
    calls over the first ``latency_samples`` inputs.
    """
    x = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    if repetitions < 1 or len(x) == 0:
        raise ValueError("bench needs at least one repetition and one sample")
    predict_bits(frozen, x[:batch_size])
    pass_times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for start in range(0, len(x), batch_size):
            predict_bits(frozen, x[start:start + batch_size])
        pass_times.append(time.perf_counter() - t0)
    lat = []
    for row in x[:latency_samples]:
        t0 = time.perf_counter()
        predict_bits(frozen, row)
        lat.append(time.perf_counter() - t0)
    lat = np.array(lat)
    total = float(sum(pass_times))
    count = repetitions * len(x)
    return {
        "inferences": count,
        "seconds": total,
        "samples_per_second": count / total,
        "pass_seconds_mean": float(np.mean(pass_times)),
        "latency_us_mean": float(lat.mean() * 1e6),
        "latency_us_p50": float(np.percentile(lat, 50) * 1e6),
        "latency_us_p99": float(np.percentile(lat, 99) * 1e6),
    }
