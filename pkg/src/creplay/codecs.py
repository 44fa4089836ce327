"""Compressor/decompressor pairs for stored exemplars.

Four codecs share one exemplar container: identity (raw copy), scalar
quantization against a fixed codebook, magnitude thinning to sparse
(index, value) pairs, and a small convolutional autoencoder whose weights
are loaded from a FAEW file. Every exemplar knows its exact serialized
byte size; the storage module's analytic costs must agree with it.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import convnet, storage
from .storage import (
    AUTOENCODE,
    IDENTITY,
    QUANTIZE,
    THIN,
    CodecConfig,
    StorageModel,
    keep_count,
    quantized_bits,
)
from .tensor_io import (
    DTYPE_SIZE,
    F32,
    NUMPY_DTYPE,
    FormatError,
    TensorSample,
    _Cursor,
)

FSTA_MAGIC = b"FSTA"
FAEW_MAGIC = b"FAEW"


# ---------------------------------------------------------------------------
# quantization codebook

@dataclass(frozen=True)
class CodebookStats:
    """Value range observed on the pre-training dataset."""

    lo: float
    hi: float


@dataclass(frozen=True)
class Codebook:
    """k equal-width intervals over [lo, hi]; representatives at interval midpoints."""

    lo: float
    hi: float
    k_quant: int
    width: float
    representatives: np.ndarray

    @property
    def bits_per_element(self) -> int:
        return quantized_bits(self.k_quant)


def build_codebook(stats, k_quant: int) -> Codebook:
    lo, hi = (stats.lo, stats.hi) if isinstance(stats, CodebookStats) else stats
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError(f"degenerate value range [{lo}, {hi}]")
    if k_quant < 2:
        raise ValueError("k_quant must be at least 2")
    width = (hi - lo) / k_quant
    reps = (lo + (np.arange(k_quant, dtype=np.float64) + 0.5) * width).astype(np.float32)
    return Codebook(lo, hi, k_quant, width, reps)


def read_stats(source) -> CodebookStats:
    """Parse an FSTA range-statistics file."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return read_stats(fh.read())
    cur = _Cursor(bytes(source))
    magic = cur.take(4, "magic")
    if magic != FSTA_MAGIC:
        raise FormatError(f"magic: expected {FSTA_MAGIC!r}, got {magic!r}")
    version = cur.u(2, "version")
    if version != 1:
        raise FormatError(f"version: unsupported version {version}")
    lo = struct.unpack("<f", cur.take(4, "lo"))[0]
    hi = struct.unpack("<f", cur.take(4, "hi"))[0]
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise FormatError("lo/hi: non-finite range bound")
    return CodebookStats(lo, hi)


def write_stats(stats: CodebookStats, destination) -> int:
    blob = FSTA_MAGIC + (1).to_bytes(2, "little") + struct.pack("<ff", stats.lo, stats.hi)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            return fh.write(blob)
    return destination.write(blob)


# ---------------------------------------------------------------------------
# compressed exemplar container

@dataclass(eq=False)
class CompressedExemplar:
    """Tagged union of codec payloads plus the metadata to restore a sample.

    kind selects which payload fields are set:
      identity   -> dense
      quantize   -> packed, bits_per_element
      thin       -> indices, values
      autoencode -> latent, latent_shape
    """

    kind: str
    label: int
    shape: tuple[int, ...]
    dtype: str
    dense: np.ndarray | None = None
    packed: bytes | None = None
    bits_per_element: int | None = None
    indices: np.ndarray | None = None
    values: np.ndarray | None = None
    latent: np.ndarray | None = None
    latent_shape: tuple[int, ...] | None = None

    def byte_size(self) -> int:
        """Exact serialized payload length in bytes."""
        if self.kind == IDENTITY:
            return self.dense.size * DTYPE_SIZE[self.dtype]
        if self.kind == QUANTIZE:
            return len(self.packed)
        if self.kind == THIN:
            return self.indices.size * (2 + DTYPE_SIZE[self.dtype])
        return self.latent.size * 4

    def serialize(self) -> bytes:
        if self.kind == IDENTITY:
            return self.dense.astype(NUMPY_DTYPE[self.dtype]).tobytes()
        if self.kind == QUANTIZE:
            return bytes(self.packed)
        if self.kind == THIN:
            pair_dt = np.dtype([("i", "<u2"), ("v", NUMPY_DTYPE[self.dtype])])
            pairs = np.empty(self.indices.size, dtype=pair_dt)
            pairs["i"] = self.indices
            pairs["v"] = self.values
            return pairs.tobytes()
        return self.latent.astype("<f4").tobytes()


def deserialize_exemplar(
    payload: bytes,
    kind: str,
    label: int,
    shape: tuple[int, ...],
    dtype: str,
    cfg: CodecConfig,
    latent_shape: tuple[int, ...] | None = None,
) -> CompressedExemplar:
    """Rebuild an exemplar from its serialized payload and container metadata."""
    n = int(np.prod(shape))
    if kind == IDENTITY:
        dense = np.frombuffer(payload, dtype=NUMPY_DTYPE[dtype]).copy()
        if dense.size != n:
            raise FormatError(f"identity payload holds {dense.size} elements, expected {n}")
        return CompressedExemplar(kind, label, shape, dtype, dense=dense)
    if kind == QUANTIZE:
        bits = quantized_bits(cfg.k_quant)
        if len(payload) != math.ceil(bits * n / 8):
            raise FormatError("quantized payload length inconsistent with shape")
        return CompressedExemplar(
            kind, label, shape, dtype, packed=bytes(payload), bits_per_element=bits
        )
    if kind == THIN:
        pair_dt = np.dtype([("i", "<u2"), ("v", NUMPY_DTYPE[dtype])])
        pairs = np.frombuffer(payload, dtype=pair_dt)
        if pairs.size != keep_count(n, cfg.k_thin):
            raise FormatError("sparse payload pair count inconsistent with k_thin")
        return CompressedExemplar(
            kind, label, shape, dtype,
            indices=pairs["i"].astype(np.uint16),
            values=pairs["v"].copy(),
        )
    latent = np.frombuffer(payload, dtype="<f4").copy()
    if latent_shape is None or latent.size != int(np.prod(latent_shape)):
        raise FormatError("latent payload length inconsistent with bottleneck shape")
    return CompressedExemplar(
        kind, label, shape, dtype, latent=latent, latent_shape=tuple(latent_shape)
    )


# ---------------------------------------------------------------------------
# quantize / dequantize

def pack_indices(indices: np.ndarray, bits: int) -> bytes:
    """Bit-pack small integers LSB-first within each byte, zero-padded to whole bytes."""
    bit_rows = (indices[:, None].astype(np.uint32) >> np.arange(bits)) & 1
    return np.packbits(bit_rows.astype(np.uint8).reshape(-1), bitorder="little").tobytes()


def unpack_indices(packed: bytes, bits: int, count: int) -> np.ndarray:
    flat = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), bitorder="little")
    if flat.size < bits * count:
        raise FormatError("bitstream shorter than the declared element count")
    bit_rows = flat[: bits * count].reshape(count, bits).astype(np.uint32)
    return (bit_rows << np.arange(bits, dtype=np.uint32)).sum(axis=1)


def quantize(sample: TensorSample, codebook: Codebook) -> CompressedExemplar:
    """Map each element to its interval index; out-of-range values clamp to edge bins."""
    v = sample.data.astype(np.float64)
    idx = np.floor((v - codebook.lo) / codebook.width).astype(np.int64)
    np.clip(idx, 0, codebook.k_quant - 1, out=idx)
    bits = codebook.bits_per_element
    return CompressedExemplar(
        QUANTIZE,
        sample.label,
        sample.shape,
        sample.dtype,
        packed=pack_indices(idx, bits),
        bits_per_element=bits,
    )


def dequantize(exemplar: CompressedExemplar, codebook: Codebook) -> TensorSample:
    """Look up each stored index's representative value; output is always f32."""
    if exemplar.kind != QUANTIZE:
        raise ValueError(f"expected a quantized exemplar, got {exemplar.kind}")
    if exemplar.bits_per_element != codebook.bits_per_element:
        raise ValueError("exemplar was packed with a different k_quant")
    n = int(np.prod(exemplar.shape))
    if len(exemplar.packed) != math.ceil(exemplar.bits_per_element * n / 8):
        raise ValueError("bitstream length inconsistent with exemplar shape")
    idx = unpack_indices(exemplar.packed, exemplar.bits_per_element, n)
    if (idx >= codebook.k_quant).any():
        raise ValueError("bitstream contains an index outside the codebook")
    return TensorSample(exemplar.shape, F32, codebook.representatives[idx], exemplar.label)


# ---------------------------------------------------------------------------
# thin / unthin

def thin(sample: TensorSample, k_thin: float) -> CompressedExemplar:
    """Keep the largest-magnitude entries; ties resolve to the lower index."""
    if not (0.0 <= k_thin < 1.0):
        raise ValueError("k_thin must lie in [0, 1)")
    n = sample.n
    kept = keep_count(n, k_thin)
    mag = np.abs(sample.data.astype(np.float64))
    # primary key: magnitude descending; secondary: index ascending
    order = np.lexsort((np.arange(n), -mag))
    chosen = np.sort(order[:kept])
    return CompressedExemplar(
        THIN,
        sample.label,
        sample.shape,
        sample.dtype,
        indices=chosen.astype(np.uint16),
        values=sample.data[chosen].copy(),
    )


def unthin(exemplar: CompressedExemplar) -> TensorSample:
    """Scatter stored values back into a dense zero tensor."""
    if exemplar.kind != THIN:
        raise ValueError(f"expected a sparse exemplar, got {exemplar.kind}")
    n = int(np.prod(exemplar.shape))
    idx = exemplar.indices.astype(np.int64)
    if idx.size and (idx >= n).any():
        raise ValueError("sparse index outside the tensor")
    if np.unique(idx).size != idx.size:
        raise ValueError("duplicate sparse index")
    dense = np.zeros(n, dtype=NUMPY_DTYPE[exemplar.dtype])
    dense[idx] = exemplar.values
    return TensorSample(exemplar.shape, exemplar.dtype, dense, exemplar.label)


# ---------------------------------------------------------------------------
# autoencoder weights and forward passes

KIND_CONV_POOL = 0
KIND_TRANSPOSED = 1


@dataclass(frozen=True)
class ConvLayer:
    kernel: np.ndarray  # (out_ch, in_ch, kh, kw) float32
    bias: np.ndarray    # (out_ch,) float32
    kind: int


@dataclass(frozen=True)
class AEWeights:
    """Two conv+pool encoder layers and two transposed-conv decoder layers."""

    layers: tuple[ConvLayer, ...]
    k_ae: int
    s_ae: int

    def __post_init__(self):
        if len(self.layers) != 4:
            raise ValueError("expected exactly 4 layers (2 encoder + 2 decoder)")
        kinds = tuple(l.kind for l in self.layers)
        if kinds != (KIND_CONV_POOL, KIND_CONV_POOL, KIND_TRANSPOSED, KIND_TRANSPOSED):
            raise ValueError(f"bad layer kind sequence {kinds}")
        for i, layer in enumerate(self.layers):
            want = (3, 3) if layer.kind == KIND_CONV_POOL else (2, 2)
            if layer.kernel.shape[2:] != want:
                raise ValueError(f"layer {i}: kernel must be {want[0]}x{want[1]}")
            if layer.bias.shape != (layer.kernel.shape[0],):
                raise ValueError(f"layer {i}: bias length mismatch")
            if i > 0 and layer.kernel.shape[1] != self.layers[i - 1].kernel.shape[0]:
                raise ValueError(f"layer {i}: input channels do not chain")
        if self.layers[1].kernel.shape[0] != self.k_ae:
            raise ValueError("encoder output channels must equal k_ae")

    @property
    def in_channels(self) -> int:
        return self.layers[0].kernel.shape[1]

    @property
    def out_channels(self) -> int:
        return self.layers[3].kernel.shape[0]

    def encode(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers[:2]:
            x = convnet.maxpool2(convnet.relu(convnet.conv2d_3x3(x, layer.kernel, layer.bias)))
        return x

    def decode(self, z: np.ndarray) -> np.ndarray:
        for layer in self.layers[2:]:
            z = convnet.relu(convnet.conv_transpose2d_2x2(z, layer.kernel, layer.bias))
        return z


def _check_spatial(shape: tuple[int, ...]) -> tuple[int, int, int]:
    if len(shape) != 3:
        raise ValueError(f"autoencoding needs a (C,H,W) tensor, got shape {shape}")
    c, h, w = shape
    if h < 4 or w < 4 or h % 4 or w % 4:
        raise ValueError(
            f"spatial dims ({h},{w}) too small or not divisible by 4 for two "
            "conv+pool stages"
        )
    return c, h, w


def bottleneck_spatial(shape: tuple[int, ...]) -> int:
    """n_h: element count of one bottleneck channel for a (C,H,W) input."""
    _, h, w = _check_spatial(shape)
    return (h // 4) * (w // 4)


def ae_compress(sample: TensorSample, weights: AEWeights) -> CompressedExemplar:
    c, h, w = _check_spatial(sample.shape)
    if c != weights.in_channels:
        raise ValueError(
            f"weights expect {weights.in_channels} input channels, tensor has {c}"
        )
    x = sample.data.astype(np.float32).reshape(sample.shape)
    z = weights.encode(x)
    return CompressedExemplar(
        AUTOENCODE,
        sample.label,
        sample.shape,
        sample.dtype,
        latent=z.reshape(-1).astype(np.float32),
        latent_shape=z.shape,
    )


def ae_decompress(exemplar: CompressedExemplar, weights: AEWeights) -> TensorSample:
    if exemplar.kind != AUTOENCODE:
        raise ValueError(f"expected a latent exemplar, got {exemplar.kind}")
    if exemplar.latent_shape[0] != weights.k_ae:
        raise ValueError("latent channel count does not match the decoder bottleneck")
    z = exemplar.latent.reshape(exemplar.latent_shape)
    x = weights.decode(z)
    return TensorSample(x.shape, F32, x.reshape(-1), exemplar.label)


def read_ae_weights(source) -> AEWeights:
    """Parse a FAEW autoencoder-weights file; s_ae is the full file length."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return read_ae_weights(fh.read())
    blob = bytes(source)
    cur = _Cursor(blob)
    magic = cur.take(4, "magic")
    if magic != FAEW_MAGIC:
        raise FormatError(f"magic: expected {FAEW_MAGIC!r}, got {magic!r}")
    version = cur.u(2, "version")
    if version != 1:
        raise FormatError(f"version: unsupported version {version}")
    k_ae = cur.u(2, "k_ae")
    layer_count = cur.u(1, "layer_count")
    if layer_count != 4:
        raise FormatError(f"layer_count: expected 4, got {layer_count}")
    layers = []
    for i in range(layer_count):
        out_ch = cur.u(2, f"layer{i}.out_ch")
        in_ch = cur.u(2, f"layer{i}.in_ch")
        kh = cur.u(1, f"layer{i}.kh")
        kw = cur.u(1, f"layer{i}.kw")
        kind = cur.u(1, f"layer{i}.kind")
        if kind not in (KIND_CONV_POOL, KIND_TRANSPOSED):
            raise FormatError(f"layer{i}.kind: unknown kind {kind}")
        ksize = out_ch * in_ch * kh * kw
        kernel = np.frombuffer(cur.take(4 * ksize, f"layer{i}.kernel"), dtype="<f4")
        bias = np.frombuffer(cur.take(4 * out_ch, f"layer{i}.bias"), dtype="<f4")
        layers.append(
            ConvLayer(kernel.reshape(out_ch, in_ch, kh, kw).copy(), bias.copy(), kind)
        )
    if cur.pos != len(blob):
        raise FormatError(f"trailing bytes: {len(blob) - cur.pos} after last layer")
    return AEWeights(tuple(layers), k_ae, s_ae=len(blob))


def write_ae_weights(layers, k_ae: int, destination) -> int:
    """Serialize 4 ConvLayers to FAEW; mainly for fixtures and tooling."""
    out = bytearray()
    out += FAEW_MAGIC
    out += (1).to_bytes(2, "little")
    out += int(k_ae).to_bytes(2, "little")
    out += bytes([len(layers)])
    for layer in layers:
        out_ch, in_ch, kh, kw = layer.kernel.shape
        out += out_ch.to_bytes(2, "little")
        out += in_ch.to_bytes(2, "little")
        out += bytes([kh, kw, layer.kind])
        out += layer.kernel.astype("<f4").tobytes()
        out += layer.bias.astype("<f4").tobytes()
    blob = bytes(out)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            return fh.write(blob)
    return destination.write(blob)


# ---------------------------------------------------------------------------
# codec objects binding a config to its artifacts

class Codec:
    """Common interface: compress/decompress plus the analytic byte costs."""

    kind: str

    def __init__(self, cfg: CodecConfig):
        self.cfg = cfg
        self.kind = cfg.kind

    def compress(self, sample: TensorSample) -> CompressedExemplar:
        raise NotImplementedError

    def decompress(self, exemplar: CompressedExemplar) -> TensorSample:
        raise NotImplementedError

    def exemplar_cost(self, n: int, dtype: str, sm: StorageModel, n_h=None) -> int:
        return storage.exemplar_cost(self.cfg, n, dtype, sm, n_h)

    def overhead(self, dtype: str, sm: StorageModel) -> int:
        return storage.storage_overhead(self.cfg, dtype, sm)


class IdentityCodec(Codec):
    def __init__(self):
        super().__init__(CodecConfig(IDENTITY))

    def compress(self, sample):
        return CompressedExemplar(
            IDENTITY, sample.label, sample.shape, sample.dtype, dense=sample.data.copy()
        )

    def decompress(self, exemplar):
        if exemplar.kind != IDENTITY:
            raise ValueError(f"expected an identity exemplar, got {exemplar.kind}")
        return TensorSample(
            exemplar.shape, exemplar.dtype, exemplar.dense.copy(), exemplar.label
        )


class QuantizingCodec(Codec):
    def __init__(self, codebook: Codebook):
        super().__init__(CodecConfig(QUANTIZE, k_quant=codebook.k_quant))
        self.codebook = codebook

    def compress(self, sample):
        return quantize(sample, self.codebook)

    def decompress(self, exemplar):
        return dequantize(exemplar, self.codebook)


class ThinningCodec(Codec):
    def __init__(self, k_thin: float):
        super().__init__(CodecConfig(THIN, k_thin=k_thin))

    def compress(self, sample):
        return thin(sample, self.cfg.k_thin)

    def decompress(self, exemplar):
        return unthin(exemplar)


class AutoencodingCodec(Codec):
    def __init__(self, weights: AEWeights):
        super().__init__(CodecConfig(AUTOENCODE, k_ae=weights.k_ae))
        self.weights = weights

    def compress(self, sample):
        return ae_compress(sample, self.weights)

    def decompress(self, exemplar):
        return ae_decompress(exemplar, self.weights)


def make_codec(
    cfg: CodecConfig,
    stats: CodebookStats | None = None,
    weights: AEWeights | None = None,
) -> Codec:
    """Bind a codec config to the artifacts it needs."""
    if cfg.kind == IDENTITY:
        return IdentityCodec()
    if cfg.kind == QUANTIZE:
        if stats is None:
            raise ValueError("quantize codec needs range statistics (FSTA)")
        return QuantizingCodec(build_codebook(stats, cfg.k_quant))
    if cfg.kind == THIN:
        return ThinningCodec(cfg.k_thin)
    if weights is None:
        raise ValueError("autoencode codec needs a weights file (FAEW)")
    if weights.k_ae != cfg.k_ae:
        raise ValueError(
            f"config k_ae={cfg.k_ae} but weights have bottleneck {weights.k_ae}"
        )
    return AutoencodingCodec(weights)
