"""Greedy class-balanced episodic memory with eviction from the largest class.

Samples stream in one at a time; each is either rejected (its class already
holds its fair share of slots) or compressed and stored, evicting a random
exemplar of the currently largest class when the memory is full. The fair
share is ceil(capacity / classes_seen) and shrinks as new classes appear.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .codecs import Codec, CompressedExemplar, deserialize_exemplar
from .storage import AUTOENCODE, StorageModel
from .tensor_io import CODE_DTYPE, DTYPE_CODE, F32, Dataset, FormatError, TensorSample, _Cursor

FMEM_MAGIC = b"FMEM"

# sub-stream tag so eviction draws are independent of any other seeded choice
_EVICT_STREAM = 0xE51C


class Offer(Enum):
    ACCEPTED = "accepted"
    ACCEPTED_WITH_EVICTION = "accepted_with_eviction"
    REJECTED = "rejected"


@dataclass(frozen=True)
class OfferDecision:
    outcome: Offer
    evicted_label: int | None = None
    evicted_slot: int | None = None

    @property
    def accepted(self) -> bool:
        return self.outcome is not Offer.REJECTED


_REJECTED = OfferDecision(Offer.REJECTED)


class EpisodicMemory:
    """Fixed-capacity store of compressed exemplars with a class balancer."""

    def __init__(self, capacity: int, codec: Codec, seed: int = 0):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = int(capacity)
        self.codec = codec
        self.seed = int(seed)
        self.slots: list[CompressedExemplar] = []
        self.class_counts: dict[int, int] = {}
        self.seen_classes: set[int] = set()
        self.eviction_count = 0
        self.input_shape: tuple[int, ...] | None = None
        self.input_dtype: str | None = None

    def __len__(self) -> int:
        return len(self.slots)

    def _eviction_rng(self) -> np.random.Generator:
        # one independent stream per eviction: makes snapshots resumable
        seq = np.random.SeedSequence((self.seed, _EVICT_STREAM, self.eviction_count))
        return np.random.default_rng(seq)

    def _largest_class(self) -> int:
        best = max(self.class_counts.values())
        return min(label for label, c in self.class_counts.items() if c == best)

    def offer(self, sample: TensorSample) -> OfferDecision:
        """Greedy balanced insertion; the sample is never looked at again after return."""
        if self.input_shape is None:
            self.input_shape = sample.shape
            self.input_dtype = sample.dtype
        elif sample.shape != self.input_shape or sample.dtype != self.input_dtype:
            raise ValueError(
                f"sample shape {sample.shape}/{sample.dtype} does not match the "
                f"stream's {self.input_shape}/{self.input_dtype}"
            )
        self.seen_classes.add(sample.label)
        if self.capacity == 0:
            return _REJECTED

        cap_per_class = math.ceil(self.capacity / len(self.seen_classes))
        if self.class_counts.get(sample.label, 0) >= cap_per_class:
            return _REJECTED

        evicted_label = evicted_slot = None
        if len(self.slots) >= self.capacity:
            victim_label = self._largest_class()
            candidates = [
                i for i, e in enumerate(self.slots) if e.label == victim_label
            ]
            rng = self._eviction_rng()
            victim = candidates[int(rng.integers(len(candidates)))]
            self.eviction_count += 1
            self.slots.pop(victim)
            self.class_counts[victim_label] -= 1
            if self.class_counts[victim_label] == 0:
                del self.class_counts[victim_label]
            evicted_label, evicted_slot = victim_label, victim

        self.slots.append(self.codec.compress(sample))
        self.class_counts[sample.label] = self.class_counts.get(sample.label, 0) + 1

        if evicted_label is None:
            return OfferDecision(Offer.ACCEPTED)
        return OfferDecision(Offer.ACCEPTED_WITH_EVICTION, evicted_label, evicted_slot)

    def dump(self) -> Dataset:
        """Decompress every stored exemplar, preserving insertion order and labels."""
        samples = [self.codec.decompress(e) for e in self.slots]
        if samples:
            return Dataset(samples[0].shape, samples[0].dtype, samples)
        # nothing stored: report the stream's shape if one was ever offered
        shape = self.input_shape or (1,)
        # decompressed output is f32 unless the codec preserves the input dtype
        dtype = self.input_dtype if self.codec.kind in ("identity", "thin") else F32
        return Dataset(shape, dtype or F32, [])

    def storage_bytes(self, sm: StorageModel) -> int:
        """Accounted bytes: model constant + codec overhead + serialized exemplars."""
        dtype = self.input_dtype or F32
        payload = sum(e.byte_size() for e in self.slots)
        return sm.s_model + self.codec.overhead(dtype, sm) + payload

    # -- snapshot ----------------------------------------------------------

    def save_snapshot(self, destination) -> int:
        """Write an FMEM checkpoint; see read docstring for the layout."""
        if self.input_shape is None:
            raise ValueError("cannot snapshot a memory that has never seen a sample")
        cfg = self.codec.cfg
        out = bytearray()
        out += FMEM_MAGIC
        out += (1).to_bytes(2, "little")
        out += bytes([{"identity": 0, "quantize": 1, "thin": 2, "autoencode": 3}[cfg.kind]])
        out += bytes([DTYPE_CODE[self.input_dtype], len(self.input_shape)])
        for dim in self.input_shape:
            out += int(dim).to_bytes(4, "little")
        out += int(cfg.k_quant or 0).to_bytes(4, "little")
        out += np.float64(cfg.k_thin or 0.0).tobytes()
        out += int(cfg.k_ae or 0).to_bytes(4, "little")
        latent_shape = ()
        for e in self.slots:
            if e.kind == AUTOENCODE:
                latent_shape = e.latent_shape
                break
        out += bytes([len(latent_shape)])
        for dim in latent_shape:
            out += int(dim).to_bytes(4, "little")
        out += self.capacity.to_bytes(4, "little")
        out += len(self.slots).to_bytes(4, "little")
        out += self.seed.to_bytes(8, "little", signed=True)
        out += self.eviction_count.to_bytes(8, "little")
        out += len(self.seen_classes).to_bytes(4, "little")
        for label in sorted(self.seen_classes):
            out += int(label).to_bytes(4, "little")
        for e in self.slots:
            out += int(e.label).to_bytes(4, "little")
            out += e.serialize()

        blob = bytes(out)
        if isinstance(destination, (str, os.PathLike)):
            with open(destination, "wb") as fh:
                return fh.write(blob)
        return destination.write(blob)

    @classmethod
    def load_snapshot(cls, source, codec: Codec) -> "EpisodicMemory":
        """Rebuild a memory from an FMEM checkpoint.

        Layout (little-endian): magic "FMEM" | version u16 | codec_kind u8 |
        dtype u8 | rank u8 | shape rank*u32 | k_quant u32 | k_thin f64 |
        k_ae u32 | latent_rank u8 | latent shape u32 each | capacity u32 |
        stored u32 | seed i64 | eviction_count u64 | seen_count u32 |
        seen labels u32 each | per exemplar: label u32 + payload. Payload
        lengths are fixed per configuration, so exemplars carry no length
        field and the exemplar section's size equals stored * exemplar_cost.
        """
        if isinstance(source, (str, os.PathLike)):
            with open(source, "rb") as fh:
                return cls.load_snapshot(fh.read(), codec)
        cur = _Cursor(bytes(source))
        magic = cur.take(4, "magic")
        if magic != FMEM_MAGIC:
            raise FormatError(f"magic: expected {FMEM_MAGIC!r}, got {magic!r}")
        if cur.u(2, "version") != 1:
            raise FormatError("version: unsupported version")
        kind = {0: "identity", 1: "quantize", 2: "thin", 3: "autoencode"}.get(
            cur.u(1, "codec_kind")
        )
        if kind != codec.kind:
            raise FormatError(f"codec mismatch: snapshot is {kind}, codec is {codec.kind}")
        dtype = CODE_DTYPE.get(cur.u(1, "dtype"))
        if dtype is None:
            raise FormatError("dtype: unknown code")
        rank = cur.u(1, "rank")
        shape = tuple(cur.u(4, "shape") for _ in range(rank))
        k_quant = cur.u(4, "k_quant")
        k_thin = float(np.frombuffer(cur.take(8, "k_thin"), dtype="<f8")[0])
        k_ae = cur.u(4, "k_ae")
        stored_params = (k_quant or None, k_thin if kind == "thin" else None, k_ae or None)
        own = codec.cfg
        if stored_params != (own.k_quant, own.k_thin, own.k_ae):
            raise FormatError(
                f"codec mismatch: snapshot parameters {stored_params} differ from "
                f"({own.k_quant}, {own.k_thin}, {own.k_ae})"
            )
        latent_rank = cur.u(1, "latent_rank")
        latent_shape = tuple(cur.u(4, "latent_shape") for _ in range(latent_rank))
        capacity = cur.u(4, "capacity")
        stored = cur.u(4, "stored")
        seed = int.from_bytes(cur.take(8, "seed"), "little", signed=True)
        eviction_count = cur.u(8, "eviction_count")
        seen_count = cur.u(4, "seen_count")
        seen = {cur.u(4, "seen_label") for _ in range(seen_count)}

        mem = cls(capacity, codec, seed)
        mem.input_shape = shape
        mem.input_dtype = dtype
        mem.seen_classes = seen
        mem.eviction_count = eviction_count
        n = int(np.prod(shape))
        from .storage import exemplar_cost

        n_h = int(np.prod(latent_shape[1:])) if latent_shape else None
        payload_len = exemplar_cost(own, n, dtype, StorageModel(), n_h)
        for _ in range(stored):
            label = cur.u(4, "exemplar_label")
            payload = cur.take(payload_len, "exemplar_payload")
            e = deserialize_exemplar(
                payload, kind, label, shape, dtype, own, latent_shape or None
            )
            mem.slots.append(e)
            mem.class_counts[label] = mem.class_counts.get(label, 0) + 1
        if cur.pos != len(cur.blob):
            raise FormatError(f"trailing bytes: {len(cur.blob) - cur.pos}")
        return mem
