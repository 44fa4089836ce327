"""Byte-exact storage accounting for the replay memory and its codecs.

Costs are charged per the accounting convention used throughout: exemplar
payloads only, plus a fixed per-pipeline overhead (quantization codebook or
autoencoder weights) and an optional constant model size.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .tensor_io import U8

IDENTITY = "identity"
QUANTIZE = "quantize"
THIN = "thin"
AUTOENCODE = "autoencode"

_KINDS = (IDENTITY, QUANTIZE, THIN, AUTOENCODE)


@dataclass(frozen=True)
class StorageModel:
    """Byte-cost constants: f32 value, 2-byte address, u8 value, model, AE network."""

    s_float: int = 4
    s_addr: int = 2
    s_uint: int = 1
    s_model: int = 0
    s_ae: int = 0

    def __post_init__(self):
        for name in ("s_float", "s_addr", "s_uint", "s_model", "s_ae"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        # any element index below 2^16 has to fit
        if self.s_addr < 2:
            raise ValueError("s_addr must be at least 2 bytes")

    def element_size(self, dtype: str) -> int:
        return self.s_uint if dtype == U8 else self.s_float


@dataclass(frozen=True)
class CodecConfig:
    """Which compressor runs, and its single strength parameter."""

    kind: str
    k_quant: int | None = None
    k_thin: float | None = None
    k_ae: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown codec kind {self.kind!r}")
        params = {
            "k_quant": self.k_quant,
            "k_thin": self.k_thin,
            "k_ae": self.k_ae,
        }
        expected = {
            IDENTITY: None,
            QUANTIZE: "k_quant",
            THIN: "k_thin",
            AUTOENCODE: "k_ae",
        }[self.kind]
        for name, value in params.items():
            if name == expected:
                if value is None:
                    raise ValueError(f"{self.kind} codec requires {name}")
            elif value is not None:
                raise ValueError(f"{name} is not a parameter of the {self.kind} codec")
        if self.kind == QUANTIZE and self.k_quant < 2:
            raise ValueError("k_quant must be at least 2")
        if self.kind == THIN and not (0.0 <= self.k_thin < 1.0):
            raise ValueError("k_thin must lie in [0, 1)")
        if self.kind == AUTOENCODE and self.k_ae < 1:
            raise ValueError("k_ae must be at least 1")

    @property
    def k_value(self):
        """The strength parameter, or None for the identity codec."""
        return {
            IDENTITY: None,
            QUANTIZE: self.k_quant,
            THIN: self.k_thin,
            AUTOENCODE: self.k_ae,
        }[self.kind]


def keep_count(n: int, k_thin: float) -> int:
    """Entries surviving thinning: n - floor(k_thin * n)."""
    kept = n - math.floor(k_thin * n)
    if kept < 1:
        raise ValueError(f"thinning k_thin={k_thin} would keep no entries of {n}")
    return kept


def quantized_bits(k_quant: int) -> int:
    return max(1, math.ceil(math.log2(k_quant)))


def exemplar_cost(
    cfg: CodecConfig, n: int, dtype: str, sm: StorageModel, n_h: int | None = None
) -> int:
    """Bytes one stored exemplar occupies under the given codec.

    n_h is the per-channel spatial element count of the autoencoder bottleneck
    and is required for (and only for) the autoencode codec.
    """
    elem = sm.element_size(dtype)
    if cfg.kind == IDENTITY:
        return n * elem
    if cfg.kind == QUANTIZE:
        return math.ceil(quantized_bits(cfg.k_quant) * n / 8)
    if cfg.kind == THIN:
        return keep_count(n, cfg.k_thin) * (elem + sm.s_addr)
    if n_h is None:
        raise ValueError("autoencode cost needs the bottleneck spatial size n_h")
    return cfg.k_ae * n_h * sm.s_float


def storage_overhead(cfg: CodecConfig, dtype: str, sm: StorageModel) -> int:
    """Fixed bytes the codec costs regardless of slot count (codebook / AE weights)."""
    if cfg.kind == QUANTIZE:
        return cfg.k_quant * sm.element_size(dtype)
    if cfg.kind == AUTOENCODE:
        return sm.s_ae
    return 0


def total_storage(
    cfg: CodecConfig,
    n: int,
    dtype: str,
    sm: StorageModel,
    slots: int,
    n_h: int | None = None,
) -> int:
    """Total pipeline bytes for a memory with the given slot count."""
    if slots < 0:
        raise ValueError("slot count must be non-negative")
    return (
        sm.s_model
        + storage_overhead(cfg, dtype, sm)
        + slots * exemplar_cost(cfg, n, dtype, sm, n_h)
    )


def max_slots(
    budget: int,
    cfg: CodecConfig,
    n: int,
    dtype: str,
    sm: StorageModel,
    n_h: int | None = None,
) -> int:
    """Largest slot count whose total storage stays within the byte budget."""
    fixed = sm.s_model + storage_overhead(cfg, dtype, sm)
    if budget < fixed:
        warnings.warn(
            f"budget {budget} B is below the fixed overhead {fixed} B; no slots fit",
            stacklevel=2,
        )
        return 0
    per = exemplar_cost(cfg, n, dtype, sm, n_h)
    return (budget - fixed) // per
