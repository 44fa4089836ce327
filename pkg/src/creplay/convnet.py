"""Minimal float32 conv/pool forward passes for autoencoder inference.

Kernels are laid out (out_ch, in_ch, kh, kw); activations are (C, H, W).
Only what the stored-exemplar autoencoder needs: 3x3 same-padding
convolution, 2x2 max-pooling, and 2x2 stride-2 transposed convolution.
"""

from __future__ import annotations

import numpy as np


def conv2d_3x3(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved)."""
    c, h, w = x.shape
    out_ch, in_ch, kh, kw = kernel.shape
    if (kh, kw) != (3, 3):
        raise ValueError(f"expected a 3x3 kernel, got {kh}x{kw}")
    if in_ch != c:
        raise ValueError(f"kernel expects {in_ch} input channels, tensor has {c}")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    patches = np.empty((c, 3, 3, h, w), dtype=np.float32)
    for dy in range(3):
        for dx in range(3):
            patches[:, dy, dx] = xp[:, dy:dy + h, dx:dx + w]
    out = np.einsum("oiyx,iyxhw->ohw", kernel, patches, dtype=np.float32)
    return out + bias[:, None, None]


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling with stride 2; spatial dims must be even."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims ({h},{w}) must be even for 2x2 pooling")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def conv_transpose2d_2x2(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """2x2 transposed convolution with stride 2 (doubles spatial size)."""
    c, h, w = x.shape
    out_ch, in_ch, kh, kw = kernel.shape
    if (kh, kw) != (2, 2):
        raise ValueError(f"expected a 2x2 kernel, got {kh}x{kw}")
    if in_ch != c:
        raise ValueError(f"kernel expects {in_ch} input channels, tensor has {c}")
    # out[o, 2y+dy, 2x+dx] = sum_i kernel[o, i, dy, dx] * x[i, y, x]
    out = np.einsum("oiyx,ihw->ohywx", kernel, x, dtype=np.float32)
    out = out.reshape(out_ch, 2 * h, 2 * w)
    return out + bias[:, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0, dtype=np.float32)
