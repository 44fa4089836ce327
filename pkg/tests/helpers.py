"""Independent oracles shared by the unit and acceptance tests.

Everything here deliberately avoids the library's own fast paths: gradients
come from central finite differences, optimal sparse masks from exhaustive
enumeration, and convolutions from plain nested loops.
"""

from __future__ import annotations

import itertools

import numpy as np

from creplay.codecs import ConvLayer, KIND_CONV_POOL, KIND_TRANSPOSED
from creplay.head import loss_and_grads


def finite_difference_grads(params, X, y_a, y_b, lam, eps=1e-3):
    """Central-difference gradient of the mixed cross-entropy, per parameter."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi, _ = loss_and_grads(params, X, y_a, y_b, lam)
            flat[i] = orig - eps
            lo, _ = loss_and_grads(params, X, y_a, y_b, lam)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def relative_group_error(analytic, numeric):
    """Worst per-group normalized infinity-norm discrepancy."""
    worst = 0.0
    for name in analytic:
        a, b = analytic[name], numeric[name]
        scale = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
        worst = max(worst, float(np.abs(a - b).max() / scale))
    return worst


def draw_smooth_batch(params, d, rng, batch=5, margin=0.05):
    """Random batch whose hidden pre-activations stay clear of the ReLU kink.

    Central differences are only a valid derivative oracle where the loss is
    smooth throughout the perturbation interval; a pre-activation within eps
    of zero makes the two-sided quotient straddle the kink.
    """
    while True:
        X = rng.normal(size=(batch, d))
        if "W1" not in params:
            return X
        pre = X @ params["W1"] + params["b1"]
        if np.abs(pre).min() > margin:
            return X


def brute_force_best_mask(values: np.ndarray, kept: int) -> tuple[int, ...]:
    """Exhaustive minimum-L2 mask; ties resolved to the lexicographically
    smallest kept-index tuple."""
    n = values.size
    sq = values.astype(np.float64) ** 2
    best_err = None
    best_mask = None
    for mask in itertools.combinations(range(n), kept):
        dropped = sq.sum() - sq[list(mask)].sum()
        if best_err is None or dropped < best_err - 1e-12:
            best_err, best_mask = dropped, mask
    return best_mask


def conv3x3_reference(x, kernel, bias):
    """Nested-loop 3x3 pad-1 convolution."""
    c, h, w = x.shape
    out_ch = kernel.shape[0]
    out = np.zeros((out_ch, h, w), dtype=np.float64)
    for o in range(out_ch):
        for yy in range(h):
            for xx in range(w):
                acc = float(bias[o])
                for i in range(c):
                    for dy in range(3):
                        for dx in range(3):
                            sy, sx = yy + dy - 1, xx + dx - 1
                            if 0 <= sy < h and 0 <= sx < w:
                                acc += float(kernel[o, i, dy, dx]) * float(x[i, sy, sx])
                out[o, yy, xx] = acc
    return out


def tconv2x2_reference(x, kernel, bias):
    """Nested-loop 2x2 stride-2 transposed convolution."""
    c, h, w = x.shape
    out_ch = kernel.shape[0]
    out = np.zeros((out_ch, 2 * h, 2 * w), dtype=np.float64)
    for o in range(out_ch):
        out[o] += float(bias[o])
        for i in range(c):
            for yy in range(h):
                for xx in range(w):
                    for dy in range(2):
                        for dx in range(2):
                            out[o, 2 * yy + dy, 2 * xx + dx] += float(
                                kernel[o, i, dy, dx]
                            ) * float(x[i, yy, xx])
    return out


def random_ae_weights(in_channels=3, hidden=4, k_ae=2, seed=0, scale=0.3):
    """Small random-but-valid autoencoder weights for fixtures."""
    rng = np.random.default_rng(seed)

    def layer(out_c, in_c, k, kind):
        return ConvLayer(
            rng.normal(0, scale, size=(out_c, in_c, k, k)).astype(np.float32),
            rng.normal(0, scale, size=out_c).astype(np.float32),
            kind,
        )

    layers = (
        layer(hidden, in_channels, 3, KIND_CONV_POOL),
        layer(k_ae, hidden, 3, KIND_CONV_POOL),
        layer(hidden, k_ae, 2, KIND_TRANSPOSED),
        layer(in_channels, hidden, 2, KIND_TRANSPOSED),
    )
    import io

    from creplay.codecs import read_ae_weights, write_ae_weights

    buf = io.BytesIO()
    write_ae_weights(layers, k_ae, buf)
    return read_ae_weights(buf.getvalue())
