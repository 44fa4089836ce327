"""Classification head retrained from scratch on replay-memory contents.

The head is a linear or one-hidden-layer softmax classifier in the
scikit-learn estimator mold: hyperparameters in __init__, fitted state in
trailing-underscore attributes, fit/predict/score. Optimization is plain
mini-batch SGD under a cosine warm-restart schedule, with cutmix (spatial
inputs) or mixup (flat inputs) regularization. Gradients are closed-form.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

LINEAR = "linear"
MLP = "mlp"

# named sub-stream tags hung off the row seed
_INIT_STREAM = 0x1217
_SHUFFLE_STREAM = 0x5217
_MIX_STREAM = 0x3117


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tags))


# ---------------------------------------------------------------------------
# learning-rate schedule

def cosine_restart_lr(t_cur: float, period: float, lr_min: float, lr_max: float) -> float:
    """Within-cycle cosine annealing: lr_max at t_cur=0 down to lr_min at t_cur=period."""
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t_cur / period))


def cycle_lengths(t0: int, t_mult: int, cycles: int) -> list[int]:
    return [t0 * t_mult**i for i in range(cycles)]


def sgdr_learning_rate(
    epoch: int, t0: int, t_mult: int, cycles: int, lr_min: float, lr_max: float
) -> float:
    """Learning rate for a global epoch index; restarts reset to lr_max."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    remaining = epoch
    lengths = cycle_lengths(t0, t_mult, cycles)
    for period in lengths:
        if remaining < period:
            return cosine_restart_lr(remaining, period, lr_min, lr_max)
        remaining -= period
    # past the configured budget: keep annealing within a final-length cycle
    return cosine_restart_lr(remaining % lengths[-1], lengths[-1], lr_min, lr_max)


# ---------------------------------------------------------------------------
# batch mixing

def mix_batch(
    X: np.ndarray,
    y: np.ndarray,
    p: float,
    alpha: float,
    rng: np.random.Generator,
    spatial_shape: tuple[int, int, int] | None = None,
):
    """With probability p, blend the batch with a shuffled copy of itself.

    Spatial inputs get cutmix (a rectangular patch of relative area 1-lam is
    swapped in, lam re-adjusted to the realized integer patch); flat inputs
    get mixup (convex interpolation). Returns (X_mixed, y_a, y_b, lam); an
    unmixed batch comes back with y_b == y_a and lam == 1.
    """
    if X.shape[0] < 2 or rng.random() >= p:
        return X, y, y, 1.0
    lam = float(rng.beta(alpha, alpha))
    perm = rng.permutation(X.shape[0])
    y_a, y_b = y, y[perm]
    if spatial_shape is None:
        mixed = lam * X + (1.0 - lam) * X[perm]
        return mixed, y_a, y_b, lam
    c, h, w = spatial_shape
    cut_h = int(round(h * math.sqrt(1.0 - lam)))
    cut_w = int(round(w * math.sqrt(1.0 - lam)))
    if cut_h == 0 or cut_w == 0:
        return X, y_a, y_a, 1.0
    top = int(rng.integers(h - cut_h + 1))
    left = int(rng.integers(w - cut_w + 1))
    imgs = X.reshape(X.shape[0], c, h, w).copy()
    imgs[:, :, top:top + cut_h, left:left + cut_w] = imgs[perm][
        :, :, top:top + cut_h, left:left + cut_w
    ]
    lam_adj = 1.0 - (cut_h * cut_w) / (h * w)
    return imgs.reshape(X.shape[0], -1), y_a, y_b, lam_adj


def cut_patch_area(h: int, w: int, lam: float) -> int:
    """Pixel count of the swapped cutmix rectangle for a given mixing weight."""
    return int(round(h * math.sqrt(1.0 - lam))) * int(round(w * math.sqrt(1.0 - lam)))


# ---------------------------------------------------------------------------
# parameters, loss, gradients

def init_params(
    architecture: str, in_dim: int, hidden: int, classes: int, seed: int
) -> dict[str, np.ndarray]:
    """Scaled-uniform init, a pure function of seed and shapes."""
    rng = _rng(seed, _INIT_STREAM)
    if architecture == LINEAR:
        bound = 1.0 / math.sqrt(in_dim)
        return {
            "W": rng.uniform(-bound, bound, size=(in_dim, classes)),
            "b": np.zeros(classes),
        }
    if architecture == MLP:
        if hidden < 1:
            raise ValueError("hidden_width must be positive for the mlp architecture")
        b1 = 1.0 / math.sqrt(in_dim)
        b2 = 1.0 / math.sqrt(hidden)
        return {
            "W1": rng.uniform(-b1, b1, size=(in_dim, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.uniform(-b2, b2, size=(hidden, classes)),
            "b2": np.zeros(classes),
        }
    raise ValueError(f"unknown architecture {architecture!r}")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward_logits(params: dict, X: np.ndarray) -> np.ndarray:
    if "W1" in params:
        hidden = np.maximum(X @ params["W1"] + params["b1"], 0.0)
        return hidden @ params["W2"] + params["b2"]
    return X @ params["W"] + params["b"]


def loss_and_grads(
    params: dict,
    X: np.ndarray,
    y_a: np.ndarray,
    y_b: np.ndarray,
    lam: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean mixed softmax cross-entropy and its exact gradients."""
    m = X.shape[0]
    mlp = "W1" in params
    if mlp:
        pre = X @ params["W1"] + params["b1"]
        hidden = np.maximum(pre, 0.0)
        logits = hidden @ params["W2"] + params["b2"]
    else:
        logits = X @ params["W"] + params["b"]

    logp = _log_softmax(logits)
    rows = np.arange(m)
    loss = -(lam * logp[rows, y_a] + (1.0 - lam) * logp[rows, y_b]).mean()

    target = np.zeros_like(logp)
    target[rows, y_a] += lam
    target[rows, y_b] += 1.0 - lam
    dlogits = (np.exp(logp) - target) / m

    if not mlp:
        return loss, {"W": X.T @ dlogits, "b": dlogits.sum(axis=0)}
    dhidden = (dlogits @ params["W2"].T) * (pre > 0.0)
    return loss, {
        "W1": X.T @ dhidden,
        "b1": dhidden.sum(axis=0),
        "W2": hidden.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_loss: float = float("nan")
    epochs: int = 0
    wall_seconds: float = 0.0


# ---------------------------------------------------------------------------
# estimator

class SGDRSoftmaxHead(BaseEstimator, ClassifierMixin):
    """Softmax classifier retrained from scratch with warm-restart SGD.

    Parameters
    ----------
    architecture : "linear" or "mlp"
        Network shape; "mlp" adds one ReLU hidden layer of hidden_width units.
    hidden_width : int
        Hidden layer width (mlp only).
    batch_size : int
        Mini-batch size.
    lr_max, lr_min : float
        Cosine schedule endpoints; the rate restarts at lr_max each cycle.
    sgdr_t0, sgdr_tmult, cycles : int
        First cycle length in epochs, cycle growth factor, and cycle count.
        The total epoch budget is the sum of all cycle lengths.
    mix_p, mix_alpha : float
        Per-batch mixing probability and Beta concentration.
    spatial_shape : (C, H, W) tuple or None
        When set, rows are treated as flattened images and mixing swaps
        rectangular patches (cutmix); otherwise rows are interpolated (mixup).
    seed : int
        Drives initialization, epoch shuffles, and mixing; fitting twice with
        the same seed and data reproduces parameters exactly.

    Feature normalization (per-column mean/std) is computed on the training
    data inside fit and reapplied at prediction time.
    """

    def __init__(
        self,
        architecture: str = LINEAR,
        hidden_width: int = 64,
        batch_size: int = 16,
        lr_max: float = 0.05,
        lr_min: float = 0.0005,
        sgdr_t0: int = 1,
        sgdr_tmult: int = 2,
        cycles: int = 5,
        mix_p: float = 0.5,
        mix_alpha: float = 1.0,
        spatial_shape: tuple[int, int, int] | None = None,
        seed: int = 0,
    ):
        self.architecture = architecture
        self.hidden_width = hidden_width
        self.batch_size = batch_size
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.sgdr_t0 = sgdr_t0
        self.sgdr_tmult = sgdr_tmult
        self.cycles = cycles
        self.mix_p = mix_p
        self.mix_alpha = mix_alpha
        self.spatial_shape = spatial_shape
        self.seed = seed

    def _validate_config(self):
        if self.architecture not in (LINEAR, MLP):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.architecture == MLP and self.hidden_width < 1:
            raise ValueError("hidden_width must be positive for the mlp architecture")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.lr_min < self.lr_max:
            raise ValueError("lr_min must be strictly below lr_max")
        if self.sgdr_t0 < 1 or self.sgdr_tmult < 1 or self.cycles < 1:
            raise ValueError("schedule lengths must be positive")

    @property
    def total_epochs(self) -> int:
        return sum(cycle_lengths(self.sgdr_t0, self.sgdr_tmult, self.cycles))

    def learning_rate(self, epoch: int) -> float:
        return sgdr_learning_rate(
            epoch, self.sgdr_t0, self.sgdr_tmult, self.cycles, self.lr_min, self.lr_max
        )

    def fit(self, X, y):
        self._validate_config()
        X, y = check_X_y(X, y, dtype=np.float64)
        started = time.perf_counter()

        self.classes_, y_idx = np.unique(y, return_inverse=True)
        n_classes = len(self.classes_)
        if n_classes < 1:
            raise ValueError("training data holds no classes")

        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0
        self.norm_mean_, self.norm_std_ = mean, std
        Z = (X - mean) / std

        params = init_params(
            self.architecture, X.shape[1], self.hidden_width, n_classes, self.seed
        )
        report = TrainReport()
        count = X.shape[0]
        for epoch in range(self.total_epochs):
            lr = self.learning_rate(epoch)
            order = _rng(self.seed, _SHUFFLE_STREAM, epoch).permutation(count)
            mix_rng = _rng(self.seed, _MIX_STREAM, epoch)
            losses = []
            for start in range(0, count, self.batch_size):
                take = order[start:start + self.batch_size]
                Xb, yb = Z[take], y_idx[take]
                Xb, y_a, y_b, lam = mix_batch(
                    Xb, yb, self.mix_p, self.mix_alpha, mix_rng, self.spatial_shape
                )
                loss, grads = loss_and_grads(params, Xb, y_a, y_b, lam)
                if not math.isfinite(loss):
                    raise FloatingPointError(f"loss diverged at epoch {epoch}")
                for name, g in grads.items():
                    params[name] -= lr * g
                losses.append(loss)
            report.epoch_losses.append(float(np.mean(losses)))
        report.epochs = self.total_epochs
        report.final_loss = report.epoch_losses[-1] if report.epoch_losses else float("nan")
        report.wall_seconds = time.perf_counter() - started

        self.params_ = params
        self.n_features_in_ = X.shape[1]
        self.report_ = report
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, head was fitted with {self.n_features_in_}"
            )
        Z = (X - self.norm_mean_) / self.norm_std_
        return forward_logits(self.params_, Z)

    def predict_proba(self, X):
        return np.exp(_log_softmax(self.decision_function(X)))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


def evaluate_on_seen(head: SGDRSoftmaxHead, X, y, seen_classes) -> float:
    """Top-1 accuracy on the test rows whose label was seen during the stream."""
    y = np.asarray(y)
    keep = np.isin(y, np.asarray(sorted(seen_classes)))
    if not keep.any():
        raise ValueError("no test samples belong to the seen classes")
    return float(np.mean(head.predict(np.asarray(X)[keep]) == y[keep]))


# ---------------------------------------------------------------------------
# checkpointing

FHED_MAGIC = b"FHED"


def save_head(head: SGDRSoftmaxHead, destination) -> int:
    """Dump a fitted head: FHED | version u16=1 | arch u8 (0 linear, 1 mlp) |
    n_features u32 | n_classes u32 | classes u32 each | norm mean/std f32
    pairs per feature | per parameter group: name_len u8, ascii name,
    rank u8, dims u32 each, f32 values row-major. Little-endian; parameters
    are stored at f32 precision.
    """
    import os

    check_is_fitted(head, "params_")
    out = bytearray()
    out += FHED_MAGIC
    out += (1).to_bytes(2, "little")
    out += bytes([0 if head.architecture == LINEAR else 1])
    out += int(head.n_features_in_).to_bytes(4, "little")
    out += len(head.classes_).to_bytes(4, "little")
    for label in head.classes_:
        out += int(label).to_bytes(4, "little")
    out += head.norm_mean_.astype("<f4").tobytes()
    out += head.norm_std_.astype("<f4").tobytes()
    for name in sorted(head.params_):
        value = head.params_[name]
        out += bytes([len(name)])
        out += name.encode("ascii")
        out += bytes([value.ndim])
        for dim in value.shape:
            out += int(dim).to_bytes(4, "little")
        out += value.astype("<f4").tobytes()
    blob = bytes(out)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            return fh.write(blob)
    return destination.write(blob)


def load_head(source, **estimator_kwargs) -> SGDRSoftmaxHead:
    """Rebuild a predict-ready head from a save_head dump."""
    import os

    from .tensor_io import FormatError, _Cursor

    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return load_head(fh.read(), **estimator_kwargs)
    cur = _Cursor(bytes(source))
    if cur.take(4, "magic") != FHED_MAGIC:
        raise FormatError("magic: not a head checkpoint")
    if cur.u(2, "version") != 1:
        raise FormatError("version: unsupported version")
    arch = LINEAR if cur.u(1, "architecture") == 0 else MLP
    n_features = cur.u(4, "n_features")
    n_classes = cur.u(4, "n_classes")
    classes = np.array([cur.u(4, "classes") for _ in range(n_classes)], dtype=np.int64)
    mean = np.frombuffer(cur.take(4 * n_features, "norm_mean"), dtype="<f4").astype(np.float64)
    std = np.frombuffer(cur.take(4 * n_features, "norm_std"), dtype="<f4").astype(np.float64)
    params = {}
    while cur.pos < len(cur.blob):
        name = cur.take(cur.u(1, "param_name_len"), "param_name").decode("ascii")
        rank = cur.u(1, "param_rank")
        shape = tuple(cur.u(4, "param_shape") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(cur.take(4 * count, "param_values"), dtype="<f4")
        params[name] = values.astype(np.float64).reshape(shape)

    head = SGDRSoftmaxHead(architecture=arch, **estimator_kwargs)
    head.classes_ = classes
    head.n_features_in_ = n_features
    head.norm_mean_, head.norm_std_ = mean, std
    head.params_ = params
    return head
