"""Class-incremental experiment harness.

Builds disjoint task streams over a labeled dataset, drives the
offer -> memory -> dump -> retrain -> evaluate pipeline for each seed, and
aggregates results into CSV rows and plain-text plot series. Every random
choice (task order, within-task shuffles, eviction, head init, mixing)
derives from the row seed through named sub-streams, so rows reproduce
exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .codecs import (
    AEWeights,
    CodebookStats,
    bottleneck_spatial,
    make_codec,
    read_ae_weights,
    read_stats,
)
from .head import SGDRSoftmaxHead, evaluate_on_seen
from .memory import EpisodicMemory
from .storage import AUTOENCODE, QUANTIZE, CodecConfig, StorageModel, max_slots, total_storage
from .tensor_io import F32, Dataset, TensorSample, read_dataset

# named sub-streams hung off the row seed
_TASK_ORDER_STREAM = 0x706B
_TASK_SHUFFLE_STREAM = 0x7068
_EVICT_SEED_STREAM = 0xD00D
_HEAD_SEED_STREAM = 0x4EAD


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tags))


def _derive_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence((int(seed), tag)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# task streams

@dataclass(frozen=True)
class Task:
    classes: tuple[int, ...]
    sample_indices: tuple[int, ...]


@dataclass(frozen=True)
class TaskStream:
    tasks: tuple[Task, ...]
    seed: int

    @property
    def all_classes(self) -> tuple[int, ...]:
        out: list[int] = []
        for task in self.tasks:
            out.extend(task.classes)
        return tuple(out)


def build_task_stream(dataset: Dataset, classes_per_task: int, seed: int) -> TaskStream:
    """Partition the label set into consecutive disjoint tasks, seeded order."""
    if classes_per_task < 1:
        raise ValueError("classes_per_task must be at least 1")
    labels = np.array([s.label for s in dataset.samples])
    classes = np.array(sorted(set(labels.tolist())))
    if classes.size == 0:
        raise ValueError("dataset has no labeled samples")
    order = _rng(seed, _TASK_ORDER_STREAM).permutation(classes.size)
    shuffled = classes[order]

    tasks = []
    for t, start in enumerate(range(0, classes.size, classes_per_task)):
        chunk = tuple(int(c) for c in shuffled[start:start + classes_per_task])
        member = np.isin(labels, chunk).nonzero()[0]
        within = _rng(seed, _TASK_SHUFFLE_STREAM, t).permutation(member.size)
        tasks.append(Task(chunk, tuple(int(i) for i in member[within])))
    return TaskStream(tuple(tasks), seed)


# ---------------------------------------------------------------------------
# synthetic feature generator (desk-scale stand-in for encoded image features)

def make_synthetic_features(
    classes: int = 10,
    dim: int = 128,
    train_per_class: int = 1000,
    test_per_class: int = 200,
    seed: int = 0,
    mean_scale: float = 0.16,
    shape: tuple[int, ...] | None = None,
) -> tuple[Dataset, Dataset, CodebookStats]:
    """Unit-variance Gaussian clusters with seeded random means.

    Returns (train, test, stats) where stats is the value range of an
    independent pre-training draw from the same distribution, ready to feed
    a quantization codebook.
    """
    if shape is not None and int(np.prod(shape)) != dim:
        raise ValueError(f"shape {shape} does not hold {dim} elements")
    shape = shape or (dim,)
    rng = _rng(seed, 0xC1A5)
    means = rng.normal(0.0, mean_scale, size=(classes, dim))

    def draw(per_class: int, gen: np.random.Generator) -> Dataset:
        samples = []
        for label in range(classes):
            block = gen.normal(0.0, 1.0, size=(per_class, dim)) + means[label]
            samples.extend(
                TensorSample(shape, F32, row.astype(np.float32), label) for row in block
            )
        return Dataset(shape, F32, samples)

    train = draw(train_per_class, _rng(seed, 0x7A1F))
    test = draw(test_per_class, _rng(seed, 0x7E57))
    pretrain = _rng(seed, 0x9E7A).normal(0.0, 1.0, size=(classes * 200, dim)) + means[
        rng.integers(classes, size=classes * 200)
    ]
    pretrain = pretrain.astype(np.float32)
    return train, test, CodebookStats(float(pretrain.min()), float(pretrain.max()))


# ---------------------------------------------------------------------------
# experiment configuration and results

@dataclass
class ExperimentConfig:
    """One cell of an experiment grid; exactly one of budget/slots is set."""

    config_id: str
    codec: CodecConfig
    classes_per_task: int = 2
    budget: int | None = None
    slots: int | None = None
    seeds: tuple[int, ...] = (0, 1, 2)
    storage: StorageModel = field(default_factory=StorageModel)
    train_path: str | None = None
    test_path: str | None = None
    stats_path: str | None = None
    weights_path: str | None = None
    head: dict = field(default_factory=dict)
    per_task_eval: bool = False

    def __post_init__(self):
        if (self.budget is None) == (self.slots is None):
            raise ValueError("exactly one of budget/slots must be set")


@dataclass
class ResultRow:
    config_id: str
    codec: str
    k: float | int | None
    slots: int
    bytes_total: int
    seed: int
    accuracy: float | None
    wall_ms: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.error == ""


CSV_HEADER = "config_id,codec,k,N,bytes_total,seed,accuracy,wall_ms,error"


def _fmt_k(k) -> str:
    if k is None:
        return ""
    if isinstance(k, float) and not k.is_integer():
        return f"{k:g}"
    return str(int(k))


def rows_to_csv(rows: list[ResultRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        acc = "" if r.accuracy is None else f"{r.accuracy:.6f}"
        lines.append(
            f"{r.config_id},{r.codec},{_fmt_k(r.k)},{r.slots},{r.bytes_total},"
            f"{r.seed},{acc},{r.wall_ms:.1f},{r.error}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# single experiment

def _load_inputs(cfg: ExperimentConfig, train, test, stats, weights):
    if train is None:
        if cfg.train_path is None:
            raise ValueError("no training dataset (neither in-memory nor a path)")
        train = read_dataset(cfg.train_path)
    if test is None:
        if cfg.test_path is None:
            raise ValueError("no test dataset (neither in-memory nor a path)")
        test = read_dataset(cfg.test_path)
    if cfg.codec.kind == QUANTIZE and stats is None:
        if cfg.stats_path is None:
            raise ValueError("quantize codec needs a stats file (FSTA)")
        stats = read_stats(cfg.stats_path)
    if cfg.codec.kind == AUTOENCODE and weights is None:
        if cfg.weights_path is None:
            raise ValueError("autoencode codec needs a weights file (FAEW)")
        weights = read_ae_weights(cfg.weights_path)
    return train, test, stats, weights


def run_experiment(
    cfg: ExperimentConfig,
    train: Dataset | None = None,
    test: Dataset | None = None,
    stats: CodebookStats | None = None,
    weights: AEWeights | None = None,
) -> list[ResultRow]:
    """Stream every task once, then retrain from memory and evaluate.

    One row per seed (plus one per intermediate task when per_task_eval is
    on, distinguished by a '#t<i>' suffix on the config id).
    """
    train, test, stats, weights = _load_inputs(cfg, train, test, stats, weights)

    sm = cfg.storage
    if cfg.codec.kind == AUTOENCODE:
        if weights.s_ae != sm.s_ae:
            sm = replace(sm, s_ae=weights.s_ae)
        n_h = bottleneck_spatial(train.shape)
    else:
        n_h = None
    n = train.n

    if cfg.slots is not None:
        capacity = cfg.slots
    else:
        capacity = max_slots(cfg.budget, cfg.codec, n, train.dtype, sm, n_h)
    bytes_total = total_storage(cfg.codec, n, train.dtype, sm, capacity, n_h)

    X_test, y_test = test.to_arrays()
    spatial = train.shape if len(train.shape) == 3 else None

    rows: list[ResultRow] = []
    for seed in cfg.seeds:
        started = time.perf_counter()
        if capacity == 0:
            rows.append(
                ResultRow(
                    cfg.config_id, cfg.codec.kind, cfg.codec.k_value, 0, bytes_total,
                    seed, None, 0.0, error="degenerate: zero slots fit the budget",
                )
            )
            continue

        codec = make_codec(cfg.codec, stats=stats, weights=weights)
        memory = EpisodicMemory(capacity, codec, seed=_derive_seed(seed, _EVICT_SEED_STREAM))
        stream = build_task_stream(train, cfg.classes_per_task, seed)

        seen: set[int] = set()
        for t, task in enumerate(stream.tasks):
            for idx in task.sample_indices:
                memory.offer(train.samples[idx])
            seen.update(task.classes)
            last = t == len(stream.tasks) - 1
            if not (last or cfg.per_task_eval):
                continue
            accuracy = _retrain_and_eval(cfg, memory, X_test, y_test, seen, seed, spatial)
            wall_ms = (time.perf_counter() - started) * 1000.0
            row_id = cfg.config_id if last else f"{cfg.config_id}#t{t}"
            rows.append(
                ResultRow(
                    row_id, cfg.codec.kind, cfg.codec.k_value, capacity, bytes_total,
                    seed, accuracy, wall_ms,
                )
            )
    return rows


def _retrain_and_eval(cfg, memory, X_test, y_test, seen, seed, spatial) -> float:
    dump = memory.dump()
    X, y = dump.to_arrays()
    head_kwargs = dict(cfg.head)
    head_kwargs.setdefault("spatial_shape", spatial)
    head = SGDRSoftmaxHead(seed=_derive_seed(seed, _HEAD_SEED_STREAM), **head_kwargs)
    head.fit(X, y)
    return evaluate_on_seen(head, X_test, y_test, seen)


# ---------------------------------------------------------------------------
# sweeps and reports

def sweep(
    grid: list[ExperimentConfig],
    datasets: dict[str, tuple[Dataset, Dataset]] | None = None,
) -> list[ResultRow]:
    """Run every grid cell; failures become error rows and the sweep continues."""
    if not grid:
        raise ValueError("empty experiment grid")
    rows: list[ResultRow] = []
    for cfg in grid:
        preloaded = (datasets or {}).get(cfg.config_id, (None, None))
        try:
            rows.extend(run_experiment(cfg, train=preloaded[0], test=preloaded[1]))
        except Exception as exc:  # noqa: BLE001 - a failed cell must not kill the sweep
            for seed in cfg.seeds:
                rows.append(
                    ResultRow(
                        cfg.config_id, cfg.codec.kind, cfg.codec.k_value,
                        cfg.slots or 0, 0, seed, None, 0.0,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
    rows.sort(key=lambda r: (r.config_id, r.seed))
    return rows


_X_AXES = {
    "bytes_total": lambda r: r.bytes_total,
    "N": lambda r: r.slots,
    "k": lambda r: r.k if r.k is not None else 0,
}


def emit_report(rows: list[ResultRow], destination, x_axis: str = "bytes_total") -> list[str]:
    """Write one mean series and one min/max band file per curve.

    Curves group rows by codec kind (plus the compression parameter unless
    the parameter itself is the x axis); within a curve, rows sharing an x
    value aggregate across seeds. Series files are two-column text
    ("x mean"), band files three-column ("x min max").
    """
    import os

    if not rows:
        raise ValueError("no rows to report")
    if x_axis not in _X_AXES:
        raise ValueError(f"x_axis must be one of {sorted(_X_AXES)}")
    take_x = _X_AXES[x_axis]
    os.makedirs(destination, exist_ok=True)

    curves: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        if not row.ok or row.accuracy is None:
            continue
        if x_axis == "k":
            name = row.codec
        else:
            name = row.codec if row.k is None else f"{row.codec}_k{_fmt_k(row.k)}"
        curves.setdefault(name, {}).setdefault(float(take_x(row)), []).append(row.accuracy)

    written = []
    for name, points in sorted(curves.items()):
        xs = sorted(points)
        mean_path = os.path.join(destination, f"{name}_mean.txt")
        band_path = os.path.join(destination, f"{name}_band.txt")
        with open(mean_path, "w") as fh:
            for x in xs:
                fh.write(f"{x:g} {np.mean(points[x]):.6f}\n")
        with open(band_path, "w") as fh:
            for x in xs:
                fh.write(f"{x:g} {min(points[x]):.6f} {max(points[x]):.6f}\n")
        written += [mean_path, band_path]
    return written
