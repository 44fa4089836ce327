"""Acceptance suite: structural exactness laws plus trend reproduction.

Each criterion prints one [PASS]/[FAIL] line (run with -s to see them all)
and asserts at its stated tolerance. The trend criteria run the full
pipeline on the in-repo synthetic feature generator.
"""

import io
import time

import numpy as np
import pytest

from creplay.codecs import (
    CodebookStats,
    build_codebook,
    dequantize,
    make_codec,
    quantize,
    thin,
)
from creplay.harness import ExperimentConfig, make_synthetic_features, run_experiment
from creplay.head import init_params, loss_and_grads
from creplay.memory import EpisodicMemory
from creplay.storage import CodecConfig, StorageModel, max_slots, total_storage
from creplay.tensor_io import F32, U8, TensorSample

from helpers import (
    brute_force_best_mask,
    draw_smooth_batch,
    finite_difference_grads,
    random_ae_weights,
    relative_group_error,
)


def check(name, ok):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    assert ok, name


def fsample(label, n, rng, dtype=F32, shape=None):
    if dtype == U8:
        data = rng.integers(0, 256, size=n).astype(np.uint8)
    else:
        data = rng.normal(0, 2, size=n).astype(np.float32)
    return TensorSample(shape or (n,), dtype, data, label)


# ---------------------------------------------------------------------------
# structural laws

def test_storage_law_exactness():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    sm_default = StorageModel()
    checked = 0
    for trial in range(200):
        kind = ["identity", "quantize", "thin", "autoencode"][trial % 4]
        capacity = int(rng.integers(1, 17))
        classes = int(rng.integers(1, 5))
        if kind == "autoencode":
            c = int(rng.integers(1, 4))
            h = int(rng.choice([4, 8]))
            w = int(rng.choice([4, 8]))
            shape, n, dtype = (c, h, w), c * h * w, F32
            weights = random_ae_weights(
                in_channels=c, hidden=int(rng.integers(2, 5)),
                k_ae=int(rng.integers(1, 5)), seed=trial,
            )
            cfg = CodecConfig("autoencode", k_ae=weights.k_ae)
            sm = StorageModel(s_ae=weights.s_ae)
            codec = make_codec(cfg, weights=weights)
            n_h = (h // 4) * (w // 4)
        else:
            n = int(rng.integers(1, 513))
            dtype = F32 if rng.random() < 0.5 else U8
            shape, n_h, sm = (n,), None, sm_default
            if kind == "identity":
                cfg = CodecConfig("identity")
            elif kind == "quantize":
                cfg = CodecConfig("quantize", k_quant=int(rng.integers(2, 64)))
            else:
                hi = 1.0 - 1.0 / n if n > 1 else 0.0
                cfg = CodecConfig("thin", k_thin=float(rng.uniform(0, hi)))
            codec = make_codec(cfg, stats=CodebookStats(-4.0, 4.0))
        mem = EpisodicMemory(capacity, codec, seed=trial)
        i = 0
        while len(mem) < capacity:
            mem.offer(fsample(i % classes, n, rng, dtype, shape))
            i += 1
        serialized = sum(len(e.serialize()) for e in mem.slots)
        overhead = codec.overhead(dtype, sm)
        expected = total_storage(cfg, n, dtype, sm, capacity, n_h)
        if sm.s_model + overhead + serialized != expected:
            check(f"storage law broken for {cfg} n={n} dtype={dtype} N={capacity}", False)
        assert mem.storage_bytes(sm) == expected
        checked += 1
    elapsed = time.perf_counter() - started
    check(f"storage-law exactness on {checked} random configurations ({elapsed:.1f}s)",
          checked == 200 and elapsed < 10.0)


def test_table_spot_values():
    sm = StorageModel()
    quant = total_storage(CodecConfig("quantize", k_quant=16), 512, F32, sm, slots=100)
    thin_cost = total_storage(CodecConfig("thin", k_thin=0.95), 512, F32, sm, slots=1) \
        - total_storage(CodecConfig("thin", k_thin=0.95), 512, F32, sm, slots=0)
    raw_slots = max_slots(4 * 1024 * 1024, CodecConfig("identity"), 3072, U8, sm)
    check(
        f"spot values: quantize={quant} (want 25664), thin/exemplar={thin_cost} "
        f"(want 156), raw-image slots={raw_slots} (want 1365)",
        quant == 25664 and thin_cost == 156 and raw_slots == 1365,
    )


def test_quantization_round_trip():
    rng = np.random.default_rng(20240817)
    total, worst = 0, 0.0
    idempotent = True
    for trial in range(5):
        lo = float(rng.uniform(-8, 0))
        hi = float(rng.uniform(0.5, 9))
        k = int(rng.integers(2, 64))
        cb = build_codebook((lo, hi), k)
        vals = np.clip(
            rng.uniform(lo, hi, size=20000).astype(np.float32),
            np.float32(lo), np.float32(hi),
        )
        s = TensorSample((vals.size,), F32, vals, 0)
        once = quantize(s, cb)
        back = dequantize(once, cb)
        err = np.abs(back.data.astype(np.float64) - vals.astype(np.float64))
        worst = max(worst, float(err.max() / (cb.width / 2)))
        if (err > cb.width / 2).any():
            check(f"quantization round-trip error within width/2 (trial {trial})", False)
        if quantize(back, cb).packed != once.packed:
            idempotent = False
        total += vals.size
    check(
        f"quantization round-trip: {total} values within width/2 "
        f"(worst ratio {worst:.6f}); idempotence bit-exact",
        total == 100000 and worst <= 1.0 and idempotent,
    )


def test_thinning_optimality():
    rng = np.random.default_rng(55)
    for trial in range(500):
        n = int(rng.integers(2, 13))
        if trial % 2:
            data = rng.integers(-3, 4, size=n).astype(np.float32)
        else:
            data = rng.normal(0, 2, size=n).astype(np.float32)
        k = float(rng.uniform(0, 0.9))
        e = thin(TensorSample((n,), F32, data, 0), k)
        expected = brute_force_best_mask(data, e.indices.size)
        if tuple(e.indices) != expected:
            check(f"thinning optimality trial {trial}: {tuple(e.indices)} != {expected}", False)
    check("thinning optimality: 500/500 brute-force mask matches (n <= 12)", True)


def test_balancer():
    rng = np.random.default_rng(77)
    for trial in range(100):
        capacity = int(rng.integers(1, 65))
        classes = int(rng.integers(1, 11))
        quota = -(-capacity // classes)
        stream = []
        for c in range(classes):
            stream += [c] * (quota + int(rng.integers(0, 4)))
        rng.shuffle(stream)
        data_seed = np.random.default_rng(trial)

        def run_once():
            mem = EpisodicMemory(capacity, make_codec(CodecConfig("identity")), seed=trial)
            gen = np.random.default_rng(trial + 1)
            for label in stream:
                mem.offer(fsample(label, 4, gen))
                if len(mem) > capacity:
                    check(f"balancer trial {trial}: capacity exceeded", False)
            buf = io.BytesIO()
            mem.save_snapshot(buf)
            return mem, buf.getvalue()

        mem, blob1 = run_once()
        _, blob2 = run_once()
        counts = [mem.class_counts.get(c, 0) for c in range(classes)]
        if max(counts) - min(counts) > 1:
            check(f"balancer trial {trial}: spread {counts}", False)
        if blob1 != blob2:
            check(f"balancer trial {trial}: nondeterministic", False)
    check("balancer: 100 random streams balanced (max-min <= 1), capped, deterministic", True)


def test_gradient_check():
    started = time.perf_counter()
    rng = np.random.default_rng(33)
    worst = 0.0
    for trial in range(50):
        arch = "linear" if trial % 2 == 0 else "mlp"
        d = int(rng.integers(2, 9))
        h = int(rng.integers(2, 7))
        c = int(rng.integers(2, 6))
        params = init_params(arch, d, h, c, seed=trial)
        X = draw_smooth_batch(params, d, rng)
        y_a = rng.integers(0, c, size=5)
        y_b = rng.integers(0, c, size=5)
        lam = float(rng.uniform())
        _, analytic = loss_and_grads(params, X, y_a, y_b, lam)
        numeric = finite_difference_grads(params, X, y_a, y_b, lam, eps=1e-3)
        worst = max(worst, relative_group_error(analytic, numeric))
    elapsed = time.perf_counter() - started
    check(
        f"gradient check: 50 shapes, worst relative error {worst:.2e} "
        f"< 1e-4 ({elapsed:.1f}s)",
        worst < 1e-4 and elapsed < 30.0,
    )


# ---------------------------------------------------------------------------
# trend reproduction on synthetic features

@pytest.fixture(scope="module")
def synthetic():
    return make_synthetic_features(seed=0)


def _mean_acc(rows):
    return float(np.mean([r.accuracy for r in rows]))


def _run(synthetic, codec, label, slots=None, budget=None):
    train, test, stats = synthetic
    cfg = ExperimentConfig(label, codec, slots=slots, budget=budget, seeds=(0, 1, 2))
    return run_experiment(cfg, train=train, test=test, stats=stats)


def test_trend_a_accuracy_increases_with_slots(synthetic):
    started = time.perf_counter()
    means = [
        _mean_acc(_run(synthetic, CodecConfig("identity"), f"id{n}", slots=n))
        for n in (10, 100, 1000)
    ]
    elapsed = time.perf_counter() - started
    check(
        f"trend A: identity accuracy strictly increasing over N in 10/100/1000 "
        f"({means[0]:.3f} < {means[1]:.3f} < {means[2]:.3f}, {elapsed:.0f}s)",
        means[0] < means[1] < means[2] and elapsed < 300.0,
    )


def test_trend_b_quantization_approaches_identity(synthetic):
    identity = _mean_acc(_run(synthetic, CodecConfig("identity"), "id1000", slots=1000))
    by_k = {
        k: _mean_acc(
            _run(synthetic, CodecConfig("quantize", k_quant=k), f"q{k}", slots=1000)
        )
        for k in (2, 8, 16)
    }
    check(
        f"trend B: at N=1000 quantize k16 ({by_k[16]:.3f}) within 2 points of "
        f"identity ({identity:.3f}); k2 ({by_k[2]:.3f}) below k16",
        abs(by_k[16] - identity) <= 0.02 and by_k[2] < by_k[16],
    )


def test_trend_c_quantization_wins_fixed_budget(synthetic):
    budget = 64 * 1024
    identity = _mean_acc(_run(synthetic, CodecConfig("identity"), "idB", budget=budget))
    quantized = _mean_acc(
        _run(synthetic, CodecConfig("quantize", k_quant=16), "q16B", budget=budget)
    )
    check(
        f"trend C: fixed 64 KiB budget, quantize k16 ({quantized:.3f}) >= "
        f"identity ({identity:.3f})",
        quantized >= identity,
    )
