"""Dataset-gated qualitative check on real extracted image features.

Needs the CIFAR-10 binary batches on disk (point CIFAR10_DIR at the
directory holding data_batch_*.bin / test_batch.bin) and a built
featurizer; skips otherwise. At N=10000 slots, quantization at k=16 must
land within 3 accuracy points of the identity codec under the same head.
"""

import os
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from creplay.harness import ExperimentConfig, run_experiment
from creplay.storage import CodecConfig
from creplay.tensor_io import read_dataset

ROOT = Path(__file__).resolve().parent.parent
CLI_JS = ROOT / "featurizer" / "dist" / "cli.js"
CIFAR_DIR = os.environ.get("CIFAR10_DIR", str(ROOT / "data" / "cifar-10-batches-bin"))

pytestmark = pytest.mark.skipif(
    not CLI_JS.exists()
    or shutil.which("node") is None
    or not Path(CIFAR_DIR, "data_batch_1.bin").exists(),
    reason="needs a built featurizer and CIFAR-10 binaries (set CIFAR10_DIR)",
)


def featurizer(*args):
    subprocess.run(["node", str(CLI_JS), *args], check=True, timeout=7200)


@pytest.fixture(scope="module")
def extracted(tmp_path_factory):
    out = tmp_path_factory.mktemp("cifar")
    paths = {}
    for split, flag in [("train", "train"), ("test", "test")]:
        paths[split] = out / f"{split}.ftch"
        featurizer(
            "extract", "--input", CIFAR_DIR, "--cifar-split", flag,
            "--split", "conv3", "--weights", "random:0", "--out", str(paths[split]),
        )
    paths["stats"] = out / "range.fsta"
    featurizer("stats", "--input", str(paths["train"]), "--out", str(paths["stats"]))
    return paths


def test_quantized_within_three_points_of_identity(extracted):
    train = read_dataset(extracted["train"])
    test = read_dataset(extracted["test"])
    from creplay.codecs import read_stats

    stats = read_stats(extracted["stats"])
    accs = {}
    for name, codec in [
        ("identity", CodecConfig("identity")),
        ("quantize", CodecConfig("quantize", k_quant=16)),
    ]:
        cfg = ExperimentConfig(name, codec, slots=10000, seeds=(0,))
        rows = run_experiment(cfg, train=train, test=test, stats=stats)
        accs[name] = float(np.mean([r.accuracy for r in rows]))
    assert abs(accs["quantize"] - accs["identity"]) <= 0.03
