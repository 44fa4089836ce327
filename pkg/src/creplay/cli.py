"""Command-line front end.

Subcommands: ingest (validate binary files), run (one experiment config),
sweep (a grid file of configs), report (CSV -> plot series), synth
(generate synthetic feature datasets).

Config files are flat key = value text parsed with configparser; a sweep
grid file holds one [section] per experiment cell (section name = config
id), with shared keys allowed in [DEFAULT]. Recognized keys:

    train, test            FTCH dataset paths (required)
    codec                  identity | quantize | thin | autoencode
    k_quant, k_thin, k_ae  the active codec's parameter
    budget | slots         byte budget or explicit slot count (exactly one)
    stats, weights         FSTA / FAEW paths where the codec needs them
    classes_per_task       stream granularity (default 2)
    seeds                  comma-separated ints (default 0,1,2)
    per_task_eval          true/false (default false)
    s_model                extra constant model bytes (default 0)
    head, hidden_width, batch_size, lr_max, lr_min, sgdr_t0, sgdr_tmult,
    cycles, mix_p, mix_alpha   head hyperparameters
"""

from __future__ import annotations

import argparse
import configparser
import sys

from .codecs import read_ae_weights, read_stats, write_stats
from .harness import (
    ExperimentConfig,
    emit_report,
    make_synthetic_features,
    ResultRow,
    rows_to_csv,
    run_experiment,
    sweep,
)
from .storage import CodecConfig, StorageModel
from .tensor_io import FormatError, read_dataset, write_dataset

_HEAD_KEYS = {
    "head": ("architecture", str),
    "hidden_width": ("hidden_width", int),
    "batch_size": ("batch_size", int),
    "lr_max": ("lr_max", float),
    "lr_min": ("lr_min", float),
    "sgdr_t0": ("sgdr_t0", int),
    "sgdr_tmult": ("sgdr_tmult", int),
    "cycles": ("cycles", int),
    "mix_p": ("mix_p", float),
    "mix_alpha": ("mix_alpha", float),
}


def parse_experiment_section(name: str, sec) -> ExperimentConfig:
    kind = sec.get("codec", "identity")
    codec = CodecConfig(
        kind,
        k_quant=int(sec["k_quant"]) if kind == "quantize" else None,
        k_thin=float(sec["k_thin"]) if kind == "thin" else None,
        k_ae=int(sec["k_ae"]) if kind == "autoencode" else None,
    )
    head = {}
    for key, (dest, cast) in _HEAD_KEYS.items():
        if key in sec:
            head[dest] = cast(sec[key])
    seeds = tuple(int(s) for s in sec.get("seeds", "0,1,2").split(","))
    return ExperimentConfig(
        config_id=sec.get("config_id", name),
        codec=codec,
        classes_per_task=int(sec.get("classes_per_task", "2")),
        budget=int(sec["budget"]) if "budget" in sec else None,
        slots=int(sec["slots"]) if "slots" in sec else None,
        seeds=seeds,
        storage=StorageModel(s_model=int(sec.get("s_model", "0"))),
        train_path=sec.get("train"),
        test_path=sec.get("test"),
        stats_path=sec.get("stats"),
        weights_path=sec.get("weights"),
        head=head,
        per_task_eval=sec.getboolean("per_task_eval", fallback=False),
    )


def load_config_file(path: str) -> list[ExperimentConfig]:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    configs = [parse_experiment_section(name, parser[name]) for name in parser.sections()]
    if not configs:
        raise ValueError(f"{path} defines no [section]; each experiment needs one")
    return configs


# ---------------------------------------------------------------------------
# subcommands

def _cmd_ingest(args) -> int:
    status = 0
    for path in args.files:
        try:
            with open(path, "rb") as fh:
                magic = fh.read(4)
            if magic == b"FTCH":
                ds = read_dataset(path)
                print(
                    f"{path}: ok ftch shape={ds.shape} dtype={ds.dtype} "
                    f"samples={len(ds)} classes={len(ds.class_ids)}"
                )
            elif magic == b"FSTA":
                st = read_stats(path)
                note = " (degenerate range)" if st.lo == st.hi else ""
                print(f"{path}: ok fsta lo={st.lo:g} hi={st.hi:g}{note}")
            elif magic == b"FAEW":
                w = read_ae_weights(path)
                print(f"{path}: ok faew k_ae={w.k_ae} s_ae={w.s_ae}")
            else:
                raise FormatError(f"magic: unrecognized {magic!r}")
        except (OSError, ValueError) as exc:
            print(f"{path}: INVALID - {exc}", file=sys.stderr)
            status = 1
    return status


def _finish(rows: list[ResultRow], out: str | None) -> int:
    csv = rows_to_csv(rows)
    if out:
        with open(out, "w") as fh:
            fh.write(csv)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        print(csv, end="")
    return 0 if all(r.ok for r in rows) else 1


def _cmd_run(args) -> int:
    configs = load_config_file(args.config)
    if len(configs) != 1:
        raise SystemExit("run expects a config file with exactly one [section]")
    return _finish(run_experiment(configs[0]), args.out)


def _cmd_sweep(args) -> int:
    return _finish(sweep(load_config_file(args.grid)), args.out)


def _cmd_report(args) -> int:
    rows = []
    with open(args.csv) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            rec = dict(zip(header, line.rstrip("\n").split(",")))
            rows.append(
                ResultRow(
                    config_id=rec["config_id"],
                    codec=rec["codec"],
                    k=float(rec["k"]) if rec["k"] else None,
                    slots=int(rec["N"]),
                    bytes_total=int(rec["bytes_total"]),
                    seed=int(rec["seed"]),
                    accuracy=float(rec["accuracy"]) if rec["accuracy"] else None,
                    wall_ms=float(rec["wall_ms"]),
                    error=rec.get("error", ""),
                )
            )
    written = emit_report(rows, args.out, x_axis=args.x_axis)
    for path in written:
        print(path)
    return 0


def _cmd_synth(args) -> int:
    shape = tuple(int(s) for s in args.shape.split(",")) if args.shape else None
    train, test, stats = make_synthetic_features(
        classes=args.classes,
        dim=args.dim,
        train_per_class=args.train_per_class,
        test_per_class=args.test_per_class,
        seed=args.seed,
        mean_scale=args.mean_scale,
        shape=shape,
    )
    write_dataset(train, args.out_train)
    write_dataset(test, args.out_test)
    print(f"wrote train={args.out_train} ({len(train)}) test={args.out_test} ({len(test)})")
    if args.out_stats:
        write_stats(stats, args.out_stats)
        print(f"wrote stats={args.out_stats} lo={stats.lo:g} hi={stats.hi:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="creplay",
        description="compressed-replay engine for class-incremental learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate FTCH/FSTA/FAEW files")
    p.add_argument("files", nargs="+")
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("run", help="run a single experiment config")
    p.add_argument("config")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run a config-grid file")
    p.add_argument("grid")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("report", help="turn a result CSV into plot series files")
    p.add_argument("csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--x-axis", default="bytes_total", choices=["bytes_total", "N", "k"])
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("synth", help="generate synthetic Gaussian feature datasets")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--train-per-class", type=int, default=1000)
    p.add_argument("--test-per-class", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean-scale", type=float, default=0.16)
    p.add_argument("--shape", help="optional C,H,W to emit spatial tensors")
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--out-stats")
    p.set_defaults(fn=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
