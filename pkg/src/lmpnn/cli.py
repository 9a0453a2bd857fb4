"""Command-line interface: ``lmpnn <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(parser):
    parser.add_argument("--config", help="JSON file with optional 'model' and 'train' sections")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--cutoff", type=float, help="graph cutoff in angstrom (default 4.0)")
    parser.add_argument("--target", help="regression target, e.g. u0 or homo (default u0)")
    parser.add_argument("--out", help="output file or directory")
    parser.add_argument("--single-threaded", action="store_true",
                        help="pin numeric libraries to one thread for bitwise reproducibility")


def _data_args(parser):
    parser.add_argument("data", nargs="?",
                        help="QM9 directory of .xyz files or tar archive (default: $LMPNN_DATA_DIR)")
    parser.add_argument("--limit", type=int, help="use only the first N molecules")
    parser.add_argument("--exclude", help="file of QM9 indices to skip")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lmpnn", description="Legendre message-passing network for molecular properties.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")

    s = sub.add_parser("stats", help="pair-distance statistics of a dataset (JSON)")
    _data_args(s)
    s.add_argument("--cutoffs", default="4.0,5.0,10.0", help="comma-separated radii (default 4.0,5.0,10.0)")
    _common(s)

    s = sub.add_parser("featurize", help="write graphs and basis expansions")
    _data_args(s)
    s.add_argument("--format", choices=("json", "binary"), default="json")
    _common(s)

    s = sub.add_parser("train", help="train a model and write log, summary and checkpoints to --out")
    _data_args(s)
    s.add_argument("--trajectory", help="MD trajectory file; trains energy-only with MD defaults")
    s.add_argument("--epochs", type=int, help="maximum number of epochs")
    _common(s)

    s = sub.add_parser("eval", help="MAE of a checkpoint on a dataset (JSON)")
    _data_args(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--trajectory", help="MD trajectory file; also reports force MAE")
    s.add_argument("--split", help="split.json from a training run; evaluates its test ids")
    _common(s)

    s = sub.add_parser("gamma-report", help="gamma-ratio series as a table and an SVG chart")
    s.add_argument("log", help="training run directory, summary.json or log.jsonl")
    _common(s)

    s = sub.add_parser("gradcheck", help="finite-difference audit on a random small molecule")
    s.add_argument("--atoms", type=int, default=4, help="atoms in the random molecule (default 4)")
    s.add_argument("--samples", type=int, default=3, help="entries audited per parameter tensor; 0 = all")
    s.add_argument("--tol", type=float, default=1e-4, help="relative-error tolerance (default 1e-4)")
    _common(s)

    s = sub.add_parser("describe", help="parameter census and gamma registry (JSON)")
    s.add_argument("--checkpoint", help="describe a trained checkpoint instead of a fresh init")
    _common(s)
    return p


# ----------------------------------------------------------------- helpers


def _load_config(args):
    from .model import ModelConfig
    from .trainer import TrainConfig

    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        unknown = set(raw) - {"model", "train"}
        if unknown:
            raise UsageError(f"config file {path}: unknown sections {sorted(unknown)}")
    model, train = dict(raw.get("model", {})), dict(raw.get("train", {}))
    if getattr(args, "trajectory", None):
        model.setdefault("dropout", 0.33)
        train = {**dict(target="energy", decay_factor=0.9, standardize="zscore"), **train}
    if args.cutoff is not None:
        model["cutoff"] = args.cutoff
    if args.seed is not None:
        train["seed"] = args.seed
    if args.target is not None:
        train["target"] = args.target
    if getattr(args, "epochs", None) is not None:
        train["max_epochs"] = args.epochs
    if "split" in train:
        train["split"] = tuple(train["split"])
    for cls, section in ((ModelConfig, model), (TrainConfig, train)):
        names = {f.name for f in fields(cls)}
        bad = set(section) - names
        if bad:
            raise UsageError(f"unknown {cls.__name__} keys: {sorted(bad)}")
    try:
        return ModelConfig(**model), TrainConfig(**train)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _data_source(args) -> Path:
    src = args.data or os.environ.get("LMPNN_DATA_DIR")
    if not src:
        raise UsageError("no dataset given and LMPNN_DATA_DIR is not set")
    path = Path(src)
    if not path.exists():
        raise DataError(f"dataset not found: {path}")
    return path


def _load_molecules(args):
    from .io import load_exclusions, load_qm9

    exclude = load_exclusions(args.exclude) if args.exclude else None
    mols = load_qm9(_data_source(args), limit=args.limit, exclude=exclude)
    if not mols:
        raise DataError("dataset contains no molecules")
    return mols


def _load_trajectory(path):
    from .io import parse_trajectory

    path = Path(path)
    if not path.is_file():
        raise DataError(f"trajectory not found: {path}")
    return parse_trajectory(path.read_text(encoding="utf-8"), prefix=path.stem)


def _emit(args, payload) -> None:
    text = json.dumps(payload, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


# ---------------------------------------------------------------- commands


def cmd_stats(args) -> int:
    from .graph import geometry_stats

    try:
        cutoffs = [float(c) for c in args.cutoffs.split(",") if c.strip()]
    except ValueError:
        raise UsageError(f"--cutoffs must be comma-separated numbers, got {args.cutoffs!r}") from None
    if not cutoffs:
        raise UsageError("--cutoffs is empty")
    stats = geometry_stats(_load_molecules(args), sorted(cutoffs))
    _emit(args, stats.to_dict())
    return 0


def cmd_featurize(args) -> int:
    from .featurize import graph_arrays, write_binary, write_json
    from .graph import build_graph

    model_cfg, _ = _load_config(args)
    if not args.out:
        raise UsageError("featurize needs --out <file>")
    records = []
    for mol in _load_molecules(args):
        arrays = graph_arrays(build_graph(mol, model_cfg.cutoff), model_cfg.radial, model_cfg.angular)
        if args.format == "json":
            arrays["targets"] = mol.targets
        records.append((mol.id, arrays))
    n = (write_json if args.format == "json" else write_binary)(args.out, records)
    print(json.dumps({"records": n, "format": args.format, "out": args.out}))
    return 0


def cmd_train(args) -> int:
    from .trainer import md_energy_training, train

    model_cfg, train_cfg = _load_config(args)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    if args.trajectory:
        frames = _load_trajectory(args.trajectory)
        trainer, log, split = md_energy_training(frames, model_cfg, train_cfg, out)
    else:
        trainer, log, split = train(_load_molecules(args), model_cfg, train_cfg, out)
    split_doc = {"seed": split.seed, "train": list(split.train_ids), "valid": list(split.valid_ids),
                 "test": list(split.test_ids)}
    (out / "split.json").write_text(json.dumps(split_doc))
    last = log.records[-1]
    print(json.dumps({"out": str(out), "epochs": last["epoch"], "stop_reason": log.stop_reason,
                      "best_epoch": log.best_epoch, "best_valid_mae": log.best_valid_mae,
                      "gamma_ratio": log.gamma_ratio}, indent=1))
    return 0


def cmd_eval(args) -> int:
    from .trainer import evaluate, evaluate_md

    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise DataError(f"checkpoint not found: {ckpt}")
    if args.trajectory:
        mols = _load_trajectory(args.trajectory)
    else:
        mols = _load_molecules(args)
    if args.split:
        keep = set(json.loads(Path(args.split).read_text())["test"])
        mols = [m for m in mols if m.id in keep]
        if not mols:
            raise DataError("none of the split's test ids are in the dataset")
    report = evaluate_md(ckpt, mols) if args.trajectory else evaluate(ckpt, mols, args.target)
    _emit(args, report)
    return 0


def render_gamma_svg(series, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    xs = [s["epoch"] for s in series]
    ys = [s["ratio"] if s["ratio"] is not None else float("nan") for s in series]
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("sum gamma (single) / sum gamma (output)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_gamma_report(args) -> int:
    from .trainer import read_log

    src = Path(args.log)
    if not src.exists():
        raise DataError(f"training log not found: {src}")
    try:
        log = read_log(src)
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read training log {src}: {exc}") from None
    print(f"{'epoch':>6}  {'ratio':>10}")
    for s in log.gamma_ratio:
        ratio = "undefined" if s["ratio"] is None else f"{s['ratio']:.6f}"
        print(f"{s['epoch']:>6}  {ratio:>10}")
    svg = Path(args.out) if args.out else (src if src.is_dir() else src.parent) / "gamma_ratio.svg"
    render_gamma_svg(log.gamma_ratio, svg)
    print(f"wrote {svg}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import check_model, random_molecule

    model_cfg, _ = _load_config(args)
    if not 2 <= args.atoms <= 8:
        raise UsageError("--atoms must be between 2 and 8")
    seed = args.seed or 0
    report = check_model(random_molecule(args.atoms, seed), model_cfg, seed, samples_per_tensor=args.samples)
    payload = report.to_dict()
    payload["passed"] = report.passed(args.tol)
    _emit(args, payload)
    return 0 if payload["passed"] else EXIT_NUMERIC


def cmd_describe(args) -> int:
    from .model import describe, init_params

    if args.checkpoint:
        from .trainer import load_trainer

        if not Path(args.checkpoint).is_file():
            raise DataError(f"checkpoint not found: {args.checkpoint}")
        trainer = load_trainer(args.checkpoint)
        cfg, params = trainer.model_config, trainer.params
    else:
        cfg, _ = _load_config(args)
        params = init_params(cfg, args.seed or 0)
    out = describe(params)
    out["config"] = cfg.to_dict()
    _emit(args, out)
    return 0


COMMANDS = {
    "stats": cmd_stats,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "gamma-report": cmd_gamma_report,
    "gradcheck": cmd_gradcheck,
    "describe": cmd_describe,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        if args.single_threaded:
            for var in THREAD_VARS:
                os.environ[var] = "1"
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        return _classify(exc)


def _classify(exc) -> int:
    from .graph import DegenerateGeometryError
    from .io import ParseError
    from .trainer import NonFiniteLossError

    if isinstance(exc, NonFiniteLossError):
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, ParseError, DegenerateGeometryError, FileNotFoundError, KeyError)):
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    raise exc


def main() -> None:
    # thread limits only take effect if set before numpy loads its BLAS
    if "--single-threaded" in sys.argv:
        for var in THREAD_VARS:
            os.environ[var] = "1"
    sys.exit(run())


if __name__ == "__main__":
    main()
