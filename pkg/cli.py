#!/usr/bin/env python3
"""spectralseq command-line interface

Generates PDE datasets, trains and evaluates the sequence models, and runs
the noise-robustness benchmark once the package is installed
(``pip install .``).

Examples
--------
Generate a desk-scale wave dataset::

    spectralseq generate --case wave --sims 120 --grid 64 --seed 0

Train an F-RNN on it::

    spectralseq train --arch frnn --case wave --dataset data/wave_g64_n120_s0.frnn --subsample 2

Evaluate a checkpoint at noise level N = 0.1::

    spectralseq eval --checkpoint runs/train/model.ckpt --dataset data/wave_g64_n120_s0.frnn --noise 0.1

Full noise sweep on the wave case::

    spectralseq benchmark --case wave --arch crnn fno frnn --profile desk

Each sub-command has ``-h`` for detailed help, e.g. ``spectralseq train -h``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import textwrap
from pathlib import Path
from typing import Sequence

from spectralseq import DivergenceError
from spectralseq.bench import cmd_benchmark, cmd_eval, cmd_generate, cmd_train, format_report, write_manifest
from spectralseq.config import PROFILES, BenchmarkSpec, default_dataset_path, resolve
from spectralseq.training import TrainConfig

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

# ---------------------------------------------------------------------------
#                           Utility helpers
# ---------------------------------------------------------------------------

def _resolved(args: argparse.Namespace, keys: Sequence[str]) -> dict:
    """Defaults < profile < --config file < the flags in *keys* that were given."""
    overrides = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "arch", None) and isinstance(args.arch, list):
        overrides["archs"] = args.arch
        overrides.pop("arch", None)
    if isinstance(getattr(args, "noise", None), list):
        overrides["noise_levels"] = args.noise
        overrides.pop("noise", None)
    resolved = resolve(args.profile, args.config, overrides)
    if args.sims is not None:
        if getattr(args, "n_test", None) is None:
            ratio = resolved["n_test"] / (resolved["n_train"] + resolved["n_test"])
            resolved["n_test"] = max(1, round(args.sims * ratio))
        resolved["n_train"] = args.sims - resolved["n_test"]
        resolved["n_sims"] = args.sims
    return resolved


def _dataset_path(resolved: dict) -> Path:
    if resolved.get("dataset"):
        return Path(resolved["dataset"])
    return default_dataset_path(resolved["case"], resolved["grid"], resolved["n_sims"], resolved["seed"])


def _train_config(resolved: dict) -> TrainConfig:
    return TrainConfig(
        epochs=resolved["epochs"], lr=resolved["lr"], gamma=resolved["gamma"], step_size=resolved["step_size"],
        batch_size=resolved["batch_size"], seed=resolved["seed"], precision=resolved["precision"],
        teacher_forcing=resolved["teacher_forcing"], noise=resolved.get("noise") or 0.0,
        resample_noise=resolved["resample_noise"], normalization=resolved["normalization"],
        checkpoint_every=resolved["checkpoint_every"],
    )


# ---------------------------------------------------------------------------
#                         Command implementations
# ---------------------------------------------------------------------------

def _cmd_generate(args: argparse.Namespace) -> None:
    r = _resolved(args, ["case", "grid", "seed", "dataset", "workers"])
    path, summary = cmd_generate(r["case"], r["n_sims"], r["grid"], r["seed"], _dataset_path(r), workers=r["workers"])
    write_manifest(args.out, "generate", dict(r, dataset=str(path)))
    print(f"Wrote {summary['path']}")
    print(f"sims: {summary['sims']}  |  frames: {summary['frames']}  |  grid: {summary['grid'][0]}x{summary['grid'][1]}"
          f"  |  min: {summary['min']:.6g}  |  max: {summary['max']:.6g}")


def _cmd_train(args: argparse.Namespace) -> None:
    keys = ["case", "arch", "grid", "seed", "epochs", "lr", "batch_size", "width", "modes", "subsample",
            "dataset", "noise", "teacher_forcing", "resample_noise", "checkpoint_every", "precision", "n_test"]
    r = _resolved(args, keys)
    r.setdefault("arch", "frnn")
    write_manifest(args.out, "train", dict(r, resume=args.resume))
    result = cmd_train(r["arch"], _dataset_path(r), _train_config(r), args.out, case=r["case"],
                       width=r["width"], modes=r["modes"], n_train=r["n_train"], n_test=r["n_test"],
                       subsample=r["subsample"], resume=args.resume)
    print(f"Checkpoint: {result['checkpoint']}  |  params: {result['params']}")
    print(f"Epochs {result['epochs'][0]}..{result['epochs'][-1]}  |  train loss: {result['final_train_loss']:.6e}"
          f"  |  test MSE: {result['final_test_mse']:.6e}")


def _cmd_eval(args: argparse.Namespace) -> None:
    r = _resolved(args, ["case", "grid", "seed", "subsample", "dataset", "n_test"])
    plot = Path(args.out) / "snapshots.svg" if args.plot else None
    write_manifest(args.out, "eval", dict(r, checkpoint=args.checkpoint, noise=args.noise))
    report = cmd_eval(args.checkpoint, _dataset_path(r), noise_N=args.noise, n_test=r["n_test"],
                      subsample=r["subsample"], seed=r["seed"], plot_path=plot)
    text = format_report(report)
    (Path(args.out) / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (Path(args.out) / "report.txt").write_text(text + "\n")
    print(text)


def _cmd_benchmark(args: argparse.Namespace) -> None:
    keys = ["case", "arch", "noise", "grid", "seed", "epochs", "width", "modes", "batch_size", "subsample",
            "parallel", "dataset", "train_with_noise", "precision", "workers", "n_test"]
    r = _resolved(args, keys)
    spec = BenchmarkSpec.from_resolved(r)
    write_manifest(args.out, "benchmark", dict(r, **spec.to_dict()))
    result = cmd_benchmark(spec, args.out)
    print(f"{'arch':<8}{'N':>8}{'MSE':>16}{'params':>12}")
    for row in result["rows"]:
        print(f"{row['arch']:<8}{row['N']:>8g}{row['mse']:>16.6e}{row['params']:>12}")
    print(f"Results written to {result['out']}")


# ---------------------------------------------------------------------------
#                                 Main
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, command: str) -> None:
    p.add_argument("--case", choices=["wave", "ns_laminar", "ns_turbulent"], help="Benchmark problem.")
    p.add_argument("--profile", choices=sorted(PROFILES), help="Scale preset (default desk).")
    p.add_argument("--config", help="JSON file with option values (overridden by flags).")
    p.add_argument("--seed", type=int, help="Random seed.")
    p.add_argument("--grid", type=int, help="Generation grid size per axis.")
    p.add_argument("--sims", type=int, help="Total simulations (train + test).")
    p.add_argument("--dataset", help="Dataset file (default under $SPECTRALSEQ_DATA_DIR).")
    p.add_argument("--out", default=f"runs/{command}", help=f"Run directory (default runs/{command}).")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for solver detail.")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spectralseq",
        description="Fourier-layer sequence models for gridded PDE data: generate, train, eval, benchmark.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=textwrap.dedent(
            """\
            Examples:
              spectralseq generate --case wave --sims 120 --grid 64
              spectralseq train --arch fno --case wave --epochs 200 --subsample 2
              spectralseq eval --checkpoint runs/train/model.ckpt --noise 0.25
              spectralseq benchmark --case wave --arch fno frnn --noise 0 0.05 0.1 0.25
            """
        ),
    )
    sub = p.add_subparsers(dest="command", required=True)

    # ---------------- Dataset generation ----------------
    pg = sub.add_parser("generate", help="Simulate a PDE dataset")
    _common(pg, "generate")
    pg.add_argument("--workers", type=int, help="Processes used to run simulations.")
    pg.set_defaults(func=_cmd_generate)

    # ---------------- Training ----------------
    pt = sub.add_parser("train", help="Train one model")
    _common(pt, "train")
    pt.add_argument("--arch", choices=["fno", "fno2d", "frnn", "rnn", "crnn"], help="Architecture (default frnn).")
    pt.add_argument("--epochs", type=int, help="Training epochs.")
    pt.add_argument("--lr", type=float, help="Initial learning rate.")
    pt.add_argument("--batch-size", dest="batch_size", type=int, help="Mini-batch size.")
    pt.add_argument("--width", type=int, help="Layer width / hidden channels.")
    pt.add_argument("--modes", type=int, help="Retained Fourier modes per axis.")
    pt.add_argument("--subsample", type=int, help="Keep every s-th grid point of the dataset.")
    pt.add_argument("--n-test", dest="n_test", type=int, help="Held-out simulations.")
    pt.add_argument("--noise", type=float, help="Noise variance added to normalized training data.")
    pt.add_argument("--teacher-forcing", dest="teacher_forcing", action="store_true", default=None,
                    help="Feed ground-truth frames back during training rollouts.")
    pt.add_argument("--resample-noise", dest="resample_noise", action="store_true", default=None,
                    help="Draw fresh training noise every epoch.")
    pt.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, help="Checkpoint period in epochs.")
    pt.add_argument("--precision", choices=["float32", "float64"], help="Training precision.")
    pt.add_argument("--resume", help="Continue from this checkpoint.")
    pt.set_defaults(func=_cmd_train)

    # ---------------- Evaluation ----------------
    pe = sub.add_parser("eval", help="Evaluate a checkpoint at one noise level")
    _common(pe, "eval")
    pe.add_argument("--checkpoint", required=True, help="Checkpoint written by 'train'.")
    pe.add_argument("--noise", type=float, default=0.0, help="Noise variance N added to test inputs.")
    pe.add_argument("--subsample", type=int, help="Keep every s-th grid point of the dataset.")
    pe.add_argument("--n-test", dest="n_test", type=int, help="Held-out simulations (the last ones).")
    pe.add_argument("--plot", action="store_true", help="Also write snapshots.svg.")
    pe.set_defaults(func=_cmd_eval)

    # ---------------- Benchmark ----------------
    pb = sub.add_parser("benchmark", help="Noise sweep over architectures")
    _common(pb, "benchmark")
    pb.add_argument("--arch", nargs="+", choices=["fno", "fno2d", "frnn", "rnn", "crnn"], help="Architectures.")
    pb.add_argument("--noise", nargs="+", type=float, help="Noise levels (default 0 0.05 0.1 0.25).")
    pb.add_argument("--epochs", type=int, help="Training epochs per model.")
    pb.add_argument("--width", type=int, help="Layer width / hidden channels.")
    pb.add_argument("--modes", type=int, help="Retained Fourier modes per axis.")
    pb.add_argument("--batch-size", dest="batch_size", type=int, help="Mini-batch size.")
    pb.add_argument("--subsample", type=int, help="Keep every s-th grid point of the dataset.")
    pb.add_argument("--n-test", dest="n_test", type=int, help="Held-out simulations.")
    pb.add_argument("--parallel", type=int, help="Benchmark cells run concurrently.")
    pb.add_argument("--workers", type=int, help="Processes used if the dataset must be generated.")
    pb.add_argument("--precision", choices=["float32", "float64"], help="Training precision.")
    pb.add_argument("--train-with-noise", dest="train_with_noise", action="store_true", default=None,
                    help="Retrain every model at each noise level.")
    pb.set_defaults(func=_cmd_benchmark)

    return p


def main(argv: Sequence[str] | None = None) -> None:  # entry point for ``console_scripts``
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=LOG_LEVELS[min(args.verbose, 2)], format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        args.func(args)
    except DivergenceError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(2)
    except Exception as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":  # pragma: no cover
    main()
