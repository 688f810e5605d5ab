"""Command-line entry point: `koopgait <subcommand>`.

Subcommands mirror the pipeline stages (gen-synthetic, segment,
train-coder, fit-k, classify, synth, flops) plus `run`, which chains them
into a reproducible end-to-end run.  Configuration comes from a named
profile, optionally overridden by a JSON config file and then by flags.
The KOOPGAIT_THREADS environment variable mirrors --threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import classify, coder, dataio, flops, koopman, pipeline, synth
from .exceptions import KoopgaitError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koopgait",
        description="Gait recognition via an invertible coupling autoencoder "
                    "and per-cycle Koopman operators.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="render a synthetic walker dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--cycles", type=int, default=6)
    p.add_argument("--period", type=int, default=12)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("segment", help="cut sequences into gait cycles")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cycle-len", type=int, default=12)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--use-minima", action="store_true",
                   help="segment on similarity minima instead of maxima")

    p = sub.add_parser("train-coder", help="train the shared coder and prototype")
    p.add_argument("--cycles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON config overrides")
    p.add_argument("--profile", default="paper", choices=sorted(pipeline.PROFILES))
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--size", type=int, default=None, help="frame width w")
    p.add_argument("--k-init", default=None, choices=["scaled", "paper"],
                   help="operator init: variance scaled by 1/w^2 (default) "
                        "or the literal mean 1 / variance 4")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("fit-k", help="fit one operator per cycle")
    p.add_argument("--coder", required=True)
    p.add_argument("--cycles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["gd", "analytic"], default="gd")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--prototype", default=None,
                   help="IKA1 operator to start from (default: the coder's)")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("classify", help="train/evaluate the operator classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--maps", default=None, help="directory for weight maps")
    p.add_argument("--reg-weight", type=float, default=200.0)
    p.add_argument("--max-iter", type=int, default=2000)

    p = sub.add_parser("synth", help="generate future/interpolated frames")
    p.add_argument("--coder", required=True)
    p.add_argument("--k", required=True, help="IKA1 operator file")
    p.add_argument("--frame", required=True, help="IKA1 or PGM/PNG start frame")
    p.add_argument("--steps", type=int, default=12)
    p.add_argument("--fractional", type=float, default=None,
                   help="also emit the frame at this fractional step r")
    p.add_argument("--out", required=True)

    p = sub.add_parser("flops", help="analytic cost report for a layer spec")
    p.add_argument("--spec", required=True,
                   help="JSON layer list, or a bundled name "
                        "(invka_default, gaitset_like)")
    p.add_argument("--out", required=True, help="report CSV path")

    p = sub.add_parser("run", help="full pipeline: segment, train, fit, classify")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="in_dir", help="directory of sequence dirs")
    src.add_argument("--synthetic", help="'default' or a SyntheticSpec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--profile", default="paper", choices=sorted(pipeline.PROFILES))
    p.add_argument("--config", default=None, help="JSON config overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["gd", "analytic"], default=None)
    p.add_argument("--use-minima", action="store_true")
    p.add_argument("--threads", type=int, default=None)

    return parser


def _threads(args) -> int:
    explicit = getattr(args, "threads", None)
    if explicit is not None:
        return explicit
    return int(os.environ.get("KOOPGAIT_THREADS", "0"))


def _load_frame(path: str) -> np.ndarray:
    if path.endswith(".ika1"):
        arr = dataio.load_tensor(path)
        if arr.ndim != 2:
            raise KoopgaitError(f"{path}: expected a 2-D frame tensor")
        return arr.astype(np.float64)
    return dataio.read_gray_image(path)


def _cmd_gen_synthetic(args) -> int:
    spec = dataio.SyntheticSpec(n_subjects=args.subjects,
                                cycles_per_subject=args.cycles,
                                period=args.period, w=args.size,
                                noise=args.noise, seed=args.seed)
    out = pipeline.stage_gen_synthetic(spec, args.out)
    print(f"wrote {args.subjects} sequences under {out}")
    return 0


def _cmd_segment(args) -> int:
    out = pipeline.stage_segment(args.in_dir, args.out, args.size,
                                 args.cycle_len, use_minima=args.use_minima)
    n = sum(1 for _ in Path(out).glob("cycle_*.ika1"))
    print(f"wrote {n} cycles under {out}")
    return 0


def _cmd_train_coder(args) -> int:
    cfg = pipeline.config_from_profile(
        args.profile, config_file=args.config, seed=args.seed,
        coder_epochs=args.epochs, coder_lr=args.lr, batch_size=args.batch_size,
        w=args.size, threads=_threads(args))
    if args.k_init == "paper":
        cfg.k_init = (1.0, 2.0)
    limit = pipeline.set_thread_limit(cfg.threads)
    try:
        out = pipeline.stage_train_coder(args.cycles, args.out, cfg)
    finally:
        if limit is not None:
            limit.unregister()
    print(f"coder checkpoint written to {out}")
    return 0


def _cmd_fit_k(args) -> int:
    prototype = dataio.load_tensor(args.prototype) if args.prototype else None
    limit = pipeline.set_thread_limit(_threads(args))
    try:
        out = pipeline.stage_fit_k(args.coder, args.cycles, args.out,
                                   method=args.method, lr=args.lr,
                                   epochs=args.epochs, prototype=prototype)
    finally:
        if limit is not None:
            limit.unregister()
    n = sum(1 for _ in Path(out).glob("k_*.ika1"))
    print(f"fitted {n} operators under {out}")
    return 0


def _cmd_classify(args) -> int:
    accuracy = pipeline.stage_classify(args.train, args.test, args.out,
                                       maps_dir=args.maps,
                                       reg_weight=args.reg_weight,
                                       max_iter=args.max_iter)
    print(f"rank-1 accuracy: {accuracy:.4f} (report: {args.out})")
    return 0


def _cmd_synth(args) -> int:
    model = coder.load_coder(args.coder)
    k = dataio.load_tensor(args.k).astype(np.float64)
    frame = _load_frame(args.frame)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = synth.generate_sequence(model, k, frame, args.steps)
    rows = []
    for i, generated in enumerate(frames, start=1):
        dataio.write_pgm(out / f"step_{i:03d}.pgm", generated)
        dataio.write_pgm(out / f"step_{i:03d}_median.pgm", synth.denoise(generated))
        report = synth.image_metrics(frame, generated)
        rows.append((f"step_{i:03d}", report.mse_sim, report.psnr, report.uqi))
    if args.fractional is not None:
        generated = synth.interpolate(model, k, frame, args.fractional)
        dataio.write_pgm(out / "fractional.pgm", generated)
        report = synth.image_metrics(frame, generated)
        rows.append(("fractional", report.mse_sim, report.psnr, report.uqi))
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "mse_sim", "psnr_db", "uqi"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} frames and metrics.csv under {out}")
    return 0


def _cmd_flops(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.exists():
        spec_path = flops.bundled_spec_path(args.spec)
    report = flops.model_cost(flops.load_layer_specs(spec_path))
    flops.save_cost_csv(report, args.out)
    gflops = report.total / 1e9
    print(f"total {report.total} FLOPs ({gflops:.4g} GFLOPs), "
          f"dense {report.dense_total}, conv {report.conv_total}, "
          f"FL Score {report.score:.3g}; report: {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = pipeline.config_from_profile(
        args.profile, config_file=args.config, seed=args.seed,
        fit_method=args.method, threads=_threads(args),
        use_minima=args.use_minima or None)
    synthetic = None
    data_dir = args.in_dir
    if args.synthetic is not None:
        if args.synthetic == "default":
            synthetic = dataio.SyntheticSpec(w=cfg.w, seed=cfg.seed,
                                             **pipeline.DEFAULT_SYNTHETIC)
        else:
            raw = json.loads(Path(args.synthetic).read_text())
            raw.setdefault("w", cfg.w)
            raw.setdefault("seed", cfg.seed)
            synthetic = dataio.SyntheticSpec(**raw)
    result = pipeline.run_pipeline(cfg, args.out, data_dir=data_dir,
                                   synthetic=synthetic)
    print(f"run complete: rank-1 accuracy {result.accuracy:.4f} "
          f"({result.n_train} train / {result.n_test} test cycles); "
          f"artifacts under {result.run_dir}")
    return 0


_COMMANDS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "segment": _cmd_segment,
    "train-coder": _cmd_train_coder,
    "fit-k": _cmd_fit_k,
    "classify": _cmd_classify,
    "synth": _cmd_synth,
    "flops": _cmd_flops,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except KoopgaitError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
