"""Command-line entry point: ``hspa <subcommand> ...``.

Exit codes: 0 success, 1 a property check failed, 2 usage or parse error.
Relative output paths resolve against ``--output-dir``, whose default comes
from the ``HSPA_OUTPUT_DIR`` environment variable (else the working dir).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from hspa import bench, diagnostics, gradcheck
from hspa.attention import MODES, AttentionConfig
from hspa.simplex_ops import DEFAULT_TOPK, soft_threshold_exact, soft_threshold_topk
from hspa.sr import corpus
from hspa.sr.image import Image, NetpbmError, load_image, save_image
from hspa.sr.quality import psnr, ssim
from hspa.sr.reconstruct import DEFAULT_BANDWIDTH, PatchConfig, reconstruct_detailed
from hspa.sr.resample import DegradationSpec, degrade

OUTPUT_DIR_ENV = "HSPA_OUTPUT_DIR"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def parse_vector(text: str) -> np.ndarray:
    """Comma- and/or newline-separated floats; rejects empty and non-finite."""
    tokens = [t for t in text.replace(",", "\n").split() if t]
    if not tokens:
        raise UsageError("empty vector")
    try:
        v = np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise UsageError(f"cannot parse vector: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise UsageError("vector contains non-finite values")
    return v


def _out_path(args, name: str | None) -> Path | None:
    if name is None:
        return None
    p = Path(name)
    return p if p.is_absolute() else Path(args.output_dir) / p


def _threads(args) -> int:
    if args.threads == "auto":
        return os.cpu_count() or 1
    return int(args.threads)


def cmd_st_eval(args) -> int:
    if args.file:
        text = Path(args.file).read_text()
    elif args.values is not None:
        text = args.values
    else:
        raise UsageError("give a vector literal or --file")
    s = parse_vector(text)
    res = soft_threshold_exact(s) if args.k is None else soft_threshold_topk(s, args.k)
    print("weights: " + ",".join(fmt(w) for w in res.weights))
    print("threshold: " + fmt(res.threshold))
    print(f"support_size: {res.support_size}")
    print("support: " + ",".join(str(i) for i in res.support))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = gradcheck.run_gradcheck(args.trials, args.n, args.seed, args.step)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_flatness(args) -> int:
    prof = diagnostics.flatness_profile(args.lengths, args.trials, args.seed, _threads(args))
    out = _out_path(args, args.out)
    if out:
        diagnostics.emit_csv(prof, out)
    order = np.argsort(prof.sequence_lengths)
    maxp = np.asarray(prof.mean_max_prob)[order]
    decreasing = bool(np.all(np.diff(maxp) < 0))
    for n, p, h, t in zip(prof.sequence_lengths, prof.mean_max_prob, prof.mean_entropy, prof.mean_support_size_st):
        print(f"length={n} mean_max_prob={fmt(p)} mean_entropy={fmt(h)} mean_support_st={fmt(t)}")
    print(f"flatness {'PASS' if decreasing else 'FAIL'} mean_max_prob strictly decreasing={decreasing}")
    return EXIT_OK if decreasing else EXIT_CHECK_FAILED


def cmd_support_bound(args) -> int:
    rep = diagnostics.support_bound_check(args.n, args.k, args.trials, args.seed, _threads(args))
    out = _out_path(args, args.out)
    if out:
        diagnostics.emit_csv(rep, out)
    for k, a, b in zip(rep.k_values, rep.p_support_gt_k, rep.p_gap_lt_inv_k):
        print(f"k={k} p_support_gt_k={fmt(a)} p_gap_lt_inv_k={fmt(b)}")
    bad = rep.violations()
    print(f"support-bound {'FAIL' if bad else 'PASS'} violations={bad}")
    return EXIT_CHECK_FAILED if bad else EXIT_OK


def _load_input(spec: str) -> Image:
    if spec.startswith("corpus:"):
        name = spec.split(":", 1)[1]
        if name not in corpus.CORPUS:
            raise UsageError(f"unknown corpus image {name!r}; choose from {sorted(corpus.CORPUS)}")
        return corpus.CORPUS[name]()
    return load_image(spec)


def _json_float(x: float):
    return None if math.isinf(x) else x


def cmd_sr_demo(args) -> int:
    try:
        search, window = PatchConfig.parse_search(args.search)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    hr = _load_input(args.input).crop_to_multiple(args.scale)
    lr = degrade(hr, DegradationSpec(args.degradation, args.scale, args.sigma))
    cfg = PatchConfig(
        patch_radius=args.patch_radius,
        stride=args.stride,
        search=search,
        window=window,
        scale=args.scale,
        bandwidth=args.bandwidth,
        mode=AttentionConfig(mode=args.mode, k=args.k, m=args.m, seed=args.seed),
    )
    res = reconstruct_detailed(lr, cfg, _threads(args))
    metrics = {
        "psnr_db": _json_float(psnr(res.image, hr)),
        "ssim": ssim(res.image, hr),
        "mode": args.mode,
        "timing_ms": res.timing_ms,
        "mean_support_size": res.mean_support_size,
        "candidate_count": res.candidate_count,
        "bicubic_psnr_db": _json_float(psnr(res.estimate, hr)),
        "bicubic_ssim": ssim(res.estimate, hr),
        "scale": args.scale,
        "degradation": args.degradation,
        "seed": args.seed,
    }
    out = _out_path(args, args.out)
    if out:
        save_image(res.image, out)
    mpath = _out_path(args, args.metrics)
    if mpath:
        mpath.write_text(json.dumps(metrics, indent=2) + "\n")
    print(
        f"sr-demo mode={args.mode} psnr_db={metrics['psnr_db']} ssim={fmt(metrics['ssim'])} "
        f"bicubic_psnr_db={metrics['bicubic_psnr_db']} mean_support_size={fmt(res.mean_support_size)} "
        f"candidates={res.candidate_count} timing_ms={res.timing_ms:.1f}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    unknown = [op for op in args.ops if op not in bench.OPS]
    if unknown:
        raise UsageError(f"unknown ops {unknown}; choose from {bench.OPS}")
    if any(n < 2 for n in args.lengths):
        raise UsageError("lengths must be >= 2")
    records = bench.run_bench(args.ops, args.lengths, args.k, args.reps, args.seed)
    print(f"# machine: {bench.machine_label()} (timings are machine-dependent)")
    for r in records:
        print(f"op={r.op_name} n={r.n} k={'' if r.k is None else r.k} p50_ns={r.p50_ns} p90_ns={r.p90_ns} checksum={fmt(r.checksum)}")
    out = _out_path(args, args.out)
    if out:
        bench.emit_csv(records, out)
    return EXIT_OK


def cmd_corpus(args) -> int:
    out_dir = _out_path(args, args.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, img in corpus.corpus().items():
        print(save_image(img, out_dir / f"{name}.pgm"))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master PRNG seed (default 0)")
    common.add_argument("--threads", default="1", help="worker threads, an integer >= 1 or 'auto' (default 1)")
    common.add_argument(
        "--output-dir",
        default=os.environ.get(OUTPUT_DIR_ENV, "."),
        help=f"base for relative output paths (default ${OUTPUT_DIR_ENV} or '.')",
    )

    parser = _Parser(prog="hspa", description="Sparse simplex-projection attention toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("st-eval", parents=[common], help="soft-threshold a vector and print the result")
    p.add_argument("values", nargs="?", help="comma-separated numbers, e.g. 0.3,0.3,0.3")
    p.add_argument("--file", help="read numbers (comma- or newline-separated) from a file")
    p.add_argument("--k", type=_positive, default=None, help="restrict to the top-k entries")
    p.set_defaults(func=cmd_st_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the analytic JVP")
    p.add_argument("--trials", type=_positive, default=1000)
    p.add_argument("--n", type=int, default=32, help="vector length (>= 2)")
    p.add_argument("--step", type=float, default=gradcheck.DEFAULT_STEP)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flatness", parents=[common], help="softmax flattening profile over sequence lengths")
    p.add_argument("--lengths", type=_int_list, default=[16, 64, 256, 400])
    p.add_argument("--trials", type=_positive, default=10000)
    p.add_argument("--out", help="CSV path (length,mean_max_prob,mean_entropy,mean_support_st)")
    p.set_defaults(func=cmd_flatness)

    p = sub.add_parser("support-bound", parents=[common], help="Monte-Carlo check of the support-size bound")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--k", type=_int_list, default=[1, 2, 4, 8, 16], help="comma-separated k values, each < n")
    p.add_argument("--trials", type=int, default=100000, help=">= 1000")
    p.add_argument("--out", help="CSV path (k,p_support_gt_k,p_gap_lt_inv_k)")
    p.set_defaults(func=cmd_support_bound)

    p = sub.add_parser("sr-demo", parents=[common], help="degrade an image and super-resolve it")
    p.add_argument("--input", required=True, help="PGM/PPM path, or corpus:<stripes|checkerboard|brick>")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), default=2)
    p.add_argument("--mode", choices=MODES, default="hspa_topk")
    p.add_argument("--k", type=_positive, default=DEFAULT_TOPK, help="top-k width for hspa_topk")
    p.add_argument("--m", type=_positive, default=512, help="random subset size for nla_random")
    p.add_argument("--search", default="window:31", help="'full' or 'window:<w>'")
    p.add_argument("--patch-radius", type=int, default=1)
    p.add_argument("--stride", type=_positive, default=1, help="candidate grid step")
    p.add_argument("--bandwidth", type=float, default=DEFAULT_BANDWIDTH, help="patch feature scale")
    p.add_argument("--degradation", choices=("bicubic", "blur_bicubic"), default="bicubic")
    p.add_argument("--sigma", type=float, default=1.6, help="Gaussian sigma for blur_bicubic")
    p.add_argument("--out", help="output image (.pgm or .ppm)")
    p.add_argument("--metrics", help="metrics JSON path")
    p.set_defaults(func=cmd_sr_demo)

    p = sub.add_parser("bench", parents=[common], help="latency of exact/top-k thresholding, softmax and JVP")
    p.add_argument("--ops", type=lambda t: [x for x in t.split(",") if x], default=list(bench.OPS))
    p.add_argument("--lengths", type=_int_list, default=[1024, 16384, 65536])
    p.add_argument("--k", type=_positive, default=DEFAULT_TOPK)
    p.add_argument("--reps", type=_positive, default=50)
    p.add_argument("--out", help="CSV path (op,n,k,reps,p50_ns,p90_ns,checksum)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("corpus", parents=[common], help="write the synthetic test images as PGM")
    p.add_argument("--dir", default="corpus")
    p.set_defaults(func=cmd_corpus)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads != "auto" and (not args.threads.isdigit() or int(args.threads) < 1):
        parser.error(f"--threads must be a positive integer or 'auto', got {args.threads!r}")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hspa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, NetpbmError, OSError) as exc:
        print(f"hspa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
