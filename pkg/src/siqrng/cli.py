"""
Command-line interface.

Every subcommand reads an optional JSON config (``--config``) and accepts
``--<key> value`` overrides for each config key. Exit status is 0 on
success, 1 for invalid input or a failed battery, and 2 for I/O problems.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bits import read_bitstream, write_bitstream
from .config import RunConfig, coerce_override
from .errors import FormatError, PipelineError, SiqrngError
from .extractor import plan_extraction
from . import pipeline
from .montecarlo import double_click_assignment, simulate
from .stattests import run_battery

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _default_threads():
    value = os.environ.get("SIQRNG_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_common(parser):
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $SIQRNG_THREADS or 1); never changes results")
    group = parser.add_argument_group("config overrides")
    for key in RunConfig.keys():
        group.add_argument(f"--{key}", dest=f"override_{key}", metavar="VALUE", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="siqrng", description="Source-independent QRNG toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model-eval", help="analytic click model and predicted rate")
    _add_common(p)
    p.add_argument("--out", type=Path, help="write the JSON report here")

    p = sub.add_parser("sweep", help="predicted rate over a range of mean photon numbers")
    _add_common(p)
    p.add_argument("--mu-min", type=float, default=1.0)
    p.add_argument("--mu-max", type=float, default=200.0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--out", type=Path, help="write the tab-separated table here")

    p = sub.add_parser("simulate", help="pulse-level simulation; writes a tally and raw bits")
    _add_common(p)
    p.add_argument("--tally", type=Path, required=True, help="output tally JSON")
    p.add_argument("--raw", type=Path, required=True, help="output raw bitstream")
    p.add_argument("--double-clicks", action="store_true",
                   help="append a random bit for every Z-basis double click")

    p = sub.add_parser("estimate", help="finite-key analysis of a tally file")
    _add_common(p)
    p.add_argument("--tally", type=Path, required=True)
    p.add_argument("--out", type=Path, help="write the JSON rate report here")

    p = sub.add_parser("extract", help="Toeplitz hashing of a raw bitstream")
    _add_common(p)
    p.add_argument("--raw", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True, help="rate report from 'estimate'")
    p.add_argument("--seed-file", type=Path,
                   help="bitstream of Toeplitz seed bits (default: derived from the config seed)")
    p.add_argument("--fresh-seed", action="store_true", help="use new seed bits for every block")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("test", help="statistical battery on a bitstream")
    _add_common(p)
    p.add_argument("--bits", type=Path, required=True)
    p.add_argument("--sample-bits", type=_positive_int, default=100_000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", type=Path, help="write the JSON battery report here")

    p = sub.add_parser("pipeline", help="simulate, estimate, extract and test")
    _add_common(p)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--sample-bits", type=_positive_int, default=100_000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--seed-file", type=Path)
    p.add_argument("--fresh-seed", action="store_true")
    p.add_argument("--double-clicks", action="store_true")
    p.add_argument("--skip-battery", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {}
    for key in RunConfig.keys():
        text = getattr(args, f"override_{key}")
        if text is not None:
            changes[key] = coerce_override(key, text)
    return cfg.replace(**changes) if changes else cfg


def _emit(payload, out):
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _battery_summary(reports):
    for r in reports:
        lo, hi = r.interval
        status = "PASS" if r.passed else "FAIL"
        extra = "" if not r.uniformity_p else "  uniformity " + ", ".join(f"{u:.4f}" for u in r.uniformity_p)
        print(f"{status}  {r.name:<20} proportion {r.proportion:.4f} in [{lo:.4f}, {hi:.4f}]{extra}")


def cmd_model_eval(args, cfg, threads):
    _emit(pipeline.model_report(cfg), args.out)
    return EXIT_OK


def cmd_sweep(args, cfg, threads):
    rows = pipeline.sweep(cfg, args.mu_min, args.mu_max, args.points)
    lines = ["mu\trate_bps"] + [f"{mu:.6g}\t{rate:.6e}" for mu, rate in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args, cfg, threads):
    tally, raw = simulate(cfg.model(), cfg.n_pulses, cfg.seed, threads=threads)
    if args.double_clicks:
        raw = double_click_assignment(raw, tally, cfg.seed)
    pipeline.write_json(args.tally, pipeline.tally_document(tally, cfg))
    write_bitstream(args.raw, raw)
    print(json.dumps(tally.to_dict(), indent=2))
    return EXIT_OK


def cmd_estimate(args, cfg, threads):
    tally = pipeline.load_tally(args.tally)
    report = pipeline.estimate(tally, cfg)
    m, seed_len = plan_extraction(report, cfg.block_n)
    _emit(pipeline.report_document(report, cfg, m_per_block=m, seed_bits_per_block=seed_len), args.out)
    return EXIT_OK


def cmd_extract(args, cfg, threads):
    raw = read_bitstream(args.raw)
    report = pipeline.load_report(args.report)
    seed_bits = read_bitstream(args.seed_file) if args.seed_file else None
    final = pipeline.extract(raw, report, cfg.block_n, seed_bits=seed_bits, seed=cfg.seed,
                             fresh_seed=args.fresh_seed, threads=threads)
    write_bitstream(args.out, final)
    print(f"{len(raw)} raw bits -> {len(final)} final bits")
    return EXIT_OK


def cmd_test(args, cfg, threads):
    bits = read_bitstream(args.bits)
    reports = run_battery(bits, args.sample_bits, args.alpha, threads=threads)
    if args.out:
        pipeline.write_json(args.out, pipeline.battery_document(reports, cfg, args.sample_bits))
    _battery_summary(reports)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_INVALID


def cmd_pipeline(args, cfg, threads):
    seed_bits = read_bitstream(args.seed_file) if args.seed_file else None
    result = pipeline.run_pipeline(
        cfg,
        threads=threads,
        sample_bits=args.sample_bits,
        alpha=args.alpha,
        battery=not args.skip_battery,
        double_clicks=args.double_clicks,
        seed_bits=seed_bits,
        fresh_seed=args.fresh_seed,
    )
    pipeline.write_pipeline_outputs(result, cfg, args.out_dir, args.sample_bits)
    r = result.report
    print(f"raw bits      {len(result.raw)}")
    print(f"e_bX          {r.e_bx:.6g}")
    print(f"theta         {r.theta:.6g}")
    print(f"rate (bps)    {r.rate_bps:.6g}")
    print(f"final bits    {len(result.final)}")
    if result.battery is not None:
        _battery_summary(result.battery)
    return EXIT_OK if result.battery_passed else EXIT_INVALID


COMMANDS = {
    "model-eval": cmd_model_eval,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "extract": cmd_extract,
    "test": cmd_test,
    "pipeline": cmd_pipeline,
}


def _exit_code(exc):
    if isinstance(exc, PipelineError):
        exc = exc.cause
    if isinstance(exc, (OSError, FormatError)):
        return EXIT_IO
    return EXIT_INVALID


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = args.threads or _default_threads()
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg, threads)
    except (SiqrngError, OSError) as exc:
        print(f"siqrng {args.command}: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
