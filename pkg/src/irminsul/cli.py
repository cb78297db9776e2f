"""Command-line entry point.

Every subcommand is seeded and writes machine-readable reports plus a run
manifest (parameters and sha256 digests of each output), so any run can be
replayed byte-for-byte from its manifest.  Live serve mode is selected with
the environment variable IRMINSUL_SIM_LIVE=1.

Exit codes: 0 success, 1 input error, 2 internal assertion (for example the
live-mode rotation tripwire, or a rotate-check mismatch).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .analyzer import Scope, compare_strategies, decompose, mask_sweep
from .chunking import ChunkerParams, cdc_chunk, marker_pin_offsets
from .engine import EngineState, LiveVerificationError, Mode, ServeConfig, run_trace
from .model import TraceFormatError, flatten, marker_spans, parse_trace, serialize_trace
from .roc import RocConfig, run_roc
from .rotary import KrVector, make_spec, probe_base_vector, rotate, detect_spec
from .workloads import Pattern, PatternParams, generate, header_sweep

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ASSERT = 2


def _write(out_dir: Path, name: str, text: str, outputs: dict) -> None:
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    outputs[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write_manifest(args, out_dir: Path, outputs: dict) -> None:
    manifest = {
        "subcommand": args.command,
        "parameters": {
            k: v for k, v in sorted(vars(args).items()) if k not in ("command", "func")
        },
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "outputs": outputs,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(text, encoding="utf-8")


def _rows_to_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _report(args, out_dir, outputs, stem: str, header: list[str], rows: list[list]):
    if args.format == "json":
        records = [dict(zip(header, row)) for row in rows]
        _write(out_dir, f"{stem}.json", json.dumps(records, indent=2) + "\n", outputs)
    else:
        _write(out_dir, f"{stem}.csv", _rows_to_csv(header, rows), outputs)


def _load_trace(path: str):
    try:
        with open(path, encoding="utf-8") as f:
            return parse_trace(f)
    except OSError as exc:
        raise SystemExit(f"cannot read {path}: {exc}")
    except TraceFormatError as exc:
        raise SystemExit(f"{path}: {exc}")


def _pattern_params(args) -> PatternParams:
    return PatternParams(
        pattern=Pattern(args.pattern),
        n_req=args.n_req,
        body_len=args.body_len,
        header_len=args.header_len,
        variant_pool=args.variant_pool,
        seed=args.seed,
        markers=not args.no_markers,
    )


def _serve_config() -> ServeConfig:
    mode = Mode.LIVE if os.environ.get("IRMINSUL_SIM_LIVE") == "1" else Mode.OBSERVER
    return ServeConfig(mode=mode)


def cmd_generate(args, out_dir: Path, outputs: dict) -> int:
    trace = generate(_pattern_params(args))
    _write(out_dir, "trace.jsonl", serialize_trace(trace), outputs)
    return EXIT_OK


def cmd_chunk(args, out_dir: Path, outputs: dict) -> int:
    trace = _load_trace(args.input)
    params = ChunkerParams(
        mask_exponent=args.mask_exponent,
        min_size=args.min_size,
        max_size=args.max_size,
    )
    for i, request in enumerate(trace.requests):
        tokens, _ = flatten(request)
        pins = marker_pin_offsets(marker_spans(request))
        rows = [
            [c.start, c.len, f"{c.fingerprint:016x}", c.forced.value]
            for c in cdc_chunk(tokens, params, pins)
        ]
        _write(
            out_dir,
            f"chunks_{i:04d}.csv",
            _rows_to_csv(["start", "len", "fingerprint_hex", "forced"], rows),
            outputs,
        )
    return EXIT_OK


def cmd_simulate(args, out_dir: Path, outputs: dict) -> int:
    if args.input:
        trace = _load_trace(args.input)
        pattern = "trace"
    else:
        trace = generate(_pattern_params(args))
        pattern = args.pattern
    config = _serve_config()
    state = EngineState(config)
    try:
        results, row = run_trace(state, trace, pattern=pattern)
    except LiveVerificationError as exc:
        print(f"live verification failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT

    # steady-state fractions: the cold first request is excluded
    _report(
        args, out_dir, outputs, "aggregate",
        ["pattern", "model_tag", "tprefix", "pic_unique", "total", "n_req"],
        [[row.pattern, row.model_tag, f"{row.warm_tprefix:.6f}",
          f"{row.warm_pic_unique:.6f}", f"{row.warm_total:.6f}", row.n_req]],
    )
    registry_rows = [
        [f"{e.fingerprint:016x}", e.p_src, e.chunk_len, e.insert_epoch]
        for e in state.registry.entries()
    ]
    _write(
        out_dir, "registry.csv",
        _rows_to_csv(["fingerprint_hex", "p_src", "chunk_len", "insert_epoch"],
                     registry_rows),
        outputs,
    )
    events = "".join(
        json.dumps(
            {
                "request": i,
                "events": [
                    {"start": e.start, "len": e.length, "class": e.klass.value,
                     "delta": e.delta}
                    for e in r.events
                ],
            }
        ) + "\n"
        for i, r in enumerate(results)
    )
    _write(out_dir, "events.jsonl", events, outputs)
    return EXIT_OK


def cmd_sweep(args, out_dir: Path, outputs: dict) -> int:
    lens = tuple(int(x) for x in args.header_lens.split(","))
    rows = header_sweep(_pattern_params(args), lens, _serve_config())
    _report(
        args, out_dir, outputs, "sweep",
        ["header_len", "tprefix", "pic_unique", "total"],
        [[r.header_len, f"{r.tprefix:.6f}", f"{r.pic_unique:.6f}", f"{r.total:.6f}"]
         for r in rows],
    )
    return EXIT_OK


def cmd_roc(args, out_dir: Path, outputs: dict) -> int:
    config = RocConfig(
        n_blocks=args.n_blocks,
        noise_sigma=args.noise,
        component=args.component,
        seed=args.seed,
    )
    result = run_roc(config)
    report = {"auc": result.auc, "n_pos": result.n_pos, "n_neg": result.n_neg}
    _write(out_dir, "roc.json", json.dumps(report, indent=2) + "\n", outputs)
    if args.histogram:
        _write(out_dir, "roc_histogram.json",
               json.dumps(result.histogram) + "\n", outputs)
    return EXIT_OK


def cmd_rotate_check(args, out_dir: Path, outputs: dict) -> int:
    declared = make_spec(args.theta)
    probe_spec = make_spec(args.probe_theta)
    base = KrVector(probe_base_vector(declared.dim))
    verdict = detect_spec(declared, lambda p: rotate(base, p, probe_spec))
    report = {
        "ok": verdict.ok,
        "declared_theta": args.theta,
        "best_fit_theta": verdict.best_fit_theta,
        "probe_errors": {str(p): e for p, e in verdict.errors.items()},
    }
    _write(out_dir, "rotate_check.json", json.dumps(report, indent=2) + "\n", outputs)
    return EXIT_OK if verdict.ok else EXIT_ASSERT


def cmd_analyze(args, out_dir: Path, outputs: dict) -> int:
    trace = _load_trace(args.input)
    if args.analysis == "decompose":
        report = decompose(trace, Scope(args.scope))
        header = ["session_id", "turn", "num_tokens", "prefix", "pic_cacheable", "novel"]
        rows = [
            [t.session_id, t.turn_index, t.num_tokens, f"{t.prefix:.6f}",
             f"{t.pic_cacheable:.6f}", f"{t.novel:.6f}"]
            for t in report.turns
        ]
        _report(args, out_dir, outputs, "decompose", header, rows)
        summary = {
            "scope": report.scope.value,
            "prefix": report.prefix,
            "pic_cacheable": report.pic_cacheable,
            "novel": report.novel,
            "p50_pic": report.p50_pic,
            "p95_pic": report.p95_pic,
        }
        _write(out_dir, "decompose_summary.json",
               json.dumps(summary, indent=2) + "\n", outputs)
    elif args.analysis == "strategies":
        report = compare_strategies(trace)
        _write(out_dir, "strategies.json",
               json.dumps(asdict(report), indent=2) + "\n", outputs)
    else:
        k_values = tuple(int(x) for x in args.k_values.split(","))
        result = mask_sweep(trace, k_values)
        _report(args, out_dir, outputs, "mask_sweep",
                ["k", "cdc_recovery"],
                [[k, f"{v:.6f}"] for k, v in result.items()])
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_pattern_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--pattern", choices=[x.value for x in Pattern],
                   required=required, default=None if required else "agent_meta")
    p.add_argument("--n-req", type=int, default=80)
    p.add_argument("--body-len", type=int, default=2500)
    p.add_argument("--header-len", type=int, default=50)
    p.add_argument("--variant-pool", type=int, default=8)
    p.add_argument("--no-markers", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irminsul",
        description="Content-addressed position-independent KV cache simulator",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("generate", help="write a workload trace")
    _add_common(p)
    _add_pattern_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("chunk", help="dump CDC chunk tables for a trace")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--mask-exponent", type=int, default=7)
    p.add_argument("--min-size", type=int, default=32)
    p.add_argument("--max-size", type=int, default=512)
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("simulate", help="serve a pattern or trace file")
    _add_common(p)
    _add_pattern_flags(p, required=False)
    p.add_argument("--input", default=None, help="serve a trace file instead")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="header-length partition-shift sweep")
    _add_common(p)
    _add_pattern_flags(p, required=False)
    p.add_argument("--header-lens", default="50,250,1000,2000")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("roc", help="position-invariance ROC harness")
    _add_common(p)
    p.add_argument("--component", choices=("invariant", "rotated"),
                   default="invariant")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--n-blocks", type=int, default=500)
    p.add_argument("--histogram", action="store_true")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("rotate-check", help="verify a rotation against a spec")
    _add_common(p)
    p.add_argument("--theta", type=float, default=1e4)
    p.add_argument("--probe-theta", type=float, default=1e4)
    p.set_defaults(func=cmd_rotate_check)

    p = sub.add_parser("analyze", help="offline trace analysis")
    _add_common(p)
    p.add_argument("analysis", choices=("decompose", "strategies", "mask-sweep"))
    p.add_argument("--input", required=True)
    p.add_argument("--scope", choices=[s.value for s in Scope],
                   default="cross_session")
    p.add_argument("--k-values", default="7,16")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses status 2 for usage errors; map to input-error
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create {out_dir}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    outputs: dict[str, str] = {}
    try:
        status = args.func(args, out_dir, outputs)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_INPUT
        raise
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _write_manifest(args, out_dir, outputs)
    return status


if __name__ == "__main__":
    sys.exit(main())
