"""Command-line front door: run scenarios, replay harvests, benchmark
suites, and inspect transcripts."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .adversary import QuantumOracle, harvest_decrypt
from .report import (
    REFERENCE_FIGURES_NOTE,
    emit_report,
    write_metrics,
)
from .scenario import ScenarioConfig, ScenarioConfigError, parse_scenario_config
from .simnet import measure_overhead, run_scenario
from .transcript import SUITE_NAMES, TranscriptFormatError, dump_transcripts, load_transcripts


def _load_config(path: str, seed: int | None) -> ScenarioConfig:
    config = parse_scenario_config(Path(path).read_text())
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    metrics, transcripts = run_scenario(config)
    if args.out:
        write_metrics(metrics, args.format, args.out)
        print(f"wrote metrics ({args.format}) to {args.out}")
    if args.transcript:
        dump_transcripts(transcripts, args.transcript, config.config_hash())
        print(f"wrote transcript to {args.transcript}")
    if args.report:
        emit_report(metrics, None, args.report, config=config)
        print(f"wrote report to {args.report}")
    print(
        f"{config.crypto_suite}: {config.rounds} rounds, "
        f"final accuracy {metrics.final_accuracy:.4f}"
    )
    return 0


def _cmd_harvest(args: argparse.Namespace) -> int:
    expected = None
    config = None
    if args.config:
        config = _load_config(args.config, args.seed)
        expected = config.config_hash()
    transcripts, _ = load_transcripts(args.transcript, expected, strict=args.strict)
    oracle = QuantumOracle(max_modulus_bits=args.max_modulus_bits)
    report = harvest_decrypt(transcripts, oracle)
    print(f"recovered {report.recovered}/{report.total_messages} messages")
    print(f"method: {report.method}")
    if args.out:
        emit_report(None, report, args.out, config=config)
        print(f"wrote report to {args.out}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    base = _load_config(args.config, args.seed)
    if args.variant:
        variant = _load_config(args.variant, args.seed)
    else:
        if base.crypto_suite == "pqc":
            raise ScenarioConfigError(
                "base config already uses the pqc suite; pass --variant explicitly"
            )
        variant = dataclasses.replace(base, crypto_suite="pqc")
    overhead = measure_overhead(base, variant, repetitions=args.repeats)
    print(
        f"overhead ratio (T_variant - T_base)/T_base = {overhead.ratio:.3f} "
        f"[{base.crypto_suite} -> {variant.crypto_suite}]"
    )
    print(
        "per-repetition ratios: "
        + ", ".join(f"{r:.3f}" for r in overhead.per_repetition)
    )
    print(REFERENCE_FIGURES_NOTE)
    if args.out:
        Path(args.out).write_text(
            json.dumps(
                {
                    "ratio": overhead.ratio,
                    "per_repetition": list(overhead.per_repetition),
                    "base_seconds": overhead.base_seconds,
                    "variant_seconds": overhead.variant_seconds,
                    "base_suite": base.crypto_suite,
                    "variant_suite": variant.crypto_suite,
                    "context_note": REFERENCE_FIGURES_NOTE,
                },
                indent=2,
            )
            + "\n"
        )
        print(f"wrote bench results to {args.out}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    transcripts, config_hash = load_transcripts(args.transcript, strict=args.strict)
    print(f"config hash: {config_hash.hex()}")
    total_bytes = 0
    for rt in transcripts:
        phases = {}
        for m in rt.messages:
            phases[m.phase] = phases.get(m.phase, 0) + 1
        summary = ", ".join(f"{v}x{k}" for k, v in sorted(phases.items()))
        print(f"round {rt.round}: {len(rt.messages)} messages ({summary}), "
              f"{rt.bytes_on_wire} bytes")
        total_bytes += rt.bytes_on_wire
    print(f"total: {sum(len(rt.messages) for rt in transcripts)} messages, "
          f"{total_bytes} bytes")
    setup = [m for rt in transcripts for m in rt.messages if m.phase == "S"]
    if setup:
        suite_tag = setup[0].payload[0]
        print(f"suite: {SUITE_NAMES.get(suite_tag, f'unknown({suite_tag})')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqfl",
        description="Quantum-resistant federated learning testbed",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write metrics")
    run.add_argument("--config", required=True, help="scenario JSON path")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="metrics output path")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--transcript", default=None, help="dump wire transcript here")
    run.add_argument("--report", default=None, help="write a markdown report here")
    run.set_defaults(func=_cmd_run)

    harvest = sub.add_parser(
        "harvest", help="replay a recorded transcript through the decryption oracle"
    )
    harvest.add_argument("--transcript", required=True)
    harvest.add_argument("--config", default=None, help="validate the transcript hash")
    harvest.add_argument("--seed", type=int, default=None)
    harvest.add_argument("--strict", action="store_true",
                         help="treat a config-hash mismatch as an error")
    harvest.add_argument("--max-modulus-bits", type=int, default=32)
    harvest.add_argument("--out", default=None, help="write a markdown report here")
    harvest.set_defaults(func=_cmd_harvest)

    bench = sub.add_parser("bench", help="measure crypto-suite overhead")
    bench.add_argument("--config", required=True, help="base scenario JSON path")
    bench.add_argument("--variant", default=None, help="variant scenario JSON path")
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--out", default=None, help="write bench JSON here")
    bench.set_defaults(func=_cmd_bench)

    inspect = sub.add_parser("inspect", help="summarize a transcript file")
    inspect.add_argument("--transcript", required=True)
    inspect.add_argument("--strict", action="store_true")
    inspect.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioConfigError, TranscriptFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
