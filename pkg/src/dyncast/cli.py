"""Command line front end: plan, send, recv, sim and metrics subcommands."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from . import carousel, netsim, transfer
from .channel import ChannelConfig
from .fec import CodecSpec


def _add_channel_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-rate", type=float, default=64_000.0, help="base group rate, bits/s")
    p.add_argument("--max-rate", type=float, default=4_000_000.0,
                   help="cumulative rate of a newborn group, bits/s")
    p.add_argument("--decay", type=float, default=0.7, help="per sub-slot decay ratio")
    p.add_argument("--tsd", type=float, default=4.0, help="time slot duration, s")
    p.add_argument("--groups-per-tsi", type=int, default=1)
    p.add_argument("--payload", type=int, default=1448, help="PDU payload bytes")
    p.add_argument("--group-count", type=int, default=12)


def _channel_from_args(args) -> ChannelConfig:
    return ChannelConfig(
        base_rate=args.base_rate,
        max_cumulative_rate=args.max_rate,
        decay_ratio=args.decay,
        tsd=args.tsd,
        groups_per_tsi=args.groups_per_tsi,
        packet_payload=args.payload,
        group_count=args.group_count,
    )


def _add_codec_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--codec", choices=("null", "mds", "sparse_parity"),
                   default="sparse_parity")
    p.add_argument("--symbol-size", type=int, default=1448)
    p.add_argument("--fec-n", type=int, default=None, help="total symbols (default 2k)")
    p.add_argument("--fec-seed", type=int, default=0)
    p.add_argument("--levels", type=int, default=None,
                   help="carousel levels per buffer (default: fill the mean top rate)")


def cmd_plan(args) -> int:
    plan = carousel.build_plan(args.blocks, args.levels)
    print("level offsets:", " ".join(str(o) for o in plan.level_offsets))
    for lv in range(1, args.levels + 1):
        times = [
            carousel.completion_time(plan, lv, start_buffer=s)
            for s in range(min(args.starts, args.blocks))
        ]
        avg = sum(times) / len(times)
        print(f"levels {lv}: {avg:.1f} buffers to all {args.blocks} blocks")
    return 0


def cmd_send(args) -> int:
    channel = _channel_from_args(args)
    size = Path(args.file).stat().st_size
    spec = transfer.spec_for_file(args.codec, size, args.symbol_size,
                                  n=args.fec_n, seed=args.fec_seed)
    session = transfer.send_file(
        args.file, args.out,
        channel=channel, codec=spec, levels=args.levels, buffers=args.buffers,
    )
    print(f"sequenced {size} bytes as k={spec.k} n={spec.n} symbols, "
          f"{session.levels} levels per buffer, trace at {args.out}")
    return 0


def _read_trace_meta(path) -> dict[str, int]:
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        return {}
    return {k: int(v) for k, v in (f.split("=", 1) for f in first[1:].split())}


def cmd_recv(args) -> int:
    meta = _read_trace_meta(args.trace)
    file_length = args.file_length if args.file_length is not None else meta.get("file_length")
    n = args.fec_n if args.fec_n is not None else meta.get("blocks")
    k = args.fec_k
    if k is None:
        if file_length is None:
            print("recv: need --fec-k or a trace with a file_length header", file=sys.stderr)
            return 2
        k = math.ceil(file_length / args.symbol_size)
    if n is None:
        n = k if args.codec == "null" else 2 * k
    spec = CodecSpec(args.codec, k, n, args.symbol_size, args.fec_seed)
    try:
        data, metrics, _counters = transfer.receive_file(
            args.trace, spec, levels=args.levels, file_length=file_length
        )
    except transfer.TransferTimeoutError as exc:
        print(f"recv: {exc}", file=sys.stderr)
        for name, value in exc.partial.items():
            print(f"{name} {value:.6g}", file=sys.stderr)
        return 1
    Path(args.out).write_bytes(data)
    print(transfer.format_metrics(metrics))
    return 0


def cmd_sim(args) -> int:
    scenario = netsim.load_scenario(args.scenario)
    data = Path(args.file).read_bytes()
    spec = transfer.spec_for_file(args.codec, len(data), args.symbol_size,
                                  n=args.fec_n, seed=args.fec_seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_receiver: list[list[transfer.TransferMetrics]] = [[] for _ in scenario.receivers]
    timed_out = False
    for run in range(args.runs):
        scen = dataclasses.replace(scenario, seed=scenario.seed + run)
        outcomes, result = transfer.simulate_transfer(
            data, scen, spec, levels=args.levels, collect_traces=args.write_traces
        )
        for i, outcome in enumerate(outcomes):
            tag = f"run{run}_rx{i}"
            (out_dir / f"{tag}_counters.json").write_text(
                json.dumps(dataclasses.asdict(outcome.counters), indent=2) + "\n"
            )
            if args.write_traces:
                netsim.write_receiver_trace(out_dir / f"{tag}.trace", result.receivers[i].trace)
            if outcome.done:
                (out_dir / f"{tag}.bin").write_bytes(outcome.file)
                ok = "ok" if outcome.file == data else "MISMATCH"
                print(f"# {tag}: completed in {outcome.metrics.time:.3f}s ({ok})")
                print(transfer.format_metrics(outcome.metrics))
                per_receiver[i].append(outcome.metrics)
            else:
                timed_out = True
                print(f"# {tag}: timed out after {scen.duration}s; partial metrics:")
                for name, value in transfer.partial_metrics(outcome.counters).items():
                    print(f"{name} {value:.6g}")
            print()
    if args.runs >= 2:
        for i, runs in enumerate(per_receiver):
            if len(runs) >= 2:
                print(f"# receiver {i}: mean and 95% interval over {len(runs)} runs")
                print(transfer.format_report(transfer.report(runs)))
                print()
    return 1 if timed_out else 0


def cmd_metrics(args) -> int:
    all_metrics = []
    for path in args.counters:
        payload = json.loads(Path(path).read_text())
        counters = transfer.TransferCounters(**payload)
        all_metrics.append(transfer.compute_metrics(counters))
    if len(all_metrics) == 1:
        print(transfer.format_metrics(all_metrics[0]))
    else:
        print(transfer.format_report(transfer.report(all_metrics)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyncast",
        description="Layered multicast sequencer with a FEC carousel file transfer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="derive a carousel plan and its completion profile")
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--starts", type=int, default=1, help="start buffers to average over")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("send", help="sequence a file into an emission trace")
    p.add_argument("--file", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--buffers", type=int, default=None,
                   help="carousel buffers to emit (default: one full period)")
    p.add_argument("--session-id", type=int, default=1)
    _add_codec_args(p)
    _add_channel_args(p)
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("recv", help="decode a file from an emission trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fec-k", type=int, default=None)
    p.add_argument("--file-length", type=int, default=None)
    _add_codec_args(p)
    p.set_defaults(func=cmd_recv)

    p = sub.add_parser("sim", help="run transfers through the deterministic simulator")
    p.add_argument("--file", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--out-dir", default="sim-out")
    p.add_argument("--write-traces", action="store_true")
    _add_codec_args(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("metrics", help="criteria from counters JSON files")
    p.add_argument("counters", nargs="+")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
