"""Command-line front end.

Subcommands: run a campaign config, inject errors into a checkpoint, replay
a saved error map, aggregate a results file. Exit codes: 0 on success, 1 on
configuration errors, 2 on runtime errors.
"""

import argparse
import sys

from .campaign import aggregate_table, emit_results, parse_config, read_results, run_campaign
from .errors import CheckpointError, ConfigError
from .inject import (
    InjectionConfig,
    apply_error_map,
    build_error_map,
    load_error_map,
    save_error_map,
    sbp_mask,
)
from .model import load_checkpoint, save_checkpoint


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drsfi",
        description="Bit-flip robustness campaigns for deep recommendation models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a campaign config file")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="override the config's output path")
    p_run.add_argument("--format", choices=("csv", "jsonl"), help="override output format")
    p_run.add_argument("--workers", type=int, help="override the worker-pool size")
    p_run.add_argument("--timing", action="store_true", help="emit the wall_time column")

    p_inj = sub.add_parser("inject", help="corrupt a checkpoint with random bit flips")
    p_inj.add_argument("checkpoint")
    p_inj.add_argument("--ber", type=float, required=True)
    p_inj.add_argument("--targets", default="entire_model",
                       help="entire_model, mlp, embedding, or comma-separated parameter names")
    p_inj.add_argument("--seed", type=int, default=0)
    p_inj.add_argument("--mask", default="0x00000000",
                       help="hex mask of protected bit positions (1 = never flip)")
    p_inj.add_argument("--protect", default=None,
                       help="comma-separated float fields to protect (sign,exponent,mantissa)")
    p_inj.add_argument("--out", default=None, help="output checkpoint path")
    p_inj.add_argument("--map-out", default=None, help="also export the error map")

    p_rep = sub.add_parser("replay", help="apply a saved error map to a checkpoint")
    p_rep.add_argument("errormap")
    p_rep.add_argument("checkpoint")
    p_rep.add_argument("--out", default=None, help="output checkpoint path")

    p_tab = sub.add_parser("report", help="aggregate a results file per sweep cell")
    p_tab.add_argument("results")
    p_tab.add_argument("--figure-table", action="store_true",
                       help="apply the heatmap display rules (invalid markers, <0.005 -> 0.0)")
    p_tab.add_argument("--out", default=None, help="write the table here instead of stdout")
    return parser


def _resolve_targets_arg(raw: str):
    if raw in ("entire_model", "mlp", "embedding"):
        return raw
    return tuple(s.strip() for s in raw.split(",") if s.strip())


def _cmd_run(args) -> int:
    spec = parse_config(args.config)
    if args.output:
        spec.output = args.output
    if args.format:
        spec.format = args.format
    if args.workers:
        spec.workers = args.workers
    records = run_campaign(spec)
    emit_results(records, spec.format, spec.output, include_timing=args.timing)
    print(f"{len(records)} records -> {spec.output}")
    return 0


def _cmd_inject(args) -> int:
    model = load_checkpoint(args.checkpoint)
    mask = int(args.mask, 16)
    if args.protect:
        mask |= sbp_mask([f.strip() for f in args.protect.split(",") if f.strip()])
    cfg = InjectionConfig(
        ber=args.ber,
        targets=_resolve_targets_arg(args.targets),
        protected_bits=mask,
        seed=args.seed,
    )
    emap = build_error_map(model, cfg)
    apply_error_map(model, emap)
    out = args.out or args.checkpoint + ".injected"
    save_checkpoint(model, out)
    if args.map_out:
        save_error_map(emap, args.map_out)
    print(f"{emap.n_entries} bit flips -> {out}")
    return 0


def _cmd_replay(args) -> int:
    model = load_checkpoint(args.checkpoint)
    emap = load_error_map(args.errormap)
    apply_error_map(model, emap)
    out = args.out or args.checkpoint + ".replayed"
    save_checkpoint(model, out)
    print(f"replayed {emap.n_entries} bit flips -> {out}")
    return 0


def _cmd_report(args) -> int:
    records = read_results(args.results)
    table = aggregate_table(records, figure_rule=args.figure_table)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(table)
        print(f"aggregate table -> {args.out}")
    else:
        sys.stdout.write(table)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "inject": _cmd_inject,
    "replay": _cmd_replay,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
