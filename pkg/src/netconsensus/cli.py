"""Command-line batch runner."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments
from .config import BaselineCampaign, Campaign, ConfigError, FitCampaign, SweepCampaign, TuneCampaign, load_json
from .engine import write_traces
from .graphs import GenerationInfeasible
from .metrics import SUMMARY_COLUMNS, write_csv

OUT_ENV = "NETCONSENSUS_OUT"
ALL_PLACEMENTS = [
    {"visible": vs, "adversary": as_} for vs in ("random", "greedy") for as_ in ("random", "greedy")
]


def _out_dir(args, config_dir) -> Path:
    out = Path(args.out or config_dir or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args, cls, defaults=None, seed_key="master_seed"):
    data = load_json(args.config)
    if not isinstance(data, dict):
        raise ConfigError("$: config must be a JSON object")
    data = {**(defaults or {}), **data}
    if args.seed is not None:
        data[seed_key] = args.seed
    if getattr(args, "replications", None) is not None:
        if args.replications < 1:
            raise ConfigError(f"$.replications: {args.replications} is less than the minimum of 1")
        data["replications"] = args.replications
    return cls.from_dict(data)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def cmd_simulate(args, defaults=None, suffix="summary") -> int:
    c = _load(args, Campaign, defaults)
    out = _out_dir(args, c.output_dir)
    results = experiments.run_campaign(c, args.jobs)
    write_csv(out / f"{c.name}_{suffix}.csv", experiments.campaign_rows(results), SUMMARY_COLUMNS)
    if c.write_traces:
        traces = [t for r in results for t in r.traces]
        ids = [f"{ci}-{i}" for ci, r in enumerate(results) for i in range(len(r.traces))]
        write_traces(out / f"{c.name}_traces.jsonl", traces, ids)
    return 0


def cmd_place(args) -> int:
    return cmd_simulate(args, {"placements": ALL_PLACEMENTS}, suffix="placement")


def cmd_baseline(args) -> int:
    c = _load(args, BaselineCampaign)
    out = _out_dir(args, c.output_dir)
    write_csv(out / f"{c.name}_baseline.csv", experiments.run_baseline(c, args.jobs), experiments.BASELINE_COLUMNS)
    return 0


def cmd_sweep(args) -> int:
    c = _load(args, SweepCampaign, {"kind": args.kind})
    if c.kind != args.kind:
        raise ConfigError(f"$.kind: config declares {c.kind!r} but command asked for {args.kind!r}")
    out = _out_dir(args, c.output_dir)
    write_csv(out / f"{c.name}_{c.kind}.csv", experiments.run_sweep(c, args.jobs), experiments.SWEEP_COLUMNS)
    return 0


def cmd_tune(args) -> int:
    c = _load(args, TuneCampaign)
    out = _out_dir(args, c.output_dir)
    result, cfg = experiments.run_tune(c, args.jobs)
    _dump_json(out / f"{c.name}_tune.json", result.report(cfg))
    result.bank.save(out / f"{c.name}_tuned_bank.json")
    return 0


def cmd_fit(args) -> int:
    c = _load(args, FitCampaign)
    out = _out_dir(args, c.output_dir)
    bank, report = experiments.run_fit(c)
    bank.save(out / f"{c.name}_bank.json")
    _dump_json(out / f"{c.name}_fit_report.json", report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netconsensus", description="Simulate consensus games on networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, replications=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help=f"output directory (default: config output_dir, ${OUT_ENV}, ./results)")
        p.add_argument("--seed", type=int, help="override the master seed")
        if replications:
            p.add_argument("--replications", type=int, help="override replications per cell")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.set_defaults(func=func)
        return p

    add("simulate", cmd_simulate, "run a campaign and write a summary CSV")
    add("baseline", cmd_baseline, "delay curve for the majority/follow-the-leader baseline")
    sw = add("sweep", cmd_sweep, "topology parameter sweep")
    sw.add_argument("kind", choices=["density", "clustering", "gamma"])
    add("place", cmd_place, "compare the four placement strategy combinations")
    add("tune", cmd_tune, "coordinate greedy tuning of colour-change models")
    add("fit", cmd_fit, "refit all behaviour models from game logs", replications=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GenerationInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
