"""Command-line entry point: ``nodmt {generate,run,cluster,report,replay}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import campaign
from .campaign import CampaignConfig, ConfigError, SchemaError, SuiteExhaustedError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INVARIANT = 3

REFERENCE_CONFIG = Path(__file__).parent / "data" / "reference_config.json"


class InvariantBreach(RuntimeError):
    pass


def _resolve_config(args, fallback_dir: bool = False) -> CampaignConfig:
    if args.config:
        cfg = campaign.load_config(args.config)
    elif fallback_dir and args.out and (Path(args.out) / campaign.CONFIG_FILE).exists():
        cfg = campaign.load_config(Path(args.out) / campaign.CONFIG_FILE)
    else:
        cfg = campaign.load_config(REFERENCE_CONFIG)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["output_dir"] = args.out
    if getattr(args, "planner", None):
        changes["planners"] = args.planner
    return cfg.replace(**changes) if changes else cfg


def cmd_generate(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    suite = campaign.generate_suite(cfg)
    lines = "".join(json.dumps(c.to_dict(), separators=(",", ":")) + "\n" for c in suite)
    (out / campaign.SUITE_FILE).write_text(lines, encoding="utf-8")
    (out / campaign.CONFIG_FILE).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(suite)} cases to {out / campaign.SUITE_FILE}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    report = campaign.run_campaign(cfg, jobs=args.jobs)
    out = Path(cfg.output_dir)
    print((out / "report.txt").read_text(encoding="utf-8"), end="")
    print(f"\n{report['n_records']} records written to {out / campaign.RECORDS_FILE}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _resolve_config(args, fallback_dir=True)
    out = Path(cfg.output_dir)
    records = campaign.read_records(out / campaign.RECORDS_FILE)
    clusters = campaign.compute_diversity(records, cfg)
    (out / campaign.CLUSTERS_FILE).write_text(json.dumps(clusters, indent=2) + "\n", encoding="utf-8")
    for c in clusters:
        print(f"{c['pool_id']:<40} n={c['n']:<4} VD={c['vd']}{'  (flagged: n<3)' if c['flagged'] else ''}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _resolve_config(args, fallback_dir=True)
    out = Path(cfg.output_dir)
    clusters = None
    if (out / campaign.CLUSTERS_FILE).exists():
        clusters = json.loads((out / campaign.CLUSTERS_FILE).read_text(encoding="utf-8"))
    report, text, table_csv = campaign.summarize(out / campaign.RECORDS_FILE, cfg, clusters)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(table_csv, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _resolve_config(args, fallback_dir=True)
    records_path = Path(cfg.output_dir) / campaign.RECORDS_FILE
    fresh, stored = campaign.replay(cfg, args.source_id, records_path if records_path.exists() else None)
    if not records_path.exists():
        for r in fresh:
            print(json.dumps(r, separators=(",", ":")))
        return EXIT_OK
    if fresh != stored:
        raise InvariantBreach(
            f"replay of {args.source_id} diverged: {len(fresh)} fresh vs {len(stored)} stored records"
        )
    print(f"replay of {args.source_id}: {len(fresh)} records reproduced exactly")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="campaign config (strict JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides config output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nodmt", description="Metamorphic testing of grid navigation planners.")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", parents=[common], help="write the source suite to a directory")
    g.set_defaults(func=cmd_generate)
    r = sub.add_parser("run", parents=[common], help="run the full campaign")
    r.add_argument("--planner", action="append", help="planner id (repeatable)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("cluster", parents=[common], help="recompute violation diversity from records")
    c.set_defaults(func=cmd_cluster)
    rep = sub.add_parser("report", parents=[common], help="render summary tables from records")
    rep.set_defaults(func=cmd_report)
    rp = sub.add_parser("replay", parents=[common], help="re-execute one source case and compare")
    rp.add_argument("source_id")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (ConfigError, SchemaError, SuiteExhaustedError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (InvariantBreach, AssertionError) as e:
        print(f"invariant breach: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
