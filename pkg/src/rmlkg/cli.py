"""Command line: ``rmlkg run | gen-data | gen-mapping | bench``.

Exit codes: 0 success, 1 unexpected failure, 2 usage/config error,
3 mapping error, 4 source error (no map produced output), 5 output error,
6 run finished with per-map errors (partial output).
"""

from __future__ import annotations

import argparse
import json
import logging
import resource
import sys
from pathlib import Path

from .bench import TestbedSpec, generate_dataset, generate_mappings, make_grid, run_benchmark
from .engine import MODES, run_system
from .mapping import MappingError, OperatorKind, load_mapping
from .sources import SourceError
from .terms import TermError

log = logging.getLogger("rmlkg")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MAPPING, EXIT_SOURCE, EXIT_OUTPUT, EXIT_PARTIAL = range(7)
KINDS = [k.value for k in OperatorKind]
CONFIG_KEYS = {"mapping", "output", "mode", "report", "seed", "timeout"}


class ConfigError(Exception):
    pass


def read_config(path) -> dict:
    """Flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{path}:{n}: expected key=value")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _merge_config(args) -> None:
    if not getattr(args, "config", None):
        return
    for key, value in read_config(args.config).items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _peak_rss_bytes() -> int:
    # ru_maxrss survives exec, so a child forked from a large parent inherits its peak;
    # VmHWM belongs to this address space only
    try:
        with open("/proc/self/status", encoding="ascii") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def cmd_run(args) -> int:
    if not args.mapping:
        raise ConfigError("no mapping given (--mapping or config 'mapping=')")
    mode = args.mode or "optimized"
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if not Path(args.mapping).is_file():
        raise MappingError("mapping file not found", path=str(args.mapping))
    dis = load_mapping(args.mapping)
    report = run_system(dis, output=args.output, mode=mode)
    data = report.to_dict()
    data["peak_rss_bytes"] = _peak_rss_bytes()
    data["mapping"] = str(args.mapping)
    if args.report:
        Path(args.report).write_text(json.dumps(data, indent=2), encoding="utf-8")
    print(f"{mode}: {report.triples_emitted} triples in {report.wall_time:.3f}s "
          f"(ops {report.total_ops}, predicted {report.predicted_ops.low:g}..{report.predicted_ops.high:g})")
    for err in report.errors:
        print(f"error in {err['map']}: {err['error']}", file=sys.stderr)
    if not report.partial:
        return EXIT_OK
    if report.triples_emitted == 0 and all(e["error"].startswith("SourceError") for e in report.errors):
        return EXIT_SOURCE
    return EXIT_PARTIAL


def cmd_gen_data(args) -> int:
    spec = TestbedSpec(args.rows, args.dup_rate, args.repeat, args.kind, 1, int(args.seed or 0),
                       args.match_rate, args.parent_rows)
    for role, path in generate_dataset(spec, args.out).items():
        print(f"{role}: {path}")
    return EXIT_OK


def cmd_gen_mapping(args) -> int:
    text = generate_mappings(args.kind, args.poms, args.child_source, args.parent_source)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _int_list(text: str) -> list:
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(float(part)))
    return out


def cmd_bench(args) -> int:
    grid = make_grid(_int_list(args.rows), [float(x) for x in args.dup_rates.split(",")],
                     args.kinds.split(","), _int_list(args.poms), int(args.seed or 0), args.repeat)
    timeout = float(args.timeout) if args.timeout else None
    report = run_benchmark(grid, args.modes.split(","), args.reps, timeout, args.workdir)
    json_path, csv_path = report.write(args.report or Path(args.workdir) / "report")
    for row in report.cells:
        extra = f"{row.get('wall_time', float('nan')):.3f}s" if row["status"] == "OK" else ""
        print(f"{row['kind']}{row['pom_count']} {row['rows']} {row['duplicate_rate']} "
              f"{row['mode']}: {row['status']} {extra}")
    print(f"report: {json_path} {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmlkg", description="RML knowledge graph materializer")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a mapping")
    run.add_argument("--config")
    run.add_argument("--mapping")
    run.add_argument("--output")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--report")
    run.set_defaults(func=cmd_run)

    gd = sub.add_parser("gen-data", help="write a synthetic testbed")
    gd.add_argument("--rows", type=int, default=10_000)
    gd.add_argument("--dup-rate", type=float, default=0.25)
    gd.add_argument("--repeat", type=int, default=20)
    gd.add_argument("--kind", choices=KINDS, default="SOM")
    gd.add_argument("--match-rate", type=float, default=1.0)
    gd.add_argument("--parent-rows", type=int)
    gd.add_argument("--seed")
    gd.add_argument("--out", required=True)
    gd.set_defaults(func=cmd_gen_data)

    gm = sub.add_parser("gen-mapping", help="write a mapping for a testbed")
    gm.add_argument("--kind", choices=KINDS, default="SOM")
    gm.add_argument("--poms", type=int, default=1)
    gm.add_argument("--child-source", default="data.csv")
    gm.add_argument("--parent-source", default="parent.csv")
    gm.add_argument("--out")
    gm.set_defaults(func=cmd_gen_mapping)

    b = sub.add_parser("bench", help="run the benchmark grid")
    b.add_argument("--config")
    b.add_argument("--rows", default="10000")
    b.add_argument("--dup-rates", default="0.25,0.75")
    b.add_argument("--kinds", default="SOM,ORM,OJM")
    b.add_argument("--poms", default="1")
    b.add_argument("--modes", default="optimized,naive")
    b.add_argument("--repeat", type=int, default=20)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--timeout")
    b.add_argument("--seed")
    b.add_argument("--workdir", default="bench-work")
    b.add_argument("--report")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        _merge_config(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        if isinstance(exc, MappingError):
            print(f"mapping error: {exc}", file=sys.stderr)
            return EXIT_MAPPING
        if isinstance(exc, TermError):
            print(f"output error: {exc}", file=sys.stderr)
            return EXIT_OUTPUT
        if isinstance(exc, OSError):
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_OUTPUT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SourceError as exc:
        print(f"source error: {exc}", file=sys.stderr)
        return EXIT_SOURCE
