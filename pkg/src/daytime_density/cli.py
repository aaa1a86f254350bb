"""Command-line entry point: ``daytime-density {fetch,run,stats,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .census import parse_state_boundary, parse_tracts
from .errors import DaytimeDensityError, IngestError, NetworkError, OutputError, ValidationError
from .fetch import DEFAULT_URLS, fetch
from .lodes import ParseCounter, ParseOptions, parse_od_stream, validate_state
from .flows import FlowTally
from .pipeline import RunConfig, StageError, is_url, load_config, run, stats_from_csv
from .report import report_dict, report_text

log = logging.getLogger("daytime_density")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INGEST = 2
EXIT_IO = 3


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (IngestError, ValueError)):
        return EXIT_INGEST
    if isinstance(exc, (OutputError, NetworkError, OSError)):
        return EXIT_IO
    return EXIT_INGEST


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lodes", help="LODES OD file (path or URL)")
    p.add_argument("--tracts", help="DP1 tract shapefile bundle (directory, .shp or .zip; path or URL)")
    p.add_argument("--states", help="states shapefile bundle (path or URL)")
    p.add_argument("--state", dest="state_fips", help="2-digit state FIPS code (default 06)")
    p.add_argument("--cache-dir", help="download cache (default $DAYTIME_DENSITY_CACHE or ~/.cache/daytime-density)")
    p.add_argument("--lenient", action="store_true", default=None, help="skip and count malformed OD rows")
    p.add_argument("--threads", type=int, help="worker processes for OD parsing (default: all cores)")
    p.add_argument("--counties", dest="county_fips", help="comma-separated 5-digit county FIPS codes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daytime-density",
        description="Estimate tract daytime population density from census and LODES data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download the input files into the cache")
    p.add_argument("urls", nargs="*", help="URLs to fetch (default: the three 2010 inputs)")
    p.add_argument("--cache-dir")

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--config", help="YAML/JSON config file; flags override it")
    _add_input_args(p)
    p.add_argument("-k", "--quantiles", dest="quantile_k", type=int, help="number of choropleth classes (default 7)")
    p.add_argument("--top-n", type=int, help="rows in the densest-tracts table (default 10)")
    p.add_argument("-o", "--out", dest="output_dir", help="output directory (default ./output)")
    p.add_argument("--dump-marginals", action="store_true", default=None, help="also write marginals.csv")

    p = sub.add_parser("stats", help="recompute the report from a previous tracts.csv")
    p.add_argument("csv")
    p.add_argument("-k", "--quantiles", dest="quantile_k", type=int, default=7)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--json", help="also write the machine-readable report here")

    p = sub.add_parser("validate", help="ingest-only checks of the input files")
    _add_input_args(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = load_config(args.config) if getattr(args, "config", None) else {}
    for key in (
        "lodes", "tracts", "states", "state_fips", "cache_dir", "lenient", "threads",
        "county_fips", "quantile_k", "top_n", "output_dir", "dump_marginals",
    ):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return RunConfig.from_mapping(data)


def cmd_fetch(args) -> int:
    for url in args.urls or DEFAULT_URLS.values():
        path = fetch(url, args.cache_dir)
        print(f"{url} -> {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = config_from_args(args)
    result = run(config)
    sys.stdout.write(report_text(result.report))
    print(f"\nwrote {', '.join(sorted(result.outputs))} to {config.output_dir}")
    return EXIT_OK


def cmd_stats(args) -> int:
    report = stats_from_csv(args.csv, args.quantile_k, args.top_n)
    sys.stdout.write(report_text(report))
    if args.json:
        Path(args.json).write_text(json.dumps(report_dict(report), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    """Parse every input and check cross-file consistency without computing anything."""
    config = config_from_args(args)
    config.validate()

    def local(source):
        return fetch(source, config.cache_dir) if is_url(source) else source

    counter = ParseCounter()
    tally = FlowTally()
    out_of_state = 0

    def checked(flows):
        nonlocal out_of_state
        for f in flows:
            if not validate_state(f, config.state_fips):
                out_of_state += 1
            yield f

    options = ParseOptions(lenient=config.lenient)
    tally.add_flows(checked(parse_od_stream(local(config.lodes), options, counter)))
    print(f"OD rows: {counter.rows_parsed:,} parsed, {counter.rows_skipped:,} skipped, {counter.jobs:,} jobs")
    print(f"OD rows outside state {config.state_fips}: {out_of_state:,}")
    tracts = parse_tracts(local(config.tracts), geoid_prefix=config.state_fips)
    known = {t.geoid for t in tracts}
    missing = sorted(set(tally.counts) - known)
    print(f"tracts in state {config.state_fips}: {len(tracts):,} ({sum(t.zero_area for t in tracts)} zero-area)")
    print(f"OD tracts missing from the tract file: {len(missing):,}" + (f" (e.g. {missing[0]})" if missing else ""))
    state = parse_state_boundary(local(config.states), config.state_fips)
    minx, miny, maxx, maxy = state.geometry.bounds
    print(f"state {config.state_fips} outline: {len(state.geometry.geoms)} polygon(s), bbox "
          f"({minx:.4f}, {miny:.4f}, {maxx:.4f}, {maxy:.4f})")
    if out_of_state or missing:
        raise IngestError("inputs are inconsistent (see above)")
    return EXIT_OK


COMMANDS = {"fetch": cmd_fetch, "run": cmd_run, "stats": cmd_stats, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DaytimeDensityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
