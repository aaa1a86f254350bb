"""End-to-end run: fetch → ingest → aggregate → densities → statistics → outputs."""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import __version__
from .census import BAY_AREA_COUNTIES, filter_region, parse_state_boundary, parse_tracts
from .errors import DaytimeDensityError, IngestError, OutputError, ValidationError
from .fetch import DEFAULT_URLS, fetch, sha256_file
from .flows import aggregate_od_file, write_marginals_csv
from .geo import classify_features, emit_csv, emit_geojson, emit_style, read_density_csv
from .lodes import ParseCounter, ParseOptions
from .report import report_csv, report_dict, report_text
from .stats import DEFAULT_K, DEFAULT_TOP_N, StatsReport, build_report, compute_densities

log = logging.getLogger(__name__)

OUTPUT_FILES = ("tracts.csv", "tracts.geojson", "style.json", "report.txt", "report.json", "report.csv")


@dataclass
class RunConfig:
    state_fips: str = "06"
    county_fips: list[str] = field(default_factory=lambda: list(BAY_AREA_COUNTIES))
    quantile_k: int = DEFAULT_K
    top_n: int = DEFAULT_TOP_N
    lodes: str = DEFAULT_URLS["lodes"]
    tracts: str = DEFAULT_URLS["tracts"]
    states: str = DEFAULT_URLS["states"]
    output_dir: str = "output"
    lenient: bool = False
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    cache_dir: str | None = None
    palette: list[str] | None = None
    dump_marginals: bool = False
    checksums: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.state_fips) != 2 or not self.state_fips.isdigit():
            raise ValidationError(f"state_fips must be 2 digits, got {self.state_fips!r}")
        if not self.county_fips:
            raise ValidationError("county_fips is empty")
        bad = [c for c in self.county_fips if len(c) != 5 or not c.isdigit() or not c.startswith(self.state_fips)]
        if bad:
            raise ValidationError(f"county codes {bad} are not 5-digit codes in state {self.state_fips}")
        if self.quantile_k < 2:
            raise ValidationError(f"quantile_k must be at least 2, got {self.quantile_k}")
        if self.top_n < 0:
            raise ValidationError(f"top_n must be non-negative, got {self.top_n}")
        if self.threads < 1:
            raise ValidationError("threads must be at least 1")
        if self.palette is not None and len(self.palette) != self.quantile_k:
            raise ValidationError(f"palette has {len(self.palette)} colours for {self.quantile_k} classes")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        if isinstance(data.get("county_fips"), str):
            data["county_fips"] = [c.strip() for c in data["county_fips"].split(",") if c.strip()]
        for key in ("state_fips",):
            if key in data:
                data[key] = str(data[key]).zfill(2)
        if "county_fips" in data:
            data["county_fips"] = [str(c).zfill(5) for c in data["county_fips"]]
        return cls(**data)


def load_config(path) -> dict[str, Any]:
    """Read a YAML (or JSON) config file into a plain mapping."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must hold a mapping")
    return data


class StageError(DaytimeDensityError):
    """An error raised inside a pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


@dataclass
class RunResult:
    report: StatsReport
    outputs: dict[str, Path]
    provenance: dict[str, Any]
    counter: ParseCounter
    statewide_headcount_delta: int


def is_url(source: str) -> bool:
    return source.startswith(("http://", "https://"))


def resolve_input(source: str, config: RunConfig, name: str) -> Path:
    if is_url(source):
        return fetch(source, config.cache_dir, sha256=config.checksums.get(name))
    path = Path(source)
    if not path.exists():
        raise IngestError(f"{name} input {source} does not exist")
    return path


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (DaytimeDensityError, OSError)):
            raise StageError(self.name, exc) from exc
        return False


def _provenance(config: RunConfig, inputs: Mapping[str, Path]) -> dict[str, Any]:
    return {
        "tool": f"daytime_density {__version__}",
        "inputs": {
            name: {"source": getattr(config, name), "sha256": sha256_file(path)} for name, path in inputs.items()
        },
        "config": {k: v for k, v in asdict(config).items() if k not in ("threads", "output_dir", "cache_dir")},
    }


def run(config: RunConfig) -> RunResult:
    """Run the whole pipeline and write every output into ``config.output_dir``.

    Outputs are written to a scratch directory and moved into place only when
    every stage has succeeded, so a failed run leaves no partial files.
    """
    with _Stage("config"):
        config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
    try:
        with _Stage("fetch"):
            inputs = {name: resolve_input(getattr(config, name), config, name) for name in ("lodes", "tracts", "states")}

        with _Stage("lodes"):
            counter = ParseCounter()
            options = ParseOptions(lenient=config.lenient, workers=config.threads)
            summaries = aggregate_od_file(inputs["lodes"], options, counter)
            foreign = [g for g in summaries if not g.startswith(config.state_fips)]
            if foreign:
                raise IngestError(
                    f"{len(foreign)} tract(s) outside state {config.state_fips} in the OD file, e.g. {foreign[0]}"
                )
            log.info("parsed %d OD rows (%d skipped), %d jobs", counter.rows_parsed, counter.rows_skipped, counter.jobs)
            if config.dump_marginals:
                with open(scratch / "marginals.csv", "w", newline="") as fh:
                    write_marginals_csv(summaries, fh)

        with _Stage("tracts"):
            state_tracts = parse_tracts(inputs["tracts"], geoid_prefix=config.state_fips)
            known = {t.geoid for t in state_tracts}
            unmatched = [g for g in summaries if g not in known]
            if unmatched:
                log.warning("%d OD tract(s) have no census tract record, e.g. %s", len(unmatched), unmatched[0])
            region = filter_region(state_tracts, config.county_fips)
            if not region:
                raise IngestError(f"no tracts found for counties {config.county_fips}")

        with _Stage("densities"):
            statewide = compute_densities(state_tracts, summaries)
            headcount_delta = sum(r.daytime_pop - r.population for r in statewide)
            region_set = set(config.county_fips)
            records = [r for r in statewide if r.geoid[:5] in region_set]
            report = build_report(records, config.quantile_k, config.top_n)

        with _Stage("geo"):
            state = parse_state_boundary(inputs["states"], config.state_fips)
            features = classify_features(region, records, report.classes, state)
            emit_csv(records, scratch / "tracts.csv")
            emit_geojson(features, scratch / "tracts.geojson")
            emit_style(report.quantile_breaks, config.palette, scratch / "style.json")

        with _Stage("report"):
            provenance = _provenance(config, inputs)
            provenance["statewide_headcount_delta"] = headcount_delta
            provenance["od_rows"] = {"parsed": counter.rows_parsed, "skipped": counter.rows_skipped}
            (scratch / "report.txt").write_text(report_text(report, provenance), encoding="utf-8")
            (scratch / "report.json").write_text(
                json.dumps(report_dict(report, provenance), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            (scratch / "report.csv").write_text(report_csv(report), encoding="utf-8")

            outputs = {}
            for item in sorted(scratch.iterdir()):
                target = out_dir / item.name
                os.replace(item, target)
                outputs[item.name] = target
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    return RunResult(report, outputs, provenance, counter, headcount_delta)


def stats_from_csv(path, k: int = DEFAULT_K, top_n: int = DEFAULT_TOP_N) -> StatsReport:
    """Recompute the report from a ``tracts.csv`` written by a previous run."""
    return build_report(read_density_csv(path), k, top_n)
