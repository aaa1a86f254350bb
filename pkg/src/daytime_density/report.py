"""Text, JSON and CSV renderings of a :class:`StatsReport`."""

from __future__ import annotations

import csv
import io
import json
from typing import Any, Mapping

from .stats import DensityRecord, StatsReport, format_swell, swell_factor

TABLE_COLUMNS = ("Tract", "Population", "Daytime Pop", "Land Area (km²)", "Daytime Density")


def top_n_rows(records: list[DensityRecord]) -> list[tuple[str, str, str, str, str]]:
    return [
        (r.geoid, f"{r.population}", f"{r.daytime_pop}", f"{r.land_area_km2:.3f}", f"{r.daytime_density:.0f}")
        for r in records
    ]


def format_table(records: list[DensityRecord]) -> str:
    """Fixed-width table in the usual column order, plus net flow and swell."""
    header = TABLE_COLUMNS + ("Net Flow", "Swell")
    rows = [row + (f"{r.net_flow:+d}", format_swell(swell_factor(r))) for row, r in zip(top_n_rows(records), records)]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    for row in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)


def _num(x: float | None, fmt: str = ",.0f") -> str:
    return "n/a" if x is None else format(x, fmt)


def report_text(report: StatsReport, provenance: Mapping[str, Any] | None = None) -> str:
    lines = [
        "Daytime population density report",
        "==================================",
        f"Tracts: {report.n_tracts:,} ({report.n_excluded} zero-area excluded from density statistics, "
        f"{report.n_negative} with negative daytime population)",
        f"Median daytime density: {_num(report.median_daytime_density)} persons/km²",
        f"Gini, daytime population:   {report.gini_daytime:.4f}",
        f"Gini, nighttime population: {report.gini_nighttime:.4f}"
        f"  (daytime {100 * (report.gini_ratio - 1):+.0f}%)",
        f"Quantile classes (k={report.k}), sizes {report.class_sizes}",
        "  breaks: " + ", ".join(_num(b) for b in report.quantile_breaks),
        f"Sigma, top quantile: {_num(report.top_quantile_sigma)}; "
        f"mean sigma of other quantiles: {_num(report.mean_other_sigma)}"
        + ("" if report.sigma_ratio is None else f" (ratio {report.sigma_ratio:,.1f})"),
        f"Head count: population {report.total_population:,}, daytime {report.total_daytime_pop:,} "
        f"(difference {report.total_daytime_pop - report.total_population:+,})",
        "",
        f"Top {len(report.top_n)} tracts by daytime density (persons/km²)",
        format_table(report.top_n),
        f"Tracts with a net outflow among these: {report.top_n_net_outflow}",
    ]
    if report.top_n:
        first = report.top_n[0]
        lines.append(f"Densest tract {first.geoid}: population swells {format_swell(swell_factor(first))} by day")
    if provenance:
        lines += ["", "Provenance", "----------"]
        lines.append(f"tool: {provenance.get('tool')}")
        for name, info in provenance.get("inputs", {}).items():
            lines.append(f"input {name}: {info.get('source')} sha256={info.get('sha256')}")
        lines.append("config: " + json.dumps(provenance.get("config", {}), sort_keys=True))
    return "\n".join(lines) + "\n"


def record_dict(r: DensityRecord) -> dict[str, Any]:
    return {
        "geoid": r.geoid,
        "population": r.population,
        "inbound": r.inbound,
        "outbound": r.outbound,
        "daytime_pop": r.daytime_pop,
        "land_area_km2": r.land_area_km2,
        "daytime_density": r.daytime_density,
        "nighttime_density": r.nighttime_density,
        "net_flow": r.net_flow,
        "swell_factor": swell_factor(r),
        "excluded": r.excluded,
    }


def report_dict(report: StatsReport, provenance: Mapping[str, Any] | None = None) -> dict[str, Any]:
    out = {
        "k": report.k,
        "n_tracts": report.n_tracts,
        "n_excluded": report.n_excluded,
        "n_negative": report.n_negative,
        "median_daytime_density": report.median_daytime_density,
        "quantile_breaks": report.quantile_breaks,
        "class_sizes": report.class_sizes,
        "per_quantile_sigma": report.per_quantile_sigma,
        "top_quantile_sigma": report.top_quantile_sigma,
        "mean_other_sigma": report.mean_other_sigma,
        "sigma_ratio": report.sigma_ratio,
        "gini_daytime": report.gini_daytime,
        "gini_nighttime": report.gini_nighttime,
        "gini_ratio": report.gini_ratio,
        "total_population": report.total_population,
        "total_daytime_pop": report.total_daytime_pop,
        "top_n_net_outflow": report.top_n_net_outflow,
        "top_n": [record_dict(r) for r in report.top_n],
    }
    if provenance is not None:
        out["provenance"] = dict(provenance)
    return out


def report_csv(report: StatsReport) -> str:
    """Flat ``metric,value`` rows for spreadsheets."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("metric", "value"))
    scalars = report_dict(report)
    for key in (
        "k", "n_tracts", "n_excluded", "n_negative", "median_daytime_density", "top_quantile_sigma",
        "mean_other_sigma", "sigma_ratio", "gini_daytime", "gini_nighttime", "gini_ratio",
        "total_population", "total_daytime_pop", "top_n_net_outflow",
    ):
        value = scalars[key]
        w.writerow((key, "" if value is None else repr(value) if isinstance(value, float) else value))
    for i, b in enumerate(report.quantile_breaks):
        w.writerow((f"break_{i}", repr(b)))
    for i, s in enumerate(report.class_sizes):
        w.writerow((f"class_size_{i}", s))
    for i, s in enumerate(report.per_quantile_sigma or ()):
        w.writerow((f"sigma_{i}", repr(s)))
    for rank, r in enumerate(report.top_n, 1):
        w.writerow((f"top_{rank}", r.geoid))
    return buf.getvalue()
