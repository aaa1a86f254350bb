"""Roll block-level OD flows up to tract-level commuter marginals.

Aggregation is a fold into per-tract ``[inbound, outbound, intra]`` counters.
Partial tallies built over disjoint pieces of the input merge by per-key
addition, so the result does not depend on input order or on how the input
was split between workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, TextIO

from .errors import BadGeoid
from .lodes import ODFlow, ParseCounter, ParseOptions, map_chunks, parse_lines

TRACT_GEOID_LENGTH = 11
MARGINALS_HEADER = ("geoid", "inbound", "outbound", "intra")


@dataclass(frozen=True)
class FlowSummary:
    geoid: str
    inbound: int
    outbound: int
    intra: int = 0

    def __post_init__(self):
        if min(self.inbound, self.outbound, self.intra) < 0:
            raise ValueError(f"{self.geoid}: negative flow count")
        if self.intra > min(self.inbound, self.outbound):
            raise ValueError(f"{self.geoid}: intra-tract jobs exceed inbound or outbound")


def block_to_tract(block_geoid: str) -> str:
    """Truncate a 15-digit block GEOID to its 11-digit tract GEOID."""
    if len(block_geoid) != 15 or not (block_geoid.isascii() and block_geoid.isdigit()):
        raise BadGeoid(f"not a 15-digit block geocode: {block_geoid!r}")
    return block_geoid[:TRACT_GEOID_LENGTH]


def net_flow(summary: FlowSummary) -> int:
    """Inbound minus outbound commuters; negative means a net outflow."""
    return summary.inbound - summary.outbound


class FlowTally:
    """Mutable accumulator behind :func:`aggregate`.

    ``counts`` maps tract GEOID to ``[inbound, outbound, intra]``.
    """

    def __init__(self):
        self.counts: dict[str, list[int]] = {}
        self.jobs = 0
        self._tract_of: dict[str, str] = {}

    def _tract(self, block: str) -> str:
        tract = self._tract_of.get(block)
        if tract is None:
            tract = self._tract_of[block] = block_to_tract(block)
        return tract

    def add_flows(self, flows: Iterable[ODFlow]) -> "FlowTally":
        counts = self.counts
        tract_of = self._tract_of
        tract = self._tract
        jobs_total = 0
        for work, home, jobs in flows:
            w = tract_of.get(work) or tract(work)
            h = tract_of.get(home) or tract(home)
            c = counts.get(w)
            if c is None:
                c = counts[w] = [0, 0, 0]
            c[0] += jobs
            if w == h:
                c[1] += jobs
                c[2] += jobs
            else:
                c = counts.get(h)
                if c is None:
                    c = counts[h] = [0, 0, 0]
                c[1] += jobs
            jobs_total += jobs
        self.jobs += jobs_total
        # the block cache only speeds up one pass; don't ship it between processes
        if len(tract_of) > 2_000_000:
            tract_of.clear()
        return self

    def merge(self, other: "FlowTally") -> "FlowTally":
        counts = self.counts
        for geoid, (i, o, x) in other.counts.items():
            c = counts.get(geoid)
            if c is None:
                counts[geoid] = [i, o, x]
            else:
                c[0] += i
                c[1] += o
                c[2] += x
        self.jobs += other.jobs
        return self

    def summaries(self) -> dict[str, FlowSummary]:
        return {g: FlowSummary(g, *self.counts[g]) for g in sorted(self.counts)}

    def __getstate__(self):
        return {"counts": self.counts, "jobs": self.jobs}

    def __setstate__(self, state):
        self.counts = state["counts"]
        self.jobs = state["jobs"]
        self._tract_of = {}


def aggregate(flows: Iterable[ODFlow]) -> dict[str, FlowSummary]:
    """Sum jobs into per-tract inbound, outbound and intra-tract counts.

    Every tract that appears as a work or home location gets an entry.  The
    returned mapping is ordered by GEOID.
    """
    return FlowTally().add_flows(flows).summaries()


def merge_summaries(*parts: Mapping[str, FlowSummary]) -> dict[str, FlowSummary]:
    """Combine tract marginals computed on disjoint pieces of one flow stream."""
    tally = FlowTally()
    for part in parts:
        for s in part.values():
            c = tally.counts.setdefault(s.geoid, [0, 0, 0])
            c[0] += s.inbound
            c[1] += s.outbound
            c[2] += s.intra
    return tally.summaries()


def _tally_chunk(args) -> tuple[FlowTally, ParseCounter]:
    layout, lineno, lines, lenient = args
    flows, counter = parse_lines(lines, lineno, layout, lenient)
    return FlowTally().add_flows(flows), counter


def aggregate_od_file(
    source, options: ParseOptions | None = None, counter: ParseCounter | None = None
) -> dict[str, FlowSummary]:
    """Parse and aggregate a LODES OD file in one pass, keeping only marginals.

    Each chunk is reduced to a partial tally (in a worker process when
    ``options.workers > 1``) and partials are merged in file order.
    """
    total = FlowTally()
    for part, part_counter in map_chunks(_tally_chunk, source, options):
        total.merge(part)
        if counter is not None:
            counter.merge(part_counter)
    return total.summaries()


def write_marginals_csv(summaries: Mapping[str, FlowSummary], fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(MARGINALS_HEADER)
    for geoid in sorted(summaries):
        s = summaries[geoid]
        writer.writerow((s.geoid, s.inbound, s.outbound, s.intra))


def read_marginals_csv(fh: TextIO) -> dict[str, FlowSummary]:
    reader = csv.DictReader(fh)
    out = {}
    for row in reader:
        s = FlowSummary(row["geoid"], int(row["inbound"]), int(row["outbound"]), int(row["intra"]))
        out[s.geoid] = s
    return out
