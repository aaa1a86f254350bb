"""Streaming reader for LODES origin-destination CSV files.

LODES7 OD files look like::

    w_geocode,h_geocode,S000,SA01,SA02,SA03,SE01,SE02,SE03,SI01,SI02,SI03,createdate
    060014001001007,060014001001007,1,0,1,0,0,1,0,0,0,1,20130912

Only the two block geocodes and ``S000`` (total jobs) are kept.  The file may
be gzip-compressed or plain; the format is sniffed from the first two bytes.
Rows are read line by line so memory use does not depend on file length.
"""

from __future__ import annotations

import collections
import concurrent.futures
import gzip
import io
import logging
import os
import zlib
from contextlib import contextmanager
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, NamedTuple, TextIO

from .errors import MalformedRow, MissingColumn, TruncatedGzip

log = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"
WORK_COLUMN = "w_geocode"
HOME_COLUMN = "h_geocode"
JOBS_COLUMN = "S000"
BLOCK_GEOID_LENGTH = 15


class ODFlow(NamedTuple):
    """One origin-destination record: ``jobs`` held by residents of
    ``home_block`` at workplaces in ``work_block``."""

    work_block: str
    home_block: str
    jobs: int


@dataclass
class ParseOptions:
    lenient: bool = False
    chunk_rows: int = 100_000
    workers: int = 1


@dataclass
class ParseCounter:
    """Running tally of rows read, exposed for the CLI summary."""

    rows_parsed: int = 0
    rows_skipped: int = 0
    jobs: int = 0

    def merge(self, other: "ParseCounter") -> None:
        self.rows_parsed += other.rows_parsed
        self.rows_skipped += other.rows_skipped
        self.jobs += other.jobs


class Layout(NamedTuple):
    """Column positions resolved from the header row."""

    ncols: int
    work: int
    home: int
    jobs: int


_PATH_TYPES = (str, os.PathLike)


@contextmanager
def open_od_text(source) -> Iterator[TextIO]:
    """Open ``source`` (a path or binary file object) as text, transparently
    decompressing gzip input."""
    close = None
    if isinstance(source, _PATH_TYPES):
        raw = open(source, "rb")
        close = raw
    else:
        raw = source
    try:
        if not hasattr(raw, "peek"):
            raw = io.BufferedReader(raw)
        binary: IO[bytes] = raw
        if raw.peek(2)[:2] == GZIP_MAGIC:
            binary = gzip.GzipFile(fileobj=raw, mode="rb")
        text = io.TextIOWrapper(binary, encoding="utf-8-sig", newline="")
        try:
            yield text
        finally:
            text.detach()
    finally:
        if close is not None:
            close.close()


def _lines(text: TextIO) -> Iterator[str]:
    # a plain loop, not ``yield from``: closing this generator must not close
    # the caller's text wrapper
    try:
        for line in text:
            yield line
    except EOFError as exc:
        raise TruncatedGzip(f"gzip stream ended early: {exc}") from exc
    except (gzip.BadGzipFile, zlib.error) as exc:
        raise TruncatedGzip(f"corrupt gzip stream: {exc}") from exc


def parse_header(line: str) -> Layout:
    names = [name.strip().strip('"') for name in line.rstrip("\r\n").split(",")]
    missing = [c for c in (WORK_COLUMN, HOME_COLUMN, JOBS_COLUMN) if c not in names]
    if missing:
        raise MissingColumn(f"header lacks required column(s) {', '.join(missing)}")
    return Layout(len(names), names.index(WORK_COLUMN), names.index(HOME_COLUMN), names.index(JOBS_COLUMN))


def _is_block(code: str) -> bool:
    return len(code) == BLOCK_GEOID_LENGTH and code.isascii() and code.isdigit()


def parse_row(line: str, lineno: int, layout: Layout) -> ODFlow | None:
    """Parse one data line.  Returns None for a blank line; raises MalformedRow."""
    line = line.rstrip("\r\n")
    if not line:
        return None
    fields = line.split(",")
    if len(fields) != layout.ncols:
        raise MalformedRow(lineno, f"expected {layout.ncols} fields, got {len(fields)}", line)
    work = fields[layout.work]
    home = fields[layout.home]
    count = fields[layout.jobs]
    if not _is_block(work):
        raise MalformedRow(lineno, f"bad {WORK_COLUMN} {work!r}", line)
    if not _is_block(home):
        raise MalformedRow(lineno, f"bad {HOME_COLUMN} {home!r}", line)
    if not (count.isascii() and count.isdigit()):
        raise MalformedRow(lineno, f"non-numeric {JOBS_COLUMN} {count!r}", line)
    jobs = int(count)
    if jobs < 1:
        # LODES never writes zero-job rows
        raise MalformedRow(lineno, f"{JOBS_COLUMN} must be >= 1", line)
    return ODFlow(work, home, jobs)


def parse_lines(
    lines: Iterable[str], first_lineno: int, layout: Layout, lenient: bool = False
) -> tuple[list[ODFlow], ParseCounter]:
    """Parse a block of consecutive data lines starting at ``first_lineno``."""
    flows: list[ODFlow] = []
    counter = ParseCounter()
    append = flows.append
    ncols, iw, ih, ij = layout
    commas = ncols - 1
    maxsplit = max(iw, ih, ij) + 1
    valid_blocks: set[str] = set()
    jobs_total = 0
    # fast path for well-formed rows; anything odd goes through parse_row,
    # which either accepts it or raises with a precise message
    for lineno, line in enumerate(lines, first_lineno):
        line = line.rstrip("\r\n")
        if line.count(",") == commas:
            fields = line.split(",", maxsplit)
            work = fields[iw]
            home = fields[ih]
            count = fields[ij]
            if (
                (work in valid_blocks or _is_block(work))
                and (home in valid_blocks or _is_block(home))
                and count.isascii()
                and count.isdigit()
                and count.strip("0")
            ):
                valid_blocks.add(work)
                valid_blocks.add(home)
                jobs = int(count)
                append(ODFlow(work, home, jobs))
                jobs_total += jobs
                continue
        try:
            flow = parse_row(line, lineno, layout)
        except MalformedRow as exc:
            if not lenient:
                raise
            counter.rows_skipped += 1
            if counter.rows_skipped <= 10:
                log.warning("skipping %s", exc)
            continue
        if flow is not None:
            append(flow)
            jobs_total += flow.jobs
    counter.rows_parsed = len(flows)
    counter.jobs = jobs_total
    return flows, counter


def iter_chunks(text: TextIO, chunk_rows: int) -> Iterator[tuple[Layout, int, list[str]]]:
    """Read the header, then yield ``(layout, first_lineno, lines)`` blocks."""
    lines = _lines(text)
    header = next(lines, None)
    if header is None:
        raise MissingColumn("file is empty; expected a header row")
    layout = parse_header(header)
    lineno = 2
    chunk: list[str] = []
    for line in lines:
        chunk.append(line)
        if len(chunk) >= chunk_rows:
            yield layout, lineno, chunk
            lineno += len(chunk)
            chunk = []
    if chunk:
        yield layout, lineno, chunk


def _parse_chunk(args: tuple[Layout, int, list[str], bool]) -> tuple[list[ODFlow], ParseCounter]:
    layout, lineno, lines, lenient = args
    return parse_lines(lines, lineno, layout, lenient)


def map_chunks(fn, source, options: ParseOptions | None = None) -> Iterator:
    """Apply ``fn((layout, lineno, lines, lenient))`` to every chunk of ``source``.

    Results come back in file order.  With ``options.workers > 1`` the chunks
    are processed in a process pool with a bounded number in flight.
    """
    options = options or ParseOptions()
    with open_od_text(source) as text:
        chunks = ((layout, lineno, lines, options.lenient) for layout, lineno, lines in iter_chunks(text, options.chunk_rows))
        if options.workers <= 1:
            for chunk in chunks:
                yield fn(chunk)
            return
        with concurrent.futures.ProcessPoolExecutor(options.workers) as pool:
            pending: collections.deque = collections.deque()
            for chunk in chunks:
                pending.append(pool.submit(fn, chunk))
                if len(pending) >= 2 * options.workers:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()


def parse_od_stream(
    source, options: ParseOptions | None = None, counter: ParseCounter | None = None
) -> Iterator[ODFlow]:
    """Yield one :class:`ODFlow` per data row of ``source``, in file order.

    ``source`` is a path or a binary file object holding gzip or plain CSV.
    Malformed rows raise :class:`MalformedRow` with their 1-based line number
    unless ``options.lenient`` is set, in which case they are counted in
    ``counter.rows_skipped`` and dropped.
    """
    for flows, part in map_chunks(_parse_chunk, source, options):
        if counter is not None:
            counter.merge(part)
        yield from flows


def validate_state(flow: ODFlow, state_fips: str) -> bool:
    """True when both ends of ``flow`` lie in the state with the given FIPS code."""
    return flow.work_block.startswith(state_fips) and flow.home_block.startswith(state_fips)


def write_od_csv(flows: Iterable[ODFlow], fh: TextIO) -> int:
    """Write flows as a minimal three-column LODES CSV; returns rows written."""
    fh.write(f"{WORK_COLUMN},{HOME_COLUMN},{JOBS_COLUMN}\n")
    n = 0
    for flow in flows:
        fh.write(f"{flow.work_block},{flow.home_block},{flow.jobs}\n")
        n += 1
    return n
