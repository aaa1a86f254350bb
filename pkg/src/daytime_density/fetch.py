"""Download-once cache for the census and LODES input files.

Files land in ``<cache>/objects/<sha256>/<name>``; ``<cache>/index.json``
maps each URL to its object so a warm cache needs no network access.
Interrupted downloads resume from ``<cache>/partial`` with an HTTP Range
request.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import logging
import os
import zipfile
from pathlib import Path
from urllib.parse import urlparse

import requests

from .errors import ChecksumMismatch, NetworkError

log = logging.getLogger(__name__)

CACHE_ENV = "DAYTIME_DENSITY_CACHE"

TRACTS_URL = "http://www2.census.gov/geo/tiger/TIGER2010DP1/Tract_2010Census_DP1.zip"
STATES_URL = "http://www2.census.gov/geo/tiger/GENZ2010/gz_2010_us_040_00_500k.zip"
LODES_URL = "https://lehd.ces.census.gov/data/lodes/LODES7/ca/od/ca_od_main_JT00_2010.csv.gz"
DEFAULT_URLS = {"tracts": TRACTS_URL, "states": STATES_URL, "lodes": LODES_URL}

CHUNK = 1 << 20


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "daytime-density"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(CHUNK), b""):
            h.update(block)
    return h.hexdigest()


def check_integrity(path) -> bool:
    """Cheap structural check: gzip streams must decompress to the end and
    zip archives must pass their CRCs.  Other files always pass."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    try:
        if magic[:2] == b"\x1f\x8b":
            with gzip.open(path, "rb") as gz:
                while gz.read(CHUNK):
                    pass
        elif magic[:4] == b"PK\x03\x04":
            with zipfile.ZipFile(path) as zf:
                return zf.testzip() is None
    except (OSError, EOFError, zipfile.BadZipFile):
        return False
    return True


def _load_index(cache: Path) -> dict:
    try:
        return json.loads((cache / "index.json").read_text())
    except (FileNotFoundError, json.JSONDecodeError):
        return {}


def _save_index(cache: Path, index: dict) -> None:
    tmp = cache / "index.json.tmp"
    tmp.write_text(json.dumps(index, indent=2, sort_keys=True))
    os.replace(tmp, cache / "index.json")


def cached_path(url: str, cache_dir=None) -> Path | None:
    cache = Path(cache_dir) if cache_dir else default_cache_dir()
    entry = _load_index(cache).get(url)
    if entry is None:
        return None
    path = cache / entry["path"]
    return path if path.exists() else None


def _download(url: str, partial: Path, session: requests.Session, timeout: float) -> None:
    headers = {}
    offset = partial.stat().st_size if partial.exists() else 0
    if offset:
        headers["Range"] = f"bytes={offset}-"
    try:
        with session.get(url, headers=headers, stream=True, timeout=timeout) as resp:
            if resp.status_code == 416:
                # nothing left to send: the partial file is already whole
                return
            resp.raise_for_status()
            mode = "ab" if resp.status_code == 206 and offset else "wb"
            if mode == "ab":
                log.info("resuming %s at byte %d", url, offset)
            with open(partial, mode) as fh:
                for block in resp.iter_content(CHUNK):
                    fh.write(block)
    except requests.RequestException as exc:
        raise NetworkError(f"download of {url} failed: {exc}") from exc


def fetch(
    url: str,
    cache_dir=None,
    sha256: str | None = None,
    session: requests.Session | None = None,
    timeout: float = 60.0,
) -> Path:
    """Return a local copy of ``url``, downloading it at most once.

    With ``sha256`` the file must match that digest, otherwise
    :class:`ChecksumMismatch` is raised and nothing is cached.
    """
    cache = Path(cache_dir) if cache_dir else default_cache_dir()
    index = _load_index(cache)
    entry = index.get(url)
    if entry is not None:
        path = cache / entry["path"]
        if path.exists() and (sha256 is None or entry["sha256"] == sha256):
            return path

    name = os.path.basename(urlparse(url).path) or "download"
    partial_dir = cache / "partial"
    partial_dir.mkdir(parents=True, exist_ok=True)
    partial = partial_dir / (hashlib.sha1(url.encode()).hexdigest() + "-" + name)
    session = session or requests.Session()

    for attempt in range(2):
        resumed = partial.exists() and partial.stat().st_size > 0
        _download(url, partial, session, timeout)
        if check_integrity(partial):
            break
        partial.unlink()
        if not resumed or attempt == 1:
            raise NetworkError(f"{url}: downloaded file failed its integrity check")
        log.warning("resumed download of %s is corrupt; starting over", url)

    digest = sha256_file(partial)
    if sha256 is not None and digest != sha256:
        partial.unlink()
        raise ChecksumMismatch(f"{url}: expected sha256 {sha256}, got {digest}")
    final = cache / "objects" / digest / name
    final.parent.mkdir(parents=True, exist_ok=True)
    os.replace(partial, final)
    index = _load_index(cache)
    index[url] = {"sha256": digest, "path": str(final.relative_to(cache)), "size": final.stat().st_size}
    _save_index(cache, index)
    return final
