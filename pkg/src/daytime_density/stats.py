"""Daytime density per tract and the summary statistics built on it.

Daytime population is residents plus inbound commuters minus outbound
commuters; dividing by census land area gives daytime density in
persons/km².  Counts stay integers until that final division.
"""

from __future__ import annotations

import logging
import math
import statistics
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .census import TractRecord
from .errors import AllZero, DegenerateInput, DegenerateInputWarning, GeoidMismatch
from .flows import FlowSummary

log = logging.getLogger(__name__)

DEFAULT_K = 7
DEFAULT_TOP_N = 10


@dataclass(frozen=True)
class DensityRecord:
    geoid: str
    population: int
    inbound: int
    outbound: int
    land_area_km2: float
    daytime_pop: int
    daytime_density: float | None
    nighttime_density: float | None
    excluded: bool = False

    @property
    def net_flow(self) -> int:
        return self.inbound - self.outbound

    @property
    def negative(self) -> bool:
        return self.daytime_pop < 0


def compute_density(tract: TractRecord, flows: FlowSummary | None = None) -> DensityRecord:
    """Apply the daytime density formula to one tract.

    Missing ``flows`` means nobody commutes in or out.  Tracts with zero land
    area come back with ``excluded=True`` and no densities.
    """
    if flows is None:
        inbound = outbound = 0
    else:
        if flows.geoid != tract.geoid:
            raise GeoidMismatch(f"tract {tract.geoid} paired with flows for {flows.geoid}")
        inbound, outbound = flows.inbound, flows.outbound
    daytime = tract.population + inbound - outbound
    if daytime < 0:
        log.warning("tract %s: negative daytime population %d", tract.geoid, daytime)
    area = tract.land_area_km2
    if area > 0:
        return DensityRecord(
            tract.geoid, tract.population, inbound, outbound, area, daytime, daytime / area, tract.population / area
        )
    return DensityRecord(tract.geoid, tract.population, inbound, outbound, area, daytime, None, None, excluded=True)


def compute_densities(
    tracts: Iterable[TractRecord], summaries: Mapping[str, FlowSummary]
) -> list[DensityRecord]:
    return [compute_density(t, summaries.get(t.geoid)) for t in tracts]


def swell_factor(record: DensityRecord) -> float | None:
    """Daytime over resident population; None when nobody lives there."""
    if record.population <= 0:
        return None
    return record.daytime_pop / record.population


def format_swell(factor: float | None) -> str:
    """Render a swell factor at two significant figures, e.g. ``×40``."""
    if factor is None:
        return "—"
    if factor == 0:
        return "×0"
    digits = 1 - math.floor(math.log10(abs(factor)))
    rounded = round(factor, digits)
    return f"×{rounded:.{max(digits, 0)}f}"


def median(values: Sequence[float]) -> float:
    if not values:
        raise DegenerateInput("median of an empty list")
    return float(statistics.median(values))


@dataclass
class QuantileClasses:
    k: int
    breaks: list[float]
    classes: list[int]
    effective_classes: int

    @property
    def degenerate(self) -> bool:
        return self.effective_classes < self.k

    def sizes(self) -> list[int]:
        out = [0] * self.k
        for c in self.classes:
            out[c] += 1
        return out


def quantile_classify(values: Sequence[float], k: int) -> QuantileClasses:
    """Split ``values`` into ``k`` equal-count classes.

    Values are ranked by (value, input position); rank ``p`` of ``n`` goes to
    class ``p * k // n``, so sizes differ by at most one and tied values may
    straddle a boundary.  ``breaks[c]`` is the largest value in classes
    ``0..c``, giving ``k - 1`` nondecreasing boundaries.
    """
    if k < 2:
        raise ValueError(f"need at least 2 classes, got k={k}")
    n = len(values)
    if n == 0:
        raise DegenerateInput("cannot classify an empty list")
    order = sorted(range(n), key=lambda i: (values[i], i))
    classes = [0] * n
    for pos, i in enumerate(order):
        classes[i] = pos * k // n
    ranked = [values[i] for i in order]
    breaks = [float(ranked[-(-(c + 1) * n // k) - 1]) for c in range(k - 1)]

    # classes whose [min, max] spans coincide are indistinguishable on a map
    spans: dict[int, list[float]] = {}
    for pos, i in enumerate(order):
        span = spans.setdefault(classes[i], [ranked[pos], ranked[pos]])
        span[1] = ranked[pos]
    effective = len({tuple(s) for s in spans.values()})
    if len(set(values)) < k:
        warnings.warn(
            f"only {len(set(values))} distinct values for {k} classes; classes collapse to {effective}",
            DegenerateInputWarning,
            stacklevel=2,
        )
    return QuantileClasses(k, breaks, classes, effective)


def class_for_value(value: float, breaks: Sequence[float]) -> int:
    """The lowest class whose range admits ``value``.

    Agrees with :func:`quantile_classify` except for a value equal to a break
    that ties across the boundary, which is admitted by both neighbours.
    """
    lo, hi = 0, len(breaks)
    while lo < hi:
        mid = (lo + hi) // 2
        if breaks[mid] < value:
            lo = mid + 1
        else:
            hi = mid
    return lo


def class_admits(value: float, cls: int, breaks: Sequence[float]) -> bool:
    lower = breaks[cls - 1] if cls > 0 else -math.inf
    upper = breaks[cls] if cls < len(breaks) else math.inf
    return lower <= value <= upper


@dataclass
class SigmaContrast:
    per_class: dict[int, float]
    top_class: int
    top_sigma: float
    mean_other_sigma: float
    singletons: list[int] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        if self.mean_other_sigma == 0:
            return math.inf if self.top_sigma > 0 else math.nan
        return self.top_sigma / self.mean_other_sigma


def sigma_contrast(values: Sequence[float], assignment: Sequence[int]) -> SigmaContrast:
    """Population standard deviation within each class, top class vs the rest."""
    if len(values) != len(assignment):
        raise ValueError("values and assignment differ in length")
    members: dict[int, list[float]] = {}
    for v, c in zip(values, assignment):
        members.setdefault(c, []).append(float(v))
    if sum(len(m) >= 2 for m in members.values()) < 2:
        raise DegenerateInput("sigma contrast needs at least two classes with two or more members")
    per_class = {}
    singletons = []
    for c in sorted(members):
        if len(members[c]) == 1:
            per_class[c] = 0.0
            singletons.append(c)
        else:
            per_class[c] = statistics.pstdev(members[c])
    if singletons:
        log.warning("classes %s have a single member; their sigma is taken as 0", singletons)
    top = max(per_class)
    others = [s for c, s in per_class.items() if c != top]
    return SigmaContrast(per_class, top, per_class[top], math.fsum(others) / len(others), singletons)


def gini(values: Iterable[float]) -> float:
    """Gini coefficient, Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² x̄), in O(n log n).

    Uses the sorted-gap identity Σᵢ<ⱼ (x₍ⱼ₎ − x₍ᵢ₎) = Σₖ k (n − k) (x₍ₖ₊₁₎ − x₍ₖ₎):
    every term is non-negative, so nothing cancels.
    """
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n == 0:
        raise DegenerateInput("gini of an empty list")
    total = math.fsum(xs)
    if total <= 0:
        raise AllZero("gini needs a positive total")
    spread = math.fsum(k * (n - k) * (xs[k] - xs[k - 1]) for k in range(1, n))
    return spread / (n * total)


def top_n_table(records: Iterable[DensityRecord], n: int) -> list[DensityRecord]:
    """The ``n`` densest non-excluded tracts; ties go to the smaller GEOID."""
    if n < 0:
        raise ValueError("n must be non-negative")
    eligible = [r for r in records if not r.excluded]
    eligible.sort(key=lambda r: (-r.daytime_density, r.geoid))
    return eligible[:n]


@dataclass
class StatsReport:
    k: int
    n_tracts: int
    n_excluded: int
    n_negative: int
    median_daytime_density: float
    quantile_breaks: list[float]
    class_sizes: list[int]
    per_quantile_sigma: list[float] | None
    top_quantile_sigma: float | None
    mean_other_sigma: float | None
    gini_daytime: float
    gini_nighttime: float
    top_n: list[DensityRecord]
    total_population: int
    total_daytime_pop: int
    classes: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def sigma_ratio(self) -> float | None:
        if self.top_quantile_sigma is None or self.mean_other_sigma is None:
            return None
        if self.mean_other_sigma == 0:
            return math.inf
        return self.top_quantile_sigma / self.mean_other_sigma

    @property
    def gini_ratio(self) -> float:
        return self.gini_daytime / self.gini_nighttime

    @property
    def top_n_net_outflow(self) -> int:
        return sum(r.net_flow < 0 for r in self.top_n)


def build_report(records: Sequence[DensityRecord], k: int = DEFAULT_K, top_n: int = DEFAULT_TOP_N) -> StatsReport:
    """Compute every summary statistic over a set of tract densities.

    Zero-area tracts are left out of everything density-based (median,
    classes, sigma, top-N) but their head counts still enter the Gini pair.
    """
    included = [r for r in records if not r.excluded]
    if not included:
        raise DegenerateInput("no tracts with positive land area")
    densities = [r.daytime_density for r in included]
    quantiles = quantile_classify(densities, k)
    try:
        contrast = sigma_contrast(densities, quantiles.classes)
    except DegenerateInput as exc:
        log.warning("sigma contrast unavailable: %s", exc)
        contrast = None
    return StatsReport(
        k=k,
        n_tracts=len(records),
        n_excluded=len(records) - len(included),
        n_negative=sum(r.negative for r in records),
        median_daytime_density=median(densities),
        quantile_breaks=quantiles.breaks,
        class_sizes=quantiles.sizes(),
        per_quantile_sigma=None if contrast is None else [contrast.per_class.get(c, 0.0) for c in range(k)],
        top_quantile_sigma=None if contrast is None else contrast.top_sigma,
        mean_other_sigma=None if contrast is None else contrast.mean_other_sigma,
        gini_daytime=gini(r.daytime_pop for r in records),
        gini_nighttime=gini(r.population for r in records),
        top_n=top_n_table(included, top_n),
        total_population=sum(r.population for r in records),
        total_daytime_pop=sum(r.daytime_pop for r in records),
        classes={r.geoid: c for r, c in zip(included, quantiles.classes)},
    )
