"""Analytical queries over the star schema.

Queries run as a single scan of the fact table with hash lookups into the
dimension tables; filters and groupings address dimension attributes, and
measures aggregate fact columns. Result cells are rendered to strings once,
in one place, so every surface (CLI table, CLI CSV, HTTP JSON) reports
byte-identical values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import InvalidSpecError
from .model import (
    PLATFORMS,
    VALIDATION_STATES,
    DimDate,
    DimImage,
    DimSpecies,
    FactTreeMetric,
    is_valid_date_key,
)
from .report import csv_lines, render_cell, text_table
from .storage import Warehouse

GROUP_KEYS = (
    "year",
    "quarter",
    "month",
    "date",
    "species",
    "platform",
    "resolution_class",
    "conservation_status",
)
MEASURES = (
    "tree_count",
    "mean_confidence",
    "mean_height_m",
    "mean_dbh_cm",
    "image_count",
    "confirmed_count",
)


def resolution_class(width_px: int, height_px: int) -> str:
    """Bucket an image by megapixels: <1 low, 1 to 12 medium, >12 high."""
    mp = width_px * height_px / 1e6
    if mp < 1.0:
        return "low"
    if mp <= 12.0:
        return "medium"
    return "high"


@dataclass(frozen=True)
class QuerySpec:
    """Declarative description of one star-join aggregation."""

    group_by: tuple[str, ...] = ()
    measures: tuple[str, ...] = ("tree_count",)
    date_from: int | None = None
    date_to: int | None = None
    species_codes: tuple[str, ...] | None = None
    platforms: tuple[str, ...] | None = None
    min_width_px: int | None = None
    min_height_px: int | None = None
    validation_states: tuple[str, ...] | None = None

    def violations(self) -> list[str]:
        v = []
        for key in self.group_by:
            if key not in GROUP_KEYS:
                v.append(f"unknown group key {key!r} (choose from {', '.join(GROUP_KEYS)})")
        if len(set(self.group_by)) != len(self.group_by):
            v.append("duplicate group keys")
        if not self.measures:
            v.append("at least one measure is required")
        for m in self.measures:
            if m not in MEASURES:
                v.append(f"unknown measure {m!r} (choose from {', '.join(MEASURES)})")
        for name, value in (("date_from", self.date_from), ("date_to", self.date_to)):
            if value is not None and not is_valid_date_key(value):
                v.append(f"{name} {value} is not a valid date key")
        if (
            self.date_from is not None
            and self.date_to is not None
            and self.date_from > self.date_to
        ):
            v.append("date_from is after date_to")
        if self.platforms is not None:
            for p in self.platforms:
                if p not in PLATFORMS:
                    v.append(f"unknown platform {p!r}")
        if self.validation_states is not None:
            for s in self.validation_states:
                if s not in VALIDATION_STATES:
                    v.append(f"unknown validation state {s!r}")
        for name, value in (("min_width_px", self.min_width_px), ("min_height_px", self.min_height_px)):
            if value is not None and value < 0:
                v.append(f"{name} must be non-negative")
        if self.species_codes is not None and not self.species_codes:
            v.append("species_codes filter is empty")
        return v


def _split_csv_option(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def spec_from_strings(options: Mapping[str, str]) -> QuerySpec:
    """Build a QuerySpec from string-valued options (CLI flags, URL params).

    Unknown option names and malformed values raise InvalidSpecError.
    """
    known = {
        "group_by",
        "measures",
        "date_from",
        "date_to",
        "species_codes",
        "platforms",
        "min_width_px",
        "min_height_px",
        "validation_states",
    }
    unknown = sorted(set(options) - known)
    if unknown:
        raise InvalidSpecError(f"unknown query option(s): {', '.join(unknown)}")

    def intval(name: str) -> int | None:
        raw = options.get(name)
        if raw is None or raw == "":
            return None
        try:
            return int(raw)
        except ValueError:
            raise InvalidSpecError(f"{name} {raw!r} is not an integer")

    spec = QuerySpec(
        group_by=_split_csv_option(options.get("group_by", "")),
        measures=_split_csv_option(options.get("measures", "")) or ("tree_count",),
        date_from=intval("date_from"),
        date_to=intval("date_to"),
        species_codes=(
            tuple(c.upper() for c in _split_csv_option(options["species_codes"]))
            if options.get("species_codes")
            else None
        ),
        platforms=(
            tuple(p.lower() for p in _split_csv_option(options["platforms"]))
            if options.get("platforms")
            else None
        ),
        min_width_px=intval("min_width_px"),
        min_height_px=intval("min_height_px"),
        validation_states=(
            _split_csv_option(options["validation_states"])
            if options.get("validation_states")
            else None
        ),
    )
    problems = spec.violations()
    if problems:
        raise InvalidSpecError("; ".join(problems))
    return spec


@dataclass(frozen=True)
class ResultTable:
    """Query output: column names plus rows of raw Python values."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def to_csv(self) -> str:
        return "\n".join(csv_lines(self.columns, self.rows)) + "\n"

    def to_text(self) -> str:
        return text_table(self.columns, self.rows)

    def rendered_rows(self) -> list[list[str]]:
        return [[render_cell(c) for c in row] for row in self.rows]


def _group_value(
    key: str,
    date: DimDate,
    image: DimImage,
    species: DimSpecies,
) -> str:
    if key == "year":
        return f"{date.year:04d}"
    if key == "quarter":
        return f"{date.year:04d}-Q{date.quarter}"
    if key == "month":
        return f"{date.year:04d}-{date.month:02d}"
    if key == "date":
        return str(date.date_key)
    if key == "species":
        return species.code
    if key == "platform":
        return image.platform
    if key == "resolution_class":
        return resolution_class(image.width_px, image.height_px)
    if key == "conservation_status":
        return species.conservation_status
    raise InvalidSpecError(f"unknown group key {key!r}")


class _Accumulator:
    __slots__ = ("count", "conf_sum", "height_sum", "height_n", "dbh_sum", "dbh_n", "images", "confirmed")

    def __init__(self) -> None:
        self.count = 0
        self.conf_sum = 0.0
        self.height_sum = 0.0
        self.height_n = 0
        self.dbh_sum = 0.0
        self.dbh_n = 0
        self.images: set[int] = set()
        self.confirmed = 0

    def add(self, fact: FactTreeMetric) -> None:
        self.count += 1
        self.conf_sum += fact.confidence
        if fact.height_m is not None:
            self.height_sum += fact.height_m
            self.height_n += 1
        if fact.dbh_cm is not None:
            self.dbh_sum += fact.dbh_cm
            self.dbh_n += 1
        self.images.add(fact.image_key)
        if fact.validation == "confirmed":
            self.confirmed += 1

    def measure(self, name: str):
        if name == "tree_count":
            return self.count
        if name == "mean_confidence":
            return None if self.count == 0 else self.conf_sum / self.count
        if name == "mean_height_m":
            return None if self.height_n == 0 else self.height_sum / self.height_n
        if name == "mean_dbh_cm":
            return None if self.dbh_n == 0 else self.dbh_sum / self.dbh_n
        if name == "image_count":
            return len(self.images)
        if name == "confirmed_count":
            return self.confirmed
        raise InvalidSpecError(f"unknown measure {name!r}")


def _fact_passes(spec: QuerySpec, fact: FactTreeMetric, image: DimImage, species: DimSpecies) -> bool:
    if spec.date_from is not None and fact.date_key < spec.date_from:
        return False
    if spec.date_to is not None and fact.date_key > spec.date_to:
        return False
    if spec.species_codes is not None and species.code not in spec.species_codes:
        return False
    if spec.platforms is not None and image.platform not in spec.platforms:
        return False
    if spec.min_width_px is not None and image.width_px < spec.min_width_px:
        return False
    if spec.min_height_px is not None and image.height_px < spec.min_height_px:
        return False
    if spec.validation_states is not None and fact.validation not in spec.validation_states:
        return False
    return True


def run_query(handle: Warehouse, spec: QuerySpec) -> ResultTable:
    """Execute one aggregation: scan facts once, join dims by key, group, sort."""
    problems = spec.violations()
    if problems:
        raise InvalidSpecError("; ".join(problems))
    state = handle.state
    groups: dict[tuple[str, ...], _Accumulator] = {}
    for fact in state.facts.values():
        image = state.images[fact.image_key]
        species = state.species[fact.species_key]
        if not _fact_passes(spec, fact, image, species):
            continue
        date = state.dates[fact.date_key]
        key = tuple(_group_value(k, date, image, species) for k in spec.group_by)
        acc = groups.get(key)
        if acc is None:
            acc = groups[key] = _Accumulator()
        acc.add(fact)
    columns = spec.group_by + spec.measures
    rows = []
    for key in sorted(groups):
        acc = groups[key]
        rows.append(tuple(key) + tuple(acc.measure(m) for m in spec.measures))
    return ResultTable(columns=columns, rows=tuple(rows))


def species_trend(handle: Warehouse, species_code: str, granularity: str = "month") -> ResultTable:
    """Detection counts over time for one species."""
    if granularity not in ("year", "quarter", "month", "date"):
        raise InvalidSpecError(f"granularity must be year, quarter, month, or date, got {granularity!r}")
    code = species_code.strip().upper()
    if code not in handle.state.species_by_code:
        raise InvalidSpecError(f"unknown species code {code!r}")
    spec = QuerySpec(
        group_by=(granularity,),
        measures=("tree_count", "mean_confidence", "confirmed_count"),
        species_codes=(code,),
    )
    return run_query(handle, spec)


def image_usage_report(handle: Warehouse) -> ResultTable:
    """Image and detection counts by resolution class and platform.

    Unlike run_query this also counts images with no detections, so it scans
    the image dimension and folds facts in on top.
    """
    state = handle.state
    image_counts: dict[tuple[str, str], int] = {}
    fact_counts: dict[tuple[str, str], int] = {}
    for image in state.images.values():
        key = (resolution_class(image.width_px, image.height_px), image.platform)
        image_counts[key] = image_counts.get(key, 0) + 1
    for fact in state.facts.values():
        image = state.images[fact.image_key]
        key = (resolution_class(image.width_px, image.height_px), image.platform)
        fact_counts[key] = fact_counts.get(key, 0) + 1
    rows = [
        key + (image_counts[key], fact_counts.get(key, 0))
        for key in sorted(image_counts)
    ]
    return ResultTable(
        columns=("resolution_class", "platform", "image_count", "fact_count"),
        rows=tuple(rows),
    )
