"""Append-only, file-backed persistence for the four star-schema tables.

On-disk layout under the warehouse root:

    dim_date.tbl            date dimension
    dim_image.tbl           image dimension
    dim_species.tbl         species dimension
    fact_tree_metrics.tbl   fact table (one detected tree per row)
    COMMIT                  last committed fact_id, decimal text
    LOCK                    writer lock (pid of the holder)
    surveys/<id>.tbl        immutable ground-truth survey files

Table files are newline-delimited CSV with a fixed header line; text fields
containing commas, quotes, or newlines are double-quoted with doubled inner
quotes. Reals use the shortest round-trip decimal form.

Commit protocol: dimension tables are small and rewritten whole via
write-then-rename; fact batches are appended with fsync and become visible
only once the COMMIT marker (also written via rename) records the batch's
last fact_id. A crash mid-append leaves rows past the marker, which reload
drops, restoring the pre-batch state. Dimension rows are never mutated or
deleted; the single sanctioned fact mutation is the validation annotation.

Single-writer, multiple-reader: a handle opened in "rw" mode holds the LOCK
file for its lifetime; "ro" handles read a committed snapshot without
locking.
"""

from __future__ import annotations

import csv
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import model
from .errors import (
    CorruptTableError,
    DuplicateRecordError,
    EmptyCodeError,
    IntegrityError,
    InvalidMetadataError,
    LockHeldError,
    NotInitializedError,
    ReadOnlyError,
    SurveyImmutableError,
    UnknownFactError,
    WarehouseError,
)
from .model import (
    BoundingBox,
    DimDate,
    DimImage,
    DimSpecies,
    FactDraft,
    FactTreeMetric,
    Geotransform,
    ImageMeta,
    SurveyRecord,
    ValidationUpdate,
    WarehouseState,
)
from .report import csv_line

DATE_TABLE = "dim_date.tbl"
IMAGE_TABLE = "dim_image.tbl"
SPECIES_TABLE = "dim_species.tbl"
FACT_TABLE = "fact_tree_metrics.tbl"
COMMIT_MARKER = "COMMIT"
LOCK_FILE = "LOCK"
SURVEY_DIR = "surveys"

DATE_HEADER = "date_key,year,quarter,month,day,day_of_year"
IMAGE_HEADER = (
    "image_key,file_name,platform,capture_date_key,width_px,height_px,"
    "gsd_cm_per_px,gt_origin_x,gt_origin_y,gt_a,gt_b,gt_d,gt_e,size_bytes,checksum"
)
SPECIES_HEADER = "species_key,code,scientific_name,common_name,conservation_status"
FACT_HEADER = (
    "fact_id,date_key,image_key,species_key,bbox_cx,bbox_cy,bbox_w,bbox_h,"
    "confidence,geo_x,geo_y,height_m,dbh_cm,validation,matched_record_id"
)
SURVEY_HEADER = "record_id,geo_x,geo_y,species_code,dbh_cm,height_m,surveyed_date_key"

_SURVEY_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    _fsync_dir(path.parent)


def _fsync_dir(path: Path) -> None:
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class FileLock:
    """Exclusive-create lock file; stale locks from dead pids are reclaimed."""

    def __init__(self, path: Path):
        self.path = path
        self._held = False

    def acquire(self, timeout: float) -> None:
        deadline = time.monotonic() + timeout
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._steal_if_stale():
                    continue
                if time.monotonic() >= deadline:
                    raise LockHeldError(f"warehouse lock held: {self.path}")
                time.sleep(0.01)
                continue
            with os.fdopen(fd, "w") as fh:
                fh.write(f"{os.getpid()}\n")
            self._held = True
            return

    def _steal_if_stale(self) -> bool:
        try:
            text = self.path.read_text().strip()
            pid = int(text)
        except (OSError, ValueError):
            return False
        if _pid_alive(pid):
            return False
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return True

    def release(self) -> None:
        if self._held:
            self._held = False
            try:
                self.path.unlink()
            except FileNotFoundError:
                pass


def _opt_float(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def _opt_str(cell: str) -> str | None:
    return None if cell == "" else cell


def _render_date_row(row: DimDate) -> str:
    return csv_line([row.date_key, row.year, row.quarter, row.month, row.day, row.day_of_year])


def _parse_date_row(cells: list[str]) -> DimDate:
    if len(cells) != 6:
        raise ValueError(f"expected 6 fields, got {len(cells)}")
    return DimDate(*(int(c) for c in cells))


def _render_image_row(row: DimImage) -> str:
    gt = row.geotransform
    return csv_line(
        [
            row.image_key,
            row.file_name,
            row.platform,
            row.capture_date_key,
            row.width_px,
            row.height_px,
            row.gsd_cm_per_px,
            gt.origin_x,
            gt.origin_y,
            gt.a,
            gt.b,
            gt.d,
            gt.e,
            row.size_bytes,
            row.checksum,
        ]
    )


def _parse_image_row(cells: list[str]) -> DimImage:
    if len(cells) != 15:
        raise ValueError(f"expected 15 fields, got {len(cells)}")
    return DimImage(
        image_key=int(cells[0]),
        file_name=cells[1],
        platform=cells[2],
        capture_date_key=int(cells[3]),
        width_px=int(cells[4]),
        height_px=int(cells[5]),
        gsd_cm_per_px=float(cells[6]),
        geotransform=Geotransform(
            origin_x=float(cells[7]),
            origin_y=float(cells[8]),
            a=float(cells[9]),
            b=float(cells[10]),
            d=float(cells[11]),
            e=float(cells[12]),
        ),
        size_bytes=int(cells[13]),
        checksum=cells[14],
    )


def _render_species_row(row: DimSpecies) -> str:
    return csv_line(
        [row.species_key, row.code, row.scientific_name, row.common_name, row.conservation_status]
    )


def _parse_species_row(cells: list[str]) -> DimSpecies:
    if len(cells) != 5:
        raise ValueError(f"expected 5 fields, got {len(cells)}")
    return DimSpecies(
        species_key=int(cells[0]),
        code=cells[1],
        scientific_name=cells[2],
        common_name=cells[3],
        conservation_status=cells[4],
    )


def _render_fact_row(row: FactTreeMetric) -> str:
    return csv_line(
        [
            row.fact_id,
            row.date_key,
            row.image_key,
            row.species_key,
            row.bbox.cx,
            row.bbox.cy,
            row.bbox.w,
            row.bbox.h,
            row.confidence,
            row.geo_x,
            row.geo_y,
            row.height_m,
            row.dbh_cm,
            row.validation,
            row.matched_record_id,
        ]
    )


def _parse_fact_row(cells: list[str]) -> FactTreeMetric:
    if len(cells) != 15:
        raise ValueError(f"expected 15 fields, got {len(cells)}")
    return FactTreeMetric(
        fact_id=int(cells[0]),
        date_key=int(cells[1]),
        image_key=int(cells[2]),
        species_key=int(cells[3]),
        bbox=BoundingBox(cx=float(cells[4]), cy=float(cells[5]), w=float(cells[6]), h=float(cells[7])),
        confidence=float(cells[8]),
        geo_x=float(cells[9]),
        geo_y=float(cells[10]),
        height_m=_opt_float(cells[11]),
        dbh_cm=_opt_float(cells[12]),
        validation=cells[13],
        matched_record_id=_opt_str(cells[14]),
    )


def _render_survey_row(row: SurveyRecord) -> str:
    return csv_line(
        [
            row.record_id,
            row.geo_x,
            row.geo_y,
            row.species_code,
            row.dbh_cm,
            row.height_m,
            row.surveyed_date_key,
        ]
    )


def _parse_survey_row(cells: list[str]) -> SurveyRecord:
    if len(cells) != 7:
        raise ValueError(f"expected 7 fields, got {len(cells)}")
    return SurveyRecord(
        record_id=cells[0],
        geo_x=float(cells[1]),
        geo_y=float(cells[2]),
        species_code=cells[3],
        dbh_cm=_opt_float(cells[4]),
        height_m=_opt_float(cells[5]),
        surveyed_date_key=int(cells[6]),
    )


def _read_table(path: Path, header: str) -> list[tuple[int, list[str]]]:
    """Read a table file into (line_no, cells) pairs, header checked."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise NotInitializedError(f"missing table file: {path}")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != header:
        raise CorruptTableError(path, 1, f"bad header, expected {header!r}")
    out = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            cells = next(csv.reader([line]))
        except (csv.Error, StopIteration):
            raise CorruptTableError(path, i, "unparseable CSV line")
        out.append((i, cells))
    return out


@dataclass(frozen=True)
class TableStats:
    name: str
    row_count: int
    file_bytes: int


@dataclass(frozen=True)
class WarehouseStats:
    tables: tuple[TableStats, ...]
    image_payload_bytes: int

    def table(self, name: str) -> TableStats:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def image_count(self) -> int:
        return self.table("dim_image").row_count

    @property
    def fact_count(self) -> int:
        return self.table("fact_tree_metrics").row_count


def stats_rows(stats: WarehouseStats) -> tuple[tuple[str, ...], list[tuple]]:
    """Report rows for the stats table: per-table counts/bytes plus image payload."""
    from .report import format_binary_size

    columns = ("name", "row_count", "file_bytes", "mib")
    rows: list[tuple] = []
    for t in stats.tables:
        rows.append((t.name, t.row_count, t.file_bytes, format_binary_size(t.file_bytes, "MiB")))
    rows.append(
        (
            "image_payload",
            stats.image_count,
            stats.image_payload_bytes,
            format_binary_size(stats.image_payload_bytes, "MiB"),
        )
    )
    return columns, rows


class Warehouse:
    """Handle over one warehouse root; use open_warehouse() to construct."""

    def __init__(self, root: Path, mode: str, lock: FileLock | None):
        self.root = root
        self.mode = mode
        self.state = WarehouseState()
        self._lock = lock
        self._mutex = threading.Lock()
        self._next_image_key = 1
        self._next_species_key = 1
        self._next_fact_id = 1
        self._closed = False

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            if self._lock is not None:
                self._lock.release()

    def __enter__(self) -> "Warehouse":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _require_writer(self) -> None:
        if self._closed:
            raise WarehouseError("handle is closed")
        if self.mode != "rw":
            raise ReadOnlyError("warehouse opened read-only")

    # -- paths -------------------------------------------------------------

    def _path(self, name: str) -> Path:
        return self.root / name

    def survey_path(self, survey_id: str) -> Path:
        return self.root / SURVEY_DIR / f"{survey_id}.tbl"

    # -- loading -----------------------------------------------------------

    def _load(self) -> None:
        self._load_dates()
        self._load_species()
        self._load_images()
        self._load_facts()

    def _load_dates(self) -> None:
        path = self._path(DATE_TABLE)
        for line_no, cells in _read_table(path, DATE_HEADER):
            try:
                row = _parse_date_row(cells)
            except ValueError as exc:
                raise CorruptTableError(path, line_no, str(exc))
            if row.date_key in self.state.dates:
                raise CorruptTableError(path, line_no, f"duplicate date_key {row.date_key}")
            if row != model.derive_date(row.date_key):
                raise CorruptTableError(path, line_no, "derived date fields disagree with date_key")
            self.state.add_date(row)

    def _load_species(self) -> None:
        path = self._path(SPECIES_TABLE)
        for line_no, cells in _read_table(path, SPECIES_HEADER):
            try:
                row = _parse_species_row(cells)
            except ValueError as exc:
                raise CorruptTableError(path, line_no, str(exc))
            if row.species_key in self.state.species:
                raise CorruptTableError(path, line_no, f"duplicate species_key {row.species_key}")
            if not row.code:
                raise CorruptTableError(path, line_no, "empty species code")
            if row.code in self.state.species_by_code:
                raise CorruptTableError(path, line_no, f"duplicate species code {row.code}")
            if row.conservation_status not in model.CONSERVATION_STATUSES:
                raise CorruptTableError(path, line_no, f"bad conservation_status {row.conservation_status!r}")
            self.state.add_species(row)
            self._next_species_key = max(self._next_species_key, row.species_key + 1)

    def _load_images(self) -> None:
        path = self._path(IMAGE_TABLE)
        for line_no, cells in _read_table(path, IMAGE_HEADER):
            try:
                row = _parse_image_row(cells)
            except ValueError as exc:
                raise CorruptTableError(path, line_no, str(exc))
            if row.image_key in self.state.images:
                raise CorruptTableError(path, line_no, f"duplicate image_key {row.image_key}")
            problems = model.image_meta_violations(row.meta)
            if problems:
                raise CorruptTableError(path, line_no, "; ".join(problems))
            if (row.file_name, row.checksum) in self.state.images_by_identity:
                raise CorruptTableError(path, line_no, "duplicate (file_name, checksum)")
            if row.capture_date_key not in self.state.dates:
                raise IntegrityError(
                    f"{path}:{line_no}: image {row.image_key} references missing date {row.capture_date_key}"
                )
            self.state.add_image(row)
            self._next_image_key = max(self._next_image_key, row.image_key + 1)

    def _load_facts(self) -> None:
        path = self._path(FACT_TABLE)
        committed = self._read_commit_marker()
        try:
            raw = path.read_text(encoding="utf-8").split("\n")
        except FileNotFoundError:
            raise NotInitializedError(f"missing table file: {path}")
        if raw and raw[-1] == "":
            raw.pop()
        if not raw or raw[0] != FACT_HEADER:
            raise CorruptTableError(path, 1, f"bad header, expected {FACT_HEADER!r}")
        last_line_no = len(raw)
        rows: list[FactTreeMetric] = []
        dropped_tail = False
        for line_no, line in enumerate(raw[1:], start=2):
            try:
                cells = next(csv.reader([line]))
                row = _parse_fact_row(cells)
            except (csv.Error, StopIteration, ValueError) as exc:
                if line_no == last_line_no:
                    # torn trailing write from an interrupted append
                    dropped_tail = True
                    break
                raise CorruptTableError(path, line_no, f"unparseable fact row: {exc}")
            if committed is not None and row.fact_id > committed:
                # appended but never committed
                dropped_tail = True
                continue
            if rows and row.fact_id <= rows[-1].fact_id:
                raise CorruptTableError(path, line_no, f"fact_id {row.fact_id} out of order")
            problems = model.fact_field_violations(row)
            if problems:
                raise CorruptTableError(path, line_no, "; ".join(problems))
            fk = model.validate_fact(row, self.state)
            if fk:
                raise IntegrityError(f"{path}:{line_no}: fact {row.fact_id}: " + "; ".join(fk))
            rows.append(row)
        max_id = rows[-1].fact_id if rows else 0
        if committed is not None and max_id < committed:
            raise CorruptTableError(path, last_line_no, f"commit marker {committed} exceeds last stored fact_id {max_id}")
        for row in rows:
            self.state.add_fact(row)
        self._next_fact_id = max_id + 1
        if self.mode == "rw":
            if dropped_tail:
                self._rewrite_fact_table()
            elif committed is None:
                # marker missing (externally assembled warehouse): adopt as-is
                _atomic_write(self._path(COMMIT_MARKER), f"{max_id}\n")

    def _read_commit_marker(self) -> int | None:
        path = self._path(COMMIT_MARKER)
        try:
            text = path.read_text(encoding="utf-8").strip()
        except FileNotFoundError:
            return None
        try:
            value = int(text)
        except ValueError:
            raise CorruptTableError(path, 1, f"bad commit marker {text!r}")
        if value < 0:
            raise CorruptTableError(path, 1, f"negative commit marker {value}")
        return value

    # -- rewriting ---------------------------------------------------------

    def _rewrite_dates(self) -> None:
        rows = sorted(self.state.dates.values(), key=lambda r: r.date_key)
        text = DATE_HEADER + "\n" + "".join(_render_date_row(r) + "\n" for r in rows)
        _atomic_write(self._path(DATE_TABLE), text)

    def _rewrite_species(self) -> None:
        rows = sorted(self.state.species.values(), key=lambda r: r.species_key)
        text = SPECIES_HEADER + "\n" + "".join(_render_species_row(r) + "\n" for r in rows)
        _atomic_write(self._path(SPECIES_TABLE), text)

    def _rewrite_images(self) -> None:
        rows = sorted(self.state.images.values(), key=lambda r: r.image_key)
        text = IMAGE_HEADER + "\n" + "".join(_render_image_row(r) + "\n" for r in rows)
        _atomic_write(self._path(IMAGE_TABLE), text)

    def _rewrite_fact_table(self) -> None:
        rows = sorted(self.state.facts.values(), key=lambda r: r.fact_id)
        text = FACT_HEADER + "\n" + "".join(_render_fact_row(r) + "\n" for r in rows)
        _atomic_write(self._path(FACT_TABLE), text)
        last = rows[-1].fact_id if rows else 0
        _atomic_write(self._path(COMMIT_MARKER), f"{last}\n")

    # -- mutating operations -----------------------------------------------

    def upsert_species(
        self,
        code: str,
        scientific_name: str = "",
        common_name: str = "",
        conservation_status: str = "unknown",
    ) -> int:
        """Insert a species or return the existing key for its code.

        Descriptive fields of an existing row are never overwritten.
        """
        self._require_writer()
        code = code.strip().upper()
        if not code:
            raise EmptyCodeError("species code is empty")
        if conservation_status not in model.CONSERVATION_STATUSES:
            raise InvalidMetadataError(f"bad conservation_status {conservation_status!r}")
        with self._mutex:
            existing = self.state.species_by_code.get(code)
            if existing is not None:
                return existing
            key = self._next_species_key
            row = DimSpecies(
                species_key=key,
                code=code,
                scientific_name=scientific_name,
                common_name=common_name,
                conservation_status=conservation_status,
            )
            self.state.add_species(row)
            self._next_species_key = key + 1
            self._rewrite_species()
            return key

    def ensure_date(self, date_key: int) -> int:
        """Materialize the date dimension row for date_key (idempotent)."""
        self._require_writer()
        row = model.derive_date(date_key)
        with self._mutex:
            if date_key not in self.state.dates:
                self.state.add_date(row)
                self._rewrite_dates()
        return date_key

    def insert_image(self, meta: ImageMeta) -> int:
        """Insert an image row; identical (file_name, checksum) is a no-op."""
        self._require_writer()
        problems = model.image_meta_violations(meta)
        if problems:
            raise InvalidMetadataError("; ".join(problems))
        with self._mutex:
            if meta.capture_date_key not in self.state.dates:
                raise InvalidMetadataError(
                    f"capture_date_key {meta.capture_date_key} not materialized (call ensure_date first)"
                )
            existing = self.state.images_by_identity.get((meta.file_name, meta.checksum))
            if existing is not None:
                return existing
            key = self._next_image_key
            row = DimImage(image_key=key, **meta.__dict__)
            self.state.add_image(row)
            self._next_image_key = key + 1
            self._rewrite_images()
            return key

    def append_facts(self, drafts: Sequence[FactDraft]) -> list[int]:
        """Commit a batch of facts atomically; returns assigned ids in order.

        Any invalid fact fails the whole batch before anything is written.
        """
        self._require_writer()
        with self._mutex:
            problems = []
            for i, draft in enumerate(drafts):
                issues = model.fact_field_violations(draft) + model.validate_fact(draft, self.state)
                if issues:
                    problems.append(f"fact {i}: " + "; ".join(issues))
            if problems:
                raise IntegrityError("; ".join(problems))
            if not drafts:
                return []
            first = self._next_fact_id
            rows = [
                FactTreeMetric(fact_id=first + i, **draft.__dict__)
                for i, draft in enumerate(drafts)
            ]
            path = self._path(FACT_TABLE)
            pre_size = path.stat().st_size
            try:
                with open(path, "a", encoding="utf-8", newline="") as fh:
                    for row in rows:
                        fh.write(_render_fact_row(row) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError:
                os.truncate(path, pre_size)
                raise
            _atomic_write(self._path(COMMIT_MARKER), f"{rows[-1].fact_id}\n")
            for row in rows:
                self.state.add_fact(row)
            self._next_fact_id = rows[-1].fact_id + 1
            return [row.fact_id for row in rows]

    def rewrite_validation(self, updates: Mapping[int, ValidationUpdate]) -> int:
        """Apply validation annotations; all other fact fields stay unchanged."""
        self._require_writer()
        with self._mutex:
            unknown = [fid for fid in updates if fid not in self.state.facts]
            if unknown:
                raise UnknownFactError(f"unknown fact ids: {sorted(unknown)}")
            for fid, upd in updates.items():
                if upd.validation not in model.VALIDATION_STATES:
                    raise UnknownFactError(f"fact {fid}: bad validation state {upd.validation!r}")
            if not updates:
                return 0
            new_facts: dict[int, FactTreeMetric] = {}
            for fid, fact in self.state.facts.items():
                upd = updates.get(fid)
                if upd is not None:
                    fact = FactTreeMetric(
                        fact_id=fact.fact_id,
                        date_key=fact.date_key,
                        image_key=fact.image_key,
                        species_key=fact.species_key,
                        bbox=fact.bbox,
                        confidence=fact.confidence,
                        geo_x=fact.geo_x,
                        geo_y=fact.geo_y,
                        height_m=upd.height_m if upd.height_m is not None else fact.height_m,
                        dbh_cm=upd.dbh_cm if upd.dbh_cm is not None else fact.dbh_cm,
                        validation=upd.validation,
                        matched_record_id=upd.matched_record_id,
                    )
                new_facts[fid] = fact
            old = self.state.facts
            self.state.facts = new_facts
            try:
                self._rewrite_fact_table()
            except OSError:
                self.state.facts = old
                raise
            return len(updates)

    # -- surveys -----------------------------------------------------------

    def save_survey(self, survey_id: str, records: Sequence[SurveyRecord]) -> bool:
        """Persist a survey file; identical re-saves are no-ops.

        Returns True when a new file was written. Differing content for an
        existing id raises, since survey files are immutable history.
        """
        self._require_writer()
        if not _SURVEY_ID_RE.match(survey_id):
            raise WarehouseError(f"bad survey id {survey_id!r} (use letters, digits, . _ -)")
        path = self.survey_path(survey_id)
        text = SURVEY_HEADER + "\n" + "".join(_render_survey_row(r) + "\n" for r in records)
        with self._mutex:
            if path.exists():
                if path.read_text(encoding="utf-8") == text:
                    return False
                raise SurveyImmutableError(f"survey {survey_id!r} already ingested with different content")
            path.parent.mkdir(exist_ok=True)
            _atomic_write(path, text)
            return True

    def list_survey_ids(self) -> list[str]:
        d = self.root / SURVEY_DIR
        if not d.is_dir():
            return []
        return sorted(p.stem for p in d.glob("*.tbl"))

    def load_survey(self, survey_id: str) -> list[SurveyRecord]:
        path = self.survey_path(survey_id)
        out = []
        for line_no, cells in _read_table(path, SURVEY_HEADER):
            try:
                out.append(_parse_survey_row(cells))
            except ValueError as exc:
                raise CorruptTableError(path, line_no, str(exc))
        return out

    def load_all_survey_records(self) -> list[SurveyRecord]:
        """All survey records merged; record ids must be globally unique."""
        seen: dict[str, str] = {}
        out = []
        for sid in self.list_survey_ids():
            for rec in self.load_survey(sid):
                if rec.record_id in seen:
                    raise DuplicateRecordError(
                        f"record id {rec.record_id!r} appears in surveys {seen[rec.record_id]!r} and {sid!r}"
                    )
                seen[rec.record_id] = sid
                out.append(rec)
        return out

    # -- stats ---------------------------------------------------------------

    def stats(self) -> WarehouseStats:
        tables = []
        for name, rows in (
            (DATE_TABLE, self.state.dates),
            (IMAGE_TABLE, self.state.images),
            (SPECIES_TABLE, self.state.species),
            (FACT_TABLE, self.state.facts),
        ):
            path = self._path(name)
            size = path.stat().st_size if path.exists() else 0
            tables.append(TableStats(name=name.removesuffix(".tbl"), row_count=len(rows), file_bytes=size))
        payload = sum(img.size_bytes for img in self.state.images.values())
        return WarehouseStats(tables=tuple(tables), image_payload_bytes=payload)


def open_warehouse(root, mode: str = "rw", lock_timeout: float = 10.0) -> Warehouse:
    """Open (and if needed initialize) the warehouse at root.

    mode "rw" acquires the writer lock and creates missing table files;
    mode "ro" reads the committed snapshot without locking and requires the
    warehouse to exist.
    """
    if mode not in ("rw", "ro"):
        raise ValueError(f"mode must be 'rw' or 'ro', got {mode!r}")
    root = Path(root)
    lock = None
    if mode == "rw":
        root.mkdir(parents=True, exist_ok=True)
        lock = FileLock(root / LOCK_FILE)
        lock.acquire(lock_timeout)
    try:
        wh = Warehouse(root, mode, lock)
        if mode == "rw":
            for name, header in (
                (DATE_TABLE, DATE_HEADER),
                (IMAGE_TABLE, IMAGE_HEADER),
                (SPECIES_TABLE, SPECIES_HEADER),
                (FACT_TABLE, FACT_HEADER),
            ):
                path = root / name
                if not path.exists():
                    _atomic_write(path, header + "\n")
        wh._load()
        return wh
    except BaseException:
        if lock is not None:
            lock.release()
        raise
