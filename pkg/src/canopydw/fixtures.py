"""Reference corpus: the four-batch image campaign behind the size tables.

The corpus has 238 images in four batches over three days (22, 50, then
116 + 50 from two sensors on the final day), one detection per image, and a
payload that sums to exactly 920.9 MiB so size reporting can be checked
against the reference figures. Everything is generated as ordinary source
files (manifest, detection files, class map) and pushed through the real
ingestion path.
"""

from __future__ import annotations

import hashlib

from .ingest import (
    MANIFEST_HEADER,
    ClassMap,
    detection_file_name,
    ingest_image_batch,
    parse_image_manifest,
)
from .storage import open_warehouse

REFERENCE_BATCHES = (
    (22, "2024-01-01", "uav"),
    (50, "2024-01-02", "satellite"),
    (116, "2024-01-03", "aerial"),
    (50, "2024-01-03", "ground"),
)
REFERENCE_IMAGE_COUNT = 238
REFERENCE_IMAGE_PAYLOAD_BYTES = 965_620_122  # 920.9 MiB, rounded to whole bytes
REFERENCE_SPECIES = ("PSME", "Pseudotsuga menziesii", "Douglas-fir", "least_concern")

_DETECTION_LINE = "0 0.5 0.5 0.1 0.1 1.0"


def _image_sizes() -> list[int]:
    """238 per-image byte sizes summing exactly to the reference payload."""
    base, extra = divmod(REFERENCE_IMAGE_PAYLOAD_BYTES, REFERENCE_IMAGE_COUNT)
    return [base + 1 if i < extra else base for i in range(REFERENCE_IMAGE_COUNT)]


def reference_manifest_lines() -> list[str]:
    lines = [MANIFEST_HEADER]
    sizes = _image_sizes()
    index = 0
    for batch_no, (count, date, platform) in enumerate(REFERENCE_BATCHES, start=1):
        for i in range(count):
            name = f"b{batch_no}_{i:03d}.jpg"
            checksum = hashlib.sha256(name.encode()).hexdigest()
            lines.append(
                f"{name},{date},{platform},20,20,10.0,0.0,0.0,0.1,0.0,0.0,0.1,"
                f"{sizes[index]},{checksum}"
            )
            index += 1
    return lines


def reference_detection_files() -> dict[str, list[str]]:
    files = {}
    for line in reference_manifest_lines()[1:]:
        image_name = line.split(",", 1)[0]
        files[detection_file_name(image_name)] = [_DETECTION_LINE]
    return files


def reference_class_map() -> ClassMap:
    return ClassMap([REFERENCE_SPECIES[0]])


def build_reference_warehouse(root) -> None:
    """Create the reference warehouse at root via the normal ingest path."""
    manifest = parse_image_manifest(reference_manifest_lines(), source="reference-manifest")
    with open_warehouse(root, "rw") as handle:
        handle.upsert_species(*REFERENCE_SPECIES)
        report = ingest_image_batch(
            handle,
            manifest,
            reference_detection_files(),
            reference_class_map(),
        )
        if report.errors:
            raise AssertionError(f"reference corpus failed to ingest: {report.errors}")
