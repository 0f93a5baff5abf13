#!/usr/bin/env python3
"""Build the 238-image reference warehouse and print its size report.

The reference load reproduces the calibration numbers end to end:
four batches (22, 50, 116, 50 images) over three capture days, one detection
per image, 920.9 MiB of image payload. Running it prints the stats table,
the ten-year growth projection, and the standing discrepancy note.
"""

import argparse
import sys
import tempfile
from pathlib import Path

from canopydw.capacity import estimate_from_warehouse
from canopydw.fixtures import build_reference_warehouse
from canopydw.report import text_table
from canopydw.storage import open_warehouse, stats_rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "root",
        nargs="?",
        default=None,
        help="warehouse root to create (default: a fresh temp directory)",
    )
    parser.add_argument("--years", type=int, default=10)
    parser.add_argument("--events-per-year", type=int, default=4)
    args = parser.parse_args()

    root = Path(args.root) if args.root else Path(tempfile.mkdtemp()) / "reference_wh"
    build_reference_warehouse(root)
    print(f"reference warehouse at {root}\n")

    with open_warehouse(root, "ro") as handle:
        columns, rows = stats_rows(handle.stats())
        print(text_table(columns, rows))
        print()
        report = estimate_from_warehouse(handle, args.events_per_year, args.years)
    sys.stdout.write(report.to_text())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
