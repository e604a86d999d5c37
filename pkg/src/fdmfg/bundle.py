"""Result bundle emission: deterministic CSV files plus a manifest.

Numbers are written with repr-faithful 17 significant digits so a rerun with
the same configuration and seed produces byte-identical CSV files. The
manifest records the creation time, the configuration echo, a SHA-256 per
file, and a bundle hash over the sorted per-file hashes; everything except
the timestamp is reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

__all__ = ["ResultBundle", "format_float", "emit_bundle"]

MANIFEST_NAME = "manifest.json"


def format_float(x) -> str:
    """Render a float with enough digits to round-trip exactly."""
    return format(float(x), ".17g")


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    return format_float(value)


@dataclass
class ResultBundle:
    """An ordered collection of named tables headed for one output directory."""

    tables: dict = field(default_factory=dict)

    def add_table(self, name: str, header: Sequence[str],
                  rows: Sequence[Sequence]) -> None:
        if not name.endswith(".csv"):
            raise ValueError(f"table name must end in .csv, got {name!r}")
        if name in self.tables:
            raise ValueError(f"duplicate table {name!r}")
        width = len(header)
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(
                    f"{name}: row {i} has {len(row)} cells, header has {width}")
        self.tables[name] = (list(header), [list(r) for r in rows])


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def emit_bundle(bundle: ResultBundle, out_dir: str,
                config_echo: Optional[dict] = None,
                extra: Optional[dict] = None) -> dict:
    """Write every table and the manifest under out_dir; returns the manifest.

    ``extra`` entries (e.g. a converged flag) are merged into the manifest
    top level; they may not shadow the reserved keys.
    """
    os.makedirs(out_dir, exist_ok=True)
    hashes = {}
    for name, (header, rows) in bundle.tables.items():
        path = os.path.join(out_dir, name)
        _write_csv(path, header, rows)
        hashes[name] = _sha256(path)
    bundle_hash = hashlib.sha256(
        "\n".join(sorted(hashes.values())).encode("ascii")).hexdigest()
    manifest = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config_echo or {},
        "files": hashes,
        "bundle_hash": bundle_hash,
    }
    if extra:
        clash = set(extra) & set(manifest)
        if clash:
            raise ValueError(f"extra manifest keys shadow reserved ones: {sorted(clash)}")
        manifest.update(extra)
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
