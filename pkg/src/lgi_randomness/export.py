"""Export results, trial streams and bit strings to disk."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from collections.abc import Iterable, Sequence
from datetime import datetime
from typing import Any, TextIO

from pydantic import BaseModel, ValidationError

from lgi_randomness.config import get_settings
from lgi_randomness.core.simulator import BitOutput
from lgi_randomness.core.types import TrialRecord, TrialStream
from lgi_randomness.errors import TrialFileError
from lgi_randomness.schemas import BitManifest, TrialLine, TrialManifest

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """CSV cell text; floats keep a fixed number of significant digits."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, f".{get_settings().csv_significant_digits}g")
    if value is None:
        return ""
    return str(value)


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], stream: TextIO) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([format_value(v) for v in row])
        count += 1
    return count


def export_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], output_path: str) -> str:
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    with open(output_path, "w", newline="", encoding="utf-8") as f:
        count = write_csv(header, rows, f)
    logger.info(f"Exported {count} rows to {output_path}")
    return output_path


def dump_json(model: BaseModel, pretty: bool = False) -> str:
    data = model.model_dump(mode="json")
    if pretty:
        return json.dumps(data, indent=2, ensure_ascii=False)
    return json.dumps(data, separators=(",", ":"), ensure_ascii=False)


def export_json(model: BaseModel, output_path: str, pretty: bool = False) -> str:
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        f.write(dump_json(model, pretty=pretty))
        f.write("\n")
    logger.info(f"Exported {type(model).__name__} to {output_path}")
    return output_path


def export_trials(trials: TrialStream | Iterable[TrialRecord], output_path: str) -> str:
    """One compact JSON object per line, keys ``i, x, y, a, b``."""
    stream = TrialStream.coerce(trials)
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        for i, x, y, a, b in zip(
            stream.index.tolist(), stream.x.tolist(), stream.y.tolist(),
            stream.a.tolist(), stream.b.tolist(),
        ):
            line = {"i": i, "x": x, "y": y, "a": a if x != 0 else None, "b": b}
            f.write(json.dumps(line, separators=(",", ":")))
            f.write("\n")
    logger.info(f"Exported {len(stream)} trials to {output_path}")
    return output_path


def read_trials(path: str) -> TrialStream:
    """Parse a JSONL trial file; malformed lines raise TrialFileError with their line number."""
    records: list[TrialRecord] = []
    with open(path, encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                records.append(TrialLine.model_validate_json(text).to_record())
            except ValidationError as exc:
                first = exc.errors()[0]
                location = ".".join(str(part) for part in first["loc"])
                detail = f"{location}: {first['msg']}" if location else first["msg"]
                raise TrialFileError(line_number, detail) from exc
    logger.info(f"Read {len(records)} trials from {path}")
    return TrialStream.from_records(records)


def manifest_path(trials_path: str) -> str:
    return f"{trials_path}.manifest.json"


def read_manifest(trials_path: str) -> TrialManifest | None:
    """The manifest written next to a simulated trial file, if there is one."""
    path = manifest_path(trials_path)
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as f:
        return TrialManifest.model_validate_json(f.read())


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def export_bits(
    output: BitOutput,
    output_dir: str | None = None,
    created_at: datetime | None = None,
) -> list[str]:
    """One ASCII file per configuration group, plus ``manifest.json``."""
    directory = output_dir or os.path.join(get_settings().output_dir, "bits")
    os.makedirs(directory, exist_ok=True)

    paths = []
    for key, bits in output.groups.items():
        path = os.path.join(directory, BitOutput.file_name(key))
        with open(path, "w", encoding="ascii") as f:
            f.write(bits)
        paths.append(path)

    manifest = BitManifest.from_output(output, created_at or datetime.now().astimezone())
    paths.append(export_json(manifest, os.path.join(directory, "manifest.json"), pretty=True))
    logger.info(
        f"Exported {output.total_length} bits in {len(output.groups)} groups to {directory}"
    )
    return paths
