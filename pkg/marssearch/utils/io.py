import csv
import hashlib
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence, Type, TypeVar

from pydantic import BaseModel

from marssearch.utils.logger import logger

ModelT = TypeVar("ModelT", bound=BaseModel)

TABLE_DELIMITERS = {"csv": ",", "tsv": "\t"}


def atomic_write_bytes(file_path: str | Path, data: bytes) -> Path:
    """Write bytes to a sibling temp file, then rename it over the target."""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(file_path: str | Path, text: str) -> Path:
    return atomic_write_bytes(file_path, text.encode("utf-8"))


def save_json(data: BaseModel, file_path: str | Path) -> None:
    """Save Pydantic model to JSON file."""
    atomic_write_text(file_path, data.model_dump_json(indent=2))
    logger.info(f"Saved to {file_path}")


def load_json(file_path: str | Path, model: Type[ModelT]) -> ModelT:
    """Load and validate JSON against Pydantic model."""
    path = Path(file_path)

    with open(path, "r", encoding="utf-8") as f:
        json_str = f.read()

    instance = model.model_validate_json(json_str)
    logger.info(f"Loaded from {file_path}")
    return instance


def render_table(
    header: Sequence[str], rows: Iterable[Sequence[object]], fmt: str = "csv"
) -> str:
    """Render rows as CSV or TSV text with the given column order."""
    if fmt not in TABLE_DELIMITERS:
        raise ValueError(f"Unknown table format: '{fmt}' (expected csv or tsv)")

    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter=TABLE_DELIMITERS[fmt], lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_table(
    file_path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[object]],
    fmt: str = "csv",
) -> Path:
    """Atomically write a CSV/TSV table."""
    path = atomic_write_text(file_path, render_table(header, rows, fmt))
    logger.info(f"Wrote table {path}")
    return path


def read_table(file_path: str | Path, fmt: str = "csv") -> list[dict[str, str]]:
    with open(file_path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f, delimiter=TABLE_DELIMITERS[fmt]))


def file_digest(file_path: str | Path) -> str:
    """sha256 of a file's bytes, hex encoded."""
    digest = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def read_lines(file_path: str | Path) -> list[str]:
    """Non-empty, stripped lines of a text file."""
    with open(file_path, "r", encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]
