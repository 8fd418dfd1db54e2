import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from django.core.exceptions import SuspiciousFileOperation
from django.utils.text import get_valid_filename
from rest_framework import serializers

from .exceptions import ConfigError

logger = logging.getLogger(__name__)


def _clean(value):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(value, float):
        return value if math.isfinite(value) else str(value)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def dump_json(payload) -> str:
    """Deterministic JSON text: sorted keys, fixed indent, no timestamps."""
    return json.dumps(_clean(payload), indent=2, sort_keys=True) + '\n'


def write_json(path: Path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(payload))
    logger.info(f"Wrote {path}")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    logger.info(f"Wrote {path}")
    return path


def read_json(path: Path, what: str = 'file') -> object:
    """Parse a JSON file; missing or malformed files raise ConfigError naming the path."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what.capitalize()} not found: {path}")
    text = path.read_text()
    if not text.strip():
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Malformed {what} {path}: {exc}") from exc


def read_csv(path: Path, what: str = 'CSV file') -> List[Dict[str, str]]:
    """Rows as dicts with empty cells dropped."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what.capitalize()} not found: {path}")
    with path.open(newline='') as handle:
        reader = csv.DictReader(handle)
        return [{k.strip(): v.strip() for k, v in row.items() if k and v and v.strip()} for row in reader]


def format_errors(errors) -> str:
    """Flatten DRF validation errors into one line."""
    if isinstance(errors, dict):
        parts = []
        for key, value in errors.items():
            text = format_errors(value)
            parts.append(text if key == 'non_field_errors' else f"{key}: {text}")
        return '; '.join(parts)
    if isinstance(errors, list):
        return '; '.join(format_errors(e) for e in errors)
    return str(errors)


def validated(serializer_class, data, what: str, **kwargs):
    """Validate data with a DRF serializer, turning failures into ConfigError."""
    serializer = serializer_class(data=data, **kwargs)
    try:
        serializer.is_valid(raise_exception=True)
    except serializers.ValidationError as exc:
        raise ConfigError(f"Invalid {what}: {format_errors(exc.detail)}") from exc
    return serializer


def output_paths(out_dir: Path, stem: str, formats: str) -> Dict[str, Optional[Path]]:
    """JSON/CSV destinations for one product under the chosen formats."""
    try:
        stem = get_valid_filename(stem)
    except SuspiciousFileOperation as exc:
        raise ConfigError(f"Unusable output name '{stem}'") from exc
    out_dir = Path(out_dir)
    return {
        'json': out_dir / f"{stem}.json" if formats in ('json', 'both') else None,
        'csv': out_dir / f"{stem}.csv" if formats in ('csv', 'both') else None,
    }
