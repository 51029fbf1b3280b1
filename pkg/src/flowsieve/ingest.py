"""Transaction file ingestion: parsing, time binning, role partitioning.

The input is headered delimited text with columns ``from_acct``,
``to_acct``, ``time``, ``money``, plus any extra attribute columns
(e.g. a transaction-type code). Timestamps are numeric seconds or
ISO-8601; they are binned into integer indices which become the first
record attribute. Accounts are partitioned into source, middle, and
destination candidates by their in/out mass ratio unless explicit role
files override that.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, MalformedInputError
from .tensors import ModeSchema, TransferRecord

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("from_acct", "to_acct", "time", "money")


@dataclass(frozen=True)
class IngestConfig:
    """Parsing and partitioning knobs.

    ``time_origin`` of None means "use the earliest timestamp in the
    file". ``role_ratio`` is the rho > 1 threshold: an account whose
    incoming mass exceeds rho times its outgoing mass is a source
    candidate, the mirror case a destination candidate, the rest middle
    candidates. If any role override file is given, all three must be.
    """

    time_bin_width: float
    time_origin: float | None = None
    role_ratio: float = 2.0
    extra_attr_columns: tuple[str, ...] = ()
    delimiter: str = ","
    max_malformed: int = 100
    x_role_file: str | None = None
    y_role_file: str | None = None
    z_role_file: str | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "extra_attr_columns", tuple(self.extra_attr_columns)
        )
        if self.time_bin_width <= 0:
            raise ValueError("time_bin_width must be positive")
        if self.role_ratio <= 1.0:
            raise ValueError("role_ratio must exceed 1")
        if self.max_malformed < 0:
            raise ValueError("max_malformed must be nonnegative")
        overrides = (self.x_role_file, self.y_role_file, self.z_role_file)
        if any(overrides) and not all(overrides):
            raise ValueError("role override files must be given for all three roles")


@dataclass(frozen=True)
class IngestResult:
    records: list[TransferRecord]
    x_ids: frozenset
    y_ids: frozenset
    z_ids: frozenset
    schema: ModeSchema
    report: dict


def bin_time(timestamp: float, config: IngestConfig) -> int:
    """Bin index of one timestamp: floor((t - origin) / width)."""
    if config.time_origin is None:
        raise ValueError("config.time_origin is unset")
    if timestamp < config.time_origin:
        raise ValueError(
            f"timestamp {timestamp!r} precedes origin {config.time_origin!r}"
        )
    return int(math.floor((timestamp - config.time_origin) / config.time_bin_width))


def partition_roles(records: Iterable[TransferRecord], role_ratio: float = 2.0):
    """Split accounts into (sources, middles, destinations) by mass ratio.

    total_in > ratio * total_out puts an account among the source
    candidates, the mirror case among destinations, everything else in
    the middle. The three sets are disjoint and cover every account seen.
    """
    total_in: dict = defaultdict(float)
    total_out: dict = defaultdict(float)
    for rec in records:
        total_out[rec.src] += rec.amount
        total_in[rec.dst] += rec.amount
    x_ids, y_ids, z_ids = set(), set(), set()
    for acct in set(total_in) | set(total_out):
        inflow = total_in.get(acct, 0.0)
        outflow = total_out.get(acct, 0.0)
        if inflow > role_ratio * outflow:
            x_ids.add(acct)
        elif outflow > role_ratio * inflow:
            z_ids.add(acct)
        else:
            y_ids.add(acct)
    return frozenset(x_ids), frozenset(y_ids), frozenset(z_ids)


def load_transactions(path, config: IngestConfig) -> IngestResult:
    """Parse a transaction file into binned records plus role sets.

    Malformed lines are counted and skipped; more than
    ``config.max_malformed`` of them aborts the load.
    """
    path = Path(path)
    extras = config.extra_attr_columns
    malformed: Counter = Counter()
    rows = []
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise MalformedInputError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh, delimiter=config.delimiter)
        header = reader.fieldnames or []
        missing = [c for c in (*REQUIRED_COLUMNS, *extras) if c not in header]
        if missing:
            raise MalformedInputError(f"{path}: missing columns {missing}")
        for row in reader:
            try:
                src = (row["from_acct"] or "").strip()
                dst = (row["to_acct"] or "").strip()
                if not src or not dst:
                    raise ValueError("empty account id")
                ts = _parse_time(row["time"])
                amount = float(row["money"])
                if amount < 0 or math.isnan(amount):
                    raise ValueError("bad amount")
                attr_vals = tuple((row[c] or "").strip() for c in extras)
            except (ValueError, TypeError):
                malformed["unparseable"] += 1
                continue
            rows.append((src, dst, ts, attr_vals, amount))

    origin = config.time_origin
    if origin is None and rows:
        origin = min(r[2] for r in rows)
    records = []
    for src, dst, ts, attr_vals, amount in rows:
        if ts < origin:
            malformed["before_origin"] += 1
            continue
        b = int(math.floor((ts - origin) / config.time_bin_width))
        records.append(TransferRecord(src, dst, (b, *attr_vals), amount))

    n_bad = sum(malformed.values())
    if n_bad > config.max_malformed:
        raise MalformedInputError(
            f"{path}: {n_bad} malformed lines exceeds budget {config.max_malformed}"
        )
    if not records:
        raise DataError(f"{path}: no usable records")

    if config.x_role_file:
        x_ids = _read_role_file(config.x_role_file)
        y_ids = _read_role_file(config.y_role_file)
        z_ids = _read_role_file(config.z_role_file)
    else:
        x_ids, y_ids, z_ids = partition_roles(records, config.role_ratio)

    schema = ModeSchema(("time_bin", *extras))
    report = {
        "rows_kept": len(records),
        "rows_malformed": dict(malformed),
        "time_origin": origin,
        "roles": {"x": len(x_ids), "y": len(y_ids), "z": len(z_ids)},
    }
    logger.info(
        "ingested %s: %d records kept, %d skipped, roles x=%d y=%d z=%d",
        path, len(records), n_bad, len(x_ids), len(y_ids), len(z_ids),
    )
    return IngestResult(records, x_ids, y_ids, z_ids, schema, report)


def write_transactions(path, records: Sequence[TransferRecord],
                       schema: ModeSchema, delimiter: str = ","):
    """Write binned records in the ingest format.

    The time column carries the bin index itself, so the file reloads
    exactly with ``time_bin_width=1`` and ``time_origin=0``.
    """
    extras = schema.attribute_names[1:]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["from_acct", "to_acct", "time", *extras, "money"])
        for rec in records:
            writer.writerow(
                [rec.src, rec.dst, rec.attrs[0], *rec.attrs[1:], repr(rec.amount)]
            )


def _parse_time(raw) -> float:
    s = (raw or "").strip()
    if not s:
        raise ValueError("empty time")
    try:
        return float(s)
    except ValueError:
        pass
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _read_role_file(path) -> frozenset:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise MalformedInputError(f"cannot read role file {path}: {exc}") from exc
    ids = frozenset(line.strip() for line in lines if line.strip())
    if not ids:
        raise DataError(f"role file {path} lists no accounts")
    return ids
