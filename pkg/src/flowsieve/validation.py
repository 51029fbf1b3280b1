"""Input coercion and parameter checks shared by the estimator and CLI."""

from __future__ import annotations

from typing import Sequence

from .tensors import TransferRecord


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha!r}")
    return alpha


def as_transfer_records(X, n_attributes: int,
                        attribute_names: Sequence[str] = ()) -> list[TransferRecord]:
    """Coerce estimator input into a record list.

    Accepts record sequences, (src, dst, *attrs, amount) row sequences
    or arrays, and dataframes carrying columns ``src``, ``dst``,
    ``amount`` plus one column per attribute name.
    """
    if hasattr(X, "columns") and hasattr(X, "itertuples"):
        cols = ["src", "dst", *attribute_names, "amount"]
        missing = [c for c in cols if c not in X.columns]
        if missing:
            raise ValueError(f"dataframe is missing columns {missing}")
        rows = X[cols].itertuples(index=False, name=None)
        return [
            TransferRecord(r[0], r[1], tuple(r[2:-1]), float(r[-1])) for r in rows
        ]
    X = list(X)
    if not X:
        raise ValueError("no input records")
    if isinstance(X[0], TransferRecord):
        return X
    width = 3 + n_attributes
    out = []
    for i, row in enumerate(X):
        row = tuple(row)
        if len(row) != width:
            raise ValueError(
                f"row {i} has {len(row)} fields, expected {width} "
                f"(src, dst, {n_attributes} attributes, amount)"
            )
        out.append(TransferRecord(row[0], row[1], row[2:-1], float(row[-1])))
    return out
