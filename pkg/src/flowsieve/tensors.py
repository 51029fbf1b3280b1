"""Coupled sparse tensor pair over two-step transfer data.

Transfers are held as two tensors sharing the middle-account and
attribute modes: P collects source -> middle transfers, Q collects
middle -> destination transfers. Entries at identical coordinates are
coalesced by summing amounts, and adjacency is kept in CSR form in both
orientations so mass aggregations stay cheap at millions of entries.

A "fiber" here is one (middle account, attribute values) combination;
its P-mass is the money flowing into that middle account under those
attribute values, its Q-mass the money flowing out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, DegenerateInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModeSchema:
    """Mode layout shared by both tensors.

    Two account modes are implicit; ``attribute_names`` names the
    remaining modes (attribute 0 is conventionally the time bin).
    """

    attribute_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))
        if len(self.attribute_names) < 1:
            raise ValueError("schema needs at least one attribute mode")

    @property
    def n_modes(self) -> int:
        return 2 + len(self.attribute_names)

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_names)


@dataclass(frozen=True, slots=True)
class TransferRecord:
    """One money transfer: src pays dst ``amount`` under discrete attributes."""

    src: object
    dst: object
    attrs: tuple
    amount: float

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple(self.attrs))
        if self.amount < 0:
            raise ValueError(f"negative amount {self.amount!r}")


@dataclass(frozen=True, order=True, slots=True)
class FiberKey:
    """Identifies one coupled fiber pair: a middle account plus attribute values."""

    y: object
    attrs: tuple

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple(self.attrs))


class FlowBlock:
    """A candidate solution: retained source accounts, destination accounts,
    and fiber keys. Middle accounts and attribute values are derived from
    the fiber keys, never stored."""

    __slots__ = ("x_set", "z_set", "fiber_set")

    def __init__(self, x_set: Iterable, z_set: Iterable, fiber_set: Iterable[FiberKey]):
        self.x_set = frozenset(x_set)
        self.z_set = frozenset(z_set)
        self.fiber_set = frozenset(fiber_set)

    def middle_accounts(self) -> frozenset:
        return frozenset(k.y for k in self.fiber_set)

    def attribute_values(self, mode: int) -> frozenset:
        """Distinct values of attribute ``mode`` across retained fibers."""
        return frozenset(k.attrs[mode] for k in self.fiber_set)

    def account_sets(self) -> dict:
        return {"x": self.x_set, "y": self.middle_accounts(), "z": self.z_set}

    def __eq__(self, other):
        if not isinstance(other, FlowBlock):
            return NotImplemented
        return (
            self.x_set == other.x_set
            and self.z_set == other.z_set
            and self.fiber_set == other.fiber_set
        )

    def __hash__(self):
        return hash((self.x_set, self.z_set, self.fiber_set))

    def __repr__(self):
        return (
            f"FlowBlock(|x|={len(self.x_set)}, |z|={len(self.z_set)}, "
            f"|fibers|={len(self.fiber_set)})"
        )


@dataclass(frozen=True)
class _Adjacency:
    """Coalesced sparse matrix stored in both CSR orientations."""

    n_rows: int
    n_cols: int
    row_indptr: np.ndarray
    row_col: np.ndarray
    row_val: np.ndarray
    col_indptr: np.ndarray
    col_row: np.ndarray
    col_val: np.ndarray

    @property
    def n_entries(self) -> int:
        return len(self.row_val)

    def entry_rows(self) -> np.ndarray:
        """Row index per entry, aligned with ``row_col``/``row_val``."""
        return np.repeat(
            np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_indptr)
        )

    def row_sums(self) -> np.ndarray:
        return np.bincount(
            self.entry_rows(), weights=self.row_val, minlength=self.n_rows
        )

    def col_sums(self) -> np.ndarray:
        cols = np.repeat(
            np.arange(self.n_cols, dtype=np.int64), np.diff(self.col_indptr)
        )
        return np.bincount(cols, weights=self.col_val, minlength=self.n_cols)

    def total_mass(self) -> float:
        return float(self.row_val.sum())


class CoupledTensors:
    """The coupled pair (P, Q) with shared middle-account and attribute modes.

    Immutable after construction; safe for concurrent reads. Use
    :func:`build_coupled` or :func:`build_coupled_from_columns` to create
    one.
    """

    def __init__(self, schema, x_labels, y_labels, z_labels, attr_labels,
                 fiber_y, fiber_attr, p, q, dropped_records=0):
        self.schema = schema
        self.x_labels = tuple(x_labels)
        self.y_labels = tuple(y_labels)
        self.z_labels = tuple(z_labels)
        self.attr_labels = tuple(tuple(t) for t in attr_labels)
        self.fiber_y = fiber_y
        self.fiber_attr = fiber_attr
        self._p = p
        self._q = q
        self.dropped_records = dropped_records

    # -- sizes and totals ------------------------------------------------

    @property
    def n_fibers(self) -> int:
        return len(self.fiber_y)

    @property
    def n_entries(self) -> int:
        """Coalesced entry count across P and Q."""
        return self._p.n_entries + self._q.n_entries

    @property
    def total_p_mass(self) -> float:
        return self._p.total_mass()

    @property
    def total_q_mass(self) -> float:
        return self._q.total_mass()

    # -- label views -----------------------------------------------------

    @property
    def x_ids(self) -> frozenset:
        return frozenset(self.x_labels)

    @property
    def y_ids(self) -> frozenset:
        return frozenset(self.y_labels)

    @property
    def z_ids(self) -> frozenset:
        return frozenset(self.z_labels)

    @cached_property
    def x_index(self) -> dict:
        return {a: i for i, a in enumerate(self.x_labels)}

    @cached_property
    def y_index(self) -> dict:
        return {a: i for i, a in enumerate(self.y_labels)}

    @cached_property
    def z_index(self) -> dict:
        return {a: i for i, a in enumerate(self.z_labels)}

    @cached_property
    def fiber_index(self) -> dict:
        return {self.fiber_key(i): i for i in range(self.n_fibers)}

    def fiber_key(self, i: int) -> FiberKey:
        attrs = tuple(
            self.attr_labels[k][self.fiber_attr[i, k]]
            for k in range(self.schema.n_attributes)
        )
        return FiberKey(self.y_labels[self.fiber_y[i]], attrs)

    def fiber_keys(self) -> Iterator[FiberKey]:
        for i in range(self.n_fibers):
            yield self.fiber_key(i)

    def full_block(self) -> FlowBlock:
        return FlowBlock(self.x_labels, self.z_labels, self.fiber_keys())

    # -- adjacency views (contract surface; prefer the array internals
    #    for bulk work) ---------------------------------------------------

    def p_by_x(self, x) -> list:
        """(FiberKey, mass) pairs for one source account."""
        j = self.x_index[x]
        s, e = self._p.row_indptr[j], self._p.row_indptr[j + 1]
        return [
            (self.fiber_key(c), float(v))
            for c, v in zip(self._p.row_col[s:e], self._p.row_val[s:e])
        ]

    def q_by_z(self, z) -> list:
        j = self.z_index[z]
        s, e = self._q.row_indptr[j], self._q.row_indptr[j + 1]
        return [
            (self.fiber_key(c), float(v))
            for c, v in zip(self._q.row_col[s:e], self._q.row_val[s:e])
        ]

    def p_by_fiber(self, key: FiberKey) -> list:
        """(source account, mass) pairs for one fiber."""
        i = self._fiber_idx(key)
        s, e = self._p.col_indptr[i], self._p.col_indptr[i + 1]
        return [
            (self.x_labels[r], float(v))
            for r, v in zip(self._p.col_row[s:e], self._p.col_val[s:e])
        ]

    def q_by_fiber(self, key: FiberKey) -> list:
        i = self._fiber_idx(key)
        s, e = self._q.col_indptr[i], self._q.col_indptr[i + 1]
        return [
            (self.z_labels[r], float(v))
            for r, v in zip(self._q.col_row[s:e], self._q.col_val[s:e])
        ]

    def _fiber_idx(self, key: FiberKey) -> int:
        try:
            return self.fiber_index[key]
        except KeyError:
            raise DataError(f"fiber {key} was never observed") from None

    # -- dense restrictions (used by the metric and the detector) ---------

    def _dense_block(self, block: FlowBlock):
        """Boolean masks (x_alive, z_alive, fiber_alive) for a block."""
        x_alive = np.zeros(len(self.x_labels), dtype=bool)
        z_alive = np.zeros(len(self.z_labels), dtype=bool)
        fiber_alive = np.zeros(self.n_fibers, dtype=bool)
        try:
            for a in block.x_set:
                x_alive[self.x_index[a]] = True
            for a in block.z_set:
                z_alive[self.z_index[a]] = True
            for k in block.fiber_set:
                fiber_alive[self.fiber_index[k]] = True
        except KeyError as exc:
            raise DataError(f"block references unknown id {exc.args[0]!r}") from None
        return x_alive, z_alive, fiber_alive

    def _restricted_fiber_masses(self, x_alive, z_alive, fiber_alive):
        """Per-fiber in/out mass under the given restriction, full-length arrays."""
        pm = x_alive[self._p.entry_rows()] & fiber_alive[self._p.row_col]
        in_mass = np.bincount(
            self._p.row_col[pm], weights=self._p.row_val[pm], minlength=self.n_fibers
        )
        qm = z_alive[self._q.entry_rows()] & fiber_alive[self._q.row_col]
        out_mass = np.bincount(
            self._q.row_col[qm], weights=self._q.row_val[qm], minlength=self.n_fibers
        )
        return in_mass, out_mass


# -- operations ------------------------------------------------------------


def fiber_masses(t: CoupledTensors, block: FlowBlock, key: FiberKey):
    """Money into and out of one fiber, restricted to the block's accounts.

    ``key`` must belong to ``block.fiber_set``.
    """
    if key not in block.fiber_set:
        raise ValueError(f"fiber {key} is not in the block")
    i = t._fiber_idx(key)
    x_dense = {t.x_index[a] for a in block.x_set}
    z_dense = {t.z_index[a] for a in block.z_set}
    s, e = t._p.col_indptr[i], t._p.col_indptr[i + 1]
    in_mass = sum(
        v
        for r, v in zip(t._p.col_row[s:e].tolist(), t._p.col_val[s:e].tolist())
        if r in x_dense
    )
    s, e = t._q.col_indptr[i], t._q.col_indptr[i + 1]
    out_mass = sum(
        v
        for r, v in zip(t._q.col_row[s:e].tolist(), t._q.col_val[s:e].tolist())
        if r in z_dense
    )
    return float(in_mass), float(out_mass)


def total_block_mass(t: CoupledTensors, block: FlowBlock) -> float:
    """Sum of P masses (x in block, fiber in block) plus Q masses
    (fiber in block, z in block)."""
    x_alive, z_alive, fiber_alive = t._dense_block(block)
    pm = x_alive[t._p.entry_rows()] & fiber_alive[t._p.row_col]
    qm = z_alive[t._q.entry_rows()] & fiber_alive[t._q.row_col]
    return float(t._p.row_val[pm].sum() + t._q.row_val[qm].sum())


# -- construction ------------------------------------------------------------


def build_coupled(records: Sequence[TransferRecord], x_ids, y_ids, z_ids,
                  schema: ModeSchema) -> CoupledTensors:
    """Build the coupled pair from transfer records and candidate role sets.

    Records with src in x_ids and dst in y_ids populate P; records with
    src in y_ids and dst in z_ids populate Q (a record may populate both
    when the role sets overlap). Anything else is dropped with a counted
    warning. Duplicate coordinates are coalesced by summing amounts.
    """
    n_attr = schema.n_attributes
    src, dst, amounts = [], [], []
    attr_cols = [[] for _ in range(n_attr)]
    for idx, rec in enumerate(records):
        if len(rec.attrs) != n_attr:
            raise DataError(
                f"record {idx} has {len(rec.attrs)} attributes, schema wants {n_attr}"
            )
        src.append(rec.src)
        dst.append(rec.dst)
        for k in range(n_attr):
            attr_cols[k].append(rec.attrs[k])
        amounts.append(rec.amount)
    return build_coupled_from_columns(
        src, dst, attr_cols, amounts, x_ids, y_ids, z_ids, schema
    )


def build_coupled_from_columns(src, dst, attr_cols, amounts, x_ids, y_ids, z_ids,
                               schema: ModeSchema) -> CoupledTensors:
    """Columnar variant of :func:`build_coupled`.

    ``src``/``dst`` are account-id columns, ``attr_cols`` one column per
    attribute mode, ``amounts`` the money column; all the same length.
    """
    if len(attr_cols) != schema.n_attributes:
        raise DataError(
            f"{len(attr_cols)} attribute columns, schema wants {schema.n_attributes}"
        )
    src = _as_column(src)
    dst = _as_column(dst)
    amounts = np.asarray(amounts, dtype=np.float64)
    attr_cols = [_as_column(c) for c in attr_cols]
    n = len(amounts)
    for col in (src, dst, *attr_cols):
        if len(col) != n:
            raise DataError("column lengths disagree")
    if n and amounts.min() < 0:
        bad = int(np.argmin(amounts))
        raise DataError(f"negative amount {amounts[bad]!r} at record {bad}")

    x_labels = _label_table(x_ids)
    y_labels = _label_table(y_ids)
    z_labels = _label_table(z_ids)

    src_x, src_is_x = _lookup(src, x_labels)
    dst_y, dst_is_y = _lookup(dst, y_labels)
    src_y, src_is_y = _lookup(src, y_labels)
    dst_z, dst_is_z = _lookup(dst, z_labels)
    p_mask = src_is_x & dst_is_y
    q_mask = src_is_y & dst_is_z
    dropped = int(np.count_nonzero(~(p_mask | q_mask)))
    if dropped:
        logger.warning("dropped %d records matching neither X->Y nor Y->Z", dropped)

    used = p_mask | q_mask
    attr_tables = []
    attr_dense = []
    for col in attr_cols:
        table = _label_table(col[used])
        dense, ok = _lookup(col, table)
        attr_tables.append(table)
        attr_dense.append(dense)

    n_p = int(np.count_nonzero(p_mask))
    n_q = int(np.count_nonzero(q_mask))
    if n_p == 0 or n_q == 0:
        raise DegenerateInputError(
            f"degenerate input: {n_p} P records and {n_q} Q records after filtering"
        )

    # Fiber coordinates: (y, attrs...) from the dst side for P, src side for Q.
    k = len(attr_cols)
    coords = np.empty((n_p + n_q, 1 + k), dtype=np.int64)
    coords[:n_p, 0] = dst_y[p_mask]
    coords[n_p:, 0] = src_y[q_mask]
    for j, dense in enumerate(attr_dense):
        coords[:n_p, 1 + j] = dense[p_mask]
        coords[n_p:, 1 + j] = dense[q_mask]
    fiber_coords, fiber_of = _unique_rows(coords)

    p = _adjacency(
        src_x[p_mask], fiber_of[:n_p], amounts[p_mask],
        len(x_labels), len(fiber_coords),
    )
    q = _adjacency(
        dst_z[q_mask], fiber_of[n_p:], amounts[q_mask],
        len(z_labels), len(fiber_coords),
    )
    return CoupledTensors(
        schema=schema,
        x_labels=x_labels.tolist(),
        y_labels=y_labels.tolist(),
        z_labels=z_labels.tolist(),
        attr_labels=[t.tolist() for t in attr_tables],
        fiber_y=np.ascontiguousarray(fiber_coords[:, 0]),
        fiber_attr=np.ascontiguousarray(fiber_coords[:, 1:]),
        p=p,
        q=q,
        dropped_records=dropped,
    )


def _as_column(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object or arr.dtype.kind in "OUSif":
        return arr
    return np.asarray(values, dtype=object)


def _label_table(values) -> np.ndarray:
    """Deterministic dense-index table: sorted distinct values."""
    if isinstance(values, np.ndarray):
        return np.unique(values)
    return np.asarray(sorted(set(values)))


def _lookup(values: np.ndarray, table: np.ndarray):
    """Positions of ``values`` in the sorted ``table`` plus a membership mask."""
    n = len(table)
    if n == 0:
        z = np.zeros(len(values), dtype=np.int64)
        return z, np.zeros(len(values), dtype=bool)
    pos = np.searchsorted(table, values)
    pos = np.minimum(pos, n - 1)
    ok = table[pos] == values
    return pos.astype(np.int64), np.asarray(ok, dtype=bool)


def _unique_rows(mat: np.ndarray):
    """Lexicographically sorted unique rows and the row -> unique-row map."""
    if len(mat) == 0:
        return mat.reshape(0, mat.shape[1]), np.zeros(0, dtype=np.int64)
    dims = mat.max(axis=0).astype(np.int64) + 1
    span = 1
    for d in dims.tolist():
        span *= int(d)
    if span < 2**62:
        key = np.zeros(len(mat), dtype=np.int64)
        for j in range(mat.shape[1]):
            key = key * dims[j] + mat[:, j]
        uniq, first, inverse = np.unique(key, return_index=True, return_inverse=True)
        return mat[first], inverse.astype(np.int64)
    uniq, inverse = np.unique(mat, axis=0, return_inverse=True)
    return uniq, inverse.astype(np.int64)


def _adjacency(rows, cols, vals, n_rows, n_cols) -> _Adjacency:
    """Coalesce duplicate coordinates and store both CSR orientations.

    Sorting includes the value column so the per-coordinate summation
    order is independent of input order.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if n_rows * n_cols < 2**62:
        order = np.lexsort((vals, rows * n_cols + cols))
    else:
        order = np.lexsort((vals, cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    if len(r):
        boundary = np.empty(len(r), dtype=bool)
        boundary[0] = True
        boundary[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        starts = np.flatnonzero(boundary)
        r, c = r[starts], c[starts]
        v = np.add.reduceat(v, starts)
    # r is sorted by (row, col) already; c-major order for the other view.
    row_indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n_rows), out=row_indptr[1:])
    col_order = np.lexsort((r, c))
    col_indptr = np.zeros(n_cols + 1, dtype=np.int64)
    np.cumsum(np.bincount(c, minlength=n_cols), out=col_indptr[1:])
    return _Adjacency(
        n_rows=n_rows,
        n_cols=n_cols,
        row_indptr=row_indptr,
        row_col=c,
        row_val=v,
        col_indptr=col_indptr,
        col_row=r[col_order],
        col_val=v[col_order],
    )
