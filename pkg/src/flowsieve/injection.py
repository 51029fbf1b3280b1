"""Synthetic laundering-flow injection with ground-truth labels.

An injection plants a tripartite group of fraudulent accounts and wires
dirty money through it: the total is split across the middle accounts
by a Dirichlet draw, each middle account's intake is split across its
incoming edges and (minus a small camouflage residue) across its
outgoing edges, and every edge incident to one middle account shares a
single randomly chosen value per attribute mode, so the whole transfer
happens inside one time bin. Background records are never modified,
only appended to.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, InfeasibleSamplingError
from .tensors import (
    CoupledTensors,
    ModeSchema,
    TransferRecord,
    build_coupled_from_columns,
)

_MAX_EDGE_DRAWS = 10_000


@dataclass(frozen=True)
class InjectionConfig:
    """Parameters of one planted flow."""

    n_x: int
    n_y: int
    n_z: int
    total_dirty_money: float
    edge_prob: float = 1.0
    dirichlet_scale: float = 100.0
    camouflage_max: float = 100_000.0
    camouflage_cap_frac: float = 0.01
    rng_seed: int = 0
    n_time_bins: int | None = None  # bin domain when the base supplies none

    def __post_init__(self):
        if min(self.n_x, self.n_y, self.n_z) < 1:
            raise ValueError("group sizes must be at least 1")
        if not 0.0 < self.edge_prob <= 1.0:
            raise ValueError("edge_prob must be in (0, 1]")
        if self.total_dirty_money <= 0:
            raise ValueError("total_dirty_money must be positive")
        if self.dirichlet_scale <= 0:
            raise ValueError("dirichlet_scale must be positive")
        if self.camouflage_max < 0 or self.camouflage_cap_frac < 0:
            raise ValueError("camouflage bounds must be nonnegative")


@dataclass(frozen=True)
class LabeledDataset:
    """One sweep point: the records plus the planted truth."""

    sweep_value: float
    records: list
    truth: dict


def inject(base: Sequence[TransferRecord], roles, config: InjectionConfig,
           schema: ModeSchema | None = None):
    """Append one planted flow to ``base`` and return (records, truth).

    ``roles`` is the (x_ids, y_ids, z_ids) candidate triple; the fraud
    groups are sampled from it. Attribute domains come from the base
    records; an empty base needs ``config.n_time_bins``.
    """
    x_pool, y_pool, z_pool = (sorted(r) for r in roles)
    if len(x_pool) < config.n_x or len(y_pool) < config.n_y or len(z_pool) < config.n_z:
        raise InfeasibleSamplingError(
            f"cannot sample groups {config.n_x}/{config.n_y}/{config.n_z} from "
            f"pools {len(x_pool)}/{len(y_pool)}/{len(z_pool)}"
        )
    domains = _attribute_domains(base, config, schema)
    rng = np.random.default_rng(config.rng_seed)

    xs = [x_pool[i] for i in rng.permutation(len(x_pool))[: config.n_x]]
    ys = [y_pool[i] for i in rng.permutation(len(y_pool))[: config.n_y]]
    zs = [z_pool[i] for i in rng.permutation(len(z_pool))[: config.n_z]]

    per_middle = rng.dirichlet(
        np.full(config.n_y, config.dirichlet_scale)
    ) * config.total_dirty_money

    injected = []
    for y, in_amount in zip(ys, per_middle.tolist()):
        attrs = tuple(dom[rng.integers(len(dom))] for dom in domains)
        in_edges = _draw_edges(rng, config.n_x, config.edge_prob)
        out_edges = _draw_edges(rng, config.n_z, config.edge_prob)
        residue_cap = min(config.camouflage_max,
                          config.camouflage_cap_frac * in_amount)
        residue = float(rng.uniform(0.0, residue_cap)) if residue_cap > 0 else 0.0
        in_split = rng.dirichlet(np.full(len(in_edges), config.dirichlet_scale))
        out_split = rng.dirichlet(np.full(len(out_edges), config.dirichlet_scale))
        for j, share in zip(in_edges, (in_split * in_amount).tolist()):
            injected.append(TransferRecord(xs[j], y, attrs, share))
        out_amount = in_amount - residue
        for j, share in zip(out_edges, (out_split * out_amount).tolist()):
            injected.append(TransferRecord(y, zs[j], attrs, share))

    truth = {"x": frozenset(xs), "y": frozenset(ys), "z": frozenset(zs)}
    return list(base) + injected, truth


def density_sweep(base, roles, config: InjectionConfig, *,
                  money_values: Sequence[float] | None = None,
                  account_scales: Sequence[float] | None = None,
                  schema: ModeSchema | None = None) -> list[LabeledDataset]:
    """One labeled dataset per sweep point.

    Exactly one of ``money_values`` (injected totals) and
    ``account_scales`` (multipliers on the group-size ratio) must be
    given. Point i reseeds deterministically from
    ``SeedSequence([config.rng_seed, i])``.
    """
    if (money_values is None) == (account_scales is None):
        raise ValueError("give exactly one of money_values and account_scales")
    out = []
    values = money_values if money_values is not None else account_scales
    for i, v in enumerate(values):
        seed = int(np.random.SeedSequence([config.rng_seed, i]).generate_state(1)[0])
        if money_values is not None:
            cfg = replace(config, total_dirty_money=float(v), rng_seed=seed)
        else:
            cfg = replace(
                config,
                n_x=max(1, int(round(config.n_x * v))),
                n_y=max(1, int(round(config.n_y * v))),
                n_z=max(1, int(round(config.n_z * v))),
                rng_seed=seed,
            )
        records, truth = inject(base, roles, cfg, schema=schema)
        out.append(LabeledDataset(float(v), records, truth))
    return out


def random_background(n_x: int, n_y: int, n_z: int, n_records: int,
                      n_time_bins: int, *, amount_range=(1.0, 1000.0),
                      extra_attrs: Sequence[tuple] = (), seed: int = 0):
    """Uniform random two-step background traffic.

    Returns (records, (x_ids, y_ids, z_ids), schema). Each record is a
    source -> middle or middle -> destination transfer with uniform
    endpoints, bin, and amount. ``extra_attrs`` is a sequence of
    (name, value domain) pairs for additional attribute modes.
    """
    rng = np.random.default_rng(seed)
    x_labels = [f"x{i:05d}" for i in range(n_x)]
    y_labels = [f"y{i:05d}" for i in range(n_y)]
    z_labels = [f"z{i:05d}" for i in range(n_z)]
    names = tuple(name for name, _ in extra_attrs)
    domains = [list(dom) for _, dom in extra_attrs]

    is_p = rng.random(n_records) < 0.5
    srcs = rng.integers(0, n_x, n_records)
    mids = rng.integers(0, n_y, n_records)
    dsts = rng.integers(0, n_z, n_records)
    bins = rng.integers(0, n_time_bins, n_records)
    amounts = rng.uniform(amount_range[0], amount_range[1], n_records)
    extra_cols = [
        [dom[k] for k in rng.integers(0, len(dom), n_records)] for dom in domains
    ]

    records = []
    for i in range(n_records):
        extra = tuple(col[i] for col in extra_cols)
        attrs = (int(bins[i]), *extra)
        if is_p[i]:
            records.append(
                TransferRecord(x_labels[srcs[i]], y_labels[mids[i]], attrs,
                               float(amounts[i]))
            )
        else:
            records.append(
                TransferRecord(y_labels[mids[i]], z_labels[dsts[i]], attrs,
                               float(amounts[i]))
            )
    roles = (frozenset(x_labels), frozenset(y_labels), frozenset(z_labels))
    return records, roles, ModeSchema(("time_bin", *names))


def synthetic_tensor_pair(n_entries: int, seed: int = 0, *, n_time_bins: int = 64,
                          x_per_fiber: int = 8, z_per_fiber: int = 8) -> CoupledTensors:
    """Random coupled pair with roughly ``n_entries`` coalesced entries.

    Used by the scaling benchmark: fibers are laid out on a (middle
    account, time bin) grid and each fiber receives a few incoming and
    outgoing entries with uniform amounts.
    """
    if n_entries < 2 * (x_per_fiber + z_per_fiber):
        raise ValueError("n_entries too small for the requested degrees")
    rng = np.random.default_rng(seed)
    n_fibers = n_entries // (x_per_fiber + z_per_fiber)
    n_y = max(1, -(-n_fibers // n_time_bins))
    n_x = max(2, n_entries // 40)
    n_z = max(2, n_entries // 40)
    # Disjoint integer label ranges per role keep role matching unambiguous.
    x_ids = np.arange(n_x, dtype=np.int64)
    y_ids = np.arange(n_x, n_x + n_y, dtype=np.int64)
    z_ids = np.arange(n_x + n_y, n_x + n_y + n_z, dtype=np.int64)

    fiber_ids = np.arange(n_fibers, dtype=np.int64)
    p_fib = np.repeat(fiber_ids, x_per_fiber)
    q_fib = np.repeat(fiber_ids, z_per_fiber)
    p_src = x_ids[rng.integers(0, n_x, len(p_fib))]
    q_dst = z_ids[rng.integers(0, n_z, len(q_fib))]
    src = np.concatenate([p_src, y_ids[q_fib // n_time_bins]])
    dst = np.concatenate([y_ids[p_fib // n_time_bins], q_dst])
    bins = np.concatenate([p_fib % n_time_bins, q_fib % n_time_bins])
    amounts = rng.uniform(1.0, 1000.0, len(src))
    return build_coupled_from_columns(
        src, dst, [bins], amounts,
        x_ids, y_ids, z_ids, ModeSchema(("time_bin",)),
    )


def write_truth(path, truth: Mapping[str, Iterable]):
    """One ``role,account`` line per labeled account, sorted."""
    lines = []
    for role in ("x", "y", "z"):
        for acct in sorted(truth.get(role, ())):
            lines.append(f"{role},{acct}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_truth(path) -> dict:
    truth = {"x": set(), "y": set(), "z": set()}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            role, _, acct = line.partition(",")
            if role not in truth or not acct:
                raise DataError(f"bad truth line {line!r}")
            truth[role].add(acct)
    return {k: frozenset(v) for k, v in truth.items()}


def _attribute_domains(base, config, schema):
    """Observed value domain per attribute mode, time bins first."""
    if base:
        n_attr = len(base[0].attrs)
        if schema is not None and schema.n_attributes != n_attr:
            raise DataError("schema does not match base records")
        domains = [sorted({rec.attrs[k] for rec in base}) for k in range(n_attr)]
        return domains
    if schema is not None and schema.n_attributes > 1:
        raise DataError("cannot derive extra attribute domains from an empty base")
    if config.n_time_bins is None:
        raise DataError("empty base: set n_time_bins to define the bin domain")
    return [list(range(config.n_time_bins))]


def _draw_edges(rng, n: int, p: float) -> list:
    """Indices of Bernoulli(p) successes, redrawn until at least one."""
    for _ in range(_MAX_EDGE_DRAWS):
        mask = rng.random(n) < p
        if mask.any():
            return np.flatnonzero(mask).tolist()
    raise InfeasibleSamplingError(
        f"no edges drawn in {_MAX_EDGE_DRAWS} attempts at p={p}"
    )
