"""Anomalousness scoring for coupled flow blocks.

A middle account that receives f and forwards q >= f in one fiber keeps
r = q - f behind. The block score rewards throughput and punishes
retention: each fiber contributes min(in, out) - alpha * max(in, out)
to the numerator, and the denominator counts the block's footprint.
Two denominators are in use: the exact one counts distinct values per
mode, the algorithmic one counts retained sources, fibers, and
destinations (that is the objective the peeling detector maximizes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBlockError
from .tensors import CoupledTensors, FlowBlock


@dataclass(frozen=True)
class MetricParams:
    """Scoring knobs. ``alpha`` is the imbalance cost rate in [0, 1]."""

    alpha: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha!r}")


@dataclass(frozen=True)
class FiberStats:
    """Min, max, and residual of one fiber's in/out mass pair."""

    f: float
    q: float
    r: float


def fiber_stats(in_mass: float, out_mass: float) -> FiberStats:
    """Min/max/residual statistics of one fiber's mass pair."""
    if in_mass < 0 or out_mass < 0:
        raise ValueError(f"negative fiber mass ({in_mass!r}, {out_mass!r})")
    f = min(in_mass, out_mass)
    q = max(in_mass, out_mass)
    return FiberStats(f=f, q=q, r=q - f)


def fiber_weight(in_mass: float, out_mass: float, alpha: float) -> float:
    """Peeling priority of a fiber: min(in, out) - alpha * max(in, out)."""
    if in_mass <= out_mass:
        return in_mass - alpha * out_mass
    return out_mass - alpha * in_mass


def node_weight(kind: str, masses, alpha: float | None = None) -> float:
    """Peeling priority of one node under the current block restriction.

    ``kind`` is "fiber" (masses = the (in, out) pair, needs alpha),
    "x", or "z" (masses = that account's retained entry masses).
    """
    if kind == "fiber":
        if alpha is None:
            raise ValueError("fiber weight needs alpha")
        in_mass, out_mass = masses
        return fiber_weight(in_mass, out_mass, alpha)
    if kind in ("x", "z"):
        return float(sum(masses))
    raise ValueError(f"unknown node kind {kind!r}")


def score_exact(t: CoupledTensors, block: FlowBlock,
                params: MetricParams | None = None) -> float:
    """Block anomalousness with the per-mode distinct-value denominator."""
    params = params or MetricParams()
    _require_nonempty(block)
    num, fiber_idx = _numerator(t, block, params.alpha)
    den = len(block.x_set) + len(block.z_set)
    den += len(np.unique(t.fiber_y[fiber_idx]))
    for k in range(t.schema.n_attributes):
        den += len(np.unique(t.fiber_attr[fiber_idx, k]))
    return num / den


def score_algorithmic(t: CoupledTensors, block: FlowBlock,
                      params: MetricParams | None = None) -> float:
    """Block anomalousness with the |x| + |fibers| + |z| denominator."""
    params = params or MetricParams()
    _require_nonempty(block)
    num, _ = _numerator(t, block, params.alpha)
    return num / (len(block.x_set) + len(block.fiber_set) + len(block.z_set))


def _require_nonempty(block: FlowBlock):
    for name, s in (("x", block.x_set), ("z", block.z_set),
                    ("fiber", block.fiber_set)):
        if not s:
            raise EmptyBlockError(f"empty block: no {name} members")


def _numerator(t: CoupledTensors, block: FlowBlock, alpha: float):
    x_alive, z_alive, fiber_alive = t._dense_block(block)
    in_mass, out_mass = t._restricted_fiber_masses(x_alive, z_alive, fiber_alive)
    fiber_idx = np.flatnonzero(fiber_alive)
    num = _numerator_dense(in_mass[fiber_idx], out_mass[fiber_idx], alpha)
    return num, fiber_idx


def _numerator_dense(in_mass: np.ndarray, out_mass: np.ndarray, alpha: float) -> float:
    f = np.minimum(in_mass, out_mass)
    q = np.maximum(in_mass, out_mass)
    return float(np.sum(f - alpha * q))
