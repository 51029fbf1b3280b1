"""Near-greedy peeling over sources, destinations, and fibers.

Starting from the full coupled block, the detector repeatedly removes
the globally minimum-priority node (a fiber, a source account, or a
destination account), updating the priorities of the removed node's
neighbors incrementally, and returns the best-scoring block seen. The
numerator of the score is maintained as a running sum; priorities live
in an indexed heap so one removal costs O(degree * log n).

Priorities follow one scale for all three node kinds: fibers carry
min(in, out) - alpha * max(in, out), accounts carry their retained
mass. Ties break on node kind (fiber, then source, then destination),
then on interned id, so runs are deterministic.
"""

from __future__ import annotations

import gc
import logging
from array import array
from dataclasses import dataclass
from heapq import heappush
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError
from .heap import IndexedMinHeap, sort_bits
from .metric import MetricParams, _numerator_dense
from .tensors import CoupledTensors, FlowBlock

logger = logging.getLogger(__name__)


def _darray(a: np.ndarray) -> array:
    out = array("d")
    out.frombytes(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return out


@dataclass(frozen=True)
class DetectionResult:
    """Best block found by peeling, with both score variants.

    ``score_algorithmic`` and ``score_exact`` are recomputed from
    scratch on the returned block, not taken from the running sums.
    """

    block: FlowBlock
    score_algorithmic: float
    score_exact: float
    iterations: int
    peel_order: tuple | None = None


class PeelStep(NamedTuple):
    kind: str  # "start", "fiber", "x" or "z"
    node: object  # FiberKey or account id; None for the starting entry
    score: float


def detect(t: CoupledTensors, params: MetricParams | None = None, *,
           keep_peel_order: bool = False, audit: bool = False) -> DetectionResult:
    """Run the peeling loop and return the best-scoring block seen.

    The candidate states are the full block plus the state after every
    removal that leaves all three role sets nonempty; ties keep the
    earliest state. ``audit`` recomputes all incremental state from
    scratch after every removal (very slow; for tests).
    """
    params = params or MetricParams()
    engine = _PeelEngine(t, params.alpha, audit=audit)
    removals, best_iter, best_incremental, _ = engine.run(record_trace=False)

    alive = np.ones(engine.n_nodes, dtype=bool)
    alive[np.asarray(removals[:best_iter], dtype=np.int64)] = False
    fiber_alive = alive[: engine.nf]
    x_alive = alive[engine.nf : engine.nf + engine.nx]
    z_alive = alive[engine.nf + engine.nx :]

    in_mass, out_mass = t._restricted_fiber_masses(x_alive, z_alive, fiber_alive)
    fiber_idx = np.flatnonzero(fiber_alive)
    num = _numerator_dense(in_mass[fiber_idx], out_mass[fiber_idx], params.alpha)
    n_x = int(np.count_nonzero(x_alive))
    n_z = int(np.count_nonzero(z_alive))
    score_alg = num / (n_x + len(fiber_idx) + n_z)
    den_exact = n_x + n_z + len(np.unique(t.fiber_y[fiber_idx]))
    for k in range(t.schema.n_attributes):
        den_exact += len(np.unique(t.fiber_attr[fiber_idx, k]))
    score_ex = num / den_exact

    if abs(score_alg - best_incremental) > 1e-6 * max(1.0, abs(score_alg)):
        logger.warning(
            "incremental best score %r drifted from recomputation %r",
            best_incremental, score_alg,
        )
    block = FlowBlock(
        (lbl for lbl, a in zip(t.x_labels, x_alive) if a),
        (lbl for lbl, a in zip(t.z_labels, z_alive) if a),
        (t.fiber_key(int(i)) for i in fiber_idx),
    )
    order = tuple(engine.describe(v)[:2] for v in removals) if keep_peel_order else None
    return DetectionResult(
        block=block,
        score_algorithmic=score_alg,
        score_exact=score_ex,
        iterations=len(removals),
        peel_order=order,
    )


def peel_trace(t: CoupledTensors,
               params: MetricParams | None = None) -> list[PeelStep]:
    """Score sequence of the peeling loop, starting with the full block.

    One entry per evaluated state: the first carries no removed node,
    each later one names the node whose removal produced its score.
    The final removal (which empties a role set) is not scored.
    """
    params = params or MetricParams()
    engine = _PeelEngine(t, params.alpha)
    _, _, _, trace = engine.run(record_trace=True)
    return trace


class _PeelEngine:
    """Mutable peeling state over one immutable CoupledTensors.

    Nodes are numbered fibers first, then sources, then destinations,
    each kind in interned order; the numbering doubles as the tie-break.
    """

    def __init__(self, t: CoupledTensors, alpha: float, audit: bool = False):
        if t.n_fibers == 0 or not t.x_labels or not t.z_labels:
            raise DegenerateInputError("cannot peel a tensor pair with an empty mode")
        self.t = t
        self.alpha = alpha
        self.audit = audit
        self.nf = t.n_fibers
        self.nx = len(t.x_labels)
        self.nz = len(t.z_labels)
        self.n_nodes = self.nf + self.nx + self.nz

        in0 = t._p.col_sums()
        out0 = t._q.col_sums()
        row0 = t._p.row_sums()
        col0 = t._q.row_sums()
        self.in_mass = _darray(in0)
        self.out_mass = _darray(out0)
        fw = np.minimum(in0, out0) - alpha * np.maximum(in0, out0)
        self.numerator = float(fw.sum())
        # Source/destination priorities are exactly their retained masses,
        # so heap.prio doubles as the row/col mass store for those nodes.
        self.heap = IndexedMinHeap(np.concatenate([fw, row0, col0]))
        self.update_count = 0

        self._px_ptr = t._p.row_indptr.tolist()
        self._pf_ptr = t._p.col_indptr.tolist()
        self._qz_ptr = t._q.row_indptr.tolist()
        self._qf_ptr = t._q.col_indptr.tolist()

    def describe(self, v: int):
        """Public (kind, label) view of a node id, plus its heap id."""
        if v < self.nf:
            return "fiber", self.t.fiber_key(v), v
        if v < self.nf + self.nx:
            return "x", self.t.x_labels[v - self.nf], v
        return "z", self.t.z_labels[v - self.nf - self.nx], v

    def run(self, record_trace: bool = False):
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            return self._run(record_trace)
        finally:
            if gc_was_enabled:
                gc.enable()

    def _run(self, record_trace: bool):
        t = self.t
        heap = self.heap
        hp = heap.heap
        alive = heap.alive
        prio = heap.prio
        enc = heap.enc
        sb = sort_bits
        push = heappush
        alpha = self.alpha
        nf, nx = self.nf, self.nx
        in_mass, out_mass = self.in_mass, self.out_mass
        px_ptr, pf_ptr = self._px_ptr, self._pf_ptr
        qz_ptr, qf_ptr = self._qz_ptr, self._qf_ptr
        px_col, px_val = t._p.row_col, t._p.row_val
        pf_row, pf_val = t._p.col_row, t._p.col_val
        qz_col, qz_val = t._q.row_col, t._q.row_val
        qf_row, qf_val = t._q.col_row, t._q.col_val

        live_f, live_x, live_z = self.nf, self.nx, self.nz
        num = self.numerator
        removals = []
        best_score = num / (live_f + live_x + live_z)
        best_iter = 0
        trace = [PeelStep("start", None, best_score)] if record_trace else None
        updates = 0

        while live_f and live_x and live_z:
            v, w = heap.pop()
            removals.append(v)
            # Neighbor updates write the new priority and push a fresh
            # heap entry directly; stale entries are skipped on pop.
            if v < nf:
                live_f -= 1
                num -= w
                s, e = pf_ptr[v], pf_ptr[v + 1]
                for j, m in zip(pf_row[s:e].tolist(), pf_val[s:e].tolist()):
                    node = nf + j
                    if not alive[node]:
                        continue
                    rm = prio[node] - m
                    prio[node] = rm
                    bits = sb(rm)
                    enc[node] = bits
                    push(hp, (bits << 32) | node)
                    updates += 1
                s, e = qf_ptr[v], qf_ptr[v + 1]
                for j, m in zip(qf_row[s:e].tolist(), qf_val[s:e].tolist()):
                    node = nf + nx + j
                    if not alive[node]:
                        continue
                    cm = prio[node] - m
                    prio[node] = cm
                    bits = sb(cm)
                    enc[node] = bits
                    push(hp, (bits << 32) | node)
                    updates += 1
            elif v < nf + nx:
                live_x -= 1
                j = v - nf
                s, e = px_ptr[j], px_ptr[j + 1]
                for i, m in zip(px_col[s:e].tolist(), px_val[s:e].tolist()):
                    if not alive[i]:
                        continue
                    im = in_mass[i] - m
                    in_mass[i] = im
                    om = out_mass[i]
                    fw = (im - alpha * om) if im <= om else (om - alpha * im)
                    num += fw - prio[i]
                    prio[i] = fw
                    bits = sb(fw)
                    enc[i] = bits
                    push(hp, (bits << 32) | i)
                    updates += 1
            else:
                live_z -= 1
                j = v - nf - nx
                s, e = qz_ptr[j], qz_ptr[j + 1]
                for i, m in zip(qz_col[s:e].tolist(), qz_val[s:e].tolist()):
                    if not alive[i]:
                        continue
                    om = out_mass[i] - m
                    out_mass[i] = om
                    im = in_mass[i]
                    fw = (im - alpha * om) if im <= om else (om - alpha * im)
                    num += fw - prio[i]
                    prio[i] = fw
                    bits = sb(fw)
                    enc[i] = bits
                    push(hp, (bits << 32) | i)
                    updates += 1
            heap.maybe_purge()
            hp = heap.heap
            if self.audit:
                self.numerator = num
                self._check_state()
            if not (live_f and live_x and live_z):
                break
            score = num / (live_f + live_x + live_z)
            if record_trace:
                kind, label, _ = self.describe(v)
                trace.append(PeelStep(kind, label, score))
            if score > best_score:
                best_score = score
                best_iter = len(removals)

        self.numerator = num
        self.update_count = updates
        return removals, best_iter, best_score, trace

    def _check_state(self):
        """Recompute every mass from scratch and compare (audit mode)."""
        alive = self.heap.alive
        fiber_alive = np.array([bool(alive[i]) for i in range(self.nf)])
        x_alive = np.array(
            [bool(alive[self.nf + j]) for j in range(self.nx)], dtype=bool
        )
        z_alive = np.array(
            [bool(alive[self.nf + self.nx + j]) for j in range(self.nz)], dtype=bool
        )
        t = self.t
        in_fresh, out_fresh = t._restricted_fiber_masses(x_alive, z_alive, fiber_alive)
        pm = fiber_alive[t._p.row_col]
        row_fresh = np.bincount(
            t._p.entry_rows()[pm], weights=t._p.row_val[pm], minlength=self.nx
        )
        qm = fiber_alive[t._q.row_col]
        col_fresh = np.bincount(
            t._q.entry_rows()[qm], weights=t._q.row_val[qm], minlength=self.nz
        )

        def close(a, b):
            return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))

        for i in np.flatnonzero(fiber_alive).tolist():
            assert close(self.in_mass[i], in_fresh[i]), (i, self.in_mass[i], in_fresh[i])
            assert close(self.out_mass[i], out_fresh[i]), i
            want = (
                min(self.in_mass[i], self.out_mass[i])
                - self.alpha * max(self.in_mass[i], self.out_mass[i])
            )
            assert close(self.heap.prio[i], want), i
        for j in np.flatnonzero(x_alive).tolist():
            assert close(self.heap.prio[self.nf + j], row_fresh[j]), j
        for j in np.flatnonzero(z_alive).tolist():
            assert close(self.heap.prio[self.nf + self.nx + j], col_fresh[j]), j
        live = np.flatnonzero(fiber_alive)
        num_fresh = _numerator_dense(in_fresh[live], out_fresh[live], self.alpha)
        assert close(self.numerator, num_fresh), (self.numerator, num_fresh)
