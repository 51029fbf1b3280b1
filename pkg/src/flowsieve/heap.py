"""Indexed min-priority structure over the integer keys 0..n-1.

Backed by a lazy-deletion binary heap whose entries are single packed
integers: the priority's IEEE-754 bits, remapped so that unsigned
integer order matches float order, shifted left 32 and OR-ed with the
key. One entry is one small object, which keeps the sift paths cheap,
and integer order equals (priority, key) order exactly, so ties still
break toward the smaller key and extraction is fully deterministic.

Priority changes push a fresh entry and pops discard entries whose bits
no longer match the key's current priority, so decrease-key,
increase-key, and removal all cost amortized O(log n). Once stale
entries outnumber live ones the heap is rebuilt from the live keys,
which also bounds memory by the live count.
"""

from __future__ import annotations

import struct
from array import array
from heapq import heapify, heappop, heappush

import numpy as np

_PURGE_MIN = 1024
_PACK = struct.Struct(">d").pack
_SIGN = 1 << 63
_WRAP = 1 << 64


def sort_bits(value: float) -> int:
    """Map a float to 64 bits whose unsigned order is the float order."""
    b = int.from_bytes(_PACK(value + 0.0), "big")  # +0.0 folds -0.0 into +0.0
    return (_SIGN | b) if b < _SIGN else (_WRAP - b)


def _sort_bits_array(values: np.ndarray) -> np.ndarray:
    v = (np.ascontiguousarray(values, dtype=np.float64) + 0.0).view(np.uint64)
    neg = v >= _SIGN
    out = v | np.uint64(_SIGN)
    out[neg] = ~v[neg] + np.uint64(1)
    return out


class IndexedMinHeap:
    """Min-heap keyed by dense integers with O(1) priority lookup.

    ``priorities`` gives the initial priority of every key 0..n-1; all
    keys start live. ``prio`` (an array of doubles) always holds each
    key's current priority, ``enc`` its packed order bits, and
    ``alive[key]`` is 0 once a key leaves the heap. Hot loops may push
    packed entries onto ``heap`` directly after writing ``prio`` and
    ``enc``, as long as they call :meth:`maybe_purge` now and then.
    """

    __slots__ = ("heap", "prio", "enc", "alive", "live")

    def __init__(self, priorities):
        if not isinstance(priorities, np.ndarray):
            priorities = np.asarray(list(priorities), dtype=np.float64)
        self.prio = array("d")
        self.prio.frombytes(
            np.ascontiguousarray(priorities, dtype=np.float64).tobytes()
        )
        bits = _sort_bits_array(priorities)
        self.enc = array("Q")
        self.enc.frombytes(bits.tobytes())
        self.heap = [(int(b) << 32) | k for k, b in enumerate(bits.tolist())]
        heapify(self.heap)
        self.alive = bytearray(b"\x01") * len(self.prio)
        self.live = len(self.prio)

    def __len__(self):
        return self.live

    def __contains__(self, key):
        return 0 <= key < len(self.alive) and self.alive[key]

    def priority(self, key):
        if key not in self:
            raise KeyError(f"key {key} not in heap")
        return self.prio[key]

    def peek(self):
        """Smallest (key, priority) without removing it."""
        heap = self.heap
        alive = self.alive
        enc = self.enc
        while heap:
            v = heap[0]
            k = v & 0xFFFFFFFF
            if alive[k] and (v >> 32) == enc[k]:
                return k, self.prio[k]
            heappop(heap)
        raise IndexError("peek from empty heap")

    def pop(self):
        """Remove and return ``(key, priority)`` with the smallest priority."""
        heap = self.heap
        alive = self.alive
        enc = self.enc
        while heap:
            v = heappop(heap)
            k = v & 0xFFFFFFFF
            if alive[k] and (v >> 32) == enc[k]:
                alive[k] = 0
                self.live -= 1
                return k, self.prio[k]
        raise IndexError("pop from empty heap")

    def remove(self, key):
        """Remove ``key`` regardless of its position (lazy, O(1))."""
        if key not in self:
            raise KeyError(f"key {key} not in heap")
        self.alive[key] = 0
        self.live -= 1

    def update(self, key, priority):
        """Change the priority of ``key`` in either direction."""
        if key not in self:
            raise KeyError(f"key {key} not in heap")
        if priority != self.prio[key]:
            bits = sort_bits(priority)
            self.prio[key] = priority
            self.enc[key] = bits
            heappush(self.heap, (bits << 32) | key)
            self.maybe_purge()

    def maybe_purge(self):
        if len(self.heap) - self.live > self.live + _PURGE_MIN:
            self._purge()

    def _purge(self):
        """Rebuild from the live keys: one current entry per key."""
        alive = np.frombuffer(self.alive, dtype=np.uint8)
        enc = np.frombuffer(self.enc, dtype=np.uint64)
        ks = np.flatnonzero(alive)
        self.heap = [
            (int(b) << 32) | int(k)
            for b, k in zip(enc[ks].tolist(), ks.tolist())
        ]
        heapify(self.heap)
