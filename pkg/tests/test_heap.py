import numpy as np
import pytest

from flowsieve.heap import IndexedMinHeap


def test_pop_order_matches_sorted_reference():
    rng = np.random.default_rng(7)
    for _ in range(50):
        prios = rng.integers(0, 20, size=rng.integers(1, 40)).astype(float)
        heap = IndexedMinHeap(prios)
        got = [heap.pop() for _ in range(len(prios))]
        want = sorted((p, k) for k, p in enumerate(prios.tolist()))
        assert [(p, k) for k, p in got] == want


def test_ties_break_toward_smaller_key():
    heap = IndexedMinHeap([5.0, 1.0, 5.0, 1.0])
    assert heap.pop() == (1, 1.0)
    assert heap.pop() == (3, 1.0)
    assert heap.pop() == (0, 5.0)
    assert heap.pop() == (2, 5.0)


def test_update_both_directions():
    heap = IndexedMinHeap([10.0, 20.0, 30.0])
    heap.update(2, 1.0)  # decrease
    assert heap.peek() == (2, 1.0)
    heap.update(2, 50.0)  # increase
    assert heap.peek() == (0, 10.0)
    assert [heap.pop()[0] for _ in range(3)] == [0, 1, 2]


def test_random_update_remove_against_reference():
    rng = np.random.default_rng(13)
    for _ in range(30):
        n = int(rng.integers(2, 30))
        prios = rng.uniform(0, 100, n).tolist()
        heap = IndexedMinHeap(prios)
        alive = dict(enumerate(prios))
        for _ in range(60):
            op = rng.random()
            if not alive:
                break
            key = int(rng.choice(sorted(alive)))
            if op < 0.5:
                p = float(rng.uniform(0, 100))
                heap.update(key, p)
                alive[key] = p
            else:
                heap.remove(key)
                del alive[key]
        got = [heap.pop() for _ in range(len(heap))]
        want = sorted((p, k) for k, p in alive.items())
        assert [(p, k) for k, p in got] == want


def test_contains_and_len_track_removals():
    heap = IndexedMinHeap([3.0, 1.0, 2.0])
    assert len(heap) == 3 and 1 in heap
    heap.remove(1)
    assert len(heap) == 2 and 1 not in heap
    assert heap.priority(0) == 3.0


def test_errors():
    heap = IndexedMinHeap([1.0])
    heap.pop()
    with pytest.raises(IndexError):
        heap.pop()
    with pytest.raises(IndexError):
        heap.peek()
    with pytest.raises(KeyError):
        heap.remove(0)
    with pytest.raises(KeyError):
        heap.update(0, 2.0)
    with pytest.raises(KeyError):
        heap.priority(0)
