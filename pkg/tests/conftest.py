import numpy as np
import pytest

from flowsieve import ModeSchema, TransferRecord, build_coupled

SCHEMA3 = ModeSchema(("time_bin",))


@pytest.fixture
def minimal_records():
    return [
        TransferRecord("x1", "y1", (0,), 100.0),
        TransferRecord("y1", "z1", (0,), 100.0),
    ]


@pytest.fixture
def minimal_tensors(minimal_records):
    return build_coupled(minimal_records, {"x1"}, {"y1"}, {"z1"}, SCHEMA3)


def random_instance(seed, n_x=4, n_y=3, n_z=4, n_bins=3, n_records=30,
                    integer_amounts=True):
    """Random two-step record soup with explicit role sets.

    Integer amounts keep incremental and from-scratch mass sums
    bit-identical, which the exact oracle-equivalence tests rely on.
    """
    rng = np.random.default_rng(seed)
    xs = [f"x{i}" for i in range(n_x)]
    ys = [f"y{i}" for i in range(n_y)]
    zs = [f"z{i}" for i in range(n_z)]
    records = []
    for i in range(n_records):
        b = int(rng.integers(n_bins))
        if integer_amounts:
            amount = float(rng.integers(1, 1000))
        else:
            amount = float(rng.uniform(0.5, 1000.0))
        # First two records pin one P and one Q entry so no draw is degenerate.
        if i == 0 or (i > 1 and rng.random() < 0.5):
            records.append(
                TransferRecord(xs[rng.integers(n_x)], ys[rng.integers(n_y)],
                               (b,), amount)
            )
        else:
            records.append(
                TransferRecord(ys[rng.integers(n_y)], zs[rng.integers(n_z)],
                               (b,), amount)
            )
    return records, frozenset(xs), frozenset(ys), frozenset(zs)
