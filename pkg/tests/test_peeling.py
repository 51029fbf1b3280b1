import pytest

from flowsieve import (
    InjectionConfig,
    MetricParams,
    build_coupled,
    detect,
    inject,
    peel_trace,
    random_background,
    score_algorithmic,
)
from flowsieve.peeling import _PeelEngine
from conftest import SCHEMA3, random_instance
from oracle import naive_greedy

# Dyadic alphas make every incremental update exact for integer amounts,
# so the incremental detector and the from-scratch oracle must agree
# bit for bit.
DYADIC_ALPHAS = (0.25, 0.5, 0.75)


def test_minimal_flow_returns_full_block(minimal_tensors):
    res = detect(minimal_tensors, MetricParams(0.8))
    assert res.block == minimal_tensors.full_block()
    assert res.score_algorithmic == pytest.approx(20.0 / 3.0)
    assert res.score_exact == pytest.approx(5.0)
    assert res.iterations >= 1


def test_minimal_flow_trace(minimal_tensors):
    trace = peel_trace(minimal_tensors, MetricParams(0.8))
    assert trace[0].kind == "start"
    assert trace[0].score == pytest.approx(20.0 / 3.0)
    assert len(trace) <= 3


def test_trace_length_and_max_consistency():
    for seed in range(6):
        records, xs, ys, zs = random_instance(seed, n_records=40)
        t = build_coupled(records, xs, ys, zs, SCHEMA3)
        params = MetricParams(0.75)
        res = detect(t, params)
        trace = peel_trace(t, params)
        n_nodes = t.n_fibers + len(t.x_labels) + len(t.z_labels)
        assert len(trace) == res.iterations <= n_nodes
        assert max(s.score for s in trace) == pytest.approx(
            res.score_algorithmic, rel=1e-9
        )


def test_oracle_equivalence_exact():
    for seed in range(25):
        alpha = DYADIC_ALPHAS[seed % len(DYADIC_ALPHAS)]
        records, xs, ys, zs = random_instance(
            seed, n_x=4, n_y=3, n_z=4, n_bins=2, n_records=25
        )
        t = build_coupled(records, xs, ys, zs, SCHEMA3)
        res = detect(t, MetricParams(alpha))
        want_score, want_state, want_removals = naive_greedy(
            records, xs, ys, zs, alpha
        )
        assert res.score_algorithmic == want_score
        assert res.iterations == want_removals
        assert res.block.x_set == want_state[0]
        assert res.block.z_set == want_state[1]
        assert {(k.y, k.attrs) for k in res.block.fiber_set} == want_state[2]


def test_detect_is_deterministic():
    records, xs, ys, zs = random_instance(11, n_records=50)
    t = build_coupled(records, xs, ys, zs, SCHEMA3)
    a = detect(t, MetricParams(0.8), keep_peel_order=True)
    b = detect(t, MetricParams(0.8), keep_peel_order=True)
    assert a.block == b.block
    assert a.score_algorithmic == b.score_algorithmic
    assert a.peel_order == b.peel_order


def test_returned_score_is_recomputable(minimal_tensors):
    for seed in range(6):
        records, xs, ys, zs = random_instance(seed + 100, n_records=45,
                                              integer_amounts=False)
        t = build_coupled(records, xs, ys, zs, SCHEMA3)
        params = MetricParams(0.8)
        res = detect(t, params)
        assert score_algorithmic(t, res.block, params) == pytest.approx(
            res.score_algorithmic, rel=1e-12
        )


def test_audit_mode_validates_incremental_state():
    for seed in range(4):
        records, xs, ys, zs = random_instance(seed + 30, n_records=30,
                                              integer_amounts=False)
        t = build_coupled(records, xs, ys, zs, SCHEMA3)
        detect(t, MetricParams(0.8), audit=True)  # raises on any drift


def test_update_count_work_bound():
    for seed in range(6):
        records, xs, ys, zs = random_instance(seed + 60, n_records=80)
        t = build_coupled(records, xs, ys, zs, SCHEMA3)
        engine = _PeelEngine(t, 0.8)
        engine.run()
        n_nodes = t.n_fibers + len(t.x_labels) + len(t.z_labels)
        assert engine.update_count <= t.n_entries + n_nodes


def test_peel_order_recorded_on_request():
    records, xs, ys, zs = random_instance(2, n_records=30)
    t = build_coupled(records, xs, ys, zs, SCHEMA3)
    res = detect(t, MetricParams(0.8), keep_peel_order=True)
    assert res.peel_order is not None
    assert len(res.peel_order) == res.iterations
    kinds = {step[0] for step in res.peel_order}
    assert kinds <= {"fiber", "x", "z"}
    assert detect(t, MetricParams(0.8)).peel_order is None


def test_planted_flow_recovered_from_sparse_background():
    records, roles, schema = random_background(
        40, 50, 60, n_records=400, n_time_bins=20, seed=5
    )
    cfg = InjectionConfig(n_x=5, n_y=10, n_z=5, total_dirty_money=2e6, rng_seed=9)
    laced, truth = inject(records, roles, cfg)
    t = build_coupled(laced, *roles, schema)
    res = detect(t, MetricParams(0.8))
    assert truth["x"] <= res.block.x_set
    assert truth["z"] <= res.block.z_set
    assert truth["y"] <= res.block.middle_accounts()
