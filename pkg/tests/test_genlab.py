import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenflow.genlab import (
    LinkStats,
    gen_3partition_instance,
    gen_cluster,
    gen_layered_dag,
    load_intensity_csv,
    load_node_specs,
    power_range,
    profile_from_intensities,
    rescale_intensity,
    synthetic_intensity,
)
from greenflow.model import ModelError, topological_order


def test_rescale_endpoints():
    assert rescale_intensity(100, 100, 300, 50, 150) == 150
    assert rescale_intensity(300, 100, 300, 50, 150) == 50
    assert rescale_intensity(200, 100, 300, 50, 150) == 100
    assert rescale_intensity(7, 7, 7, 50, 150) == 100


def test_cluster_sizes_and_ids():
    specs = load_node_specs()
    assert len(specs) == 6
    for copies, size in ((12, 72), (24, 144)):
        c = gen_cluster(specs, copies, seed=3)
        assert c.P == size and c.ids == tuple(range(size))
        assert len(c.channels) == size * (size - 1)


def test_zero_spread_links_are_identical():
    c = gen_cluster([(1, 1, 2), (2, 1, 3)], 2, LinkStats(0.1, 0.0, 0.4, 0.0), seed=9)
    assert {(ch.idle_power, ch.work_power) for ch in c.channels} == {(0.1, 0.4)}


def test_cluster_is_seeded():
    specs = load_node_specs()
    assert gen_cluster(specs, 2, seed=1) == gen_cluster(specs, 2, seed=1)
    assert gen_cluster(specs, 2, seed=1) != gen_cluster(specs, 2, seed=2)


def test_layered_dag_edge_cases():
    w = gen_layered_dag(1, 1, 0.5, 1.0)
    assert w.n == 1 and w.edges == ()
    flat = gen_layered_dag(10, 1, 1.0, 1.0)
    assert flat.edges == ()
    with pytest.raises(ValueError):
        gen_layered_dag(2, 3, 0.5, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 80), st.integers(1, 10), st.floats(0, 1), st.integers(0, 10**6))
def test_layered_dag_shape(n, layers, density, seed):
    layers = min(layers, n)
    w = gen_layered_dag(n, layers, density, 2.0, seed=seed)
    assert w.n == n and all(t.work > 0 for t in w.tasks)
    assert all(e.data > 0 for e in w.edges)
    assert sorted(topological_order(w)) == list(range(n))
    no_preds = sum(1 for v in range(n) if not w.preds[v])
    # only the first layer may lack predecessors, and it holds at most n - layers + 1 tasks
    assert no_preds <= n - layers + 1
    assert w == gen_layered_dag(n, layers, density, 2.0, seed=seed)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(1, 20), st.integers(0, 30), st.integers(0, 10**6))
def test_profile_tiles_horizon(horizon, lo, span, seed):
    c = gen_cluster([(1, 2, 5), (2, 3, 8)], 2, seed=0)
    hi = lo + span
    series = synthetic_intensity("germany", 400, seed)
    prof = profile_from_intensities(series, c, float(horizon), (lo, hi), 0.3, seed)
    ivs = prof.intervals
    assert ivs[0].begin == 0 and prof.horizon == horizon
    assert all(a.end == b.begin for a, b in zip(ivs, ivs[1:]))
    assert all(lo <= iv.length <= hi for iv in ivs[:-1])
    assert 0 < ivs[-1].length <= hi
    p_min, p_max = power_range(c, 0.3)
    budgets = [iv.budget for iv in ivs]
    assert all(p_min - 1e-9 <= g <= p_max + 1e-9 for g in budgets)
    if len(set(budgets)) > 1:
        assert min(budgets) == pytest.approx(p_min) and max(budgets) == pytest.approx(p_max)


def test_profile_needs_enough_data():
    c = gen_cluster([(1, 1, 1)], 1)
    with pytest.raises(ModelError):
        profile_from_intensities([1.0, 2.0], c, 100, (10, 10))


def test_synthetic_regions():
    a = synthetic_intensity("california", 48, 1)
    assert len(a) == 48 and a == synthetic_intensity("california", 48, 1)
    assert min(a) >= 1
    with pytest.raises(ValueError):
        synthetic_intensity("mars", 10)


def test_three_partition_layouts():
    one = gen_3partition_instance([1, 2, 3], 6)
    assert [(iv.begin, iv.end, iv.budget) for iv in one.profile.intervals] == [(0, 6, 1.0)]
    assert one.deadline == 6 and one.workflow.edges == ()
    two = gen_3partition_instance([1, 2, 3, 2, 2, 2], 6)
    assert [(iv.begin, iv.end, iv.budget) for iv in two.profile.intervals] == [
        (0, 6, 1.0), (6, 7, 0.0), (7, 13, 1.0)
    ]
    assert two.deadline == 13
    p = two.cluster.processors[0]
    assert (p.speed, p.idle_power, p.work_power) == (1.0, 0.0, 1.0)


def test_three_partition_rejects_bad_input():
    with pytest.raises(ModelError, match="sum"):
        gen_3partition_instance([1, 2, 4], 6)
    with pytest.raises(ModelError):
        gen_3partition_instance([1, 2], 3)


def test_intensity_csv(tmp_path):
    f = tmp_path / "ci.csv"
    f.write_text("timestamp,intensity\n2023-01-01T00,300\n2023-01-01T01,250.5\n")
    assert load_intensity_csv(f) == [300.0, 250.5]
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,value\nx,1\n")
    with pytest.raises(ModelError):
        load_intensity_csv(bad)
    with pytest.raises(ModelError):
        load_intensity_csv(tmp_path / "missing.csv")
