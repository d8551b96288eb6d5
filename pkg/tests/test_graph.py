import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import all_dags, brute_d_separated, iso_classes, path_sum_effect, reachability
from dagbench.graph import (
    Dag,
    GraphKind,
    ParameterError,
    ancestors,
    d_separated,
    descendants,
    gen_er,
    gen_grp,
    gen_sf,
    generate,
    is_acyclic,
    read_edge_list,
    topological_order,
    total_effect,
    write_edge_list,
)

seeds = st.integers(0, 2**32 - 1)


def chain(d=3):
    return Dag.from_edges(d, [(i, i + 1) for i in range(d - 1)])


# ------------------------------------------------------------------ Dag type


def test_dag_rejects_self_loop_and_cycle():
    with pytest.raises(ValueError):
        Dag(np.eye(2, dtype=bool))
    with pytest.raises(ValueError):
        Dag.from_edges(2, [(0, 1), (1, 0)])


def test_is_acyclic_examples():
    assert is_acyclic(chain().adj)
    assert not is_acyclic(np.array([[0, 1], [1, 0]]))
    assert is_acyclic(np.zeros((5, 5)))
    with pytest.raises(ValueError):
        is_acyclic(np.zeros((2, 3)))


def test_topological_order_respects_edges():
    g = Dag.from_edges(4, [(3, 1), (1, 0), (3, 2)])
    order = topological_order(g.adj)
    pos = {v: r for r, v in enumerate(order)}
    assert all(pos[i] < pos[j] for i, j in g.edges())
    assert topological_order(np.array([[0, 1], [1, 0]])) is None


# ---------------------------------------------------------------- generators


def test_gen_er_examples():
    assert all(gen_er(10, 2, s).n_edges == 10 for s in range(100))
    empty = gen_er(2, 0, 0)
    assert empty.n_edges == 0 and is_acyclic(empty.adj)
    for s in range(20):
        assert gen_er(3, 2, s).n_edges == 3


def test_gen_er_budget_error():
    with pytest.raises(ParameterError):
        gen_er(4, 4, 0)
    with pytest.raises(ParameterError):
        gen_er(1, 0, 0)


@given(d=st.integers(2, 30), k=st.sampled_from([0, 1, 2, 4, 6]), seed=seeds)
def test_gen_er_properties(d, k, seed):
    if k * d / 2 > d * (d - 1) / 2:
        return
    g = gen_er(d, k, seed)
    assert g.n_edges == round(k * d / 2)
    assert is_acyclic(g.adj)
    assert np.array_equal(g.adj, gen_er(d, k, seed).adj)


def test_gen_sf_examples():
    for s in range(20):
        assert gen_sf(10, 2, s).n_edges == 9
        g3 = gen_sf(3, 2, s)
        assert g3.n_edges == 2 and is_acyclic(g3.adj)
    for s in range(5):
        assert gen_sf(50, 4, s).adj.sum(axis=1).max() == 2
    with pytest.raises(ParameterError):
        gen_sf(10, 3, 0)
    with pytest.raises(ParameterError):
        gen_sf(2, 4, 0)


@given(d=st.integers(3, 40), m=st.integers(1, 3), seed=seeds)
def test_gen_sf_properties(d, m, seed):
    if d <= m:
        return
    g = gen_sf(d, 2 * m, seed)
    assert is_acyclic(g.adj)
    assert g.n_edges == sum(min(m, v) for v in range(1, d))
    assert np.array_equal(g.adj, gen_sf(d, 2 * m, seed).adj)


def test_gen_grp_examples():
    mean_deg = np.mean([2 * gen_grp(20, 6, s).n_edges / 20 for s in range(100)])
    assert 5.0 <= mean_deg <= 7.0
    assert gen_grp(4, 0, 0).n_edges == 0
    with pytest.raises(ParameterError):
        gen_grp(3, 2, 0)


@given(d=st.integers(4, 30), k=st.sampled_from([0, 2, 4, 6]), seed=seeds)
def test_gen_grp_acyclic_and_deterministic(d, k, seed):
    g = gen_grp(d, k, seed)
    assert is_acyclic(g.adj)
    assert np.array_equal(g.adj, gen_grp(d, k, seed).adj)


def test_generate_dispatch_and_canonical_flag():
    assert generate(GraphKind("ER", 2), 10, 1) == gen_er(10, 2, 1)
    assert GraphKind("GRP", 6).canonical and not GraphKind("GRP", 2).canonical
    assert GraphKind("SF", 4).label == "SF-4"


# -------------------------------------------------------------- reachability


def test_descendants_examples():
    c = chain()
    assert descendants(c, 0) == {1, 2}
    assert descendants(c, 2) == set()
    collider = Dag.from_edges(3, [(0, 2), (1, 2)])
    assert descendants(collider, 1) == {2}
    assert ancestors(collider, 2) == {0, 1}
    with pytest.raises(IndexError):
        descendants(c, 3)


@given(d=st.integers(2, 12), seed=seeds)
def test_descendants_match_transitive_closure(d, seed):
    g = gen_er(d, min(2, d - 1), seed)
    R = reachability(g.adj)
    for i in range(d):
        assert descendants(g, i) == set(np.flatnonzero(R[i]).tolist())


def test_d_separated_examples():
    collider = Dag.from_edges(3, [(0, 2), (1, 2)])
    assert d_separated(collider, 0, 1, [])
    assert not d_separated(collider, 0, 1, [2])
    assert d_separated(chain(), 0, 2, [1])
    with pytest.raises(ParameterError):
        d_separated(chain(), 0, 2, [0])
    with pytest.raises(ParameterError):
        d_separated(chain(), 1, 1, [])


def _check_all_queries(a):
    g = Dag(a)
    d = a.shape[0]
    R = reachability(a)
    for i, j in itertools.combinations(range(d), 2):
        rest = [v for v in range(d) if v not in (i, j)]
        for r in range(len(rest) + 1):
            for Z in itertools.combinations(rest, r):
                assert d_separated(g, i, j, Z) == brute_d_separated(a, i, j, Z, R), (a, i, j, Z)


def test_d_separated_exhaustive_small():
    """Every labeled DAG with d <= 4 and every isomorphism class at d = 5."""
    for d in range(2, 5):
        for a in all_dags(d):
            _check_all_queries(a)
    for a in iso_classes(all_dags(5)):
        _check_all_queries(a)


def test_d_separated_random_labeled_d5():
    dags = all_dags(5)
    rng = np.random.default_rng(0)
    for a in dags[rng.choice(len(dags), 300, replace=False)]:
        _check_all_queries(a)


@given(seed=seeds)
def test_d_separated_symmetric(seed):
    rng = np.random.default_rng(seed)
    g = gen_er(7, 3, seed)
    i, j = rng.choice(7, 2, replace=False)
    rest = [v for v in range(7) if v not in (i, j)]
    Z = [v for v in rest if rng.random() < 0.4]
    assert d_separated(g, i, j, Z) == d_separated(g, j, i, Z)


# -------------------------------------------------------------- total effect


def test_total_effect_examples():
    single = Dag.from_edges(2, [(0, 1)])
    assert total_effect(single, np.array([[0, 0.8], [0, 0]]), 0, 1) == pytest.approx(0.8)
    a, b = 1.3, -0.7
    tri = Dag.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    W = np.array([[0, a, -a * b], [0, 0, b], [0, 0, 0]])
    assert abs(total_effect(tri, W, 0, 2)) < 1e-12
    Wc = np.array([[0, a, 0], [0, 0, b], [0, 0, 0]])
    assert total_effect(chain(), Wc, 0, 2) == pytest.approx(a * b)
    with pytest.raises(ParameterError):
        total_effect(chain(), W, 0, 2)


@given(d=st.integers(2, 9), seed=seeds)
def test_total_effect_matches_path_sum(d, seed):
    g = gen_er(d, min(2, d - 1), seed)
    rng = np.random.default_rng(seed)
    W = np.where(g.adj, rng.uniform(-2, 2, g.adj.shape), 0.0)
    for i in range(d):
        de = descendants(g, i)
        for j in range(d):
            if j == i:
                continue
            te = total_effect(g, W, i, j)
            assert te == pytest.approx(path_sum_effect(W, i, j), abs=1e-9)
            if j not in de:
                assert te == 0.0


# ------------------------------------------------------------------- edge io


def test_edge_list_round_trip(tmp_path):
    g = gen_er(8, 2, 3)
    p = tmp_path / "g.edges"
    write_edge_list(g, p)
    assert p.read_text().startswith("# dag d=8\n")
    assert read_edge_list(p) == g
    (tmp_path / "bad.edges").write_text("0 1\n")
    with pytest.raises(ValueError):
        read_edge_list(tmp_path / "bad.edges")
