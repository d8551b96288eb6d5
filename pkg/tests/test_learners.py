import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dagbench.errors import ParameterError
from dagbench.graph import Dag, gen_er, is_acyclic
from dagbench.learners import (
    LAMBDA1_GRID,
    LearnedGraph,
    LearnerConfig,
    Method,
    dagma_linear,
    fit,
    golem,
    golem_loss,
    nocurl,
    nocurl_gamma,
    notears_linear,
    random_baseline,
    sortnregress,
    sortnregress_order,
    threshold,
)
from dagbench.metrics import shd
from dagbench.misspec import apply_scale_variant
from dagbench.scm import Dataset, LinearScm, NoiseSpec, make_linear_scm, sample_linear

seeds = st.integers(0, 2**32 - 1)


def two_node(seed=0, n=2000):
    g = Dag.from_edges(2, [(0, 1)])
    return sample_linear(LinearScm(g, np.array([[0, 0.8], [0, 0]]), NoiseSpec.standard(2)), n, seed)


# ----------------------------------------------------------------- threshold


def test_threshold_examples():
    assert threshold(np.array([[0, 0.8], [0.05, 0]]), 0.3).edges() == [(0, 1)]
    assert threshold(np.array([[0, 0.9], [0.4, 0]]), 0.3).edges() == [(0, 1)]
    assert threshold(np.zeros((3, 3)), 0.3).n_edges == 0
    with pytest.raises(ParameterError):
        threshold(np.zeros((2, 2)), 0.0)


def test_threshold_breaks_longer_cycle_at_weakest_edge():
    W = np.zeros((3, 3))
    W[0, 1], W[1, 2], W[2, 0] = 1.0, 0.9, 0.5
    assert threshold(W, 0.3).edges() == [(0, 1), (1, 2)]


@given(seed=seeds, d=st.integers(2, 10))
def test_threshold_always_acyclic(seed, d):
    W = np.random.default_rng(seed).uniform(-2, 2, (d, d))
    dag = threshold(W, 0.3)
    assert is_acyclic(dag.adj)
    assert np.all(np.abs(W[dag.adj]) >= 0.3)


# ------------------------------------------------------------------ configs


def test_learner_config_validation():
    assert LearnerConfig("Dagma").grid() == list(LAMBDA1_GRID)
    assert LearnerConfig("Random").grid() == [0.0]
    assert LearnerConfig("VarSortnRegress", lambda1="bic").grid() == ["bic"]
    with pytest.raises(ParameterError):
        LearnerConfig("Notears", lambda1="bic")
    with pytest.raises(ParameterError):
        LearnerConfig("Notears", lambda1=-1.0)
    with pytest.raises(ParameterError):
        LearnerConfig("Notears", tau=0.0)
    assert LearnerConfig("Notears", label="nt").name == "nt"


def test_learned_graph_json_round_trip():
    out = notears_linear(two_node(), 0.05)
    back = LearnedGraph.from_json(out.to_json())
    assert back.dag == out.dag and back.method == "Notears"
    assert back.W_raw[0, 1] == pytest.approx(out.W_raw[0, 1])
    assert back.params == out.params


# ------------------------------------------------------------ 2-node recovery


@pytest.mark.parametrize(
    "learner",
    [
        lambda d: notears_linear(d, 0.05),
        lambda d: golem(d, 0.005, 5.0, True),
        lambda d: golem(d, 0.005, 5.0, False),
        lambda d: nocurl(d, 0.05),
        lambda d: dagma_linear(d, 0.05),
        lambda d: sortnregress(d, "Var"),
    ],
    ids=["notears", "golem-ev", "golem-nv", "nocurl", "dagma", "var-sortnregress"],
)
def test_two_node_recovery(learner):
    out = learner(two_node())
    assert out.dag.edges() == [(0, 1)]
    assert 0.7 <= out.W_raw[0, 1] <= 0.9
    assert out.runtime_s >= 0


def test_notears_pure_noise_few_false_positives():
    for s in range(10):
        X = np.random.default_rng(s).standard_normal((2000, 5))
        assert notears_linear(Dataset(X), 0.5).dag.n_edges <= 1


def test_golem_loss_at_zero():
    X = np.random.default_rng(0).standard_normal((50, 3))
    d = 3
    f, _ = golem_loss(X, True)(np.zeros((3, 3)))
    assert f == pytest.approx(d / 2 * np.log(np.sum(X**2)))


def test_golem_loss_gradient_finite_differences():
    from _oracles import finite_diff_grad

    X = np.random.default_rng(1).standard_normal((100, 4))
    W = 0.2 * np.random.default_rng(2).standard_normal((4, 4))
    for ev in (True, False):
        fun = golem_loss(X, ev)
        G = fun(W)[1]
        F = finite_diff_grad(lambda V: fun(V)[0], W, 1e-6)
        assert np.max(np.abs(G - F)) / np.max(np.abs(F)) < 1e-6


def test_nocurl_gamma_acyclic_for_increasing_potentials():
    A = nocurl_gamma(np.ones((4, 4)), np.array([0.0, 1.0, 2.5, 3.0]))
    assert np.all(np.tril(A) == 0) and np.all(A[np.triu_indices(4, 1)] > 0)
    assert is_acyclic(A != 0)


# ------------------------------------------------------------- SortnRegress


def test_sortnregress_order_examples():
    X = two_node().X
    assert sortnregress_order(X, "Var") == [0, 1]
    x = np.random.default_rng(0).standard_normal(100)
    tie = np.column_stack([-x, x])
    assert sortnregress_order(tie, "Var") == [0, 1]
    with pytest.raises(ParameterError):
        sortnregress_order(X, "Kurtosis")


@given(seed=seeds, scales=st.lists(st.floats(0.01, 100), min_size=6, max_size=6))
def test_r2_order_scale_invariant(seed, scales):
    scm = make_linear_scm(gen_er(6, 2, seed), seed=seed)
    X = sample_linear(scm, 500, seed).X
    assert sortnregress_order(X, "R2") == sortnregress_order(X * np.array(scales), "R2")


def test_var_order_changes_after_standardization_but_r2_does_not():
    changed = 0
    for s in range(10):
        data = sample_linear(make_linear_scm(gen_er(10, 2, s), seed=s), 2000, s)
        std = apply_scale_variant(data)
        changed += sortnregress_order(data.X, "Var") != sortnregress_order(std.X, "Var")
        assert sortnregress_order(data.X, "R2") == sortnregress_order(std.X, "R2")
    assert changed >= 8


def test_sortnregress_numeric_lambda_uses_lasso():
    out = sortnregress(two_node(), "Var", 0.05)
    assert out.dag.edges() == [(0, 1)]
    assert out.W_raw[0, 1] == pytest.approx(0.75, abs=0.1)


# ----------------------------------------------------------------- random


def _random_shds():
    return [shd(random_baseline(10, 2, seed=s).dag, gen_er(10, 2, 10_000 + s)) for s in range(100)]


def test_random_baseline_examples():
    assert random_baseline(10, 2, seed=0).dag.n_edges == 10
    assert random_baseline(10, 2, seed=5).dag == random_baseline(10, 2, seed=5).dag


def test_random_baseline_shd_matches_hypergeometric_mean():
    """Two independent 10-edge DAGs on 45 pairs share 100/45 skeleton pairs on
    average, each reversed with probability 1/2: E[SHD] = 20 - 1.5 * 100/45 = 50/3."""
    assert np.mean(_random_shds()) == pytest.approx(50 / 3, abs=1.0)


@pytest.mark.xfail(strict=True, reason="band [18, 34] needs a denser random graph than ER-2; see decisions ledger")
def test_random_baseline_shd_in_reported_band():
    assert 18 <= np.mean(_random_shds()) <= 34


# ---------------------------------------------------------------------- fit


@pytest.mark.parametrize("method", [m.value for m in Method])
def test_fit_dispatch_outputs_acyclic(method):
    data = sample_linear(make_linear_scm(gen_er(5, 2, 1), seed=1), 500, 1)
    cfg = LearnerConfig(method)
    lam = cfg.grid()[0] if method != "Random" else None
    out = fit(cfg, data, lam, seed=3)
    assert out.method == method
    assert is_acyclic(out.dag.adj) and out.dag.d == 5
