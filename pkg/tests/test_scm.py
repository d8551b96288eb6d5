import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dagbench.graph import Dag, gen_er
from dagbench.scm import (
    Dataset,
    GpScm,
    LinearScm,
    NoiseDist,
    NoiseSpec,
    gp_function_draw,
    make_linear_scm,
    sample_gp,
    sample_linear,
    save_dataset,
)

seeds = st.integers(0, 2**32 - 1)


def edge_scm(w=0.8):
    g = Dag.from_edges(2, [(0, 1)])
    return LinearScm(g, np.array([[0, w], [0, 0]]), NoiseSpec.standard(2))


def test_noise_spec_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        NoiseSpec(np.array([1.0, 0.0]))


def test_linear_scm_rejects_off_support_weights():
    with pytest.raises(ValueError):
        LinearScm(Dag.empty(2), np.array([[0, 1.0], [0, 0]]), NoiseSpec.standard(2))


def test_make_linear_scm_examples():
    assert not make_linear_scm(Dag.empty(4), seed=0).W.any()
    g = gen_er(10, 2, 1)
    W = make_linear_scm(g, seed=1).W
    assert np.count_nonzero(W) == 10


@given(d=st.integers(2, 15), seed=seeds)
def test_make_linear_scm_weight_band(d, seed):
    g = gen_er(d, min(2, d - 1), seed)
    scm = make_linear_scm(g, seed=seed)
    nz = np.abs(scm.W[scm.W != 0])
    assert np.all((nz >= 0.5) & (nz <= 2.0))
    assert np.array_equal((scm.W != 0), g.adj)
    assert np.array_equal(scm.W, make_linear_scm(g, seed=seed).W)


def test_sample_linear_examples():
    X = sample_linear(make_linear_scm(Dag.empty(3), seed=0), 10000, seed=1).X
    assert np.all((X.var(axis=0, ddof=1) >= 0.94) & (X.var(axis=0, ddof=1) <= 1.06))
    Y = sample_linear(edge_scm(), 10000, seed=2).X
    assert 1.55 <= Y[:, 1].var(ddof=1) <= 1.73
    one = sample_linear(make_linear_scm(gen_er(5, 2, 0), seed=0), 1, seed=0)
    assert one.X.shape == (1, 5) and np.all(np.isfinite(one.X))


def test_sample_linear_covariance_converges_to_diag():
    X = sample_linear(LinearScm(Dag.empty(4), np.zeros((4, 4)), NoiseSpec(np.array([1, 2, 0.5, 1.5]))),
                      10000, seed=3).X
    C = np.cov(X, rowvar=False)
    target = np.diag([1, 4, 0.25, 2.25])
    assert np.all(np.abs(np.diag(C) - np.diag(target)) <= 0.05 * np.diag(target))
    assert np.all(np.abs(C - np.diag(np.diag(C))) < 0.05)


def test_regression_on_true_parents_recovers_weights():
    g = gen_er(10, 2, 7)
    scm = make_linear_scm(g, seed=7)
    X = sample_linear(scm, 2000, seed=8).X
    for j in range(10):
        pa = g.parents(j)
        if not pa:
            continue
        A = X[:, pa]
        coef, *_ = np.linalg.lstsq(A, X[:, j], rcond=None)
        resid = X[:, j] - A @ coef
        se = np.sqrt(resid.var(ddof=len(pa)) * np.diag(np.linalg.inv(A.T @ A)))
        assert np.all(np.abs(coef - scm.W[pa, j]) <= 3 * se)


def test_exponential_noise_is_centered():
    scm = LinearScm(Dag.empty(3), np.zeros((3, 3)), NoiseSpec.standard(3, NoiseDist.EXPONENTIAL))
    X = sample_linear(scm, 10000, seed=0).X
    assert np.all(np.abs(X.mean(axis=0)) <= 0.05)
    assert np.all(X.min(axis=0) >= -1.0)


@given(seed=seeds)
def test_sample_linear_deterministic(seed):
    scm = make_linear_scm(gen_er(6, 2, seed), seed=seed)
    assert np.array_equal(sample_linear(scm, 50, seed).X, sample_linear(scm, 50, seed).X)


def test_population_covariance_matches_sample():
    scm = make_linear_scm(gen_er(5, 2, 4), seed=4)
    X = sample_linear(scm, 200000, seed=5).X
    C = scm.covariance()
    assert np.allclose(np.cov(X, rowvar=False), C, rtol=0.05, atol=0.05)


def test_sample_gp_empty_graph_equals_linear():
    noise = NoiseSpec.standard(3)
    gp = sample_gp(GpScm(Dag.empty(3), noise), 100, seed=9).X
    lin = sample_linear(LinearScm(Dag.empty(3), np.zeros((3, 3)), noise), 100, seed=9).X
    assert np.array_equal(gp, lin)


def test_gp_draw_permutation_equivariant():
    rng = np.random.default_rng(0)
    P = rng.standard_normal((500, 1))
    perm = rng.permutation(500)
    f = gp_function_draw(P, np.random.default_rng(1))
    f_perm = gp_function_draw(P[perm], np.random.default_rng(1))
    assert np.allclose(f_perm, f[perm], atol=1e-10)


def test_sample_gp_output_finite_and_guarded():
    scm = GpScm(gen_er(5, 2, 0), NoiseSpec.standard(5))
    data = sample_gp(scm, 300, seed=0)
    assert np.all(np.isfinite(data.X)) and data.X.shape == (300, 5)
    with pytest.raises(ValueError):
        sample_gp(scm, 5001, seed=0)


def test_dataset_rejects_nonfinite():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 1.0]]))


def test_save_dataset_writes_csv_and_sidecar(tmp_path):
    data = sample_linear(make_linear_scm(gen_er(4, 2, 0), seed=0), 5, seed=0)
    p = tmp_path / "data.csv"
    save_dataset(data, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x0,x1,x2,x3" and len(lines) == 6
    meta = json.loads(p.with_suffix(".meta.json").read_text())
    assert meta["scenario"] == "vanilla" and len(meta["true_edges"]) == 4
    assert np.allclose(np.loadtxt(p, delimiter=",", skiprows=1), data.X)
