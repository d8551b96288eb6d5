"""Continuous-optimization structure learners, sortnregress baselines and thresholding."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
from scipy.sparse.csgraph import connected_components

from .acyclicity import AcyclicityKind, ConstraintKind, h_expm, grad_h_expm
from .errors import DomainError, ParameterError
from .graph import Dag, gen_er, topological_order
from .metrics import r2_scores
from .scm import Dataset
from .solvers import (
    AlmConfig,
    CentralPathConfig,
    InnerConfig,
    SolveInfo,
    alm_solve,
    central_path_solve,
    minimize_l1,
    prox_grad_minimize,
)

__all__ = [
    "Method",
    "LearnerConfig",
    "LearnedGraph",
    "LAMBDA1_GRID",
    "threshold",
    "notears_linear",
    "golem",
    "nocurl",
    "nocurl_gamma",
    "dagma_linear",
    "sortnregress",
    "sortnregress_order",
    "random_baseline",
    "least_squares_loss",
    "golem_loss",
    "fit",
]

log = logging.getLogger(__name__)

LAMBDA1_GRID = (0.005, 0.01, 0.05, 0.5, 2.0, 5.0)
DEFAULT_TAU = 0.3


def notears_alm_config() -> AlmConfig:
    """ALM defaults for NOTEARS; the inner problems use L-BFGS-B like the original method."""
    return AlmConfig(inner=InnerConfig(solver="lbfgsb", max_iters=15000, tol=1e-5))


class Method(str, Enum):
    NOTEARS = "Notears"
    GOLEM_EV = "GolemEV"
    GOLEM_NV = "GolemNV"
    NOCURL = "NoCurl"
    DAGMA = "Dagma"
    VAR_SORTNREGRESS = "VarSortnRegress"
    R2_SORTNREGRESS = "R2SortnRegress"
    RANDOM = "Random"


@dataclass
class LearnerConfig:
    """One learner and its hyperparameters.

    ``lambda1`` may be a single value or a list (grid mode); the bench layer
    expands a grid and keeps the best point. SortnRegress also accepts
    ``"bic"`` for an adaptive-lasso fit with BIC model selection.
    """

    method: Method
    lambda1: object = LAMBDA1_GRID
    lambda2: float = 5.0
    tau: float = DEFAULT_TAU
    constraint: AcyclicityKind | None = None
    alm: AlmConfig = field(default_factory=lambda: notears_alm_config())
    central_path: CentralPathConfig = field(default_factory=CentralPathConfig)
    degree: float = 2.0
    label: str | None = None

    def __post_init__(self):
        self.method = Method(self.method)
        if self.method is Method.RANDOM and self.lambda1 == LAMBDA1_GRID:
            self.lambda1 = 0.0
        if not self.tau > 0:
            raise ParameterError("tau must be positive")
        for lam in self.grid():
            if lam != "bic" and not (isinstance(lam, (int, float)) and lam >= 0):
                raise ParameterError(f"invalid lambda1 {lam!r}")
            if lam == "bic" and self.method not in (Method.VAR_SORTNREGRESS, Method.R2_SORTNREGRESS):
                raise ParameterError("lambda1='bic' is only available for SortnRegress")
        if self.constraint is None:
            self.constraint = AcyclicityKind(ConstraintKind.EXPM)

    def grid(self) -> list:
        if isinstance(self.lambda1, (list, tuple)):
            return list(self.lambda1)
        return [self.lambda1]

    @property
    def name(self) -> str:
        return self.label or self.method.value


@dataclass
class LearnedGraph:
    W_raw: np.ndarray
    dag: Dag
    method: str
    params: dict
    runtime_s: float = 0.0
    converged: bool = True

    def to_json(self) -> str:
        edges = [[i, j, float(self.W_raw[i, j])] for i, j in self.dag.edges()]
        return json.dumps(
            {
                "method": self.method,
                "params": self.params,
                "runtime_s": self.runtime_s,
                "converged": self.converged,
                "d": self.dag.d,
                "edges": edges,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "LearnedGraph":
        rec = json.loads(text)
        d = rec["d"]
        W = np.zeros((d, d))
        for i, j, w in rec["edges"]:
            W[i, j] = w
        return cls(W, Dag(W != 0), rec["method"], rec["params"], rec["runtime_s"], rec["converged"])


def threshold(W_raw, tau: float = DEFAULT_TAU) -> Dag:
    """Zero entries with ``|w| < tau``, then break remaining cycles.

    An edge lies on a directed cycle iff both endpoints share a strongly
    connected component; the smallest-magnitude such edge is removed until
    none remain.
    """
    if not tau > 0:
        raise ParameterError("tau must be positive")
    W = np.array(W_raw, dtype=float)
    np.fill_diagonal(W, 0.0)
    W[np.abs(W) < tau] = 0.0
    adj = W != 0
    while True:
        n_comp, labels = connected_components(adj, directed=True, connection="strong")
        if n_comp == adj.shape[0]:
            break
        on_cycle = adj & (labels[:, None] == labels[None, :])
        mag = np.where(on_cycle, np.abs(W), np.inf)
        i, j = np.unravel_index(np.argmin(mag), mag.shape)
        adj[i, j] = False
    return Dag(adj)


def _centered(data) -> np.ndarray:
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if X.shape[0] <= X.shape[1]:
        log.warning("n=%d <= d=%d; least-squares scores are poorly determined", *X.shape)
    return X - X.mean(axis=0)


def least_squares_loss(S: np.ndarray):
    """``(1/2n)|X - XW|_F^2`` written through the sample second moment ``S = X^T X / n``."""
    I = np.eye(S.shape[0])

    def fun(W):
        R = I - W
        SR = S @ R
        return 0.5 * float(np.sum(R * SR)), -SR

    return fun


def golem_loss(X: np.ndarray, equal_variance: bool = True):
    """GOLEM likelihood terms without the penalties.

    EV: ``d/2 log |X - XW|_F^2 - log|det(I - W)|``.
    NV: ``1/2 sum_j log |x_j - X w_j|^2 - log|det(I - W)|``.
    """
    n, d = X.shape
    G = X.T @ X
    I = np.eye(d)

    def fun(W):
        R = I - W
        sign, logdet = np.linalg.slogdet(R)
        if sign == 0 or logdet < math.log(1e-12):
            raise DomainError("I - W is numerically singular")
        GR = G @ R
        rss = np.sum(R * GR, axis=0)
        inv_t = np.linalg.inv(R).T
        if equal_variance:
            total = float(rss.sum())
            return 0.5 * d * math.log(total) - logdet, -d * GR / total + inv_t
        return 0.5 * float(np.sum(np.log(rss))) - logdet, -GR / rss[None, :] + inv_t

    return fun


def _constraint_fun(kind: AcyclicityKind):
    return kind.value_and_grad


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        out.runtime_s = time.perf_counter() - t0
        return out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


@_timed
def notears_linear(
    data,
    lambda1: float = 0.1,
    constraint: AcyclicityKind | None = None,
    alm: AlmConfig | None = None,
    tau: float = DEFAULT_TAU,
    trace: Callable | None = None,
) -> LearnedGraph:
    """Least-squares score with L1 penalty under ``h(W) = 0`` via the ALM loop."""
    X = _centered(data)
    n, d = X.shape
    constraint = constraint or AcyclicityKind(ConstraintKind.EXPM)
    alm = _with_lambda(alm or notears_alm_config(), lambda1)
    info = SolveInfo()
    W = alm_solve(least_squares_loss(X.T @ X / n), _constraint_fun(constraint), alm, shape=(d, d),
                  trace=trace, info=info)
    params = {"lambda1": lambda1, "tau": tau, "constraint": constraint.kind.value}
    return LearnedGraph(W, threshold(W, tau), Method.NOTEARS.value, params, converged=info.converged)


def _with_lambda(alm: AlmConfig, lambda1: float) -> AlmConfig:
    return replace(alm, inner=replace(alm.inner, lambda1=float(lambda1)))


@_timed
def golem(
    data,
    lambda1: float = 0.02,
    lambda2: float = 5.0,
    equal_variance: bool = True,
    cfg: InnerConfig | None = None,
    tau: float = DEFAULT_TAU,
    trace: Callable | None = None,
) -> LearnedGraph:
    """Soft-constrained likelihood: ``L(W) + lambda1 |W|_1 + lambda2 h_expm(W)``.

    The NV variant starts from the EV solution, as in the original method.
    """
    X = _centered(data)
    d = X.shape[1]
    cfg = cfg or InnerConfig(max_iters=20000, tol=1e-5)

    def objective(equal):
        lik = golem_loss(X, equal)

        def fun(W):
            f, g = lik(W)
            E = h_expm(W), grad_h_expm(W)
            return f + lambda2 * E[0], g + lambda2 * E[1]

        return fun

    info = SolveInfo()
    W = prox_grad_minimize(objective(True), lambda1, np.zeros((d, d)), cfg, info=info)
    if not equal_variance:
        W = prox_grad_minimize(objective(False), lambda1, W, cfg, info=info)
    if trace is not None:
        trace({"solver": "golem", "iters": info.iterations, "h": h_expm(W)})
    method = Method.GOLEM_EV if equal_variance else Method.GOLEM_NV
    params = {"lambda1": lambda1, "lambda2": lambda2, "tau": tau}
    return LearnedGraph(W, threshold(W, tau), method.value, params, converged=info.converged)


def nocurl_gamma(W, p) -> np.ndarray:
    """``W o ReLU(grad p)`` with ``grad(p)[i, j] = p[j] - p[i]``."""
    p = np.asarray(p, dtype=float)
    return np.asarray(W, dtype=float) * np.maximum(p[None, :] - p[:, None], 0.0)


def _fit_potentials(dag: Dag, ridge: float = 1e-3) -> np.ndarray:
    """Least-squares potentials with ``p_j - p_i ~ 1`` on edges, anchored to the topological rank."""
    d = dag.d
    rank = np.empty(d)
    rank[topological_order(dag.adj)] = np.arange(d)
    edges = dag.edges()
    A = np.zeros((len(edges) + d, d))
    b = np.zeros(len(edges) + d)
    for r, (i, j) in enumerate(edges):
        A[r, i], A[r, j], b[r] = -1.0, 1.0, 1.0
    A[len(edges):] = math.sqrt(ridge) * np.eye(d)
    b[len(edges):] = math.sqrt(ridge) * rank
    p = np.linalg.lstsq(A, b, rcond=None)[0]
    # keep the ordering strict where the fit collapses gaps
    order = np.argsort(p, kind="stable")
    for a, c in zip(order[:-1], order[1:]):
        if p[c] - p[a] < 1e-3:
            p[c] = p[a] + 1e-3
    return p


@_timed
def nocurl(
    data,
    lambda1: float = 0.1,
    rounds: int = 20,
    cfg: InnerConfig | None = None,
    tau: float = DEFAULT_TAU,
    trace: Callable | None = None,
) -> LearnedGraph:
    """NoCurl: least squares on ``A = W o ReLU(grad p)`` with alternating updates.

    A 2-round ALM run gives a preliminary W whose thresholded DAG fixes the
    initial potentials. Each round then takes an ISTA solve in W (L1 weights
    ``ReLU(grad p)``) and backtracking gradient steps in p.
    """
    X = _centered(data)
    n, d = X.shape
    S = X.T @ X / n
    ls = least_squares_loss(S)
    pre_cfg = _with_lambda(replace(notears_alm_config(), max_outer=2), lambda1)
    W_pre = alm_solve(ls, h_expm_value_and_grad, pre_cfg, shape=(d, d))
    p = _fit_potentials(threshold(W_pre, tau))
    gap = np.maximum(p[None, :] - p[:, None], 0.0)
    W = np.where(gap > 0, W_pre / np.where(gap > 0, gap, 1.0), 0.0)
    cfg = cfg or InnerConfig(solver="lbfgsb", max_iters=15000, tol=1e-5)
    info = SolveInfo()
    converged = True

    def total(W, p):
        A = nocurl_gamma(W, p)
        return ls(A)[0] + lambda1 * float(np.sum(np.abs(A)))

    for r in range(rounds):
        gap = np.maximum(p[None, :] - p[:, None], 0.0)
        free = gap > 0

        def fun_w(Wv, gap=gap):
            f, gA = ls(Wv * gap)
            return f, gA * gap

        inner = SolveInfo()
        W = minimize_l1(fun_w, lambda1, W, cfg, free=free, weights=gap, info=inner)
        converged = inner.converged
        info.iterations += inner.iterations
        # gradient steps in p with W fixed
        step = 1.0
        obj = total(W, p)
        for _ in range(50):
            A = nocurl_gamma(W, p)
            _, gA = ls(A)
            active = (p[None, :] - p[:, None]) > 0
            M = np.where(active, W * (gA + lambda1 * np.sign(A)), 0.0)
            gp = M.sum(axis=0) - M.sum(axis=1)
            if not np.any(gp):
                break
            while step > 1e-12:
                p_new = p - step * gp
                obj_new = total(W, p_new)
                if obj_new <= obj - 1e-4 * step * float(gp @ gp):
                    break
                step *= 0.5
            else:
                break
            p, obj = p_new, obj_new
            step *= 2.0
        if trace is not None:
            trace({"solver": "nocurl", "round": r, "F": obj})
    A = nocurl_gamma(W, p)
    params = {"lambda1": lambda1, "tau": tau, "rounds": rounds}
    return LearnedGraph(A, threshold(A, tau), Method.NOCURL.value, params, converged=converged)


def h_expm_value_and_grad(W):
    return h_expm(W), grad_h_expm(W)


@_timed
def dagma_linear(
    data,
    lambda1: float = 0.03,
    cfg: CentralPathConfig | None = None,
    tau: float = DEFAULT_TAU,
    trace: Callable | None = None,
) -> LearnedGraph:
    """Least-squares score along the log-det central path."""
    X = _centered(data)
    n, d = X.shape
    cfg = cfg or CentralPathConfig()
    cfg = replace(cfg, inner=replace(cfg.inner, lambda1=float(lambda1)))
    info = SolveInfo()
    W = central_path_solve(least_squares_loss(X.T @ X / n), cfg, shape=(d, d), trace=trace, info=info)
    params = {"lambda1": lambda1, "tau": tau, "s": list(cfg.s), "mu": list(cfg.mu)}
    return LearnedGraph(W, threshold(W, tau), Method.DAGMA.value, params, converged=info.converged)


def sortnregress_order(X: np.ndarray, criterion: str = "Var") -> list[int]:
    """Ascending criterion; ties broken by node index."""
    X = np.asarray(X, dtype=float)
    if criterion == "Var":
        score = np.var(X, axis=0, ddof=1)
    elif criterion == "R2":
        score = r2_scores(X)
    else:
        raise ParameterError(f"unknown criterion {criterion!r}")
    return [int(i) for i in np.lexsort((np.arange(X.shape[1]), score))]


def _lasso(Z: np.ndarray, y: np.ndarray, lam: float, cfg: InnerConfig) -> np.ndarray:
    n = Z.shape[0]
    G = Z.T @ Z / n
    c = Z.T @ y / n
    yy = float(y @ y) / n

    def fun(b):
        Gb = G @ b
        return 0.5 * float(b @ Gb) - float(c @ b) + 0.5 * yy, Gb - c

    return prox_grad_minimize(fun, lam, np.zeros(Z.shape[1]), cfg)


def _adaptive_lasso_bic(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    from sklearn.linear_model import LassoLarsIC, LinearRegression

    weight = np.abs(LinearRegression().fit(Z, y).coef_)
    model = LassoLarsIC(criterion="bic").fit(Z * weight, y)
    return model.coef_ * weight


@_timed
def sortnregress(data, criterion: str = "Var", lambda1="bic", tau: float = DEFAULT_TAU) -> LearnedGraph:
    """Order nodes by Var or R^2, then L1-regress each on its predecessors.

    ``lambda1="bic"`` uses the adaptive lasso with BIC selection of the
    reference implementation; a number fits a plain lasso at that weight.
    Nonzero coefficients become edges.
    """
    X = _centered(data)
    n, d = X.shape
    order = sortnregress_order(X, criterion)
    W = np.zeros((d, d))
    cfg = InnerConfig(max_iters=20000, tol=1e-9)
    for k in range(1, d):
        pred, target = order[:k], order[k]
        Z, y = X[:, pred], X[:, target]
        if np.linalg.matrix_rank(Z) < k:
            log.warning("singular predecessor design for node %d; adding 1e-6 ridge", target)
            Z = Z + 1e-6 * np.random.default_rng(0).standard_normal(Z.shape)
        if lambda1 == "bic":
            coef = _adaptive_lasso_bic(Z, y)
        else:
            coef = _lasso(Z, y, float(lambda1), cfg)
        W[pred, target] = coef
    method = Method.VAR_SORTNREGRESS if criterion == "Var" else Method.R2_SORTNREGRESS
    params = {"lambda1": lambda1, "order": order}
    return LearnedGraph(W, Dag(W != 0), method.value, params)


@_timed
def random_baseline(d: int, k: float = 2.0, seed=None) -> LearnedGraph:
    """An ER DAG with unit weights at the configured density."""
    dag = gen_er(d, k, seed)
    return LearnedGraph(dag.adj.astype(float), dag, Method.RANDOM.value, {"k": k})


def fit(cfg: LearnerConfig, data: Dataset, lambda1=None, seed=None, trace=None) -> LearnedGraph:
    """Run the configured learner at one grid point."""
    lam = cfg.grid()[0] if lambda1 is None else lambda1
    m = cfg.method
    if m is Method.NOTEARS:
        return notears_linear(data, lam, cfg.constraint, cfg.alm, cfg.tau, trace)
    if m in (Method.GOLEM_EV, Method.GOLEM_NV):
        return golem(data, lam, cfg.lambda2, m is Method.GOLEM_EV, tau=cfg.tau, trace=trace)
    if m is Method.NOCURL:
        return nocurl(data, lam, tau=cfg.tau, trace=trace)
    if m is Method.DAGMA:
        return dagma_linear(data, lam, cfg.central_path, cfg.tau, trace)
    if m is Method.VAR_SORTNREGRESS:
        return sortnregress(data, "Var", lam, cfg.tau)
    if m is Method.R2_SORTNREGRESS:
        return sortnregress(data, "R2", lam, cfg.tau)
    return random_baseline(data.d, cfg.degree, seed)
