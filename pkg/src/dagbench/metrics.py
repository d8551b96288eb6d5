"""Graph comparison metrics (SHD, SID), sortability and the noise ratio."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .graph import Dag, adjacency_lists, bayes_ball

__all__ = [
    "MetricRecord",
    "shd",
    "sid",
    "sid_covariance_oracle",
    "valid_adjustment",
    "sortability",
    "r2_scores",
    "noise_ratio",
]

log = logging.getLogger(__name__)


@dataclass
class MetricRecord:
    shd: int
    sid: int
    runtime_s: float = 0.0
    sortability_var: float = float("nan")
    sortability_r2: float = float("nan")
    noise_ratio: float = float("nan")


def _same_size(a: Dag, b: Dag):
    if a.d != b.d:
        raise ValueError(f"graphs have different sizes ({a.d} vs {b.d})")


def shd(est: Dag, truth: Dag) -> int:
    """Insertions + deletions + reversals; a reversed edge counts once."""
    _same_size(est, truth)
    A, B = est.adj, truth.adj
    skel_a, skel_b = A | A.T, B | B.T
    missing_or_extra = np.triu(skel_a != skel_b, 1).sum()
    reversed_ = np.triu((skel_a & skel_b) & (A != B), 1).sum()
    return int(missing_or_extra + reversed_)


def _reachability(g: Dag) -> np.ndarray:
    """R[i, j] iff a directed path i ~> j exists (Warshall)."""
    R = g.adj.copy()
    for k in range(g.d):
        R |= R[:, [k]] & R[[k], :]
    return R


def _valid_adjustment(R: np.ndarray, lists, i: int, j: int, Z: set) -> bool:
    d = R.shape[0]
    if R[i, j]:
        # nodes other than i on a proper causal path i ~> j
        on_path = R[i] & (R[:, j] | (np.arange(d) == j))
        forbidden = on_path | R[on_path].any(axis=0)
        if any(forbidden[z] for z in Z):
            return False
        cut = np.flatnonzero(on_path).tolist()
    else:
        cut = ()
    return bayes_ball(*lists, i, j, Z, cut)


def valid_adjustment(truth: Dag, i: int, j: int, Z) -> bool:
    """Generalized adjustment criterion for the total effect of i on j.

    Z is valid iff (a) it avoids every descendant of a node other than i on
    a proper causal path i ~> j, and (b) it d-separates i and j once the
    first edge of every proper causal path from i to j has been removed.
    """
    Z = set(int(z) for z in Z)
    if i in Z or j in Z:
        raise ValueError("Z may not contain i or j")
    return _valid_adjustment(_reachability(truth), adjacency_lists(truth.adj), i, j, Z)


def sid(est: Dag, truth: Dag) -> int:
    """Ordered pairs (i, j) whose interventional effect is wrong when adjusting for pa_est(i).

    If j is an estimated parent of i the estimate implies no effect, which is
    right iff j is not a descendant of i in the truth.
    """
    _same_size(est, truth)
    R = _reachability(truth)
    lists = adjacency_lists(truth.adj)
    count = 0
    for i in range(truth.d):
        Z = set(est.parents(i))
        for j in range(truth.d):
            if j == i:
                continue
            if j in Z:
                count += bool(R[i, j])
            elif not _valid_adjustment(R, lists, i, j, Z):
                count += 1
    return count


def sid_covariance_oracle(est: Dag, truth: Dag, weights, noise_variances, tol: float = 1e-8) -> int:
    """SID computed numerically from the population covariance of a linear SEM.

    A pair counts as wrong when the x_i coefficient of the population
    regression of x_j on {x_i} and pa_est(i) differs from the true total
    effect by more than ``tol``.

    Raises:
        NumericalError: a covariance sub-block is near singular; redraw the
            weights.
    """
    _same_size(est, truth)
    W = np.asarray(weights, dtype=float)
    d = truth.d
    inv = np.linalg.inv(np.eye(d) - W)
    Sigma = inv.T @ np.diag(np.asarray(noise_variances, dtype=float)) @ inv
    effect = inv - np.eye(d)
    # principal sub-blocks of an SPD matrix are no worse conditioned than the whole
    if np.linalg.cond(Sigma) > 1e10:
        raise NumericalError("covariance is near singular; redraw weights")
    count = 0
    for i in range(d):
        Z = est.parents(i)
        S = [i] + Z
        block = Sigma[np.ix_(S, S)]
        # x_i coefficient of the regression of every x_j on x_S
        estimate = np.linalg.solve(block, Sigma[S, :])[0]
        estimate[Z] = 0.0
        wrong = np.abs(estimate - effect[i]) > tol
        wrong[i] = False
        count += int(wrong.sum())
    return int(count)


def r2_scores(X) -> np.ndarray:
    """R^2 of each column regressed on all other columns."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    C = np.cov(X, rowvar=False).reshape(d, d)
    if np.linalg.cond(C) > 1e12:
        log.warning("near-singular covariance in R^2 computation; adding 1e-6 ridge")
        C = C + 1e-6 * np.eye(d)
    P = np.linalg.inv(C)
    return 1.0 - 1.0 / (np.diag(C) * np.diag(P))


def sortability(X, truth: Dag, criterion: str = "Var") -> float:
    """Agreement between the causal order and the ascending order of a node score.

    Every pair (s, t) joined by a directed path of length k contributes once
    for each k = 1..d: 1 if score(s) < score(t), 1/2 on a tie, 0 otherwise.
    Returns nan for a graph without edges.
    """
    X = X.X if hasattr(X, "X") else np.asarray(X, dtype=float)
    if X.shape[1] != truth.d:
        raise ValueError("data and graph dimensions differ")
    if criterion == "Var":
        tau = np.var(X, axis=0, ddof=1)
    elif criterion == "R2":
        tau = r2_scores(X)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    incr = np.where(tau[:, None] < tau[None, :], 1.0, np.where(tau[:, None] == tau[None, :], 0.5, 0.0))
    A = truth.adj.astype(np.int64)
    P = np.eye(truth.d, dtype=np.int64)
    num = den = 0.0
    for _ in range(truth.d):
        P = np.minimum(P @ A, 1)
        num += float((incr * P).sum())
        den += float(P.sum())
    return num / den if den else float("nan")


def noise_ratio(variances) -> float:
    v = np.asarray(variances, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("noise_ratio needs at least one variance")
    if np.any(v <= 0):
        raise ValueError("variances must be positive")
    return float(v.max() / v.min())
