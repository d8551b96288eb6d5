"""Linear and Gaussian-process structural causal models and i.i.d. sampling."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .errors import NumericalError
from .graph import Dag, write_edge_list

__all__ = [
    "NoiseDist",
    "NoiseSpec",
    "LinearScm",
    "GpScm",
    "Dataset",
    "NumericalError",
    "WEIGHT_BAND",
    "make_linear_scm",
    "draw_noise",
    "propagate",
    "sample_linear",
    "sample_gp",
    "gp_function_draw",
    "save_dataset",
]

WEIGHT_BAND = (0.5, 2.0)
GP_MAX_N = 5000


class NoiseDist(str, Enum):
    GAUSSIAN = "Gaussian"
    EXPONENTIAL = "Exponential"


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Per-node noise law: zero-mean, standard deviation ``scale[i]``."""

    scale: np.ndarray
    dist: NoiseDist = NoiseDist.GAUSSIAN

    def __post_init__(self):
        s = np.asarray(self.scale, dtype=float).ravel().copy()
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("noise scales must be positive and finite")
        s.setflags(write=False)
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "dist", NoiseDist(self.dist))

    @classmethod
    def standard(cls, d: int, dist=NoiseDist.GAUSSIAN) -> "NoiseSpec":
        return cls(np.ones(d), dist)

    @property
    def variances(self) -> np.ndarray:
        return self.scale**2


def draw_noise(noise: NoiseSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Standardized (mean 0, variance 1) innovations, scaled per node."""
    d = noise.scale.size
    if noise.dist is NoiseDist.GAUSSIAN:
        e = rng.standard_normal((n, d))
    else:
        e = rng.exponential(1.0, size=(n, d)) - 1.0
    return e * noise.scale


@dataclass(frozen=True, eq=False)
class LinearScm:
    dag: Dag
    W: np.ndarray
    noise: NoiseSpec

    def __post_init__(self):
        w = np.asarray(self.W, dtype=float).copy()
        if w.shape != self.dag.adj.shape:
            raise ValueError("weight matrix shape does not match the DAG")
        if np.any((w != 0) & ~self.dag.adj):
            raise ValueError("weights must be supported on the DAG's edges")
        if self.noise.scale.size != self.dag.d:
            raise ValueError("noise spec dimension does not match the DAG")
        w.setflags(write=False)
        object.__setattr__(self, "W", w)

    @property
    def d(self) -> int:
        return self.dag.d

    @property
    def id(self) -> str:
        return "linear-" + hashlib.sha1(self.W.tobytes()).hexdigest()[:10]

    def covariance(self) -> np.ndarray:
        """Population covariance ``(I-W)^{-T} diag(sigma^2) (I-W)^{-1}``."""
        inv = np.linalg.inv(np.eye(self.d) - self.W)
        return inv.T @ np.diag(self.noise.variances) @ inv


@dataclass(frozen=True, eq=False)
class GpScm:
    """Additive-noise SCM whose mechanisms are Gaussian-process sample paths."""

    dag: Dag
    noise: NoiseSpec
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.noise.scale.size != self.dag.d:
            raise ValueError("noise spec dimension does not match the DAG")

    @property
    def d(self) -> int:
        return self.dag.d


@dataclass(frozen=True, eq=False)
class Dataset:
    """n x d sample matrix with provenance."""

    X: np.ndarray
    truth: Dag | None = None
    scenario: str = "vanilla"
    seed: int | None = None
    scm_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.X, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("dataset must be a non-empty n x d matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "X", x)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def replace(self, X=None, **changes) -> "Dataset":
        fields = dict(
            X=self.X if X is None else X,
            truth=self.truth,
            scenario=self.scenario,
            seed=self.seed,
            scm_id=self.scm_id,
            meta=dict(self.meta),
        )
        fields.update(changes)
        return Dataset(**fields)


def make_linear_scm(dag: Dag, noise: NoiseSpec | None = None, seed=None) -> LinearScm:
    """Edge weights uniform on [-2, -0.5] U [0.5, 2]."""
    rng = np.random.default_rng(seed)
    lo, hi = WEIGHT_BAND
    mag = rng.uniform(lo, hi, size=dag.adj.shape)
    sign = np.where(rng.random(dag.adj.shape) < 0.5, -1.0, 1.0)
    W = np.where(dag.adj, sign * mag, 0.0)
    if noise is None:
        noise = NoiseSpec.standard(dag.d)
    return LinearScm(dag, W, noise)


def propagate(W: np.ndarray, U: np.ndarray, order: list[int]) -> np.ndarray:
    """Solve X = X W + U by substitution along a topological order."""
    X = np.zeros_like(U)
    for j in order:
        pa = np.flatnonzero(W[:, j])
        X[:, j] = U[:, j] + (X[:, pa] @ W[pa, j] if pa.size else 0.0)
    return X


def sample_linear(scm: LinearScm, n: int, seed=None, scenario: str = "vanilla") -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    U = draw_noise(scm.noise, n, rng)
    X = propagate(scm.W, U, scm.dag.order())
    return Dataset(X, scm.dag, scenario, seed, scm.id)


def _rbf_kernel(P: np.ndarray, bandwidth: float) -> np.ndarray:
    sq = np.sum(P * P, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * P @ P.T, 0.0)
    return np.exp(-d2 / (2.0 * bandwidth**2))


def gp_function_draw(P: np.ndarray, rng: np.random.Generator, bandwidth: float = 1.0) -> np.ndarray:
    """One joint draw of f(P) for f ~ GP(0, RBF(bandwidth)).

    Rows are put into lexicographic order before factorizing, so permuting
    the rows of ``P`` permutes the output identically for a fixed rng state.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    perm = np.lexsort(P.T[::-1]) if P.shape[1] else np.arange(n)
    K = _rbf_kernel(P[perm], bandwidth)
    jitter = 1e-8 * np.trace(K) / n
    for _ in range(7):
        try:
            c, lower = cho_factor(K + jitter * np.eye(n), lower=True, check_finite=False)
            break
        except LinAlgError:
            jitter *= 2.0
    else:
        raise NumericalError("GP kernel Cholesky failed after maximal jitter")
    z = rng.standard_normal(n)
    f_sorted = np.tril(c) @ z
    out = np.empty(n)
    out[perm] = f_sorted
    return out


def sample_gp(scm: GpScm, n: int, seed=None, scenario: str = "vanilla") -> Dataset:
    """Nodes in topological order; each gets an exact GP draw over its parents."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > GP_MAX_N:
        raise ValueError(f"sample_gp is limited to n <= {GP_MAX_N}")
    rng = np.random.default_rng(seed)
    U = draw_noise(scm.noise, n, rng)
    X = np.zeros((n, scm.d))
    for j in scm.dag.order():
        pa = scm.dag.parents(j)
        X[:, j] = U[:, j]
        if pa:
            X[:, j] += gp_function_draw(X[:, pa], rng, scm.bandwidth)
    return Dataset(X, scm.dag, scenario, seed, "gp")


def save_dataset(data: Dataset, path) -> None:
    """CSV with an ``x0..x{d-1}`` header plus a ``.meta.json`` sidecar."""
    path = Path(path)
    header = ",".join(f"x{i}" for i in range(data.d))
    np.savetxt(path, data.X, delimiter=",", header=header, comments="", fmt="%.17g")
    meta = {
        "scenario": data.scenario,
        "seed": data.seed,
        "scm": data.scm_id,
        "n": data.n,
        "d": data.d,
        **{k: v for k, v in data.meta.items() if isinstance(v, (int, float, str, bool))},
    }
    if data.truth is not None:
        edge_path = path.with_suffix(".edges")
        write_edge_list(data.truth, edge_path)
        meta["true_graph"] = edge_path.name
        meta["true_edges"] = data.truth.edges()
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2))
