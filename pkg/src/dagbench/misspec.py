"""Model-assumption-violation scenarios built on top of the linear vanilla SCM.

SCM-level transforms (unfaithful, confounded) rewrite the mechanism, noise-level
ones (heterogeneous, autoregressive) change how the noise is drawn, and
data-level ones (missing, measurement error, scale-variant) act on samples.
``compose`` stacks them in that canonical order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DegenerateDataError, InfeasibleError, ParameterError
from .graph import Dag
from .scm import (
    WEIGHT_BAND,
    Dataset,
    LinearScm,
    NoiseDist,
    NoiseSpec,
    propagate,
)

__all__ = [
    "ScenarioKind",
    "ScenarioSpec",
    "DegenerateDataError",
    "InfeasibleError",
    "PAPER_GRID",
    "apply_scale_variant",
    "apply_measurement_error",
    "apply_mcar",
    "make_heterogeneous",
    "make_unfaithful",
    "cancelled_triplets",
    "make_confounded",
    "make_autoregressive",
    "sample_scenario",
    "compose",
]


class ScenarioKind(str, Enum):
    VANILLA = "Vanilla"
    CONFOUNDED = "Confounded"
    MEASUREMENT_ERROR = "MeasurementError"
    AUTOREGRESSIVE = "Autoregressive"
    HETEROGENEOUS = "Heterogeneous"
    UNFAITHFUL = "Unfaithful"
    SCALE_VARIANT = "ScaleVariant"
    MISSING = "Missing"
    MECHANISM_VIOLATION = "MechanismViolation"


DEFAULTS = {
    ScenarioKind.CONFOUNDED: {"rho_conf": 0.2},
    ScenarioKind.MEASUREMENT_ERROR: {"delta": 0.8},
    ScenarioKind.AUTOREGRESSIVE: {"a_ar": 0.5},
    ScenarioKind.HETEROGENEOUS: {"P1": 0.5, "gamma_het": 0.1},
    ScenarioKind.MISSING: {"beta": 0.01},
}

PAPER_GRID = {
    "delta": (0.2, 0.4, 0.6, 0.8),
    "beta": (0.005, 0.01, 0.05, 0.1),
    "P1": (0.1, 0.3, 0.5, 0.7, 0.9),
    "gamma_het": (0.01, 0.05, 0.1, 0.5),
}

_OPEN_UNIT = {"rho_conf": (0.0, 1.0, True), "a_ar": (0.0, 1.0, False)}


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = ScenarioKind(self.kind)
        object.__setattr__(self, "kind", kind)
        merged = dict(DEFAULTS.get(kind, {}))
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ParameterError(f"{kind.value}: unknown parameters {sorted(unknown)}")
        merged.update(self.params)
        for name, (lo, hi, closed_hi) in _OPEN_UNIT.items():
            if name in merged:
                v = merged[name]
                if not (lo < v < hi or (closed_hi and v == hi)):
                    raise ParameterError(f"{name}={v} outside its admissible range")
        object.__setattr__(self, "params", merged)

    @property
    def canonical(self) -> bool:
        return all(v in PAPER_GRID[k] for k, v in self.params.items() if k in PAPER_GRID)

    @property
    def tag(self) -> str:
        return self.kind.value.lower()

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, **self.params}

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioSpec":
        raw = dict(raw)
        kind = raw.pop("kind")
        return cls(ScenarioKind(kind), raw)


# ---------------------------------------------------------------- data level


def apply_scale_variant(data: Dataset) -> Dataset:
    """Standardize every column with its mean and population (1/n) variance."""
    X = data.X
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise DegenerateDataError(f"zero-variance columns: {np.flatnonzero(sd == 0).tolist()}")
    Z = (X - X.mean(axis=0)) / sd
    return data.replace(Z)


def apply_measurement_error(data: Dataset, delta: float, seed=None) -> Dataset:
    """Add N(0, delta * sample-variance) noise independently to every entry."""
    if delta <= 0:
        raise ParameterError("delta must be positive")
    rng = np.random.default_rng(seed)
    var = data.X.var(axis=0, ddof=1)
    eps = rng.standard_normal(data.X.shape) * np.sqrt(delta * var)
    return data.replace(data.X + eps)


def apply_mcar(sampler: Callable, n: int, beta: float, seed=None) -> Dataset:
    """Draw, mask MCAR, drop incomplete rows, repeat until ``n`` rows survive.

    ``sampler(m, seed)`` returns an m x d array or a Dataset. The first batch
    is drawn with ``seed`` itself, so ``beta == 0`` reproduces plain sampling.
    The number of generated rows is reported in ``meta['rows_drawn']``.
    """
    if not 0 <= beta < 0.5:
        raise ParameterError("beta must lie in [0, 0.5)")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    first = sampler(n, seed)
    template = first if isinstance(first, Dataset) else None
    batch = first.X if template is not None else np.asarray(first, dtype=float)
    d = batch.shape[1]
    keep_p = (1.0 - beta) ** d
    if keep_p < 1e-3:
        raise InfeasibleError(f"complete-row probability (1-beta)^d = {keep_p:.2e} < 1e-3")
    mask_rng = np.random.default_rng(ss.spawn(1)[0])
    kept, have, drawn = [], 0, 0
    while True:
        drawn += batch.shape[0]
        complete = ~(mask_rng.random(batch.shape) < beta).any(axis=1)
        rows = batch[complete]
        kept.append(rows[: n - have])
        have += min(rows.shape[0], n - have)
        if have >= n:
            break
        size = min(int(math.ceil((n - have) / keep_p * 1.2)) + 16, 10**6)
        nxt = sampler(size, ss.spawn(1)[0])
        batch = nxt.X if isinstance(nxt, Dataset) else np.asarray(nxt, dtype=float)
    X = np.vstack(kept)
    if template is not None:
        out = template.replace(X)
    else:
        out = Dataset(X, seed=seed)
    out.meta["rows_drawn"] = drawn
    return out


# --------------------------------------------------------------- noise level


def _ar1(innov: np.ndarray, a: float) -> np.ndarray:
    """Stationary AR(1) along rows: U_t = a U_{t-1} + sqrt(1-a^2) e_t, U_0 = e_0."""
    out = np.empty_like(innov)
    out[0] = innov[0]
    c = math.sqrt(1.0 - a * a)
    for t in range(1, innov.shape[0]):
        out[t] = a * out[t - 1] + c * innov[t]
    return out


def _draw_rows(
    scm: LinearScm,
    n: int,
    rng: np.random.Generator,
    *,
    a_ar: float | None = None,
    hetero: tuple[float, float] | None = None,
    n_observed: int | None = None,
) -> np.ndarray:
    d_all = scm.d
    if scm.noise.dist is NoiseDist.GAUSSIAN:
        e = rng.standard_normal((n, d_all))
    else:
        e = rng.exponential(1.0, size=(n, d_all)) - 1.0
    if a_ar is not None:
        e = _ar1(e, a_ar)
    e = e * scm.noise.scale
    if hetero is not None:
        P1, gamma = hetero
        n1 = int(round(P1 * n))
        rows = rng.permutation(n)[n1:]
        cols = slice(0, d_all if n_observed is None else n_observed)
        e[rows, cols] *= math.sqrt(gamma)
    return propagate(scm.W, e, scm.dag.order())


def _check_hetero(P1: float, n: int):
    if not 0 < P1 < 1:
        raise ParameterError("P1 must lie strictly between 0 and 1")
    if int(round(P1 * n)) in (0, n):
        raise ParameterError(f"P1={P1} leaves one domain empty at n={n}")


def make_heterogeneous(scm: LinearScm, n: int, P1: float, gamma_het: float, seed=None) -> Dataset:
    """Two noise domains: ``round(P1 n)`` vanilla rows, the rest with variance gamma."""
    _check_hetero(P1, n)
    if gamma_het <= 0:
        raise ParameterError("gamma_het must be positive")
    rng = np.random.default_rng(seed)
    X = _draw_rows(scm, n, rng, hetero=(P1, gamma_het))
    return Dataset(X, scm.dag, "heterogeneous", seed, scm.id, {"P1": P1, "gamma_het": gamma_het})


def make_autoregressive(scm: LinearScm, n: int, a_ar: float, seed=None) -> Dataset:
    """Noise follows a unit-variance AR(1) process along the sample index."""
    if not 0 < a_ar < 1:
        raise ParameterError("a_ar must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    X = _draw_rows(scm, n, rng, a_ar=a_ar)
    return Dataset(X, scm.dag, "autoregressive", seed, scm.id, {"a_ar": a_ar})


# ----------------------------------------------------------------- SCM level


def cancelled_triplets(dag: Dag) -> list[tuple[int, int, int]]:
    """All (i, j, k) with i->j, j->k and i->k, in lexicographic order."""
    a = dag.adj
    out = []
    for i, k in zip(*np.nonzero(a)):
        for j in np.flatnonzero(a[i] & a[:, k]):
            out.append((int(i), int(j), int(k)))
    return sorted(out)


def make_unfaithful(scm: LinearScm) -> LinearScm:
    """Reassign every triangle's direct weight so the total effect i ~> k is zero.

    Targets k are handled in topological order and, for each k, sources i in
    reverse topological order; a later reassignment can then never alter a
    total effect that was already cancelled.
    """
    pairs = {(i, k) for i, _, k in cancelled_triplets(scm.dag)}
    if not pairs:
        return scm
    W = scm.W.copy()
    order = scm.dag.order()
    rank = {v: r for r, v in enumerate(order)}
    d = scm.d
    for k in order:
        sources = sorted((i for i, kk in pairs if kk == k), key=lambda v: -rank[v])
        for i in sources:
            W[i, k] = 0.0
            T = np.linalg.solve(np.eye(d) - W, np.eye(d))
            W[i, k] = -T[i, k]
    return LinearScm(scm.dag, W, scm.noise)


def make_confounded(scm: LinearScm, rho_conf: float = 0.2, seed=None) -> tuple[LinearScm, np.ndarray]:
    """Add one latent root per selected node pair.

    Returns the augmented SCM (latents appended after the d observed nodes)
    and the indices of the observed columns. Latents share the base noise
    law with unit scale; their loadings come from the vanilla weight band.
    """
    if not 0 < rho_conf <= 1:
        raise ParameterError("rho_conf must lie in (0, 1]")
    d = scm.d
    n_pairs = int(round(rho_conf * d / 2))
    all_pairs = list(itertools.combinations(range(d), 2))
    if n_pairs > len(all_pairs):
        raise ParameterError("pair budget exceeds d(d-1)/2")
    rng = np.random.default_rng(seed)
    chosen = [all_pairs[t] for t in sorted(rng.choice(len(all_pairs), n_pairs, replace=False))]
    D = d + n_pairs
    adj = np.zeros((D, D), dtype=bool)
    adj[:d, :d] = scm.dag.adj
    W = np.zeros((D, D))
    W[:d, :d] = scm.W
    lo, hi = WEIGHT_BAND
    for t, (p, q) in enumerate(chosen):
        z = d + t
        adj[z, [p, q]] = True
        W[z, [p, q]] = rng.uniform(lo, hi, 2) * np.where(rng.random(2) < 0.5, -1.0, 1.0)
    noise = NoiseSpec(np.concatenate([scm.noise.scale, np.ones(n_pairs)]), scm.noise.dist)
    return LinearScm(Dag(adj), W, noise), np.arange(d)


# -------------------------------------------------------------- composition

_SCM_STAGE = (ScenarioKind.UNFAITHFUL, ScenarioKind.CONFOUNDED)
_NOISE_STAGE = (ScenarioKind.HETEROGENEOUS, ScenarioKind.AUTOREGRESSIVE)
_DATA_STAGE = (ScenarioKind.MISSING, ScenarioKind.MEASUREMENT_ERROR, ScenarioKind.SCALE_VARIANT)
CANONICAL_ORDER = _SCM_STAGE + _NOISE_STAGE + _DATA_STAGE


def compose(specs, base: LinearScm, n: int, seed=None) -> Dataset:
    """Apply scenario transforms in canonical order, whatever the list order.

    Order: unfaithful, confounded, heterogeneous, autoregressive, missing,
    measurement error, scale-variant. The evaluation truth stays ``base.dag``.
    """
    specs = [s if isinstance(s, ScenarioSpec) else ScenarioSpec.from_dict(s) for s in specs]
    by_kind = {}
    for s in specs:
        if s.kind is ScenarioKind.MECHANISM_VIOLATION:
            raise ParameterError("mechanism violation cannot be composed; it swaps the generator")
        if s.kind is ScenarioKind.VANILLA:
            continue
        if s.kind in by_kind:
            raise ParameterError(f"scenario {s.kind.value} given twice")
        by_kind[s.kind] = s.params
    streams = np.random.SeedSequence(seed).spawn(4)
    scm, observed = base, None
    if ScenarioKind.UNFAITHFUL in by_kind:
        scm = make_unfaithful(scm)
    if ScenarioKind.CONFOUNDED in by_kind:
        scm, observed = make_confounded(scm, by_kind[ScenarioKind.CONFOUNDED]["rho_conf"], streams[0])
    hetero = None
    if ScenarioKind.HETEROGENEOUS in by_kind:
        p = by_kind[ScenarioKind.HETEROGENEOUS]
        _check_hetero(p["P1"], n)
        hetero = (p["P1"], p["gamma_het"])
    a_ar = by_kind.get(ScenarioKind.AUTOREGRESSIVE, {}).get("a_ar")

    def sampler(m, s):
        rows = _draw_rows(
            scm, m, np.random.default_rng(s), a_ar=a_ar, hetero=hetero, n_observed=base.d
        )
        return rows if observed is None else rows[:, observed]

    tag = "+".join(k.value.lower() for k in CANONICAL_ORDER if k in by_kind) or "vanilla"
    meta = {f"{k.value}.{name}": v for k, p in by_kind.items() for name, v in p.items()}
    if ScenarioKind.MISSING in by_kind:
        data = apply_mcar(sampler, n, by_kind[ScenarioKind.MISSING]["beta"], streams[1])
        meta["rows_drawn"] = data.meta["rows_drawn"]
        X = data.X
    else:
        X = sampler(n, streams[1])
    data = Dataset(X, base.dag, tag, seed, base.id, meta)
    if ScenarioKind.MEASUREMENT_ERROR in by_kind:
        data = apply_measurement_error(data, by_kind[ScenarioKind.MEASUREMENT_ERROR]["delta"], streams[2])
    if ScenarioKind.SCALE_VARIANT in by_kind:
        data = apply_scale_variant(data)
    return data


def sample_scenario(spec: ScenarioSpec, base: LinearScm, n: int, seed=None) -> Dataset:
    """Single-scenario convenience wrapper around :func:`compose`."""
    return compose([spec], base, n, seed)
