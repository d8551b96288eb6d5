"""Optimization engines: proximal gradient, augmented Lagrangian, central path.

Objectives are passed as callables ``fun(W) -> (value, gradient)``. The L1
term is kept separate and handled exactly by soft-thresholding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.optimize

from .acyclicity import AcyclicityKind, ConstraintKind, h_ldet
from .errors import DomainError, NonConvergenceError, NumericalError

__all__ = [
    "InnerConfig",
    "AlmConfig",
    "CentralPathConfig",
    "SolveInfo",
    "soft_threshold",
    "prox_grad_minimize",
    "lbfgsb_minimize",
    "minimize_l1",
    "alm_solve",
    "central_path_solve",
]

ValueGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

MAX_HALVINGS = 50  # domain (non-finite / DomainError) failures per step
MAX_ARMIJO = 200
MU_MAX = 1e16


@dataclass
class InnerConfig:
    """Proximal-gradient settings.

    Attributes:
        step: "backtracking" (short Barzilai-Borwein trial step, then halving) or
            "fixed" (constant ``step0``, still halved if Armijo fails).
        solver: "ista" (proximal gradient) or "lbfgsb" (L-BFGS-B on the
            split W = W+ - W-, W+/- >= 0, which makes the L1 term linear).
        max_iters: iteration cap.
        tol: stop when the composite gradient mapping norm drops below this.
        lambda1: L1 weight.
        step0: first trial step.
    """

    step: str = "backtracking"
    max_iters: int = 5000
    tol: float = 1e-6
    lambda1: float = 0.0
    step0: float = 1.0
    solver: str = "ista"

    def __post_init__(self):
        if self.solver not in ("ista", "lbfgsb"):
            raise ValueError(f"unknown inner solver {self.solver!r}")
        if self.step not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step rule {self.step!r}")
        if self.tol <= 0 or self.step0 <= 0 or self.max_iters < 1:
            raise ValueError("tolerances, step and iteration cap must be positive")
        if self.lambda1 < 0:
            raise ValueError("lambda1 must be non-negative")


@dataclass
class AlmConfig:
    eta: float = 10.0
    gamma: float = 0.25
    eps_h: float = 1e-8
    max_outer: int = 100
    mu0: float = 1.0
    alpha0: float = 0.0
    inner: InnerConfig = field(default_factory=InnerConfig)

    def __post_init__(self):
        if not self.eta > 1:
            raise ValueError("eta must exceed 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.eps_h <= 0 or self.max_outer < 1 or self.mu0 <= 0:
            raise ValueError("eps_h, max_outer and mu0 must be positive")


@dataclass
class CentralPathConfig:
    """Schedules for the log-det central path; ``s`` is padded with its last entry."""

    s: tuple = (1.0, 0.9, 0.8)
    mu: tuple = (1.0, 0.1, 0.01, 0.001)
    inner: InnerConfig = field(default_factory=lambda: InnerConfig(max_iters=30000))

    def __post_init__(self):
        if not self.s or not self.mu:
            raise ValueError("schedules must be non-empty")
        if any(v <= 0 for v in (*self.s, *self.mu)):
            raise ValueError("schedule entries must be positive")

    def stages(self) -> list[tuple[float, float]]:
        n = max(len(self.s), len(self.mu))
        s = list(self.s) + [self.s[-1]] * (n - len(self.s))
        mu = list(self.mu) + [self.mu[-1]] * (n - len(self.mu))
        return list(zip(mu, s))


@dataclass
class SolveInfo:
    converged: bool = True
    iterations: int = 0
    h: float = 0.0
    history: list = field(default_factory=list)


def soft_threshold(x, t):
    """Proximal map of ``t * |x|_1``: sign(x) max(|x| - t, 0)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return out if out.ndim else float(out)


def _default_free(x: np.ndarray) -> np.ndarray:
    free = np.ones(x.shape, dtype=bool)
    if x.ndim == 2 and x.shape[0] == x.shape[1]:
        np.fill_diagonal(free, False)
    return free


def _evaluate(fun, x):
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            f, g = fun(x)
    except (DomainError, NumericalError):
        return math.inf, None
    f = float(f)
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        return math.inf, None
    return f, np.asarray(g, dtype=float)


def _bb_step(d, y, sy, t):
    # short Barzilai-Borwein step <s,y>/<y,y>; it rarely needs backtracking
    if sy <= 0:
        return 2.0 * t
    return sy / float(np.vdot(y, y))


def _backtrack(fun, x, f, g, t, pen, free, best=None):
    """Halve ``t`` until the prox step from ``x`` satisfies the quadratic upper bound."""
    bad_domain = 0
    for _ in range(MAX_ARMIJO):
        x_new = np.where(free, soft_threshold(x - t * g, t * pen), 0.0)
        d = x_new - x
        f_new, g_new = _evaluate(fun, x_new)
        if g_new is None:
            bad_domain += 1
            if bad_domain > MAX_HALVINGS:
                break
        elif f_new <= f + np.vdot(g, d) + np.vdot(d, d) / (2 * t) + 1e-12 * abs(f):
            return t, x_new, d, f_new, g_new
        t *= 0.5
    raise NumericalError("step-size backtracking exhausted", x if best is None else best)


def prox_grad_minimize(
    fun: ValueGrad,
    lambda1: float | None,
    init,
    cfg: InnerConfig | None = None,
    free=None,
    weights=None,
    info: SolveInfo | None = None,
) -> np.ndarray:
    """Minimize ``fun(x) + lambda1 * sum(weights * |x|)`` by ISTA.

    Each trial step is accepted once the smooth part satisfies the quadratic
    upper bound (Armijo for proximal steps), which makes the composite
    objective non-increasing. A trial point where ``fun`` raises DomainError
    or is non-finite is treated like a failed Armijo test.

    Args:
        fun: smooth part, returning value and gradient.
        lambda1: L1 weight; ``None`` takes ``cfg.lambda1``.
        init: starting point.
        cfg: step rule and budgets.
        free: boolean mask of entries allowed to move. Defaults to all
            entries off the diagonal for square matrices, all entries otherwise.
        weights: optional per-entry multipliers on the L1 weight.
        info: optional record filled with iteration count, convergence and
            the composite objective after every accepted step.

    Returns:
        The final iterate.

    Raises:
        NumericalError: ``fun`` is not finite at ``init`` or 50 halvings fail
            to produce an acceptable step. Carries the last good iterate.
    """
    cfg = cfg or InnerConfig()
    lam = cfg.lambda1 if lambda1 is None else float(lambda1)
    x = np.array(init, dtype=float)
    free = _default_free(x) if free is None else np.asarray(free, dtype=bool)
    x = np.where(free, x, 0.0)
    pen = lam * (np.ones_like(x) if weights is None else np.asarray(weights, dtype=float))
    f, g = _evaluate(fun, x)
    if g is None:
        raise NumericalError("objective is not finite at the initial point", x)
    g = np.where(free, g, 0.0)
    t = cfg.step0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        t, x_new, d, f_new, g_new = _backtrack(fun, x, f, g, t, pen, free)
        g_new = np.where(free, g_new, 0.0)
        gm = math.sqrt(float(np.vdot(d, d))) / t
        if cfg.step == "backtracking":
            y = g_new - g
            sy = float(np.vdot(d, y))
            t_next = _bb_step(d, y, sy, t)
            t = min(max(t_next, 1e-12), 1e12)
        else:
            t = cfg.step0
        x, f, g = x_new, f_new, g_new
        if info is not None:
            info.history.append(f + float(np.sum(pen * np.abs(x))))
        if gm < cfg.tol:
            converged = True
            break
    if info is not None:
        info.iterations += it
        info.converged = converged
    return x


def lbfgsb_minimize(
    fun: ValueGrad,
    lambda1: float | None,
    init,
    cfg: InnerConfig | None = None,
    free=None,
    weights=None,
    info: SolveInfo | None = None,
) -> np.ndarray:
    """Same problem as ``prox_grad_minimize``, solved by L-BFGS-B on split variables.

    Entries outside ``free`` get the bound (0, 0). Points where ``fun``
    raises DomainError are reported to the line search as +inf.
    """
    cfg = cfg or InnerConfig(solver="lbfgsb")
    lam = cfg.lambda1 if lambda1 is None else float(lambda1)
    x0 = np.array(init, dtype=float)
    shape = x0.shape
    free = _default_free(x0) if free is None else np.asarray(free, dtype=bool)
    pen = lam * (np.ones(shape) if weights is None else np.asarray(weights, dtype=float))
    pen = np.concatenate([pen.ravel(), pen.ravel()])
    m = x0.size
    z0 = np.concatenate([np.maximum(x0, 0.0).ravel(), np.maximum(-x0, 0.0).ravel()])
    ub = np.where(np.concatenate([free.ravel(), free.ravel()]), np.inf, 0.0)
    z0 = np.minimum(z0, ub)
    zeros = np.zeros(2 * m)

    def split(z):
        f, g = _evaluate(fun, (z[:m] - z[m:]).reshape(shape))
        if g is None:
            return math.inf, zeros
        g = g.ravel()
        return f + float(pen @ z), np.concatenate([g, -g]) + pen

    if not math.isfinite(split(z0)[0]):
        raise NumericalError("objective is not finite at the initial point", x0)
    res = scipy.optimize.minimize(
        split,
        z0,
        jac=True,
        method="L-BFGS-B",
        bounds=scipy.optimize.Bounds(np.zeros(2 * m), ub),
        options={"maxiter": cfg.max_iters, "gtol": cfg.tol, "maxfun": 20 * cfg.max_iters},
    )
    if not math.isfinite(res.fun):
        raise NumericalError("L-BFGS-B ended at a non-finite objective", x0)
    if info is not None:
        info.iterations += int(res.nit)
        info.converged = bool(res.success)
    return (res.x[:m] - res.x[m:]).reshape(shape)


def minimize_l1(fun: ValueGrad, lambda1, init, cfg: InnerConfig | None = None, **kw) -> np.ndarray:
    """Dispatch on ``cfg.solver``."""
    cfg = cfg or InnerConfig()
    if cfg.solver == "lbfgsb":
        return lbfgsb_minimize(fun, lambda1, init, cfg, **kw)
    return prox_grad_minimize(fun, lambda1, init, cfg, **kw)


def alm_solve(
    score: ValueGrad,
    constraint: ValueGrad,
    cfg: AlmConfig | None = None,
    init=None,
    free=None,
    trace: Callable[[dict], None] | None = None,
    info: SolveInfo | None = None,
    shape=None,
) -> np.ndarray:
    """Augmented Lagrangian loop for ``min F(W) + lambda1 |W|_1  s.t.  h(W) = 0``.

    Round k minimizes ``F + alpha_k h + mu_k/2 h^2``, then sets
    ``alpha += mu h`` and multiplies ``mu`` by ``eta`` unless ``|h|`` shrank
    below ``gamma`` times its previous value.

    Args:
        score: smooth loss F.
        constraint: h and its gradient.
        cfg: outer and inner settings (``cfg.inner.lambda1`` is the L1 weight).
        init: starting point; zeros of ``shape`` if omitted.
        free: mask of entries allowed to move (see ``prox_grad_minimize``).
        trace: optional sink receiving one dict per outer round.
        info: optional record filled with convergence diagnostics.
        shape: shape of the zero start when ``init`` is None.

    Returns:
        Final W, not thresholded.

    Raises:
        NonConvergenceError: h fails to decrease for 5 consecutive rounds
            once mu has reached 1e16.
    """
    cfg = cfg or AlmConfig()
    W = np.zeros(shape) if init is None else np.array(init, dtype=float)
    alpha, mu = cfg.alpha0, cfg.mu0
    h_prev = math.inf
    stalled = 0
    info = info if info is not None else SolveInfo()
    info.converged = False
    for k in range(cfg.max_outer):
        a, m = alpha, mu

        def augmented(x, a=a, m=m):
            f, gf = score(x)
            h, gh = constraint(x)
            return f + a * h + 0.5 * m * h * h, gf + (a + m * h) * gh

        inner = SolveInfo()
        W = minimize_l1(augmented, None, W, cfg.inner, free=free, info=inner)
        h = float(constraint(W)[0])
        info.iterations += inner.iterations
        info.h = h
        if trace is not None:
            trace({"solver": "alm", "iter": k, "F": float(score(W)[0]), "h": h, "alpha": alpha, "mu": mu,
                   "inner_iters": inner.iterations})
        info.history.append(h)
        if abs(h) < cfg.eps_h:
            info.converged = True
            break
        if mu >= MU_MAX:
            stalled = stalled + 1 if abs(h) >= abs(h_prev) else 0
            if stalled >= 5:
                raise NonConvergenceError(
                    "acyclicity violation stopped decreasing at maximal penalty",
                    {"h": h, "mu": mu, "alpha": alpha, "round": k, "W": W},
                )
        alpha += mu * h
        if abs(h) > cfg.gamma * abs(h_prev):
            mu = min(mu * cfg.eta, MU_MAX)
        h_prev = h
    return W


def central_path_solve(
    score: ValueGrad,
    cfg: CentralPathConfig | None = None,
    init=None,
    shape=None,
    free=None,
    trace: Callable[[dict], None] | None = None,
    info: SolveInfo | None = None,
) -> np.ndarray:
    """Log-det central path: stage i minimizes ``mu_i (F + lambda1 |W|_1) + h_ldet(W, s_i)``.

    Each stage warm-starts from the previous one. If the warm start is
    outside the domain for the new ``s`` it is halved until it is inside.

    Raises:
        NumericalError: domain backtracking exhausts 50 halvings.
    """
    cfg = cfg or CentralPathConfig()
    W = np.zeros(shape) if init is None else np.array(init, dtype=float)
    info = info if info is not None else SolveInfo()
    info.converged = True
    lam = cfg.inner.lambda1
    for stage, (mu, s) in enumerate(cfg.stages()):
        for _ in range(MAX_HALVINGS):
            try:
                h_ldet(W, s)
                break
            except DomainError:
                W = 0.5 * W
        else:
            raise NumericalError("warm start could not be brought into the log-det domain", W)

        def objective(x, mu=mu, s=s, ldet=AcyclicityKind(ConstraintKind.LOGDET, s=s)):
            h, gh = ldet.value_and_grad(x)
            f, gf = score(x)
            return mu * f + h, mu * gf + gh

        inner = SolveInfo()
        W = minimize_l1(objective, mu * lam, W, cfg.inner, free=free, info=inner)
        info.iterations += inner.iterations
        info.converged = info.converged and inner.converged
        info.h = h_ldet(W, s)
        info.history.append(info.h)
        if trace is not None:
            trace({"solver": "central_path", "stage": stage, "mu": mu, "s": s, "F": float(score(W)[0]),
                   "h": info.h, "inner_iters": inner.iterations})
    return W
