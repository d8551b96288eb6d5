"""Differentiable acyclicity functions h(W) and their gradients.

All three vanish exactly when the support of W is acyclic:

* ``h_expm``  tr exp(W o W) - d
* ``h_poly``  tr (I + alpha W o W)^d - d
* ``h_ldet``  -log det(sI - W o W) + d log s   (on the M-matrix domain)
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import expm as _scipy_expm

from .errors import DomainError, NumericalError

__all__ = [
    "DomainError",
    "ConstraintKind",
    "AcyclicityKind",
    "expm",
    "h_expm",
    "grad_h_expm",
    "h_poly",
    "grad_h_poly",
    "h_ldet",
    "grad_h_ldet",
    "in_ldet_domain",
    "acyclicity",
]


def expm(M) -> np.ndarray:
    """Matrix exponential with overflow reported as NumericalError."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expm needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise NumericalError("expm input is not finite")
    with np.errstate(over="ignore", invalid="ignore"):
        R = _scipy_expm(A)
    if not np.all(np.isfinite(R)):
        raise NumericalError("expm overflowed")
    return R


def h_expm(W) -> float:
    W = np.asarray(W, dtype=float)
    return float(np.trace(expm(W * W)) - W.shape[0])


def grad_h_expm(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    return 2.0 * expm(W * W).T * W


def _poly_alpha(W, alpha):
    return 1.0 / W.shape[0] if alpha is None else float(alpha)


def h_poly(W, alpha: float | None = None) -> float:
    """Polynomial constraint; ``alpha`` defaults to 1/d."""
    W = np.asarray(W, dtype=float)
    d = W.shape[0]
    a = _poly_alpha(W, alpha)
    if a <= 0:
        raise ValueError("alpha must be positive")
    B = np.eye(d) + a * (W * W)
    return float(np.trace(np.linalg.matrix_power(B, d)) - d)


def grad_h_poly(W, alpha: float | None = None) -> np.ndarray:
    # d/dW tr (I + a W o W)^d = 2 a d ((I + a W o W)^{d-1})^T o W; equals the
    # familiar 2((I + W o W / d)^{d-1})^T o W at the default a = 1/d.
    W = np.asarray(W, dtype=float)
    d = W.shape[0]
    a = _poly_alpha(W, alpha)
    B = np.eye(d) + a * (W * W)
    return 2.0 * a * d * np.linalg.matrix_power(B, d - 1).T * W


def _ldet_inverse(W: np.ndarray, s: float) -> tuple[float, np.ndarray]:
    """``(log det A, A^{-1})`` for ``A = sI - W o W``; DomainError off the domain.

    A is a Z-matrix, and a Z-matrix is a nonsingular M-matrix iff it is
    invertible with an entrywise non-negative inverse. Round-off is allowed
    at 1e-12 relative to the largest inverse entry.
    """
    A = s * np.eye(W.shape[0]) - W * W
    sign, logdet = np.linalg.slogdet(A)
    if not sign > 0:
        raise DomainError("sI - W o W is not a nonsingular M-matrix")
    inv = np.linalg.inv(A)
    if not np.all(np.isfinite(inv)) or inv.min() < -1e-12 * max(1.0, np.abs(inv).max()):
        raise DomainError("sI - W o W is not a nonsingular M-matrix")
    return float(logdet), inv


def in_ldet_domain(W, s: float = 1.0) -> bool:
    try:
        _ldet_inverse(np.asarray(W, dtype=float), s)
    except DomainError:
        return False
    return True


def h_ldet(W, s: float = 1.0) -> float:
    W = np.asarray(W, dtype=float)
    logdet, _ = _ldet_inverse(W, s)
    return -logdet + W.shape[0] * np.log(s)


def grad_h_ldet(W, s: float = 1.0) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    _, inv = _ldet_inverse(W, s)
    return 2.0 * inv.T * W


class ConstraintKind(str, Enum):
    EXPM = "Expm"
    POLY = "Poly"
    LOGDET = "LogDet"


@dataclass(frozen=True)
class AcyclicityKind:
    """Which constraint to use and its parameter (alpha for Poly, s for LogDet)."""

    kind: ConstraintKind = ConstraintKind.EXPM
    alpha: float | None = None
    s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.s <= 0:
            raise ValueError("s must be positive")

    def value_and_grad(self, W):
        """Return ``(h(W), grad h(W))`` sharing one matrix function evaluation."""
        W = np.asarray(W, dtype=float)
        d = W.shape[0]
        if self.kind is ConstraintKind.EXPM:
            E = expm(W * W)
            return float(np.trace(E) - d), 2.0 * E.T * W
        if self.kind is ConstraintKind.POLY:
            a = _poly_alpha(W, self.alpha)
            B = np.eye(d) + a * (W * W)
            P = np.linalg.matrix_power(B, d - 1)
            return float(np.trace(P @ B) - d), 2.0 * a * d * P.T * W
        logdet, inv = _ldet_inverse(W, self.s)
        return -logdet + d * np.log(self.s), 2.0 * inv.T * W

    def __call__(self, W) -> float:
        return self.value_and_grad(W)[0]


def acyclicity(kind: str = "Expm", **kw) -> AcyclicityKind:
    return AcyclicityKind(ConstraintKind(kind), **kw)
