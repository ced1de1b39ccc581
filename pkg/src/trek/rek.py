"""Restricted Krylov (ReK) conjugate-gradient solver.

Minimizes ``phi(x) = x^T S x / 2 - b^T x`` over the range of an orthogonal
projector ``P`` using only the actions ``v -> S v`` and ``v -> P v``.
The projected residual overwrites the residual in place, so a solve keeps
five working vectors (x, r, p, S p, and one step buffer).

Operators and projectors may be given as dense matrices, objects with a
``matvec`` method, plain callables, or objects exposing
``apply_into(v, out)`` / ``project_into(v, out)`` for allocation-free use.
Vectors are flat float64 arrays; the inner product is the Euclidean one.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SolveStatus",
    "rek_solve",
    "quadratic_objective",
]

log = logging.getLogger(__name__)


class SolveStatus(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIterReached"
    DIVERGED = "Diverged"
    NON_POSITIVE_CURVATURE = "NonPositiveCurvature"


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules.

    ``tol`` bounds the squared norm of the projected residual. It is
    absolute unless ``relative`` is set, in which case the threshold is
    ``tol * delta_0``. A solve is declared diverged when that norm becomes
    non-finite or exceeds ``divergence_cap * delta_0``.
    """

    tol: float = 1e-10
    maxiter: int = 500
    divergence_cap: float = 1e12
    relative: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.maxiter) != self.maxiter or self.maxiter < 1:
            raise ValueError(f"maxiter must be a positive integer, got {self.maxiter}")
        if not self.divergence_cap > 0:
            raise ValueError(f"divergence_cap must be positive, got {self.divergence_cap}")


@dataclass
class SolveReport:
    iterations: int
    residual_trace: list[float] = field(default_factory=list)
    status: SolveStatus = SolveStatus.MAX_ITER

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


def _as_apply(S) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if hasattr(S, "apply_into"):
        return S.apply_into
    if isinstance(S, np.ndarray):
        return lambda v, out: np.matmul(S, v, out=out)
    f = S.matvec if hasattr(S, "matvec") else S
    if not callable(f):
        raise TypeError(f"cannot use {type(S).__name__} as a linear operator")

    def apply(v, out):
        out[...] = f(v)
        return out

    return apply


def _as_project(P) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if P is None:
        def identity(v, out):
            if out is not v:
                out[...] = v
            return out

        return identity
    if hasattr(P, "project_into"):
        return P.project_into
    return _as_apply(P)


def quadratic_objective(S, b, x) -> float:
    """``x^T S x / 2 - b^T x`` for any operator accepted by :func:`rek_solve`."""
    x = np.asarray(x, dtype=float)
    sx = _as_apply(S)(x, np.empty_like(x))
    return float(0.5 * np.dot(x, sx) - np.dot(b, x))


def rek_solve(S, P, b, x0=None, config: SolverConfig | None = None, callback=None):
    """Solve ``min phi(x)`` over ``range(P)`` by restricted conjugate gradients.

    Parameters
    ----------
    S : operator
        Symmetric and positive definite on ``range(P)``.
    P : projector or None
        Orthogonal projector; ``None`` means the identity (plain CG).
    b : array_like
        Right-hand side.
    x0 : array_like, optional
        Starting point, projected on entry. Defaults to zero.
    config : SolverConfig, optional
    callback : callable, optional
        Called as ``callback(k, x, r, p)`` after initialization (``k = 0``)
        and after each iteration, where ``r`` is the projected residual and
        ``p`` the next search direction. Arrays are live buffers; copy them
        to retain.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    cfg = config or SolverConfig()
    apply = _as_apply(S)
    project = _as_project(P)

    b = np.ascontiguousarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if x.shape != b.shape:
        raise ValueError(f"x0 has shape {x.shape}, expected {b.shape}")
    project(x, x)

    v = np.empty_like(b)
    step = np.empty_like(b)
    r = np.subtract(b, apply(x, v))
    project(r, r)
    p = r.copy()

    delta_old = float(np.dot(r, r))
    delta_0 = delta_old
    trace = [delta_old]
    report = SolveReport(iterations=0, residual_trace=trace)
    threshold = cfg.tol * delta_0 if cfg.relative else cfg.tol
    if callback is not None:
        callback(0, x, r, p)

    if not np.isfinite(delta_old):
        report.status = SolveStatus.DIVERGED
        return x, report
    if delta_old < threshold:
        report.status = SolveStatus.CONVERGED
        return x, report

    k = 0
    while k < cfg.maxiter:
        apply(p, v)
        curvature = float(np.dot(p, v))
        if not curvature > 0:
            report.status = (
                SolveStatus.NON_POSITIVE_CURVATURE
                if np.isfinite(curvature) else SolveStatus.DIVERGED
            )
            break
        alpha = delta_old / curvature
        np.multiply(p, alpha, out=step)
        if not (np.isfinite(alpha) and np.isfinite(step).all()):
            report.status = SolveStatus.DIVERGED
            break
        x += step
        np.multiply(v, alpha, out=step)
        r -= step
        project(r, r)
        delta_new = float(np.dot(r, r))
        k += 1
        trace.append(delta_new)
        report.iterations = k

        if not np.isfinite(delta_new) or delta_new > cfg.divergence_cap * delta_0:
            report.status = SolveStatus.DIVERGED
            break
        beta = delta_new / delta_old
        p *= beta
        p += r
        delta_old = delta_new
        if callback is not None:
            callback(k, x, r, p)
        if delta_new < threshold:
            report.status = SolveStatus.CONVERGED
            break
    else:
        report.status = SolveStatus.MAX_ITER

    log.debug("rek_solve: %s after %d iterations (delta=%.3e)",
              report.status.value, report.iterations, trace[-1])
    return x, report
