"""Reproducing kernels and the Gram/frame matrices built from them.

Points are real scalars. Every kernel is an immutable value with a
vectorized ``pairwise`` method; :func:`gram` and :func:`frame` assemble the
dense matrices consumed by :mod:`trek.smoother`.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .blockops import BlockLayout

__all__ = [
    "Kernel",
    "GaussianKernel",
    "LaplacianKernel",
    "LinearKernel",
    "PolynomialKernel",
    "PrecomputedFrameKernel",
    "GramMatrix",
    "LocationError",
    "eval_kernel",
    "gram",
    "frame",
    "parse_kernel",
    "flatten_locations",
]


class LocationError(ValueError):
    """Raised when per-block location lists disagree with a layout."""

    def __init__(self, message: str, block: int | None = None):
        super().__init__(message)
        self.block = block


class Kernel:
    """Base class; subclasses implement :meth:`pairwise`."""

    def pairwise(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Return the matrix ``[K(x_a, y_b)]`` of shape ``(len(x), len(y))``."""
        raise NotImplementedError

    def __call__(self, z1: float, z2: float) -> float:
        return float(self.pairwise(np.array([z1], float), np.array([z2], float))[0, 0])


@dataclass(frozen=True)
class GaussianKernel(Kernel):
    """``exp(-gamma * (z1 - z2)**2)``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def pairwise(self, x, y):
        d = np.subtract.outer(np.asarray(x, float), np.asarray(y, float))
        return np.exp(-self.gamma * d * d)


@dataclass(frozen=True)
class LaplacianKernel(Kernel):
    """``exp(-gamma * |z1 - z2|)``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def pairwise(self, x, y):
        d = np.subtract.outer(np.asarray(x, float), np.asarray(y, float))
        return np.exp(-self.gamma * np.abs(d))


@dataclass(frozen=True)
class LinearKernel(Kernel):
    """``z1 * z2``. Its RKHS is one-dimensional."""

    def pairwise(self, x, y):
        return np.multiply.outer(np.asarray(x, float), np.asarray(y, float))


@dataclass(frozen=True)
class PolynomialKernel(Kernel):
    """``(z1 * z2 + offset) ** degree``."""

    degree: int
    offset: float = 0.0

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be a positive integer, got {self.degree}")

    def pairwise(self, x, y):
        xy = np.multiply.outer(np.asarray(x, float), np.asarray(y, float))
        return (xy + self.offset) ** int(self.degree)


@dataclass(frozen=True, eq=False)
class PrecomputedFrameKernel(Kernel):
    """Kernel induced by a finite frame and a penalty pseudo-inverse.

    ``K(z1, z2) = phi(z1) @ penalty_pinv @ phi(z2)`` where ``basis`` maps an
    array of ``N`` points to an ``(N, p)`` feature matrix. The caller supplies
    the pseudo-inverse of the spline penalty directly.

    Examples
    --------
    >>> k = PrecomputedFrameKernel(lambda z: np.stack([np.ones_like(z), z], 1),
    ...                            np.eye(2))
    >>> k(2.0, 3.0)
    7.0
    """

    basis: Callable[[np.ndarray], np.ndarray]
    penalty_pinv: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.penalty_pinv, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("penalty_pinv must be a square matrix")
        if not np.array_equal(p, p.T):
            raise ValueError("penalty_pinv must be symmetric")
        p.setflags(write=False)
        object.__setattr__(self, "penalty_pinv", p)

    def features(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, float))
        phi = np.asarray(self.basis(z), float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.shape != (z.size, self.penalty_pinv.shape[0]):
            raise ValueError(
                f"basis returned shape {phi.shape}, expected "
                f"({z.size}, {self.penalty_pinv.shape[0]})"
            )
        return phi

    def pairwise(self, x, y):
        fx = self.features(x)
        if x is y:
            fy = fx
        else:
            fy = self.features(y)
        return fx @ self.penalty_pinv @ fy.T


def eval_kernel(kernel: Kernel, z1: float, z2: float) -> float:
    """Evaluate ``kernel`` at a single pair of points."""
    return kernel(z1, z2)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Dense ``R x R`` kernel matrix partitioned by ``layout``.

    ``values`` is C-contiguous and exactly symmetric.
    """

    layout: BlockLayout
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        R = self.layout.R
        if self.values.shape != (R, R):
            raise ValueError(f"Gram values have shape {self.values.shape}, expected {(R, R)}")

    def block(self, i1: int, i2: int) -> np.ndarray:
        """View of the ``(i1, i2)`` block ``K_{i1 i2}``."""
        s1, s2 = self.layout.slice(i1), self.layout.slice(i2)
        return self.values[s1, s2]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def flatten_locations(layout: BlockLayout, locations: Sequence[Sequence[float]]) -> np.ndarray:
    """Concatenate per-block locations after checking them against ``layout``."""
    if len(locations) != layout.n:
        raise LocationError(
            f"expected {layout.n} location blocks, got {len(locations)}", block=None
        )
    for i, (xi, ri) in enumerate(zip(locations, layout.r)):
        if len(xi) != ri:
            raise LocationError(
                f"block {i} has {len(xi)} locations but the layout expects {ri}", block=i
            )
    if layout.n == 0:
        return np.empty(0)
    return np.concatenate([np.asarray(xi, dtype=float).ravel() for xi in locations])


def _mirror_upper(a: np.ndarray) -> np.ndarray:
    out = np.triu(a)
    out += np.triu(a, 1).T
    return np.ascontiguousarray(out)


def gram(kernel: Kernel, layout: BlockLayout, locations) -> GramMatrix:
    """Assemble the Gram matrix of ``kernel`` at all observation locations.

    The upper triangle is computed and mirrored, so the result is symmetric
    bit for bit regardless of the kernel's floating-point behaviour.
    """
    x = flatten_locations(layout, locations)
    return GramMatrix(layout, _mirror_upper(kernel.pairwise(x, x)))


def frame(kernel: Kernel, layout: BlockLayout, locations, grid) -> np.ndarray:
    """Frame matrix ``F[idx(i, j), k] = K(z_k, X_ij)`` of shape ``(R, m)``."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    x = flatten_locations(layout, locations)
    # K(z_k, X_ij) evaluated with the grid point first, then transposed
    return np.ascontiguousarray(kernel.pairwise(grid, x).T)


def parse_kernel(spec: str) -> Kernel:
    """Parse ``gaussian:g``, ``laplacian:g``, ``linear`` or ``poly:d:c``."""
    parts = spec.strip().lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "gaussian" and len(args) == 1:
            return GaussianKernel(float(args[0]))
        if name == "laplacian" and len(args) == 1:
            return LaplacianKernel(float(args[0]))
        if name == "linear" and not args:
            return LinearKernel()
        if name in ("poly", "polynomial") and len(args) in (1, 2):
            offset = float(args[1]) if len(args) == 2 else 0.0
            return PolynomialKernel(int(args[0]), offset)
    except ValueError as exc:
        raise ValueError(f"invalid kernel spec {spec!r}: {exc}") from None
    raise ValueError(
        f"invalid kernel spec {spec!r}; expected gaussian:g, laplacian:g, linear or poly:d:c"
    )
