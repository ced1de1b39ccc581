"""Mean and second-moment smoothing in an RKHS, plus functional PCA.

The second-moment estimator solves the restricted Khatri-Rao normal
equations in block-diagonal matrix form with :func:`trek.rek.rek_solve`,
using the lazy operator from :mod:`trek.blockops` and diagonal elimination
as the projector.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _backend
from .blockops import BlockDiagMatrix, BlockLayout, LazyKhatriOperator, offdiag_project
from .kernels import GramMatrix, Kernel, flatten_locations, gram
from .rek import SolveReport, SolverConfig, rek_solve

__all__ = [
    "FunctionalDataset",
    "MeanFit",
    "CovarianceFit",
    "FpcaResult",
    "FitMode",
    "SmoothingError",
    "fit_mean",
    "fit_second_moment",
    "fit_covariance_centered",
    "evaluate_on_grid",
    "evaluate_mean",
    "recover_coefficients",
    "fpca",
]


class SmoothingError(RuntimeError):
    pass


class FitMode(str, enum.Enum):
    SECOND_MOMENT = "SecondMoment"
    CENTERED_COVARIANCE = "CenteredCovariance"


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """Noisy observations ``Y_ij`` of ``n`` functions at locations ``X_ij``."""

    layout: BlockLayout
    locations: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        locs = tuple(np.asarray(x, dtype=float).ravel() for x in self.locations)
        vals = tuple(np.asarray(y, dtype=float).ravel() for y in self.values)
        flatten_locations(self.layout, locs)
        if len(vals) != self.layout.n:
            raise ValueError(f"expected {self.layout.n} value blocks, got {len(vals)}")
        for i, (yi, ri) in enumerate(zip(vals, self.layout.r)):
            if yi.size != ri:
                raise ValueError(f"block {i} has {yi.size} values but {ri} locations")
            if not np.all(np.isfinite(yi)):
                raise ValueError(f"block {i} contains non-finite values")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_blocks(cls, locations: Sequence, values: Sequence) -> "FunctionalDataset":
        layout = BlockLayout(tuple(len(x) for x in locations))
        return cls(layout, tuple(locations), tuple(values))

    @property
    def x(self) -> np.ndarray:
        return np.concatenate(self.locations) if self.locations else np.empty(0)

    @property
    def y(self) -> np.ndarray:
        return np.concatenate(self.values) if self.values else np.empty(0)

    def with_values(self, values) -> "FunctionalDataset":
        return FunctionalDataset(self.layout, self.locations, tuple(values))


@dataclass(frozen=True, eq=False)
class MeanFit:
    """Representer coefficients of the ridge mean estimate."""

    coefficients: np.ndarray
    nu: float
    residual_norm: float


@dataclass(eq=False)
class CovarianceFit:
    B: BlockDiagMatrix
    eta: float
    report: SolveReport
    mode: FitMode = FitMode.SECOND_MOMENT


@dataclass(frozen=True, eq=False)
class FpcaResult:
    """Eigenvalues (descending) and coefficient matrix ``U`` of shape ``(R, q)``.

    Eigenfunction ``l`` evaluates as ``frame.T @ U[:, l]``.
    """

    eigenvalues: np.ndarray
    U: np.ndarray = field(repr=False)

    @property
    def q(self) -> int:
        return int(self.eigenvalues.size)

    def eigenfunctions(self, frame: np.ndarray) -> np.ndarray:
        """Grid values ``phi_l(z_k)`` as an ``(m, q)`` array."""
        return frame.T @ self.U


def _gram_for(data: FunctionalDataset, kernel_or_gram) -> GramMatrix:
    if isinstance(kernel_or_gram, GramMatrix):
        if kernel_or_gram.layout != data.layout:
            raise ValueError("Gram layout does not match the dataset")
        return kernel_or_gram
    if isinstance(kernel_or_gram, Kernel):
        return gram(kernel_or_gram, data.layout, data.locations)
    raise TypeError("expected a Kernel or a GramMatrix")


def fit_mean(data: FunctionalDataset, kernel: Kernel | GramMatrix, nu: float) -> MeanFit:
    """Solve ``(K + nu I) a = y`` for the mean coefficients."""
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    K = _gram_for(data, kernel).values
    y = data.y
    A = K + nu * np.eye(K.shape[0])
    try:
        a = scipy.linalg.solve(A, y, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SmoothingError(f"mean system could not be solved: {exc}") from exc
    res = float(np.linalg.norm(A @ a - y))
    if not np.isfinite(res):
        raise SmoothingError("mean solve produced non-finite coefficients")
    return MeanFit(a, float(nu), res)


def evaluate_mean(mean: MeanFit, frame: np.ndarray) -> np.ndarray:
    """Mean estimate on the grid, ``frame.T @ a``."""
    return frame.T @ mean.coefficients


def fit_second_moment(data: FunctionalDataset, kernel: Kernel | GramMatrix, eta: float,
                      config: SolverConfig | None = None, B0: BlockDiagMatrix | None = None,
                      backend: str | None = None, callback=None) -> CovarianceFit:
    """Smooth the second moment by tensorized restricted Krylov iterations.

    Minimizes ``<B, (K (.) K + eta I) B> / 2 - <B, diag[y_i y_i^T]>`` over
    symmetric block-diagonal ``B`` with zero block diagonals.

    ``callback(k, B, R, P)`` receives the live iterate, projected residual
    and direction as :class:`BlockDiagMatrix` wrappers.
    """
    layout = data.layout
    if any(ri < 2 for ri in layout.r):
        bad = [i for i, ri in enumerate(layout.r) if ri < 2]
        raise ValueError(f"second-moment smoothing needs r_i >= 2; blocks {bad} have fewer")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    G = _gram_for(data, kernel)
    op = LazyKhatriOperator(G, eta, backend=backend)
    rhs = BlockDiagMatrix.outer(layout, data.y)
    _backend.kernels.zero_diagonals(rhs.data, layout.diag_index)

    x0 = None
    if B0 is not None:
        if B0.layout != layout:
            raise ValueError("B0 layout does not match the dataset")
        x0 = B0.data if B0.symmetric else offdiag_project(B0).data

    wrapped = None
    if callback is not None:
        def wrapped(k, x, r, p):
            callback(k, BlockDiagMatrix(layout, x, True), BlockDiagMatrix(layout, r, True),
                     BlockDiagMatrix(layout, p, True))

    x, report = rek_solve(op, _DiagElimProjector(layout), rhs.data, x0, config, wrapped)
    return CovarianceFit(BlockDiagMatrix(layout, x, symmetric=True), float(eta), report)


class _DiagElimProjector:
    def __init__(self, layout: BlockLayout):
        self.diag_index = layout.diag_index

    def project_into(self, v, out):
        if out is not v:
            out[...] = v
        _backend.kernels.zero_diagonals(out, self.diag_index)
        return out


def fit_covariance_centered(data: FunctionalDataset, kernel: Kernel | GramMatrix, nu: float,
                            eta: float, config: SolverConfig | None = None,
                            backend: str | None = None) -> tuple[MeanFit, CovarianceFit]:
    """Fit the mean, center the observations by it, then smooth their second moment."""
    G = _gram_for(data, kernel)
    mean = fit_mean(data, G, nu)
    fitted = G.values @ mean.coefficients
    lay = data.layout
    centered = data.with_values([data.values[i] - fitted[lay.slice(i)] for i in range(lay.n)])
    cov = fit_second_moment(centered, G, eta, config, backend=backend)
    cov.mode = FitMode.CENTERED_COVARIANCE
    return mean, cov


def evaluate_on_grid(fit: CovarianceFit, frame: np.ndarray, mean: MeanFit | None = None) -> np.ndarray:
    """Surface ``F^T B F`` on the grid, exactly symmetric.

    With a mean fit and a second-moment fit, returns the plug-in covariance
    ``F^T B F - (F^T a)(F^T a)^T``. The mean is ignored for centered fits.
    """
    frame = np.asarray(frame, dtype=float)
    lay = fit.B.layout
    if frame.ndim != 2 or frame.shape[0] != lay.R:
        raise ValueError(f"frame has shape {frame.shape}, expected ({lay.R}, m)")
    m = frame.shape[1]
    out = np.zeros((m, m))
    for i in range(lay.n):
        Fi = frame[lay.slice(i)]
        out += Fi.T @ (fit.B.block(i) @ Fi)
    if mean is not None and fit.mode is FitMode.SECOND_MOMENT:
        mu = frame.T @ mean.coefficients
        out -= np.multiply.outer(mu, mu)
    out += out.T
    out *= 0.5
    return out


def recover_coefficients(fit: CovarianceFit | BlockDiagMatrix) -> np.ndarray:
    """Effective coefficient vector of length ``L``.

    Within block ``i`` entry ``(j1, j2)``, ``j1 < j2``, sits at position
    ``j1 + j2 (j2 - 1) / 2`` (0-based) and equals ``B_i[j1, j2] + B_i[j2, j1]``.
    """
    B = fit.B if isinstance(fit, CovarianceFit) else fit
    parts = []
    for i, ri in enumerate(B.layout.r):
        j2, j1 = np.tril_indices(ri, -1)
        blk = B.block(i)
        parts.append(blk[j1, j2] + blk[j2, j1])
    return np.concatenate(parts) if parts else np.empty(0)


def _sym_sqrt(K: np.ndarray, clamp: float = 1e-12):
    w, Q = np.linalg.eigh(K)
    wmax = max(float(w.max(initial=0.0)), 0.0)
    keep = w > clamp * wmax
    root = np.where(keep, np.sqrt(np.where(keep, w, 1.0)), 0.0)
    inv_root = np.where(keep, 1.0 / np.where(keep, root, 1.0), 0.0)
    half = (Q * root) @ Q.T
    half = 0.5 * (half + half.T)
    return half, Q, inv_root


def fpca(fit: CovarianceFit, gram_matrix: GramMatrix | np.ndarray, mean: MeanFit | None = None,
         truncate_negative: bool = False, rtol: float = 1e-10) -> FpcaResult:
    """Spectral decomposition of the smoothed tensor.

    Eigendecomposes ``K^{1/2} (B - a a^T) K^{1/2}`` (the rank-one term only
    when a mean is given for a second-moment fit) and maps eigenvectors
    back through the pseudo-inverse of ``K^{1/2}``, so that ``U^T K U = I``.
    Eigenpairs with ``|lambda| <= rtol * max|lambda|`` are dropped, as are
    negative ones when ``truncate_negative`` is set. Eigenvalues are sorted
    descending; each eigenvector's largest-magnitude entry is made positive.
    """
    K = np.asarray(getattr(gram_matrix, "values", gram_matrix), dtype=float)
    lay = fit.B.layout
    if K.shape != (lay.R, lay.R):
        raise ValueError(f"Gram shape {K.shape} does not match the fit (R={lay.R})")
    half, Q, inv_root = _sym_sqrt(K)

    HB = np.empty_like(half)
    for i in range(lay.n):
        s = lay.slice(i)
        HB[:, s] = half[:, s] @ fit.B.block(i)
    M = HB @ half
    if mean is not None and fit.mode is FitMode.SECOND_MOMENT:
        ha = half @ mean.coefficients
        M -= np.multiply.outer(ha, ha)
    M = 0.5 * (M + M.T)

    lam, V = np.linalg.eigh(M)
    scale = float(np.max(np.abs(lam), initial=0.0))
    keep = np.abs(lam) > rtol * scale if scale > 0 else np.zeros(lam.shape, bool)
    if truncate_negative:
        keep &= lam > 0
    idx = np.flatnonzero(keep)
    # descending by value; stable sort keeps original index order on ties
    idx = idx[np.argsort(-lam[idx], kind="stable")]
    lam, V = lam[idx], V[:, idx]
    if V.size:
        mag = np.abs(V)
        pivot = np.argmax(mag >= mag.max(axis=0) * (1 - 1e-12), axis=0)
        signs = np.sign(V[pivot, np.arange(V.shape[1])])
        V = V * signs
    U = Q @ (inv_root[:, None] * (Q.T @ V))
    return FpcaResult(lam, U)
