"""Dense brute-force references for tests.

Everything here materializes the matrices the main path avoids, so each
entry point carries a hard size guard. Not imported by ``trek``.
"""

import numpy as np
import scipy.linalg

from .blockops import BlockLayout

MAX_R_ODOT = 400
MAX_DENSE_N = 2000


class OracleSizeError(ValueError):
    pass


def effective_index(j1: int, j2: int) -> int:
    """1-based position of the pair ``j1 < j2`` (1-based) within its block."""
    if not 1 <= j1 < j2:
        raise ValueError(f"need 1 <= j1 < j2, got ({j1}, {j2})")
    return j1 + (j2 - 1) * (j2 - 2) // 2


def vec_index(j1: int, j2: int, r: int) -> int:
    """1-based column-major position of entry ``(j1, j2)`` in an ``r x r`` block."""
    return j1 + (j2 - 1) * r


def build_elimination(r: int) -> np.ndarray:
    """Elimination matrix ``E`` of shape ``(r(r-1)/2, r^2)``."""
    if r < 2:
        raise ValueError(f"elimination needs r >= 2, got {r}")
    E = np.zeros((r * (r - 1) // 2, r * r))
    for j2 in range(1, r + 1):
        for j1 in range(1, j2):
            row = effective_index(j1, j2) - 1
            E[row, vec_index(j1, j2, r) - 1] = 1.0
            E[row, vec_index(j2, j1, r) - 1] = 1.0
    return E


def elimination_projector(r: int) -> np.ndarray:
    """``E^T E / 2``, the orthogonal projector onto the duplication range."""
    E = build_elimination(r)
    return E.T @ E / 2


def _values_layout(K, layout):
    values = np.asarray(getattr(K, "values", K), dtype=float)
    layout = layout if layout is not None else getattr(K, "layout", None)
    if layout is None:
        raise ValueError("layout is required for a plain Gram array")
    if values.shape != (layout.R, layout.R):
        raise ValueError("Gram shape does not match the layout")
    return values, layout


def dense_khatri(K, layout: BlockLayout | None = None, S=None) -> np.ndarray:
    """Block-wise Kronecker product ``[K_{ab} kron S_{ab}]`` (``S`` defaults to ``K``)."""
    Kv, layout = _values_layout(K, layout)
    Sv = Kv if S is None else _values_layout(S, layout)[0]
    if layout.R_odot > MAX_R_ODOT:
        raise OracleSizeError(f"R_odot={layout.R_odot} exceeds the oracle guard {MAX_R_ODOT}")
    out = np.zeros((layout.R_odot, layout.R_odot))
    for a in range(layout.n):
        for b in range(layout.n):
            sa, sb = layout.slice(a), layout.slice(b)
            out[layout.bslice(a), layout.bslice(b)] = np.kron(Kv[sa, sb], Sv[sa, sb])
    return out


def block_elimination(layout: BlockLayout) -> np.ndarray:
    """``diag[E_1, ..., E_n]`` of shape ``(L, R_odot)``."""
    out = np.zeros((layout.L, layout.R_odot))
    row = 0
    for i, ri in enumerate(layout.r):
        li = ri * (ri - 1) // 2
        out[row:row + li, layout.bslice(i)] = build_elimination(ri)
        row += li
    return out


def effective_system(K, eta: float, y, layout: BlockLayout | None = None):
    """Matrix ``K_eff + eta/2 I`` and right-hand side ``y_eff``."""
    Kv, layout = _values_layout(K, layout)
    y = np.asarray(y, dtype=float)
    E = block_elimination(layout)
    KK = dense_khatri(Kv, layout)
    A = E @ KK @ E.T / 4 + eta / 2 * np.eye(layout.L)
    yy = np.concatenate([np.kron(y[layout.slice(i)], y[layout.slice(i)]) for i in range(layout.n)])
    rhs = E @ yy / 2
    return A, rhs


def dense_solve_effective(K, eta: float, y, layout: BlockLayout | None = None) -> np.ndarray:
    """Direct solve of the effective normal equations, length ``L``."""
    A, rhs = effective_system(K, eta, y, layout)
    try:
        return scipy.linalg.solve(A, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError(f"effective system is singular: {exc}") from exc


def dense_restricted_solve(S: np.ndarray, P: np.ndarray, b) -> np.ndarray:
    """Minimizer of ``x^T S x / 2 - b^T x`` over ``range(P)`` for a projector matrix ``P``."""
    S = np.asarray(S, float)
    if S.shape[0] > MAX_DENSE_N:
        raise OracleSizeError("system too large for the dense oracle")
    w, Q = np.linalg.eigh(np.asarray(P, float))
    C = Q[:, w > 0.5]
    y = np.linalg.solve(C.T @ S @ C, C.T @ np.asarray(b, float))
    return C @ y


def explicit_surface(a_eff, layout: BlockLayout, f1, f2) -> float:
    """``Gamma(z1, z2)`` as the explicit symmetrized double sum over effective coefficients.

    ``f1``, ``f2`` are frame vectors ``[K(z, X_ij)]`` of length ``R``.
    """
    total = 0.0
    pos = 0
    for i, ri in enumerate(layout.r):
        s = int(layout.offsets[i])
        for j2 in range(1, ri + 1):
            for j1 in range(1, j2):
                a = a_eff[pos + effective_index(j1, j2) - 1]
                k1, k2 = s + j1 - 1, s + j2 - 1
                total += a * (f1[k1] * f2[k2] + f1[k2] * f2[k1]) / 2
        pos += ri * (ri - 1) // 2
    return total
