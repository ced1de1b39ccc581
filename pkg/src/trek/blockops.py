"""Block-diagonal matrices and the matricized Khatri-Rao operator.

A :class:`BlockDiagMatrix` keeps all of its blocks in one flat buffer laid
out exactly as its block-diagonal vectorization: block ``i`` is stored
column-major at ``layout.boffsets[i]``. ``odvec`` is therefore a copy of
the buffer and the Frobenius inner product is a flat dot product.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _backend

__all__ = [
    "BlockLayout",
    "BlockDiagMatrix",
    "LayoutMismatch",
    "LazyKhatriOperator",
    "lazy_khatri_apply",
    "diag_elim",
    "offdiag_project",
    "frobenius_dot",
    "odvec",
    "odmat",
]


class LayoutMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BlockLayout:
    """Partition ``r_1..r_n`` of the measurements and derived index data.

    Attributes
    ----------
    r : tuple of int
        Block sizes.
    offsets : ndarray
        ``n + 1`` row offsets into ``0..R``.
    boffsets : ndarray
        ``n + 1`` offsets into the flat (odvec) buffer of length ``R_odot``.
    diag_index : ndarray
        Flat buffer positions of every block diagonal entry.
    """

    r: tuple[int, ...]
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    boffsets: np.ndarray = field(init=False, repr=False, compare=False)
    diag_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = tuple(int(v) for v in self.r)
        if any(v < 1 for v in r):
            raise ValueError(f"block sizes must be >= 1, got {r}")
        object.__setattr__(self, "r", r)
        ra = np.asarray(r, dtype=np.intp)
        offsets = np.zeros(len(r) + 1, dtype=np.intp)
        np.cumsum(ra, out=offsets[1:])
        boffsets = np.zeros(len(r) + 1, dtype=np.intp)
        np.cumsum(ra * ra, out=boffsets[1:])
        diag = [boffsets[i] + np.arange(ri) * (ri + 1) for i, ri in enumerate(r)]
        diag_index = np.concatenate(diag).astype(np.intp) if diag else np.empty(0, np.intp)
        for a in (offsets, boffsets, diag_index):
            a.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "boffsets", boffsets)
        object.__setattr__(self, "diag_index", diag_index)

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def R(self) -> int:
        return int(self.offsets[-1])

    @property
    def R_odot(self) -> int:
        return int(self.boffsets[-1])

    @property
    def l(self) -> tuple[int, ...]:
        return tuple(v * (v - 1) // 2 for v in self.r)

    @property
    def L(self) -> int:
        return sum(self.l)

    @property
    def r_max(self) -> int:
        return max(self.r, default=0)

    def slice(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def bslice(self, i: int) -> slice:
        return slice(int(self.boffsets[i]), int(self.boffsets[i + 1]))

    def index(self, i: int, j: int) -> int:
        """Flat row index of measurement ``j`` of block ``i`` (0-based)."""
        return int(self.offsets[i]) + j

    @classmethod
    def uniform(cls, n: int, r: int) -> "BlockLayout":
        return cls((r,) * n)


class BlockDiagMatrix:
    """``n`` square blocks ``B_i`` of a block-diagonal ``R x R`` matrix.

    ``symmetric`` is a structural flag: operations that preserve symmetry
    propagate it, and the caller is trusted when constructing.
    """

    __slots__ = ("layout", "data", "symmetric")

    def __init__(self, layout: BlockLayout, data=None, symmetric: bool = False):
        if data is None:
            data = np.zeros(layout.R_odot)
        else:
            data = np.ascontiguousarray(data, dtype=float)
            if data.shape != (layout.R_odot,):
                raise LayoutMismatch(
                    f"flat data has shape {data.shape}, layout needs ({layout.R_odot},)"
                )
        self.layout = layout
        self.data = data
        self.symmetric = symmetric

    @classmethod
    def zeros(cls, layout: BlockLayout) -> "BlockDiagMatrix":
        return cls(layout, symmetric=True)

    @classmethod
    def from_blocks(cls, blocks: Sequence, symmetric: bool | None = None) -> "BlockDiagMatrix":
        blocks = [np.asarray(b, dtype=float) for b in blocks]
        for i, b in enumerate(blocks):
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise LayoutMismatch(f"block {i} is not square: shape {b.shape}")
        layout = BlockLayout(tuple(b.shape[0] for b in blocks))
        data = np.concatenate([b.ravel(order="F") for b in blocks]) if blocks else np.empty(0)
        if symmetric is None:
            symmetric = all(np.array_equal(b, b.T) for b in blocks)
        return cls(layout, data, symmetric)

    @classmethod
    def outer(cls, layout: BlockLayout, y) -> "BlockDiagMatrix":
        """``diag[y_i y_i^T]`` for a flat vector ``y`` of length ``R``."""
        y = np.asarray(y, dtype=float)
        if y.shape != (layout.R,):
            raise LayoutMismatch(f"vector has shape {y.shape}, layout needs ({layout.R},)")
        out = cls(layout, symmetric=True)
        for i in range(layout.n):
            yi = y[layout.slice(i)]
            out.block(i)[...] = np.multiply.outer(yi, yi)
        return out

    def block(self, i: int) -> np.ndarray:
        """Writable ``r_i x r_i`` view of block ``i``."""
        ri = self.layout.r[i]
        return self.data[self.layout.bslice(i)].reshape((ri, ri), order="F")

    @property
    def blocks(self) -> list[np.ndarray]:
        return [self.block(i) for i in range(self.layout.n)]

    def copy(self) -> "BlockDiagMatrix":
        return BlockDiagMatrix(self.layout, self.data.copy(), self.symmetric)

    def to_dense(self) -> np.ndarray:
        R = self.layout.R
        out = np.zeros((R, R))
        for i in range(self.layout.n):
            s = self.layout.slice(i)
            out[s, s] = self.block(i)
        return out

    def max_asymmetry(self) -> float:
        return max((float(np.max(np.abs(b - b.T))) for b in self.blocks), default=0.0)

    def __repr__(self):
        return f"BlockDiagMatrix(r={self.layout.r}, symmetric={self.symmetric})"


def _check_same(a: BlockLayout, b: BlockLayout):
    if a != b:
        raise LayoutMismatch(f"layouts differ: {a.r} vs {b.r}")


class LazyKhatriOperator:
    """``B -> odmat((K (.) K + eta I) odvec(B))`` without forming ``K (.) K``.

    Holds a reference to the Gram values and one ``r_max x R`` scratch
    buffer reused across applications.

    Parameters
    ----------
    gram : GramMatrix or ndarray
        Symmetric ``R x R`` Gram matrix.
    eta : float
        Ridge added on the diagonal, ``eta >= 0``.
    layout : BlockLayout, optional
        Required when ``gram`` is a plain array.
    backend : {"cython", "python"}, optional
        Kernel implementation; defaults to the one selected at import.
    """

    def __init__(self, gram, eta: float = 0.0, layout: BlockLayout | None = None, backend=None):
        if eta < 0:
            raise ValueError(f"eta must be >= 0, got {eta}")
        values = getattr(gram, "values", gram)
        if layout is None:
            layout = getattr(gram, "layout", None)
            if layout is None:
                raise ValueError("layout is required when gram is a plain array")
        values = np.ascontiguousarray(values, dtype=float)
        if values.shape != (layout.R, layout.R):
            raise LayoutMismatch(f"Gram shape {values.shape} does not match layout R={layout.R}")
        self.values = values
        self.layout = layout
        self.eta = float(eta)
        self._kernels = _backend.get_kernels(backend)
        self.backend = "python" if self._kernels is _backend.python_kernels else "cython"
        self._scratch = np.empty(layout.r_max * layout.R)

    @property
    def shape(self):
        return (self.layout.R_odot, self.layout.R_odot)

    def apply_into(self, v: np.ndarray, out: np.ndarray, symmetrize: bool = True) -> np.ndarray:
        """Flat-buffer application; ``out`` must not alias ``v``."""
        lay = self.layout
        self._kernels.khatri_apply(
            self.values, v, lay.offsets, lay.boffsets, self.eta, out, self._scratch, symmetrize
        )
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """General (unsymmetrized) application to an odvec vector."""
        v = np.ascontiguousarray(v, dtype=float)
        return self.apply_into(v, np.empty_like(v), symmetrize=False)

    def __call__(self, B: BlockDiagMatrix) -> BlockDiagMatrix:
        return lazy_khatri_apply(self, B)


def lazy_khatri_apply(op: LazyKhatriOperator, B: BlockDiagMatrix,
                      symmetry_rtol: float = 1e-13) -> BlockDiagMatrix:
    """Blocks ``C_i = eta B_i + sum_{i'} K_{ii'} B_{i'} K_{ii'}^T``.

    For symmetric ``B`` the raw output is checked to be symmetric to
    ``symmetry_rtol`` relative to its largest entry and then symmetrized
    exactly.
    """
    _check_same(op.layout, B.layout)
    out = BlockDiagMatrix(B.layout, np.empty_like(B.data), symmetric=B.symmetric)
    op.apply_into(B.data, out.data, symmetrize=False)
    if B.symmetric:
        scale = float(np.max(np.abs(out.data), initial=0.0))
        asym = out.max_asymmetry()
        if asym > symmetry_rtol * scale:
            raise FloatingPointError(
                f"Khatri-Rao output asymmetry {asym:.3e} exceeds {symmetry_rtol:g} x {scale:.3e}"
            )
        for blk in out.blocks:
            blk += blk.T
            blk *= 0.5
    return out


def diag_elim(B: BlockDiagMatrix, inplace: bool = False) -> BlockDiagMatrix:
    """Zero the diagonal of every block.

    For symmetric ``B`` this is the orthogonal projection onto the range of
    the duplication matrices. With ``inplace=True`` nothing is allocated.
    """
    out = B if inplace else B.copy()
    _backend.kernels.zero_diagonals(out.data, B.layout.diag_index)
    return out


def offdiag_project(B: BlockDiagMatrix) -> BlockDiagMatrix:
    """Orthogonal projection for general blocks: symmetrize, then zero diagonals."""
    out = BlockDiagMatrix(B.layout, np.empty_like(B.data), symmetric=True)
    for src, dst in zip(B.blocks, out.blocks):
        np.add(src, src.T, out=dst)
        dst *= 0.5
        np.fill_diagonal(dst, 0.0)
    return out


def frobenius_dot(A: BlockDiagMatrix, B: BlockDiagMatrix) -> float:
    """``sum_i trace(A_i^T B_i)``."""
    _check_same(A.layout, B.layout)
    return float(np.dot(A.data, B.data))


def odvec(B: BlockDiagMatrix) -> np.ndarray:
    """Stack the column-major vectorizations of the diagonal blocks."""
    return B.data.copy()


def odmat(v, layout: BlockLayout, symmetric: bool = False) -> BlockDiagMatrix:
    """Inverse of :func:`odvec`."""
    v = np.asarray(v, dtype=float)
    if v.shape != (layout.R_odot,):
        raise LayoutMismatch(f"vector has length {v.size}, layout needs {layout.R_odot}")
    return BlockDiagMatrix(layout, v.copy(), symmetric=symmetric)
