import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trek import (
    BlockDiagMatrix,
    BlockLayout,
    LazyKhatriOperator,
    diag_elim,
    frobenius_dot,
    lazy_khatri_apply,
    odmat,
    odvec,
    offdiag_project,
)
from trek.blockops import LayoutMismatch
from trek.oracle import dense_khatri, elimination_projector


def _sym_random(rng, layout):
    blocks = []
    for ri in layout.r:
        a = rng.standard_normal((ri, ri))
        blocks.append(a + a.T)
    return BlockDiagMatrix.from_blocks(blocks, symmetric=True)


def test_layout_derived_quantities():
    lay = BlockLayout((2, 3, 1))
    assert (lay.n, lay.R, lay.R_odot, lay.L) == (3, 6, 14, 4)
    assert lay.l == (1, 3, 0)
    assert list(lay.offsets) == [0, 2, 5, 6]
    assert list(lay.boffsets) == [0, 4, 13, 14]
    assert list(lay.diag_index) == [0, 3, 4, 8, 12, 13]
    with pytest.raises(ValueError):
        BlockLayout((2, 0))


def test_odvec_column_major():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    B = BlockDiagMatrix.from_blocks([[[a, c], [b, d]]])
    assert list(odvec(B)) == [a, b, c, d]
    x, p, q, r, s = 5.0, 6.0, 7.0, 8.0, 9.0
    B = BlockDiagMatrix.from_blocks([[[x]], [[p, r], [q, s]]])
    assert list(odvec(B)) == [x, p, q, r, s]


def test_odmat_inverse(rng):
    lay = BlockLayout((3, 1, 4))
    v = rng.standard_normal(lay.R_odot)
    assert np.array_equal(odvec(odmat(v, lay)), v)
    B = _sym_random(rng, lay)
    assert np.array_equal(odmat(odvec(B), lay).to_dense(), B.to_dense())
    with pytest.raises(LayoutMismatch):
        odmat(v[:-1], lay)


def test_identity_gram_is_identity(rng):
    lay = BlockLayout((2, 3))
    op = LazyKhatriOperator(np.eye(lay.R), 0.0, layout=lay)
    B = BlockDiagMatrix(lay, rng.standard_normal(lay.R_odot))
    assert np.array_equal(lazy_khatri_apply(op, B).data, B.data)


def test_scalar_blocks_hadamard():
    a, b, d, x, y, eta = 1.5, -0.4, 2.0, 0.7, -1.1, 0.3
    lay = BlockLayout((1, 1))
    op = LazyKhatriOperator(np.array([[a, b], [b, d]]), eta, layout=lay)
    C = lazy_khatri_apply(op, BlockDiagMatrix(lay, [x, y], symmetric=True))
    expected = [eta * x + a * a * x + b * b * y, eta * y + b * b * x + d * d * y]
    assert np.allclose(C.data, expected, rtol=0, atol=1e-15)


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_matches_dense_khatri(rng, backend):
    for _ in range(30):
        lay = BlockLayout(tuple(rng.integers(1, 5, rng.integers(1, 4))))
        A = rng.standard_normal((lay.R, lay.R))
        K = A @ A.T
        eta = float(rng.uniform(0, 1))
        op = LazyKhatriOperator(K, eta, layout=lay, backend=backend)
        v = rng.standard_normal(lay.R_odot)
        dense = (dense_khatri(K, lay) + eta * np.eye(lay.R_odot)) @ v
        assert np.max(np.abs(op.matvec(v) - dense)) <= 1e-12 * max(1.0, np.abs(dense).max())


def test_layout_mismatch(small_gram):
    op = LazyKhatriOperator(small_gram, 0.1)
    with pytest.raises(LayoutMismatch):
        lazy_khatri_apply(op, BlockDiagMatrix.zeros(BlockLayout((2, 3, 3))))
    with pytest.raises(LayoutMismatch):
        frobenius_dot(BlockDiagMatrix.zeros(BlockLayout((2,))), BlockDiagMatrix.zeros(BlockLayout((3,))))
    with pytest.raises(ValueError):
        LazyKhatriOperator(small_gram, -1.0)


def test_adjoint_and_psd(rng, small_gram):
    lay = small_gram.layout
    eta = 0.2
    op = LazyKhatriOperator(small_gram, eta)
    for _ in range(20):
        A = BlockDiagMatrix(lay, rng.standard_normal(lay.R_odot))
        B = BlockDiagMatrix(lay, rng.standard_normal(lay.R_odot))
        lhs = frobenius_dot(lazy_khatri_apply(op, A), B)
        rhs = frobenius_dot(A, lazy_khatri_apply(op, B))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)
        S = _sym_random(rng, lay)
        assert frobenius_dot(lazy_khatri_apply(op, S), S) >= eta * frobenius_dot(S, S) - 1e-10


def test_symmetry_preserved_exactly(rng, small_gram):
    op = LazyKhatriOperator(small_gram, 0.05)
    C = lazy_khatri_apply(op, _sym_random(rng, small_gram.layout))
    assert C.symmetric
    assert C.max_asymmetry() == 0.0


def test_diag_elim_examples():
    B = BlockDiagMatrix.from_blocks([[[1.0, 2.0], [3.0, 4.0]]])
    assert diag_elim(B).block(0).tolist() == [[0.0, 2.0], [3.0, 0.0]]
    assert B.block(0)[0, 0] == 1.0
    Z = BlockDiagMatrix.zeros(BlockLayout((3, 2)))
    assert not diag_elim(Z).data.any()


def test_diag_elim_inplace_no_copy(rng):
    lay = BlockLayout((3, 4))
    B = BlockDiagMatrix(lay, rng.standard_normal(lay.R_odot))
    buf = B.data
    out = diag_elim(B, inplace=True)
    assert out is B and out.data is buf
    assert not B.data[lay.diag_index].any()


def test_projection_properties(rng):
    lay = BlockLayout((2, 4, 3))
    S = _sym_random(rng, lay)
    once = diag_elim(S)
    assert np.array_equal(diag_elim(once).data, once.data)
    T = _sym_random(rng, lay)
    assert frobenius_dot(diag_elim(S), T) == pytest.approx(frobenius_dot(S, diag_elim(T)), rel=1e-14)
    # on symmetric input the cheap path equals the averaging projection
    assert np.allclose(diag_elim(S).data, offdiag_project(S).data, atol=0)


def test_general_projection_matches_elimination_matrices(rng):
    for r in (2, 3, 4):
        B = BlockDiagMatrix(BlockLayout((r,)), rng.standard_normal(r * r))
        expected = elimination_projector(r) @ B.data
        assert np.max(np.abs(offdiag_project(B).data - expected)) <= 1e-14


def test_frobenius_examples(rng):
    lay = BlockLayout((2, 3))
    eye = BlockDiagMatrix.from_blocks([np.eye(2), np.eye(3)])
    assert frobenius_dot(eye, eye) == 5.0
    A = BlockDiagMatrix.from_blocks([[[0.0, 1.0], [-1.0, 0.0]]])
    assert frobenius_dot(A, BlockDiagMatrix.from_blocks([np.eye(2)])) == 0.0
    X = BlockDiagMatrix(lay, rng.standard_normal(lay.R_odot))
    Y = BlockDiagMatrix(lay, rng.standard_normal(lay.R_odot))
    trace = sum(np.trace(a.T @ b) for a, b in zip(X.blocks, Y.blocks))
    assert frobenius_dot(X, Y) == pytest.approx(trace, rel=1e-15)


def test_second_vectorization_trick(rng):
    lay = BlockLayout((3, 2, 4))
    B = BlockDiagMatrix(lay, rng.standard_normal(lay.R_odot))
    x = rng.standard_normal(lay.R)
    y = rng.standard_normal(lay.R)
    stacked = np.concatenate([np.kron(x[lay.slice(i)], y[lay.slice(i)]) for i in range(lay.n)])
    quad = y @ B.to_dense() @ x
    assert odvec(B) @ stacked == pytest.approx(quad, rel=1e-12)


def test_lazy_symmetry_check_raises():
    lay = BlockLayout((2,))
    op = LazyKhatriOperator(np.eye(2), 0.0, layout=lay)
    lying = BlockDiagMatrix(lay, [0.0, 1.0, 5.0, 0.0], symmetric=True)
    with pytest.raises(FloatingPointError):
        lazy_khatri_apply(op, lying)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.integers(0, 2**32 - 1))
def test_backends_agree_property(r, seed):
    rng = np.random.default_rng(seed)
    lay = BlockLayout(tuple(r))
    A = rng.standard_normal((lay.R, lay.R))
    K = A @ A.T
    v = rng.standard_normal(lay.R_odot)
    py = LazyKhatriOperator(K, 0.1, layout=lay, backend="python").matvec(v)
    cy = LazyKhatriOperator(K, 0.1, layout=lay, backend="cython").matvec(v)
    assert np.allclose(py, cy, rtol=1e-13, atol=1e-13)
