import numpy as np
import pytest

from conftest import random_projector, random_spd
from trek import SolverConfig, SolveStatus, rek_solve
from trek.oracle import dense_restricted_solve
from trek.rek import quadratic_objective


def plain_cg(S, b, iters):
    """Textbook CG; returns the iterate after each step."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    out = []
    for _ in range(iters):
        Sp = S @ p
        a = rr / (p @ Sp)
        x = x + a * p
        r = r - a * Sp
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        out.append(x.copy())
    return out


def test_scalar_system():
    x, rep = rek_solve(np.array([[2.0]]), None, np.array([4.0]))
    assert x[0] == pytest.approx(2.0)
    assert rep.iterations == 1 and rep.converged


def test_zero_rhs_short_circuits():
    x, rep = rek_solve(np.eye(3), None, np.zeros(3))
    assert rep.iterations == 0 and rep.status is SolveStatus.CONVERGED
    assert rep.residual_trace == [0.0]
    assert not x.any()


def test_projected_coordinate():
    S = np.array([[2.0, 1.0], [1.0, 3.0]])
    P = np.diag([1.0, 0.0])
    x, rep = rek_solve(S, P, np.array([1.0, 1.0]))
    assert x == pytest.approx([0.5, 0.0])
    assert rep.iterations == 1


def test_restricted_matches_dense(rng):
    for _ in range(20):
        N = int(rng.integers(3, 15))
        S = random_spd(rng, N, 50.0)
        P = random_projector(rng, N, int(rng.integers(1, N + 1)))
        b = rng.standard_normal(N)
        x, rep = rek_solve(S, P, b, config=SolverConfig(tol=1e-26))
        ref = dense_restricted_solve(S, P, b)
        assert rep.converged
        assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)
        assert np.allclose(P @ x, x, atol=1e-12)


def test_x0_is_projected(rng):
    S = random_spd(rng, 6)
    P = random_projector(rng, 6, 3)
    b = rng.standard_normal(6)
    x, _ = rek_solve(S, P, b, x0=rng.standard_normal(6), config=SolverConfig(tol=1e-26))
    assert np.allclose(x, dense_restricted_solve(S, P, b), atol=1e-10)
    with pytest.raises(ValueError):
        rek_solve(S, P, b, x0=np.zeros(5))


def test_operator_forms_agree(rng):
    S = random_spd(rng, 8)
    b = rng.standard_normal(8)

    class Op:
        def matvec(self, v):
            return S @ v

    xs = [rek_solve(form, None, b)[0] for form in (S, Op(), lambda v: S @ v)]
    assert np.array_equal(xs[0], xs[1]) and np.array_equal(xs[1], xs[2])


def test_trace_and_tolerance(rng):
    S = random_spd(rng, 30, 1e3)
    b = rng.standard_normal(30)
    _, rep = rek_solve(S, None, b, config=SolverConfig(tol=1e-12))
    assert len(rep.residual_trace) == rep.iterations + 1
    assert rep.residual_trace[-1] < 1e-12
    _, rep = rek_solve(S, None, b, config=SolverConfig(tol=1e-30, maxiter=3))
    assert rep.status is SolveStatus.MAX_ITER and rep.iterations == 3


def test_relative_tolerance(rng):
    S = random_spd(rng, 10)
    b = 1e6 * rng.standard_normal(10)
    _, rep = rek_solve(S, None, b, config=SolverConfig(tol=1e-20, relative=True))
    assert rep.residual_trace[-1] < 1e-20 * rep.residual_trace[0]


def test_non_positive_curvature():
    S = np.diag([1.0, -1.0])
    _, rep = rek_solve(S, None, np.array([0.0, 1.0]))
    assert rep.status is SolveStatus.NON_POSITIVE_CURVATURE


def test_divergence_keeps_last_finite_iterate():
    def nan_op(v):
        return np.full_like(v, np.nan)

    x, rep = rek_solve(nan_op, None, np.ones(3))
    assert rep.status is SolveStatus.DIVERGED
    assert np.all(np.isfinite(x))


def test_singular_operator_breaks_down():
    # linear kernel, no ridge: the restricted operator has rank one
    from trek import BlockDiagMatrix, LazyKhatriOperator, LinearKernel, diag_elim, gram
    from trek.simulate import ProcessSpec, sample_dataset
    from trek.smoother import _DiagElimProjector

    data = sample_dataset(ProcessSpec("bb", 0.3, 20, 100, seed=1))
    op = LazyKhatriOperator(gram(LinearKernel(), data.layout, data.locations), 0.0)
    rhs = diag_elim(BlockDiagMatrix.outer(data.layout, data.y), inplace=True)
    x, rep = rek_solve(op, _DiagElimProjector(data.layout), rhs.data,
                       config=SolverConfig(maxiter=30))
    assert rep.status in (SolveStatus.DIVERGED, SolveStatus.NON_POSITIVE_CURVATURE)
    assert rep.iterations <= 10
    assert np.all(np.isfinite(x))


def test_config_validation():
    for kw in ({"tol": 0}, {"maxiter": 0}, {"maxiter": 1.5}, {"divergence_cap": -1}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_identity_projector_matches_plain_cg(rng):
    for _ in range(10):
        N = int(rng.integers(5, 51))
        S = random_spd(rng, N, 1e2)
        b = rng.standard_normal(N)
        seen = []
        rek_solve(S, None, b, config=SolverConfig(tol=1e-28, maxiter=N),
                  callback=lambda k, x, r, p: k and seen.append(x.copy()))
        ref = plain_cg(S, b, len(seen))
        for a, c in zip(seen, ref):
            assert np.max(np.abs(a - c)) <= 1e-10


def test_cg_invariants(rng):
    for _ in range(10):
        N = int(rng.integers(4, 13))
        S = random_spd(rng, N, 20.0)
        q = int(rng.integers(2, N + 1))
        P = random_projector(rng, N, q)
        b = rng.standard_normal(N)
        rs, ps, phis = [], [], []

        def cb(k, x, r, p):
            rs.append(r.copy())
            ps.append(p.copy())
            phis.append(quadratic_objective(S, b, x))

        rek_solve(S, P, b, config=SolverConfig(tol=1e-24), callback=cb)
        r0 = rs[0] @ rs[0]
        # at most rank(P) directions exist in exact arithmetic; any later step
        # moves along rounding noise after termination
        used = ps[:-1][:q]
        for i in range(len(rs)):
            for j in range(i):
                assert abs(rs[i] @ P @ rs[j]) <= 1e-8 * r0
        for i in range(len(used)):
            for j in range(i):
                denom = np.sqrt((used[i] @ S @ used[i]) * (used[j] @ S @ used[j]))
                assert abs(used[i] @ S @ used[j]) <= 1e-8 * denom
        assert all(b2 <= a2 + 1e-12 * max(1.0, abs(a2)) for a2, b2 in zip(phis, phis[1:]))
