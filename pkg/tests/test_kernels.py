import numpy as np
import pytest

from trek import (
    BlockLayout,
    GaussianKernel,
    LaplacianKernel,
    LinearKernel,
    PolynomialKernel,
    PrecomputedFrameKernel,
    eval_kernel,
    frame,
    gram,
    parse_kernel,
)
from trek.kernels import LocationError


def test_closed_forms():
    assert eval_kernel(GaussianKernel(2.0), 0.1, 0.4) == pytest.approx(np.exp(-2 * 0.09))
    assert eval_kernel(LaplacianKernel(3.0), 0.7, 0.2) == pytest.approx(np.exp(-1.5))
    assert eval_kernel(LinearKernel(), 0.3, 0.5) == pytest.approx(0.15)
    assert eval_kernel(PolynomialKernel(10, 0.2), 0.5, 0.5) == pytest.approx(0.45**10)


def test_precomputed_frame_kernel():
    k = PrecomputedFrameKernel(lambda z: np.stack([np.ones_like(z), z], 1), np.eye(2))
    assert k(2.0, 3.0) == pytest.approx(7.0)
    with pytest.raises(ValueError):
        PrecomputedFrameKernel(lambda z: z, np.array([[1.0, 2.0], [0.0, 1.0]]))


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_invalid_gamma(bad):
    with pytest.raises(ValueError):
        GaussianKernel(bad)
    with pytest.raises(ValueError):
        LaplacianKernel(bad)


def test_gram_is_exactly_symmetric(rng):
    lay = BlockLayout((3, 5, 2))
    locs = [rng.uniform(0, 1, ri) for ri in lay.r]
    for k in (GaussianKernel(7.0), LaplacianKernel(2.0), LinearKernel(), PolynomialKernel(3, 0.5)):
        G = gram(k, lay, locs)
        assert np.array_equal(G.values, G.values.T)
        x = np.concatenate(locs)
        assert np.allclose(G.values, k.pairwise(x, x), atol=1e-15)
        assert np.array_equal(G.block(1, 2), G.values[3:8, 8:10])


def test_gram_layout_mismatch_names_block():
    with pytest.raises(LocationError) as info:
        gram(GaussianKernel(1.0), BlockLayout((2, 3)), [[0.1, 0.2], [0.3]])
    assert info.value.block == 1


def test_frame_orientation(rng):
    lay = BlockLayout((2, 2))
    locs = [[0.1, 0.5], [0.2, 0.9]]
    z = np.linspace(0, 1, 7)
    F = frame(LaplacianKernel(1.5), lay, locs, z)
    assert F.shape == (4, 7)
    assert F[3, 2] == pytest.approx(np.exp(-1.5 * abs(z[2] - 0.9)))
    with pytest.raises(ValueError):
        frame(LinearKernel(), lay, locs, [])


@pytest.mark.parametrize("spec, cls", [("gaussian:200", GaussianKernel), ("laplacian:20", LaplacianKernel),
                                       ("linear", LinearKernel), ("poly:10:0.2", PolynomialKernel)])
def test_parse_kernel(spec, cls):
    assert isinstance(parse_kernel(spec), cls)


@pytest.mark.parametrize("spec", ["gauss", "gaussian", "gaussian:x", "linear:2", "poly"])
def test_parse_kernel_rejects(spec):
    with pytest.raises(ValueError):
        parse_kernel(spec)
