import numpy as np
import pytest

from dragkit.extractors import (
    ExtractorError,
    FeatureField,
    GaussianBlur,
    Identity,
    PooledBlur,
    build_extractor,
    fd_gradient_check,
)
from dragkit.flow import LatentField


def rand_latent(seed=0, c=2, n=16) -> LatentField:
    rng = np.random.default_rng(seed)
    return LatentField(rng.standard_normal((c, n, n)))


ALL = [Identity(), GaussianBlur(1.5), PooledBlur(2, 1.0), PooledBlur(4, 0.5)]


def test_identity_extract_is_input():
    z = rand_latent(0)
    assert np.array_equal(Identity().extract(z).data, z.data)


def test_identity_adjoint_is_gradient():
    z = rand_latent(1)
    g = FeatureField(np.ones_like(z.data))
    assert np.array_equal(Identity().adjoint(g, z).data, g.data)


def test_blur_preserves_constants():
    z = LatentField.full(1, 16, 16, 3.25)
    out = GaussianBlur(2.0).extract(z)
    assert np.allclose(out.data, 3.25, atol=1e-12)


def test_pooled_preserves_mean():
    z = rand_latent(2)
    out = PooledBlur(2, 1.0).extract(z)
    assert abs(out.data.mean() - z.data.mean()) <= 1e-9


def test_pooled_output_shape():
    z = rand_latent(3, n=16)
    out = PooledBlur(2, 1.0).extract(z)
    assert out.data.shape == (2, 8, 8)


def test_pooled_rejects_indivisible_grid():
    z = LatentField(np.zeros((1, 15, 16)))
    with pytest.raises(ExtractorError):
        PooledBlur(2, 1.0).extract(z)


def test_kernel_too_big_rejected():
    z = LatentField(np.zeros((1, 4, 4)))
    with pytest.raises(ExtractorError):
        GaussianBlur(3.0).extract(z)


@pytest.mark.parametrize("ex", ALL, ids=lambda e: e.descriptor.name)
def test_transpose_identity(ex):
    rng = np.random.default_rng(4)
    for _ in range(100):
        z = LatentField(rng.standard_normal((2, 32, 32)))
        f = ex.extract(z)
        g = FeatureField(rng.standard_normal(f.data.shape))
        lhs = float((g.data * f.data).sum())
        rhs = float((ex.adjoint(g, z).data * z.data).sum())
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@pytest.mark.parametrize("ex", ALL, ids=lambda e: e.descriptor.name)
def test_linearity(ex):
    rng = np.random.default_rng(5)
    z = LatentField(rng.standard_normal((2, 32, 32)))
    w = LatentField(rng.standard_normal((2, 32, 32)))
    a, b = 1.7, -0.4
    lhs = ex.extract(LatentField(a * z.data + b * w.data)).data
    rhs = a * ex.extract(z).data + b * ex.extract(w).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


@pytest.mark.parametrize("ex", ALL, ids=lambda e: e.descriptor.name)
def test_descriptor_honesty_via_adjoint_impulse(ex):
    # the receptive field of one feature cell is the support of the adjoint
    # of a unit impulse placed there
    z = LatentField(np.zeros((1, 32, 32)))
    f = ex.extract(z)
    g = np.zeros_like(f.data)
    cy, cx = f.data.shape[1] // 2, f.data.shape[2] // 2
    g[0, cy, cx] = 1.0
    back = ex.adjoint(FeatureField(g), z).data[0]
    ys, xs = np.nonzero(np.abs(back) > 1e-12)
    assert len(xs) > 0
    center_x, center_y = xs.mean(), ys.mean()
    radius = max(
        np.max(np.abs(xs - center_x)), np.max(np.abs(ys - center_y))
    )
    assert abs(radius - ex.descriptor.receptive_field_radius) <= 1.0


def test_build_extractor_specs():
    assert build_extractor("identity").descriptor.name == "identity"
    assert build_extractor({"name": "gaussian", "sigma": 1.0}).descriptor.stride == 1
    ex = build_extractor({"name": "pooled", "stride": 4, "sigma": 0.5})
    assert ex.descriptor.stride == 4
    with pytest.raises(ExtractorError):
        build_extractor({"name": "resnet"})


# --- finite-difference checking ------------------------------------------------


def quadratic_loss(ex, z):
    f = ex.extract(z)
    return 0.5 * float((f.data**2).sum()), ex.adjoint(f, z)


def test_fd_check_quadratic_identity():
    z = rand_latent(6)
    err = fd_gradient_check(Identity(), quadratic_loss, z, delta=1e-4)
    assert err <= 1e-6


def test_fd_check_quadratic_blur():
    z = rand_latent(7)
    err = fd_gradient_check(GaussianBlur(1.0), quadratic_loss, z, delta=1e-4)
    assert err <= 1e-6


def test_fd_check_zero_field_zero_gradient():
    z = LatentField.zeros(1, 16, 16)
    loss, grad = quadratic_loss(Identity(), z)
    assert loss == 0.0
    assert np.all(grad.data == 0.0)
    err = fd_gradient_check(Identity(), quadratic_loss, z, delta=1e-4)
    assert err == 0.0


def test_fd_check_rejects_bad_delta():
    with pytest.raises(ExtractorError):
        fd_gradient_check(Identity(), quadratic_loss, rand_latent(8), delta=0.0)
