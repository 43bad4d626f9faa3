import numpy as np
import pytest

from achronal.minkowski import PoincareElement, apply_lorentz, boost_z, rotation
from achronal.surfaces import (BumpSurface, ConeSurface, FlatSurface,
                               FoldOverError, SampledSurface, SurfaceDomainError,
                               TiltedSurface, flatten, is_spacelike_cauchy,
                               surface_from_descriptor, transform_gradient_data,
                               transform_surface)


def test_flat_closed_forms():
    f = FlatSurface(0.0)
    x = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    assert np.all(f.tau(x) == 0.0)
    assert np.all(f.gradient(x) == 0.0)
    assert f.lipschitz_bound == 0.0


def test_tilted_closed_forms():
    t = TiltedSurface((0, 0, 0.5))
    x = np.array([1.0, -2.0, 4.0])
    assert t.tau(x) == pytest.approx(2.0)
    assert np.allclose(t.gradient(x), [0, 0, 0.5], atol=0)
    with pytest.raises(ValueError):
        TiltedSurface((1.0, 0.5, 0.0))


def test_bump_slope_below_amplitude():
    b = BumpSurface(0.6, 2.0)
    rng = np.random.default_rng(0)
    x = rng.uniform(-20, 20, (200, 3))
    g = b.gradient(x)
    assert np.linalg.norm(g, axis=1).max() < 0.6
    assert b.tau(np.zeros((1, 3)))[0] == 0.0


def test_cone_gradient_and_apex_flag():
    c = ConeSurface(0.8)
    g = c.gradient(np.array([1.0, 0, 0]))
    assert np.allclose(g, [0.8, 0, 0], atol=1e-15)
    grads, flags = c.gradient(np.array([[0.0, 0, 0], [0, 2.0, 0]]), with_flags=True)
    assert flags[0] and not flags[1]
    assert np.linalg.norm(grads[0]) <= 1.0


def test_flatten_laws():
    assert flatten(ConeSurface(1.0), 0.8).gamma == pytest.approx(0.8)
    assert flatten(FlatSurface(0.0), 0.0).t0 == 0.0
    assert flatten(TiltedSurface((0, 0, 0.5)), 1.0).e == (0, 0, 0.5)
    two_step = flatten(flatten(BumpSurface(0.9), 0.5), 0.4)
    assert two_step.amplitude == pytest.approx(0.9 * 0.2)
    with pytest.raises(ValueError):
        flatten(FlatSurface(0.0), 1.5)


def test_spacelike_cauchy_checks():
    assert is_spacelike_cauchy(FlatSurface(0.0))[0]
    assert is_spacelike_cauchy(TiltedSurface((0, 0, 0.5)))[0]
    assert is_spacelike_cauchy(BumpSurface(0.6))[0]
    ok, witness = is_spacelike_cauchy(ConeSurface(1.0))
    assert not ok and witness is not None
    assert is_spacelike_cauchy(ConeSurface(0.8))[0]


def test_sampled_surface_roundtrip_and_gradient_order():
    ax = np.linspace(-3, 3, 25)
    h = ax[1] - ax[0]
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    b = BumpSurface(0.6, 2.0)
    vals = b.tau(np.stack([X, Y, Z], axis=-1))
    s = SampledSurface(vals, (-3, -3, -3), h)
    pts = np.array([[0.1, -0.4, 0.8], [1.0, 1.0, -1.0]])
    assert np.abs(s.tau(pts) - b.tau(pts)).max() < 1e-2
    # second-order gradient convergence under refinement
    errs = []
    for n in (25, 49):
        axn = np.linspace(-3, 3, n)
        Xn, Yn, Zn = np.meshgrid(axn, axn, axn, indexing="ij")
        sn = SampledSurface(b.tau(np.stack([Xn, Yn, Zn], axis=-1)), (-3, -3, -3),
                            axn[1] - axn[0])
        errs.append(np.abs(sn.gradient(pts) - b.gradient(pts)).max())
    assert errs[1] < errs[0] / 3.0


def test_sampled_surface_validation():
    ax = np.linspace(-3, 3, 13)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    with pytest.raises(ValueError):
        SampledSurface(2.0 * np.abs(X), (-3, -3, -3), ax[1] - ax[0])
    # diagonal violations are caught too: slope 1 along both x1 and x2
    with pytest.raises(ValueError):
        SampledSurface(X + Y, (-3, -3, -3), ax[1] - ax[0])


def test_sampled_surface_domain_error():
    ax = np.linspace(-1, 1, 9)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    s = SampledSurface(0.0 * X, (-1, -1, -1), ax[1] - ax[0])
    with pytest.raises(SurfaceDomainError):
        s.tau(np.array([2.0, 0, 0]))


def test_descriptor_roundtrip():
    for s in (FlatSurface(0.3), TiltedSurface((0, 0.2, 0.5), 0.1),
              BumpSurface(0.6, 2.0), ConeSurface(0.8, (1, 0, 0), 0.2)):
        assert surface_from_descriptor(s.descriptor()) == s


def test_transform_identity():
    res = transform_surface(PoincareElement.identity(), BumpSurface(0.5))
    y = np.array([[0.3, -1.0, 2.0]])
    assert np.abs(res.s_inverse(y) - y).max() < 1e-12
    assert res.tau_g(y)[0] == pytest.approx(BumpSurface(0.5).tau(y)[0], abs=1e-12)
    assert res.jacobian_det(y)[0] == pytest.approx(1.0, abs=1e-12)


def test_flat_under_boost_closed_form():
    rho = 0.4
    g = PoincareElement.from_lorentz(boost_z(rho))
    res = transform_surface(g, FlatSurface(0.0))
    y = np.array([[0.5, 1.0, 2.0], [-1.0, 0.3, -0.7]])
    assert np.abs(res.tau_g(y) - np.tanh(rho) * y[:, 2]).max() < 1e-12
    assert res.jacobian_det(np.array([[1.0, 2.0, 3.0]]))[0] == \
        pytest.approx(np.cosh(rho), abs=1e-12)
    grad = res.gradient_g(y)
    assert np.abs(grad[:, 2] - np.tanh(rho)).max() < 1e-12
    assert np.abs(grad[:, :2]).max() < 1e-15


def test_gradient_identity_100_random():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        z = rng.uniform(-1, 1, 3)
        z *= rng.uniform(0, 0.999) / max(np.linalg.norm(z), 1e-12)
        L = boost_z(rng.uniform(-1, 1))
        grad, det = transform_gradient_data(L, z)
        lhs = np.concatenate([[1.0], grad])
        rhs = apply_lorentz(L, np.concatenate([[1.0], z])) / abs(det)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    assert worst < 1e-12


def test_gradient_identity_with_rotations():
    rng = np.random.default_rng(43)
    for _ in range(40):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        L = boost_z(rng.uniform(-1, 1)) @ rotation(axis, rng.uniform(0, 2 * np.pi))
        z = rng.uniform(-1, 1, 3)
        z *= rng.uniform(0, 0.99) / max(np.linalg.norm(z), 1e-12)
        grad, det = transform_gradient_data(L, z)
        lhs = np.concatenate([[1.0], grad])
        rhs = apply_lorentz(L, np.concatenate([[1.0], z])) / abs(det)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_newton_inversion_on_curved_surfaces():
    rng = np.random.default_rng(44)
    g = PoincareElement(np.array([0.2, -0.1, 0.4, 0.3]),
                        boost_z(0.5) @ rotation([0, 1, 0], 0.7))
    for surf in (BumpSurface(0.6, 2.0), ConeSurface(0.8, (0.5, 0, 0))):
        res = transform_surface(g, surf, domain_samples=rng.uniform(-3, 3, (40, 3)))
        pts = rng.uniform(-2, 2, (25, 3))
        ys = res.s_forward(pts)
        assert np.abs(res.s_inverse(ys) - pts).max() < 1e-9


def test_transformed_surface_stays_achronal():
    rng = np.random.default_rng(45)
    g = PoincareElement.from_lorentz(boost_z(0.6))
    res = transform_surface(g, BumpSurface(0.7, 1.5))
    y = rng.uniform(-4, 4, (50, 3))
    t = res.tau_g(y)
    dt = np.abs(t[:, None] - t[None, :])
    dx = np.linalg.norm(y[:, None, :] - y[None, :, :], axis=-1)
    assert np.all(dt <= dx + 1e-10)


def test_fold_over_on_invalid_input():
    # a non-achronal "surface" (slope > 1) breaks bijectivity of the graph map
    ax = np.linspace(-2, 2, 17)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    bad = SampledSurface(1.8 * np.abs(Z), (-2, -2, -2), ax[1] - ax[0],
                         validate=False)
    g = PoincareElement.from_lorentz(boost_z(0.8))
    res = transform_surface(g, bad)
    with pytest.raises((FoldOverError, SurfaceDomainError)):
        res.s_inverse(np.array([[0.0, 0.0, -1.0]]))
