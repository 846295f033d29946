import numpy as np
import pytest

from bislant.conn import (
    NotNormalError, PointGeometry, check_gauss_weingarten, christoffel_from_metric,
    shape_operator, weingarten_split,
)
from bislant.immersion import VectorField, sample_domain
from conftest import load_fixture


def test_flat_toy_has_no_curvature():
    spec = load_fixture("toy_flat.lps")
    geo = PointGeometry(spec, (0.2, -0.4))
    assert np.all(geo.second.sigma == 0.0) and np.all(geo.second.christoffel == 0.0)
    checks = check_gauss_weingarten(spec, [(0.2, -0.4), (0.5, 0.5)])
    assert all(c.passed for c in checks)
    assert max(c.residual for c in checks) == 0.0


def test_warped_christoffel_by_hand(ex62):
    # g = 3(dv^2 + dw^2) + (v^2 + w^2) du^2: nabla_dv du = v/(v^2+w^2) du
    geo = PointGeometry(ex62, (0.0, 1.0, 2.0))
    e = np.eye(3)
    np.testing.assert_allclose(geo.christoffel(e[1], e[0]), [0.2, 0, 0], atol=1e-14)
    np.testing.assert_allclose(geo.christoffel(e[2], e[0]), [0.4, 0, 0], atol=1e-14)
    # nabla_du du = -(1/2) grad(v^2 + w^2) = -(v, w)/3 in the (v, w) block
    np.testing.assert_allclose(geo.christoffel(e[0], e[0]), [0, -1 / 3, -2 / 3], atol=1e-14)


def test_two_christoffel_constructions_agree(ex61, ex61_points):
    for p in ex61_points[:4]:
        np.testing.assert_allclose(PointGeometry(ex61, p).second.christoffel,
                                   christoffel_from_metric(ex61, p), atol=1e-7)


def test_shape_operator_is_self_adjoint(ex62):
    p = (0.3, 1.2, 2.1)
    geo = PointGeometry(ex62, p)
    rng = np.random.default_rng(0)
    for _ in range(3):
        N = rng.standard_normal(3)
        GA = geo.G @ shape_operator(ex62, p, N)
        np.testing.assert_allclose(GA, GA.T, atol=1e-12)


def test_nabla_uses_field_derivatives(ex61):
    p = (1.2, 0.3, 0.9)
    geo = PointGeometry(ex61, p)
    X = VectorField.coordinate(0, 3)
    spec2 = load_fixture("toy_nonintegrable.lps")
    g2 = PointGeometry(spec2, (0.5, 0.1, 0.2))
    # flat chart: nabla_du (u dv + dw) = dv
    np.testing.assert_allclose(g2.nabla(VectorField.coordinate(0, 3), spec2.distributions["D1"][1]),
                               [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(geo.nabla(X, X), geo.christoffel(np.eye(3)[0], np.eye(3)[0]))


def test_weingarten_rejects_tangent_field(ex61):
    p = (1.2, 0.3, 0.9)
    geo = PointGeometry(ex61, p)
    with pytest.raises(NotNormalError):
        weingarten_split(ex61, p, lambda q: geo.frame.J[:, 0], [1.0, 0, 0])


@pytest.mark.parametrize("name", ["ex61.lps", "ex62.lps"])
def test_gauss_weingarten_suite(name):
    spec = load_fixture(name)
    checks = check_gauss_weingarten(spec, sample_domain(spec, 4).points)
    assert all(c.passed for c in checks)
