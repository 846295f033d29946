import math

import numpy as np
import pytest

from bislant.immersion import (
    DomainMostlySingularError, SingularPointError, SpecError, frame_at, load_spec, sample_domain,
    second_derivatives_at,
)

HEAD = """ambient 4 signature + + - -
chart u v w
domain u 0.5 2.0 ; v 0.0 6.283185 ; w 0.5 2.0
map w*u*cos(v) , w*u*sin(v) , w*cos(v) , w*sin(v)
"""


def test_fixture_distributions(ex61, ex62):
    assert [f.text for f in ex61.distributions["D1"]] == ["du", "dw"]
    assert [f.text for f in ex61.distributions["D2"]] == ["dv"]
    assert len(ex62.distributions["D1"]) == 1 and len(ex62.distributions["D2"]) == 2
    assert ex61.warped_claim.base == "D1" and ex62.warped_claim.fiber == "D1"


def test_frame_columns_and_gram(ex61):
    fr = frame_at(ex61, (1.0, 0.0, 1.0))
    np.testing.assert_allclose(fr.J.T, [[1, 0, 0, 0], [0, 1, 0, 1], [1, 0, 1, 0]], atol=1e-15)
    np.testing.assert_allclose(fr.gram, [[1, 0, 1], [0, 2, 0], [1, 0, 2]], atol=1e-15)
    np.testing.assert_allclose(fr.normal.T @ fr.normal, np.eye(1), atol=1e-14)
    np.testing.assert_allclose(fr.J.T @ fr.normal, 0.0, atol=1e-14)


def test_frame_is_deterministic(ex62):
    a, b = frame_at(ex62, (0.3, 1.2, 2.1)), frame_at(ex62, (0.3, 1.2, 2.1))
    assert np.array_equal(a.normal, b.normal)


def test_second_derivatives(ex61):
    H = second_derivatives_at(ex61, (1.0, 0.0, 1.0))
    np.testing.assert_allclose(H[0][2], [1, 0, 0, 0], atol=1e-15)
    for i in range(3):
        for j in range(3):
            assert np.array_equal(H[i][j], H[j][i])


def test_affine_map_has_zero_hessian():
    spec = load_spec("ambient 3 signature + - +\nchart a b\ndomain a 0 1 ; b 0 1\n"
                     "map a + 2*b , 3 , b - a\ndist D1 = da\ndist D2 = db\n")
    assert np.all(second_derivatives_at(spec, (0.2, 0.4)) == 0.0)


def test_singular_point():
    spec = load_spec("ambient 3 signature + - +\nchart a b\ndomain a -1 1 ; b -1 1\n"
                     "map a , a^2 + b^2 , b\ndist D1 = da\ndist D2 = db\n")
    frame_at(spec, (0.5, 0.5))
    spec2 = load_spec("ambient 3 signature + - +\nchart a b\ndomain a -1 1 ; b -1 1\n"
                      "map a , a , a*0\ndist D1 = da\ndist D2 = db\n")
    with pytest.raises(SingularPointError, match=r"\(0.5, 0.5\)"):
        frame_at(spec2, (0.5, 0.5))


def test_mostly_singular_domain():
    spec = load_spec("ambient 3 signature + - +\nchart a b\ndomain a -1 1 ; b -1 1\n"
                     "map a , 0*b , 1\ndist D1 = da\ndist D2 = db\n")
    with pytest.raises(DomainMostlySingularError):
        sample_domain(spec, 8)


def test_sampling_is_deterministic_and_in_box(ex61):
    a = sample_domain(ex61, 64)
    assert len(a.points) == 64 and a.dropped == 0
    assert a.points == sample_domain(ex61, 64).points
    assert a.points != sample_domain(ex61, 64, seed=7).points
    pts = np.array(a.points)
    assert pts[:, 0].min() >= 0.5 and pts[:, 0].max() <= 2.0
    assert pts[:, 1].max() <= 2 * math.pi


def test_sampling_drops_claim_boundary_points():
    # claim acos(u) is undefined for |u| >= 1 which covers a third of the box
    spec = load_spec("ambient 3 signature + - +\nchart u v\ndomain u 0 1.5 ; v 0 1\n"
                     "map u , v , 0\ndist D1 = du\ndist D2 = dv\nclaim slant D1 acos(u)\n")
    s = sample_domain(spec, 16)
    assert len(s.points) == 16 and s.dropped > 0
    assert all(p[0] < 1 for p in s.points)


@pytest.mark.parametrize("extra, message", [
    ("dist D1 = du\nclaim slant D1 0\nclaim slant D1 0\n", "duplicate"),
    ("dist D1 = du , dw\nclaim slant D1 0\nclaim slant D2 0\n", "unknown distribution"),
    ("dist D1 = du\ndist D2 = dv\nclaim warped base D1 fiber D2 f 1\n", "rank"),
    ("dist D1 = du*dv\n", "linear"),
    ("dist D1 = du\ndist D1 = dv\n", "twice"),
    ("dist D1 = du , dw\ndist D2 = dv\nclaim basemetric 1 , 0\nclaim warped base D1 fiber D2 f 1\n",
     "basemetric"),
    ("frobnicate\n", "unknown directive"),
])
def test_spec_errors(extra, message):
    with pytest.raises(SpecError, match=message):
        load_spec(HEAD + extra)


def test_spec_error_has_line_and_column():
    with pytest.raises(SpecError, match=r"line 4:\d+"):
        load_spec(HEAD.replace("w*sin(v)", "w*sin(q)"))


def test_field_coefficients():
    spec = load_spec(HEAD + "dist D1 = 2*u*du - dw , dv\ndist D2 = du\n")
    f = spec.distributions["D1"][0]
    np.testing.assert_allclose(f.at((1.5, 0, 1)), [3.0, 0.0, -1.0])
    vals, D = f.jet((1.5, 0, 1))
    np.testing.assert_allclose(D, [[2, 0, 0], [0, 0, 0], [0, 0, 0]])
