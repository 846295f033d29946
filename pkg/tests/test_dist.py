import math

import numpy as np
import pytest

from bislant.dist import (
    AxiomViolation, VacuousIdentityError, check_bislant_axioms, check_corollary_3_3,
    check_lemma_3_2, integrability, lie_bracket, probe_fields, projectors_at,
)
from bislant.immersion import SpecError, frame_at, load_spec, sample_domain
from conftest import load_fixture


def test_projectors_split_identity(ex61):
    p = (1.3, 0.4, 1.7)
    pr = projectors_at(ex61, p)
    np.testing.assert_allclose(pr.P1 + pr.P2, np.eye(3), atol=1e-13)
    np.testing.assert_allclose(pr.P1 @ pr.P1, pr.P1, atol=1e-13)
    G = frame_at(ex61, p).gram
    np.testing.assert_allclose(G @ pr.P1, (G @ pr.P1).T, atol=1e-13)
    from bislant.structops import pointwise_ops
    T = pointwise_ops(ex61.ambient, frame_at(ex61, p)).T
    np.testing.assert_allclose(pr.T1 + pr.T2, T, atol=1e-13)


def test_projectors_reject_non_orthogonal_split():
    spec = load_spec("ambient 3 signature + - +\nchart a b\ndomain a -1 1 ; b -1 1\n"
                     "map a , b , 0\ndist D1 = da\ndist D2 = da + db\n")
    with pytest.raises(AxiomViolation, match="not orthogonal"):
        projectors_at(spec, (0.1, 0.2))


def test_axioms_on_fixtures(ex61, ex61_points, ex62, ex62_points):
    a = check_bislant_axioms(ex61, ex61_points)
    assert a.passed and a.classes == {"D1": "invariant", "D2": "pointwise-slant"}
    assert not a.proper and "semi-slant" in a.form()
    b = check_bislant_axioms(ex62, ex62_points)
    assert b.passed and b.proper and b.form() == "proper pointwise bi-slant"
    assert b.classes == {"D1": "pointwise-slant", "D2": "slant-constant"}


def test_axiom_b_names_a_witness():
    spec = load_fixture("toy_mixing.lps")
    a = check_bislant_axioms(spec, sample_domain(spec, 4).points)
    assert not a.b_passed and a.b_residual == pytest.approx(1.0)
    assert "D1[0] (du)" in a.b_witness and "D2[0] (dv)" in a.b_witness


def test_cr_form():
    spec = load_fixture("toy_cr.lps")
    a = check_bislant_axioms(spec, sample_domain(spec, 4).points)
    assert a.passed and a.form().startswith("CR")


def test_needs_two_distributions():
    spec = load_spec("ambient 3 signature + - +\nchart a b\ndomain a -1 1 ; b -1 1\n"
                     "map a , b , 0\ndist D1 = da , db\n")
    with pytest.raises(SpecError):
        check_bislant_axioms(spec, [(0.0, 0.0)])


def test_contact_plane_bracket_residual():
    # [du, u dv + dw] = dv, whose part normal to D1 has length 1/sqrt(1 + u^2)
    spec = load_fixture("toy_nonintegrable.lps")
    pts = [(0.5, 0.1, 0.2), (-0.9, 0.3, 0.0)]
    np.testing.assert_allclose(lie_bracket(*spec.distributions["D1"], pts[0]), [0, 1, 0])
    rep = integrability(spec, "D1", pts)
    np.testing.assert_allclose(rep.residuals, [1 / math.sqrt(1 + u * u) for u, _, _ in pts],
                               rtol=1e-12)
    assert not rep.passed and "[D1[0], D1[1]]" in rep.witness
    assert integrability(spec, "D2", pts).trivial


def test_fixture_distributions_integrable(ex61, ex61_points, ex62, ex62_points):
    for spec, pts in ((ex61, ex61_points), (ex62, ex62_points)):
        for d in spec.distributions:
            assert integrability(spec, d, pts).passed


def test_probe_fields_add_pairwise_sums(ex62):
    labels = [l for l, _ in probe_fields(ex62, "D2")]
    assert labels == ["D2[0]", "D2[1]", "D2[0]+D2[1]"]


@pytest.mark.parametrize("fixture", ["ex61", "ex62"])
def test_projection_lemma(fixture, request):
    spec = request.getfixturevalue(fixture)
    pts = request.getfixturevalue(fixture + "_points")
    checks = check_lemma_3_2(spec, pts)
    assert {c.name[:4] for c in checks} == {"(i) ", "(ii)"}
    assert all(c.passed for c in checks)


def test_projection_lemma_is_vacuous_for_equal_angles():
    spec = load_fixture("toy_nonintegrable.lps")
    with pytest.raises(VacuousIdentityError):
        check_lemma_3_2(spec, [(0.1, 0.2, 0.3)])


def test_corollary_gate(ex61, ex61_points, ex62, ex62_points):
    checks = check_corollary_3_3(ex61, ex61_points)
    assert checks and all(c.passed and not c.skipped for c in checks)
    skipped = check_corollary_3_3(ex62, ex62_points)
    assert len(skipped) == 1 and skipped[0].skipped
    assert "not invariant" in skipped[0].skipped_reason


def test_projection_lemma_is_multilinear(ex62):
    # scaling a probe field by a positive constant scales both sides alike
    from bislant.dist import _local, projection_sides
    from bislant.expr import Binary, Const
    from bislant.immersion import VectorField
    p = (0.3, 1.2, 2.1)
    loc = _local(ex62, p, "D1", "D2")
    X = ex62.distributions["D1"][0]
    Z = ex62.distributions["D2"][0]
    Z3 = VectorField(tuple(Binary("*", Const(3.0), c) for c in Z.coeffs))
    l1, r1 = projection_sides(loc, X, X, Z, "i")
    l3, r3 = projection_sides(loc, X, X, Z3, "i")
    assert l3 == pytest.approx(3 * l1, rel=1e-12) and r3 == pytest.approx(3 * r1, rel=1e-12)
