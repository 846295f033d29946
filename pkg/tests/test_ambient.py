import numpy as np
import pytest

from bislant.ambient import (
    StructureError, apply_structure, make_matrix_structure, make_signature_structure,
    validate_structure,
)


def test_signature_structure_is_exact():
    F = make_signature_structure([1, 1, -1, -1])
    rep = validate_structure(F.matrix)
    assert rep.involution_residual == 0.0 and rep.isometry_residual == 0.0
    assert rep.valid() and F.is_signature()


@pytest.mark.parametrize("signs", [[1, 1, 1], [-1, -1], [1, 2], []])
def test_bad_signatures(signs):
    with pytest.raises(StructureError):
        make_signature_structure(signs)


def test_swap_matrix_is_a_product_structure():
    F = make_matrix_structure([[0, 1, 0], [1, 0, 0], [0, 0, 1]])
    assert not F.is_signature()
    np.testing.assert_array_equal(apply_structure(F, [1.0, 2.0, 3.0]), [2.0, 1.0, 3.0])


@pytest.mark.parametrize("M", [
    np.eye(3),
    -np.eye(2),
    [[1, 1], [0, -1]],  # involution but not an isometry
    [[0, -1], [1, 0]],  # isometry, squares to -I
    [[1, 0, 0], [0, 1, 0]],
])
def test_rejected_matrices(M):
    with pytest.raises(StructureError):
        make_matrix_structure(M)


def test_apply_checks_dimension():
    with pytest.raises(StructureError):
        apply_structure(make_signature_structure([1, -1]), [1.0, 2.0, 3.0])
