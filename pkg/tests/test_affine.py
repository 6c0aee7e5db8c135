import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmfd.affine import AffineTransform, DecompositionError, decompose_affine


def test_identity_decomposition():
    assert decompose_affine(AffineTransform(tx=3.0, ty=-2.0)) == (0.0, 1.0, 1.0, 3.0, -2.0)


def test_pure_rotation():
    th, sx, sy, _, _ = decompose_affine(AffineTransform.from_params(math.radians(30), 1, 1))
    assert math.degrees(th) == pytest.approx(30.0, abs=1e-9)
    assert sx == pytest.approx(1.0, abs=1e-12) and sy == pytest.approx(1.0, abs=1e-12)


def test_rotation_with_anisotropic_scale():
    h = AffineTransform.from_params(math.radians(35), 1.4, 1.2, 7.0, 8.0)
    th, sx, sy, tx, ty = decompose_affine(h)
    assert math.degrees(th) == pytest.approx(35.0, abs=1e-9)
    assert (sx, sy, tx, ty) == pytest.approx((1.4, 1.2, 7.0, 8.0), abs=1e-12)


@given(st.floats(-179.9, 179.9), st.floats(0.1, 5), st.floats(0.1, 5),
       st.floats(-500, 500), st.floats(-500, 500))
def test_recomposition(theta, sx, sy, tx, ty):
    h = AffineTransform.from_params(math.radians(theta), sx, sy, tx, ty)
    th2, sx2, sy2, tx2, ty2 = decompose_affine(h)
    back = AffineTransform.from_params(th2, sx2, sy2, tx2, ty2)
    np.testing.assert_allclose(back.matrix(), h.matrix(), atol=1e-9)


def test_zero_first_column():
    with pytest.raises(DecompositionError):
        decompose_affine(AffineTransform(0.0, 1.0, 0.0, 1.0))


def test_inverse_and_compose():
    h = AffineTransform.from_params(0.3, 1.2, 0.8, 5, -4)
    np.testing.assert_allclose(h.compose(h.inverse()).matrix(), np.eye(3), atol=1e-12)
    p = np.array([[3.0, 4.0], [-10.0, 2.0]])
    np.testing.assert_allclose(h.inverse().apply(h.apply(p)), p, atol=1e-12)


def test_degenerate():
    assert AffineTransform(1, 2, 2, 4).is_degenerate()
    with pytest.raises(DecompositionError):
        AffineTransform(1, 2, 2, 4).inverse()
    assert not AffineTransform().is_degenerate()
