import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jadce.core import (
    RealizedSystem,
    ShapeError,
    apply_left,
    batch_row_norms,
    lift_dictionary,
    lift_signal,
    norm_2_1,
    row_group_norms,
    row_support,
    stack_rows,
    unlift_signal,
)


def _complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_lifting_preserves_products(rng):
    s = _complex(rng, 5, 9)
    x = _complex(rng, 9, 3)
    np.testing.assert_allclose(lift_dictionary(s) @ lift_signal(x), lift_signal(s @ x), atol=1e-12)


def test_lift_dictionary_block_layout():
    s = np.array([[1 + 2j]])
    np.testing.assert_array_equal(lift_dictionary(s), [[1.0, -2.0], [2.0, 1.0]])


def test_lifting_preserves_column_norms(rng):
    s = _complex(rng, 6, 10)
    s /= np.linalg.norm(s, axis=0)
    np.testing.assert_allclose(np.linalg.norm(lift_dictionary(s), axis=0), 1.0, atol=1e-14)


def test_unlift_round_trip(rng):
    x = _complex(rng, 7, 2)
    np.testing.assert_array_equal(unlift_signal(lift_signal(x)), x)


def test_unlift_rejects_odd_rows():
    with pytest.raises(ShapeError):
        unlift_signal(np.zeros((3, 2)))


def test_lift_signal_of_vector_is_column():
    assert lift_signal(np.array([1 + 1j, 2])).shape == (4, 1)


def test_row_norms_and_2_1_norm():
    x = np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(row_group_norms(x), [5.0, 0.0, 1.0])
    assert norm_2_1(x) == pytest.approx(6.0)
    assert row_support(x) == {0, 2}


def test_row_support_tolerance():
    x = np.array([[1e-12, 0.0], [1e-3, 0.0]])
    assert row_support(x) == {1}
    assert row_support(x, tol=0.0) == {0, 1}
    with pytest.raises(ValueError):
        row_support(x, tol=-1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_2_1_norm_triangle_inequality(rows, cols, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((rows, cols)), r.standard_normal((rows, cols))
    assert norm_2_1(a + b) <= norm_2_1(a) + norm_2_1(b) + 1e-12


def test_apply_left_matches_per_sample_products(rng):
    a = rng.standard_normal((4, 6))
    mats = [rng.standard_normal((6, 3)) for _ in range(5)]
    stack = stack_rows(mats)
    out = apply_left(a, stack)
    for i, m in enumerate(mats):
        np.testing.assert_allclose(out[:, i], a @ m, atol=1e-13)
    np.testing.assert_allclose(apply_left(a, mats[0]), a @ mats[0])


def test_batch_row_norms_shape(rng):
    stack = rng.standard_normal((6, 5, 3))
    out = batch_row_norms(stack)
    assert out.shape == (6, 5)
    np.testing.assert_allclose(out[:, 2], np.linalg.norm(stack[:, 2], axis=1))


def test_realized_system_validates_shapes(rng):
    s = rng.standard_normal((4, 8))
    x = rng.standard_normal((8, 2))
    sys = RealizedSystem.from_arrays(s, s @ x, x)
    assert sys.dims == (2, 4, 2)
    assert sys.noise_frobenius == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ShapeError):
        RealizedSystem(s, np.zeros((4, 3)), x, 0.0, (2, 4, 2))
    with pytest.raises(ShapeError):
        RealizedSystem.from_arrays(np.zeros((3, 8)), np.zeros((3, 2)), x)
    with pytest.raises(ValueError):
        RealizedSystem(s, s @ x, x, -1.0, (2, 4, 2))
