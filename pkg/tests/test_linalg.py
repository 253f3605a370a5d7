import numpy as np
import numpy.testing as npt
import pytest

from splinenet.linalg import axpy, matvec, outer_accumulate, transpose_matvec


def test_matvec_identity():
    npt.assert_array_equal(matvec(np.eye(3), [1.0, 2.0, 3.0]), [1, 2, 3])


def test_matvec_zero():
    npt.assert_array_equal(matvec(np.zeros((2, 3)), [4.0, 5.0, 6.0]), [0, 0])


def test_matvec_hand_value():
    npt.assert_array_equal(matvec([[1.0, 2.0], [3.0, 4.0]], [1.0, 1.0]), [3, 7])


def test_matvec_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        matvec(np.eye(3), [1.0, 2.0])


def test_outer_accumulate_basic():
    acc = outer_accumulate([1.0, 0.0], [2.0, 3.0], np.zeros((2, 2)))
    npt.assert_array_equal(acc, [[2, 3], [0, 0]])


def test_outer_accumulate_zero_g():
    acc = np.arange(6.0).reshape(2, 3)
    npt.assert_array_equal(outer_accumulate([0.0, 0.0], [1.0, 2.0, 3.0], acc), acc)


def test_outer_accumulate_linearity():
    g, h = np.array([1.0, 2.0]), np.array([3.0, 4.0, 5.0])
    acc = outer_accumulate(g, h, outer_accumulate(g, h, np.zeros((2, 3))))
    npt.assert_array_equal(acc, 2 * np.outer(g, h))


def test_outer_accumulate_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        outer_accumulate([1.0], [1.0], np.zeros((2, 2)))


def test_axpy_zero_scale():
    y = np.array([1.0, 2.0])
    npt.assert_array_equal(axpy(0.0, np.array([9.0, 9.0]), y), y)


def test_axpy_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        axpy(1.0, np.zeros(2), np.zeros(3))


def test_transpose_matvec_identity():
    npt.assert_array_equal(transpose_matvec(np.eye(4), [1.0, 2.0, 3.0, 4.0]), [1, 2, 3, 4])


def test_transpose_matvec_unit_probe():
    w = np.arange(12.0).reshape(3, 4)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        npt.assert_array_equal(transpose_matvec(w, e), w[i])


def test_adjoint_identity(rng):
    # <W v, u> == <v, W^T u>; underpins gradient correctness
    for _ in range(20):
        m, n = rng.integers(1, 8, 2)
        w = rng.normal(size=(m, n))
        v = rng.normal(size=n)
        u = rng.normal(size=m)
        lhs = matvec(w, v) @ u
        rhs = v @ transpose_matvec(w, u)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
