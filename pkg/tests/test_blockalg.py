"""The exchangeable block family must reproduce dense arithmetic exactly."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fedgames.blockalg import XBlockColumn, XBlockMatrix


def random_xbm(rng, N, p, q):
    blocks = [rng.standard_normal((p, q)) for _ in range(5)]
    if N == 2:
        blocks[4] = np.zeros((p, q))
    return XBlockMatrix.build(N, *blocks)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=2, max_value=7),
    st.integers(min_value=1, max_value=2),
    st.integers(min_value=1, max_value=2),
    st.integers(min_value=1, max_value=2),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_matmul_matches_dense(N, p, q, r, seed):
    rng = np.random.default_rng(seed)
    x = random_xbm(rng, N, p, q)
    y = random_xbm(rng, N, q, r)
    np.testing.assert_allclose((x @ y).to_dense(), x.to_dense() @ y.to_dense(), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=2, max_value=6),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_add_transpose_scalar_match_dense(N, seed):
    rng = np.random.default_rng(seed)
    x = random_xbm(rng, N, 2, 2)
    y = random_xbm(rng, N, 2, 2)
    np.testing.assert_allclose((x + y).to_dense(), x.to_dense() + y.to_dense(), atol=1e-14)
    np.testing.assert_allclose((x - y).to_dense(), x.to_dense() - y.to_dense(), atol=1e-14)
    np.testing.assert_allclose(x.T.to_dense(), x.to_dense().T, atol=0)
    np.testing.assert_allclose((2.5 * x).to_dense(), 2.5 * x.to_dense(), atol=0)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=2, max_value=6),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_matvec_matches_dense(N, q, seed):
    rng = np.random.default_rng(seed)
    x = random_xbm(rng, N, 2, q)
    col = XBlockColumn.build(N, rng.standard_normal(q), rng.standard_normal(q))
    np.testing.assert_allclose((x @ col).to_dense(), x.to_dense() @ col.to_dense(), atol=1e-13)


def test_uniform_row_gram():
    rng = np.random.default_rng(1)
    r1, r2 = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
    N = 4
    row = np.hstack([r1] + [r2] * (N - 1))
    g = XBlockMatrix.uniform_row_gram(N, r1, r2)
    np.testing.assert_allclose(g.to_dense(), row.T @ row, atol=1e-13)


def test_diag_builder():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    d = XBlockMatrix.diag(3, b).to_dense()
    np.testing.assert_allclose(d, np.kron(np.eye(3), b))
