import numpy as np
import pytest

from fedgames.encoders import (
    EsnParams,
    RfnParams,
    esn_encode,
    hard_sigmoid,
    rfn_encode,
    sample_esn_params,
    sample_rfn_params,
)
from fedgames.errors import EncodeError


def scalar_rfn(a, b, sigma):
    return RfnParams(A=np.array([[a]]), b=np.array([[b]]), sigma=np.array([sigma]))


def test_rfn_zero_params():
    p = scalar_rfn(0.0, 0.0, 0.0)
    assert rfn_encode([1.0], p, [0.3])[0, 0] == 0.0


def test_rfn_hand_examples():
    p = scalar_rfn(1.0, -2.0, 0.0)
    assert rfn_encode([1.0], p, [0.0])[0, 0] == 0.0  # relu(-1)
    p = scalar_rfn(1.0, 0.0, 1.0)
    assert rfn_encode([1.0], p, [0.5])[0, 0] == pytest.approx(1.5)


def test_rfn_shape_mismatch():
    p = RfnParams(A=np.zeros((2, 3)), b=np.zeros((2, 4)), sigma=np.zeros(2))
    with pytest.raises(EncodeError):
        rfn_encode(np.zeros(2), p, np.zeros(4))
    with pytest.raises(EncodeError):
        rfn_encode(np.zeros(3), p, np.zeros(5))


def test_esn_zero_params_hits_half():
    p = EsnParams(
        A=np.zeros((1, 1)), B=np.zeros((1, 1)), b=np.zeros((1, 1)), sigma=np.zeros(1)
    )
    # hard sigmoid convention clamp((x+3)/6, 0, 1) evaluates to 0.5 at 0
    assert esn_encode([0.0], np.zeros((1, 1)), p, [0.0])[0, 0] == 0.5


def test_esn_reduces_to_rfn_without_recurrence():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 3))
    b = rng.standard_normal((2, 4))
    sig = np.abs(rng.standard_normal(2))
    x = rng.standard_normal(3)
    noise = rng.standard_normal(4)
    esn = EsnParams(A=A, B=np.zeros((2, 2)), b=b, sigma=sig)
    rfn = RfnParams(A=A, b=b, sigma=sig)
    pre = A @ np.tile(x[:, None], (1, 4)) + b + sig[:, None] @ noise[None, :]
    np.testing.assert_allclose(esn_encode(x, np.zeros((2, 4)), esn, noise), hard_sigmoid(pre))
    np.testing.assert_allclose(rfn_encode(x, rfn, noise), np.maximum(pre, 0.0))


def test_esn_deterministic_given_noise():
    rng = np.random.default_rng(1)
    p = sample_esn_params(2, 3, 2, 0.5, rng)
    x, z, noise = rng.standard_normal(2), rng.standard_normal((2, 3)), rng.standard_normal(3)
    np.testing.assert_array_equal(esn_encode(x, z, p, noise), esn_encode(x, z, p, noise))


def test_esn_tanh_option_bounded():
    rng = np.random.default_rng(2)
    p = sample_esn_params(2, 3, 2, 1.0, rng, activation="tanh")
    z = esn_encode(rng.standard_normal(2), rng.standard_normal((2, 3)), p, rng.standard_normal(3))
    assert np.all(z >= -1.0) and np.all(z <= 1.0)


def test_sampled_params_finite():
    rng = np.random.default_rng(3)
    p = sample_rfn_params(3, 4, 2, 0.1, rng)
    z = rfn_encode(rng.standard_normal(2), p, rng.standard_normal(4))
    assert z.shape == (3, 4) and np.all(np.isfinite(z))
