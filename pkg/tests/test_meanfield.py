import numpy as np
import pytest

from fedgames.model import GameParams, TargetSeries, exact_moments_deterministic
from fedgames.nash_meanfield import (
    decentralized_action,
    decentralized_backward_pass,
    lambda_gap,
    meanfield_forward,
    rescaled_blocks,
)
from fedgames.nash_reduced import reduced_backward_pass


def build_scenario(rng, N, d, T):
    params = GameParams(
        theta=0.8 * np.eye(d) + 0.05 * rng.standard_normal((d, d)),
        theta_bar=0.1 * np.eye(d) + 0.05 * rng.standard_normal((d, d)),
        kappa=1.3,
        kappa_bar=0.7,
        gamma=0.9,
        alpha=0.05,
        horizon_T=T,
        population_N=N,
        dim_y=d,
        dim_z=d,
    )
    zs = [rng.standard_normal((d, d)) for _ in range(T)]
    targets = TargetSeries(values=rng.standard_normal((T + 1, d)))
    return params, zs, targets


def test_scalar_one_step_hand_values():
    params = GameParams(
        theta=1.0,
        theta_bar=0.0,
        kappa=1.0,
        kappa_bar=0.0,
        gamma=1.0,
        alpha=0.0,
        horizon_T=1,
        population_N=10,
        dim_y=1,
        dim_z=1,
    )
    y1 = 0.4
    targets = TargetSeries(values=np.array([[0.0], [y1]]))
    moments = exact_moments_deterministic([np.array([[1.0]])])
    dec = decentralized_backward_pass(params, moments, targets)
    assert dec.F[0][0, 0] == pytest.approx(2.0)
    assert dec.K[0][0, 0] == pytest.approx(0.0)
    assert dec.M[0][0, 0] == pytest.approx(0.5)
    assert dec.E[0][0, 0] == pytest.approx(0.0)
    assert dec.G1[0][0, 0] == pytest.approx(-0.5)
    assert dec.G2[0][0, 0] == pytest.approx(0.0)
    assert dec.H[0][0] == pytest.approx(y1 / 2)
    # action at own = ybar = 0: beta = y1 / 2; spec case y1 = 1 -> 0.5
    assert decentralized_action(0, [0.0], [0.0], dec)[0] == pytest.approx(y1 / 2)
    # one-step mean field: Ybar_1 = (1 - 1/2) * 0 + y1 / 2
    traj = meanfield_forward(dec, moments, np.array([0.0]))
    assert traj.ybar[1, 0] == pytest.approx(y1 / 2)


def test_zero_weights_zero_policy():
    rng = np.random.default_rng(0)
    params, zs, targets = build_scenario(rng, 8, 2, 4)
    params = GameParams(**{**params.__dict__, "kappa": 0.0, "kappa_bar": 0.0})
    dec = decentralized_backward_pass(params, exact_moments_deterministic(zs), targets)
    for arr in (dec.G1, dec.G2, dec.H, dec.L1, dec.L2, dec.L3, dec.L4, dec.chi1, dec.chi2):
        assert np.all(arr == 0.0)


@pytest.mark.parametrize("d,T,seed", [(1, 4, 1), (2, 3, 2), (2, 5, 3)])
def test_limit_agrees_with_huge_n_reduced(d, T, seed):
    # The rescaled reduced blocks converge to the limit blocks at O(1/N);
    # at N = 1e6 any wrong term of O(1) magnitude would dominate.
    rng = np.random.default_rng(seed)
    params, zs, targets = build_scenario(rng, 1_000_000, d, T)
    moments = exact_moments_deterministic(zs)
    red = reduced_backward_pass(params, moments, targets)
    dec = decentralized_backward_pass(params, moments, targets)
    r1, r2, r3, r4, rx1, rx2 = rescaled_blocks(red)
    np.testing.assert_allclose(r1, dec.L1, atol=2e-4)
    np.testing.assert_allclose(r2, dec.L2, atol=2e-4)
    np.testing.assert_allclose(r3, dec.L3, atol=2e-4)
    np.testing.assert_allclose(r4, dec.L4, atol=2e-4)
    np.testing.assert_allclose(rx1, dec.chi1, atol=2e-4)
    np.testing.assert_allclose(rx2, dec.chi2, atol=2e-4)
    np.testing.assert_allclose(red.G1N, dec.G1, atol=2e-4)
    np.testing.assert_allclose(1_000_000 * red.G2N, dec.G2, atol=2e-4)
    np.testing.assert_allclose(red.HN, dec.H, atol=2e-4)


def test_lambda_gap_shrinks_at_one_over_n():
    rng = np.random.default_rng(4)
    gaps = {}
    for N in (4, 16, 64, 256):
        params, zs, targets = build_scenario(rng.__class__(np.random.PCG64(77)), N, 1, 4)
        moments = exact_moments_deterministic(zs)
        red = reduced_backward_pass(params, moments, targets)
        dec = decentralized_backward_pass(params, moments, targets)
        gaps[N] = float(np.max(lambda_gap(red, dec)))
    assert gaps[4] > gaps[16] > gaps[64] > gaps[256]
    # O(1/N): N * gap roughly stable across the grid
    scaled = [N * gaps[N] for N in (16, 64, 256)]
    assert max(scaled) < 4 * min(scaled)


def test_action_affine_in_ybar():
    rng = np.random.default_rng(5)
    params, zs, targets = build_scenario(rng, 16, 2, 3)
    dec = decentralized_backward_pass(params, exact_moments_deterministic(zs), targets)
    own = rng.standard_normal(2)
    ybar = rng.standard_normal(2)
    delta = rng.standard_normal(2)
    base = decentralized_action(1, own, ybar, dec)
    shifted = decentralized_action(1, own, ybar + delta, dec)
    np.testing.assert_allclose(shifted - base, dec.G2[1] @ delta, atol=1e-12)
    with pytest.raises(IndexError):
        decentralized_action(3, own, ybar, dec)


def test_meanfield_constant_when_uncontrolled():
    # G1 = G2 = H = 0 and theta + theta_bar = I freeze the mean field
    params = GameParams(
        theta=0.6,
        theta_bar=0.4,
        kappa=0.0,
        kappa_bar=0.0,
        gamma=1.0,
        alpha=0.0,
        horizon_T=3,
        population_N=4,
        dim_y=1,
        dim_z=1,
    )
    targets = TargetSeries(values=np.zeros((4, 1)))
    moments = exact_moments_deterministic([np.array([[1.0]])] * 3)
    dec = decentralized_backward_pass(params, moments, targets)
    traj = meanfield_forward(dec, moments, np.array([0.7]))
    np.testing.assert_allclose(traj.ybar[:, 0], 0.7)


def test_identical_moments_identical_coefficients():
    # homogeneity without interchangeability: two banks with different
    # sample distributions but identical first/second moments produce
    # the same coefficients and the same mean field
    from fedgames.model import SampleBank, estimate_moments

    params = GameParams(
        theta=0.7,
        theta_bar=0.2,
        kappa=1.0,
        kappa_bar=0.5,
        gamma=1.0,
        alpha=0.05,
        horizon_T=3,
        population_N=16,
        dim_y=1,
        dim_z=1,
    )
    targets = TargetSeries(values=np.array([[0.1], [0.4], [-0.2], [0.3]]))
    two_point = SampleBank(samples=tuple(np.array([[[1.0]], [[-1.0]]]) for _ in range(3)))
    four_point = SampleBank(
        samples=tuple(np.array([[[1.0]], [[1.0]], [[-1.0]], [[-1.0]]]) for _ in range(3))
    )
    a = decentralized_backward_pass(params, estimate_moments(two_point), targets)
    b = decentralized_backward_pass(params, estimate_moments(four_point), targets)
    np.testing.assert_array_equal(a.G1, b.G1)
    np.testing.assert_array_equal(a.H, b.H)
    ya = meanfield_forward(a, estimate_moments(two_point), np.array([0.1]))
    yb = meanfield_forward(b, estimate_moments(four_point), np.array([0.1]))
    np.testing.assert_array_equal(ya.ybar, yb.ybar)


def test_meanfield_pure_function():
    rng = np.random.default_rng(6)
    params, zs, targets = build_scenario(rng, 32, 1, 4)
    moments = exact_moments_deterministic(zs)
    dec = decentralized_backward_pass(params, moments, targets)
    a = meanfield_forward(dec, moments, np.array([0.3]))
    b = meanfield_forward(dec, moments, np.array([0.3]))
    np.testing.assert_array_equal(a.ybar, b.ybar)


def test_draft_sign_flag_flips_chi_in_intercept():
    rng = np.random.default_rng(7)
    params, zs, targets = build_scenario(rng, 16, 1, 4)
    moments = exact_moments_deterministic(zs)
    plus = decentralized_backward_pass(params, moments, targets)
    minus = decentralized_backward_pass(params, moments, targets, draft_sign=True)
    # terminal step has chi(t+1) = 0, so the last intercept agrees...
    np.testing.assert_allclose(plus.H[-1], minus.H[-1], atol=1e-14)
    # ...and earlier steps differ once chi1 is nonzero
    assert np.max(np.abs(plus.H[0] - minus.H[0])) > 1e-8


def test_terminal_conditions_and_symmetry():
    rng = np.random.default_rng(8)
    params, zs, targets = build_scenario(rng, 16, 2, 5)
    dec = decentralized_backward_pass(params, exact_moments_deterministic(zs), targets)
    for arr in (dec.L1, dec.L2, dec.L3, dec.L4):
        assert np.all(arr[-1] == 0.0)
    assert dec.max_asymmetry <= 1e-9
    for t in range(6):
        np.testing.assert_allclose(dec.L1[t], dec.L1[t].T, atol=1e-12)
        np.testing.assert_allclose(dec.L4[t], dec.L4[t].T, atol=1e-12)
