"""
Kalman updates, exact conditioning, RTS smoothing and output-scale calibration.
"""

import os
import sys

import numpy as np
import pytest
import scipy.linalg

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pnmol.base import GaussianBelief, StateLayout
from pnmol.exceptions import DimensionMismatchError
from pnmol.inference import (
    LinearizedObservation,
    ResidualRecord,
    calibrate,
    condition_on_coordinates,
    filter_and_smooth,
    linearize,
    mahalanobis_terms,
    predict,
    smooth,
    update,
)
from pnmol.statespace import discretize_steps, iwp_sde, lift_initial, time_grid


def _tracking_model(noise=0.01, num_steps=6):
    """Once integrated Wiener process observed through its value."""
    sde = iwp_sde(1)
    times = time_grid((0.0, 1.0), 1.0 / num_steps)
    transitions = discretize_steps(sde, times)
    prior = lift_initial(sde, np.eye(1))
    data = np.sin(3.0 * times)
    H = np.array([[1.0, 0.0]])

    def observe(t, predicted):
        k = int(np.argmin(np.abs(times - t)))
        return LinearizedObservation(H, np.array([-data[k]]), np.array([[noise]]))

    return prior, transitions, times, observe, data


def _batch_means(prior, transitions, times, observe):
    """Posterior means of all states from one joint Gaussian conditioning."""
    K1, n = times.size, prior.dim
    blocks = [[None] * K1 for _ in range(K1)]
    means = [prior.mean]
    blocks[0][0] = prior.cov
    for k, tr in enumerate(transitions):
        for j in range(k + 1):
            blocks[k + 1][j] = tr.transition @ blocks[k][j]
            blocks[j][k + 1] = blocks[k + 1][j].T
        blocks[k + 1][k + 1] = tr.transition @ blocks[k][k] @ tr.transition.T + tr.process_noise
        means.append(tr.transition @ means[-1])
    C = np.block(blocks)
    mu = np.concatenate(means)

    rows, targets, noises = [], [], []
    for k, t in enumerate(times):
        obs = observe(float(t), GaussianBelief(means[k], blocks[k][k]))
        G = np.zeros((obs.dim, K1 * n))
        G[:, k * n : (k + 1) * n] = obs.H
        rows.append(G)
        targets.append(-obs.b)
        noises.append(obs.noise)
    G = np.vstack(rows)
    S = G @ C @ G.T + scipy.linalg.block_diag(*noises)
    gain = C @ G.T @ np.linalg.pinv(S, rcond=1e-12, hermitian=True)
    return (mu + gain @ (np.concatenate(targets) - G @ mu)).reshape(K1, n)


def test_predict_propagates_mean_and_covariance():
    sde = iwp_sde(1)
    tr = discretize_steps(sde, np.array([0.0, 0.5]))[0]
    belief = GaussianBelief(np.array([1.0, 2.0]), np.eye(2))
    out = predict(belief, tr)
    np.testing.assert_allclose(out.mean, [2.0, 2.0])
    np.testing.assert_allclose(out.cov, tr.transition @ tr.transition.T + tr.process_noise)
    with pytest.raises(DimensionMismatchError):
        predict(GaussianBelief(np.zeros(3), np.eye(3)), tr)


def test_update_matches_the_scalar_kalman_formula():
    belief = GaussianBelief(np.array([0.0, 1.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
    obs = LinearizedObservation(np.array([[1.0, 0.0]]), np.array([-1.0]), np.array([[0.5]]))
    post, record = update(belief, obs)
    gain = np.array([2.0, 0.5]) / 2.5
    np.testing.assert_allclose(post.mean, gain * 1.0 + np.array([0.0, 1.0]))
    np.testing.assert_allclose(post.cov, belief.cov - np.outer(gain, gain) * 2.5)
    np.testing.assert_allclose(record.mean, [-1.0])
    np.testing.assert_allclose(record.cov, [[2.5]])


def test_noise_free_update_observes_exactly():
    belief = GaussianBelief(np.zeros(3), np.diag([1.0, 2.0, 3.0]) + 0.1)
    obs = LinearizedObservation(np.array([[0.0, 1.0, 0.0]]), np.array([-4.0]), np.zeros((1, 1)))
    post, _ = update(belief, obs)
    assert post.mean[1] == pytest.approx(4.0)
    assert post.cov[1, 1] == pytest.approx(0.0, abs=1e-12)


def test_huge_noise_leaves_the_prior_unchanged():
    belief = GaussianBelief(np.array([1.0, -1.0]), np.eye(2))
    obs = LinearizedObservation(np.eye(2), np.array([-5.0, 5.0]), 1e12 * np.eye(2))
    post, _ = update(belief, obs)
    np.testing.assert_allclose(post.mean, belief.mean, atol=1e-10)
    np.testing.assert_allclose(post.cov, belief.cov, atol=1e-10)


def test_condition_on_coordinates_is_exact():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4))
    belief = GaussianBelief(rng.normal(size=4), A @ A.T + np.eye(4))
    post = condition_on_coordinates(belief, slice(0, 2), np.array([0.3, -0.7]))
    np.testing.assert_array_equal(post.mean[:2], [0.3, -0.7])
    np.testing.assert_array_equal(post.cov[:2], 0.0)
    np.testing.assert_array_equal(post.cov[:, :2], 0.0)
    assert np.all(np.diag(post.cov)[2:] > 0.0)
    with pytest.raises(DimensionMismatchError):
        condition_on_coordinates(belief, slice(0, 2), np.zeros(3))


def test_filter_and_smoother_match_batch_conditioning():
    prior, transitions, times, observe, _ = _tracking_model()
    initial, record = update(prior, observe(0.0, prior), time=0.0)
    out = filter_and_smooth(initial, transitions, times, observe, [record])
    expected = _batch_means(prior, transitions, times, observe)
    np.testing.assert_allclose(np.stack([b.mean for b in out.smoothed]), expected, rtol=1e-8, atol=1e-10)
    # the last filtered and smoothed beliefs coincide
    np.testing.assert_allclose(out.smoothed[-1].mean, out.filtered[-1].mean)
    assert len(out.records) == times.size


def test_smoother_needs_one_transition_per_step():
    prior, transitions, _, _, _ = _tracking_model()
    with pytest.raises(DimensionMismatchError):
        smooth([prior, prior], transitions)


def test_calibration_of_hand_computed_records():
    records = [
        ResidualRecord(np.array([1.0, 2.0]), np.eye(2), 0.0),
        ResidualRecord(np.array([3.0]), np.array([[9.0]]), 1.0),
    ]
    np.testing.assert_allclose(mahalanobis_terms(records), [5.0, 1.0])
    assert calibrate(records) == pytest.approx(2.0)
    assert calibrate(records, num_points=3, num_steps=1) == pytest.approx(1.0)
    assert calibrate([ResidualRecord(np.zeros(0), np.zeros((0, 0)), 0.0)]) == 0.0


def test_means_do_not_depend_on_the_output_scale():
    """Scaling prior and noise by c leaves means fixed and divides gamma^2 by c."""
    prior, transitions, times, observe, _ = _tracking_model(noise=0.0)
    c = 7.0
    scaled_prior = GaussianBelief(prior.mean, c * prior.cov)
    scaled_transitions = [
        type(tr)(tr.transition, c * tr.process_noise, tr.step) for tr in transitions
    ]

    def run(p, trs):
        initial, record = update(p, observe(0.0, p), time=0.0)
        out = filter_and_smooth(initial, trs, times, observe, [record])
        return np.stack([b.mean for b in out.smoothed]), calibrate(out.records)

    means, gamma_sq = run(prior, transitions)
    scaled_means, scaled_gamma_sq = run(scaled_prior, scaled_transitions)
    np.testing.assert_allclose(scaled_means, means, rtol=1e-8, atol=1e-10)
    assert scaled_gamma_sq == pytest.approx(gamma_sq / c, rel=1e-8)


class _Linear:
    """F(t, u, du) = A u + b * du."""

    def __init__(self, A, b):
        self.A, self.b = A, b

    def vector_field(self, t, u, du):
        return self.A @ u + self.b * du

    def jacobian_u(self, t, u, du):
        return self.A

    def jacobian_du(self, t, u, du):
        return self.b * np.eye(len(u))


def test_linearize_places_blocks_by_layout():
    q = 3
    A = np.diag([1.0, 2.0, 3.0])
    D = np.array([[-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]])
    F = _Linear(A, 0.5)
    eta = np.array([0.1, 0.2, 0.3])

    latent = StateLayout(1, q, q)
    obs = linearize(F, 0.0, eta, np.zeros(q), D, latent)
    np.testing.assert_allclose(obs.H[:, latent.u(1)], np.eye(q))
    np.testing.assert_allclose(obs.H[:, latent.u(0)], -(A + 0.5 * D))
    np.testing.assert_allclose(obs.H[:, latent.xi(0)], -0.5 * np.eye(q))
    np.testing.assert_allclose(obs.jac_u, A + 0.5 * D)
    np.testing.assert_allclose(obs.jac_xi, 0.5 * np.eye(q))
    np.testing.assert_allclose(obs.b, 0.0, atol=1e-15)
    np.testing.assert_allclose(obs.noise, 0.0)

    white = StateLayout(1, q)
    E = np.diag([1.0, 4.0, 9.0])
    obs = linearize(F, 0.0, eta, np.zeros(q), D, white, E=E)
    assert obs.H.shape == (q, white.dim)
    np.testing.assert_allclose(obs.noise, 0.25 * E)

    with pytest.raises(DimensionMismatchError):
        linearize(F, 0.0, eta[:2], np.zeros(q), D, white)


def test_smoothing_never_increases_the_covariance():
    prior, transitions, times, observe, _ = _tracking_model(noise=0.05, num_steps=10)
    initial, record = update(prior, observe(0.0, prior), time=0.0)
    out = filter_and_smooth(initial, transitions, times, observe, [record])
    for filtered, smoothed in zip(out.filtered, out.smoothed):
        gap = filtered.cov - smoothed.cov
        assert np.linalg.eigvalsh(gap).min() >= -1e-8 * np.trace(filtered.cov)
    np.testing.assert_allclose(out.smoothed[-1].cov, out.filtered[-1].cov)


def test_calibration_recovers_the_generating_output_scale():
    """Data drawn from the prior with gamma = 2 give a gamma estimate in [1, 4]."""
    gamma = 2.0
    noise = 1e-3
    sde = iwp_sde(1)
    times = time_grid((0.0, 1.0), 1.0 / 50)
    transitions = discretize_steps(sde, times)
    prior = lift_initial(sde, np.eye(1))
    H = np.array([[1.0, 0.0]])
    for seed in range(20):
        rng = np.random.default_rng(seed)
        state = rng.multivariate_normal(prior.mean, gamma**2 * prior.cov)
        data = [H @ state]
        for tr in transitions:
            state = tr.transition @ state + rng.multivariate_normal(
                np.zeros(2), gamma**2 * tr.process_noise
            )
            data.append(H @ state)
        data = np.concatenate(data) + gamma * np.sqrt(noise) * rng.normal(size=times.size)

        def observe(t, predicted):
            k = int(np.argmin(np.abs(times - t)))
            return LinearizedObservation(H, np.array([-data[k]]), np.array([[noise]]))

        initial, record = update(prior, observe(0.0, prior), time=0.0)
        out = filter_and_smooth(initial, transitions, times, observe, [record])
        estimate = np.sqrt(calibrate(out.records))
        assert 1.0 <= estimate <= 4.0, f"seed {seed}: gamma estimate {estimate:.3f}"
