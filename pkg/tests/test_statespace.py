"""
Integrated Wiener process priors: discretisation, lifting and time grids.
"""

import os
import sys

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pnmol.exceptions import ConfigError, DimensionMismatchError
from pnmol.statespace import (
    discretize_sde,
    discretize_steps,
    iwp_process_noise,
    iwp_sde,
    kron_lift,
    lift_initial,
    stack_beliefs,
    stack_transitions,
    time_grid,
)


def test_once_integrated_wiener_process_closed_form():
    h = 0.3
    tr = discretize_sde(iwp_sde(1), h)
    np.testing.assert_allclose(tr.transition, [[1.0, h], [0.0, 1.0]], atol=1e-14)
    np.testing.assert_allclose(
        tr.process_noise, [[h**3 / 3, h**2 / 2], [h**2 / 2, h]], rtol=1e-10
    )


@pytest.mark.parametrize("nu", [1, 2, 3])
def test_matrix_fractions_agree_with_closed_form(nu):
    for h in (1e-3, 0.1, 2.0):
        tr = discretize_sde(iwp_sde(nu), h)
        np.testing.assert_allclose(tr.process_noise, iwp_process_noise(nu, h), rtol=1e-8, atol=1e-16)


@pytest.mark.parametrize("nu", [0, 1, 2])
def test_process_noise_matches_quadrature(nu):
    sde = iwp_sde(nu)
    h = 0.7
    BBt = np.outer(sde.dispersion, sde.dispersion)

    def integrand(s):
        phi = scipy.linalg.expm(sde.drift * s)
        return phi @ BBt @ phi.T

    expected, _ = scipy.integrate.quad_vec(integrand, 0.0, h)
    np.testing.assert_allclose(discretize_sde(sde, h).process_noise, expected, rtol=1e-7)


def test_transitions_compose_over_consecutive_steps():
    sde = iwp_sde(2)
    h1, h2 = 0.2, 0.45
    a, b, ab = discretize_sde(sde, h1), discretize_sde(sde, h2), discretize_sde(sde, h1 + h2)
    np.testing.assert_allclose(ab.transition, b.transition @ a.transition, rtol=1e-12)
    composed = b.transition @ a.process_noise @ b.transition.T + b.process_noise
    np.testing.assert_allclose(ab.process_noise, composed, rtol=1e-10)


def test_kron_lift_spectrum_is_the_product_of_spectra():
    base = discretize_sde(iwp_sde(1), 0.5)
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    lifted = kron_lift(base, M)
    assert lifted.dim == 4
    expected = np.sort(np.outer(np.linalg.eigvalsh(base.process_noise), np.linalg.eigvalsh(M)).ravel())
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(lifted.process_noise)), expected, rtol=1e-10)
    # derivative-major: channel 1 at position 1, its derivative at position 3
    np.testing.assert_allclose(lifted.transition[1, 3], 0.5)
    np.testing.assert_allclose(lifted.transition[0, 3], 0.0)


def test_lift_initial_and_stacking():
    sde = iwp_sde(1)
    M = np.diag([1.0, 2.0, 3.0])
    belief = lift_initial(sde, M)
    assert belief.dim == 6
    np.testing.assert_allclose(belief.cov, np.kron(np.eye(2), M))
    stacked = stack_beliefs(belief, lift_initial(sde, np.eye(1)))
    assert stacked.dim == 8
    assert stacked.cov[0, 6] == 0.0


def test_stacking_needs_a_common_step():
    sde = iwp_sde(1)
    with pytest.raises(DimensionMismatchError):
        stack_transitions(discretize_sde(sde, 0.1), discretize_sde(sde, 0.2))


def test_time_grid_merges_the_final_partial_step():
    np.testing.assert_allclose(time_grid((0.0, 1.0), 0.3), [0.0, 0.3, 0.6, 1.0])
    times = time_grid((0.0, 1.0), 0.1)
    assert times.size == 11
    assert times[-1] == 1.0
    with pytest.raises(ConfigError):
        time_grid((1.0, 1.0), 0.1)


def test_discretize_steps_reuses_equal_steps():
    transitions = discretize_steps(iwp_sde(1), time_grid((0.0, 1.0), 0.3))
    assert len(transitions) == 3
    assert transitions[0] is transitions[1]
    assert transitions[2].step == pytest.approx(0.4)


def test_invalid_priors_are_rejected():
    with pytest.raises(ConfigError):
        iwp_sde(-1)
    with pytest.raises(ConfigError):
        discretize_sde(iwp_sde(1), 0.0)
