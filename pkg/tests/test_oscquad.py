"""Quadrature layer: Filon weights, panel integrator, Laplace tails.

References used as oracles are independent of the implementation:
mpmath arbitrary-precision quadrature, scipy's QAWO weights, and the
e^t E1(t) closed form for the half-line exponential integral.
"""

import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import exp1

from decaykit.errors import QuadratureError
from decaykit.oscquad import (exp_decay_halfline, filon_coefficients,
                              filon_uniform, fourier_integral)


def test_filon_coefficients_simpson_limit():
    alpha, beta, gamma = filon_coefficients(np.array([0.0]))
    assert alpha[0] == pytest.approx(0.0, abs=1e-15)
    assert beta[0] == pytest.approx(2.0 / 3.0, rel=1e-14)
    assert gamma[0] == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_filon_coefficients_match_mpmath_closed_form():
    mp.mp.dps = 40
    thetas = np.concatenate([
        np.geomspace(1e-4, 0.149, 7),   # series branch
        np.array([0.1499999, 0.1500001]),  # both sides of the crossover
        np.geomspace(0.151, 50.0, 9),   # closed-form branch
    ])
    for th in thetas:
        t = mp.mpf(float(th))
        s, c = mp.sin(t), mp.cos(t)
        it3 = 1 / t ** 3
        a = it3 * (t * t + t * s * c - 2 * s * s)
        b = 2 * it3 * (t * (1 + c * c) - 2 * s * c)
        g = 4 * it3 * (s - t * c)
        alpha, beta, gamma = filon_coefficients(np.array([th]))
        # alpha ~ theta^3/22 is the cancellation-prone one; measured worst
        # case near the series crossover is ~2e-11 relative.
        assert alpha[0] == pytest.approx(float(a), rel=1e-10, abs=1e-16)
        assert beta[0] == pytest.approx(float(b), rel=1e-12)
        assert gamma[0] == pytest.approx(float(g), rel=1e-12)


def test_filon_uniform_exact_for_quadratic_amplitude():
    # The weights integrate a piecewise-quadratic amplitude exactly at
    # any oscillation frequency; a parabola on two segments must match
    # arbitrary-precision quadrature to rounding.
    mp.mp.dps = 30
    x0, h, n = 0.3, 0.45, 2
    xs = x0 + h * np.arange(n + 1)
    fvals = 2.0 * xs ** 2 - xs + 0.7
    for t in (0.0, 0.05, 0.8, 7.0, 120.0):
        got = filon_uniform(fvals, x0, h, np.array([t]))[0]
        f = lambda x: (2 * x ** 2 - x + mp.mpf("0.7")) * mp.e ** (-1j * t * x)
        want = mp.quad(f, [x0, x0 + n * h])
        assert got.real == pytest.approx(float(want.real), rel=2e-13, abs=1e-14)
        assert got.imag == pytest.approx(float(want.imag), rel=2e-13, abs=1e-14)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_filon_uniform_converges_on_smooth_amplitude():
    # Gaussian amplitude, moderately fast phase: the composite rule on a
    # refined grid has to approach the scipy reference.
    t = 14.0
    ref_re, _ = quad(lambda x: np.exp(-x * x) * np.cos(t * x), -3.0, 3.0,
                     epsabs=1e-14, epsrel=1e-13, limit=200)
    ref_im, _ = quad(lambda x: -np.exp(-x * x) * np.sin(t * x), -3.0, 3.0,
                     epsabs=1e-14, epsrel=1e-13, limit=200)
    xs = np.linspace(-3.0, 3.0, 513)
    got = filon_uniform(np.exp(-xs * xs), -3.0, xs[1] - xs[0], np.array([t]))[0]
    assert got.real == pytest.approx(ref_re, abs=1e-10)
    assert got.imag == pytest.approx(ref_im, abs=1e-10)


def test_fourier_integral_gaussian_transform():
    # Full-line Gaussian: F(t) = sqrt(2 pi) exp(-t^2 / 2); the [-12, 12]
    # truncation error is far below the comparison tolerance.
    ts = np.array([0.0, 0.3, 1.0, 2.5, 6.0])
    got = fourier_integral(lambda E: np.exp(-0.5 * E * E), -12.0, 12.0, ts,
                           peak=0.0, scale=1.0, rel_tol=1e-11)
    want = np.sqrt(2.0 * np.pi) * np.exp(-0.5 * ts * ts)
    assert np.allclose(got.real, want, rtol=1e-10, atol=1e-13)
    assert np.max(np.abs(got.imag)) < 1e-13


def test_fourier_integral_matches_qawo_at_high_frequency():
    # Lorentzian amplitude against scipy's dedicated oscillatory weights.
    f = lambda E: 1.0 / (1.0 + E * E)
    a, b = -8.0, 11.0
    for t in (5.0, 60.0):
        got = fourier_integral(f, a, b, np.array([t]), peak=0.0, scale=1.0,
                               rel_tol=1e-11)[0]
        re, _ = quad(f, a, b, weight="cos", wvar=t, epsabs=1e-14, limit=400)
        im, _ = quad(f, a, b, weight="sin", wvar=t, epsabs=1e-14, limit=400)
        assert got.real == pytest.approx(re, rel=1e-9, abs=1e-13)
        assert got.imag == pytest.approx(-im, rel=1e-9, abs=1e-13)


def test_fourier_integral_rejects_negative_time():
    with pytest.raises(ValueError):
        fourier_integral(lambda E: np.exp(-E * E), -1.0, 1.0, np.array([-0.5]))


def test_fourier_integral_exhausted_budget_raises_with_achieved_tol():
    # A kink the panels cannot resolve within a tiny point budget.
    f = lambda E: np.abs(E - 0.337)
    with pytest.raises(QuadratureError) as info:
        fourier_integral(f, -1.0, 1.0, np.array([3.0]), rel_tol=1e-13,
                         max_panel_points=16, max_total_points=200)
    assert info.value.achieved_tol > 1e-13


def test_exp_decay_halfline_exponential_integral_closed_form():
    # int_0^inf exp(-s t)/(1+s) ds = e^t E1(t).
    ts = np.array([0.5, 2.0, 10.0, 40.0])
    got = exp_decay_halfline(lambda s: 1.0 / (1.0 + s), ts)
    want = np.exp(ts) * exp1(ts)
    assert np.allclose(got.real, want, rtol=1e-10)
    assert np.max(np.abs(got.imag)) < 1e-14


def test_exp_decay_halfline_complex_amplitude_and_t_zero():
    # Complex pole, including the t = 0 endpoint where the integrand's own
    # decay must carry the integral; reference from mpmath.
    mp.mp.dps = 30
    g = lambda s: np.exp(-s) / (1.0 + 1j * s)
    got = exp_decay_halfline(g, np.array([0.0, 1.3]))
    for i, t in enumerate((0.0, 1.3)):
        want = mp.quad(lambda s: mp.e ** (-s) / (1 + 1j * s) * mp.e ** (-s * t),
                       [0, mp.inf])
        assert got[i].real == pytest.approx(float(want.real), rel=1e-10)
        assert got[i].imag == pytest.approx(float(want.imag), rel=1e-10)


def test_exp_decay_halfline_rejects_negative_time():
    with pytest.raises(ValueError):
        exp_decay_halfline(lambda s: np.exp(-s), np.array([-1.0]))
