import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from mero_asian.errors import ContourError, DomainError
from mero_asian.expfunc import mellin_eval
from mero_asian.quad import (FilonGrid, InversionConfig, filon_integral, inverse_laplace_f,
                             inverse_mellin_density, inverse_mellin_h, laplace_nodes)

from conftest import R


def exact_oscillatory(a, b, omega, p):
    """int_a^b u^p exp(-i omega u) du for p <= 2."""
    if omega == 0:
        return (b ** (p + 1) - a ** (p + 1)) / (p + 1)
    iw = 1j * omega

    def anti(u):
        e = np.exp(-iw * u)
        if p == 0:
            return -e / iw
        if p == 1:
            return -e * (u / iw + 1 / iw ** 2)
        return -e * (u * u / iw + 2 * u / iw ** 2 + 2 / iw ** 3)

    return anti(b) - anti(a)


# ---------------------------------------------------------------- Filon

@pytest.mark.parametrize("omega", [0.0, 1.0, 10.0, 50.0, 1e3])
@pytest.mark.parametrize("p", [0, 1, 2])
def test_filon_exact_on_quadratics(omega, p):
    grid = FilonGrid.from_function(lambda u: u ** p, 0.0, 1.0, 8)
    ref = exact_oscillatory(0.0, 1.0, omega, p)
    assert abs(filon_integral(grid, omega) - ref) <= 1e-13 * max(1.0, abs(ref))


def test_filon_constant_closed_form():
    T, omega = 7.0, 3.3
    grid = FilonGrid(0.0, T, 4, np.ones(5))
    assert filon_integral(grid, omega) == pytest.approx((np.exp(-1j * omega * T) - 1) / (-1j * omega),
                                                        rel=1e-14)
    assert filon_integral(grid, 0.0) == pytest.approx(T, rel=1e-15)


def test_filon_is_simpson_at_zero_frequency():
    u = np.linspace(0.0, 2.0, 11)
    grid = FilonGrid(0.0, 2.0, 10, np.exp(u))
    h = 0.2
    simpson = h / 3 * (np.exp(u[0]) + 4 * np.exp(u[1:-1:2]).sum() + 2 * np.exp(u[2:-1:2]).sum() + np.exp(u[-1]))
    assert filon_integral(grid, 0.0).real == pytest.approx(simpson, rel=1e-14)


def test_filon_matches_adaptive_reference():
    f = lambda u: 1.0 / (1.0 + u * u)  # noqa: E731
    kw = dict(limit=5000, epsabs=1e-14, epsrel=1e-14)
    ref = quad(lambda u: f(u) * np.cos(20 * u), 0, 100, **kw)[0] \
        - 1j * quad(lambda u: f(u) * np.sin(20 * u), 0, 100, **kw)[0]
    grid = FilonGrid.from_function(f, 0.0, 100.0, 8000)
    assert abs(filon_integral(grid, 20.0) - ref) <= 1e-8
    assert abs(filon_integral(grid, 20.0, richardson=True) - ref) <= 1e-8


def test_filon_array_omega_matches_scalar():
    grid = FilonGrid.from_function(np.cos, -3.0, 5.0, 40)
    om = np.array([0.0, 0.3, 2.0, 17.0])
    assert np.allclose(filon_integral(grid, om), [filon_integral(grid, w) for w in om], rtol=1e-14)


def test_filon_tail_correction():
    # int_0^inf exp(-u) exp(-i w u) du = 1/(1+iw), truncated at 20
    grid = FilonGrid.from_function(lambda u: np.exp(-u), 0.0, 20.0, 2000)
    w = 5.0
    exact = 1 / (1 + 1j * w)
    assert abs(filon_integral(grid, w, tail="right") - exact) < 1e-9
    with pytest.raises(DomainError):
        filon_integral(grid, w, tail="left")


@pytest.mark.parametrize("n", [3, 5, 2])
def test_filon_grid_validation(n):
    with pytest.raises(DomainError):
        FilonGrid(0.0, 1.0, n, np.zeros(n + 1))


def test_filon_grid_checks_sample_count():
    with pytest.raises(DomainError):
        FilonGrid(0.0, 1.0, 4, np.zeros(4))
    with pytest.raises(DomainError):
        FilonGrid(1.0, 1.0, 4, np.zeros(5))
    with pytest.raises(DomainError):
        filon_integral(FilonGrid(0.0, 1.0, 6, np.zeros(7)), 1.0, richardson=True)


# ---------------------------------------------------------------- densities

class GammaMellin:
    """Mellin transform of the unit exponential law."""

    q = 1.0

    def __call__(self, s):
        return gamma(s)


GAMMA_CFG = InversionConfig(v_max=60.0, n_mellin=4000)


def test_exponential_density_at_one():
    res = inverse_mellin_density(GammaMellin(), [1.0], GAMMA_CFG, c=1.0)
    assert res.p[0] == pytest.approx(np.exp(-1), abs=1e-12)


def test_exponential_density_normalized():
    x = np.exp(np.linspace(np.log(1e-4), np.log(40.0), 3000))
    res = inverse_mellin_density(GammaMellin(), x, GAMMA_CFG, c=1.0)
    assert np.trapezoid(res.p, x) == pytest.approx(1.0, abs=2e-3)
    # x^(-c) magnifies the quadrature error near zero
    mid = x >= 0.01
    assert np.max(np.abs(res.p - np.exp(-x))[mid]) < 1e-6


@pytest.mark.parametrize("c", [0.3, 1.0, 2.5])
def test_density_contour_independent(c):
    x = np.array([0.2, 1.0, 3.0])
    res = inverse_mellin_density(GammaMellin(), x, GAMMA_CFG, c=c)
    assert np.allclose(res.p, np.exp(-x), atol=1e-7)


def test_folded_equals_unfolded():
    x = np.linspace(0.05, 6.0, 50)
    a = inverse_mellin_density(GammaMellin(), x, GAMMA_CFG, c=1.0)
    b = inverse_mellin_density(GammaMellin(), x, GAMMA_CFG, c=1.0, fold=False)
    assert np.max(np.abs(a.p - b.p)) <= 1e-12
    assert np.max(b.imag_residual) <= 1e-8 * np.max(np.abs(b.p))


def test_theta_density_folded_equals_unfolded(set_I):
    ev = mellin_eval(set_I, 1.0, 20, "corrected")
    x = np.linspace(0.05, 6.0, 40)
    cfg = InversionConfig(v_max=100.0, n_mellin=2000)
    a = inverse_mellin_density(ev, x, cfg)
    b = inverse_mellin_density(ev, x, cfg, fold=False)
    assert np.max(np.abs(a.p - b.p)) <= 1e-12
    assert np.max(b.imag_residual) <= 1e-8 * np.max(np.abs(b.p))
    assert a.c == pytest.approx(1.0)


def test_density_contour_errors(set_I):
    ev = mellin_eval(set_I, 1.0, 10, "corrected")
    z1 = float(ev.roots.zeta[0])
    with pytest.raises(ContourError):
        inverse_mellin_density(ev, [1.0], GAMMA_CFG, c=1 + z1)
    with pytest.raises(ContourError):
        inverse_mellin_density(ev, [1.0], GAMMA_CFG, c=-0.1)
    with pytest.raises(ContourError):
        inverse_mellin_density(GammaMellin(), [1.0], GAMMA_CFG)
    with pytest.raises(DomainError):
        inverse_mellin_density(ev, [0.0], GAMMA_CFG)


def test_density_truncation_warning():
    res = inverse_mellin_density(GammaMellin(), [1.0], InversionConfig(v_max=2.0, n_mellin=40), c=1.0)
    assert any("density" in w for w in res.warnings)


# ---------------------------------------------------------------- h(k, q)

STRIKES = np.array([1e-6, 1e-3, 0.1, 0.2499, 0.25, 0.5, 1.0, 1.05, 2.0, 5.0, 20.0])


@pytest.mark.parametrize("q", [0.5, 1.0, 3.0])
def test_h_bounds_and_monotone(any_set, q):
    ev = mellin_eval(any_set, q, 40, "corrected")
    h = inverse_mellin_h(ev, STRIKES, InversionConfig())
    assert np.all(np.abs(h.imag) < 1e-12)
    h = h.real
    assert np.all(h > 0) and np.all(h < 1 / (q - R))
    assert np.all(np.diff(h) <= 0)


@pytest.mark.parametrize("q", [0.5, 1.0, 3.0])
def test_h_small_strike_limit(any_set, q):
    ev = mellin_eval(any_set, q, 40, "corrected")
    h0 = inverse_mellin_h(ev, 1e-6, InversionConfig()).real
    assert h0 == pytest.approx(1 / (q - R), abs=1e-4)
    assert h0 == pytest.approx(ev(2.0).real, abs=1e-4)


def test_h_continuous_across_contour_switch(set_II):
    ev = mellin_eval(set_II, 1.0, 40, "corrected")
    h = inverse_mellin_h(ev, np.array([0.25 - 1e-12, 0.25]), InversionConfig()).real
    # each contour carries its own discretization error, about 1e-5 at the default spacing
    assert abs(h[0] - h[1]) < 1e-4
    fine = inverse_mellin_h(ev, np.array([0.25 - 1e-12, 0.25]), InversionConfig().refined(4)).real
    assert abs(fine[0] - fine[1]) < 1e-6


def test_h_grid_refinement(set_II):
    ev = mellin_eval(set_II, 0.5, 40, "corrected")
    cfg = InversionConfig()
    a = inverse_mellin_h(ev, STRIKES, cfg).real
    b = inverse_mellin_h(ev, STRIKES, cfg.refined()).real
    assert np.max(np.abs(a - b)) < 1e-4


def test_h_window_matches_full_grid(set_I):
    q = 0.5 + 12j
    ev = mellin_eval(set_I, q, 20, "corrected")
    k = np.array([0.3, 1.05, 4.0])
    a = inverse_mellin_h(ev, k, InversionConfig())
    b = inverse_mellin_h(ev, k, InversionConfig(window_tol=None))
    assert np.max(np.abs(a - b)) < 1e-12


def test_h_contour_errors(set_I):
    ev = mellin_eval(set_I, 1.0, 10, "corrected")
    z1 = float(ev.roots.zeta[0])
    with pytest.raises(ContourError):
        inverse_mellin_h(ev, 1.0, InversionConfig(d1=z1))
    with pytest.raises(DomainError):
        inverse_mellin_h(ev, 0.0, InversionConfig())
    with pytest.raises(ContourError):
        inverse_mellin_h(lambda s: s, 1.0, InversionConfig())


# ---------------------------------------------------------------- Laplace

PAIRS = {
    "one": (lambda q: np.ones_like(q), lambda t: np.ones_like(t), 1e-6),
    "t": (lambda q: 1 / q, lambda t: t, 1e-5),
    "exp": (lambda q: q / (q - 0.1), lambda t: np.exp(0.1 * t), 1e-5),
}


@pytest.mark.parametrize("name", sorted(PAIRS))
def test_laplace_round_trip(name):
    h, f, tol = PAIRS[name]
    # u up to 200 resolves t down to 0.1
    cfg = InversionConfig(u_max=200.0, n_laplace=2000)
    t = np.linspace(0.1, 2.0, 20)
    q = cfg.d2 + 1j * laplace_nodes(cfg)
    assert np.max(np.abs(inverse_laplace_f(h(q), t, cfg) - f(t))) <= tol


@pytest.mark.parametrize("name", sorted(PAIRS))
def test_laplace_round_trip_default_domain(name):
    h, f, tol = PAIRS[name]
    cfg = InversionConfig()
    t = np.linspace(0.2, 2.0, 19)
    assert np.max(np.abs(inverse_laplace_f(lambda u: h(cfg.d2 + 1j * u), t, cfg) - f(t))) <= tol


def test_laplace_output_real_and_refines():
    cfg = InversionConfig()
    t = np.array([0.5, 1.0])
    f1 = inverse_laplace_f(lambda u: 1 / (cfg.d2 + 1j * u), t, cfg)
    f2 = inverse_laplace_f(lambda u: 1 / (cfg.d2 + 1j * u), t, cfg.refined())
    assert f1.dtype.kind == "f"
    assert np.max(np.abs(f1 - f2)) < 1e-6


def test_laplace_validation():
    cfg = InversionConfig()
    with pytest.raises(DomainError):
        inverse_laplace_f(np.ones(5), 1.0, cfg)
    with pytest.raises(DomainError):
        inverse_laplace_f(lambda u: np.ones_like(u), 0.0, cfg)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.0, 1.0), t=st.floats(0.3, 2.0))
def test_laplace_exponential_pairs(a, t):
    cfg = InversionConfig()
    f = inverse_laplace_f(lambda u: (cfg.d2 + 1j * u) / (cfg.d2 + 1j * u - a), t, cfg)
    assert f == pytest.approx(np.exp(a * t), rel=1e-5)


def test_config_validation():
    with pytest.raises(DomainError):
        InversionConfig(n_mellin=101)
    with pytest.raises(DomainError):
        InversionConfig(v_max=0.0)
    assert InversionConfig().refined(2).n_laplace == 2 * InversionConfig().n_laplace

