import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infraparticle.dispersion import DispersionModel
from infraparticle.grid import build_grid
from infraparticle.softphoton import (CutoffSchedule, DegenerateFitError, PhaseSpec, QuadratureError, ShellRay,
                                      _gamma_quadrature, axial_sigma_profile, decay_fit_A3, gamma_cutoff_shift,
                                      gamma_difference, gamma_phase, gamma_velocity_lipschitz,
                                      infrared_tail_scalar, loglog_fit, mu_ode_solve, shell_cosine_integral,
                                      sigma_field, tail_derivative)

SCH = CutoffSchedule()


# --- Sigma field -----------------------------------------------------------

def test_sigma_examples():
    np.testing.assert_array_equal(sigma_field([0, 0, 0], [0.1, 0.2, 0.3]), 0.0)
    np.testing.assert_allclose(sigma_field([0.3, 0, 0], [2.0, 0, 0]), 0.0, atol=1e-17)
    np.testing.assert_allclose(sigma_field([0.3, 0, 0], [0, 0, 1.0]), [0.6, 0, 0], atol=1e-16)


def test_sigma_errors():
    with pytest.raises(ValueError):
        sigma_field([0.3, 0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        sigma_field([1.0, 0, 0], [0, 0, 1])


def test_sigma_transverse_on_grid():
    g = build_grid(1e-3, 1.0, 8, 16, 32)
    v = np.array([0.3, -0.1, 0.2])
    S = sigma_field(v, g.k)
    # scale-free form: khat . (|k|^2 Sigma) is dimensionless and O(1)
    assert np.abs(np.sum(S * g.kabs[:, None] ** 2 * g.khat, axis=1)).max() < 1e-13
    bound = 2 * np.linalg.norm(v) / (g.kabs**2 * (1 - np.linalg.norm(v)))
    assert np.all(np.linalg.norm(S, axis=1) <= bound * (1 + 1e-14))


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-1, 1))
def test_axial_profile_matches_phi_quadrature(a, b, c_ax, c):
    v = np.array([a, b, c_ax]) * 0.9
    axis = np.array([0.3, -0.4, 0.5])
    ray = ShellRay(v, axis, 8, 128)
    num = ray.g(np.array([c]))[0] @ (axis / np.linalg.norm(axis))
    assert abs(num - axial_sigma_profile(v, axis, c)) < 1e-11


# --- Shell integral --------------------------------------------------------

def _brute_shell(v, x, s, lo, hi, n=(120, 64, 128)):
    g = build_grid(lo, hi, *n, radial_spacing="linear")
    S = sigma_field(v, g.k)
    ph = np.cos(g.k @ x - g.kabs * s)
    return (S * (ph * g.weights)[:, None]).sum(0)


@pytest.mark.parametrize("x,s", [((1.0, 2.0, 0.5), 5.0), ((3.0, 0.0, 0.0), 2.0),
                                 ((0.5, 0.5, 0.5), 0.3), ((0.0, 0.0, 0.0), 4.0)])
def test_shell_integral_brute_oracle(x, s):
    v = np.array([0.3, 0.1, -0.05])
    a = shell_cosine_integral(v, np.array(x), s, 0.1, 1.0)
    b = _brute_shell(v, np.array(x), s, 0.1, 1.0)
    assert np.abs(a - b).max() < 1e-10 * max(1.0, np.abs(b).max())


def test_shell_integral_convergence():
    v = np.array([0.3, 0.0, 0.0])
    x = 20 * np.array([0.6, 0.8, 0.0])
    a = shell_cosine_integral(v, x, 100.0, 1e-4, 1.0, grid_res=(32, 32))
    b = shell_cosine_integral(v, x, 100.0, 1e-4, 1.0, grid_res=(64, 64))
    assert np.abs(a - b).max() < 1e-8


def test_shell_integral_paths_agree():
    # the far (Legendre) and near (pole subtraction) evaluations overlap at c0 = 1.5
    ray = ShellRay([0.3, 0.0, 0.0], [0.6, 0.8, 0.0])
    X = np.array([100.0 / 1.5])
    np.testing.assert_allclose(ray._far(X, 100.0, 1e-4, 1.0), ray._near(X, 100.0, 1e-4, 1.0), atol=1e-12)


def test_shell_integral_trivial_and_errors():
    np.testing.assert_array_equal(shell_cosine_integral([0, 0, 0], [1, 2, 3], 4.0, 0.1, 1.0), 0.0)
    with pytest.raises(ValueError):
        shell_cosine_integral([0.3, 0, 0], [1, 0, 0], 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        shell_cosine_integral([0.3, 0, 0], [1, 0, 0], 0.0, 0.1, 1.0)


# --- Schedules and fits ------------------------------------------------------

def test_schedule():
    t = np.array([2.0, 10.0, 1e3])
    assert np.all(np.diff(SCH.sigma(t)) < 0) and np.all(np.diff(SCH.sigma_slow(t)) < 0)
    assert np.all(SCH.sigma(t) < SCH.sigma_slow(t))
    assert abs(SCH.freeze_time(SCH.sigma(100.0)) - 100.0 ** (1.5 / 0.8)) < 1e-6
    for kw in ({"beta": 0.9}, {"theta": 1.0}, {"epsilon": 0.0}, {"kappa": 2.0}):
        with pytest.raises(ValueError):
            CutoffSchedule(**kw)


def test_loglog_fit():
    x = np.logspace(0, 3, 6)
    f = loglog_fit(x, 3.0 * x**-1.5)
    assert abs(f.slope + 1.5) < 1e-12 and abs(f.prefactor - 3.0) < 1e-11 and f.r2 == pytest.approx(1.0)
    assert loglog_fit(x, np.zeros(6)).degenerate
    with pytest.raises(DegenerateFitError):
        loglog_fit(x[:3], x[:3])
    with pytest.raises(DegenerateFitError):
        loglog_fit(x, -x)


def test_decay_A3_degenerate_and_errors():
    t = 100.0
    s = t * np.logspace(0, 1, 4)
    assert decay_fit_A3([0, 0, 0], SCH, t, s, n_radii=4, n_directions=2).degenerate
    with pytest.raises(DegenerateFitError):
        decay_fit_A3([0.3, 0, 0], SCH, t, s[:3])
    with pytest.raises(ValueError):
        decay_fit_A3([0.3, 0, 0], SCH, t, s / 10)


def test_decay_A3_log_prefactor():
    # sigma -> sigma^2 doubles |ln sigma|; the sup grows by at most 2.2
    t, v = 464.0, [0.3, 0, 0]
    s = t * np.logspace(0, 2, 5)
    a = decay_fit_A3(v, SCH, t, s, sigma=1e-4).y
    b = decay_fit_A3(v, SCH, t, s, sigma=1e-8).y
    assert np.all(b / a <= 2.2)


# --- Dressing phase ------------------------------------------------------------

SPEC = PhaseSpec((0.25, 0.05, 0.0), (0.2, 0.0, 0.05), 10.0, SCH)


def test_gamma_trivial():
    for method in ("quadrature", "sine_integral"):
        assert gamma_phase(PhaseSpec((0, 0, 0), (0.2, 0, 0), 10.0, SCH), 50.0, method) == 0.0
        assert gamma_phase(PhaseSpec((0.2, 0, 0), (0, 0, 0), 10.0, SCH), 50.0, method) == 0.0
    with pytest.raises(ValueError):
        gamma_phase(SPEC, 0.5)
    with pytest.raises(ValueError):
        gamma_phase(SPEC, 5.0, method="other")


@pytest.mark.parametrize("method", ["quadrature", "sine_integral"])
def test_gamma_freezing_exact(method):
    S = SCH.freeze_time(SPEC.sigma_t)
    assert gamma_phase(SPEC, S * 1.01, method) == gamma_phase(SPEC, S * 1e6, method)


@pytest.mark.parametrize("s", [5.0, 50.0, 1e3])
def test_gamma_dual_route(s):
    a = gamma_phase(SPEC, s, "quadrature")
    b = gamma_phase(SPEC, s, "sine_integral")
    assert abs(a - b) < 1e-12


def test_gamma_brute_oracle():
    # independent 3D shell grid per tau node plus Gauss-Legendre in tau
    spec = PhaseSpec((0.25, 0.05, 0.0), (0.2, 0.0, 0.05), 2.0, SCH)
    S = min(3.0, SCH.freeze_time(spec.sigma_t))
    u = np.array(spec.gradE)
    tau, w = np.polynomial.legendre.leggauss(24)
    tau = 1 + (S - 1) * (tau + 1) / 2
    w = w * (S - 1) / 2
    total = 0.0
    for ti, wi in zip(tau, w):
        g = build_grid(spec.sigma_t, ti ** -SCH.theta, 48, 48, 64, radial_spacing="linear")
        Sg = sigma_field(spec.v_j, g.k)
        ph = np.cos(g.k @ (u * ti) - g.kabs * ti)
        total += wi * u @ (Sg * (ph * g.weights)[:, None]).sum(0)
    brute = -spec.alpha * total
    val = gamma_phase(spec, 3.0)
    assert abs(val / brute - 1) < 1e-5


def test_gamma_quadrature_error():
    with pytest.raises(QuadratureError) as exc:
        _gamma_quadrature([SPEC.v_j], None, SPEC.gradE, SPEC, 1e4, (32, 32), epsabs=1e-15, limit=2)
    assert exc.value.estimate is not None


def test_gamma_difference_dual_route():
    vl = (0.22, 0.06, 0.01)
    a = gamma_difference(SPEC, vl, 40.0, "quadrature")
    b = gamma_difference(SPEC, vl, 40.0, "sine_integral")
    c = gamma_phase(PhaseSpec(vl, SPEC.gradE, SPEC.t, SCH), 40.0) - gamma_phase(SPEC, 40.0)
    assert abs(a - b) < 1e-13 and abs(a - c) < 1e-12


def test_lipschitz_ratio():
    vj = np.array([0.2, 0.05, 0.0])
    e = np.array([0.3, 0.7, 0.2]) / np.linalg.norm([0.3, 0.7, 0.2])
    assert gamma_velocity_lipschitz(SPEC, vj, vj) == 0.0
    for sig in (1e-3, 1e-8):
        spec = PhaseSpec(tuple(vj), (0.22, 0.0, 0.03), 1.0, SCH, sigma=sig)
        r = [gamma_velocity_lipschitz(spec, vj, vj + dv * e) for dv in (1e-1, 1e-2, 1e-3)]
        assert max(r) / min(r) <= 2.0 and np.all(np.isfinite(r))
        r2 = gamma_velocity_lipschitz(spec, vj, vj + 1e-2 * e, "sine_integral")
        assert abs(r2 / r[1] - 1) < 1e-9


def test_cutoff_shift():
    vj, P = (0.2, 0.05, 0.0), (0.2, 0.03, 0.0)
    disp = DispersionModel(sigma_dependence=True)
    assert gamma_cutoff_shift(vj, P, disp, SCH, 100.0, 100.0).measured == 0.0
    rec = gamma_cutoff_shift(vj, P, DispersionModel(), SCH, 100.0, 1000.0)
    assert 0 < rec.ratio <= 1
    a = gamma_cutoff_shift(vj, P, disp, SCH, 100.0, 1000.0)
    b = gamma_cutoff_shift(vj, P, disp, SCH, 100.0, 1000.0, method="quadrature")
    assert abs(a.measured - b.measured) < 1e-12 and a.ratio <= 1
    with pytest.raises(ValueError):
        gamma_cutoff_shift(vj, P, disp, SCH, 100.0, 10.0)


# --- Infrared tail -------------------------------------------------------------

def test_tail_branches():
    t = 100.0
    S = SCH.freeze_time(SCH.sigma(t))
    np.testing.assert_array_equal(infrared_tail_scalar([0.25, 0, 0], [0.2, 0, 0], 1.01 * S, SCH, t), 0.0)
    with pytest.raises(ValueError):
        infrared_tail_scalar([0.25, 0, 0], [0.2, 0, 0], 50.0, SCH, t)
    val = infrared_tail_scalar([0.25, 0, 0], [0.2, 0, 0], 200.0, SCH, t)
    ref = shell_cosine_integral([0.25, 0, 0], np.array([0.2, 0, 0]) * 200, 200.0, SCH.sigma(t), 200.0**-0.8)
    np.testing.assert_array_equal(val, ref)


def test_tail_derivative_fd_consistency():
    v, u, t, s = [0.25, 0.05, 0], [0.2, 0.03, 0], 100.0, 300.0
    d1 = tail_derivative(v, u, s, SCH, t, rel_step=1e-4)
    d2 = tail_derivative(v, u, s, SCH, t, rel_step=2e-4)
    assert np.abs(d1 - d2).max() < 1e-5 * np.abs(d1).max()


# --- mu-ODE ----------------------------------------------------------------------

def test_mu_ode_examples():
    sol = mu_ode_solve(2.0, lambda m: 0.0, 1.0, 1.0)
    assert abs(sol.rk4 - math.exp(-1)) < 1e-10 and abs(sol.closed_form - math.exp(-1)) < 1e-15
    sol = mu_ode_solve(0.0, lambda m: 1.0, 0.0, 1.0)
    assert abs(sol.rk4 - 1) < 1e-12 and abs(sol.closed_form - 1) < 1e-14
    with pytest.raises(ValueError):
        mu_ode_solve(-1.0, lambda m: 0.0, 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 10), st.lists(st.complex_numbers(max_magnitude=3), min_size=1, max_size=4),
       st.complex_numbers(max_magnitude=3), st.floats(0.1, 2.0))
def test_mu_ode_polynomial_sources(C, coeffs, M0, mu_end):
    r = lambda m: sum(c * m**i for i, c in enumerate(coeffs))
    sol = mu_ode_solve(C, r, M0, mu_end)
    assert abs(sol.rk4 - sol.closed_form) < 1e-8
