import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from kepler_kit.criteria import ellipsoid_closed_forms
from kepler_kit.errors import NotCompact
from kepler_kit.kepler import M_of_n, G_of_e, kepler_action, kepler_period, kepler_volume
from kepler_kit.model import (
    Perturbation,
    SystemParams,
    make_ellipsoid_perturbation,
    make_pyramidal_perturbation,
    make_zero_perturbation,
    potential,
)
from kepler_kit.quad import (
    Functionals,
    action_and_period,
    contact_volume,
    gauss_legendre_doubling,
    hill_region,
    integral_selftests,
    orbit_integrals,
    periodic_half_integral,
    perturbation_functionals,
    planar_potential,
    theta_functionals,
    turning_points,
    v_tilde,
)

ELL = make_ellipsoid_perturbation()
PYR2 = make_pyramidal_perturbation(2)


def test_selftests_green():
    rep = integral_selftests()
    assert rep.ok, rep.failures
    assert max(e.abs_err for e in rep.entries) <= 1e-10
    names = [e.name for e in rep.entries]
    assert any("a=0.25" in n for n in names)


def test_selftests_a_zero():
    # at a = 0 the first integrand is 1 (value pi) and the second is cos^2 (value pi/2)
    rep = integral_selftests(a_values=(0.0,), e_values=(), n_values=())
    assert rep.ok
    first, second = rep.entries
    assert first.value == pytest.approx(math.pi, abs=1e-12)
    assert second.value == pytest.approx(math.pi / 2, abs=1e-12)


def test_selftest_value_a_quarter():
    rep = integral_selftests(a_values=(0.25,), e_values=(), n_values=())
    assert rep.entries[0].value == pytest.approx(math.pi / 1.5, abs=1e-12)


def test_gauss_legendre_doubling():
    val, err = gauss_legendre_doubling(np.exp, 0.0, 1.0, 1e-13)
    assert val == pytest.approx(math.e - 1, abs=1e-14)
    assert err <= 1e-13


def test_periodic_half_integral():
    val, _ = periodic_half_integral(lambda t: 1 / (2 + np.cos(t)), 1e-13)
    assert val == pytest.approx(math.pi / math.sqrt(3), abs=1e-13)


def test_turning_points_kepler():
    r1, r2 = turning_points(SystemParams(1.0, -0.375))
    assert r1 == pytest.approx(2 / 3, abs=1e-14)
    assert r2 == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("pert", [ELL, PYR2], ids=lambda p: p.name)
def test_turning_points_are_roots(pert):
    p = SystemParams(1.0, -0.375, 0.02, pert)
    for r in turning_points(p):
        assert float(planar_potential(r, p)) == pytest.approx(p.h, abs=1e-13)


def test_orbit_integrals_kepler():
    oi = orbit_integrals(SystemParams(1.0, -0.375))
    assert oi.action == pytest.approx(kepler_action(1.0, -0.375), rel=1e-12)
    assert oi.tau_period == pytest.approx(2 * math.pi, abs=1e-9)
    assert oi.time_period == pytest.approx(kepler_period(1.0, -0.375), rel=1e-10)
    assert oi.time_period == pytest.approx(9.67359, abs=1e-5)
    a, t = action_and_period(SystemParams(1.0, -0.375))
    assert (a, t) == (oi.action, oi.tau_period)


def _orbit_by_ode(p):
    """Independent oracle: integrate the planar motion from the inner turning point."""
    r1, _ = turning_points(p)
    w2 = p.omega ** 2
    fr = p.perturbation.df_dr

    def rhs(t, s):
        pr, r = s[0], s[1]
        return [w2 / r ** 3 - 1 / r ** 2 - p.eps * fr(r, 0.0, p.eps), pr, p.w / r ** 2, pr * pr]

    def back(t, s):
        return s[0]

    back.direction = 1.0
    t_cap = 2 * kepler_period(p.omega, p.h)
    sol = solve_ivp(rhs, (0, t_cap), [0.0, r1, 0.0, 0.0], method="DOP853", rtol=1e-13,
                    atol=1e-15, events=back)
    k = [i for i, t in enumerate(sol.t_events[0]) if t > 1e-6][0]
    s = sol.y_events[0][k]
    return sol.t_events[0][k], s[2], s[3]


@pytest.mark.parametrize("pert", [ELL, PYR2], ids=lambda p: p.name)
def test_orbit_integrals_against_ode(pert):
    p = SystemParams(0.8, -0.5, 0.01, pert)
    oi = orbit_integrals(p)
    t_per, tau_per, act = _orbit_by_ode(p)
    assert oi.time_period == pytest.approx(t_per, rel=1e-9)
    assert oi.tau_period == pytest.approx(tau_per, rel=1e-9)
    assert oi.action == pytest.approx(act, rel=1e-9)


def test_hill_region_kepler_extent():
    p = SystemParams(1.0, -0.375)
    region = hill_region(p)
    lo, hi = region.r_range
    assert lo == pytest.approx(2 / 3, abs=1e-12)
    assert hi == pytest.approx(2.0, abs=1e-12)
    # z-extent from the spherical boundary rho_+(phi) = (1 + sqrt(1 + 2 h omega^2 / cos^2 phi)) / (-2h)
    h = p.h
    phi_max = math.acos(math.sqrt(-2 * h))
    phis = np.linspace(0, phi_max, 200001)
    rho = (1 + np.sqrt(np.maximum(1 + 2 * h / np.cos(phis) ** 2, 0))) / (-2 * h)
    z_ref = float(np.max(rho * np.sin(phis)))
    assert region.z_extent(4096) == pytest.approx(z_ref, rel=1e-5)


def test_hill_region_boundary_on_level_set():
    p = SystemParams(1.0, -0.375, 0.01, ELL)
    pts = hill_region(p).boundary_points(64)
    vals = potential(pts[:, 0], pts[:, 1], p)
    assert np.allclose(vals, p.h, atol=1e-12)


def test_hill_region_perturbed_close_to_kepler():
    eps = 1e-3
    a = hill_region(SystemParams(1.0, -0.375)).boundary_points(256)
    b = hill_region(SystemParams(1.0, -0.375, eps, ELL)).boundary_points(256)
    assert np.max(np.linalg.norm(a - b, axis=1)) <= 10 * eps


def test_hill_region_not_compact():
    with pytest.raises(NotCompact):
        hill_region(SystemParams(1.0, 0.1))


def test_contact_volume_kepler_identity():
    vol, err = contact_volume(SystemParams(1.0, -0.375), return_error=True)
    assert vol == pytest.approx(kepler_volume(1.0, -0.375), rel=1e-9)
    assert err < 1e-6 * vol


def test_contact_volume_small_eccentricity():
    omega = 1.0
    e = 1e-2
    h = (e * e - 1) / 2
    vol = contact_volume(SystemParams(omega, h))
    assert vol == pytest.approx(kepler_volume(omega, h), rel=1e-6)
    assert vol < 1e-6


@pytest.mark.parametrize("omega", [0.5, 1.0, 2.0])
def test_ellipsoid_functionals_match_closed_forms(omega):
    h = -0.375 / omega ** 2
    fn = perturbation_functionals(SystemParams(omega, h, 0.0, ELL))
    ref = ellipsoid_closed_forms(omega, h)
    for name in ("V_tilde", "A_tilde", "T_tilde", "E_f", "D_f"):
        assert getattr(fn, name) == pytest.approx(getattr(ref, name), rel=1e-8), name


def test_ellipsoid_reference_values():
    fn = perturbation_functionals(SystemParams(1.0, -0.375, 0.0, ELL))
    assert fn.V_tilde == pytest.approx(-math.pi * 0.25 * (4 - 0.75) / 4, rel=1e-9)
    assert fn.A_tilde == pytest.approx(-math.pi, rel=1e-10)
    assert fn.T_tilde == pytest.approx(6 * math.pi, rel=1e-10)
    assert fn.E_f == pytest.approx(12 * math.pi, rel=1e-10)
    assert fn.D_f == pytest.approx((12 * math.pi) ** 2, rel=1e-10)


def test_pyramid_reference_values():
    fn = perturbation_functionals(SystemParams(1.0, -0.375, 0.0, PYR2))
    e = 0.5
    s = math.sqrt(1 - e * e)
    m = M_of_n(2)
    assert fn.A_tilde == pytest.approx(-m * math.pi / (2 * s), rel=1e-10)
    d_ref = (4 - m) ** 2 * math.pi ** 2 * G_of_e(e) ** 2 / (4 * (1 - e * e))
    assert fn.D_f == pytest.approx(d_ref, rel=1e-10)
    assert fn.T_tilde == pytest.approx(0.0, abs=1e-12)


def test_zero_perturbation_functionals():
    fn = perturbation_functionals(SystemParams(1.0, -0.375, 0.0, make_zero_perturbation()))
    for name in ("V_tilde", "A_tilde", "T_tilde", "E_f", "D_f"):
        assert getattr(fn, name) == 0.0


def test_v_tilde_half_region_symmetry():
    for pert in (ELL, PYR2):
        p = SystemParams(1.0, -0.375, 0.0, pert)
        full, _ = v_tilde(p, rtol=1e-12)
        half, _ = v_tilde(p, rtol=1e-12, half=True)
        assert half == pytest.approx(full, rel=1e-10)


def test_sign_flip_antisymmetry():
    p = SystemParams(1.0, -0.18, 0.0, PYR2)
    a = perturbation_functionals(p)
    b = perturbation_functionals(SystemParams(1.0, -0.18, 0.0, PYR2.negated()))
    for name in ("V_tilde", "A_tilde", "E_f"):
        assert getattr(b, name) == pytest.approx(-getattr(a, name), rel=1e-12)
    assert b.T_tilde == pytest.approx(-a.T_tilde, abs=1e-12)
    assert b.D_f == pytest.approx(a.D_f, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(e=st.floats(0.05, 0.95), n=st.integers(2, 60))
def test_d_bounded_by_e_squared(e, n):
    h = (e * e - 1) / 2
    th = theta_functionals(SystemParams(1.0, h, 0.0, make_pyramidal_perturbation(n)))
    assert th["D_f"] <= th["E_f"] ** 2


@pytest.mark.parametrize("pert,h", [(ELL, -0.375), (PYR2, -0.18)], ids=["ellipsoid", "pyramid2"])
def test_finite_difference_derivatives(pert, h):
    eps = 1e-4
    p = SystemParams(1.0, h, 0.0, pert)
    fn = perturbation_functionals(p)
    up = perturbation_functionals(p.with_eps(eps))
    dn = perturbation_functionals(p.with_eps(-eps))
    d_vol = (up.vol - dn.vol) / (2 * eps)
    d_act = (up.action - dn.action) / (2 * eps)
    d_per = (up.period - dn.period) / (2 * eps)
    assert d_vol == pytest.approx(-4 * math.pi * fn.V_tilde, rel=1e-3)
    assert d_act == pytest.approx(-2 * fn.A_tilde, rel=1e-3)
    scale = max(abs(fn.T_tilde), 1e-3 * fn.period)
    assert abs(d_per - fn.T_tilde) <= 1e-3 * scale


def test_functional_error_estimates_and_json():
    fn = perturbation_functionals(SystemParams(1.0, -0.375, 0.0, ELL))
    d = fn.to_json_dict()
    for k in ("vol", "action", "period", "v_tilde", "a_tilde", "t_tilde", "e_f", "d_f"):
        assert k in d and f"{k}_err" in d
        assert d[f"{k}_err"] < 1e-6
    assert d["numeric_partials"] is False


def test_numeric_partials_flag_propagates():
    pert = Perturbation.from_function("ell-fd", ELL.f)
    fn = perturbation_functionals(SystemParams(1.0, -0.375, 0.0, pert))
    assert fn.numeric_partials
    assert fn.E_f == pytest.approx(12 * math.pi, rel=1e-5)


def test_kepler_tau_period_independent_of_energy():
    for omega, x in ((0.5, -0.2), (2.0, -0.9), (1.0, -0.01)):
        h = x / (2 * omega ** 2)
        _, tau = action_and_period(SystemParams(omega, h))
        assert tau == pytest.approx(2 * math.pi, abs=1e-9)


def test_turning_points_brentq_oracle():
    p = SystemParams(1.0, -0.375, 0.05, ELL)
    r1, r2 = turning_points(p)
    g = lambda r: float(planar_potential(r, p)) - p.h
    assert r1 == pytest.approx(brentq(g, 0.3, 1.0, xtol=1e-15), abs=1e-13)
    assert r2 == pytest.approx(brentq(g, 1.2, 3.0, xtol=1e-15), abs=1e-13)


def test_functionals_dataclass_defaults():
    f = Functionals(1.0, 1.0, 2 * math.pi, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert f.to_json_dict()["v_tilde_err"] == 0.0
