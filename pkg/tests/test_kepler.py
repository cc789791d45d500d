import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad as scipy_quad
from scipy.optimize import brentq

from kepler_kit.errors import DomainError
from kepler_kit.kepler import (
    C_of_e,
    G_of_e,
    M_of_n,
    brake_pr_oracle,
    cosine_series_integral,
    eccentricity,
    kepler_action,
    kepler_period,
    kepler_scalars,
    kepler_volume,
    orbit_radius,
    upper_boundary_z,
)

A_EXACT = 2 * math.pi * (2 / math.sqrt(3) - 1)


def test_scalars_reference_point():
    ks = kepler_scalars(1.0, -0.375)
    assert ks.e == pytest.approx(0.5, abs=1e-15)
    assert ks.r_min == pytest.approx(2 / 3, abs=1e-15)
    assert ks.r_max == pytest.approx(2.0, abs=1e-15)
    assert ks.action == pytest.approx(A_EXACT, rel=1e-15)
    assert ks.volume == pytest.approx(A_EXACT ** 2, rel=1e-15)
    assert ks.circular_brake_r == pytest.approx(1 / math.sqrt(0.75), rel=1e-15)
    assert ks.period == pytest.approx(9.673596609249161, rel=1e-12)
    assert ks.C == pytest.approx(2 / math.sqrt(3) - 1, rel=1e-15)
    assert set(ks.to_dict()) >= {"e", "action", "volume", "period"}


def test_period_is_keplers_third_law():
    # T = 2 pi a^(3/2) with a = omega^2 / (1 - e^2)
    for omega, h in ((1.0, -0.375), (0.5, -1.2), (2.0, -0.05)):
        e = eccentricity(omega, h)
        a = omega ** 2 / (1 - e * e)
        assert kepler_period(omega, h) == pytest.approx(2 * math.pi * a ** 1.5, rel=1e-14)


def test_action_by_independent_quadrature():
    # action as the enclosed (p_r, r) area: 2 * int sqrt(2(h - W)) dr between the turning points
    omega, h = 1.0, -0.375
    ks = kepler_scalars(omega, h)

    def pr(r):
        return math.sqrt(max(2 * (h - omega ** 2 / (2 * r * r) + 1 / r), 0.0))

    val, _ = scipy_quad(pr, ks.r_min, ks.r_max, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert 2 * val == pytest.approx(kepler_action(omega, h), rel=1e-9)


def test_outside_window_raises():
    for h in (-0.6, -0.5, 0.0, 0.1):
        with pytest.raises(DomainError):
            kepler_scalars(1.0, h)


@given(omega=st.floats(0.2, 5.0), x=st.floats(-0.999, -0.001))
def test_rmin_above_half_omega_squared(omega, x):
    h = x / (2 * omega ** 2)
    ks = kepler_scalars(omega, h)
    assert ks.r_min > omega ** 2 / 2
    assert ks.r_min < ks.circular_brake_r < ks.r_max
    assert ks.volume == pytest.approx(ks.action ** 2, rel=1e-14)


@given(omega=st.floats(0.2, 5.0), x=st.floats(-0.999, -0.001))
def test_volume_depends_on_sign_free_omega(omega, x):
    h = x / (2 * omega ** 2)
    assert kepler_volume(omega, h) == kepler_volume(-omega, h)


def test_orbit_radius_examples():
    assert orbit_radius(0.0, 1.0, -0.375) == pytest.approx(2 / 3, abs=1e-15)
    assert orbit_radius(math.pi, 1.0, -0.375) == pytest.approx(2.0, abs=1e-15)
    assert orbit_radius(math.pi / 2, 1.0, -0.375) == pytest.approx(1.0, abs=1e-15)


def test_orbit_radius_lies_on_energy_surface():
    # p_r = dr/dt along the conic, with dtheta/dt = omega / r^2, must close the energy
    omega, h = 1.3, -0.2
    e = eccentricity(omega, h)
    for th in np.linspace(0, 2 * math.pi, 13):
        r = orbit_radius(th, omega, h)
        drdth = omega ** 2 * e * math.sin(th) / (1 + e * math.cos(th)) ** 2
        p_r = drdth * omega / r ** 2
        energy = 0.5 * p_r ** 2 + omega ** 2 / (2 * r * r) - 1 / r
        assert energy == pytest.approx(h, abs=1e-13)


def test_brake_oracle_examples():
    assert brake_pr_oracle(1 / math.sqrt(0.75), 1.0, -0.375) == pytest.approx(0.0, abs=1e-15)
    assert brake_pr_oracle(2 / 3, 1.0, -0.375) == pytest.approx(0.5, abs=1e-15)
    assert brake_pr_oracle(2.0, 1.0, -0.375) == pytest.approx(-0.5, abs=1e-15)
    with pytest.raises(DomainError):
        brake_pr_oracle(0.0, 1.0, -0.375)


@given(omega=st.floats(0.3, 3.0), x=st.floats(-0.95, -0.05))
def test_brake_oracle_unique_root(omega, x):
    h = x / (2 * omega ** 2)
    ks = kepler_scalars(omega, h)
    root = brentq(brake_pr_oracle, ks.r_min, ks.r_max, args=(omega, h), xtol=1e-14)
    assert root == pytest.approx(omega / math.sqrt(-2 * h), rel=1e-12)
    rs = np.linspace(ks.r_min, ks.r_max, 50)
    vals = [brake_pr_oracle(r, omega, h) for r in rs]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_upper_boundary_on_zero_velocity_curve():
    omega, h = 1.0, -0.375
    for r in np.linspace(0.7, 1.99, 15):
        z = float(upper_boundary_z(r, omega, h))
        v = omega ** 2 / (2 * r * r) - 1 / math.hypot(r, z)
        assert v == pytest.approx(h, abs=1e-12)
    assert float(upper_boundary_z(2 / 3, omega, h)) == pytest.approx(0.0, abs=1e-7)


def test_M_examples():
    assert M_of_n(2) == pytest.approx(0.5, abs=1e-16)
    assert M_of_n(3) == pytest.approx(2 / math.sqrt(3), abs=1e-15)
    with pytest.raises(DomainError):
        M_of_n(1)


def test_M_by_plain_summation():
    for n in (2, 5, 17, 100, 473):
        plain = 0.5 * sum(1 / math.sin(i * math.pi / n) for i in range(1, n))
        assert M_of_n(n) == pytest.approx(plain, rel=1e-13)


def test_M_threshold_at_472():
    assert all(2 * n > M_of_n(n) for n in range(2, 473))
    assert 2 * 473 <= M_of_n(473)


def test_M_strictly_increasing():
    vals = [M_of_n(n) for n in range(2, 600)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_G_examples():
    assert G_of_e(0.0) == 1.0
    assert G_of_e(0.5) == pytest.approx(math.sqrt(1 - (0.5 / (1 + math.sqrt(0.75))) ** 4), rel=1e-15)
    for e in (0.1, 0.5, 0.9):
        assert G_of_e(e) / math.sqrt(1 - e * e) > 1


@given(e=st.floats(1e-6, 0.999))
def test_G_ratio_above_one(e):
    assert G_of_e(e) > 0
    assert G_of_e(e) / math.sqrt(1 - e * e) > 1


def test_C_of_e():
    assert C_of_e(0.0) == 0.0
    assert C_of_e(0.5) == pytest.approx(2 / math.sqrt(3) - 1, rel=1e-15)
    with pytest.raises(DomainError):
        C_of_e(1.0)


@pytest.mark.parametrize("n", [0, 1, 2, 4])
@pytest.mark.parametrize("e", [0.1, 0.5, 0.9])
def test_cosine_series_against_scipy(n, e):
    ref, _ = scipy_quad(lambda t: math.cos(n * t) / (1 + e * math.cos(t)), 0, math.pi,
                        epsabs=1e-13, epsrel=1e-12, limit=200)
    assert cosine_series_integral(n, e) == pytest.approx(ref, abs=1e-12)


def test_cosine_series_examples():
    assert cosine_series_integral(0, 0.5) == pytest.approx(math.pi / math.sqrt(0.75), rel=1e-15)
    assert cosine_series_integral(1, 0.5) == pytest.approx(-A_EXACT, rel=1e-14)
    for n in (1, 2, 5):
        assert abs(cosine_series_integral(n, 1e-9)) < 1e-8
