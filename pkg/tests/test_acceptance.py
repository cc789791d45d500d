"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Each test records its line in ACCEPTANCE_LINES; tests/conftest.py prints them
in the pytest terminal summary.  Runtimes are wall-clock on one core.
"""

import math
import time

import numpy as np
import pytest

from kepler_kit.criteria import Verdict, crosscheck, evaluate
from kepler_kit.kepler import M_of_n, brake_pr_oracle, kepler_action, kepler_scalars
from kepler_kit.model import Stability, SystemParams, make_ellipsoid_perturbation, make_pyramidal_perturbation
from kepler_kit.orbits import brake_f2, hopf_link_check, planar_orbit, rotation_number, shoot_brake_orbit
from kepler_kit.quad import action_and_period, contact_volume, integral_selftests, perturbation_functionals
from kepler_kit.retmap import area_preservation_test, return_map, search_periodic_orbits, section_disk

ACCEPTANCE_LINES: list[str] = []


def _record(n: int, ok: bool, detail: str, elapsed: float, limit: float) -> None:
    within = elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    line = f"{status} criterion {n}: {detail} [{elapsed:.1f} s, limit {limit:g} s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


def _h(e, omega):
    return (e * e - 1) / (2 * omega * omega)


def _systems():
    return [("ellipsoid", make_ellipsoid_perturbation()),
            ("pyramid:2", make_pyramidal_perturbation(2)),
            ("pyramid:3", make_pyramidal_perturbation(3))]


def test_criterion_1_kepler_volume_identity():
    t0 = time.perf_counter()
    worst_vol = worst_act = 0.0
    for omega in (0.5, 1.0, 2.0):
        for e in np.round(np.arange(0.1, 0.95, 0.1), 2):
            p = SystemParams(omega, _h(e, omega))
            a_closed = kepler_action(omega, p.h)
            vol = contact_volume(p)
            act, _ = action_and_period(p)
            worst_vol = max(worst_vol, abs(vol - a_closed ** 2) / a_closed ** 2)
            worst_act = max(worst_act, abs(act - a_closed) / a_closed)
    ok = worst_vol <= 1e-6 and worst_act <= 1e-8
    _record(1, ok, f"Vol = A^2 rel err {worst_vol:.2e} (<= 1e-6), A rel err {worst_act:.2e} (<= 1e-8)",
            time.perf_counter() - t0, 60)


def test_criterion_2_quadrature_oracles():
    t0 = time.perf_counter()
    rep = integral_selftests(a_values=(0.1, 0.5, 0.9), e_values=(0.1, 0.5, 0.9),
                             n_values=(0, 1, 2, 4), tol=1e-10)
    worst = max(e.abs_err for e in rep.entries)
    _record(2, rep.ok, f"{len(rep.entries)} closed-form integrals, max abs err {worst:.2e} (<= 1e-10)",
            time.perf_counter() - t0, 10)


def test_criterion_3_derivative_formulas():
    t0 = time.perf_counter()
    eps = 1e-4
    worst = 0.0
    for _, pert in _systems():
        for h in (-0.375, -0.18):
            p = SystemParams(1.0, h, 0.0, pert)
            fn = perturbation_functionals(p)
            up, dn = p.with_eps(eps), p.with_eps(-eps)
            d_vol = (contact_volume(up) - contact_volume(dn)) / (2 * eps)
            a_up, t_up = action_and_period(up)
            a_dn, t_dn = action_and_period(dn)
            d_act = (a_up - a_dn) / (2 * eps)
            d_per = (t_up - t_dn) / (2 * eps)
            worst = max(worst, abs(d_vol + 4 * math.pi * fn.V_tilde) / abs(4 * math.pi * fn.V_tilde))
            worst = max(worst, abs(d_act + 2 * fn.A_tilde / p.omega) / abs(2 * fn.A_tilde / p.omega))
            # T~ vanishes for the pyramid (up to roundoff); the error is then taken relative to 2 pi
            t_scale = abs(fn.T_tilde) if abs(fn.T_tilde) > 1e-12 * fn.period else fn.period
            worst = max(worst, abs(d_per - fn.T_tilde) / t_scale)
    _record(3, worst <= 1e-3, f"central differences at eps=1e-4, max rel err {worst:.2e} (<= 1e-3)",
            time.perf_counter() - t0, 120)


def test_criterion_4_rotation_number():
    t0 = time.perf_counter()
    rot0 = rotation_number(SystemParams(1.0, -0.375), periods=16)
    ell = make_ellipsoid_perturbation()
    base = SystemParams(1.0, -0.375, 0.0, ell)
    plus = rotation_number(base.with_eps(1e-3), periods=16)
    minus = rotation_number(base.with_eps(-1e-3), periods=16)
    drot = (plus.rot - minus.rot) / 2e-3
    drot_err = abs(drot - 6.0) / 6.0
    stab = {name: rotation_number(SystemParams(1.0, -0.375, 1e-3, pert), periods=16).stability
            for name, pert in _systems()}
    ok = (abs(rot0.rot - 1) <= 1e-6 and drot_err <= 1e-2
          and all(s is Stability.ELLIPTIC for s in stab.values()))
    detail = (f"Rot0 = {rot0.rot:.9f}, ellipsoid dRot/deps = {drot:.5f} vs 6 (rel {drot_err:.1e}), "
              + ", ".join(f"{k} {v.value}" for k, v in stab.items()))
    _record(4, ok, detail, time.perf_counter() - t0, 120)


def test_criterion_5_brake_orbit_shooting():
    t0 = time.perf_counter()
    omega, h = 1.0, -0.375
    kep = SystemParams(omega, h)
    ks = kepler_scalars(omega, h)
    rs = np.linspace(ks.r_min, ks.r_max, 22)[1:-1]
    f2_err = max(abs(brake_f2(r, kep) - brake_pr_oracle(r, omega, h)) for r in rs)
    root_err = abs(shoot_brake_orbit(kep).r0 - omega / math.sqrt(-2 * h))
    cont = []
    for name, pert in (("ellipsoid", make_ellipsoid_perturbation()), ("pyramid:3", make_pyramidal_perturbation(3))):
        p = SystemParams(omega, h, 1e-2, pert)
        b = shoot_brake_orbit(p)
        cont.append((name, b.eps_reached, b.symmetry_residual, hopf_link_check(b, planar_orbit(p))))
    ok = (f2_err <= 1e-7 and root_err <= 1e-8
          and all(eps == 1e-2 and res <= 1e-7 and link == 1 for _, eps, res, link in cont))
    detail = (f"f2 err {f2_err:.1e} on 20 points, root err {root_err:.1e}; "
              + ", ".join(f"{n} eps={e:g} sym {r:.1e} link {k}" for n, e, r, k in cont))
    _record(5, ok, detail, time.perf_counter() - t0, 120)


def test_criterion_6_return_map():
    t0 = time.perf_counter()
    kep = SystemParams(1.0, -0.375)
    ident = max(float(np.linalg.norm(return_map(pt.as_array(), kep)[0] - pt.as_array()))
                for pt in section_disk(kep).grid(10, 10))
    p = SystemParams(1.0, -0.375, 1e-3, make_ellipsoid_perturbation())
    area = area_preservation_test(p)
    b = shoot_brake_orbit(p)
    x = np.array([b.crossing_state[2], b.crossing_state[0]])
    fixed = float(np.linalg.norm(return_map(x, p)[0] - x))
    ok = ident <= 1e-7 and area.max_deviation <= 1e-5 and fixed <= 1e-6
    detail = (f"eps=0 identity {ident:.1e} (<= 1e-7), ellipsoid eps=1e-3 max |det J - 1| "
              f"{area.max_deviation:.1e} (<= 1e-5), brake crossing fixed to {fixed:.1e} (<= 1e-6)")
    _record(6, ok, detail, time.perf_counter() - t0, 180)


def test_criterion_7_criteria_verdicts():
    t0 = time.perf_counter()
    ell = make_ellipsoid_perturbation()
    bad = []
    worst = 0.0
    for e in np.round(np.arange(0.05, 0.96, 0.05), 2):
        p = SystemParams(1.0, _h(e, 1.0), 0.0, ell)
        rep = evaluate(p)
        if rep.verdict is not Verdict.VIA_II:
            bad.append(f"ellipsoid e={e}")
        cc = crosscheck(p, numeric=rep.functionals, with_rotation=False)
        worst = max([worst] + [c.error for c in cc.entries])
        if not cc.ok:
            bad.append(f"ellipsoid e={e} closed forms {cc.mismatches}")
    for n in (2, 3, 10, 100, 472):
        p = SystemParams(1.0, -0.375, 0.0, make_pyramidal_perturbation(n))
        rep = evaluate(p)
        if rep.verdict is not Verdict.VIA_II:
            bad.append(f"pyramid n={n}")
        cc = crosscheck(p, numeric=rep.functionals, with_rotation=False)
        worst = max([worst] + [c.error for c in cc.entries if c.name != "V_tilde<=bound"])
        if not cc.ok:
            bad.append(f"pyramid n={n} closed forms {cc.mismatches}")
    detail = (f"InfinitelyMany_via_ii on 19 ellipsoid e values and pyramid n in 2,3,10,100,472; "
              f"closed forms max rel err {worst:.1e} (<= 1e-6)")
    if bad:
        detail += "; failures: " + "; ".join(bad)
    _record(7, not bad, detail, time.perf_counter() - t0, 180)


def test_criterion_8_pyramid_bound():
    t0 = time.perf_counter()
    below = all(2 * n > M_of_n(n) for n in range(2, 473))
    at_473 = 2 * 473 <= M_of_n(473)
    detail = f"2n > M(n) for 2 <= n <= 472: {below}; 2*473 - M(473) = {2 * 473 - M_of_n(473):.4f} <= 0: {at_473}"
    _record(8, below and at_473, detail, time.perf_counter() - t0, 10)


def test_criterion_9_periodic_point_search():
    # e = 0.95 level set: the twist of the return map is wide enough for several period-one
    # orbits; the default seeds are the disk centre guess and four interior grid corners
    t0 = time.perf_counter()
    omega, e = 1.0, 0.95
    p = SystemParams(omega, _h(e, omega), 1e-2, make_ellipsoid_perturbation())
    orbits = search_periodic_orbits(p, 5, n_random=0)
    detail = (f"ellipsoid eps=1e-2, e=0.95, k <= 5: {len(orbits)} distinct orbits (>= 2) at "
              + ", ".join(f"k={q.k} (r={q.point.r:.4f}, p_r={q.point.p_r:+.4f})" for q in orbits))
    _record(9, len(orbits) >= 2, detail, time.perf_counter() - t0, 300)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
