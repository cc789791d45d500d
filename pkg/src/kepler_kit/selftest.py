"""Quick end-to-end self checks: quadrature oracles plus one invariant per module."""

from __future__ import annotations

import math

import numpy as np

from .errors import KeplerKitError


def _check(name: str, value: float, reference: float, tol: float) -> dict:
    err = abs(value - reference)
    return {"name": name, "value": value, "reference": reference, "error": err, "tol": tol,
            "ok": bool(err <= tol)}


def _model_checks() -> list[dict]:
    from .model import (EnergySurfaceClass, PhaseState, SystemParams, classify_kepler_surface,
                        hamiltonian, make_ellipsoid_perturbation)

    p = SystemParams(1.0, -0.375, 0.01, make_ellipsoid_perturbation())
    a = hamiltonian(PhaseState(0.1, 0.2, 1.3, 0.4), p)
    b = hamiltonian(PhaseState(0.1, -0.2, 1.3, -0.4), p)
    cls = classify_kepler_surface(1.0, -0.375)
    return [
        _check("model: H symmetric under (p_z, z) -> (-p_z, -z)", a, b, 1e-15),
        _check("model: (1, -0.375) is CompactS3", float(cls == EnergySurfaceClass.COMPACT_S3), 1.0, 0.0),
    ]


def _kepler_checks() -> list[dict]:
    from .kepler import M_of_n, kepler_scalars

    ks = kepler_scalars(1.0, -0.375)
    return [
        _check("kepler: r_min + r_max = 2a", ks.r_min + ks.r_max, 2 * ks.a, 1e-13),
        _check("kepler: 2 * 472 > M(472)", float(2 * 472 > M_of_n(472)), 1.0, 0.0),
        _check("kepler: 2 * 473 <= M(473)", float(2 * 473 <= M_of_n(473)), 1.0, 0.0),
    ]


def _quad_checks() -> list[dict]:
    from .kepler import kepler_action, kepler_volume
    from .model import SystemParams
    from .quad import action_and_period, contact_volume

    p = SystemParams(1.0, -0.375)
    act, tau = action_and_period(p)
    vol = contact_volume(p)
    return [
        _check("quad: action matches closed form", act, kepler_action(1.0, -0.375), 1e-9),
        _check("quad: tau-period is 2 pi at eps = 0", tau, 2 * math.pi, 1e-9),
        _check("quad: Vol = A^2", vol / kepler_volume(1.0, -0.375), 1.0, 1e-6),
    ]


def _flow_checks() -> list[dict]:
    from .flow import integrate
    from .kepler import kepler_period
    from .model import SystemParams, make_ellipsoid_perturbation
    from .retmap import SectionPoint, lift

    p = SystemParams(1.0, -0.375, 0.01, make_ellipsoid_perturbation())

    y0 = lift(SectionPoint(1.2, 0.1), p)
    tr = integrate(y0, p, kepler_period(1.0, -0.375), tol=1e-11)
    return [_check("flow: energy drift over one Kepler period", tr.energy_drift, 0.0, 1e-8)]


def _orbit_checks() -> list[dict]:
    from .kepler import brake_pr_oracle
    from .model import SystemParams
    from .orbits import brake_f2

    p = SystemParams(1.0, -0.375)
    r = 0.9
    return [_check("orbits: Kepler brake f2 matches its closed form", brake_f2(r, p),
                   brake_pr_oracle(r, 1.0, -0.375), 1e-7)]


def _retmap_checks() -> list[dict]:
    from .model import SystemParams
    from .retmap import return_map

    p = SystemParams(1.0, -0.375)
    x = np.array([1.5, 0.2])
    img, _ = return_map(x, p)
    return [_check("retmap: eps = 0 return map is the identity", float(np.linalg.norm(img - x)), 0.0, 1e-7)]


def _criteria_checks() -> list[dict]:
    from .criteria import Verdict, evaluate
    from .model import SystemParams, make_ellipsoid_perturbation

    rep = evaluate(SystemParams(1.0, -0.375, 0.0, make_ellipsoid_perturbation()))
    return [_check("criteria: ellipsoid verdict at (1, -0.375)",
                   float(rep.verdict == Verdict.VIA_II), 1.0, 0.0)]


def run_selftests() -> dict:
    """Return {"ok", "integrals", "checks"}; a raised error counts as a failed check."""
    from .quad import integral_selftests

    integrals = integral_selftests()
    checks = [{"name": "quad: integral oracles", "value": max(e.abs_err for e in integrals.entries),
               "reference": 0.0, "error": max(e.abs_err for e in integrals.entries),
               "tol": integrals.tol, "ok": integrals.ok}]
    for group in (_model_checks, _kepler_checks, _quad_checks, _flow_checks, _orbit_checks,
                  _retmap_checks, _criteria_checks):
        try:
            checks.extend(group())
        except KeplerKitError as exc:
            checks.append({"name": group.__name__.strip("_"), "value": None, "reference": None,
                           "error": f"{type(exc).__name__}: {exc}", "tol": None, "ok": False})
    return {"ok": all(c["ok"] for c in checks), "integrals": integrals.to_dict(), "checks": checks}
