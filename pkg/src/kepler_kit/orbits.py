"""Planar periodic orbit, its rotation number, the z-symmetric brake orbit, and linking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, NoBracket, PeriodFailure, StepFailure, SymmetryResidual, TangentialCrossing
from .flow import (
    REST_POINT,
    ZCROSS_MINUS,
    Monodromy2,
    Trajectory,
    classify_trace,
    integrate,
    integrate_variational_subsystem2,
    locate_event,
    transverse_coefficient,
)
from .kepler import kepler_scalars, upper_boundary_z
from .model import PhaseState, Stability, SystemParams, make_vector_field
from .quad import hill_region, orbit_integrals

INTEGRATION_TOL = 1e-12


# --- planar orbit -----------------------------------------------------------


@dataclass(frozen=True)
class PlanarOrbit:
    """The periodic orbit in the invariant plane z = p_z = 0, started at r1 with p_r = 0."""

    params: SystemParams
    r1: float
    r2: float
    period: float
    tau_period: float
    action: float
    closure_residual: float
    energy_residual: float
    trajectory: Trajectory = field(repr=False)
    coefficient: np.ndarray = field(repr=False)  # omega^2 + eps d2g/dphi2 at samples

    def to_dict(self) -> dict:
        return {
            "system": self.params.label, "omega": self.params.omega, "h": self.params.h,
            "eps": self.params.eps, "r1": self.r1, "r2": self.r2, "period": self.period,
            "tau_period": self.tau_period, "action": self.action,
            "closure_residual": self.closure_residual, "energy_residual": self.energy_residual,
        }


def planar_orbit(params: SystemParams, tol: float = INTEGRATION_TOL,
                 closure_tol: float = 1e-8) -> PlanarOrbit:
    """Turning points and periods by quadrature, then one period integrated and checked for closure."""
    oi = orbit_integrals(params)
    start = PhaseState(0.0, 0.0, oi.r1, 0.0)
    traj = integrate(start, params, oi.time_period, tol=tol)
    scale = max(1.0, oi.r2)
    closure = float(np.max(np.abs(traj.final - start.as_array()))) / scale
    if closure > closure_tol:
        raise PeriodFailure(f"planar orbit does not close: residual {closure:.3g} > {closure_tol:g}")
    e_res = float(traj.energy_drift + traj.energy_offset)
    k = transverse_coefficient(traj.y[:, 2], params) * params.omega ** 2
    return PlanarOrbit(params, oi.r1, oi.r2, oi.time_period, oi.tau_period, oi.action,
                       closure, e_res, traj, np.asarray(k))


# --- rotation number -------------------------------------------------------


@dataclass(frozen=True)
class RotationResult:
    rot: float
    mean_index: float
    stability: Stability
    periods_used: int
    error_estimate: float
    trace: float
    winding_rot: float
    monodromy: Monodromy2 = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "rot": self.rot, "mean_index": self.mean_index, "stability": self.stability.value,
            "periods_used": self.periods_used, "error_estimate": self.error_estimate,
            "trace": self.trace, "winding_rot": self.winding_rot,
        }


def rotation_number(params: SystemParams, periods: int = 64, planar: PlanarOrbit | None = None,
                    tol: float = INTEGRATION_TOL, parabolic_tol: float = 1e-9) -> RotationResult:
    """Rotation number of the transverse linearisation along the planar orbit.

    The fractional part comes from the eigenangle of the one-period monodromy
    (beta = acos(tr/2), oriented by the sign of the lower-left entry); the
    integer part is the one nearest the averaged winding of a solution vector
    over ``periods`` periods.  With this normalisation rot = 1 at eps = 0 and
    the mean index is 2 rot.
    """
    if planar is None:
        oi = orbit_integrals(params)
        planar = _PlanarStub(oi.r1, oi.tau_period)
    mono, winding = integrate_variational_subsystem2(params, planar, periods, tol)
    tr = mono.trace
    m21 = float(mono.matrix[1, 0])
    winding_rot = winding / (2 * math.pi * periods)
    stability = classify_trace(tr, parabolic_tol)
    if abs(tr) <= 2 or stability is Stability.PARABOLIC:
        beta = math.acos(max(-1.0, min(1.0, tr / 2)))
        frac = beta / (2 * math.pi) if m21 > 0 else 1 - beta / (2 * math.pi)
        rot = round(winding_rot - frac) + frac
        d_tr = abs(mono.det - 1) + 10 * tol * periods
        # acos is square-root sensitive at |tr| = 2
        err = min(d_tr / (4 * math.pi * max(abs(math.sin(beta)), 1e-300)),
                  math.sqrt(d_tr) / (2 * math.pi))
    elif tr > 2:
        rot = float(round(winding_rot))
        err = 0.0
    else:
        rot = math.floor(winding_rot) + 0.5
        err = 0.0
    return RotationResult(rot, 2 * rot, stability, periods, max(err, 1e-12), tr, winding_rot, mono)


@dataclass(frozen=True)
class _PlanarStub:
    r1: float
    tau_period: float


# --- brake orbit -----------------------------------------------------------


@dataclass(frozen=True)
class BrakeOrbit:
    """The z-symmetric brake orbit linked with the planar orbit."""

    params: SystemParams
    r0: float  # chart parameter: r-coordinate of the Kepler upper-boundary point
    launch: tuple[float, float]  # (R, Z) on the perturbed boundary
    t1: float
    period: float
    crossing_pr: float
    rest_times: tuple[float, ...]
    symmetry_residual: float
    rest_residual: float
    eps_reached: float
    trajectory: Trajectory = field(repr=False)

    @property
    def crossing_state(self) -> np.ndarray:
        return np.asarray(self.trajectory.sol(self.t1)) if self.trajectory.sol else None

    def to_dict(self) -> dict:
        return {
            "system": self.params.label, "omega": self.params.omega, "h": self.params.h,
            "eps": self.params.eps, "r0": self.r0, "launch_r": self.launch[0],
            "launch_z": self.launch[1], "t1": self.t1, "period": self.period,
            "crossing_pr": self.crossing_pr, "rest_times": list(self.rest_times),
            "symmetry_residual": self.symmetry_residual, "rest_residual": self.rest_residual,
            "eps_reached": self.eps_reached,
        }


def boundary_launch_point(r: float, params: SystemParams) -> tuple[float, float]:
    """Point (R, Z) where the ray from (omega^2, 0) through the Kepler upper-boundary
    point above r meets the Hill boundary of params."""
    w2 = params.omega ** 2
    zk = float(upper_boundary_z(r, params.omega, params.h))
    alpha = math.atan2(zk, r - w2)
    if params.eps == 0:
        return r, zk
    region = hill_region(params)
    s = float(region.boundary_radius([alpha])[0])
    return w2 + s * math.cos(alpha), s * math.sin(alpha)


def _first_section_crossing(y0, params: SystemParams, t_cap: float, tol: float):
    rhs = make_vector_field(params)

    def ev(t, y):
        return y[3]

    ev.terminal = True
    ev.direction = -1.0
    sol = solve_ivp(rhs, (0.0, t_cap), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                    events=ev, dense_output=True)
    if sol.status == -1:
        raise StepFailure(sol.message)
    if not len(sol.t_events[0]):
        raise NoBracket("no z = 0 crossing before the time cap")
    return float(sol.t_events[0][0]), sol.y_events[0][0], sol


def brake_f2(r: float, params: SystemParams, tol: float = INTEGRATION_TOL) -> float:
    """p_r at the first downward z = 0 crossing after launching at rest from the boundary."""
    big_r, big_z = boundary_launch_point(r, params)
    t_cap = 2 * math.pi * (-2 * params.h) ** -1.5
    _, y, _ = _first_section_crossing([0.0, 0.0, big_r, big_z], params, t_cap, tol)
    return float(y[0])


def _root_near(params: SystemParams, seed: float, lo_lim: float, hi_lim: float, tol: float) -> float:
    def g(r):
        return brake_f2(r, params, tol)

    d = 0.02 * (hi_lim - lo_lim)
    for _ in range(8):
        a, b = max(lo_lim, seed - d), min(hi_lim, seed + d)
        ga, gb = g(a), g(b)
        if ga * gb < 0:
            return brentq(lambda r: g(r), a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        if a == lo_lim and b == hi_lim:
            break
        d *= 2
    raise NoBracket(f"f2 does not change sign around r = {seed:.8g} for eps = {params.eps:g}")


def shoot_brake_orbit(params: SystemParams, tol: float = INTEGRATION_TOL,
                      symmetry_tol: float = 1e-7, step: float = 1e-3) -> BrakeOrbit:
    """Find the z-symmetric brake orbit by shooting on the upper Hill boundary.

    The unknown is the chart parameter r of the launch point; f2(r) is p_r at
    the first downward crossing of z = 0.  The root is continued from the
    Kepler value omega/sqrt(-2h) in eps steps of min(eps, step).
    """
    ks = kepler_scalars(params.omega, params.h)
    margin = 1e-6 * (ks.r_max - ks.r_min)
    lo_lim, hi_lim = ks.r_min + margin, ks.r_max - margin
    root = ks.circular_brake_r
    eps_target = params.eps
    if eps_target > 0:
        n_steps = max(1, math.ceil(eps_target / min(eps_target, step) - 1e-9))
        for k in range(1, n_steps + 1):
            p_k = params.with_eps(eps_target * k / n_steps)
            root = _root_near(p_k, root, lo_lim, hi_lim, tol)
    else:
        root = _root_near(params, root, lo_lim, hi_lim, tol)
    return complete_brake_orbit(root, params, tol, symmetry_tol)


def complete_brake_orbit(r0: float, params: SystemParams, tol: float = INTEGRATION_TOL,
                         symmetry_tol: float = 1e-7) -> BrakeOrbit:
    """Integrate a full period from the launch point r0 and verify both brake-orbit invariants."""
    big_r, big_z = boundary_launch_point(r0, params)
    y0 = np.array([0.0, 0.0, big_r, big_z])
    t_cap = 2 * math.pi * (-2 * params.h) ** -1.5
    t1, y1, _ = _first_section_crossing(y0, params, t_cap, tol)
    period = 4 * t1
    traj = integrate(y0, params, period, tol=tol, dense=True)
    sol = traj.sol

    # z-symmetry: xi(t1 + s) = S xi(t1 - s) with S(p_r, p_z, r, z) = (-p_r, p_z, r, -z)
    s = np.linspace(0.0, t1, 201)
    fwd = sol(t1 + s)
    bwd = sol(t1 - s)
    sign = np.array([-1.0, 1.0, 1.0, -1.0])[:, None]
    scale = max(1.0, big_r)
    sym_res = float(np.max(np.abs(fwd - sign * bwd))) / scale

    rest = locate_event(traj, REST_POINT)
    rest_times = tuple(ev.t for ev in rest if ev.t < period * (1 - 1e-9))
    p_mid = sol(2 * t1)
    rest_res = float(max(math.hypot(p_mid[0], p_mid[1]), abs(y1[0])))
    if sym_res > symmetry_tol:
        raise SymmetryResidual(f"z-symmetry residual {sym_res:.3g} > {symmetry_tol:g}")
    return BrakeOrbit(params, float(r0), (big_r, big_z), t1, period, float(y1[0]),
                      rest_times, sym_res, rest_res, params.eps, traj)


# --- linking -----------------------------------------------------------------


def section_crossing_count(trajectory: Trajectory, pz_tol: float = 1e-8,
                           t_max: float | None = None) -> int:
    """Number of transverse crossings of the section {z = 0, p_z < 0} in (0, t_max)."""
    count = 0
    for ev in locate_event(trajectory, ZCROSS_MINUS):
        if t_max is not None and ev.t >= t_max * (1 - 1e-12):
            continue
        if abs(ev.state.p_z) < pz_tol:
            raise TangentialCrossing(f"crossing at t = {ev.t:.6g} has |p_z| = {abs(ev.state.p_z):.3g}")
        count += 1
    return count


def hopf_link_check(brake, planar: PlanarOrbit, pz_tol: float = 1e-8) -> int:
    """Crossings of the disk bounded by the planar orbit, per minimal period of ``brake``.

    Every crossing of the section is counted with the same orientation
    (p_z < 0), so the count is the linking number with the planar orbit.
    Passing a PlanarOrbit as ``brake`` counts 0: it lies on the disk boundary.
    """
    a, b = brake.params, planar.params
    if (a.omega, a.h, a.eps, a.label) != (b.omega, b.h, b.eps, b.label):
        raise DomainError("both orbits must belong to the same system")
    return section_crossing_count(brake.trajectory, pz_tol, t_max=brake.period)
