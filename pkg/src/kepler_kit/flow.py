"""Integration of the reduced flow, its linearisation, and event detection.

State ordering is y = (p_r, p_z, r, z) throughout, with p' = -grad V and q' = p.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, RBlowup, StepFailure
from .model import (
    PhaseState,
    Stability,
    SystemParams,
    hamiltonian_array,
    make_vector_field,
    potential_hessian,
)

ZCROSS_PLUS = "ZCross+"
ZCROSS_MINUS = "ZCross-"
REST_POINT = "RestPoint"
PR_ZERO = "PrZero"
EVENT_KINDS = (ZCROSS_PLUS, ZCROSS_MINUS, REST_POINT, PR_ZERO)


@dataclass(frozen=True)
class EventRecord:
    kind: str
    t: float
    state: PhaseState


@dataclass(frozen=True)
class Trajectory:
    """Time samples of one integration, with energy bookkeeping and events."""

    t: np.ndarray
    y: np.ndarray  # shape (n, 4)
    energy_drift: float
    energy_offset: float
    events: tuple[EventRecord, ...]
    failed: bool = False
    sol: object = field(default=None, repr=False, compare=False)

    @property
    def samples(self) -> list[tuple[float, PhaseState]]:
        return [(float(t), PhaseState.from_array(y)) for t, y in zip(self.t, self.y)]

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]


@dataclass(frozen=True)
class Monodromy2:
    matrix: np.ndarray
    det: float
    eigen_kind: Stability

    @property
    def trace(self) -> float:
        return float(self.matrix[0, 0] + self.matrix[1, 1])


def classify_trace(trace: float, tol: float = 1e-9) -> Stability:
    if abs(abs(trace) - 2) <= tol:
        return Stability.PARABOLIC
    return Stability.ELLIPTIC if abs(trace) < 2 else Stability.HYPERBOLIC


def make_monodromy2(m: np.ndarray, tol: float = 1e-9) -> Monodromy2:
    m = np.asarray(m, dtype=float)
    return Monodromy2(m, float(np.linalg.det(m)), classify_trace(float(np.trace(m)), tol))


# --- core integration ------------------------------------------------------


def _event_functions(params: SystemParams, rhs):
    r_floor = params.omega ** 2 / 4

    def ev_z(t, y):
        return y[3]

    def ev_pr(t, y):
        return y[0]

    def ev_rest(t, y):
        # d/dt |p|^2 / 2 = p . p'; a minimum of |p| is a - to + sign change
        d = rhs(t, y)
        return y[0] * d[0] + y[1] * d[1]

    ev_rest.direction = 1.0

    def ev_floor(t, y):
        return y[2] - r_floor

    ev_floor.terminal = True
    ev_floor.direction = -1.0
    return ev_z, ev_pr, ev_rest, ev_floor


def _rest_tol(params: SystemParams) -> float:
    return 1e-6 * math.sqrt(1 + abs(params.h))


def integrate(
    start: PhaseState | Sequence[float],
    params: SystemParams,
    t_end: float,
    tol: float = 1e-10,
    events: bool = True,
    dense: bool = False,
    max_step: float = np.inf,
    energy_tol: float | None = None,
    rest_tol: float | None = None,
) -> Trajectory:
    """Integrate the reduced flow from ``start`` over [0, t_end].

    Uses an 8th-order Dormand-Prince scheme with dense output; z = 0 crossings,
    p_r = 0 crossings and rest points (local minima of |p| below ``rest_tol``)
    are localised by root finding on the dense interpolant.

    Raises RBlowup if r falls below omega**2/4 and StepFailure if the step
    controller gives up.  A trajectory whose energy drift exceeds the allowance
    tol * (1 + |h|) * max(1, t_end / T_ref) * 100 is returned with ``failed``.
    """
    y0 = start.as_array() if isinstance(start, PhaseState) else np.asarray(start, float)
    if not y0[2] > 0:
        raise DomainError(f"start needs r > 0, got {y0[2]!r}")
    if not t_end > 0:
        raise DomainError(f"t_end must be positive, got {t_end!r}")

    rhs = make_vector_field(params)
    ev_z, ev_pr, ev_rest, ev_floor = _event_functions(params, rhs)
    evs = [ev_z, ev_pr, ev_rest, ev_floor] if events else [ev_floor]
    sol = solve_ivp(
        rhs, (0.0, t_end), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
        events=evs, dense_output=True, max_step=max_step,
    )
    if sol.status == -1:
        raise StepFailure(sol.message)
    if sol.status == 1:
        t_hit = float(sol.t_events[-1][0])
        raise RBlowup(f"r reached omega^2/4 at t = {t_hit:.6g}; parameters are outside the compact window")

    y = sol.y.T
    e = hamiltonian_array(y, params)
    drift = float(np.max(np.abs(e - e[0])))
    offset = float(abs(e[0] - params.h))
    t_ref = 2 * math.pi * abs(params.omega) ** 3
    allowance = energy_tol if energy_tol is not None else (
        100 * tol * (1 + abs(params.h)) * max(1.0, t_end / t_ref))

    records: list[EventRecord] = []
    if events:
        rt = _rest_tol(params) if rest_tol is None else rest_tol
        # a z "crossing" with p_z ~ 0 is a planar motion, not a transverse crossing
        pz_floor = 1e-12 * math.sqrt(1 + abs(params.h))
        if math.hypot(y0[0], y0[1]) <= rt:
            records.append(EventRecord(REST_POINT, 0.0, PhaseState.from_array(y0)))
        for t_ev, y_ev in zip(sol.t_events[0], sol.y_events[0]):
            if t_ev > 0 and abs(y_ev[1]) > pz_floor:
                kind = ZCROSS_PLUS if y_ev[1] > 0 else ZCROSS_MINUS
                records.append(EventRecord(kind, float(t_ev), PhaseState.from_array(y_ev)))
        for t_ev, y_ev in zip(sol.t_events[1], sol.y_events[1]):
            if t_ev > 0:
                records.append(EventRecord(PR_ZERO, float(t_ev), PhaseState.from_array(y_ev)))
        for t_ev, y_ev in zip(sol.t_events[2], sol.y_events[2]):
            if t_ev > 0 and math.hypot(y_ev[0], y_ev[1]) <= rt:
                records.append(EventRecord(REST_POINT, float(t_ev), PhaseState.from_array(y_ev)))
        records.sort(key=lambda rec: rec.t)

    return Trajectory(
        t=sol.t, y=y, energy_drift=drift, energy_offset=offset,
        events=tuple(records), failed=drift > allowance,
        sol=sol.sol if dense else None,
    )


def locate_event(trajectory: Trajectory, kind: str) -> list[EventRecord]:
    """Events of one kind, in time order.

    Events are recorded for t > 0 only, except a RestPoint at t = 0 when the
    trajectory starts at rest.  z = 0 with |p_z| below 1e-12 is not a crossing,
    so a planar trajectory has no ZCross events.
    """
    if kind not in EVENT_KINDS:
        raise DomainError(f"unknown event kind {kind!r}; expected one of {EVENT_KINDS}")
    return [ev for ev in trajectory.events if ev.kind == kind]


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "p_r", "p_z", "r", "z"])
        for t, y in zip(trajectory.t, trajectory.y):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in y])


# --- variational equations -------------------------------------------------


def make_variational_field(params: SystemParams):
    """Right-hand side of the state plus its 4x4 fundamental matrix, as one 20-vector.

    The linearisation of (p, q)' = (-grad V, p) is Phi' = [[0, -Hess V], [I, 0]] Phi.
    """
    rhs = make_vector_field(params)

    def full(t, s):
        y = s[:4]
        phi = s[4:].reshape(4, 4)
        vrr, vrz, vzz = potential_hessian(y[2], y[3], params)
        dphi = np.empty((4, 4))
        dphi[0] = -(vrr * phi[2] + vrz * phi[3])
        dphi[1] = -(vrz * phi[2] + vzz * phi[3])
        dphi[2] = phi[0]
        dphi[3] = phi[1]
        return np.concatenate([rhs(t, y), dphi.ravel()])

    return full


def integrate_variational(
    start: PhaseState | Sequence[float],
    params: SystemParams,
    t_end: float,
    tol: float = 1e-11,
) -> tuple[np.ndarray, np.ndarray]:
    """Final state and 4x4 fundamental matrix of the linearised flow over [0, t_end]."""
    y0 = start.as_array() if isinstance(start, PhaseState) else np.asarray(start, float)
    full = make_variational_field(params)
    s0 = np.concatenate([y0, np.eye(4).ravel()])
    sol = solve_ivp(full, (0.0, t_end), s0, method="DOP853", rtol=tol, atol=tol * 1e-2)
    if sol.status != 0:
        raise StepFailure(sol.message)
    s = sol.y[:, -1]
    return s[:4], s[4:].reshape(4, 4)


def transverse_coefficient(r, params: SystemParams):
    """k(r) = 1 + eps * d2g/dphi2 / omega**2 with g = rho**2 f, so d2g/dphi2 = r**2 f_phiphi at z = 0."""
    if not params.eps:
        return 1.0 + 0.0 * r
    g = r * r * params.perturbation.d2f_dphi2(r, params.eps)
    return 1.0 + params.eps * g / params.omega ** 2


def integrate_variational_subsystem2(
    params: SystemParams,
    orbit,
    periods: int = 64,
    tol: float = 1e-12,
) -> tuple[Monodromy2, float]:
    """Transverse linearised subsystem along the planar periodic orbit, in tau.

    Along the planar orbit, the transverse (out-of-plane) linearisation in the
    rescaled time tau (d tau/dt = omega/r**2) reads, after the symplectic
    normalisation diag(1/sqrt(omega), sqrt(omega)),

        v' = [[0, -k(tau)], [1, 0]] v,    k = 1 + eps g_phiphi / omega**2.

    The planar orbit is co-integrated in tau rather than interpolated:

        r' = (r**2/omega) p_r,   p_r' = (r**2/omega)(omega**2/r**3 - 1/r**2 - eps f_r(r, 0)).

    ``orbit`` must provide ``r1`` (a turning point, where p_r = 0) and
    ``tau_period``.  Returns the one-period monodromy (normalised coordinates)
    and the winding angle of the solution starting at (1, 0) over ``periods``
    periods, from d theta/d tau = (v1**2 + k v2**2)/|v|**2.
    """
    if periods < 1:
        raise DomainError("periods must be >= 1")
    w = params.w
    w2 = w * w
    eps = params.eps
    fr = params.perturbation.df_dr
    pert = params.perturbation

    def rhs(tau, s):
        pr, r = s[0], s[1]
        c = r * r / w
        dvr = -w2 / r ** 3 + 1 / (r * r)
        k = 1.0
        if eps:
            dvr += eps * fr(r, 0.0, eps)
            k += eps * r * r * pert.d2f_dphi2(r, eps) / w2
        a, b, cc, d = s[2], s[3], s[4], s[5]
        # columns (a, b) and (cc, d); the first column is the wound vector
        return [
            -c * dvr, c * pr,
            -k * b, a, -k * d, cc,
            (a * a + k * b * b) / (a * a + b * b),
        ]

    big_t = float(orbit.tau_period)
    s0 = [0.0, float(orbit.r1), 1.0, 0.0, 0.0, 1.0, 0.0]
    sol = solve_ivp(rhs, (0.0, periods * big_t), s0, method="DOP853",
                    rtol=tol, atol=tol * 1e-2, t_eval=[big_t, periods * big_t])
    if sol.status != 0:
        raise StepFailure(sol.message)
    one = sol.y[:, 0]
    m = np.array([[one[2], one[4]], [one[3], one[5]]])
    winding = float(sol.y[6, -1])
    return make_monodromy2(m), winding
