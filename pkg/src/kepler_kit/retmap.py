"""First-return map on the section {z = 0, p_z < 0} and its periodic points.

The section is charted by (r, p_r); p_z is recovered from the energy, and the
section is a disk whose boundary is the planar periodic orbit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BoundaryTooClose, KeplerKitError, NoReturn, StepFailure
from .model import SystemParams, make_vector_field
from .quad import planar_potential, turning_points

RETURN_TOL = 1e-12


@dataclass(frozen=True)
class SectionPoint:
    r: float
    p_r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.p_r])


def disk_radicand(r, p_r, params: SystemParams):
    """2 (h - W(r)) - p_r**2 with W the planar potential; positive inside the disk."""
    return 2 * (params.h - planar_potential(r, params)) - p_r * p_r


def lift(point: SectionPoint, params: SystemParams) -> np.ndarray:
    """Full state (p_r, p_z, r, 0) with p_z < 0 fixed by the energy."""
    rad = float(disk_radicand(point.r, point.p_r, params))
    if not rad > 0:
        raise BoundaryTooClose(f"point ({point.r:.6g}, {point.p_r:.6g}) is not inside the section disk")
    return np.array([point.p_r, -math.sqrt(rad), point.r, 0.0])


@dataclass(frozen=True)
class SectionDisk:
    """Geometry of the section disk: r-range and the maximal p_r at each r."""

    params: SystemParams
    r1: float
    r2: float

    @property
    def diameter(self) -> float:
        return max(self.r2 - self.r1, 2 * self.pr_max(0.5 * (self.r1 + self.r2)))

    def pr_max(self, r) -> np.ndarray:
        return np.sqrt(np.maximum(2 * (self.params.h - planar_potential(r, self.params)), 0.0))

    def boundary_distance(self, point: SectionPoint) -> float:
        """Distance proxy: sqrt of the radicand (a chart-invariant zero set), in momentum units."""
        return math.sqrt(max(float(disk_radicand(point.r, point.p_r, self.params)), 0.0))

    def grid(self, n_r: int = 10, n_p: int = 10, inset: float = 0.05) -> list[SectionPoint]:
        """n_r x n_p interior points: r equally spaced strictly inside (r1, r2), p_r a
        fraction of the local half-width in [-(1 - inset), 1 - inset]."""
        u = np.linspace(-1 + inset, 1 - inset, n_r)
        rs = 0.5 * (self.r1 + self.r2) + 0.5 * (self.r2 - self.r1) * u
        fr = np.linspace(-1 + inset, 1 - inset, n_p)
        pts = []
        for r in rs:
            pm = float(self.pr_max(r))
            pts.extend(SectionPoint(float(r), float(s * pm)) for s in fr)
        return pts

    def random_points(self, n: int, rng: np.random.Generator, inset: float = 0.05) -> list[SectionPoint]:
        out = []
        while len(out) < n:
            r = self.r1 + (self.r2 - self.r1) * rng.uniform(inset / 2, 1 - inset / 2)
            s = rng.uniform(-1 + inset, 1 - inset)
            out.append(SectionPoint(float(r), float(s * self.pr_max(r))))
        return out


def section_disk(params: SystemParams) -> SectionDisk:
    r1, r2 = turning_points(params)
    return SectionDisk(params, r1, r2)


@dataclass(frozen=True)
class ReturnResult:
    image: SectionPoint
    return_time: float
    jacobian: np.ndarray | None = field(default=None, repr=False)


def _kepler_period(params: SystemParams) -> float:
    return 2 * math.pi * (-2 * params.h) ** -1.5


def first_return(point: SectionPoint, params: SystemParams, tol: float = RETURN_TOL,
                 t_cap: float | None = None, min_distance: float = 0.0,
                 backward: bool = False) -> ReturnResult:
    """Next downward crossing of z = 0 (or the previous one when ``backward``).

    Integrates in two stages, first to the upward crossing and then to the
    downward one, so the launch on z = 0 never triggers an event.
    """
    if min_distance > 0:
        disk = SectionDisk(params, 0.0, 0.0)
        if disk.boundary_distance(point) < min_distance:
            raise BoundaryTooClose(f"point ({point.r:.6g}, {point.p_r:.6g}) is within {min_distance:g} of the boundary")
    y = lift(point, params)
    cap = 3 * _kepler_period(params) if t_cap is None else t_cap
    rhs = make_vector_field(params)
    if backward:
        def f(t, s):
            d = rhs(t, s)
            return [-d[0], -d[1], -d[2], -d[3]]
    else:
        f = rhs

    elapsed = 0.0
    # forward: z decreases after launch, rises through 0, then returns downward.
    # backward in time the roles of the two crossings swap.
    for direction in ((1.0, -1.0) if not backward else (-1.0, 1.0)):
        def ev(t, s):
            return s[3]

        ev.terminal = True
        ev.direction = direction
        sol = solve_ivp(f, (0.0, cap - elapsed), y, method="DOP853", rtol=tol,
                        atol=tol * 1e-2, events=ev)
        if sol.status == -1:
            raise StepFailure(sol.message)
        if not len(sol.t_events[0]):
            raise NoReturn(f"no return to the section within t = {cap:.6g}")
        elapsed += float(sol.t_events[0][0])
        y = np.array(sol.y_events[0][0], dtype=float)
        y[3] = 0.0
    return ReturnResult(SectionPoint(float(y[2]), float(y[0])), elapsed)


def return_map(x: np.ndarray, params: SystemParams, k: int = 1, tol: float = RETURN_TOL) -> tuple[np.ndarray, float]:
    """k-th iterate of the return map in chart coordinates; returns (image, total time)."""
    p = SectionPoint(float(x[0]), float(x[1]))
    total = 0.0
    for _ in range(k):
        res = first_return(p, params, tol)
        p = res.image
        total += res.return_time
    return p.as_array(), total


def jacobian_fd(x: np.ndarray, params: SystemParams, k: int = 1, step=1e-6,
                tol: float = RETURN_TOL) -> np.ndarray:
    """Central-difference Jacobian of psi^k at x in the (r, p_r) chart.

    ``step`` is one step for both coordinates or a pair (step_r, step_pr).
    """
    steps = np.broadcast_to(np.asarray(step, dtype=float), (2,))
    jac = np.empty((2, 2))
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = steps[j]
        fp, _ = return_map(x + dx, params, k, tol)
        fm, _ = return_map(x - dx, params, k, tol)
        jac[:, j] = (fp - fm) / (2 * steps[j])
    return jac


def _variational_return(y0: np.ndarray, params: SystemParams, tol: float, cap: float):
    """Forward two-stage return integrated together with the fundamental matrix."""
    from .flow import make_variational_field

    full = make_variational_field(params)
    s = np.concatenate([y0, np.eye(4).ravel()])
    elapsed = 0.0
    for direction in (1.0, -1.0):
        def ev(t, u):
            return u[3]

        ev.terminal = True
        ev.direction = direction
        sol = solve_ivp(full, (0.0, cap - elapsed), s, method="DOP853", rtol=tol,
                        atol=tol * 1e-2, events=ev)
        if sol.status == -1:
            raise StepFailure(sol.message)
        if not len(sol.t_events[0]):
            raise NoReturn(f"no return to the section within t = {cap:.6g}")
        elapsed += float(sol.t_events[0][0])
        s = np.array(sol.y_events[0][0], dtype=float)
    return s[:4], s[4:].reshape(4, 4), elapsed


def return_with_jacobian(x: np.ndarray, params: SystemParams, k: int = 1,
                         tol: float = RETURN_TOL) -> tuple[np.ndarray, np.ndarray, float]:
    """psi^k(x), its Jacobian from the variational equations, and the total time.

    With y0(x) the lift and Phi the fundamental matrix up to the return time
    T, the crossing-time correction is dT = -(Phi dy0)_z / zdot(T).
    """
    from .model import potential_gradient

    rhs = make_vector_field(params)
    cap = 3 * _kepler_period(params)
    cur = np.array(x, dtype=float)
    jac = np.eye(2)
    total = 0.0
    for _ in range(k):
        y0 = lift(SectionPoint(float(cur[0]), float(cur[1])), params)
        w_r = float(potential_gradient(y0[2], 0.0, params)[0])
        dy0 = np.array([[0.0, 1.0], [-w_r / y0[1], -y0[0] / y0[1]], [1.0, 0.0], [0.0, 0.0]])
        y_t, phi, t_ret = _variational_return(y0, params, tol, cap)
        m = phi @ dy0
        f_t = np.asarray(rhs(0.0, y_t), dtype=float)
        m = m + np.outer(f_t, -m[3] / f_t[3])
        jac = np.array([m[2], m[0]]) @ jac
        cur = np.array([y_t[2], y_t[0]])
        total += t_ret
    return cur, jac, total


@dataclass(frozen=True)
class AreaReport:
    max_deviation: float
    deviations: tuple[float, ...]
    points: tuple[SectionPoint, ...]
    excluded: int
    min_return_time: float

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation, "excluded": self.excluded,
            "min_return_time": self.min_return_time, "n_points": len(self.points),
            "points": [[p.r, p.p_r, d] for p, d in zip(self.points, self.deviations)],
        }


def area_preservation_test(params: SystemParams, grid: tuple[int, int] = (6, 6),
                           exclude_frac: float = 1e-3, rel_step: float = 1e-5,
                           tol: float = RETURN_TOL) -> AreaReport:
    """|det J psi - 1| on a grid of interior section points.

    Points within exclude_frac * diameter of the boundary are skipped.  The
    difference step is rel_step times the disk extent in each coordinate
    (r-range for r, the widest p_r span for p_r), capped at a hundredth of
    the distance to the boundary; the r- and p_r-extents can differ by
    orders of magnitude at high eccentricity.
    """
    disk = section_disk(params)
    diam = disk.diameter
    extent = np.array([disk.r2 - disk.r1, 2 * float(disk.pr_max(0.5 * (disk.r1 + disk.r2)))])
    devs, kept, excluded = [], [], 0
    t_min = math.inf
    for pt in disk.grid(*grid):
        dist = disk.boundary_distance(pt)
        if dist < exclude_frac * diam:
            excluded += 1
            continue
        step = np.minimum(rel_step * extent, 0.01 * dist)
        jac = jacobian_fd(pt.as_array(), params, 1, step, tol)
        devs.append(abs(float(np.linalg.det(jac)) - 1))
        kept.append(pt)
        t_min = min(t_min, first_return(pt, params, tol).return_time)
    return AreaReport(max(devs) if devs else 0.0, tuple(devs), tuple(kept), excluded, t_min)


# --- periodic points -------------------------------------------------------


@dataclass(frozen=True)
class PeriodicPoint:
    k: int
    point: SectionPoint
    return_time: float
    residual: float
    orbit: tuple[SectionPoint, ...] = field(default=(), repr=False)


def _newton_periodic(x0: np.ndarray, params: SystemParams, k: int, disk: SectionDisk,
                     tol: float, max_iter: int, res_tol: float, step_tol: float):
    """Damped Newton on psi^k(x) - x, with the Jacobian from the variational equations.

    Convergence needs both a small residual and a small Newton step: near a
    nearly-degenerate twist circle the residual is tiny over a whole arc, and
    only the step length tells an isolated solution from a slow drift.
    """
    x = np.array(x0, dtype=float)
    scale = disk.diameter
    for _ in range(max_iter):
        fx, jac, _ = return_with_jacobian(x, params, k, tol)
        g = fx - x
        res = float(np.linalg.norm(g))
        jac = jac - np.eye(2)
        try:
            dx = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            return None
        ndx = float(np.linalg.norm(dx))
        if res <= res_tol * scale and ndx <= step_tol * scale:
            return x, res
        # damp: stay inside the disk and do not jump farther than a tenth of it
        lam = min(1.0, 0.1 * scale / max(ndx, 1e-300))
        for _ in range(30):
            xn = x + lam * dx
            if float(disk_radicand(xn[0], xn[1], params)) > 0:
                break
            lam *= 0.5
        else:
            return None
        x = xn
    return None


def _minimal_period(x: np.ndarray, params: SystemParams, k: int, tol: float, same_tol: float):
    """Iterates of x under psi and the least j | k with psi^j(x) = x."""
    orbit = [x]
    y = x
    times = []
    for j in range(1, k + 1):
        y, t = return_map(y, params, 1, tol)
        times.append(t)
        if np.linalg.norm(y - x) <= same_tol and k % j == 0:
            return j, orbit, sum(times)
        orbit.append(y)
    return k, orbit[:k], sum(times)


def find_periodic_points(params: SystemParams, k: int, seeds=None, n_random: int = 64,
                         rng_seed: int = 0, dedup_tol: float = 1e-6, tol: float = RETURN_TOL,
                         max_iter: int = 40, res_tol: float = 1e-10,
                         step_tol: float = 1e-8, include_defaults: bool = True) -> list[PeriodicPoint]:
    """Periodic points of the return map with period dividing k, one per orbit.

    Default seeds: the disk centre guess (r at the circular-brake radius,
    p_r = 0), the four corners of the interior grid, and ``n_random`` points
    from a seeded generator.  Converged points are reduced to their minimal
    period and deduplicated by orbit, in a deterministic order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    disk = section_disk(params)
    seed_pts: list[SectionPoint] = []
    if include_defaults:
        r_c = abs(params.omega) / math.sqrt(-2 * params.h)
        seed_pts.append(SectionPoint(r_c, 0.0))
        g = disk.grid(2, 2, inset=0.2)
        seed_pts.extend(g)
        seed_pts.extend(disk.random_points(n_random, np.random.default_rng(rng_seed)))
    if seeds is not None:
        seed_pts.extend(s if isinstance(s, SectionPoint) else SectionPoint(float(s[0]), float(s[1]))
                        for s in seeds)

    found: list[PeriodicPoint] = []
    for s in seed_pts:
        try:
            out = _newton_periodic(s.as_array(), params, k, disk, tol, max_iter, res_tol, step_tol)
        except KeplerKitError:
            continue
        if out is None:
            continue
        x, res = out
        same = dedup_tol * disk.diameter
        j, orbit, t_ret = _minimal_period(x, params, k, tol, same)
        # canonical representative: the orbit point with the smallest (r, p_r)
        orbit_pts = [SectionPoint(float(o[0]), float(o[1])) for o in orbit]
        rep = min(orbit_pts, key=lambda p: (round(p.r, 9), round(p.p_r, 9)))
        cand = PeriodicPoint(j, rep, t_ret, res, tuple(orbit_pts))
        if not any(_same_orbit(cand, f, same) for f in found):
            found.append(cand)
    found.sort(key=lambda p: (p.k, p.point.r, p.point.p_r))
    return found


def search_periodic_orbits(params: SystemParams, k_max: int, **kwargs) -> list[PeriodicPoint]:
    """Run find_periodic_points for k = 1..k_max and merge the orbits found."""
    disk = section_disk(params)
    same = kwargs.get("dedup_tol", 1e-6) * disk.diameter
    merged: list[PeriodicPoint] = []
    for k in range(1, k_max + 1):
        for cand in find_periodic_points(params, k, **kwargs):
            if not any(_same_orbit(cand, f, same) for f in merged):
                merged.append(cand)
    merged.sort(key=lambda p: (p.k, p.point.r, p.point.p_r))
    return merged


def _same_orbit(a: PeriodicPoint, b: PeriodicPoint, tol: float) -> bool:
    if a.k != b.k:
        return False
    pa = a.point.as_array()
    return any(np.linalg.norm(pa - q.as_array()) <= tol for q in b.orbit)


def write_catalog_csv(points: list[PeriodicPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "r", "p_r", "return_time", "residual"])
        for p in points:
            w.writerow([p.k, f"{p.point.r:.17g}", f"{p.point.p_r:.17g}",
                        f"{p.return_time:.17g}", f"{p.residual:.17g}"])
