"""Criteria for infinitely many periodic orbits and the stability of the planar orbit.

With C = C(e) and the first-order functionals of f, the test quantities are

    lhs = V~(f),    rhs = 2 C A~(f) + C**2 sign(E) sqrt(D) / 2   (D >= 0).

D < 0 gives infinitely many periodic orbits directly (route i); for D >= 0,
lhs != rhs does (route ii).  The planar orbit is elliptic for D > 0 and
hyperbolic for D < 0.  Every comparison carries the quadrature error bars and
returns a three-valued verdict.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

from .errors import DomainError
from .kepler import C_of_e, G_of_e, M_of_n, eccentricity, kepler_scalars
from .model import Stability, SystemParams
from .quad import QUAD_1D_TOL, QUAD_2D_RTOL, Functionals, perturbation_functionals, v_tilde


class Verdict(str, Enum):
    VIA_I = "InfinitelyMany_via_i"
    VIA_II = "InfinitelyMany_via_ii"
    INCONCLUSIVE = "Inconclusive"


def _sign(x: float, err: float = 0.0) -> int:
    # sign(0) = 0, and a value inside its error bar counts as 0
    if abs(x) <= err:
        return 0
    return 1 if x > 0 else -1


@dataclass(frozen=True)
class CriteriaReport:
    system: str
    omega: float
    h: float
    e: float
    C: float
    functionals: Functionals
    lhs: float
    rhs: float | None
    margin: float | None
    error_bar: float
    d_error_bar: float
    verdict: Verdict
    stability: Stability
    omega_reflected: bool = False
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "system": self.system, "omega": self.omega, "h": self.h, "e": self.e, "C": self.C,
            "functionals": self.functionals.to_json_dict(),
            "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
            "error_bar": self.error_bar, "d_error_bar": self.d_error_bar,
            "verdict": self.verdict.value, "stability": self.stability.value,
            "omega_reflected": self.omega_reflected, "notes": list(self.notes),
        }

    def row(self, n: int | None = None) -> dict:
        f = self.functionals
        return {
            "omega": self.omega, "h": self.h, "e": self.e, "n": "" if n is None else n,
            "V": f.V_tilde, "A": f.A_tilde, "T": f.T_tilde, "E": f.E_f, "D": f.D_f,
            "lhs": self.lhs, "rhs": "" if self.rhs is None else self.rhs,
            "verdict": self.verdict.value, "stability": self.stability.value,
        }


SWEEP_COLUMNS = ("omega", "h", "e", "n", "V", "A", "T", "E", "D", "lhs", "rhs", "verdict", "stability")


def decide(fn: Functionals, C: float) -> tuple[float | None, float, float, Verdict, Stability]:
    """(rhs, error_bar, d_error_bar, verdict, stability) from functionals and C(e)."""
    errs = fn.error_estimates
    d_scale = max(fn.E_f ** 2, fn.second_harmonic ** 2, 1.0)
    d_err = max(errs.get("d_f", 0.0), 1e-13 * d_scale)
    e_err = max(errs.get("e_f", 0.0), 1e-13 * max(abs(fn.E_f), 1.0))
    if fn.D_f > d_err:
        stability = Stability.ELLIPTIC
    elif fn.D_f < -d_err:
        stability = Stability.HYPERBOLIC
    else:
        stability = Stability.PARABOLIC

    lhs_err = errs.get("v_tilde", 0.0)
    if fn.D_f < -d_err:
        bar = max(lhs_err, 1e-13 * max(abs(fn.V_tilde), 1.0))
        return None, bar, d_err, Verdict.VIA_I, stability
    sq = math.sqrt(max(fn.D_f, 0.0))
    sgn = _sign(fn.E_f, e_err)
    rhs = 2 * C * fn.A_tilde + C * C * sgn * sq / 2
    sq_err = d_err / (2 * sq) if sq > 0 else math.sqrt(d_err)
    rhs_err = 2 * C * errs.get("a_tilde", 0.0) + C * C * abs(sgn) * sq_err / 2
    scale = max(abs(fn.V_tilde), abs(rhs), 1.0)
    bar = max(lhs_err + rhs_err, 1e-13 * scale)
    verdict = Verdict.VIA_II if abs(fn.V_tilde - rhs) > bar else Verdict.INCONCLUSIVE
    return rhs, bar, d_err, verdict, stability


def evaluate(params: SystemParams, tol: float = QUAD_1D_TOL, rtol: float = QUAD_2D_RTOL) -> CriteriaReport:
    """Functionals at eps = 0 and the resulting verdict and stability."""
    notes = []
    reflected = params.omega < 0
    if reflected:
        params = replace(params, omega=-params.omega)
        notes.append("omega < 0 mapped to |omega|; H depends on omega**2 only")
    p0 = params.kepler()
    e = eccentricity(p0.omega, p0.h)
    if not 0 < e < 1:
        raise DomainError(f"criteria need a compact Kepler surface, got e = {e!r}")
    C = C_of_e(e)
    fn = perturbation_functionals(p0, tol, rtol)
    if fn.numeric_partials:
        notes.append("partials of f by finite differences")
    rhs, bar, d_err, verdict, stability = decide(fn, C)
    margin = None if rhs is None else fn.V_tilde - rhs
    return CriteriaReport(params.label, p0.omega, p0.h, e, C, fn, fn.V_tilde, rhs, margin,
                          bar, d_err, verdict, stability, reflected, tuple(notes))


# --- closed forms -----------------------------------------------------------


def ellipsoid_closed_forms(omega: float, h: float) -> Functionals:
    ks = kepler_scalars(omega, h)
    w2 = abs(omega) ** 2
    e = ks.e
    return Functionals(
        vol=ks.volume, action=ks.action, period=2 * math.pi, time_period=ks.period,
        V_tilde=-math.pi * e * e * (4 - 3 * e * e) / (4 * w2),
        A_tilde=-math.pi / w2,
        T_tilde=6 * math.pi / w2 ** 2,
        E_f=12 * math.pi / w2,
        D_f=(12 * math.pi / w2) ** 2,
    )


def pyramidal_v_bound(omega: float, h: float, n: int) -> float:
    """Upper bound (pi/4)(2n - M) omega^2 C^2 - M pi omega^2 C / sqrt(1 - e^2) for V~."""
    e = eccentricity(omega, h)
    m = M_of_n(n)
    c = C_of_e(e)
    w2 = omega ** 2
    return math.pi / 4 * (2 * n - m) * w2 * c * c - m * math.pi * w2 * c / math.sqrt(1 - e * e)


def pyramidal_closed_forms(omega: float, h: float, n: int, rtol: float = QUAD_2D_RTOL) -> Functionals:
    """Closed forms for A~, T~, E, D; V~ has none and is computed numerically.

    The V~ upper bound is attached under ``bounds``.
    """
    from .model import make_pyramidal_perturbation

    ks = kepler_scalars(omega, h)
    e = ks.e
    m = M_of_n(n)
    w2 = abs(omega) ** 2
    s = math.sqrt(1 - e * e)
    params = SystemParams(abs(omega), h, 0.0, make_pyramidal_perturbation(n))
    vt, vt_err = v_tilde(params, rtol)
    bound = pyramidal_v_bound(omega, h, n)
    return Functionals(
        vol=ks.volume, action=ks.action, period=2 * math.pi, time_period=ks.period,
        V_tilde=vt,
        A_tilde=-m * math.pi * w2 / (2 * s),
        T_tilde=0.0,
        E_f=(2 * n - m) * math.pi * w2 / (2 * s),
        D_f=(2 * n - m) ** 2 * math.pi ** 2 * w2 ** 2 * G_of_e(e) ** 2 / (4 * (1 - e * e)),
        error_estimates={"v_tilde": vt_err},
        bounds={"v_tilde_upper": bound, "v_tilde_within_bound": vt <= bound + vt_err},
    )


# --- cross checks -----------------------------------------------------------


@dataclass(frozen=True)
class CheckEntry:
    name: str
    numeric: float
    reference: float
    error: float
    tol: float
    ok: bool


@dataclass(frozen=True)
class CrosscheckReport:
    system: str
    entries: tuple[CheckEntry, ...]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def mismatches(self) -> list[str]:
        return [e.name for e in self.entries if not e.ok]

    def to_dict(self) -> dict:
        return {"system": self.system, "ok": self.ok, "entries": [asdict(e) for e in self.entries]}


def _rel_entry(name, num, ref, tol, scale=None):
    denom = abs(ref) if scale is None else scale
    err = abs(num - ref) / denom if denom > 0 else abs(num - ref)
    return CheckEntry(name, num, ref, err, tol, err <= tol)


def builtin_kind(params: SystemParams) -> tuple[str, int | None]:
    name = params.perturbation.name
    if name == "ellipsoid":
        return "ellipsoid", None
    if name.startswith("pyramid:"):
        return "pyramid", int(params.perturbation.meta["n"])
    if name == "kepler":
        return "kepler", None
    raise DomainError(f"crosscheck needs a built-in system, got {name!r}")


def drot_deps_theory(fn: Functionals, omega: float) -> float:
    """sign(E) sqrt(D) / (2 pi omega^2)."""
    sgn = _sign(fn.E_f)
    return sgn * math.sqrt(max(fn.D_f, 0.0)) / (2 * math.pi * omega ** 2)


def drot_deps_numeric(params: SystemParams, eps_fd: float = 1e-3, periods: int = 16) -> float:
    from .orbits import rotation_number

    p0 = params.kepler()
    plus = rotation_number(p0.with_eps(eps_fd), periods)
    minus = rotation_number(p0.with_eps(-eps_fd), periods)
    return (plus.rot - minus.rot) / (2 * eps_fd)


def crosscheck(params: SystemParams, rel_tol: float = 1e-6, rot_tol: float = 1e-2,
               eps_fd: float = 1e-3, with_rotation: bool = True,
               numeric: Functionals | None = None) -> CrosscheckReport:
    """Numeric functionals against closed forms, and dRot/deps against its formula."""
    kind, n = builtin_kind(params)
    p0 = replace(params.kepler(), omega=abs(params.omega))
    fn = numeric if numeric is not None else perturbation_functionals(p0)
    entries = []
    if kind == "ellipsoid":
        ref = ellipsoid_closed_forms(p0.omega, p0.h)
    elif kind == "pyramid":
        ref = pyramidal_closed_forms(p0.omega, p0.h, n)
    else:
        ref = replace(fn, V_tilde=0.0, A_tilde=0.0, T_tilde=0.0, E_f=0.0, D_f=0.0)
    scale = max(abs(ref.E_f), 1.0)
    for name in ("V_tilde", "A_tilde", "T_tilde", "E_f", "D_f"):
        num, r = getattr(fn, name), getattr(ref, name)
        if kind == "pyramid" and name == "V_tilde":
            bound = ref.bounds["v_tilde_upper"]
            entries.append(CheckEntry("V_tilde<=bound", num, bound, num - bound, 0.0,
                                      num <= bound + fn.error_estimates.get("v_tilde", 0.0)))
            continue
        if r == 0:
            entries.append(_rel_entry(name, num, r, rel_tol, scale=scale))
        else:
            entries.append(_rel_entry(name, num, r, rel_tol))
    if with_rotation and kind != "kepler":
        entries.append(_rel_entry("dRot/deps", drot_deps_numeric(p0, eps_fd),
                                  drot_deps_theory(ref, p0.omega), rot_tol))
    return CrosscheckReport(params.label, tuple(entries))
