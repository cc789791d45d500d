"""Reduced Hamiltonian systems for the symmetrically perturbed Kepler problem.

The reduced Hamiltonian on (p_r, p_z, r, z) is

    H = (p_r**2 + p_z**2) / 2 + omega**2 / (2 r**2) - 1 / sqrt(r**2 + z**2) + eps * f(r, z, eps)

Perturbations are evaluable families carrying the partial derivatives that the
first-order formulas need.  Built-in perturbations keep only their eps = 0
leading term, so the ``eps`` argument is accepted and ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError

Func = Callable[..., float]


class EnergySurfaceClass(str, Enum):
    EMPTY = "Empty"
    POINT = "Point"
    COMPACT_S3 = "CompactS3"
    UNBOUNDED = "Unbounded"


class Stability(str, Enum):
    ELLIPTIC = "Elliptic"
    HYPERBOLIC = "Hyperbolic"
    PARABOLIC = "Parabolic"


# --- perturbations ---------------------------------------------------------


def _fd_step(r):
    return np.maximum(1e-6, 1e-8 * np.abs(r))


def _fd_step2(r):
    # second differences need a larger step: truncation ~h**2, roundoff ~eps/h**2
    return np.maximum(1e-4, 1e-4 * np.abs(r))


@dataclass(frozen=True)
class Perturbation:
    """A perturbation family f(r, z, eps) together with its partials.

    All callables take ``(r, z, eps)`` and must accept numpy arrays.
    ``numeric_partials`` is set when any partial comes from the
    finite-difference fallback; reports surface this flag.
    """

    name: str
    f: Func
    df_dr: Func
    df_dz: Func
    d2f_dz2: Func
    d2f_dr2: Func
    d2f_drdz: Func
    numeric_partials: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_function(
        cls,
        name: str,
        f: Func,
        df_dr: Func | None = None,
        df_dz: Func | None = None,
        d2f_dz2: Func | None = None,
        d2f_dr2: Func | None = None,
        d2f_drdz: Func | None = None,
    ) -> "Perturbation":
        """Build a perturbation, filling missing partials by central differences."""
        numeric = any(g is None for g in (df_dr, df_dz, d2f_dz2, d2f_dr2, d2f_drdz))

        if df_dr is None:
            def df_dr(r, z, eps=0.0):
                h = _fd_step(r)
                return (f(r + h, z, eps) - f(r - h, z, eps)) / (2 * h)
        if df_dz is None:
            def df_dz(r, z, eps=0.0):
                h = _fd_step(r)
                return (f(r, z + h, eps) - f(r, z - h, eps)) / (2 * h)
        if d2f_dz2 is None:
            def d2f_dz2(r, z, eps=0.0):
                h = _fd_step2(r)
                return (f(r, z + h, eps) - 2 * f(r, z, eps) + f(r, z - h, eps)) / (h * h)
        if d2f_dr2 is None:
            def d2f_dr2(r, z, eps=0.0):
                h = _fd_step2(r)
                return (f(r + h, z, eps) - 2 * f(r, z, eps) + f(r - h, z, eps)) / (h * h)
        if d2f_drdz is None:
            def d2f_drdz(r, z, eps=0.0):
                h = _fd_step2(r)
                return (
                    f(r + h, z + h, eps) - f(r + h, z - h, eps)
                    - f(r - h, z + h, eps) + f(r - h, z - h, eps)
                ) / (4 * h * h)

        return cls(name, f, df_dr, df_dz, d2f_dz2, d2f_dr2, d2f_drdz, numeric)

    def d2f_dphi2(self, r, eps=0.0):
        """Second angular derivative at z = 0, where r = rho cos(phi), z = rho sin(phi).

        Chain rule on f(rho cos phi, rho sin phi) at phi = 0, using df_dz(r, 0) = 0:
        d2f/dphi2 = r**2 * f_zz(r, 0) - r * f_r(r, 0).
        """
        return r * r * self.d2f_dz2(r, 0.0, eps) - r * self.df_dr(r, 0.0, eps)

    def negated(self) -> "Perturbation":
        """The family -f, used to realise a negative perturbation scale."""
        def neg(g):
            return lambda r, z, eps=0.0: -g(r, z, eps)

        name = self.name[1:] if self.name.startswith("-") else "-" + self.name
        return Perturbation(
            name,
            neg(self.f), neg(self.df_dr), neg(self.df_dz),
            neg(self.d2f_dz2), neg(self.d2f_dr2), neg(self.d2f_drdz),
            self.numeric_partials, dict(self.meta),
        )


def _zero(r, z, eps=0.0):
    return 0.0 * r * z


def make_zero_perturbation() -> Perturbation:
    """f = 0: the unperturbed Kepler problem."""
    return Perturbation("kepler", _zero, _zero, _zero, _zero, _zero, _zero)


def make_ellipsoid_perturbation() -> Perturbation:
    """Oblate-spheroid leading term f = (2 z**2 - r**2) / (r**2 + z**2)**(5/2)."""

    def f(r, z, eps=0.0):
        rho2 = r * r + z * z
        return (2 * z * z - r * r) * rho2 ** -2.5

    def df_dr(r, z, eps=0.0):
        rho2 = r * r + z * z
        u = 2 * z * z - r * r
        return -2 * r * rho2 ** -2.5 - 5 * r * u * rho2 ** -3.5

    def df_dz(r, z, eps=0.0):
        rho2 = r * r + z * z
        u = 2 * z * z - r * r
        return 4 * z * rho2 ** -2.5 - 5 * z * u * rho2 ** -3.5

    def d2f_dz2(r, z, eps=0.0):
        rho2 = r * r + z * z
        u = 2 * z * z - r * r
        return (4 * rho2 ** -2.5 - (40 * z * z + 5 * u) * rho2 ** -3.5
                + 35 * z * z * u * rho2 ** -4.5)

    def d2f_dr2(r, z, eps=0.0):
        rho2 = r * r + z * z
        u = 2 * z * z - r * r
        return (-2 * rho2 ** -2.5 + (20 * r * r - 5 * u) * rho2 ** -3.5
                + 35 * r * r * u * rho2 ** -4.5)

    def d2f_drdz(r, z, eps=0.0):
        rho2 = r * r + z * z
        u = 2 * z * z - r * r
        return -10 * r * z * rho2 ** -3.5 + 35 * r * z * u * rho2 ** -4.5

    return Perturbation("ellipsoid", f, df_dr, df_dz, d2f_dz2, d2f_dr2, d2f_drdz)


def make_pyramidal_perturbation(n: int) -> Perturbation:
    """Leading term of the n-pyramidal problem in cylindrical coordinates.

    The spherical form -M(n) / (2 rho cos phi) + n sin(phi)**2 / (2 rho) becomes,
    with rho cos phi = r and rho sin phi = z,

        f(r, z) = -M(n) / (2 r) + n z**2 / (2 (r**2 + z**2)**(3/2)).
    """
    from .kepler import M_of_n

    if int(n) != n or n < 2:
        raise DomainError(f"pyramidal perturbation needs integer n >= 2, got {n!r}")
    n = int(n)
    m = M_of_n(n)

    def f(r, z, eps=0.0):
        rho2 = r * r + z * z
        return -m / (2 * r) + 0.5 * n * z * z * rho2 ** -1.5

    def df_dr(r, z, eps=0.0):
        rho2 = r * r + z * z
        return m / (2 * r * r) - 1.5 * n * r * z * z * rho2 ** -2.5

    def df_dz(r, z, eps=0.0):
        rho2 = r * r + z * z
        return n * z * rho2 ** -1.5 - 1.5 * n * z ** 3 * rho2 ** -2.5

    def d2f_dz2(r, z, eps=0.0):
        rho2 = r * r + z * z
        z2 = z * z
        return 0.5 * n * (2 * rho2 ** -1.5 - 15 * z2 * rho2 ** -2.5 + 15 * z2 * z2 * rho2 ** -3.5)

    def d2f_dr2(r, z, eps=0.0):
        rho2 = r * r + z * z
        return -m / r ** 3 - 1.5 * n * z * z * (rho2 ** -2.5 - 5 * r * r * rho2 ** -3.5)

    def d2f_drdz(r, z, eps=0.0):
        rho2 = r * r + z * z
        return -1.5 * n * r * (2 * z * rho2 ** -2.5 - 5 * z ** 3 * rho2 ** -3.5)

    return Perturbation(f"pyramid:{n}", f, df_dr, df_dz, d2f_dz2, d2f_dr2, d2f_drdz,
                        meta={"n": n, "M": m})


def pyramidal_spherical(n: int):
    """The pyramidal leading term written in (rho, phi); used to cross-check the rewrite."""
    from .kepler import M_of_n

    m = M_of_n(n)

    def f(rho, phi):
        return -m / (2 * rho * np.cos(phi)) + n * np.sin(phi) ** 2 / (2 * rho)

    return f


# --- systems ---------------------------------------------------------------

KEPLER = make_zero_perturbation()


@dataclass(frozen=True)
class SystemParams:
    """One reduced system: angular momentum omega, energy h, scale eps, family f."""

    omega: float
    h: float
    eps: float = 0.0
    perturbation: Perturbation = KEPLER

    def __post_init__(self):
        if not np.isfinite(self.omega) or self.omega == 0:
            raise DomainError(f"omega must be a nonzero real, got {self.omega!r}")
        if not np.isfinite(self.h):
            raise DomainError(f"energy must be finite, got {self.h!r}")
        if not 0 <= self.eps < 1:
            raise DomainError(f"eps must satisfy 0 <= eps < 1, got {self.eps!r}")

    @property
    def w(self) -> float:
        """|omega|; only omega**2 enters H, so formulas use the positive branch."""
        return abs(self.omega)

    def with_eps(self, eps: float) -> "SystemParams":
        """Same family at another scale; eps < 0 is realised as (|eps|, -f)."""
        if eps < 0:
            return replace(self, eps=-eps, perturbation=self.perturbation.negated())
        return replace(self, eps=eps)

    def kepler(self) -> "SystemParams":
        return replace(self, eps=0.0)

    @property
    def label(self) -> str:
        return self.perturbation.name


@dataclass(frozen=True)
class PhaseState:
    p_r: float
    p_z: float
    r: float
    z: float

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError(f"phase state needs r > 0, got r={self.r!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_r, self.p_z, self.r, self.z], dtype=float)

    @classmethod
    def from_array(cls, y) -> "PhaseState":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]))


def potential(r, z, params: SystemParams):
    """Effective potential omega**2/(2 r**2) - 1/rho + eps f(r, z, eps)."""
    v = params.omega ** 2 / (2 * r * r) - 1 / np.sqrt(r * r + z * z)
    if params.eps:
        v = v + params.eps * params.perturbation.f(r, z, params.eps)
    return v


def potential_gradient(r, z, params: SystemParams):
    rho3 = (r * r + z * z) ** 1.5
    vr = -params.omega ** 2 / r ** 3 + r / rho3
    vz = z / rho3
    if params.eps:
        p = params.perturbation
        vr = vr + params.eps * p.df_dr(r, z, params.eps)
        vz = vz + params.eps * p.df_dz(r, z, params.eps)
    return vr, vz


def potential_hessian(r, z, params: SystemParams):
    rho2 = r * r + z * z
    rho3 = rho2 ** 1.5
    rho5 = rho3 * rho2
    vrr = 3 * params.omega ** 2 / r ** 4 + 1 / rho3 - 3 * r * r / rho5
    vrz = -3 * r * z / rho5
    vzz = 1 / rho3 - 3 * z * z / rho5
    if params.eps:
        p, e = params.perturbation, params.eps
        vrr = vrr + e * p.d2f_dr2(r, z, e)
        vrz = vrz + e * p.d2f_drdz(r, z, e)
        vzz = vzz + e * p.d2f_dz2(r, z, e)
    return vrr, vrz, vzz


def hamiltonian(state: PhaseState, params: SystemParams) -> float:
    if not state.r > 0:
        raise DomainError(f"hamiltonian needs r > 0, got {state.r!r}")
    kinetic = 0.5 * (state.p_r ** 2 + state.p_z ** 2)
    return float(kinetic + potential(state.r, state.z, params))


def hamiltonian_array(y: np.ndarray, params: SystemParams) -> np.ndarray:
    """H evaluated on an (n, 4) array of states."""
    y = np.atleast_2d(y)
    return 0.5 * (y[:, 0] ** 2 + y[:, 1] ** 2) + potential(y[:, 2], y[:, 3], params)


def make_vector_field(params: SystemParams):
    """Return rhs(t, y) = J grad H for y = (p_r, p_z, r, z)."""
    w2 = params.omega ** 2
    eps = params.eps
    fr = params.perturbation.df_dr
    fz = params.perturbation.df_dz

    def rhs(t, y):
        pr, pz, r, z = y
        rho2 = r * r + z * z
        rho3 = rho2 * math.sqrt(rho2)
        dvr = -w2 / (r * r * r) + r / rho3
        dvz = z / rho3
        if eps:
            dvr += eps * fr(r, z, eps)
            dvz += eps * fz(r, z, eps)
        return [-dvr, -dvz, pr, pz]

    return rhs


# --- classification --------------------------------------------------------


def classify_kepler_surface(omega: float, h: float, atol: float = 1e-12) -> EnergySurfaceClass:
    if omega == 0:
        raise DomainError("omega must be nonzero")
    x = 2 * h * omega ** 2
    if abs(x + 1) <= atol:
        return EnergySurfaceClass.POINT
    if x < -1:
        return EnergySurfaceClass.EMPTY
    if x >= -atol:
        return EnergySurfaceClass.UNBOUNDED
    return EnergySurfaceClass.COMPACT_S3


def classify_pyramidal_surface(
    omega: float, h: float, eps: float, n: int, atol: float = 1e-12
) -> EnergySurfaceClass:
    """Compactness window -(1 + M eps/2)**2 < 2 h omega**2 < -(M eps)**2 / 4."""
    from .kepler import M_of_n

    if omega == 0:
        raise DomainError("omega must be nonzero")
    if eps < 0:
        raise DomainError("eps must be >= 0")
    m = M_of_n(n)
    x = 2 * h * omega ** 2
    lower = -(1 + m * eps / 2) ** 2
    upper = -(m * eps) ** 2 / 4
    if abs(x - lower) <= atol:
        return EnergySurfaceClass.POINT
    if x < lower:
        return EnergySurfaceClass.EMPTY
    if x >= upper - atol:
        return EnergySurfaceClass.UNBOUNDED
    return EnergySurfaceClass.COMPACT_S3


def system_from_selector(selector: str, omega: float, h: float, eps: float = 0.0,
                         n: int | None = None) -> SystemParams:
    """Build SystemParams from a selector: kepler, ellipsoid, pyramid[:n], custom:path."""
    sel = selector.strip()
    if sel == "kepler":
        pert = KEPLER
    elif sel == "ellipsoid":
        pert = make_ellipsoid_perturbation()
    elif sel.startswith("pyramid"):
        _, _, tail = sel.partition(":")
        nn = int(tail) if tail else n
        if nn is None:
            raise DomainError("pyramid system needs n (pyramid:n or --n)")
        pert = make_pyramidal_perturbation(nn)
    elif sel.startswith("custom:"):
        pert = load_custom_perturbation(sel[len("custom:"):])
    else:
        raise DomainError(f"unknown system {selector!r}")
    return SystemParams(omega, h, eps, pert)


def load_custom_perturbation(path: str) -> Perturbation:
    """Load f (and optionally df_dr, df_dz, d2f_dz2, d2f_dr2, d2f_drdz) from a Python file."""
    import importlib.util
    import pathlib

    p = pathlib.Path(path)
    if not p.is_file():
        raise DomainError(f"custom perturbation file not found: {path}")
    spec = importlib.util.spec_from_file_location(f"kepler_kit_custom_{p.stem}", p)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    if not hasattr(mod, "f"):
        raise DomainError(f"{path} must define f(r, z, eps)")
    names = ("df_dr", "df_dz", "d2f_dz2", "d2f_dr2", "d2f_drdz")
    partials = {k: getattr(mod, k, None) for k in names}
    return Perturbation.from_function(f"custom:{p.name}", mod.f, **partials)
