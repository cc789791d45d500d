"""Closed forms of the unperturbed reduced Kepler problem.

Each quantity is its own function so that tests can use any one of them as an
independent oracle against the numerical routines.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DomainError


def _check_window(omega: float, h: float) -> None:
    if omega == 0:
        raise DomainError("omega must be nonzero")
    x = 2 * h * omega ** 2
    if not -1 < x < 0:
        raise DomainError(f"2 h omega^2 = {x!r} is outside the compact window (-1, 0)")


def eccentricity(omega: float, h: float) -> float:
    return math.sqrt(max(0.0, 1 + 2 * h * omega ** 2))


def C_of_e(e: float) -> float:
    """C(e) = 1/sqrt(1 - e**2) - 1."""
    if not 0 <= e < 1:
        raise DomainError(f"e must lie in [0, 1), got {e!r}")
    return 1 / math.sqrt(1 - e * e) - 1


def kepler_action(omega: float, h: float) -> float:
    _check_window(omega, h)
    return 2 * math.pi * abs(omega) * C_of_e(eccentricity(omega, h))


def kepler_volume(omega: float, h: float) -> float:
    return kepler_action(omega, h) ** 2


def kepler_period(omega: float, h: float) -> float:
    """Time period 2 pi (-2h)**(-3/2); every bounded orbit on the surface shares it."""
    _check_window(omega, h)
    return 2 * math.pi * (-2 * h) ** -1.5


@dataclass(frozen=True)
class KeplerScalars:
    omega: float
    h: float
    e: float
    a: float
    r_min: float
    r_max: float
    action: float
    volume: float
    C: float
    circular_brake_r: float
    period: float

    def to_dict(self) -> dict:
        return asdict(self)


def kepler_scalars(omega: float, h: float) -> KeplerScalars:
    _check_window(omega, h)
    w = abs(omega)
    e = eccentricity(omega, h)
    c = C_of_e(e)
    action = 2 * math.pi * w * c
    return KeplerScalars(
        omega=omega,
        h=h,
        e=e,
        a=-1 / (2 * h),
        r_min=w * w / (1 + e),
        r_max=w * w / (1 - e),
        action=action,
        volume=action * action,
        C=c,
        circular_brake_r=w / math.sqrt(-2 * h),
        period=2 * math.pi * (-2 * h) ** -1.5,
    )


def orbit_radius(theta, omega: float, h: float):
    """Conic r = omega**2 / (1 + e cos theta), with theta measured from perigee."""
    import numpy as np

    _check_window(omega, h)
    e = eccentricity(omega, h)
    return omega ** 2 / (1 + e * np.cos(theta))


def brake_pr_oracle(r0: float, omega: float, h: float) -> float:
    """Radial momentum at the first z = 0 crossing of the Kepler brake orbit from r0."""
    if not r0 > 0:
        raise DomainError(f"r0 must be positive, got {r0!r}")
    w = abs(omega)
    return (w * w + 2 * h * r0 * r0) / (2 * w * r0)


def upper_boundary_z(r, omega: float, h: float):
    """Height of the Kepler Hill boundary {V = h} above radius r (z >= 0 branch).

    From omega**2/(2 r**2) - 1/rho = h: rho = 2 r**2 / (omega**2 - 2 h r**2),
    so z = r sqrt((2 r / (omega**2 - 2 h r**2))**2 - 1).
    """
    import numpy as np

    w2 = omega ** 2
    q = (2 * r / (w2 - 2 * h * r * r)) ** 2 - 1
    return r * np.sqrt(np.maximum(q, 0.0))


def M_of_n(n: int) -> float:
    """M(n) = (1/2) sum_{i=1}^{n-1} csc(i pi / n), summed in symmetric pairs."""
    if int(n) != n or n < 2:
        raise DomainError(f"M(n) needs integer n >= 2, got {n!r}")
    n = int(n)
    terms = []
    for i in range(1, n // 2 + (n % 2)):
        # csc(i pi/n) = csc((n-i) pi/n); the pair contributes twice one term
        terms.append(2 / math.sin(i * math.pi / n))
    if n % 2 == 0:
        terms.append(1.0)  # middle term i = n/2
    return 0.5 * math.fsum(terms)


def G_of_e(e: float) -> float:
    if not 0 <= e < 1:
        raise DomainError(f"e must lie in [0, 1), got {e!r}")
    q = e / (1 + math.sqrt(1 - e * e))
    return math.sqrt(1 - q ** 4)


def cosine_series_integral(n: int, e: float) -> float:
    """Closed form of integral_0^pi cos(n t) / (1 + e cos t) dt."""
    if int(n) != n or n < 0:
        raise DomainError(f"n must be a nonnegative integer, got {n!r}")
    if not 0 <= e < 1:
        raise DomainError(f"e must lie in [0, 1), got {e!r}")
    s = math.sqrt(1 - e * e)
    return math.pi / s * (-e / (1 + s)) ** int(n)
