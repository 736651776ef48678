"""Scalar constants and exponent algebra of the mixed Hardy problem.

Everything here is a pure function of (n, s, m). Exponents that are not
defined for the requested m are stored as ``None`` in :class:`ExponentTable`
and raise :class:`errors.DomainError` when requested through
:meth:`ExponentTable.require`.
"""
import math
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Optional

import numpy as np

from errors import DomainError

# Lanczos approximation, g = 7, nine terms.
_LANCZOS_G = 7
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x):
    """Euler Gamma function for real arguments.

    Lanczos series for x >= 0.5, reflection ``Γ(x)Γ(1-x) = π / sin(πx)``
    below. Raises DomainError at the poles 0, -1, -2, ...
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"gamma_fn needs a finite argument, got {x}")
    if x <= 0 and x == math.floor(x):
        raise DomainError(f"gamma_fn has a pole at {x:g}")

    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))

    z = x - 1.0
    acc = _LANCZOS_COEFFS[0]
    for i, coeff in enumerate(_LANCZOS_COEFFS[1:], start=1):
        acc += coeff / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def _check_dimension(n):
    if int(n) != n or n < 3:
        raise DomainError(f"dimension n must be an integer >= 3, got {n}")


def _check_order(s):
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order s must lie in (0, 1), got {s}")


def hardy_constant(n):
    """Λ_n = (n-2)²/4, the optimal constant of the local Hardy inequality."""
    _check_dimension(n)
    return (n - 2) ** 2 / 4.0


def normalization_constant(n, s):
    """C_{n,s} = 2^{2s} π^{-n/2} Γ((n+2s)/2) / |Γ(-s)|."""
    _check_dimension(n)
    _check_order(s)
    return (
        2.0 ** (2.0 * s)
        * math.pi ** (-n / 2.0)
        * gamma_fn((n + 2.0 * s) / 2.0)
        / abs(gamma_fn(-s))
    )


def sphere_surface(n):
    """Surface measure ω_{n-1} of the unit sphere in R^n."""
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / gamma_fn(n / 2.0)


def truncate(t, k):
    """T_k(t) = max(min(k, t), -k). Works on scalars and numpy arrays."""
    if k <= 0:
        raise DomainError(f"truncation level must be positive, got {k}")
    if np.ndim(t) == 0:
        return max(min(float(k), float(t)), -float(k))
    return np.clip(t, -k, k)


@dataclass(frozen=True)
class ExponentTable:
    n: int
    s: float
    m: float
    lambda_n: float
    c_ns: float
    two_star: float
    two_star_conj: float
    m_conj: Optional[float] = None
    m_star: Optional[float] = None
    m_double_star: Optional[float] = None
    m_star_s: Optional[float] = None
    m_double_star_s: Optional[float] = None
    alpha: Optional[float] = None
    gamma_m: Optional[float] = None

    def require(self, name):
        """Return a field, raising DomainError when it is undefined for this m."""
        value = getattr(self, name)
        if value is None:
            raise DomainError(
                f"{name} is undefined for n={self.n}, s={self.s}, m={self.m}"
            )
        return value

    def undefined(self):
        return [f.name for f in fields(self) if getattr(self, f.name) is None]

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def exponent_table(n, s, m):
    """All exponents attached to an L^m datum in dimension n with order s.

    Fields outside their range of definition are left as None:
    m' needs m > 1, m* needs m < n, m** / α / γ(m) need 1 < m < n/2
    (m** and α only m < n/2), m*_s needs m < n/s, m**_s needs m < n/(2s).
    """
    _check_dimension(n)
    _check_order(s)
    m = float(m)
    if not m > 0:
        raise DomainError(f"integrability exponent m must be positive, got {m}")

    values = {
        "n": int(n),
        "s": float(s),
        "m": m,
        "lambda_n": hardy_constant(n),
        "c_ns": normalization_constant(n, s),
        "two_star": 2.0 * n / (n - 2.0),
        "two_star_conj": 2.0 * n / (n + 2.0),
    }
    if m > 1:
        values["m_conj"] = m / (m - 1.0)
    if m < n:
        values["m_star"] = n * m / (n - m)
    if m < n / 2.0:
        values["m_double_star"] = n * m / (n - 2.0 * m)
        values["alpha"] = m * (n - 2.0) / (n - 2.0 * m)
        if m > 1:
            values["gamma_m"] = n * (m - 1.0) * (n - 2.0 * m) / m ** 2
    if m < n / s:
        values["m_star_s"] = n * m / (n - m * s)
    if m < n / (2.0 * s):
        values["m_double_star_s"] = n * m / (n - 2.0 * m * s)
    return ExponentTable(**values)


def regime(n, m):
    """Summability regime of an L^m datum for the mixed operator.

    "l1" for m = 1, "nonvariational" for 1 < m < (2*)', "energy" for
    (2*)' <= m <= n/2, "bounded" for m > n/2.
    """
    _check_dimension(n)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if m == 1:
        return "l1"
    if m < 2.0 * n / (n + 2.0):
        return "nonvariational"
    if m <= n / 2.0:
        return "energy"
    return "bounded"


def fractional_regime(n, s, m):
    """Same classification with the purely nonlocal thresholds 2n/(n+2s), n/(2s)."""
    _check_dimension(n)
    _check_order(s)
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if m == 1:
        return "l1"
    if m < 2.0 * n / (n + 2.0 * s):
        return "nonvariational"
    if m <= n / (2.0 * s):
        return "energy"
    return "bounded"


@lru_cache(maxsize=None)
def _unit_cell_moment(n, s):
    # ∫ over [-1/2, 1/2]^n of |y|^{2-n-2s}: exact on the inscribed ball,
    # midpoint sums over the positive orthant for the corners.
    power = 2.0 - n - 2.0 * s
    inner = sphere_surface(n) * 0.5 ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    half = max(4, int(round(0.5 * 2.0e5 ** (1.0 / n))))
    centers = (np.arange(half) + 0.5) / (2.0 * half)
    grids = np.meshgrid(*([centers] * n), indexing="ij")
    radius = np.sqrt(sum(g ** 2 for g in grids))
    corner = radius > 0.5
    cell = (1.0 / (2.0 * half)) ** n
    outer = 2 ** n * cell * float(np.sum(radius[corner] ** power))
    return inner + outer


def self_cell_moment(n, s, h):
    """∫ over a cube of side h centred at 0 of |y|^{2-n-2s} dy."""
    _check_dimension(n)
    _check_order(s)
    return _unit_cell_moment(int(n), float(s)) * h ** (2.0 - 2.0 * s)
