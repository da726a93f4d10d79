"""Special functions needed by the kernel integrands.

Two exact requirements drive this module:

* ``gamma_fn`` — the Euler gamma function on the positive axis, used in
  normalization constants and in the series below.
* ``hyp0f1_reg`` — the *regularized* confluent limit function
  0F1~(b; z) = Σ_k z^k / (k! Γ(b+k)), needed at b = n/2 with z = −x²/4,
  where it equals the angular average of a plane wave over the unit
  (n−1)-sphere up to normalization.

For the dimensions the model supports (n = 2..5, plus the b = 1/2 identity
case) the function collapses to closed Bessel/trig forms:

    b = 1/2 : cos(x)/√π
    b = 1   : J0(x)
    b = 3/2 : (2/√π)·sin(x)/x
    b = 2   : 2·J1(x)/x
    b = 5/2 : (4/√π)·(sin x − x cos x)/x³

with x = 2√(−z).  Those closed forms are the production path (they are
vectorized ufuncs, cheap enough to sit inside an integrand).  A direct
power series (compensated, extended-precision accumulation) covers small
|z| for arbitrary b > 0, and scipy's J_ν covers the rest.  Keeping two
independent routes lets the tests cross-check them against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j0, j1, jv

from .errors import ConfigError

_EPS = float(np.finfo(float).eps)

# series is accurate (honest bound below 1e-12 absolute) only while the
# alternating-term cancellation stays mild; beyond this the Bessel route
# takes over.
_SERIES_Z_CAP = 40.0
_SERIES_MAX_TERMS = 400

# closed-form small-argument switch: below this x the Bessel-quotient forms
# lose digits — the worst offender is (sin x − x cos x)/x³, whose relative
# error grows like 3·eps/x² — and the power series is exact to machine
# precision.  0.25 keeps both branches at ~1e-14.
_SMALL_X = 0.25


@dataclass(frozen=True)
class SpecialValue:
    """A function value together with an estimated absolute error bound."""

    value: float
    abs_error_bound: float


def gamma_fn(x: float) -> float:
    """Euler gamma for x > 0.

    Raises ConfigError for x <= 0 (the model never needs the reflection
    territory, and a pole passing silently through a normalization constant
    would be much worse than an exception).
    """
    if not (x > 0.0):
        raise ConfigError(f"gamma_fn: argument must be > 0, got {x!r}")
    return math.gamma(x)


def _series(b: float, z: float) -> SpecialValue:
    """Power series Σ z^k/(k! Γ(b+k)) with 80-bit compensated accumulation.

    Returns value and an honest absolute error bound: twice the first
    neglected term plus roundoff proportional to the sum of |terms|
    (which is what cancellation actually costs).
    """
    ld = np.longdouble
    term = ld(1.0) / ld(math.gamma(b))
    total = ld(0.0)
    comp = ld(0.0)
    abs_sum = ld(0.0)
    zl = ld(z)
    bl = ld(b)
    k = 0
    while k < _SERIES_MAX_TERMS:
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        abs_sum += abs(term)
        term = term * zl / (ld(k + 1) * (bl + ld(k)))
        k += 1
        if abs(term) < ld(1e-30) * max(abs_sum, ld(1.0)):
            break
    eps_ld = float(np.finfo(np.longdouble).eps)
    bound = 2.0 * abs(float(term)) + 4.0 * k * eps_ld * float(abs_sum) + 2.0 * _EPS * abs(float(total))
    return SpecialValue(float(total), bound)


def _envelope(b: float, x: float) -> float:
    """Rough magnitude scale of 0F1~(b; -x²/4), used for error bounds."""
    if x <= 2.0:
        return 1.0 / math.gamma(b)
    return (x / 2.0) ** (1.0 - b) * math.sqrt(2.0 / (math.pi * x))


def _bessel(b: float, z: float) -> SpecialValue:
    """0F1~(b; z) via the Bessel connection (x/2)^{1-b} J_{b-1}(x)."""
    x = 2.0 * math.sqrt(-z)
    nu = b - 1.0
    if nu == 0.0:
        jval = float(j0(x))
    elif nu == 1.0:
        jval = float(j1(x))
    elif nu == -0.5:
        jval = math.sqrt(2.0 / (math.pi * x)) * math.cos(x)
    elif nu == 0.5:
        jval = math.sqrt(2.0 / (math.pi * x)) * math.sin(x)
    elif nu == 1.5:
        jval = math.sqrt(2.0 / (math.pi * x)) * (math.sin(x) / x - math.cos(x))
    else:
        jval = float(jv(nu, x))
    value = (x / 2.0) ** (1.0 - b) * jval
    bound = 50.0 * _EPS * _envelope(b, x) + 4.0 * _EPS * abs(value)
    return SpecialValue(value, bound)


def hyp0f1_reg_detailed(b: float, z: float) -> SpecialValue:
    """Regularized 0F1~ with an attached absolute error bound."""
    if not (b > 0.0):
        raise ConfigError(f"hyp0f1_reg: b must be > 0, got {b!r}")
    if b > 4.0:
        raise ConfigError(f"hyp0f1_reg: b={b!r} outside the supported range (0, 4]")
    if not (z <= 0.0):
        raise ConfigError(f"hyp0f1_reg: z must be <= 0, got {z!r}")
    if not math.isfinite(z):
        raise ConfigError(f"hyp0f1_reg: z must be finite, got {z!r}")
    if abs(z) > 1e12:
        raise ConfigError(f"hyp0f1_reg: |z|={abs(z):.3g} beyond the supported 1e12")
    if z == 0.0:
        return SpecialValue(1.0 / math.gamma(b), 2.0 * _EPS / math.gamma(b))
    x = 2.0 * math.sqrt(-z)
    if 2.0 * b in (1.0, 2.0, 3.0, 4.0, 5.0):
        # production orders: closed forms, series only for tiny arguments
        if x < _SMALL_X:
            return _series(b, z)
        return _bessel(b, z)
    if abs(z) < min(50.0 * b, _SERIES_Z_CAP):
        return _series(b, z)
    return _bessel(b, z)


def hyp0f1_reg(b: float, z: float) -> float:
    """Regularized confluent limit 0F1~(b; z) for b in (0,4], z <= 0."""
    return hyp0f1_reg_detailed(b, z).value


def sphere_mean_factor(n: int, x: np.ndarray) -> np.ndarray:
    """Vectorized 0F1~(n/2; −x²/4) for the supported dimensions n = 2..5.

    This is the form the kernel integrands consume: the mean of
    e^{i k·r} over directions equals Γ(n/2) times this factor.  Closed
    forms throughout; a short series patches the removable 0/0 at x→0.
    """
    if n not in (2, 3, 4, 5):
        raise ConfigError(f"unsupported dimension n={n!r} (supported: 2..5)")
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    b = n / 2.0
    small = ax < _SMALL_X
    xs = np.where(small, 1.0, ax)
    if n == 2:
        out = j0(ax)
    elif n == 3:
        out = (2.0 / math.sqrt(math.pi)) * np.sin(xs) / xs
    elif n == 4:
        out = 2.0 * j1(xs) / xs
    else:  # n == 5
        out = (4.0 / math.sqrt(math.pi)) * (np.sin(xs) - xs * np.cos(xs)) / xs**3
    if np.any(small):
        z = -(x * x) / 4.0
        term = np.full_like(z, 1.0 / math.gamma(b))
        ser = term.copy()
        for k in range(1, 11):
            term = term * z / (k * (b + k - 1.0))
            ser = ser + term
        out = np.where(small, ser, out)
    return out


# internal names exported for the dual-route consistency tests
_series_route = _series
_bessel_route = _bessel
