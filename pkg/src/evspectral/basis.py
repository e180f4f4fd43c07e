"""Three-element trigonometric basis of bivariate spectral densities.

``f1`` is a raised-cosine bump on ``[0, beta]`` followed by a rising
half-cosine on ``(beta, 1]`` (``beta = 2/3`` by default), ``f2(t) = f1(1 - t)``
and ``f3(t) = pi sin(pi t)``.  All antiderivatives are in closed form:

    g_i(z) = int_0^z t f_i(t) dt,    h_i(z) = int_0^z f_i(t) dt,
    A_i(z) = z - g_i(1 - z) + (1 - z) h_i(1 - z).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, partial

import numpy as np

from .core import BasisFamily, SpectralDensityPickands
from .errors import InvalidSpectralMeasure, OutOfRange

BREAKPOINT = 2.0 / 3.0

__all__ = [
    "BREAKPOINT",
    "TrigConstants",
    "trig_constants",
    "trig_density",
    "trig_g",
    "trig_h",
    "trig_A",
    "trig_element",
    "trig_basis",
]


@dataclass(frozen=True)
class TrigConstants:
    """Normalizing constants; ``c`` scales f3, ``a`` and ``b`` scale f1/f2."""

    a: float
    b: float
    c: float
    breakpoint: float = BREAKPOINT

    @property
    def omega(self) -> float:
        """Frequency of the left piece, ``2 pi / beta``."""
        return 2 * np.pi / self.breakpoint

    @property
    def kappa(self) -> float:
        """Frequency of the right piece, ``pi / (2 (1 - beta))``."""
        return np.pi / (2 * (1 - self.breakpoint))

    @property
    def phase(self) -> float:
        return np.pi - self.kappa * self.breakpoint

    @property
    def density_bound(self) -> float:
        return max(self.a, self.a * self.b, self.c)

    @property
    def slope_bound(self) -> float:
        return max(0.5 * self.a * self.omega, self.a * self.b * self.kappa, np.pi * self.c)


def _right_integrals(beta: float) -> tuple[float, float]:
    """``int_beta^1 (1 + cos)`` and ``int_beta^1 t (1 + cos)`` of the right piece."""
    k = np.pi / (2 * (1 - beta))
    ph = np.pi - k * beta

    def H(t):
        return t + np.sin(k * t + ph) / k

    def G(t):
        return t * t / 2 + t * np.sin(k * t + ph) / k + np.cos(k * t + ph) / k**2

    return H(1.0) - H(beta), G(1.0) - G(beta)


@lru_cache(maxsize=None)
def trig_constants(breakpoint: float = BREAKPOINT) -> TrigConstants:
    """Constants making every f_i satisfy ``int t f = int (1 - t) f = 1``.

    For the default breakpoint the closed forms are used; other breakpoints
    solve ``h1(1) = 2``, ``g1(1) = 1`` which is linear in ``b``.
    """
    c = np.pi
    if breakpoint == BREAKPOINT:
        pi = np.pi
        b = pi**2 / (8 - 6 * pi + 2 * pi**2)
        a = (12 * pi**2 - 36 * pi + 48) / (3 * pi**2 - 8 * pi + 8)
        return TrigConstants(a=a, b=b, c=c)
    if not 0 < breakpoint < 1:
        raise OutOfRange("breakpoint must lie in (0, 1)")
    # left piece integrates to beta/2 (h) and beta^2/4 (g) for a = 1
    hl, gl = breakpoint / 2, breakpoint**2 / 4
    hr, gr = _right_integrals(breakpoint)
    den = 2 * gr - hr
    b = (hl - 2 * gl) / den if den != 0 else -1.0
    if not b > 0:
        raise InvalidSpectralMeasure(f"no positive density with breakpoint {breakpoint}")
    a = 2.0 / (hl + b * hr)
    return TrigConstants(a=float(a), b=float(b), c=c, breakpoint=float(breakpoint))


def _check(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise OutOfRange("argument must lie in [0, 1]")
    return arr


def _f1(t, k: TrigConstants):
    left = 0.5 * k.a * (1 - np.cos(k.omega * t))
    right = k.a * k.b * (1 + np.cos(k.kappa * t + k.phase))
    return np.where(t <= k.breakpoint, left, right)


def _h1(z, k: TrigConstants):
    w, kp, ph, beta = k.omega, k.kappa, k.phase, k.breakpoint
    left = 0.5 * k.a * (z - np.sin(w * z) / w)
    right = (k.a * beta / 2
             + k.a * k.b * (z - beta + (np.sin(kp * z + ph) - np.sin(kp * beta + ph)) / kp))
    return np.where(z <= beta, left, right)


def _g1(z, k: TrigConstants):
    w, kp, ph, beta = k.omega, k.kappa, k.phase, k.breakpoint

    def G(t):
        return t * t / 2 + t * np.sin(kp * t + ph) / kp + np.cos(kp * t + ph) / kp**2

    left = 0.5 * k.a * (z * z / 2 - z * np.sin(w * z) / w - np.cos(w * z) / w**2 + 1 / w**2)
    right = k.a * beta**2 / 4 + k.a * k.b * (G(z) - G(beta))
    return np.where(z <= beta, left, right)


def trig_density(i: int, t, constants: TrigConstants | None = None):
    """Spectral density f_i(t), i in {1, 2, 3}."""
    k = constants or trig_constants()
    t = _check(t)
    if i == 1:
        out = _f1(t, k)
    elif i == 2:
        out = _f1(1 - t, k)
    elif i == 3:
        out = k.c * np.sin(np.pi * t)
    else:
        raise ValueError(f"basis index must be 1, 2 or 3, got {i}")
    return out[()] if np.ndim(out) == 0 else out


def trig_h(i: int, z, constants: TrigConstants | None = None):
    """``h_i(z) = int_0^z f_i``; runs from 0 to 2."""
    k = constants or trig_constants()
    z = _check(z)
    if i == 1:
        out = _h1(z, k)
    elif i == 2:
        out = 2 - _h1(1 - z, k)
    elif i == 3:
        out = 1 - np.cos(np.pi * z)
    else:
        raise ValueError(f"basis index must be 1, 2 or 3, got {i}")
    return out[()] if np.ndim(out) == 0 else out


def trig_g(i: int, z, constants: TrigConstants | None = None):
    """``g_i(z) = int_0^z t f_i(t) dt``; runs from 0 to 1."""
    k = constants or trig_constants()
    z = _check(z)
    if i == 1:
        out = _g1(z, k)
    elif i == 2:
        out = 1 - _h1(1 - z, k) + _g1(1 - z, k)
    elif i == 3:
        out = np.sin(np.pi * z) / np.pi - z * np.cos(np.pi * z)
    else:
        raise ValueError(f"basis index must be 1, 2 or 3, got {i}")
    return out[()] if np.ndim(out) == 0 else out


def trig_A(i: int, z, constants: TrigConstants | None = None):
    """Pickands function of f_i, ``z - g_i(1 - z) + (1 - z) h_i(1 - z)``."""
    z = _check(z)
    s = 1 - z
    out = z - trig_g(i, s, constants) + s * trig_h(i, s, constants)
    return out[()] if np.ndim(out) == 0 else out


def trig_element(i: int, breakpoint: float = BREAKPOINT) -> SpectralDensityPickands:
    k = trig_constants(breakpoint)
    if i == 3:
        bounds, slope, bps = k.c, np.pi * k.c, ()
    else:
        bounds, slope = max(k.a, k.a * k.b), max(0.5 * k.a * k.omega, k.a * k.b * k.kappa)
        bps = (k.breakpoint,) if i == 1 else (1 - k.breakpoint,)
    return SpectralDensityPickands(
        density=partial(trig_density, i, constants=k),
        g=partial(trig_g, i, constants=k),
        h=partial(trig_h, i, constants=k),
        breakpoints=bps,
        density_bound=bounds,
        slope_bound=slope,
    )


@lru_cache(maxsize=None)
def trig_basis(breakpoint: float = BREAKPOINT) -> BasisFamily:
    """The family ``(A_1, A_2, A_3)`` with ``A_3`` as the reference element."""
    return BasisFamily(tuple(trig_element(i, breakpoint) for i in (1, 2, 3)))
