"""Spectral measures, Pickands dependence functions and extreme value copulas.

Bivariate models are parametrized by the first simplex coordinate, so that a
scalar ``t`` in [0, 1] stands for the point ``(t, 1 - t)``.  Generic routines
take arrays of simplex points of shape ``(d,)`` or ``(N, d)``.
"""

from __future__ import annotations

import itertools
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .config import TOL
from .errors import (
    DegenerateBasisWarning,
    DimensionMismatch,
    InfeasibleTheta,
    InvalidSpectralMeasure,
    NegativeCoordinate,
    NegativeInput,
    OutOfRange,
    ZeroVector,
)

__all__ = [
    "SimplexPoint",
    "make_simplex_point",
    "PickandsModel",
    "BivariatePickands",
    "ClosedFormPickands",
    "BivariateClosedForm",
    "SpectralDensityPickands",
    "AtomicPickands",
    "BasisFamily",
    "Theta",
    "as_theta",
    "pickands_eval",
    "tail_dep_l",
    "family_A",
    "family_h",
    "copula_eval",
    "copula_gradient",
    "PickandsDiagnostics",
    "validate_pickands",
    "validate_pickands_values",
    "simplex_grid",
    "independence_model",
    "mai_scherer_fixture",
]


# ---------------------------------------------------------------------------
# simplex points


@dataclass(frozen=True)
class SimplexPoint:
    """A point of the unit simplex with ``d >= 2`` coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise DimensionMismatch("a simplex point needs at least 2 coordinates")
        if np.any(c < 0) or np.any(c > 1):
            raise OutOfRange("simplex coordinates must lie in [0, 1]")
        if abs(c.sum() - 1.0) > TOL.simplex_sum:
            raise OutOfRange(f"simplex coordinates sum to {c.sum()!r}, not 1")
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @property
    def d(self) -> int:
        return self.coords.size

    @property
    def t(self) -> float:
        """First coordinate (the bivariate parametrization)."""
        return float(self.coords[0])

    @classmethod
    def from_t(cls, t: float) -> "SimplexPoint":
        return cls(np.array([t, 1.0 - t]))


def make_simplex_point(coords) -> SimplexPoint:
    """Normalize a nonnegative vector onto the simplex.

    Raises
    ------
    NegativeCoordinate
        If any entry is negative.
    ZeroVector
        If all entries are zero.
    """
    c = np.asarray(coords, dtype=float)
    if c.ndim != 1 or c.size < 2:
        raise DimensionMismatch("a simplex point needs at least 2 coordinates")
    if not np.all(np.isfinite(c)):
        raise OutOfRange("coordinates must be finite")
    if np.any(c < 0):
        raise NegativeCoordinate(f"negative coordinate in {c!r}")
    s = c.sum()
    if s <= 0:
        raise ZeroVector("cannot normalize the zero vector")
    c = c / s
    # absorb the last round-off in the largest coordinate so the sum is 1
    k = int(np.argmax(c))
    c[k] = 1.0 - (c.sum() - c[k])
    return SimplexPoint(c)


def _as_points(w, d: int) -> tuple[np.ndarray, bool]:
    """Return ``(points, single)`` with points of shape (N, d)."""
    if isinstance(w, SimplexPoint):
        pts = w.coords[None, :]
        single = True
    else:
        pts = np.asarray(w, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.ndim != 2:
            raise DimensionMismatch("points must have shape (d,) or (N, d)")
        if pts.size and (np.any(pts < 0) or np.any(pts > 1)):
            raise OutOfRange("simplex coordinates must lie in [0, 1]")
        if pts.size and np.max(np.abs(pts.sum(axis=1) - 1.0)) > 1e-9:
            raise OutOfRange("simplex points must sum to 1")
    if pts.shape[1] != d:
        raise DimensionMismatch(f"expected points of dimension {d}, got {pts.shape[1]}")
    return pts, single


def _as_t(t) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise OutOfRange("t must lie in [0, 1]")
    return np.atleast_1d(arr), arr.ndim == 0


def _unwrap(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


def simplex_grid(d: int, m: int) -> np.ndarray:
    """Uniform barycentric grid: all points with coordinates ``k_j / m``."""
    if d == 2:
        t = np.linspace(0.0, 1.0, m + 1)
        return np.column_stack([t, 1.0 - t])
    rows = [c for c in itertools.product(range(m + 1), repeat=d - 1) if sum(c) <= m]
    k = np.array(rows, dtype=float)
    return np.column_stack([k, m - k.sum(axis=1)]) / m


# ---------------------------------------------------------------------------
# Pickands dependence functions


class PickandsModel(ABC):
    """A Pickands dependence function on the ``d``-dimensional simplex."""

    dim: int = 2

    @abstractmethod
    def evaluate(self, w) -> np.ndarray:
        """A at simplex points of shape (N, d); returns shape (N,)."""


class BivariatePickands(PickandsModel):
    """Bivariate model evaluated through ``t`` with ``w = (t, 1 - t)``."""

    dim = 2

    @abstractmethod
    def _A(self, t: np.ndarray) -> np.ndarray:
        ...

    def A(self, t):
        tt, single = _as_t(t)
        return _unwrap(self._A(tt), single)

    def evaluate(self, w) -> np.ndarray:
        pts, _ = _as_points(w, 2)
        return self._A(pts[:, 0])

    def _fd(self, t: np.ndarray, order: int) -> np.ndarray:
        # central differences, shifted inwards near the endpoints
        step = TOL.fd_step
        c = np.clip(t, step, 1.0 - step)
        if order == 1:
            return (self._A(c + step) - self._A(c - step)) / (2 * step)
        step = np.cbrt(step)  # eps**(1/4) balances truncation and cancellation
        c = np.clip(t, step, 1.0 - step)
        return (self._A(c + step) - 2 * self._A(c) + self._A(c - step)) / step**2

    def dA(self, t):
        """First derivative in t."""
        tt, single = _as_t(t)
        return _unwrap(self._fd(tt, 1), single)

    def d2A(self, t):
        """Second derivative in t."""
        tt, single = _as_t(t)
        return _unwrap(self._fd(tt, 2), single)


class ClosedFormPickands(PickandsModel):
    """Closed-form A on the d-simplex; ``func`` maps (N, d) points to (N,)."""

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], dim: int):
        if dim < 2:
            raise DimensionMismatch("dimension must be at least 2")
        self.func = func
        self.dim = dim

    def evaluate(self, w) -> np.ndarray:
        pts, _ = _as_points(w, self.dim)
        return np.asarray(self.func(pts), dtype=float).reshape(len(pts))


class BivariateClosedForm(BivariatePickands):
    """Closed-form bivariate A(t), optionally with analytic A' and A''."""

    def __init__(self, func, deriv=None, deriv2=None):
        self.func = func
        self.deriv = deriv
        self.deriv2 = deriv2

    def _A(self, t):
        return np.broadcast_to(np.asarray(self.func(t), dtype=float), t.shape).copy()

    def dA(self, t):
        if self.deriv is None:
            return super().dA(t)
        tt, single = _as_t(t)
        return _unwrap(np.broadcast_to(self.deriv(tt), tt.shape).astype(float), single)

    def d2A(self, t):
        if self.deriv2 is None:
            return super().d2A(t)
        tt, single = _as_t(t)
        return _unwrap(np.broadcast_to(self.deriv2(tt), tt.shape).astype(float), single)


class SpectralDensityPickands(BivariatePickands):
    """Bivariate model given by a spectral density f on [0, 1].

    Parameters
    ----------
    density : callable
        Vectorized f(t).
    g, h : callable, optional
        Closed forms of ``g(z) = int_0^z t f(t) dt`` and ``h(z) = int_0^z f(t) dt``.
        Without them A is computed by adaptive quadrature.
    breakpoints : sequence of float
        Points where f is not smooth, passed to the quadrature.
    density_bound, slope_bound : float, optional
        Upper bounds for ``sup f`` and ``sup |f'|`` (used by the sampler's
        rejection envelope).
    """

    def __init__(self, density, g=None, h=None, breakpoints: Sequence[float] = (),
                 density_bound: float | None = None, slope_bound: float | None = None):
        self.density = density
        self._g = g
        self._h = h
        self.breakpoints = tuple(breakpoints)
        self.density_bound = density_bound
        self.slope_bound = slope_bound

    @property
    def has_closed_form(self) -> bool:
        return self._g is not None and self._h is not None

    def _quad(self, func, lo, hi, extra=()):
        pts = sorted({p for p in (*self.breakpoints, *extra) if lo < p < hi})
        val, _ = integrate.quad(func, lo, hi, points=pts or None, epsabs=TOL.quad_abs,
                                epsrel=1e-13, limit=500)
        return val

    def g(self, z):
        zz, single = _as_t(z)
        if self._g is not None:
            return _unwrap(np.asarray(self._g(zz), dtype=float), single)
        f = self.density
        vals = np.array([self._quad(lambda s: s * f(s), 0.0, zi) for zi in zz])
        return _unwrap(vals, single)

    def h(self, z):
        zz, single = _as_t(z)
        if self._h is not None:
            return _unwrap(np.asarray(self._h(zz), dtype=float), single)
        f = self.density
        vals = np.array([self._quad(f, 0.0, zi) for zi in zz])
        return _unwrap(vals, single)

    def A_quadrature(self, t):
        """A(t) by adaptive quadrature of ``int max(t s, (1-t)(1-s)) f(s) ds``."""
        tt, single = _as_t(t)
        f = self.density
        vals = np.array([
            self._quad(lambda s, ti=ti: max(ti * s, (1 - ti) * (1 - s)) * f(s), 0.0, 1.0,
                       extra=(1.0 - ti,))
            for ti in tt
        ])
        return _unwrap(vals, single)

    def _A(self, t):
        if not self.has_closed_form:
            return np.atleast_1d(self.A_quadrature(t))
        s = 1.0 - t
        return t - self._g(s) + s * self._h(s)

    def dA(self, t):
        tt, single = _as_t(t)
        return _unwrap(1.0 - np.atleast_1d(self.h(1.0 - tt)), single)

    def d2A(self, t):
        tt, single = _as_t(t)
        return _unwrap(np.asarray(self.density(1.0 - tt), dtype=float), single)


class AtomicPickands(BivariatePickands):
    """Discrete spectral measure ``sum_k c_k delta_{s_k}`` on [0, 1]."""

    def __init__(self, locations, masses, check: bool = True):
        s = np.asarray(locations, dtype=float)
        c = np.asarray(masses, dtype=float)
        if s.shape != c.shape or s.ndim != 1 or s.size == 0:
            raise DimensionMismatch("locations and masses must be equal-length vectors")
        if np.any(s < 0) or np.any(s > 1):
            raise OutOfRange("atom locations must lie in [0, 1]")
        if np.any(c <= 0):
            raise InvalidSpectralMeasure("atom masses must be positive")
        if check:
            m1, m2 = float(c @ s), float(c @ (1 - s))
            if abs(m1 - 1) > TOL.exact or abs(m2 - 1) > TOL.exact:
                raise InvalidSpectralMeasure(
                    f"moments are ({m1!r}, {m2!r}); both must equal 1")
        self.locations = s
        self.masses = c

    def _A(self, t):
        s, c = self.locations, self.masses
        return np.maximum(np.outer(t, s), np.outer(1 - t, 1 - s)) @ c


def independence_model(dim: int = 2) -> PickandsModel:
    """A = 1 (independent margins)."""
    if dim == 2:
        return BivariateClosedForm(lambda t: np.ones_like(t), lambda t: np.zeros_like(t),
                                   lambda t: np.zeros_like(t))
    return ClosedFormPickands(lambda w: np.ones(len(w)), dim)


def mai_scherer_fixture() -> list[AtomicPickands]:
    """Four two-atom spectral measures whose convex hull is not identifiable.

    ``A1/4 + 3 A2/4 == (A3 + A4)/2`` holds pointwise.
    """
    return [
        AtomicPickands([0.0, 1.0], [1.0, 1.0]),
        AtomicPickands([1 / 3, 2 / 3], [1.0, 1.0]),
        AtomicPickands([0.0, 2 / 3], [0.5, 1.5]),
        AtomicPickands([1 / 3, 1.0], [1.5, 0.5]),
    ]


def pickands_eval(model: PickandsModel, w):
    """Evaluate A at a simplex point (float) or an (N, d) array of points."""
    pts, single = _as_points(w, model.dim)
    return _unwrap(model.evaluate(pts), single)


def tail_dep_l(model: PickandsModel, x):
    """Tail dependence function ``l(x) = |x|_1 A(x / |x|_1)``."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != model.dim:
        raise DimensionMismatch(f"expected dimension {model.dim}")
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise NegativeInput("the tail dependence function needs x >= 0")
    r = arr.sum(axis=1)
    out = np.zeros(len(arr))
    pos = r > 0
    if pos.any():
        w = arr[pos] / r[pos, None]
        # rescaling moves sums off 1 by an ulp at most
        out[pos] = r[pos] * model.evaluate(w)
    return _unwrap(out, single)


# ---------------------------------------------------------------------------
# parametric family


@dataclass(frozen=True)
class Theta:
    """Weights of the first ``p - 1`` basis elements."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def feasible(self) -> bool:
        v = self.values
        return bool(np.all(v >= 0) and v.sum() <= 1 + TOL.exact)

    @property
    def weights(self) -> np.ndarray:
        """All p mixture weights, including ``1 - sum(theta)``."""
        return np.append(self.values, 1.0 - self.values.sum())

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values.tolist())


def as_theta(theta, p: int | None = None, strict: bool = False) -> Theta:
    th = theta if isinstance(theta, Theta) else Theta(np.asarray(theta, dtype=float))
    if p is not None and len(th) != p - 1:
        raise DimensionMismatch(f"theta must have {p - 1} entries, got {len(th)}")
    if not np.all(np.isfinite(th.values)):
        raise InfeasibleTheta("theta must be finite")
    if strict and not th.feasible:
        raise InfeasibleTheta(f"theta={th.values.tolist()} lies outside the parameter space")
    return th


@dataclass(frozen=True)
class BasisFamily:
    """Ordered basis ``(A_1, ..., A_p)`` of the convex-combination family."""

    basis: tuple
    validation_size: int = field(default=101, repr=False)

    def __post_init__(self):
        basis = tuple(self.basis)
        object.__setattr__(self, "basis", basis)
        if len(basis) < 2:
            raise DimensionMismatch("a basis family needs at least two elements")
        dims = {m.dim for m in basis}
        if len(dims) != 1:
            raise DimensionMismatch(f"basis elements have mixed dimensions {sorted(dims)}")
        grid = simplex_grid(self.dim, self.validation_size - 1 if self.dim == 2 else 10)
        vals = self.evaluate_all(grid)
        for i, j in itertools.combinations(range(len(basis)), 2):
            if np.max(np.abs(vals[:, i] - vals[:, j])) <= TOL.exact:
                warnings.warn(f"basis elements {i + 1} and {j + 1} coincide",
                              DegenerateBasisWarning, stacklevel=3)

    @property
    def dim(self) -> int:
        return self.basis[0].dim

    @property
    def p(self) -> int:
        return len(self.basis)

    def evaluate_all(self, w) -> np.ndarray:
        """Matrix ``[A_j(w_l)]`` of shape (N, p)."""
        pts, _ = _as_points(w, self.dim)
        return np.column_stack([m.evaluate(pts) for m in self.basis])

    def h_matrix(self, w) -> np.ndarray:
        """Matrix ``[A_j(w_l) - A_p(w_l)]`` of shape (N, p - 1)."""
        a = self.evaluate_all(w)
        return a[:, :-1] - a[:, -1:]


def family_A(fam: BasisFamily, theta, w, strict: bool = False):
    """``A(w, theta) = A_p(w) + h(w)^T theta``."""
    th = as_theta(theta, fam.p, strict=strict)
    pts, single = _as_points(w, fam.dim)
    a = fam.evaluate_all(pts)
    vals = a[:, -1] + (a[:, :-1] - a[:, -1:]) @ th.values
    return _unwrap(vals, single)


def family_h(fam: BasisFamily, w) -> np.ndarray:
    """``h(w)``; shape (p - 1,) for one point, (N, p - 1) otherwise."""
    pts, single = _as_points(w, fam.dim)
    h = fam.h_matrix(pts)
    return h[0] if single else h


def _copula_parts(u, d):
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != d:
        raise DimensionMismatch(f"expected dimension {d}")
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise OutOfRange("copula arguments must lie in [0, 1]")
    zero = np.any(arr == 0, axis=1)
    with np.errstate(divide="ignore"):
        x = -np.log(arr)
    r = np.where(zero, np.inf, x.sum(axis=1))
    inner = ~zero & (r > 0)
    w = x[inner] / r[inner, None]
    return single, zero, r, inner, w


def copula_eval(fam: BasisFamily, theta, u):
    """Extreme value copula ``C(u, theta) = exp(-r A(w, theta))``.

    ``r = sum(-log u)`` and ``w = -log(u) / r``; C is 0 when some ``u_j = 0``
    and 1 at ``u = (1, ..., 1)``.
    """
    th = as_theta(theta, fam.p)
    single, zero, r, inner, w = _copula_parts(u, fam.dim)
    out = np.ones(len(r))
    out[zero] = 0.0
    if inner.any():
        out[inner] = np.exp(-r[inner] * family_A(fam, th, w))
    return _unwrap(out, single)


def copula_gradient(fam: BasisFamily, theta, u) -> np.ndarray:
    """Gradient of C(u, theta) in theta: ``-r h(w) C(u, theta)``.

    Extended by continuity with 0 where r = 0 or some ``u_j = 0``.
    """
    th = as_theta(theta, fam.p)
    single, zero, r, inner, w = _copula_parts(u, fam.dim)
    out = np.zeros((len(r), fam.p - 1))
    if inner.any():
        h = fam.h_matrix(w)
        c = np.exp(-r[inner] * (fam.evaluate_all(w)[:, -1] + h @ th.values))
        out[inner] = -(r[inner] * c)[:, None] * h
    return out[0] if single else out


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class PickandsDiagnostics:
    endpoint_violation: float | None
    bounds_violation: float
    convexity_violation: float | None
    tolerance: float

    @property
    def endpoint_ok(self) -> bool:
        return self.endpoint_violation is None or self.endpoint_violation <= self.tolerance

    @property
    def bounds_ok(self) -> bool:
        return self.bounds_violation <= self.tolerance

    @property
    def convexity_ok(self) -> bool:
        return self.convexity_violation is None or self.convexity_violation <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.endpoint_ok and self.bounds_ok and self.convexity_ok


def _diagnose(points: np.ndarray, values: np.ndarray, tol: float,
              uniform_t: bool) -> PickandsDiagnostics:
    vertex = np.isclose(points.max(axis=1), 1.0, rtol=0, atol=TOL.exact)
    endpoint = float(np.max(np.abs(values[vertex] - 1.0))) if vertex.any() else None
    lower = points.max(axis=1) - values
    bounds = float(max(0.0, lower.max(), (values - 1.0).max()))
    convexity = None
    if uniform_t and len(values) >= 3:
        second = values[1:-1] - 0.5 * (values[:-2] + values[2:])
        convexity = float(max(0.0, second.max()))
    return PickandsDiagnostics(endpoint, bounds, convexity, tol)


def validate_pickands(model: PickandsModel, grid_size: int = 1001,
                      tol: float = TOL.validation) -> PickandsDiagnostics:
    """Check ``A(e_j) = 1``, ``max(w) <= A <= 1`` and (d = 2) midpoint convexity."""
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    pts = simplex_grid(model.dim, grid_size - 1 if model.dim == 2 else max(2, grid_size))
    return _diagnose(pts, model.evaluate(pts), tol, model.dim == 2)


def validate_pickands_values(t, values, tol: float = TOL.validation) -> PickandsDiagnostics:
    """Same checks on tabulated bivariate values over a uniform t-grid.

    The endpoint check is skipped (reported as None) if the grid misses 0 and 1.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    pts = np.column_stack([t, 1 - t])
    return _diagnose(pts, values, tol, True)
