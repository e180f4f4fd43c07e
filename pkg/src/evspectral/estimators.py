"""Nonparametric Pickands estimators and their projection onto a basis family.

The raw estimator is ``log A_hat(w) = -mean(log xi_i(w)) - gamma`` with
``xi_i(w) = min_j Y_ij / w_j``.  The OLS variant takes the intercept of the
regression of ``-log xi_i(w) - gamma`` on ``-log Y_ij - gamma`` (j = 1..d),
which is exactly 1 at the vertices.  Either estimate is projected onto the
family by weighted least squares, ``theta_hat = S^{-1} r``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, stats

from .config import EULER_GAMMA, TOL
from .core import (
    BasisFamily,
    SimplexPoint,
    Theta,
    _as_points,
    copula_eval,
    copula_gradient,
    family_A,
)
from .errors import (
    DegenerateColumn,
    DimensionMismatch,
    MissingCovariance,
    NonFiniteInput,
    OutOfRange,
    RankDeficient,
    SingularDesign,
    SingularEndpointCovariance,
    ZeroVector,
    ZeroXi,
)

__all__ = [
    "ExpMarginSample",
    "GridMeasure",
    "ProjectionFit",
    "exp_margins",
    "xi",
    "pickands_np",
    "pickands_ols",
    "gram_matrix",
    "is_full_rank",
    "project_theta",
    "constrain_theta",
    "fit_parametric_A",
    "plugin_sigma",
    "asym_cov",
    "ci_for_A",
    "ci_for_C",
]

KINDS = ("plain", "ols")


@dataclass(frozen=True)
class ExpMarginSample:
    """Pseudo-observations ``Y_ij = -log F_j(X_ij)`` on standard exponential margins."""

    y: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 2 or y.shape[1] < 2:
            raise DimensionMismatch("sample must be an n x d matrix with d >= 2")
        if y.shape[0] < 2:
            raise DimensionMismatch("sample needs at least two observations")
        if not np.all(np.isfinite(y)):
            raise NonFiniteInput("pseudo-observations must be finite")
        if np.any(y < 0):
            raise OutOfRange("pseudo-observations must be nonnegative")
        y.flags.writeable = False
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.y.shape[1]


def _uniform_cdf(x):
    return x


def _column_transform(x: np.ndarray, spec) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "ranks":
            if np.all(x == x[0]):
                raise DegenerateColumn("constant column has no ranks")
            return -np.log(stats.rankdata(x, method="average") / (len(x) + 1))
        if spec == "uniform":
            spec = _uniform_cdf
        elif spec == "exponential":
            return x.copy()
        else:
            raise ValueError(f"unknown marginal specification {spec!r}")
    cdf = spec.cdf if hasattr(spec, "cdf") else spec
    u = np.asarray(cdf(x), dtype=float)
    if np.any(u < 0) or np.any(u > 1):
        raise OutOfRange("marginal CDF values must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        y = -np.log(u)
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("F_j(x) = 0 for some observation")
    return y


def exp_margins(data, marginals="ranks") -> ExpMarginSample:
    """Transform raw data to standard exponential pseudo-observations.

    Parameters
    ----------
    data : array_like, shape (n, d)
    marginals : str, callable or sequence
        Per-column specification, or one applied to every column:
        ``"ranks"`` (``-log(rank / (n + 1))``, average ranks for ties),
        ``"uniform"`` (known U(0, 1) margins), ``"exponential"`` (data are
        already standard exponential), a CDF callable, or an object with a
        ``cdf`` method such as a frozen scipy distribution.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("data must be an n x d matrix")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("data contain NaN or infinite values")
    if x.shape[0] < 2:
        raise DimensionMismatch("need at least two observations")
    d = x.shape[1]
    if isinstance(marginals, str) or callable(marginals) or hasattr(marginals, "cdf"):
        specs = [marginals] * d
    else:
        specs = list(marginals)
        if len(specs) != d:
            raise DimensionMismatch(f"{len(specs)} marginal specs for {d} columns")
    y = np.column_stack([_column_transform(x[:, j], s) for j, s in enumerate(specs)])
    return ExpMarginSample(y)


@dataclass(frozen=True)
class GridMeasure:
    """Discrete weighting measure on the simplex."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        wts = np.array(self.weights, dtype=float).reshape(-1)
        pts, _ = _as_points(pts, pts.shape[-1])
        if len(pts) != len(wts):
            raise DimensionMismatch("one weight per point is required")
        if np.any(wts <= 0):
            raise OutOfRange("weights must be positive")
        if abs(wts.sum() - 1) > TOL.exact:
            raise OutOfRange("weights must sum to 1")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("grid points must be distinct")
        pts.flags.writeable = False
        wts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def uniform(cls, num: int = 19) -> "GridMeasure":
        """Bivariate grid ``t_i = i / (num + 1)``; ``num = 19`` gives steps of 0.05."""
        t = np.arange(1, num + 1) / (num + 1)
        return cls(np.column_stack([t, 1 - t]), np.full(num, 1.0 / num))

    @property
    def t(self) -> np.ndarray:
        return self.points[:, 0]

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class ProjectionFit:
    theta_hat: Theta
    gram: np.ndarray
    rhs: np.ndarray
    full_rank: bool
    kind: str = "plain"
    constrained: bool = False
    v_hat: np.ndarray | None = None
    raw: np.ndarray | None = field(default=None, repr=False)
    n: int | None = None

    @property
    def feasible(self) -> bool:
        return self.theta_hat.feasible


def xi(sample: ExpMarginSample, w) -> np.ndarray:
    """``xi_i(w) = min_j Y_ij / w_j``, skipping coordinates with ``w_j = 0``.

    Returns shape (n,) for a single point and (n, N) for N points.
    """
    pts, single = _as_points(w, sample.d)
    if np.any(pts.sum(axis=1) <= 0):
        raise ZeroVector("all weights are zero")
    y = sample.y
    if sample.d == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(pts[:, 0] > 0, y[:, :1] / pts[:, 0], np.inf)
            r2 = np.where(pts[:, 1] > 0, y[:, 1:] / pts[:, 1], np.inf)
        out = np.minimum(r1, r2)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(pts[None] > 0, y[:, None, :] / pts[None], np.inf)
        out = ratio.min(axis=2)
    return out[:, 0] if single else out


def _neg_log_xi(sample: ExpMarginSample, pts: np.ndarray, on_zero: str) -> np.ndarray:
    x = xi(sample, pts)
    zero = x == 0
    if zero.any():
        if on_zero == "raise":
            raise ZeroXi(f"{int(zero.any(axis=1).sum())} observations have xi(w) = 0")
        warnings.warn(f"dropping {int(zero.sum())} zero xi values", RuntimeWarning,
                      stacklevel=3)
    with np.errstate(divide="ignore"):
        return np.where(zero, np.nan, -np.log(np.where(zero, 1.0, x)))


def pickands_np(sample: ExpMarginSample, w, on_zero: str = "drop"):
    """Raw estimator ``exp(-mean(log xi(w)) - gamma)`` (no endpoint correction).

    Observations with ``xi_i(w) = 0`` are dropped with a warning, or raise
    :class:`ZeroXi` when ``on_zero="raise"``.
    """
    pts, single = _as_points(w, sample.d)
    nl = _neg_log_xi(sample, pts, on_zero)
    out = np.exp(np.nanmean(nl, axis=0) - EULER_GAMMA)
    return float(out[0]) if single else out


@dataclass
class _OLSFit:
    intercept: np.ndarray   # (N,)
    slopes: np.ndarray      # (d, N)
    residuals: np.ndarray   # (n_eff, N)
    endpoint_cov: np.ndarray


def _ols_regression(sample: ExpMarginSample, pts: np.ndarray, on_zero: str) -> _OLSFit:
    y = sample.y
    keep = np.all(y > 0, axis=1)
    if not keep.all():
        if on_zero == "raise":
            raise ZeroXi(f"{int((~keep).sum())} observations contain a zero coordinate")
        warnings.warn(f"dropping {int((~keep).sum())} observations with zero coordinates",
                      RuntimeWarning, stacklevel=3)
        y = y[keep]
    n, d = y.shape
    if n <= d + 1:
        raise SingularDesign(f"{n} observations for {d + 1} regression coefficients")
    z = -np.log(y) - EULER_GAMMA
    sub = ExpMarginSample(y) if not keep.all() else sample
    r = -np.log(xi(sub, pts)) - EULER_GAMMA
    zm, rm = z.mean(axis=0), r.mean(axis=0)
    zc, rc = z - zm, r - rm
    gram = zc.T @ zc
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= TOL.rank * max(ev[-1], 0.0) or ev[-1] <= 0:
        raise SingularDesign("endpoint covariates are collinear")
    slopes = linalg.solve(gram, zc.T @ rc, assume_a="pos")
    intercept = rm - zm @ slopes
    return _OLSFit(intercept, slopes, rc - zc @ slopes, gram / n)


def pickands_ols(sample: ExpMarginSample, w, on_zero: str = "drop"):
    """Endpoint-corrected estimator ``exp(beta_0(w))``; equals 1 at the vertices."""
    pts, single = _as_points(w, sample.d)
    out = np.exp(_ols_regression(sample, pts, on_zero).intercept)
    # at a vertex the response equals one covariate, so the intercept is 0
    # up to round-off
    out[np.any(pts == 1.0, axis=1)] = 1.0
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# projection


def gram_matrix(fam: BasisFamily, M: GridMeasure) -> np.ndarray:
    """``s_ij = sum_l m_l h_i(w_l) h_j(w_l)``."""
    H = fam.h_matrix(M.points)
    S = H.T @ (M.weights[:, None] * H)
    return 0.5 * (S + S.T)


def is_full_rank(S: np.ndarray, tol: float = TOL.rank) -> bool:
    """Smallest eigenvalue above ``tol`` times the largest."""
    ev = np.linalg.eigvalsh(np.atleast_2d(S))
    return bool(ev[-1] > 0 and ev[0] > tol * ev[-1])


def _sym_solve(S: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return linalg.cho_solve(linalg.cho_factor(S), b)
    except linalg.LinAlgError:
        # Bunch-Kaufman (symmetric pivoting) for nearly indefinite round-off
        return linalg.solve(S, b, assume_a="sym")


def project_theta(a_hat, fam: BasisFamily, M: GridMeasure,
                  h_matrix: np.ndarray | None = None) -> ProjectionFit:
    """Weighted least-squares fit of ``a_hat = A_hat - A_p`` on the grid of M.

    Solves ``min_theta sum_l m_l (a_hat(w_l) - h(w_l)^T theta)^2``; with
    uniform weights this is ``(H^T H)^{-1} H^T a_hat``.  ``h_matrix`` may carry
    a precomputed ``fam.h_matrix(M.points)`` for repeated fits on one grid.
    """
    a = np.asarray(a_hat, dtype=float).reshape(-1)
    if len(a) != len(M):
        raise DimensionMismatch(f"{len(a)} values for a grid of {len(M)} points")
    H = fam.h_matrix(M.points) if h_matrix is None else h_matrix
    S = H.T @ (M.weights[:, None] * H)
    S = 0.5 * (S + S.T)
    rhs = H.T @ (M.weights * a)
    full = is_full_rank(S)
    if not full:
        raise RankDeficient("Gram matrix of the basis differences is singular")
    theta = _sym_solve(S, rhs)
    return ProjectionFit(Theta(theta), S, rhs, full)


REGIONS = ("simplex", "box")


def _region_constraints(k: int, region: str):
    """Rows ``E`` and bounds ``e`` of the linear inequalities ``E theta <= e``."""
    if region == "simplex":
        rows = np.vstack([-np.eye(k), np.ones((1, k))])
        return rows, np.append(np.zeros(k), 1.0)
    if region == "box":
        return np.vstack([-np.eye(k), np.eye(k)]), np.append(np.zeros(k), np.ones(k))
    raise ValueError(f"region must be one of {REGIONS}, got {region!r}")


def _face_solutions(S: np.ndarray, target: np.ndarray, rows: np.ndarray, bounds: np.ndarray):
    """Minimizers of ``(t - target)^T S (t - target)`` on every face of a polytope."""
    k = len(target)
    for size in range(min(k, len(rows)) + 1):
        for active in itertools.combinations(range(len(rows)), size):
            E = rows[list(active)]
            kkt = np.block([[2 * S, E.T], [E, np.zeros((size, size))]])
            b = np.concatenate([2 * S @ target, bounds[list(active)]])
            try:
                sol = np.linalg.solve(kkt, b)
            except np.linalg.LinAlgError:
                continue
            yield sol[:k]


def constrain_theta(fit: ProjectionFit, region: str = "simplex") -> ProjectionFit:
    """Project theta_hat onto the feasible region in the S-metric.

    ``region="simplex"`` is ``{theta >= 0, sum(theta) <= 1}``, the set on which
    A(., theta) is a mixture of the basis elements.  ``region="box"`` is
    ``[0, 1]^(p-1)``.  Minimizing ``(theta - theta_hat)^T S (theta - theta_hat)``
    is the same as minimizing the weighted least-squares criterion over the
    region.  Every face of the polytope is solved in closed form and the best
    feasible candidate is kept.
    """
    if not fit.full_rank:
        raise RankDeficient("cannot constrain a rank-deficient fit")
    S, target = fit.gram, fit.theta_hat.values
    rows, bounds = _region_constraints(len(target), region)
    slack = TOL.simplex_sum
    if np.all(rows @ target <= bounds + slack):
        return replace(fit, constrained=True)
    best, best_val = None, np.inf
    for cand in _face_solutions(S, target, rows, bounds):
        if np.any(rows @ cand > bounds + slack):
            continue
        diff = cand - target
        val = diff @ S @ diff
        if val < best_val:
            best, best_val = cand, val
    # snap round-off onto the region
    best = np.clip(best, 0.0, 1.0)
    if region == "simplex" and best.sum() > 1:
        best = best / best.sum()
    return replace(fit, theta_hat=Theta(best), constrained=True)


def _raw_estimate(sample: ExpMarginSample, pts: np.ndarray, kind: str) -> np.ndarray:
    if kind == "plain":
        return pickands_np(sample, pts)
    if kind == "ols":
        return pickands_ols(sample, pts)
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def fit_parametric_A(sample: ExpMarginSample, fam: BasisFamily, M: GridMeasure | None = None,
                     kind: str = "ols", constrained: bool = False,
                     with_cov: bool = False, region: str = "simplex") -> ProjectionFit:
    """Estimate theta by projecting the raw (``"plain"``) or OLS Pickands estimate.

    ``constrained=True`` projects the estimate onto ``region`` (see
    :func:`constrain_theta`).  With ``with_cov=True`` the plug-in covariance of ``sqrt(n)(theta_hat - theta)``
    is attached as ``v_hat``.
    """
    M = M or GridMeasure.uniform()
    raw = _raw_estimate(sample, M.points, kind)
    a_p = fam.evaluate_all(M.points)[:, -1]
    fit = project_theta(raw - a_p, fam, M)
    fit = replace(fit, kind=kind, raw=raw, n=sample.n)
    if constrained:
        fit = constrain_theta(fit, region)
    if with_cov:
        th = fit.theta_hat
        V = asym_cov(sample, fam, M, kind, lambda w: family_A(fam, th, w))
        fit = replace(fit, v_hat=V)
    return fit


def plugin_sigma(sample: ExpMarginSample, w, kind: str, A_values) -> np.ndarray:
    """Plug-in covariance kernel ``sigma(w_l, w_m)`` on a set of points.

    For the raw estimator ``sigma(v, w) = A(v) A(w) cov(-log xi(v), -log xi(w))``.
    For the OLS estimator the covariance is that of the regression residuals,
    which removes the projection on ``-log xi(e_j)`` with the optimal weights.
    Moments are empirical (divisor n).
    """
    pts, _ = _as_points(w, sample.d)
    a_vals = np.asarray(A_values, dtype=float).reshape(-1)
    if a_vals.shape != (len(pts),):
        raise DimensionMismatch("one A value per point is required")
    if kind == "plain":
        L = _neg_log_xi(sample, pts, "drop")
        L = L[~np.isnan(L).any(axis=1)]
        Lc = L - L.mean(axis=0)
        cov = Lc.T @ Lc / len(L)
    elif kind == "ols":
        z = -np.log(sample.y[np.all(sample.y > 0, axis=1)])
        zc = z - z.mean(axis=0)
        ev = np.linalg.eigvalsh(zc.T @ zc)
        if ev[0] <= TOL.rank * max(ev[-1], 0.0) or ev[-1] <= 0:
            raise SingularEndpointCovariance("endpoint covariance matrix is singular")
        res = _ols_regression(sample, pts, "drop").residuals
        cov = res.T @ res / len(res)
    else:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    return a_vals[:, None] * cov * a_vals[None, :]


def asym_cov(sample: ExpMarginSample, fam: BasisFamily, M: GridMeasure, kind: str,
             A_plugin) -> np.ndarray:
    """Plug-in estimate of the limit covariance ``V = S^{-1} Omega S^{-1}``.

    ``Omega = sum_{l,m} m_l m_m h(w_l) h(w_m)^T sigma(w_l, w_m)`` with sigma
    from :func:`plugin_sigma`; ``A_plugin`` is a callable on points or the
    array of fitted A values on M's points.
    """
    pts = M.points
    a_vals = np.asarray(A_plugin(pts) if callable(A_plugin) else A_plugin, dtype=float)
    if a_vals.shape != (len(M),):
        raise DimensionMismatch("A_plugin must provide one value per grid point")
    sigma = plugin_sigma(sample, pts, kind, a_vals)
    H = fam.h_matrix(pts) * M.weights[:, None]
    omega = H.T @ sigma @ H
    S = gram_matrix(fam, M)
    if not is_full_rank(S):
        raise RankDeficient("Gram matrix of the basis differences is singular")
    sinv_omega = _sym_solve(S, omega)
    V = _sym_solve(S, sinv_omega.T)
    return 0.5 * (V + V.T)


def _z_quantile(level: float) -> float:
    if not 0 < level < 1:
        raise OutOfRange("confidence level must lie in (0, 1)")
    return float(stats.norm.ppf(0.5 * (1 + level)))


def ci_for_A(fit: ProjectionFit, fam: BasisFamily, w, level: float = 0.95,
             n: int | None = None):
    """Pointwise interval ``A(w, theta_hat) +- z sqrt(h^T V h / n)``.

    Clamped to ``[max(w), 1]``.  Returns ``(lo, hi)``, arrays for several points.
    """
    if fit.v_hat is None:
        raise MissingCovariance("fit carries no covariance matrix")
    n = n or fit.n
    if not n:
        raise ValueError("sample size is required")
    pts, single = _as_points(w, fam.dim)
    H = fam.h_matrix(pts)
    est = family_A(fam, fit.theta_hat, pts)
    var = np.einsum("ij,jk,ik->i", H, fit.v_hat, H)
    half = _z_quantile(level) * np.sqrt(np.maximum(var, 0.0) / n)
    lo = np.clip(est - half, pts.max(axis=1), 1.0)
    hi = np.clip(est + half, pts.max(axis=1), 1.0)
    if single:
        return float(lo[0]), float(hi[0])
    return lo, hi


def ci_for_C(fit: ProjectionFit, fam: BasisFamily, u, level: float = 0.95,
             n: int | None = None):
    """Pointwise interval ``C(u, theta_hat) +- z sqrt(Cdot^T V Cdot / n)`` clamped to [0, 1]."""
    if fit.v_hat is None:
        raise MissingCovariance("fit carries no covariance matrix")
    n = n or fit.n
    if not n:
        raise ValueError("sample size is required")
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    est = np.atleast_1d(copula_eval(fam, fit.theta_hat, arr))
    grad = np.atleast_2d(copula_gradient(fam, fit.theta_hat, arr))
    var = np.einsum("ij,jk,ik->i", grad, fit.v_hat, grad)
    half = _z_quantile(level) * np.sqrt(np.maximum(var, 0.0) / n)
    lo = np.clip(est - half, 0.0, 1.0)
    hi = np.clip(est + half, 0.0, 1.0)
    if single:
        return float(lo[0]), float(hi[0])
    return lo, hi
