"""Exact simulation of bivariate extreme value copulas from spectral densities.

Given the mixture density ``f = sum_i w_i f_i`` with antiderivatives g and h,
a pair is drawn in three steps:

1. Z with distribution function ``G_Z(z) = z (1 - g(1 - z)) / A(z)``, by
   rejection against a uniform envelope on [0, 1];
2. ``V = U1`` with probability ``p(Z) = Z(1-Z) A''(Z) / (A(Z) G_Z'(Z))``,
   otherwise ``V = U1 U2``;
3. ``X1 = V**(Z / A(Z))`` and ``X2 = V**((1 - Z) / A(Z))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TOL
from .core import BasisFamily, SpectralDensityPickands, Theta, as_theta
from .errors import EnvelopeViolation, InvalidP, OutOfRange, UnsupportedModel
from .streams import PairStreams

__all__ = [
    "SamplerState",
    "gz_cdf",
    "gz_pdf",
    "mixing_probability",
    "sample_Z",
    "sample_pair",
    "sample_n",
]

ENVELOPE_GRID = 10_000
ENVELOPE_MARGIN = 1.05

# uniforms 0..2 of a draw's stream feed step 2, rejection attempt k uses 3 + 2k, 4 + 2k
_SLOT_SELECT, _SLOT_U1, _SLOT_U2, _SLOT_REJECT = 0, 1, 2, 3


def _lipschitz_bound(density_bound: float, slope_bound: float) -> float:
    """Bound on |d/dz G_Z'(z)| using A >= 1/2, |A'| <= 1, 0 <= g <= 1, |1 - h| <= 1."""
    F, F1 = density_bound, slope_bound
    # G_Z' = N / A - P / A^2 with N = 1 - g(1-z) + z(1-z) f(1-z), P = z (1-g)(1-h)
    n_max, dn_max = 1 + F / 4, 2 * F + F1 / 4
    dp_max = 1 + F / 4 + F
    return 2 * dn_max + 4 * n_max + 4 * dp_max + 16


@dataclass(frozen=True)
class SamplerState:
    """Mixture weights and rejection envelope for one parameter value.

    Build instances with :meth:`build`, which validates the family and
    computes the envelope.
    """

    family: BasisFamily
    theta: Theta
    envelope: float
    rng_seed: int = 0

    @classmethod
    def build(cls, family: BasisFamily, theta, seed: int = 0) -> "SamplerState":
        if family.dim != 2:
            raise UnsupportedModel("the sampler is bivariate")
        for m in family.basis:
            if not (isinstance(m, SpectralDensityPickands) and m.has_closed_form):
                raise UnsupportedModel(
                    "every basis element must be a spectral density with closed-form g and h")
        th = as_theta(theta, family.p, strict=True)
        state = cls(family, th, np.inf, int(seed))
        z = np.linspace(0.0, 1.0, ENVELOPE_GRID)
        dens = gz_pdf(state, z)
        wts = th.weights
        bounds = [m.density_bound for m in family.basis]
        slopes = [m.slope_bound for m in family.basis]
        if None in bounds or None in slopes:
            # no analytic bounds: fall back to the sampled maximum and slope
            fz = state.f(z)
            F = 1.5 * float(fz.max())
            F1 = 1.5 * float(np.max(np.abs(np.diff(fz))) / (z[1] - z[0]))
        else:
            active = wts > 0
            F = float(np.dot(wts[active], np.asarray(bounds)[active]))
            F1 = float(np.dot(wts[active], np.asarray(slopes)[active]))
        cell = 0.5 * (z[1] - z[0]) * _lipschitz_bound(F, F1)
        env = ENVELOPE_MARGIN * (float(dens.max()) + cell)
        return cls(family, th, env, int(seed))

    @property
    def weights(self) -> np.ndarray:
        return self.theta.weights

    def _mix(self, attr: str, z: np.ndarray) -> np.ndarray:
        out = np.zeros_like(z, dtype=float)
        for w, m in zip(self.weights, self.family.basis):
            if w != 0:
                out += w * np.asarray(getattr(m, attr)(z))
        return out

    def f(self, z):
        return self._mix("density", np.asarray(z, dtype=float))

    def g(self, z):
        return self._mix("g", np.asarray(z, dtype=float))

    def h(self, z):
        return self._mix("h", np.asarray(z, dtype=float))

    def A(self, z):
        z = np.asarray(z, dtype=float)
        s = 1.0 - z
        return z - self.g(s) + s * self.h(s)

    def dA(self, z):
        return 1.0 - self.h(1.0 - np.asarray(z, dtype=float))

    def d2A(self, z):
        return self.f(1.0 - np.asarray(z, dtype=float))

    def sample(self, n: int, replicate: int = 0) -> np.ndarray:
        """``n`` pairs from the counter-based streams of ``(rng_seed, replicate)``."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        streams = PairStreams(self.rng_seed, replicate)
        idx = np.arange(n, dtype=np.uint64)
        z, _ = _draw_z(self, n, _stream_source(streams, idx))
        sel = streams.uniform(idx, _SLOT_SELECT)
        u1 = streams.uniform(idx, _SLOT_U1)
        u2 = streams.uniform(idx, _SLOT_U2)
        x1, x2 = _pairs_from_z(self, z, sel, u1, u2)
        return np.column_stack([x1, x2])


def _z_array(z, closed: bool = True):
    arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise OutOfRange("z must lie in [0, 1]")
    return np.atleast_1d(arr), arr.ndim == 0


def gz_cdf(state: SamplerState, z):
    """Distribution function of Z, ``z (1 - g(1 - z)) / A(z)``."""
    zz, single = _z_array(z)
    out = zz * (1.0 - state.g(1.0 - zz)) / state.A(zz)
    return float(out[0]) if single else out


def _gz_pdf_parts(state: SamplerState, z: np.ndarray):
    s = 1.0 - z
    A = state.A(z)
    # G_Z' split into the A'' part and the rest; the rest is
    # (1 - g(1-z)) (A - z A') / A^2 >= 0 for convex A
    f_part = z * s * state.f(s) / A
    rest = (1.0 - state.g(s)) * (A - z * (1.0 - state.h(s))) / A**2
    return f_part, rest, A


def gz_pdf(state: SamplerState, z):
    """Density of Z.

    ``[1 - g(1-z) + z(1-z) f(1-z)] / A(z) - z (1 - g(1-z)) (1 - h(1-z)) / A(z)^2``
    """
    zz, single = _z_array(z)
    f_part, rest, _ = _gz_pdf_parts(state, zz)
    out = f_part + rest
    return float(out[0]) if single else out


def mixing_probability(state: SamplerState, z):
    """``p(z) = z (1 - z) A''(z) / (A(z) G_Z'(z))``."""
    zz, single = _z_array(z)
    f_part, rest, _ = _gz_pdf_parts(state, zz)
    total = f_part + rest
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, f_part / total, 0.0)
    return float(out[0]) if single else out


def _draw_z(state: SamplerState, n: int, source, batch: int = 4):
    """Vectorized rejection sampling.

    ``source(pending, attempt, k)`` yields candidate and acceptance uniforms of
    shape ``(len(pending), k)`` for attempts ``attempt, ..., attempt + k - 1``.
    Each draw keeps its first accepted attempt, so the batch size does not
    change the result.
    """
    z = np.empty(n)
    pending = np.arange(n)
    attempt = 0
    trials = 0
    env = state.envelope
    while pending.size:
        cand, u = source(pending, attempt, batch)
        dens = gz_pdf(state, cand.ravel()).reshape(cand.shape)
        if np.any(dens > env):
            raise EnvelopeViolation(
                f"G_Z'={dens.max()!r} exceeds the envelope {env!r}")
        accept = u * env <= dens
        hit = accept.any(axis=1)
        first = np.argmax(accept, axis=1)
        trials += int(np.where(hit, first + 1, batch).sum())
        rows = np.flatnonzero(hit)
        z[pending[rows]] = cand[rows, first[rows]]
        pending = pending[~hit]
        attempt += batch
    return z, trials


def _stream_source(streams: PairStreams, draw_ids: np.ndarray):
    def source(pending, attempt, k):
        ids = draw_ids[pending][:, None]
        slots = _SLOT_REJECT + 2 * (attempt + np.arange(k))[None, :]
        return streams.uniform(ids, slots), streams.uniform(ids, slots + 1)
    return source


def _open_uniform(rng: np.random.Generator, size):
    # centred 52-bit grid on (0, 1); Generator.random can return 0
    return (rng.integers(0, 2**52, size=size) + 0.5) * 2.0**-52


def _generator_source(rng: np.random.Generator):
    def source(pending, attempt, k):
        shape = (pending.size, k)
        return _open_uniform(rng, shape), _open_uniform(rng, shape)
    return source


def _source_for(rng, n):
    if isinstance(rng, PairStreams):
        return _stream_source(rng, np.arange(n, dtype=np.uint64))
    return _generator_source(rng)


def _pairs_from_z(state, z, sel, u1, u2):
    f_part, rest, A = _gz_pdf_parts(state, z)
    total = f_part + rest
    p = f_part / total
    band = TOL.p_clamp
    if np.any(p < -band) or np.any(p > 1 + band) or np.any(np.isnan(p)):
        bad = p[(p < -band) | (p > 1 + band) | np.isnan(p)]
        raise InvalidP(f"mixing probability outside [0, 1]: {bad[:5]!r}")
    p = np.clip(p, 0.0, 1.0)
    v = np.where(sel < p, u1, u1 * u2)
    return v ** (z / A), v ** ((1.0 - z) / A)


def sample_Z(state: SamplerState, rng, size: int | None = None,
             return_trials: bool = False):
    """Draw Z by rejection sampling.

    ``rng`` is a :class:`numpy.random.Generator` or a
    :class:`~evspectral.streams.PairStreams`; with streams, draw ``i`` uses
    the stream of index ``i``.
    """
    n = 1 if size is None else int(size)
    z, trials = _draw_z(state, n, _source_for(rng, n))
    out = float(z[0]) if size is None else z
    return (out, trials) if return_trials else out


def sample_pair(state: SamplerState, rng, size: int | None = None):
    """Draw ``(X1, X2)`` pairs distributed as C(., theta)."""
    n = 1 if size is None else int(size)
    z, _ = _draw_z(state, n, _source_for(rng, n))
    if isinstance(rng, PairStreams):
        idx = np.arange(n, dtype=np.uint64)
        sel, u1, u2 = (rng.uniform(idx, s) for s in (_SLOT_SELECT, _SLOT_U1, _SLOT_U2))
    else:
        sel, u1, u2 = (_open_uniform(rng, n) for _ in range(3))
    x1, x2 = _pairs_from_z(state, z, sel, u1, u2)
    if size is None:
        return float(x1[0]), float(x2[0])
    return np.column_stack([x1, x2])


def sample_n(fam: BasisFamily, theta, n: int, seed: int, replicate: int = 0) -> np.ndarray:
    """``n`` pairs, reproducible from ``(seed, replicate, theta)``.

    Pair ``i`` depends only on the stream of draw ``i``, so ``sample_n(..., m)``
    is a prefix of ``sample_n(..., n)`` for ``m < n``.
    """
    return SamplerState.build(fam, theta, seed).sample(n, replicate)
