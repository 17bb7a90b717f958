"""Polya-Gamma PG(b, c) random variates and moment identities.

PG(1, c) is drawn exactly with Devroye's alternating-series accept/reject
scheme. Integer shapes are sums of independent PG(1, c) draws; the fractional
remainder of a shape is drawn from the gamma-series representation truncated
at ``truncation`` terms, with the mean of the dropped tail added back so the
draw's expectation matches the analytic mean.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from errors import DomainError
from sampling.rng import RngStream, as_generator

DEFAULT_TRUNCATION = 200

# Switch point between the left (inverse-Gaussian) and right (exponential)
# envelope pieces of the J*(1, z) density
_T = 0.64
_PI2 = np.pi**2
# Rows processed per block by the truncated-series sampler
_SERIES_BLOCK = 4096
# Below this |c| the mean uses its Taylor expansion
_SMALL_C = 1e-6
# Fractional shapes smaller than this are treated as zero
_FRAC_EPS = 1e-12


@dataclass(frozen=True)
class PgParams:
    """Shape ``b`` (> 0) and tilt ``c`` (finite) of a PG(b, c) distribution."""

    b: float
    c: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.b) or self.b <= 0:
            raise DomainError(f"PG shape b must be > 0, got {self.b}")
        if not np.isfinite(self.c):
            raise DomainError(f"PG tilt c must be finite, got {self.c}")


def pg_mean(params: PgParams) -> float:
    """E[PG(b, c)] = b / (2c) * tanh(c / 2), with the limit b / 4 at c = 0."""
    return float(pg_mean_array(params.b, params.c))


def pg_mean_array(b, c) -> np.ndarray:
    """Elementwise PG means for broadcastable ``b`` and ``c``."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < _SMALL_C
    safe_c = np.where(small, 1.0, c)
    exact = b / (2.0 * safe_c) * np.tanh(safe_c / 2.0)
    series = b / 4.0 * (1.0 - c**2 / 12.0)
    return np.where(small, series, exact)


def sample_pg(params: PgParams, rng: RngStream | np.random.Generator, size: int | None = None,
              truncation: int = DEFAULT_TRUNCATION):
    """Draw from PG(b, c); a float when ``size`` is None, else an array of ``size`` draws."""
    n = 1 if size is None else int(size)
    draws = sample_pg_array(
        np.full(n, params.b), np.full(n, params.c), rng, truncation=truncation
    )
    return float(draws[0]) if size is None else draws


def sample_pg_array(b, c, rng: RngStream | np.random.Generator,
                    truncation: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """Draw one PG(b_i, c_i) variate per element of the conformable vectors ``b`` and ``c``."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if b.shape != c.shape:
        raise DomainError(f"PG shape and tilt vectors differ in shape: {b.shape} vs {c.shape}")
    if not np.all(np.isfinite(b)) or np.any(b <= 0):
        raise DomainError("PG shape b must be > 0 for every element")
    if not np.all(np.isfinite(c)):
        raise DomainError("PG tilt c must be finite for every element")
    if truncation < 1:
        raise DomainError(f"truncation must be >= 1, got {truncation}")

    gen = as_generator(rng)
    out = np.zeros(b.shape[0])

    # Integer part: sum of whole PG(1, c) draws per element
    whole = np.floor(b).astype(np.int64)
    if whole.sum() > 0:
        owner = np.repeat(np.arange(b.shape[0]), whole)
        draws = _sample_pg1(np.repeat(c, whole), gen)
        out += np.bincount(owner, weights=draws, minlength=b.shape[0])

    # Fractional remainder via the mean-corrected truncated series
    frac = b - whole
    has_frac = frac > _FRAC_EPS
    if has_frac.any():
        out[has_frac] += _sample_pg_truncated(frac[has_frac], c[has_frac], gen, truncation)

    return out


def _sample_pg_truncated(b: np.ndarray, c: np.ndarray, gen: np.random.Generator,
                         truncation: int) -> np.ndarray:
    """Truncated gamma-series PG(b, c) draws with the tail mean added back."""
    k = np.arange(1, truncation + 1) - 0.5
    out = np.empty(b.shape[0])
    for start in range(0, b.shape[0], _SERIES_BLOCK):
        stop = min(start + _SERIES_BLOCK, b.shape[0])
        bb = b[start:stop]
        cc = c[start:stop]
        denom = k[None, :] ** 2 + (cc[:, None] / (2.0 * np.pi)) ** 2
        g = gen.gamma(np.broadcast_to(bb[:, None], denom.shape))
        head = (g / denom).sum(axis=1) / (2.0 * _PI2)
        head_mean = bb * (1.0 / denom).sum(axis=1) / (2.0 * _PI2)
        out[start:stop] = head + (pg_mean_array(bb, cc) - head_mean)
    return out


def _sample_pg1(c: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Exact PG(1, c) draws: PG(1, c) = J*(1, |c|/2) / 4."""
    z = np.abs(c) / 2.0
    out = np.empty(z.shape[0])
    if z.shape[0] == 0:
        return out

    big_k = _PI2 / 8.0 + z**2 / 2.0
    p = np.pi / (2.0 * big_k) * np.exp(-big_k * _T)
    q = 2.0 * _inverse_gaussian_mass(z)
    right_prob = p / (p + q)

    pending = np.arange(z.shape[0])
    while pending.size:
        zp = z[pending]
        x = np.empty(pending.size)
        right = gen.random(pending.size) < right_prob[pending]
        x[right] = _T + gen.exponential(size=right.sum()) / big_k[pending][right]
        if (~right).any():
            x[~right] = _truncated_inverse_gaussian(zp[~right], gen)

        # Alternating-series test: accept when the partial sums bracket u * S
        s = _series_coef(0, x)
        y = gen.random(pending.size) * s
        undecided = np.ones(pending.size, dtype=bool)
        accepted = np.zeros(pending.size, dtype=bool)
        n = 0
        while undecided.any():
            n += 1
            idx = np.flatnonzero(undecided)
            a_n = _series_coef(n, x[idx])
            if n % 2 == 1:
                s[idx] -= a_n
                hit = y[idx] <= s[idx]
                accepted[idx[hit]] = True
                undecided[idx[hit]] = False
            else:
                s[idx] += a_n
                miss = y[idx] > s[idx]
                undecided[idx[miss]] = False

        out[pending[accepted]] = 0.25 * x[accepted]
        pending = pending[~accepted]

    return out


def _series_coef(n: int, x: np.ndarray) -> np.ndarray:
    """n-th coefficient of the alternating series for the J*(1) density."""
    k = n + 0.5
    out = np.empty_like(x)
    left = x <= _T
    xl = x[left]
    out[left] = np.exp(np.log(np.pi * k) + 1.5 * np.log(2.0 / (np.pi * xl)) - 2.0 * k**2 / xl)
    out[~left] = np.pi * k * np.exp(-(k**2) * _PI2 * x[~left] / 2.0)
    return out


def _inverse_gaussian_mass(z: np.ndarray) -> np.ndarray:
    """exp(-z) * P(IG(1/z, 1) < T), evaluated in log space for large z."""
    s = 1.0 / np.sqrt(_T)
    lower = s * (_T * z - 1.0)
    upper = -s * (_T * z + 1.0)
    return np.exp(-z + log_ndtr(lower)) + np.exp(z + log_ndtr(upper))


def _truncated_inverse_gaussian(z: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """IG(mean 1/z, shape 1) draws truncated to (0, T)."""
    out = np.empty(z.shape[0])

    # Heavy-mean case (1/z > T): rejection from a truncated 1/chi-square
    chi = np.flatnonzero(z < 1.0 / _T)
    while chi.size:
        e1 = gen.exponential(size=chi.size)
        e2 = gen.exponential(size=chi.size)
        bad = e1**2 > 2.0 * e2 / _T
        while bad.any():
            e1[bad] = gen.exponential(size=bad.sum())
            e2[bad] = gen.exponential(size=bad.sum())
            bad = e1**2 > 2.0 * e2 / _T
        x = _T / (1.0 + e1 * _T) ** 2
        keep = gen.random(chi.size) <= np.exp(-0.5 * z[chi] ** 2 * x)
        out[chi[keep]] = x[keep]
        chi = chi[~keep]

    # Light-mean case: draw from the untruncated IG until it lands below T
    ig = np.flatnonzero(z >= 1.0 / _T)
    while ig.size:
        mu = 1.0 / z[ig]
        y = gen.standard_normal(ig.size) ** 2
        x = mu + 0.5 * mu**2 * y - 0.5 * mu * np.sqrt(4.0 * mu * y + (mu * y) ** 2)
        flip = gen.random(ig.size) > mu / (mu + x)
        x[flip] = mu[flip] ** 2 / x[flip]
        keep = x < _T
        out[ig[keep]] = x[keep]
        ig = ig[~keep]

    return out
