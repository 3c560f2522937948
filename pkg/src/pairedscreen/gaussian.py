"""Bivariate Gaussian numerical kernels.

Scalar densities, CDFs, quantiles, rectangle probabilities, and the
log-likelihood of data restricted to a rectangular region. Everything here
is a pure function; the heavier statistical machinery builds on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "BivNormParams",
    "Rect",
    "DegenerateRegionError",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "bvn_cdf",
    "bvn_logpdf",
    "rect_prob",
    "rect_log_prob",
    "truncated_bvn_loglik",
    "full_bvn_loglik",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Smallest rectangle mass treated as nonzero; below this the region is
# numerically unreachable and log-probabilities are meaningless.
_MIN_RECT_PROB = 1e-300


class DegenerateRegionError(ValueError):
    """The rectangle carries no probability mass under the given parameters."""


@dataclass(frozen=True)
class BivNormParams:
    """Parameters of one bivariate normal score distribution.

    Attributes
    ----------
    mu1, mu2 : float
        Means of the two test scores.
    var1, var2 : float
        Variances, strictly positive.
    rho : float
        Correlation between the scores, strictly inside (-1, 1).
    """

    mu1: float
    mu2: float
    var1: float
    var2: float
    rho: float

    def __post_init__(self):
        if not (self.var1 > 0 and math.isfinite(self.var1)):
            raise ValueError(f"var1 must be finite and > 0, got {self.var1}")
        if not (self.var2 > 0 and math.isfinite(self.var2)):
            raise ValueError(f"var2 must be finite and > 0, got {self.var2}")
        if not (abs(self.rho) < 1):
            raise ValueError(f"rho must satisfy |rho| < 1, got {self.rho}")
        if not (math.isfinite(self.mu1) and math.isfinite(self.mu2)):
            raise ValueError("means must be finite")

    @property
    def sd1(self) -> float:
        return math.sqrt(self.var1)

    @property
    def sd2(self) -> float:
        return math.sqrt(self.var2)

    def as_tuple(self) -> tuple:
        return (self.mu1, self.mu2, self.var1, self.var2, self.rho)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, possibly unbounded (use ±math.inf)."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float

    def __post_init__(self):
        if not (self.lo1 < self.hi1 and self.lo2 < self.hi2):
            raise ValueError(f"degenerate rectangle bounds: {self}")

    @classmethod
    def plane(cls) -> "Rect":
        inf = math.inf
        return cls(-inf, inf, -inf, inf)

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x >= self.lo1) & (x <= self.hi1) & (y >= self.lo2) & (y <= self.hi2)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF; saturates to 0/1 at -inf/+inf."""
    return float(ndtr(x))


def std_normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF on the open interval (0, 1)."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"quantile argument must lie in (0, 1), got {p}")
    return float(ndtri(p))


# Gauss-Legendre abscissae/weights on [-1, 1] (positive half), orders 6/12/20.
_GL6 = (
    (0.9324695142031521, 0.6612093864662645, 0.2386191860831969),
    (0.1713244923791704, 0.3607615730481386, 0.4679139345726910),
)
_GL12 = (
    (0.9815606342467192, 0.9041172563704749, 0.7699026741943047,
     0.5873179542866175, 0.3678314989981802, 0.1252334085114699),
    (0.04717533638651183, 0.1069393259953184, 0.1600783285433462,
     0.2031674267230659, 0.2334925365383548, 0.2491470458134028),
)
_GL20 = (
    (0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
     0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
     0.5108670019508271, 0.3737060887154195, 0.2277858511416451,
     0.07652652113349733),
    (0.01761400713915212, 0.04060142980038694, 0.06267204833410907,
     0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
     0.1316886384491766, 0.1420961093183820, 0.1491729864726037,
     0.1527533871307258),
)


def _phi_neg(z: float) -> float:
    # Phi(-z) via erfc for full tail accuracy.
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _bvnu(dh: float, dk: float, r: float) -> float:
    """Upper-quadrant probability P(X > dh, Y > dk), standard bivariate normal.

    Gauss-Legendre quadrature on the tetrachoric single-integral form, with
    the Drezner-Wesolowsky transformed integral for |r| >= 0.925. Ported from
    Alan Genz's BVND routine; absolute accuracy ~1e-15.
    """
    if dh == math.inf or dk == math.inf:
        return 0.0
    if dh == -math.inf:
        return 1.0 if dk == -math.inf else _phi_neg(dk)
    if dk == -math.inf:
        return _phi_neg(dh)
    if r == 0.0:
        return _phi_neg(dh) * _phi_neg(dk)

    tp = 2.0 * math.pi
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    ar = abs(r)
    if ar < 0.3:
        xs, ws = _GL6
    elif ar < 0.75:
        xs, ws = _GL12
    else:
        xs, ws = _GL20

    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for x, w in zip(xs, ws):
            for s in (-1.0, 1.0):
                sn = math.sin(asr * (s * x + 1.0) / 2.0)
                bvn += w * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (2.0 * tp) + _phi_neg(h) * _phi_neg(k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if ar < 1.0:
            a_s = (1.0 - r) * (1.0 + r)
            a = math.sqrt(a_s)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / a_s + hk) / 2.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (
                    1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * a_s * a_s / 5.0
                )
            if -hk < 100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(tp) * _phi_neg(b / a)
                bvn -= math.exp(-hk / 2.0) * sp * b * (
                    1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0
                )
            a2 = a / 2.0
            for x, w in zip(xs, ws):
                for s in (-1.0, 1.0):
                    x2 = (a2 * (s * x + 1.0)) ** 2
                    rs = math.sqrt(1.0 - x2)
                    asr = -(bs / x2 + hk) / 2.0
                    if asr > -100.0:
                        sp = 1.0 + c * x2 * (1.0 + d * x2)
                        ep = math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                        bvn += a2 * w * math.exp(asr) * (ep - sp)
            bvn = -bvn / tp
        if r > 0.0:
            bvn += _phi_neg(max(h, k))
        else:
            bvn = -bvn
            if k > h:
                bvn += _phi_neg(-k) - _phi_neg(-h)
    return min(1.0, max(0.0, bvn))


def bvn_cdf(x: float, y: float, rho: float) -> float:
    """P(Z1 <= x, Z2 <= y) for a standard bivariate normal with correlation rho.

    Bounds may be ±inf; infinite bounds short-circuit to the marginal CDF.
    """
    if not abs(rho) < 1:
        raise ValueError(f"rho must satisfy |rho| < 1, got {rho}")
    if math.isnan(x) or math.isnan(y):
        raise ValueError("bvn_cdf bounds must not be NaN")
    return _bvnu(-x, -y, rho)


def _bvn_dplus(z1: float, z2: float, rho: float) -> float:
    # d/dz1 of bvn_cdf: phi(z1) * Phi((z2 - rho*z1)/sqrt(1-rho^2)).
    if math.isinf(z1):
        return 0.0
    if math.isinf(z2):
        tail = 1.0 if z2 > 0 else 0.0
    else:
        tail = _phi_neg(-(z2 - rho * z1) / math.sqrt(1.0 - rho * rho))
    return std_normal_pdf(z1) * tail


def _bvn_pdf_std(z1: float, z2: float, rho: float) -> float:
    if math.isinf(z1) or math.isinf(z2):
        return 0.0
    omr2 = 1.0 - rho * rho
    q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / omr2
    return math.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(omr2))


def rect_prob(params: BivNormParams, rect: Rect) -> float:
    """Probability mass the distribution assigns to the rectangle."""
    s1, s2 = params.sd1, params.sd2
    zl1 = (rect.lo1 - params.mu1) / s1
    zh1 = (rect.hi1 - params.mu1) / s1
    zl2 = (rect.lo2 - params.mu2) / s2
    zh2 = (rect.hi2 - params.mu2) / s2
    r = params.rho
    p = (
        bvn_cdf(zh1, zh2, r)
        - bvn_cdf(zl1, zh2, r)
        - bvn_cdf(zh1, zl2, r)
        + bvn_cdf(zl1, zl2, r)
    )
    # Inclusion-exclusion can go fractionally negative in far tails.
    return min(1.0, max(0.0, p))


def rect_log_prob(params: BivNormParams, rect: Rect) -> float:
    """Log of ``rect_prob``; raises if the mass underflows to zero."""
    p = rect_prob(params, rect)
    if p < _MIN_RECT_PROB:
        raise DegenerateRegionError(
            f"rectangle {rect} carries no mass under params {params}"
        )
    return math.log(p)


def bvn_logpdf(x, y, params: BivNormParams) -> np.ndarray:
    """Elementwise log-density of the bivariate normal at (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s1, s2, r = params.sd1, params.sd2, params.rho
    omr2 = 1.0 - r * r
    z1 = (x - params.mu1) / s1
    z2 = (y - params.mu2) / s2
    q = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / omr2
    return -(_LOG_2PI + math.log(s1) + math.log(s2) + 0.5 * math.log(omr2)) - 0.5 * q


def full_bvn_loglik(params: BivNormParams, data) -> float:
    """Untruncated bivariate normal log-likelihood of an (n, 2) array."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] == 0:
        raise ValueError("data must be a nonempty (n, 2) array")
    return float(np.sum(bvn_logpdf(data[:, 0], data[:, 1], params)))


def truncated_bvn_loglik(params: BivNormParams, data, rect: Rect) -> float:
    """Log-likelihood of data under the distribution restricted to rect.

    Equals the sum of unrestricted log-densities minus n times the log mass
    of the rectangle. Every point must lie inside the rectangle.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] == 0:
        raise ValueError("data must be a nonempty (n, 2) array")
    if not bool(np.all(rect.contains(data[:, 0], data[:, 1]))):
        raise ValueError("all data points must lie inside the rectangle")
    log_norm = rect_log_prob(params, rect)
    return full_bvn_loglik(params, data) - data.shape[0] * log_norm
