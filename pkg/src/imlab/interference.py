"""Nakagami-m interferer statistics: envelope, phase, and sampling.

The interferer is I = A e^{jTheta} with A Nakagami-m distributed
(E[A^2] = Omega) and Theta following the four-lobed angular density
proportional to |sin 2theta|^{m-1} on [0, 2pi).  The detector replaces the
exact phase law with a Gaussian of mean pi and variance sigma_theta_sq(m);
that moment-matched variance lives here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .special import log_gamma

__all__ = [
    "InterferenceParams",
    "c_norm",
    "d_integral",
    "phase_variance",
    "phase_pdf",
    "sample_envelope",
    "sample_phase",
    "sample_interference",
]

# above this shape the rejection sampler's acceptance rate (~ C(m)/sqrt(pi))
# is no longer worth it; switch to a tabulated inverse CDF
_REJECTION_M_MAX = 64
_CDF_KNOTS = 16_384


def c_norm(m):
    """Normalization C(m) = Gamma(m/2) / Gamma((m+1)/2) of the phase density."""
    if m < 1:
        raise ValueError("shape parameter m must be >= 1")
    return math.exp(log_gamma(0.5 * m) - log_gamma(0.5 * (m + 1.0)))


def d_integral(m):
    """D(m) = integral of t^2 sin^(m-1) t over [0, pi], by adaptive quadrature."""
    if m < 1:
        raise ValueError("shape parameter m must be >= 1")
    val, err = quad(lambda t: t * t * math.sin(t) ** (m - 1.0), 0.0, math.pi,
                    epsabs=1e-12, epsrel=1e-12, limit=200)
    if err > 1e-10:
        raise RuntimeError(f"phase moment quadrature error {err:.2e} too large")
    return val


def phase_variance(m):
    """Variance of the Gaussian moment-matched to the phase law (mean pi).

    sigma^2(m) = pi^2/4 + D(m) / (4 sqrt(pi) C(m)).  Equals pi^2/3 at m = 1
    (uniform phase) and decreases toward 5 pi^2/16 as m grows.
    """
    return math.pi ** 2 / 4.0 + d_integral(m) / (4.0 * math.sqrt(math.pi) * c_norm(m))


def phase_pdf(theta, m):
    """Angular density |sin 2theta|^(m-1) / (2 sqrt(pi) C(m)) on [0, 2pi)."""
    if m < 1:
        raise ValueError("shape parameter m must be >= 1")
    theta = np.asarray(theta, dtype=float)
    out = np.abs(np.sin(2.0 * theta)) ** (m - 1.0) / (
        2.0 * math.sqrt(math.pi) * c_norm(m)
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class InterferenceParams:
    """Shape m >= 1 and spread Omega = E[A^2] > 0, with derived constants.

    beta = 1 + m/Omega and sigma_theta_sq = phase_variance(m) are fixed at
    construction; instances are immutable and safe to share across threads.
    """

    m: float
    omega: float
    beta: float = field(init=False)
    sigma_theta_sq: float = field(init=False)

    def __post_init__(self):
        m = float(self.m)
        omega = float(self.omega)
        if not math.isfinite(m) or m < 1:
            raise ValueError("shape parameter m must be finite and >= 1")
        if not math.isfinite(omega) or omega <= 0:
            raise ValueError("spread omega must be finite and > 0")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "beta", 1.0 + m / omega)
        object.__setattr__(self, "sigma_theta_sq", phase_variance(m))

    @classmethod
    def from_inr_db(cls, m, inr_db):
        """Omega = 10^(INR/10); noise power is fixed at 1 everywhere."""
        return cls(m, 10.0 ** (float(inr_db) / 10.0))

    @property
    def inr_db(self):
        return 10.0 * math.log10(self.omega)


def sample_envelope(params, rng, size=None):
    """Draw the Nakagami envelope as sqrt(G), G ~ Gamma(shape m, mean Omega)."""
    g = rng.gamma(params.m, params.omega / params.m, size)
    return np.sqrt(g)


# m -> (theta grid, cdf grid) for the large-m inverse-CDF sampler
_PHASE_CDF_CACHE: dict[float, tuple[np.ndarray, np.ndarray]] = {}


def _phase_cdf_table(m):
    tab = _PHASE_CDF_CACHE.get(m)
    if tab is None:
        grid = np.linspace(0.0, 2.0 * math.pi, _CDF_KNOTS + 1)
        pdf = phase_pdf(grid, m)
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))]
        )
        cdf /= cdf[-1]
        tab = (grid, cdf)
        _PHASE_CDF_CACHE[m] = tab
    return tab


def sample_phase(m, rng, size=None):
    """Draw phases from the |sin 2theta|^(m-1) law on [0, 2pi).

    Rejection against a uniform proposal (the density ratio is bounded by 1
    for m >= 1).  For m > 64 the acceptance rate decays like 1/sqrt(m), so a
    16,384-knot inverse-CDF table is used instead.
    """
    if m < 1:
        raise ValueError("shape parameter m must be >= 1")
    scalar = size is None
    n = 1 if scalar else int(np.prod(size))

    if m > _REJECTION_M_MAX:
        grid, cdf = _phase_cdf_table(m)
        out = np.interp(rng.uniform(0.0, 1.0, n), cdf, grid)
    elif m == 1:
        out = rng.uniform(0.0, 2.0 * math.pi, n)
    else:
        out = np.empty(n)
        filled = 0
        while filled < n:
            todo = n - filled
            cand = rng.uniform(0.0, 2.0 * math.pi, todo)
            keep = rng.uniform(0.0, 1.0, todo) < np.abs(np.sin(2.0 * cand)) ** (m - 1.0)
            kept = cand[keep]
            out[filled : filled + kept.size] = kept
            filled += kept.size

    if scalar:
        return float(out[0])
    return out.reshape(size)


def sample_interference(params, rng, size=None):
    """Draw I = A e^{jTheta}; envelope first, then phase (fixed draw order)."""
    a = sample_envelope(params, rng, size)
    theta = sample_phase(params.m, rng, size)
    out = a * np.exp(1j * np.asarray(theta))
    return complex(out) if size is None else out
