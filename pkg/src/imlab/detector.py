"""Interference-aware detection metrics, truncation theory, decision regions.

The ML-G rule scores a residual d = y - sqrt(S) x by r^2 - ln S_K(r, phi),
r = |d|, phi = arg d, where S_K is a K-term cosine series in phi with radial
coefficients I_{k,m}(r).  K is certified by a tail bound so the truncated
series stays within epsilon of the full one for r <= R_max.  Euclidean (r^2)
and constant-amplitude (r^2 - ln I_0(2 A r)) metrics are the baselines.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.special as sc

from .special import ConvergenceError, log_kummer_1f1
from .interference import InterferenceParams

__all__ = [
    "DetectorKind",
    "MlgConfig",
    "RegionRaster",
    "min_truncation_index",
    "i_km",
    "series_S",
    "metric",
    "detect",
    "rasterize_regions",
]

_TWO_PI = 2.0 * math.pi
_K_CAP = 500
# S_K is clamped here before any logarithm; the truncated oscillating series
# can dip nonpositive far outside the design radius
_S_FLOOR = 1e-300
_LN_S_FLOOR = math.log(_S_FLOOR)


@dataclass(frozen=True)
class DetectorKind:
    """Detector selector: 'mlg', 'cai' (with amplitude), or 'eucl'."""

    tag: str
    cai_amplitude: float | None = None

    def __post_init__(self):
        if self.tag not in ("mlg", "cai", "eucl"):
            raise ValueError(f"unknown detector tag {self.tag!r}")
        if self.tag == "cai":
            a = self.cai_amplitude
            if a is None or not math.isfinite(a) or a < 0:
                raise ValueError("CAI detector needs a finite amplitude >= 0")
        elif self.cai_amplitude is not None:
            raise ValueError("amplitude is only meaningful for CAI")

    @classmethod
    def mlg(cls):
        return cls("mlg")

    @classmethod
    def cai(cls, amplitude):
        return cls("cai", float(amplitude))

    @classmethod
    def euclidean(cls):
        return cls("eucl")


def _tail_exceeds(params, k_trunc, epsilon, r_max):
    """True if the envelope-weighted series tail past k_trunc exceeds epsilon.

    Sums 2 e^(-sigma^2 k^2/2) I_{k,m}(r) for k_trunc < k <= k_trunc + 60 on a
    radius grid (the |cos| envelope removes the phase).  Terms are assembled
    in the log domain so an astronomically large I_{k,m} cannot overflow
    before its doubly-exponential weight collapses it.
    """
    r = np.linspace(0.0, r_max, 65)
    tail = np.zeros_like(r)
    s2 = params.sigma_theta_sq
    for k in range(k_trunc + 1, k_trunc + 61):
        ln_w = math.log(2.0) - 0.5 * s2 * k * k
        if ln_w < -600.0:
            break
        tail += np.exp(ln_w + _log_i_km(k, params, r))
    return bool(np.any(tail > epsilon))


def min_truncation_index(params, epsilon, r_max):
    """Smallest K >= 1 whose series tail provably stays <= epsilon on [0, r_max].

    A candidate comes from the analytic geometric-tail certificate: K is
    admissible once q_K(r_max) < 1 and
    W(r_max) Gamma(m + (K+1)/2) / [(1 - q_K) beta^(m+(K+1)/2) (K+1)!] <= epsilon,
    where W = e^(-sigma^2 (K+1)^2 / 2) r^(K+1) e^(r^2/beta) and q_K is the
    tail's term-ratio majorant.  That certificate leans on 1F1(a;b;z) <= e^z,
    which fails for a > b (large m with small K), so the candidate is then
    audited against the actual envelope-weighted tail and incremented until
    the measured tail is <= epsilon.  Search increments K from 1, cap 500.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must lie in (0, 1)")
    if not (r_max > 0.0 and math.isfinite(r_max)):
        raise ValueError("r_max must be positive and finite")
    m = params.m
    beta = params.beta
    s2 = params.sigma_theta_sq
    ln_r = math.log(r_max)
    z = r_max * r_max / beta
    ln_eps = math.log(epsilon)
    for k in range(1, _K_CAP + 1):
        ln_q = (
            ln_r - s2 * (k + 0.5) + 0.5 * math.log(m + 0.5 * k + 0.5)
            + z - math.log(k + 1.0) - 0.5 * math.log(beta)
        )
        if ln_q >= 0.0:
            continue
        ln_w = -0.5 * s2 * (k + 1.0) ** 2 + (k + 1.0) * ln_r + z
        ln_bound = (
            ln_w + sc.gammaln(m + 0.5 * (k + 1.0))
            - math.log1p(-math.exp(ln_q))
            - (m + 0.5 * (k + 1.0)) * math.log(beta)
            - sc.gammaln(k + 2.0)
        )
        if ln_bound > ln_eps:
            continue
        while k <= _K_CAP and _tail_exceeds(params, k, epsilon, r_max):
            k += 1
        if k <= _K_CAP:
            return k
        break
    raise ConvergenceError(
        f"no truncation index <= {_K_CAP} for m={m}, omega={params.omega}, "
        f"epsilon={epsilon}, r_max={r_max}"
    )


def _log_i_km(k, params, r):
    """ln I_{k,m}(r) for array r (k fixed)."""
    m = params.m
    beta = params.beta
    coeff = (
        sc.gammaln(m + 0.5 * k) - sc.gammaln(k + 1.0)
        - (m + 0.5 * k) * math.log(beta) - math.log(2.0)
    )
    z = r * r / beta
    with np.errstate(divide="ignore"):
        rad = k * np.log(r) if k > 0 else 0.0
    return coeff + rad + log_kummer_1f1(m + 0.5 * k, k + 1.0, z)


def i_km(k, params, r):
    """Radial series coefficient I_{k,m}(r), the envelope-averaged harmonic.

    Closed form Gamma(m+k/2) / (2 beta^(m+k/2) k!) r^k 1F1(m+k/2; k+1; r^2/beta),
    evaluated in log domain; saturates to inf past double range (far outside
    the design radius).
    """
    if k != int(k) or k < 0:
        raise ValueError("order k must be a nonnegative integer")
    k = int(k)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("residual magnitude r must be >= 0")
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    with np.errstate(over="ignore"):
        out = np.exp(_log_i_km(k, params, r))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class MlgConfig:
    """Resolved ML-G configuration: truncation index plus cached coefficients.

    coeff_cache holds, for k = 0..K, the log radial prefactors
    ln Gamma(m+k/2) - ln k! - (m+k/2) ln beta and the Gaussian-phase damping
    e^(-sigma^2 k^2 / 2).  With memoize=True the radial profiles are sampled
    on a uniform r-grid (spacing r_max/4096, extendable via memo_r_hi) and
    interpolated cubically; direct evaluation is the default.
    """

    params: InterferenceParams
    epsilon: float = 1e-3
    r_max: float = 4.0
    memoize: bool = False
    memo_r_hi: float | None = None
    k_trunc: int = field(init=False)
    coeff_cache: tuple = field(init=False, repr=False)

    def __post_init__(self):
        k = min_truncation_index(self.params, self.epsilon, self.r_max)
        m, beta = self.params.m, self.params.beta
        ks = np.arange(k + 1)
        log_radial = (
            sc.gammaln(m + 0.5 * ks) - sc.gammaln(ks + 1.0)
            - (m + 0.5 * ks) * math.log(beta)
        )
        gauss_w = np.exp(-0.5 * self.params.sigma_theta_sq * ks ** 2)
        log_radial.setflags(write=False)
        gauss_w.setflags(write=False)
        object.__setattr__(self, "k_trunc", k)
        object.__setattr__(self, "coeff_cache", (log_radial, gauss_w))
        tables = _RadialTables(self) if self.memoize else None
        object.__setattr__(self, "_tables", tables)

    @property
    def phase_weights(self):
        """Signed series weights w_k / cos(k phi) = (-1)^k 2 e^(-sigma^2 k^2/2)."""
        _, gauss_w = self.coeff_cache
        w = 2.0 * gauss_w * (-1.0) ** np.arange(self.k_trunc + 1)
        w[0] = 1.0
        return w


def _log_series_core(cfg, r, cos_phi, tables=None):
    """ln max(S_K, 1e-300) for arrays (r, cos phi).

    Works with the ratios R_k = I_{k,m}/I_{0,m} (each <= 1, since
    I_k <= I_0 pointwise under the envelope average), so
    ln S = ln I_{0,m} + ln(1 + sum_k w_k cos(k phi) R_k) never overflows;
    cos(k phi) comes from the Chebyshev recurrence on cos phi.
    """
    if tables is not None:
        ln_i0, ratios = tables.eval(cfg, r)
    else:
        ln_i0 = _log_i_km(0, cfg.params, r)
        ratios = [
            np.exp(_log_i_km(k, cfg.params, r) - ln_i0)
            for k in range(1, cfg.k_trunc + 1)
        ]
    _, gauss_w = cfg.coeff_cache
    bracket = np.ones_like(r)
    t_prev = np.ones_like(r)
    t_cur = cos_phi
    two_cos = 2.0 * cos_phi
    for k in range(1, cfg.k_trunc + 1):
        sign = -1.0 if k % 2 else 1.0
        bracket += (sign * 2.0 * gauss_w[k]) * t_cur * ratios[k - 1]
        if k < cfg.k_trunc:
            t_prev, t_cur = t_cur, two_cos * t_cur - t_prev
    out = ln_i0 + np.log(np.maximum(bracket, 1e-16))
    np.maximum(out, _LN_S_FLOOR, out=out)
    return out


class _RadialTables:
    """Uniform-grid samples of ln I_{0,m} and the ratios R_k, with
    Catmull-Rom cubic interpolation (even extension at r = 0)."""

    def __init__(self, cfg, r_hi=None, spacing=None):
        h = spacing if spacing is not None else cfg.r_max / 4096.0
        hi = r_hi if r_hi is not None else (cfg.memo_r_hi or cfg.r_max)
        n = int(math.ceil(hi / h)) + 1
        grid = np.arange(n) * h
        ln_i0 = _log_i_km(0, cfg.params, grid)
        cols = [ln_i0]
        for k in range(1, cfg.k_trunc + 1):
            cols.append(np.exp(_log_i_km(k, cfg.params, grid) - ln_i0))
        # pad: mirrored node at -h (all columns are even in r), clamped at top
        tab = np.stack(cols, axis=1)
        self.table = np.concatenate([tab[1:2], tab, tab[-1:]], axis=0)
        self.h = h
        self.r_hi = grid[-1]
        self.n = n

    def eval(self, cfg, r):
        inside = r <= self.r_hi
        if not np.all(inside):
            # fall back to direct evaluation beyond the tabulated range
            ln_i0 = np.empty_like(r)
            ratios = [np.empty_like(r) for _ in range(cfg.k_trunc)]
            ri, ro = r[inside], r[~inside]
            li, rai = self._eval_inside(ri)
            ln_i0[inside] = li
            lo = _log_i_km(0, cfg.params, ro)
            ln_i0[~inside] = lo
            for k in range(1, cfg.k_trunc + 1):
                ratios[k - 1][inside] = rai[k - 1]
                ratios[k - 1][~inside] = np.exp(
                    _log_i_km(k, cfg.params, ro) - lo
                )
            return ln_i0, ratios
        return self._eval_inside(r)

    def _eval_inside(self, r):
        x = r / self.h
        idx = np.minimum(x.astype(np.int64), self.n - 2)
        t = x - idx
        # rows idx..idx+3 of the padded table correspond to nodes
        # idx-1..idx+2 of the original grid
        p0 = self.table[idx]
        p1 = self.table[idx + 1]
        p2 = self.table[idx + 2]
        p3 = self.table[idx + 3]
        t = t[:, None]
        t2 = t * t
        t3 = t2 * t
        vals = 0.5 * (
            (-t3 + 2.0 * t2 - t) * p0
            + (3.0 * t3 - 5.0 * t2 + 2.0) * p1
            + (-3.0 * t3 + 4.0 * t2 + t) * p2
            + (t3 - t2) * p3
        )
        return vals[:, 0], [vals[:, k] for k in range(1, vals.shape[1])]


def series_S(r, phi, cfg):
    """Truncated likelihood series S_K(r, phi), clamped below at 1e-300.

    S_K = I_{0,m}(r) + sum_{k=1..K} (-1)^k 2 e^(-sigma^2 k^2/2) cos(k phi)
    I_{k,m}(r).  phi is reduced mod 2 pi before use, making the value exactly
    periodic whenever phi + 2 pi rounds without error.  Accuracy is certified
    for r <= r_max; larger r still evaluates.
    """
    r = float(r)
    if r < 0.0:
        raise ValueError("residual magnitude r must be >= 0")
    phi = math.fmod(float(phi), _TWO_PI)
    _, gauss_w = cfg.coeff_cache
    with np.errstate(over="ignore"):
        total = i_km(0, cfg.params, r)
        for k in range(1, cfg.k_trunc + 1):
            w = (-1.0) ** k * 2.0 * gauss_w[k] * math.cos(k * phi)
            total += w * i_km(k, cfg.params, r)
    return max(total, _S_FLOOR)


def _residual_metric(kind, cfg, re, im):
    """Metric from residual components (arrays)."""
    r2 = re * re + im * im
    if kind.tag == "eucl":
        return r2
    if kind.tag == "cai":
        x = 2.0 * kind.cai_amplitude * np.sqrt(r2)
        return r2 - (x + np.log(sc.ive(0, x)))
    if cfg is None:
        raise ValueError("ML-G metric requires an MlgConfig")
    r = np.sqrt(r2)
    with np.errstate(invalid="ignore"):
        cos_phi = np.where(r > 0.0, re / np.where(r > 0.0, r, 1.0), 1.0)
    tables = getattr(cfg, "_tables", None)
    return r2 - _log_series_core(cfg, r, cos_phi, tables)


def metric(y, x, s_lin, kind, cfg=None):
    """Decision metric of one observation against one constellation point.

    r^2 (Euclidean), r^2 - ln I_0(2 A r) (CAI), or r^2 - ln S_K(r, phi)
    (ML-G), with d = y - sqrt(s_lin) x, r = |d|, phi = arg d.  Lower is
    better; only ML-G needs cfg.
    """
    if not (s_lin >= 0.0 and math.isfinite(s_lin)):
        raise ValueError("s_lin must be finite and >= 0")
    d = np.asarray(y, dtype=complex) - math.sqrt(s_lin) * np.asarray(
        x, dtype=complex
    )
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    out = _residual_metric(kind, cfg, d.real.copy(), d.imag.copy())
    return float(out[0]) if scalar else out


def detect(y, constellation, s_lin, kind, cfg=None):
    """Index of the metric-minimizing symbol (lowest index wins ties).

    At m = 1 the ML-G rule is exactly the Euclidean rule, so kind 'mlg'
    with cfg.params.m == 1 dispatches to 'eucl'.
    """
    if kind.tag == "mlg":
        if cfg is None:
            raise ValueError("ML-G detection requires an MlgConfig")
        if cfg.params.m == 1.0:
            kind = DetectorKind.euclidean()
    y = np.asarray(y, dtype=complex)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    root_s = math.sqrt(s_lin)
    pts = constellation.points
    best = None
    labels = None
    for j, x in enumerate(pts):
        d = y - root_s * x
        mj = _residual_metric(kind, cfg, d.real, d.imag)
        if best is None:
            best = mj
            labels = np.zeros(y.shape, dtype=np.int64)
        else:
            better = mj < best
            np.copyto(best, mj, where=better)
            labels[better] = j
    return int(labels[0]) if scalar else labels


@dataclass(frozen=True)
class RegionRaster:
    """Row-major decision-region labels over a complex-plane window.

    labels[i, j] is the decision at re_axis[j] + 1j * im_axis[i]; both axes
    are resolution evenly spaced points spanning the window.
    """

    window: tuple
    resolution: int
    labels: np.ndarray
    n_symbols: int

    @property
    def re_axis(self):
        x0, x1, _, _ = self.window
        return np.linspace(x0, x1, self.resolution)

    @property
    def im_axis(self):
        _, _, y0, y1 = self.window
        return np.linspace(y0, y1, self.resolution)

    def to_csv(self, path):
        re = self.re_axis
        im = self.im_axis
        with open(path, "w", newline="") as f:
            f.write("re,im,label\n")
            for i in range(self.resolution):
                for j in range(self.resolution):
                    f.write(f"{float(re[j])!r},{float(im[i])!r},{self.labels[i, j]}\n")

    def to_pgm(self, path):
        """ASCII portable graymap; top image row is the largest imag value."""
        with open(path, "w", newline="") as f:
            f.write("P2\n")
            f.write(f"{self.resolution} {self.resolution}\n")
            f.write(f"{max(self.n_symbols - 1, 1)}\n")
            for i in range(self.resolution - 1, -1, -1):
                f.write(" ".join(str(v) for v in self.labels[i]) + "\n")


def rasterize_regions(
    constellation, s_lin, kind, cfg, window, resolution, threads=1
):
    """Label every grid point of the window by its detected symbol index."""
    resolution = int(resolution)
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    x0, x1, y0, y1 = (float(v) for v in window)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("window must satisfy x_max > x_min and y_max > y_min")
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)

    def _rows(i_lo, i_hi):
        block = xs[None, :] + 1j * ys[i_lo:i_hi, None]
        return detect(block.ravel(), constellation, s_lin, kind, cfg).reshape(
            i_hi - i_lo, resolution
        )

    if threads and threads > 1:
        chunk = max(1, resolution // (4 * threads))
        bounds = [
            (i, min(i + chunk, resolution)) for i in range(0, resolution, chunk)
        ]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _rows(*b), bounds))
        labels = np.concatenate(parts, axis=0)
    else:
        labels = _rows(0, resolution)
    labels = labels.astype(np.int64)
    labels.setflags(write=False)
    return RegionRaster(
        window=(x0, x1, y0, y1),
        resolution=resolution,
        labels=labels,
        n_symbols=len(constellation),
    )
