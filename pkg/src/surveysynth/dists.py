"""Statistical kernels: logit transforms, truncated normals, and the
non-central hypergeometric sampling law used for biased survey counts.

All probability mass work happens in log space; binomial coefficients are
built from log-gamma, and pmf tables across a support are filled by the
odds-ratio recurrence rather than large factorials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

LOG2PI = math.log(2.0 * math.pi)


def logit(p):
    """Log-odds of p; p must lie strictly inside (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"logit requires p in (0, 1), got {p!r}")
    out = np.log(arr) - np.log1p(-arr)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


def inv_logit(x):
    """Inverse log-odds, computed without overflow for any real x."""
    arr = np.asarray(x, dtype=float)
    out = np.exp(-np.logaddexp(0.0, -arr))
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _log_ndtr_diff(a: float, b: float) -> float:
    """log(Phi(b) - Phi(a)) for a < b, stable in either tail."""
    if a > 0.0:
        # reflect into the lower tail where log_ndtr is accurate
        a, b = -b, -a
    la = special.log_ndtr(a)
    lb = special.log_ndtr(b)
    if lb == -math.inf:
        return -math.inf
    diff = la - lb
    # log(exp(lb) - exp(la)) = lb + log1p(-exp(la - lb))
    return lb + math.log1p(-math.exp(diff)) if diff < 0.0 else -math.inf


def _check_interval(var: float, lower: float, upper: float) -> None:
    if not (var > 0.0) or not math.isfinite(var):
        raise ValueError(f"variance must be positive and finite, got {var!r}")
    if math.isnan(lower) or math.isnan(upper) or lower >= upper:
        raise ValueError(f"empty truncation interval [{lower!r}, {upper!r}]")


def truncnorm_logpdf(
    x: float,
    mean: float,
    var: float,
    lower: float = -math.inf,
    upper: float = math.inf,
) -> float:
    """Log-density of a Normal(mean, var) truncated to [lower, upper].

    Returns -inf for x outside the interval. The normalizing mass is
    evaluated in log space so far-tail intervals stay finite.
    """
    _check_interval(var, lower, upper)
    if x < lower or x > upper or math.isnan(x):
        return -math.inf
    sd = math.sqrt(var)
    core = -0.5 * (LOG2PI + math.log(var)) - 0.5 * (x - mean) ** 2 / var
    if lower == -math.inf and upper == math.inf:
        return core
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    log_mass = _log_ndtr_diff(a, b)
    if log_mass == -math.inf:
        raise ValueError("truncation interval carries no probability mass")
    return core - log_mass


def truncnorm_sample(
    mean: float,
    var: float,
    lower: float = -math.inf,
    upper: float = math.inf,
    rng: np.random.Generator | None = None,
    size: int | None = None,
):
    """Draw from a truncated normal by inverse-CDF.

    Returns a float when size is None, otherwise an ndarray of that length.
    """
    _check_interval(var, lower, upper)
    if rng is None:
        raise ValueError("an explicit rng is required")
    sd = math.sqrt(var)
    fa = special.ndtr((lower - mean) / sd) if lower != -math.inf else 0.0
    fb = special.ndtr((upper - mean) / sd) if upper != math.inf else 1.0
    if not fb > fa:
        raise ValueError("truncation interval carries no probability mass")
    u = rng.uniform(fa, fb, size=size)
    x = mean + sd * special.ndtri(u)
    x = np.clip(x, lower, upper)
    return float(x) if size is None else x


@dataclass(frozen=True)
class NchgParams:
    """Parameters of the non-central (odds-tilted) hypergeometric law.

    m1 positives and m2 negatives in the population; n sampled without
    replacement; each positive enters with odds multiplied by phi.
    """

    m1: int
    m2: int
    n: int
    phi: float

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError(f"group sizes must be non-negative: {self}")
        if not 0 <= self.n <= self.m1 + self.m2:
            raise ValueError(f"sample size out of range: {self}")
        if not (self.phi > 0.0) or not math.isfinite(self.phi):
            raise ValueError(f"odds ratio must be positive and finite: {self}")

    @property
    def support(self) -> tuple[int, int]:
        return max(0, self.n - self.m2), min(self.n, self.m1)


def _lchoose(n: int, k) -> float:
    k = np.asarray(k, dtype=float)
    return (
        special.gammaln(n + 1.0)
        - special.gammaln(k + 1.0)
        - special.gammaln(n - k + 1.0)
    )


def _nchg_log_weights(params: NchgParams) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized log-weights over the support, filled by recurrence.

    The anchor weight at the lower support edge comes from log-gamma; each
    further term multiplies by phi*(m1-y)(n-y) / ((y+1)(m2-n+y+1)).
    """
    lo, hi = params.support
    ys = np.arange(lo, hi + 1)
    lw = np.empty(len(ys))
    lw[0] = float(_lchoose(params.m1, lo) + _lchoose(params.m2, params.n - lo))
    if params.phi != 1.0:
        lw[0] += lo * math.log(params.phi)
    if len(ys) > 1:
        y = ys[:-1].astype(float)
        step = (
            np.log(params.m1 - y)
            + np.log(params.n - y)
            - np.log(y + 1.0)
            - np.log(params.m2 - params.n + y + 1.0)
            + math.log(params.phi)
        )
        lw[1:] = lw[0] + np.cumsum(step)
    return ys, lw


def nchg_logpmf(y, params: NchgParams):
    """Log-pmf at y; -inf outside the support. Accepts scalars or arrays."""
    ys, lw = _nchg_log_weights(params)
    log_z = special.logsumexp(lw)
    arr = np.asarray(y)
    if not np.issubdtype(arr.dtype, np.integer):
        if np.any(np.asarray(arr, dtype=float) != np.floor(arr)):
            raise ValueError(f"counts must be integers, got {y!r}")
        arr = arr.astype(int)
    lo, hi = params.support
    idx = np.clip(arr - lo, 0, hi - lo)
    out = np.where((arr >= lo) & (arr <= hi), lw[idx] - log_z, -math.inf)
    return float(out) if arr.ndim == 0 else out


def nchg_sample(params: NchgParams, rng: np.random.Generator, size: int | None = None):
    """Exact draw by inverse-CDF, accumulating outward from the mode.

    Summation starts at the highest-probability point so the cumulative
    table resolves the bulk of the mass first; ties in u land deterministically.
    """
    ys, lw = _nchg_log_weights(params)
    pmf = np.exp(lw - special.logsumexp(lw))
    mode = int(np.argmax(pmf))
    # interleave indices by distance from the mode: mode, mode+1, mode-1, ...
    order = np.argsort(np.abs(np.arange(len(ys)) - mode), kind="stable")
    cum = np.cumsum(pmf[order])
    cum[-1] = 1.0
    u = rng.random(size=size)
    pick = np.searchsorted(cum, u, side="right")
    pick = np.minimum(pick, len(ys) - 1)
    out = ys[order][pick]
    return int(out) if size is None else out


def biased_success_prob(p: float, phi: float) -> float:
    """Probability that a sampled unit is positive once odds are tilted by phi.

    Equivalent to shifting the log-odds of p by log(phi).
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    if not (phi > 0.0) or not math.isfinite(phi):
        raise ValueError(f"odds ratio must be positive and finite, got {phi!r}")
    return p * phi / (1.0 - p + p * phi)
