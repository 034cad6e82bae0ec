"""
Mutual information of mixed-order spatial modulation and its lower bound.

Notation used below, for a plan with ``2**p <= M < 2**(p+1)``:

* ``a = M - 2**p`` and ``b = 2**(p+1) - M``;
* "A points" are (LED, level) pairs of the low-order LEDs (Psi and Phi),
  "B points" those of the high-order LEDs (Xi);
* for every point ``k`` the received value is ``r_k = h_m x_i`` and the
  relative noise variance is ``v_k = 1 + r_k varsigma^2``;
* cross-branch terms carry the prior ratio ``b/a`` (A to B) or ``a/b``
  (B to A).

The exact expression is an expectation over ``z ~ N(0, v_k sigma^2)`` per
point, evaluated by Gauss-Hermite quadrature or Monte Carlo.  Everything
else here is closed form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .cabm import MappingPlan
from .geometry import ChannelGains
from .link import NoiseModel

LN2 = math.log(2.0)
LOG2E = 1.0 / LN2
DEFAULT_NODES = 96
DEFAULT_SAMPLES = 100_000
MAX_NODES = 360  # numpy's Gauss-Hermite weights overflow beyond this
# Reported standard errors never drop below this many bits.  Near saturation
# both estimators can claim far smaller errors than the double-precision
# log-sum evaluation supports (Monte Carlo cannot see events rarer than 1/n).
SE_FLOOR = 1e-10


@dataclass(frozen=True)
class MiEstimate:
    """Mutual information in bits per symbol.

    Values are reported unclipped: for M not a power of two the closed
    entropy terms of the expression can exceed K (e.g. M = 3, q = 3 has a
    4.25-bit high-SNR limit with K = 4).
    """

    value: float
    std_error: float = 0.0
    method: str = "closed-form"
    degenerate: bool = False

    def __float__(self) -> float:
        return float(self.value)


class _Layout(NamedTuple):
    r: np.ndarray
    v: np.ndarray
    in_b: np.ndarray
    weight: np.ndarray
    log_omega: np.ndarray
    level_index: np.ndarray


def _ab(plan: MappingPlan) -> tuple[int, int]:
    return plan.n_low, plan.n_high


def _log_terms(plan: MappingPlan) -> float:
    a, b = _ab(plan)
    p, q = plan.p, plan.q
    out = (b / 2 ** p) * math.log2(2 ** (p + q) / b)
    if a:
        out += (a / 2 ** p) * math.log2(2 ** (p + q - 1) / a)
    return out


def _layout(plan: MappingPlan, rx: np.ndarray, varsigma_sq: float) -> _Layout:
    a, b = _ab(plan)
    pts = plan.points()
    in_b = pts.in_b
    rx = np.asarray(rx, dtype=float)
    if rx.shape != in_b.shape:
        raise ValueError(f"expected {in_b.size} received values, got {rx.size}")
    if np.any(rx < 0):
        raise ValueError("received values must be non-negative")
    scale = 2.0 ** (2 * plan.p + plan.q)
    weight = np.where(in_b, b / scale, a / scale)
    # log omega[k, k']: 0 within a branch, log(b/a) for A -> B, log(a/b) for B -> A.
    log_omega = np.zeros((in_b.size, in_b.size))
    if a:
        cross = math.log(b / a)
        log_omega[np.ix_(~in_b, in_b)] = cross
        log_omega[np.ix_(in_b, ~in_b)] = -cross
    return _Layout(rx, 1.0 + rx * varsigma_sq, in_b, weight, log_omega, pts.index)


def _rx(plan: MappingPlan, gains) -> np.ndarray:
    return plan.received(gains)


def _is_degenerate(r: np.ndarray) -> bool:
    return bool(np.ptp(r) == 0.0)


# ---------------------------------------------------------------------------
# Exact mutual information


def _log_ratio(lay: _Layout, k: int, z: np.ndarray, sigma_sq: float) -> np.ndarray:
    """log2 of the numerator/denominator ratio inside the expectation for point k."""
    num = -z ** 2 / (2.0 * lay.v[k] * sigma_sq) - 0.5 * math.log(lay.v[k])
    if lay.in_b[k]:
        num = num - LN2
    d = lay.r[k] - lay.r
    expo = (lay.log_omega[k][:, None]
            - (z[None, :] + d[:, None]) ** 2 / (2.0 * lay.v[:, None] * sigma_sq)
            - 0.5 * np.log(lay.v)[:, None])
    return (num - logsumexp(expo, axis=0)) / LN2


def _gh_expectations(lay: _Layout, sigma_sq: float, nodes: int) -> np.ndarray:
    t, w = np.polynomial.hermite.hermgauss(nodes)
    w = w / math.sqrt(math.pi)
    out = np.empty(lay.r.size)
    for k in range(lay.r.size):
        z = math.sqrt(2.0 * lay.v[k] * sigma_sq) * t
        out[k] = float(np.dot(w, _log_ratio(lay, k, z, sigma_sq)))
    return out


def _entropy_constant(plan: MappingPlan) -> float:
    a, b = _ab(plan)
    return (a * a + b * b) / 4 ** plan.p * (plan.p + 1) + _log_terms(plan)


def _mi_general_quadrature(plan, rx, noise, nodes):
    lay = _layout(plan, rx, noise.varsigma_sq)
    return _entropy_constant(plan) + float(np.dot(lay.weight, _gh_expectations(lay, noise.sigma_sq, nodes)))


def _mi_exact_quadrature(plan, rx, noise, nodes):
    # Power-of-two form: every point has weight 1/(MN) and no cross-branch factor.
    r = np.asarray(rx, dtype=float)
    v = 1.0 + r * noise.varsigma_sq
    s2 = noise.sigma_sq
    t, w = np.polynomial.hermite.hermgauss(nodes)
    w = w / math.sqrt(math.pi)
    total = 0.0
    for k in range(r.size):
        z = math.sqrt(2.0 * v[k] * s2) * t
        d = r[k] - r
        expo = (0.5 * math.log(v[k]) - 0.5 * np.log(v)[:, None]
                + z[None, :] ** 2 / (2.0 * v[k] * s2)
                - (z[None, :] + d[:, None]) ** 2 / (2.0 * v[:, None] * s2))
        total += float(np.dot(w, logsumexp(expo, axis=0))) / LN2
    return math.log2(r.size) - total / r.size


def _mi_quadrature(plan, rx, noise, nodes):
    if plan.exact:
        return _mi_exact_quadrature(plan, rx, noise, nodes)
    return _mi_general_quadrature(plan, rx, noise, nodes)


def _mi_monte_carlo(plan, rx, noise, samples, rng):
    lay = _layout(plan, rx, noise.varsigma_sq)
    means = np.empty(lay.r.size)
    variances = np.empty(lay.r.size)
    for k in range(lay.r.size):
        z = rng.standard_normal(samples) * math.sqrt(lay.v[k] * noise.sigma_sq)
        vals = _log_ratio(lay, k, z, noise.sigma_sq)
        means[k] = vals.mean()
        variances[k] = vals.var(ddof=1)
    value = _entropy_constant(plan) + float(np.dot(lay.weight, means))
    se = math.sqrt(float(np.dot(lay.weight ** 2, variances)) / samples)
    return value, se


def mutual_information(plan: MappingPlan, gains: ChannelGains | Sequence[float], noise: NoiseModel,
                       method: str = "quadrature", budget: int | None = None,
                       rng: np.random.Generator | int | None = 0) -> MiEstimate:
    """Exact mutual information ``I(x, h; y)`` in bits per symbol.

    ``method`` is ``"quadrature"`` (``budget`` Gauss-Hermite nodes, default
    96; the standard error is the change against a half-size rule) or
    ``"monte-carlo"`` (``budget`` draws per point, default 1e5).  The
    reported standard error is at least ``SE_FLOOR``.
    """
    rx = _rx(plan, gains)
    degenerate = _is_degenerate(rx)
    if degenerate:
        warnings.warn("all received points coincide; mutual information sits at its entropy floor",
                      RuntimeWarning, stacklevel=2)
    if method == "quadrature":
        nodes = DEFAULT_NODES if budget is None else int(budget)
        if not 2 <= nodes <= MAX_NODES:
            raise ValueError(f"quadrature needs 2..{MAX_NODES} nodes, got {nodes}")
        value = _mi_quadrature(plan, rx, noise, nodes)
        coarse = _mi_quadrature(plan, rx, noise, max(nodes // 2, 1))
        se = abs(value - coarse)
    elif method == "monte-carlo":
        samples = DEFAULT_SAMPLES if budget is None else int(budget)
        if samples < 2:
            raise ValueError("Monte Carlo needs at least 2 samples")
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        value, se = _mi_monte_carlo(plan, rx, noise, samples, gen)
    else:
        raise ValueError(f"unknown method {method!r}; use 'quadrature' or 'monte-carlo'")
    return MiEstimate(value, max(se, SE_FLOOR), method, degenerate)


# ---------------------------------------------------------------------------
# Lower bound


def _lower_general(plan: MappingPlan, rx: np.ndarray, noise: NoiseModel) -> float:
    lay = _layout(plan, rx, noise.varsigma_sq)
    a, b = _ab(plan)
    const = (a * a + b * b) / 4 ** plan.p * (plan.p + 1 - 0.5 * LOG2E) + _log_terms(plan)
    logv = np.log(lay.v)
    d = lay.r[:, None] - lay.r[None, :]
    # A rows: sqrt(v_k) / sqrt(2 v_k'); B rows: sqrt(2 v_k) / sqrt(v_k').
    half_ln2 = np.where(lay.in_b, 0.5 * LN2, -0.5 * LN2)
    expo = (lay.log_omega + 0.5 * logv[:, None] - 0.5 * logv[None, :] + half_ln2[:, None]
            - d ** 2 / (4.0 * lay.v[None, :] * noise.sigma_sq))
    return const - float(np.dot(lay.weight, logsumexp(expo, axis=1))) / LN2


def _lower_exact(rx: np.ndarray, noise: NoiseModel) -> float:
    r = np.asarray(rx, dtype=float)
    v = 1.0 + r * noise.varsigma_sq
    logv = np.log(v)
    d = r[:, None] - r[None, :]
    expo = 0.5 * logv[:, None] - 0.5 * logv[None, :] - d ** 2 / (4.0 * v[None, :] * noise.sigma_sq)
    n = r.size
    return math.log2(n) + 0.5 * (1.0 - LOG2E) - float(logsumexp(expo, axis=1).sum()) / (LN2 * n)


def _lower(plan, rx, noise):
    return _lower_exact(rx, noise) if plan.exact else _lower_general(plan, rx, noise)


def mi_lower_bound(plan: MappingPlan, gains: ChannelGains | Sequence[float], noise: NoiseModel) -> MiEstimate:
    """Closed-form lower bound on the mutual information."""
    rx = _rx(plan, gains)
    return MiEstimate(_lower(plan, rx, noise), 0.0, "closed-form", _is_degenerate(rx))


def _weights_array(weights, n: int) -> np.ndarray:
    w = getattr(weights, "w", weights)
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n:
        raise ValueError(f"expected {n} precoding weights, got {w.size}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("precoding weights must be positive and finite")
    return w


def mi_lower_bound_precoded(plan: MappingPlan, gains: ChannelGains | Sequence[float], noise: NoiseModel,
                            weights) -> MiEstimate:
    """Lower bound with every received point ``h x`` replaced by ``w h x``.

    ``weights`` is a :class:`~smvlc.precode.PrecodingWeights` or an array in
    the plan's point-table order.
    """
    rx = _rx(plan, gains)
    rx = rx * _weights_array(weights, rx.size)
    return MiEstimate(_lower(plan, rx, noise), 0.0, "closed-form", _is_degenerate(rx))


# ---------------------------------------------------------------------------
# Limits and gaps


def mi_high_snr_limit(plan: MappingPlan) -> float:
    """High-SNR limit of the exact expression."""
    if plan.exact:
        return float(plan.bits)
    a, b = _ab(plan)
    return (a * a * (plan.p + 1) + b * b * plan.p) / 4 ** plan.p + _log_terms(plan)


def lb_high_snr_limit(plan: MappingPlan) -> float:
    """High-SNR limit of the lower bound."""
    if plan.exact:
        return plan.bits - 0.5 * (LOG2E - 1.0)
    a, b = _ab(plan)
    p = plan.p
    return (a * a * (p + 1.5 - 0.5 * LOG2E) + b * b * (p + 0.5 - 0.5 * LOG2E)) / 4 ** p + _log_terms(plan)


def _variance_log_sums(plan: MappingPlan, gains, varsigma: float) -> float:
    """Weighted sum of log2 sum_k' omega sqrt(v_k / v_k') over all points."""
    rx = _rx(plan, gains)
    if plan.exact:
        logv = np.log1p(rx * varsigma ** 2)
        expo = 0.5 * logv[:, None] - 0.5 * logv[None, :]
        return float(logsumexp(expo, axis=1).sum()) / (LN2 * rx.size)
    lay = _layout(plan, rx, varsigma ** 2)
    logv = np.log(lay.v)
    expo = lay.log_omega + 0.5 * logv[:, None] - 0.5 * logv[None, :]
    return float(np.dot(lay.weight, logsumexp(expo, axis=1))) / LN2


def mi_low_snr_limit(plan: MappingPlan, gains: ChannelGains | Sequence[float], varsigma: float) -> float:
    """Low-SNR limit of the exact expression, using the plan's received values."""
    return mi_high_snr_limit(plan) - _variance_log_sums(plan, gains, varsigma)


def lb_low_snr_limit(plan: MappingPlan, gains: ChannelGains | Sequence[float], varsigma: float) -> float:
    """Low-SNR limit of the lower bound, using the plan's received values."""
    return lb_high_snr_limit(plan) - _variance_log_sums(plan, gains, varsigma)


def asymptotic_gap(plan: MappingPlan) -> float:
    """Constant gap between the exact expression and the bound at both SNR extremes."""
    if plan.exact:
        return 0.5 * (LOG2E - 1.0)
    a, b = _ab(plan)
    return (a * a + b * b) / 2 ** (2 * plan.p + 1) * (LOG2E - 1.0)


# ---------------------------------------------------------------------------
# Decomposition into I(h; y | x) + I(x; y), used to cross-check the exact form.


def _space_information(plan: MappingPlan, gains, noise: NoiseModel, nodes: int = DEFAULT_NODES,
                       samples: int | None = None, rng=None) -> tuple[float, float]:
    """``I(h; y | x)`` as a per-point expectation over z.

    The inner sum runs over the LEDs of the same branch sending the same
    level; B points carry an extra factor 2 in the denominator.  Returns
    ``(value, std_error)``; Monte Carlo when ``samples`` is given.
    """
    rx = _rx(plan, gains)
    lay = _layout(plan, rx, noise.varsigma_sq)
    s2 = noise.sigma_sq
    if samples is None:
        t, w = np.polynomial.hermite.hermgauss(nodes)
        w = w / math.sqrt(math.pi)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    means = np.empty(rx.size)
    variances = np.zeros(rx.size)
    for k in range(rx.size):
        if samples is None:
            z = math.sqrt(2.0 * lay.v[k] * s2) * t
        else:
            z = gen.standard_normal(samples) * math.sqrt(lay.v[k] * s2)
        same = (lay.in_b == lay.in_b[k]) & (lay.level_index == lay.level_index[k])
        num = -z ** 2 / (2.0 * lay.v[k] * s2) - 0.5 * math.log(lay.v[k])
        d = lay.r[k] - lay.r[same]
        vs = lay.v[same]
        expo = -(z[None, :] + d[:, None]) ** 2 / (2.0 * vs[:, None] * s2) - 0.5 * np.log(vs)[:, None]
        den = logsumexp(expo, axis=0) + (LN2 if lay.in_b[k] else 0.0)
        vals = (num - den) / LN2
        if samples is None:
            means[k] = float(np.dot(w, vals))
        else:
            means[k] = vals.mean()
            variances[k] = vals.var(ddof=1)
    a, b = _ab(plan)
    value = (a * a + b * b) / 4 ** plan.p * (plan.p + 1) + float(np.dot(lay.weight, means))
    se = 0.0 if samples is None else math.sqrt(float(np.dot(lay.weight ** 2, variances)) / samples)
    return value, se


def _symbol_information(plan: MappingPlan, gains, noise: NoiseModel, width: float = 12.0) -> tuple[float, float]:
    """``I(x; y)`` by adaptive integration over the output y.

    Returns ``(value, error_bound)`` where the bound sums the integrator's
    absolute error estimates.
    """
    rx = _rx(plan, gains)
    lay = _layout(plan, rx, noise.varsigma_sq)
    s2 = noise.sigma_sq
    var = lay.v * s2
    log_norm = -0.5 * np.log(2.0 * np.pi * var)

    def logpdf_all(y):
        return log_norm - (y - lay.r) ** 2 / (2.0 * var)

    total = 0.0
    err = 0.0
    for k in range(rx.size):
        same = (lay.in_b == lay.in_b[k]) & (lay.level_index == lay.level_index[k])
        lw = lay.log_omega[k]

        def integrand(y, k=k, same=same, lw=lw):
            lp = logpdf_all(y)
            return math.exp(lp[k]) * (logsumexp(lw + lp) - logsumexp(lp[same])) / LN2

        sd = math.sqrt(var[k])
        lo, hi = lay.r[k] - width * sd, lay.r[k] + width * sd
        inside = [float(c) for c in lay.r if lo < c < hi]
        val, e = integrate.quad(integrand, lo, hi, points=inside[:50] or None, limit=400,
                                epsabs=1e-12, epsrel=1e-10)
        total += lay.weight[k] * val
        err += lay.weight[k] * e
    return _log_terms(plan) - total, err
