"""
Max-min-distance precoding of the received signal space.

Every valid (LED m, level i) pair gets a positive weight ``w`` so the
noise-free received point becomes ``w h_m x_i``.  The weights maximize the
smallest normalized distance::

    L(k, l) = |r_k - r_l| / (sigma sqrt(1 + r_l varsigma^2))

over ordered pairs, while keeping the summed received intensity equal to
the unprecoded one.  The inner ``min`` is replaced by a log-sum-exp soft
minimum whose sharpness ``rho`` doubles between solves.

Each solve is a log-barrier interior-point method: the equality constraint
is eliminated through an orthonormal null-space basis, positivity is
handled by the barrier, and the unconstrained problem is minimized with
BFGS and a line search that never leaves the positive orthant.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.special import logsumexp

from .cabm import MappingPlan
from .geometry import ChannelGains
from .link import NoiseModel


class SignalSpace(NamedTuple):
    """Labeled received points; ``labels[k]`` is the (LED, level index) of ``values[k]``."""

    labels: tuple[tuple[int, int], ...]
    values: np.ndarray


@dataclass(frozen=True)
class PrecodingWeights:
    """Positive weights in the plan's point-table order (LED, then level index)."""

    labels: tuple[tuple[int, int], ...]
    w: tuple[float, ...]
    outer_iterations: int = 0
    converged: bool = True
    objective: float = float("nan")

    def __post_init__(self):
        if len(self.labels) != len(self.w):
            raise ValueError("labels and weights differ in length")
        if any(not (x > 0 and math.isfinite(x)) for x in self.w):
            raise ValueError("precoding weights must be positive and finite")

    @classmethod
    def identity(cls, plan: MappingPlan) -> "PrecodingWeights":
        pts = plan.points()
        labels = tuple((int(m), int(i)) for m, i in zip(pts.led, pts.index))
        return cls(labels, (1.0,) * len(labels))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.w, dtype=float)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(zip(self.labels, self.w))

    def to_json(self) -> str:
        rows = [{"led": m, "index": i, "w": repr(x)} for (m, i), x in zip(self.labels, self.w)]
        return json.dumps({"weights": rows, "outer_iterations": self.outer_iterations,
                           "converged": self.converged}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PrecodingWeights":
        d = json.loads(text)
        rows = d["weights"]
        return cls(tuple((int(r["led"]), int(r["index"])) for r in rows),
                   tuple(float(r["w"]) for r in rows),
                   int(d.get("outer_iterations", 0)), bool(d.get("converged", True)))


@dataclass(frozen=True)
class SolverConfig:
    rho_init: float = 10.0
    rho_stop: float = 1e5
    grad_tol: float = 1e-9
    ftol: float = 1e-12
    max_iter: int = 200
    barrier_mu: float = 1e-3
    restarts: int = 8
    perturbation: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not (self.rho_init > 0 and self.rho_stop >= self.rho_init):
            raise ValueError("need rho_stop >= rho_init > 0")
        if self.restarts < 1 or self.max_iter < 1:
            raise ValueError("restarts and max_iter must be positive")

    @property
    def max_outer(self) -> int:
        return math.ceil(math.log2(self.rho_stop / self.rho_init)) + 1


def signal_space(weights: PrecodingWeights | None, gains: ChannelGains | Sequence[float],
                 plan: MappingPlan) -> SignalSpace:
    """Received points ``w h_m x_i`` labeled by (LED, level index)."""
    pts = plan.points()
    labels = tuple((int(m), int(i)) for m, i in zip(pts.led, pts.index))
    rx = plan.received(gains)
    if weights is not None:
        if tuple(weights.labels) != labels:
            raise ValueError("weights do not match the plan's (LED, level) pairs")
        rx = rx * weights.as_array()
    return SignalSpace(labels, rx)


def _pair_distances(values: np.ndarray, varsigma: float, sigma: float) -> np.ndarray:
    """Matrix of ``L(k, l)``; diagonal set to +inf."""
    r = np.asarray(values, dtype=float)
    scale = sigma * np.sqrt(1.0 + r * varsigma ** 2)
    out = np.abs(r[:, None] - r[None, :]) / scale[None, :]
    np.fill_diagonal(out, np.inf)
    return out


def min_normalized_distance(space: SignalSpace | Sequence[float], varsigma: float, sigma: float = 1.0) -> float:
    """Smallest ``|r_k - r_l| / (sigma sqrt(1 + r_l varsigma^2))`` over ordered pairs k != l."""
    values = space.values if isinstance(space, SignalSpace) else np.asarray(space, dtype=float)
    if values.size < 2:
        raise ValueError("need at least two points")
    return float(_pair_distances(values, varsigma, sigma).min())


def soft_min(distances, rho: float) -> float:
    """Smooth lower approximation ``-(1/rho) ln sum exp(-rho L)``."""
    d = np.asarray(distances, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("soft_min needs at least one value")
    if not rho > 0:
        raise ValueError("rho must be positive")
    return float(-logsumexp(-rho * d) / rho)


# ---------------------------------------------------------------------------
# Solver


class _Problem:
    """Soft-min objective in terms of the free weights."""

    def __init__(self, c: np.ndarray, varsigma: float, sigma: float, scale: float):
        self.c = c
        self.vs2 = varsigma ** 2
        self.sigma = sigma
        self.scale = scale
        n = c.size
        self.off = ~np.eye(n, dtype=bool)

    def distances(self, w: np.ndarray) -> np.ndarray:
        u = w * self.c
        s = self.sigma * np.sqrt(1.0 + u * self.vs2)
        return np.abs(u[:, None] - u[None, :]) / s[None, :] / self.scale

    def value(self, w: np.ndarray, rho: float) -> float:
        return float(-logsumexp(-rho * self.distances(w)[self.off]) / rho)

    def value_grad(self, w: np.ndarray, rho: float) -> tuple[float, np.ndarray]:
        u = w * self.c
        root = np.sqrt(1.0 + u * self.vs2)
        s = self.sigma * root
        diff = u[:, None] - u[None, :]
        L = np.abs(diff) / s[None, :] / self.scale
        Lo = L[self.off]
        lse = logsumexp(-rho * Lo)
        val = -lse / rho
        p = np.zeros_like(L)
        p[self.off] = np.exp(-rho * Lo - lse)
        sgn = np.sign(diff)
        # dL/du_k (first index) and dL/du_l (second index, includes the variance term).
        d_first = sgn / s[None, :] / self.scale
        ds = self.sigma * self.vs2 / (2.0 * root)
        d_second = -sgn / s[None, :] / self.scale - L * ds[None, :] / s[None, :]
        g_u = (p * d_first).sum(axis=1) + (p * d_second).sum(axis=0)
        return val, g_u * self.c


def _bfgs_barrier(prob, w0: np.ndarray, basis: np.ndarray, rho: float, mu: float,
                  cfg: SolverConfig) -> tuple[np.ndarray, bool]:
    """Minimize ``-softmin(w) - mu sum log w`` along ``w = w0 + basis y``.

    Returns the last iterate and whether the gradient tolerance was met.
    """

    def f_only(w):
        return -prob.value(w, rho) - mu * float(np.log(w).sum())

    def f_grad(w):
        val, g = prob.value_grad(w, rho)
        return -val - mu * float(np.log(w).sum()), basis.T @ (-g - mu / w)

    w = w0.copy()
    f, g = f_grad(w)
    H = np.eye(basis.shape[1])
    for _ in range(cfg.max_iter):
        if np.linalg.norm(g) < cfg.grad_tol:
            return w, True
        d = -H @ g
        if g @ d >= 0:
            H = np.eye(basis.shape[1])
            d = -g
        step_w = basis @ d
        neg = step_w < 0
        t = 1.0
        if np.any(neg):
            t = min(1.0, 0.99 * float(np.min(-w[neg] / step_w[neg])))
        # Backtracking (Armijo) inside the positive orthant.
        for _ in range(60):
            w_new = w + t * step_w
            if np.all(w_new > 0):
                f_new = f_only(w_new)
                if f_new <= f + 1e-4 * t * (g @ d):
                    break
            t *= 0.5
        else:
            return w, False
        f_new, g_new = f_grad(w_new)
        s_vec = t * d
        y_vec = g_new - g
        sy = s_vec @ y_vec
        if sy > 1e-16 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            Hy = H @ y_vec
            H = H + ((sy + y_vec @ Hy) / sy ** 2) * np.outer(s_vec, s_vec) \
                - (np.outer(Hy, s_vec) + np.outer(s_vec, Hy)) / sy
        small = f - f_new <= cfg.ftol * (1.0 + abs(f))
        w, f, g = w_new, f_new, g_new
        if small:
            return w, np.linalg.norm(g) < cfg.grad_tol
    return w, False


def _project(w: np.ndarray, c: np.ndarray, target: float) -> np.ndarray:
    """Rescale so ``c . w = target``; keeps positivity."""
    return w * (target / float(c @ w))


def _run_schedule(prob, w_start: np.ndarray, basis: np.ndarray, cfg: SolverConfig,
                  target: float) -> tuple[np.ndarray, int, bool]:
    """Solve at rho_init, then keep doubling rho until it reaches rho_stop."""
    w = w_start
    rho = cfg.rho_init
    outer = 0
    ok = True
    while True:
        mu = cfg.barrier_mu * cfg.rho_init / rho
        w, conv = _bfgs_barrier(prob, w, basis, rho, mu, cfg)
        ok = ok and conv
        w = _project(w, prob.c, target)
        outer += 1
        if rho >= cfg.rho_stop:
            break
        rho *= 2.0
    return w, outer, ok


def _optimize_points(c: np.ndarray, varsigma: float, sigma: float, cfg: SolverConfig):
    """Core solver over base received values ``c``; returns (weights, outer, converged)."""
    c = np.asarray(c, dtype=float)
    n = c.size
    free = c > 0
    w_full = np.ones(n)
    identity_obj = min_normalized_distance(c, varsigma, sigma)
    if free.sum() < 2:
        return w_full, 0, True
    cf = c[free]
    target = float(cf.sum())
    # The fixed (zero-valued) points still count in the distance set.
    scale = identity_obj if identity_obj > 0 else float(np.ptp(c)) / max(n, 1) / sigma
    scale = scale if scale > 0 else 1.0

    def full(wf):
        out = np.ones(n)
        out[free] = wf
        return out

    prob_full = _Problem(c, varsigma, sigma, scale)

    class _Free:
        # Adapter so the solver only moves the free weights.
        def value(self, wf, rho):
            return prob_full.value(full(wf), rho)

        def value_grad(self, wf, rho):
            val, g = prob_full.value_grad(full(wf), rho)
            return val, g[free]

    prob = _Free()
    prob.c = cf
    basis = null_space(cf[None, :])
    rng = np.random.default_rng(cfg.seed)
    best = (identity_obj, -1, np.ones(n))
    outer_count = 0
    all_ok = True
    for restart in range(cfg.restarts):
        if restart == 0:
            start = np.ones(cf.size)
        else:
            start = _project(np.exp(cfg.perturbation * rng.standard_normal(cf.size)), cf, target)
        wf, outer, ok = _run_schedule(prob, start, basis, cfg, target)
        outer_count = max(outer_count, outer)
        all_ok = all_ok and ok
        cand = full(wf)
        obj = min_normalized_distance(c * cand, varsigma, sigma)
        if obj > best[0]:
            best = (obj, restart, cand)
    return best[2], outer_count, all_ok


def optimize_precoding(plan: MappingPlan, gains: ChannelGains | Sequence[float], noise: NoiseModel,
                       config: SolverConfig | None = None) -> PrecodingWeights:
    """Max-min-distance weights under the average-intensity constraint.

    Starts from unit weights and keeps them unless a restart finds a
    strictly larger minimum normalized distance.  ``converged`` is False
    when some inner solve hit its iteration cap or stalled; the returned
    point is feasible either way.
    """
    cfg = config or SolverConfig()
    space = signal_space(None, gains, plan)
    c = space.values
    w, outer, ok = _optimize_points(c, noise.varsigma, noise.sigma, cfg)
    obj = min_normalized_distance(c * w, noise.varsigma, noise.sigma)
    return PrecodingWeights(space.labels, tuple(float(x) for x in w), int(outer), bool(ok), float(obj))


def constraint_residual(weights: PrecodingWeights, gains, plan: MappingPlan) -> float:
    """Relative violation of the average-intensity equality."""
    c = plan.received(gains)
    base = float(c.sum())
    return abs(float(c @ weights.as_array()) - base) / base
