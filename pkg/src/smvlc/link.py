"""
Optical intensity channel with input-dependent Gaussian noise.

A transmitted intensity ``x`` over gain ``h`` arrives as::

    y = h x + sqrt(h x) z1 + z0,   z0 ~ N(0, s2),  z1 ~ N(0, vs2 * s2)

so that given ``h x`` the output is Gaussian with mean ``h x`` and variance
``(1 + h x vs2) s2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .geometry import ChannelGains


@dataclass(frozen=True)
class NoiseModel:
    """Input-independent variance ``sigma_sq`` and input-dependent ratio ``varsigma_sq``."""

    sigma_sq: float
    varsigma_sq: float = 0.0

    def __post_init__(self):
        if not (self.sigma_sq > 0 and math.isfinite(self.sigma_sq)):
            raise ValueError(f"sigma_sq must be positive and finite, got {self.sigma_sq!r}")
        if not (self.varsigma_sq >= 0 and math.isfinite(self.varsigma_sq)):
            raise ValueError(f"varsigma_sq must be non-negative and finite, got {self.varsigma_sq!r}")

    @classmethod
    def from_dbm(cls, sigma_sq_dbm: float, varsigma: float = 0.0) -> "NoiseModel":
        """Build from a noise floor in dBm and the ratio's square root."""
        return cls(dbm_to_watts(sigma_sq_dbm), float(varsigma) ** 2)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    @property
    def varsigma(self) -> float:
        return math.sqrt(self.varsigma_sq)

    def variance(self, rx):
        """Output variance for received intensity ``rx = h x``."""
        return (1.0 + np.asarray(rx, dtype=float) * self.varsigma_sq) * self.sigma_sq


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def snr_power(gamma: float, noise: NoiseModel) -> float:
    """Transmit power ``P_t = gamma * sigma^2`` for an SNR ``gamma`` (linear)."""
    if not gamma > 0:
        raise ValueError(f"SNR must be positive, got {gamma!r}")
    return gamma * noise.sigma_sq


def reference_gains(gains: ChannelGains | Sequence[float], noise: NoiseModel) -> ChannelGains:
    """Rescale gains so the strongest link equals ``1 / sigma``.

    With this scaling and ``P_t = gamma sigma^2`` the strongest LED's
    received amplitude at average power is ``gamma sigma``, i.e. ``gamma``
    noise standard deviations.  Relative gains are preserved.
    """
    h = np.asarray(list(gains), dtype=float)
    top = h.max()
    if not top > 0:
        raise ValueError("at least one gain must be positive")
    return ChannelGains(h / (top * noise.sigma), allow_single=h.size == 1)


def _check_rx(h, x):
    rx = np.asarray(h, dtype=float) * np.asarray(x, dtype=float)
    if np.any(rx < 0) or not np.all(np.isfinite(rx)):
        raise ValueError("h * x must be finite and non-negative")
    return rx


def sample_output(h, x, noise: NoiseModel, rng: np.random.Generator, size=None):
    """Draw channel outputs by sampling both noise terms separately."""
    rx = _check_rx(h, x)
    shape = np.broadcast(rx, np.empty(size if size is not None else ())).shape
    z0 = rng.normal(0.0, noise.sigma, shape)
    z1 = rng.normal(0.0, noise.sigma * noise.varsigma, shape)
    y = rx + np.sqrt(rx) * z1 + z0
    return float(y) if np.ndim(y) == 0 else y


def cond_pdf(y, h, x, noise: NoiseModel):
    """Gaussian output density given ``h`` and ``x``."""
    rx = _check_rx(h, x)
    var = noise.variance(rx)
    y = np.asarray(y, dtype=float)
    out = np.exp(-((y - rx) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
    return float(out) if np.ndim(out) == 0 else out


def cond_logpdf(y, h, x, noise: NoiseModel):
    rx = _check_rx(h, x)
    var = noise.variance(rx)
    y = np.asarray(y, dtype=float)
    return -((y - rx) ** 2) / (2.0 * var) - 0.5 * np.log(2.0 * np.pi * var)


def q_function(u):
    """Gaussian tail ``Q(u) = erfc(u / sqrt 2) / 2``."""
    out = 0.5 * erfc(np.asarray(u, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def pep(x_i: float, x_j: float, h: float, noise: NoiseModel) -> float:
    """Pairwise error probability of mistaking ``x_i`` for ``x_j`` on gain ``h``.

    Uses the transmitted symbol's variance for the threshold test.
    """
    if x_i == x_j:
        raise ValueError("pairwise error needs two distinct symbols")
    rx = float(_check_rx(h, x_i))
    _check_rx(h, x_j)
    d = abs(h * x_i - h * x_j)
    return q_function(d / (2.0 * math.sqrt(1.0 + rx * noise.varsigma_sq) * noise.sigma))
