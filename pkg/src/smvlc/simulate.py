"""
Monte Carlo bit-error-rate estimation with maximum-likelihood detection.

Bits are drawn as uniform K-bit blocks, mapped to (LED, level) pairs,
sent through ``y = r + sqrt(r) z1 + z0`` and detected by maximizing the
Gaussian likelihood of every valid received point (each hypothesis has its
own variance).  Work is split into fixed-size frames, each with its own
seeded substream, so results do not depend on how frames are scheduled.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .cabm import MappingPlan, build_plan, single_led_plan
from .geometry import ChannelGains, RoomScenario, channel_vector
from .link import NoiseModel

FRAME_SYMBOLS = 8192
DEFAULT_MAX_ERRORS = 200


@dataclass(frozen=True)
class BerResult:
    ber: float
    bit_errors: int
    bits_simulated: int
    ci95_halfwidth: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, errors: int, bits: int) -> "BerResult":
        if bits <= 0:
            raise ValueError("no bits simulated")
        ci = binomtest(int(errors), int(bits)).proportion_ci(0.95, method="wilson")
        lo, hi = float(ci.low), float(ci.high)
        return cls(errors / bits, int(errors), int(bits), (hi - lo) / 2.0, lo, hi)

    def separated_below(self, other: "BerResult") -> bool:
        """True when this BER's 95% interval lies strictly below ``other``'s."""
        return self.ci_high < other.ci_low


def _loglik(y: np.ndarray, r: np.ndarray, v: np.ndarray, sigma_sq: float) -> np.ndarray:
    return -((y[:, None] - r[None, :]) ** 2) / (2.0 * v[None, :] * sigma_sq) - 0.5 * np.log(v)[None, :]


def _detect_rows(y: np.ndarray, r: np.ndarray, noise: NoiseModel) -> np.ndarray:
    v = 1.0 + r * noise.varsigma_sq
    # argmax returns the first maximizer, i.e. the (LED, level) order tie-break.
    return np.argmax(_loglik(np.atleast_1d(y), r, v, noise.sigma_sq), axis=1)


def ml_detect(y: float, plan: MappingPlan, gains: ChannelGains | Sequence[float], noise: NoiseModel,
              weights=None) -> tuple[int, int]:
    """Most likely (LED, level index) for one observation."""
    r = plan.received(gains)
    if weights is not None:
        r = r * np.asarray(getattr(weights, "w", weights), dtype=float)
    row = int(_detect_rows(np.array([float(y)]), r, noise)[0])
    pts = plan.points()
    return int(pts.led[row]), int(pts.index[row])


def _frame_errors(seed_seq: np.random.SeedSequence, n_sym: int, r: np.ndarray, row_of_block: np.ndarray,
                  block_of_row: np.ndarray, bits: int, noise: NoiseModel) -> int:
    rng = np.random.default_rng(seed_seq)
    blocks = rng.integers(0, 1 << bits, size=n_sym)
    rx = r[row_of_block[blocks]]
    z0 = rng.normal(0.0, noise.sigma, n_sym)
    z1 = rng.normal(0.0, noise.sigma * noise.varsigma, n_sym)
    y = rx + np.sqrt(rx) * z1 + z0
    detected = block_of_row[_detect_rows(y, r, noise)]
    return int(np.bitwise_count(np.bitwise_xor(blocks, detected).astype(np.uint64)).sum())


def ber_monte_carlo(plan: MappingPlan, gains: ChannelGains | Sequence[float], noise: NoiseModel,
                    n_bits: int = 1_000_000, seed: int = 0, max_errors: int | None = DEFAULT_MAX_ERRORS,
                    weights=None, threads: int = 1, frame_symbols: int = FRAME_SYMBOLS) -> BerResult:
    """Estimate BER, stopping at ``n_bits`` or once ``max_errors`` bit errors are seen.

    The stopping rule is checked after whole frames in frame order, so the
    result is identical for any ``threads``.
    """
    K = plan.bits
    if n_bits <= 0 or n_bits % K:
        raise ValueError(f"n_bits must be a positive multiple of K={K}")
    r = plan.received(gains)
    if weights is not None:
        r = r * np.asarray(getattr(weights, "w", weights), dtype=float)
    row_of_block, block_of_row = plan.block_table()
    n_sym = n_bits // K
    sizes = [frame_symbols] * (n_sym // frame_symbols)
    if n_sym % frame_symbols:
        sizes.append(n_sym % frame_symbols)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(j):
        return _frame_errors(children[j], sizes[j], r, row_of_block, block_of_row, K, noise)

    errors = 0
    bits_done = 0
    step = max(1, int(threads))
    pool = ThreadPoolExecutor(step) if step > 1 else None
    try:
        j = 0
        while j < len(sizes):
            batch = list(range(j, min(j + step, len(sizes))))
            counts = list(pool.map(run, batch)) if pool else [run(k) for k in batch]
            for k, e in zip(batch, counts):
                errors += e
                bits_done += sizes[k] * K
                if max_errors is not None and errors >= max_errors:
                    return BerResult.from_counts(errors, bits_done)
            j += step
    finally:
        if pool:
            pool.shutdown()
    return BerResult.from_counts(errors, bits_done)


def ber_plane_sweep(scenario: RoomScenario, xs: Sequence[float], ys: Sequence[float], bits: int,
                    avg_power: float, noise: NoiseModel, n_bits: int = 1_000_000, seed: int = 0,
                    adaptive: bool = True, modulation_depth: float = 0.5,
                    max_errors: int | None = DEFAULT_MAX_ERRORS) -> list[list[BerResult]]:
    """BER over a grid of photodiode positions at the scenario's PD height.

    ``result[iy][ix]`` belongs to ``(xs[ix], ys[iy])``.  A one-LED scenario
    sends all K bits as ``2**K``-ary PAM.
    """
    z = scenario.pd_position[2]
    seeds = np.random.SeedSequence(seed).spawn(len(xs) * len(ys))
    out = []
    for iy, y in enumerate(ys):
        row = []
        for ix, x in enumerate(xs):
            sc = scenario.with_pd((x, y, z))
            gains = channel_vector(sc)
            if len(gains) == 1:
                plan = single_led_plan(bits, avg_power, modulation_depth)
            else:
                plan = build_plan(gains, bits, noise.varsigma, adaptive, avg_power, modulation_depth)
            sub = int(seeds[iy * len(xs) + ix].generate_state(1)[0])
            row.append(ber_monte_carlo(plan, gains, noise, n_bits, sub, max_errors))
        out.append(row)
    return out
