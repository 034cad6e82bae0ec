"""
Channel-adaptive bit mapping for spatial modulation with any number of LEDs.

With ``2**p <= M < 2**(p+1)`` LEDs, the space-domain codebook gives p-bit
labels to the first ``2**(p+1) - M`` LEDs of an ordering (set Xi) and
(p+1)-bit labels to the remaining ``2 (M - 2**p)`` LEDs (sets Psi and Phi,
which share their first p bits and differ in the last one).  To keep ``K``
bits per slot, Xi LEDs carry ``2**q``-ary PAM and the others
``2**(q-1)``-ary PAM, ``q = K - p``.  The adaptive step picks which LEDs
get the higher order by exhaustively maximizing the noise-normalized
minimum distance of the received constellation, then rebuilds the codebook
on the reordered LED list.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import ChannelGains

DEFAULT_DEPTH = 0.5
TIE_RTOL = 1e-12


class ConfigurationError(ValueError):
    """Raised when K, M or the PAM orders cannot form a valid mapping."""


def split_exponent(num_leds: int) -> tuple[int, bool]:
    """Return ``(p, exact)`` with ``2**p <= M < 2**(p+1)``."""
    if isinstance(num_leds, bool) or int(num_leds) != num_leds or num_leds < 2:
        raise ValueError(f"need an integer M >= 2, got {num_leds!r}")
    m = int(num_leds)
    p = m.bit_length() - 1
    return p, m == 1 << p


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def pam_levels(order: int, avg_power: float, modulation_depth: float = 1.0) -> np.ndarray:
    """Equally spaced unipolar PAM intensities with arithmetic mean ``avg_power``.

    The levels span ``avg_power * (1 -+ modulation_depth)``.  A depth of 1
    gives the zero-based grid ``2 P k / (N - 1)``; a single level sits at
    ``avg_power``.
    """
    if isinstance(order, bool) or int(order) != order or not _is_pow2(int(order)):
        raise ValueError(f"PAM order must be a power of two, got {order!r}")
    if not avg_power > 0 or not math.isfinite(avg_power):
        raise ValueError(f"average power must be positive, got {avg_power!r}")
    if not 0 < modulation_depth <= 1:
        raise ValueError(f"modulation depth must lie in (0, 1], got {modulation_depth!r}")
    n = int(order)
    if n == 1:
        return np.array([float(avg_power)])
    k = np.arange(n, dtype=float)
    levels = avg_power * (1.0 + modulation_depth * (2.0 * k / (n - 1) - 1.0))
    if modulation_depth == 1.0:
        levels[0] = 0.0
    return levels


def gray(v: int) -> int:
    return v ^ (v >> 1)


def inverse_gray(g: int) -> int:
    v = 0
    while g:
        v ^= g
        g >>= 1
    return v


def _to_bits(bits) -> tuple[int, ...]:
    if isinstance(bits, str):
        if any(c not in "01" for c in bits):
            raise ValueError(f"bit string may only contain 0/1, got {bits!r}")
        return tuple(int(c) for c in bits)
    out = tuple(int(b) for b in bits)
    if any(b not in (0, 1) for b in out):
        raise ValueError("bits must be 0 or 1")
    return out


def _bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | b
    return v


def _int_to_bits(v: int, width: int) -> tuple[int, ...]:
    return tuple((v >> (width - 1 - j)) & 1 for j in range(width))


def build_space_codebook(num_leds: int, order: Sequence[int] | None = None) -> dict[int, str]:
    """Prefix-free complete codebook mapping LED index to its space bits.

    ``order`` lists the LEDs (1-based) by position; the first
    ``2**(p+1) - M`` positions get p-bit labels.
    """
    p, _ = split_exponent(num_leds)
    order = tuple(range(1, num_leds + 1)) if order is None else tuple(int(o) for o in order)
    if sorted(order) != list(range(1, num_leds + 1)):
        raise ValueError(f"order must be a permutation of 1..{num_leds}")
    return _codebook(order, p)


def _codebook(order: Sequence[int], p: int) -> dict[int, str]:
    M = len(order)
    n_xi = (1 << (p + 1)) - M
    n_extra = M - (1 << p)
    base = ["".join(map(str, _int_to_bits(j, p))) for j in range(1 << p)]
    book = {}
    for pos, led in enumerate(order):
        if pos < n_xi:
            book[led] = base[pos]
        elif pos < 1 << p:
            book[led] = base[pos] + "0"
        else:
            # Phi position k pairs with Psi position n_xi + k.
            book[led] = base[n_xi + pos - (1 << p)] + "1"
    return book


class Symbol(NamedTuple):
    led: int
    index: int
    intensity: float


class Priors(NamedTuple):
    space: tuple[float, ...]
    symbol_a: tuple[float, ...]
    symbol_b: tuple[float, ...]


class PointTable(NamedTuple):
    """Flat view of every valid (LED, symbol) label, ordered by (LED, index)."""

    led: np.ndarray
    index: np.ndarray
    in_b: np.ndarray
    level: np.ndarray


@dataclass(frozen=True)
class MappingPlan:
    """Complete bit mapping for one transmitter configuration.

    ``xi``, ``psi`` and ``phi`` hold 1-based LED indices; ``led_order`` is
    the LED list the codebook was built on.  ``pam_orders[m-1]`` is the PAM
    order of LED m.
    """

    num_leds: int
    bits: int
    p: int
    q: int
    led_order: tuple[int, ...]
    xi: tuple[int, ...]
    psi: tuple[int, ...]
    phi: tuple[int, ...]
    codebook: tuple[str, ...]
    pam_orders: tuple[int, ...]
    levels_a: tuple[float, ...]
    levels_b: tuple[float, ...]
    avg_power: float
    modulation_depth: float = DEFAULT_DEPTH
    labeling: str = "binary"

    @property
    def exact(self) -> bool:
        return self.num_leds == 1 << self.p

    @property
    def n_low(self) -> int:
        """``M - 2**p``: half the number of LEDs with (p+1)-bit labels."""
        return self.num_leds - (1 << self.p)

    @property
    def n_high(self) -> int:
        """``2**(p+1) - M``: number of LEDs with p-bit labels."""
        return (1 << (self.p + 1)) - self.num_leds

    def code(self, led: int) -> str:
        return self.codebook[led - 1]

    def levels(self, led: int) -> tuple[float, ...]:
        return self.levels_b if led in self.xi else self.levels_a

    def in_xi(self, led: int) -> bool:
        return led in self.xi

    def points(self) -> PointTable:
        led, idx, in_b, lvl = [], [], [], []
        xi = set(self.xi)
        for m in range(1, self.num_leds + 1):
            levels = self.levels_b if m in xi else self.levels_a
            for i, x in enumerate(levels):
                led.append(m)
                idx.append(i)
                in_b.append(m in xi)
                lvl.append(x)
        return PointTable(np.array(led), np.array(idx), np.array(in_b, dtype=bool), np.array(lvl, dtype=float))

    def received(self, gains: ChannelGains | Sequence[float]) -> np.ndarray:
        """Noise-free received values ``h_m x_i`` in point-table order."""
        h = np.asarray(list(gains), dtype=float)
        if h.size != self.num_leds:
            raise ValueError(f"plan has {self.num_leds} LEDs but {h.size} gains were given")
        pts = self.points()
        return h[pts.led - 1] * pts.level

    def with_power(self, avg_power: float) -> "MappingPlan":
        """Same mapping with levels rescaled to a new average power."""
        scale = avg_power / self.avg_power
        return _replace(self, levels_a=tuple(x * scale for x in self.levels_a),
                        levels_b=tuple(x * scale for x in self.levels_b), avg_power=float(avg_power))

    def block_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Map every K-bit block (as an integer) to its point-table row.

        Returns ``(row_of_block, block_of_row)``.
        """
        pts = self.points()
        row = {(int(m), int(i)): r for r, (m, i) in enumerate(zip(pts.led, pts.index))}
        n = 1 << self.bits
        row_of_block = np.empty(n, dtype=np.int64)
        block_of_row = np.empty(len(pts.led), dtype=np.int64)
        for v in range(n):
            s = encode(self, _int_to_bits(v, self.bits))
            r = row[(s.led, s.index)]
            row_of_block[v] = r
            block_of_row[r] = v
        return row_of_block, block_of_row

    def to_dict(self) -> dict:
        return {
            "num_leds": self.num_leds,
            "bits": self.bits,
            "p": self.p,
            "q": self.q,
            "led_order": list(self.led_order),
            "xi": list(self.xi),
            "psi": list(self.psi),
            "phi": list(self.phi),
            "codebook": {str(m): self.codebook[m - 1] for m in range(1, self.num_leds + 1)},
            "pam_orders": list(self.pam_orders),
            "levels_a": [repr(float(x)) for x in self.levels_a],
            "levels_b": [repr(float(x)) for x in self.levels_b],
            "avg_power": repr(float(self.avg_power)),
            "modulation_depth": repr(float(self.modulation_depth)),
            "labeling": self.labeling,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MappingPlan":
        M = int(d["num_leds"])
        return cls(
            num_leds=M,
            bits=int(d["bits"]),
            p=int(d["p"]),
            q=int(d["q"]),
            led_order=tuple(int(v) for v in d["led_order"]),
            xi=tuple(int(v) for v in d["xi"]),
            psi=tuple(int(v) for v in d["psi"]),
            phi=tuple(int(v) for v in d["phi"]),
            codebook=tuple(d["codebook"][str(m)] for m in range(1, M + 1)),
            pam_orders=tuple(int(v) for v in d["pam_orders"]),
            levels_a=tuple(float(v) for v in d["levels_a"]),
            levels_b=tuple(float(v) for v in d["levels_b"]),
            avg_power=float(d["avg_power"]),
            modulation_depth=float(d["modulation_depth"]),
            labeling=d["labeling"],
        )

    @classmethod
    def from_json(cls, text: str) -> "MappingPlan":
        return cls.from_dict(json.loads(text))


def _replace(plan: MappingPlan, **changes) -> MappingPlan:
    from dataclasses import replace
    return replace(plan, **changes)


def _plan_from_order(order: Sequence[int], bits: int, avg_power: float,
                     modulation_depth: float, labeling: str) -> MappingPlan:
    M = len(order)
    p, _ = split_exponent(M)
    q = bits - p
    if q < 1:
        raise ConfigurationError(f"K={bits} leaves q={q} signal bits for M={M}; need q >= 1 (K >= {p + 1})")
    if labeling not in ("binary", "gray"):
        raise ValueError(f"labeling must be 'binary' or 'gray', got {labeling!r}")
    n_xi = (1 << (p + 1)) - M
    book = _codebook(order, p)
    xi = tuple(order[:n_xi])
    psi = tuple(order[n_xi:1 << p])
    phi = tuple(order[1 << p:])
    orders = tuple((1 << q) if m in xi else (1 << (q - 1)) for m in range(1, M + 1))
    return MappingPlan(
        num_leds=M,
        bits=int(bits),
        p=p,
        q=q,
        led_order=tuple(order),
        xi=xi,
        psi=psi,
        phi=phi,
        codebook=tuple(book[m] for m in range(1, M + 1)),
        pam_orders=orders,
        levels_a=tuple(float(x) for x in pam_levels(1 << (q - 1), avg_power, modulation_depth)),
        levels_b=tuple(float(x) for x in pam_levels(1 << q, avg_power, modulation_depth)),
        avg_power=float(avg_power),
        modulation_depth=float(modulation_depth),
        labeling=labeling,
    )


def single_led_plan(bits: int, avg_power: float, modulation_depth: float = DEFAULT_DEPTH,
                    labeling: str = "binary") -> MappingPlan:
    """Degenerate one-LED plan: all K bits go to ``2**K``-ary PAM."""
    if bits < 1:
        raise ConfigurationError("need K >= 1")
    return MappingPlan(
        num_leds=1, bits=int(bits), p=0, q=int(bits), led_order=(1,), xi=(1,), psi=(), phi=(),
        codebook=("",), pam_orders=(1 << bits,),
        levels_a=tuple(float(x) for x in pam_levels(1 << (bits - 1), avg_power, modulation_depth)),
        levels_b=tuple(float(x) for x in pam_levels(1 << bits, avg_power, modulation_depth)),
        avg_power=float(avg_power), modulation_depth=float(modulation_depth), labeling=labeling,
    )


def _dmin_normalized(values: np.ndarray, varsigma: float) -> float:
    # Ordered pairs normalized by the first point: min over unordered pairs
    # divided by the larger point's noise factor.
    if values.size < 2:
        raise ValueError("need at least two constellation points")
    diff = np.abs(values[:, None] - values[None, :])
    scale = np.sqrt(1.0 + values * varsigma ** 2)
    ratio = diff / scale[:, None]
    np.fill_diagonal(ratio, np.inf)
    return float(ratio.min())


def d_min_prime(gains: ChannelGains | Sequence[float], plan: MappingPlan, varsigma: float) -> float:
    """Minimum noise-normalized distance of the plan's received constellation.

    Taken over ordered pairs of distinct (LED, symbol) labels as
    ``|h x - h' x'| / sqrt(1 + h x varsigma^2)``.
    """
    return _dmin_normalized(plan.received(gains), varsigma)


class ModOrderCombination(NamedTuple):
    orders: tuple[int, ...]
    score: float


def _orders_score(h: np.ndarray, orders: Sequence[int], levels: dict[int, np.ndarray], varsigma: float) -> float:
    vals = np.concatenate([h[m] * levels[n] for m, n in enumerate(orders)])
    return _dmin_normalized(vals, varsigma)


def optimize_orders(gains: ChannelGains | Sequence[float], bits: int, varsigma: float = 0.0,
                    avg_power: float = 1.0, modulation_depth: float = DEFAULT_DEPTH,
                    max_combinations: int = 1_000_000) -> ModOrderCombination:
    """Exhaustive modulation-order search.

    Scores every assignment of ``2**q`` to exactly ``2**(p+1) - M`` LEDs
    (``2**(q-1)`` to the rest) and returns the best; ties go to the
    lexicographically smallest order vector.
    """
    h = np.asarray(list(gains), dtype=float)
    M = h.size
    p, exact = split_exponent(M)
    q = bits - p
    if q < 1:
        raise ConfigurationError(f"K={bits} leaves q={q} signal bits for M={M}; need q >= 1 (K >= {p + 1})")
    hi, lo = 1 << q, 1 << (q - 1)
    levels = {hi: pam_levels(hi, avg_power, modulation_depth), lo: pam_levels(lo, avg_power, modulation_depth)}
    n_xi = (1 << (p + 1)) - M
    if exact:
        orders = (hi,) * M
        return ModOrderCombination(orders, _orders_score(h, orders, levels, varsigma))
    if math.comb(M, n_xi) > max_combinations:
        raise ConfigurationError(f"C({M},{n_xi}) combinations exceed max_combinations={max_combinations}")
    best = None
    for chosen in itertools.combinations(range(M), n_xi):
        sel = set(chosen)
        orders = tuple(hi if m in sel else lo for m in range(M))
        score = _orders_score(h, orders, levels, varsigma)
        if best is None or _better(score, orders, best):
            best = ModOrderCombination(orders, score)
    return best


def _better(score: float, orders: tuple[int, ...], best: ModOrderCombination) -> bool:
    tol = TIE_RTOL * max(abs(score), abs(best.score))
    if score > best.score + tol:
        return True
    if score >= best.score - tol:
        return orders < best.orders
    return False


def adaptive_order(gains: Sequence[float], orders: Sequence[int]) -> tuple[int, ...]:
    """LED list sorted by PAM order (descending), then gain, then index."""
    h = list(gains)
    return tuple(sorted(range(1, len(h) + 1), key=lambda m: (-orders[m - 1], -h[m - 1], m)))


def build_plan(gains: ChannelGains | Sequence[float], bits: int, varsigma: float = 0.0,
               adaptive: bool = True, avg_power: float = 1.0,
               modulation_depth: float = DEFAULT_DEPTH, labeling: str = "binary") -> MappingPlan:
    """Build the space/signal mapping, optionally channel-adaptive.

    Non-adaptive plans keep the natural LED order (the fixed baseline).
    """
    h = [float(g) for g in gains]
    M = len(h)
    p, _ = split_exponent(M)
    if bits - p < 1:
        raise ConfigurationError(f"K={bits} leaves q={bits - p} signal bits for M={M}; need q >= 1 (K >= {p + 1})")
    if adaptive:
        best = optimize_orders(h, bits, varsigma, avg_power, modulation_depth)
        order = adaptive_order(h, best.orders)
    else:
        order = tuple(range(1, M + 1))
    return _plan_from_order(order, bits, avg_power, modulation_depth, labeling)


def plan_from_order(order: Sequence[int], bits: int, avg_power: float = 1.0,
                    modulation_depth: float = DEFAULT_DEPTH, labeling: str = "binary") -> MappingPlan:
    """Plan built on an explicit LED ordering."""
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(1, len(order) + 1)):
        raise ValueError("order must be a permutation of 1..M")
    return _plan_from_order(order, bits, avg_power, modulation_depth, labeling)


def encode(plan: MappingPlan, bits) -> Symbol:
    """Map one K-bit block to the active LED and its PAM symbol."""
    b = _to_bits(bits)
    if len(b) != plan.bits:
        raise ValueError(f"expected a {plan.bits}-bit block, got {len(b)} bits")
    s = "".join(map(str, b))
    for m in range(1, plan.num_leds + 1):
        code = plan.codebook[m - 1]
        if s.startswith(code):
            rest = b[len(code):]
            v = _bits_to_int(rest)
            idx = inverse_gray(v) if plan.labeling == "gray" else v
            return Symbol(m, idx, plan.levels(m)[idx])
    raise AssertionError("codebook is not complete")  # unreachable for valid plans


def decode(plan: MappingPlan, led: int, symbol_index: int) -> tuple[int, ...]:
    """Inverse of :func:`encode`."""
    if not 1 <= led <= plan.num_leds:
        raise IndexError(f"LED {led} outside 1..{plan.num_leds}")
    code = plan.codebook[led - 1]
    n = len(plan.levels(led))
    if not 0 <= symbol_index < n:
        raise IndexError(f"symbol index {symbol_index} outside 0..{n - 1} for LED {led}")
    width = plan.bits - len(code)
    v = gray(symbol_index) if plan.labeling == "gray" else symbol_index
    return tuple(int(c) for c in code) + _int_to_bits(v, width)


def prior_probabilities(plan: MappingPlan) -> Priors:
    """Per-LED activation probabilities and per-level symbol probabilities."""
    p, q = plan.p, plan.q
    space = tuple(2.0 ** -p if m in plan.xi else 2.0 ** -(p + 1) for m in range(1, plan.num_leds + 1))
    pa = plan.n_low / 2.0 ** (p + q - 1)
    pb = plan.n_high / 2.0 ** (p + q)
    return Priors(space, (pa,) * len(plan.levels_a), (pb,) * len(plan.levels_b))


def kraft_sum(codebook) -> float:
    codes = codebook.values() if isinstance(codebook, dict) else codebook
    return sum(2.0 ** -len(c) for c in codes)


def is_prefix_free(codebook) -> bool:
    codes = sorted(codebook.values() if isinstance(codebook, dict) else codebook)
    # In sorted order a prefix sorts immediately before some extension of it.
    return all(not b.startswith(a) for a, b in zip(codes, codes[1:])) and len(set(codes)) == len(codes)
