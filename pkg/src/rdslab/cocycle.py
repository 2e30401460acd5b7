"""Driving systems, sampled driving windows, and operator cocycles.

The driving is either a Bernoulli shift on a finite alphabet or an
irrational circle rotation.  A sampled path is a finite window of the
driving orbit around its anchor; transfer matrices are cached per
(symbol, eps) and composed along the window.  The module also estimates
the quantities the theory asserts about the cocycle: the uniform decay
rate on zero-mean vectors and the top Lyapunov exponent.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import HypothesisFailureError
from .maps import MapFamily, Symbol
from .spectral import (
    MatrixKind,
    Space,
    SpectralVector,
    TransferMatrix,
    assemble_derivative,
    assemble_transfer,
    basis,
    norm,
)

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0

# rotation symbols are snapped to this grid so matrices can be cached
ROTATION_QUANTUM = 2**16

DECAY_FLOOR = 1e-15

# iterate norms at or below this level are numerical noise; the decay fit
# window is truncated at the first such step
FIT_FLOOR = 1e-13


class DrivingKind(Enum):
    BERNOULLI = "bernoulli"
    ROTATION = "rotation"


class Direction(Enum):
    FROM_ANCHOR = "from_anchor"  # L^n_omega, symbols 0..n-1
    FROM_PAST = "from_past"  # L^n_{sigma^{-n} omega}, symbols -n..-1


@dataclass(frozen=True)
class DrivingSystem:
    kind: DrivingKind
    seed: int
    probs: tuple[float, ...] | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind is DrivingKind.BERNOULLI:
            if not self.probs:
                raise ValueError("Bernoulli driving requires a probability vector")
            p = np.asarray(self.probs, dtype=float)
            if np.any(p <= 0.0):
                raise ValueError("probabilities must be positive")
            if abs(float(np.sum(p)) - 1.0) > 1e-12:
                raise ValueError("probabilities must sum to 1")
        else:
            alpha = GOLDEN_MEAN if self.alpha is None else self.alpha
            if not 0.0 < alpha < 1.0:
                raise ValueError("rotation number must lie in (0, 1)")
            object.__setattr__(self, "alpha", float(alpha))


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _uniform_at(seed: int, draw: int, positions: np.ndarray) -> np.ndarray:
    """Counter-based uniforms: the value at a driving position is a pure
    function of (seed, draw, position), so windows of different widths
    agree wherever they overlap (experiments over the same draw pair up
    exactly)."""
    base = _splitmix64(_splitmix64(seed & 0xFFFFFFFFFFFFFFFF) ^ (draw * 0x9E3779B97F4A7C15 & 0xFFFFFFFFFFFFFFFF))
    z = (np.asarray(positions, dtype=np.int64).astype(np.uint64) + np.uint64(1 << 62)) ^ np.uint64(base)
    with np.errstate(over="ignore"):
        z = (z + np.uint64(0x9E3779B97F4A7C15))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _quantize(omega: float) -> float:
    return (round(omega * ROTATION_QUANTUM) % ROTATION_QUANTUM) / ROTATION_QUANTUM


@dataclass(frozen=True)
class OmegaPath:
    """Window of the driving orbit: symbols at positions -W..W relative to
    the anchor, with sampling provenance."""

    kind: DrivingKind
    window: int
    seed: int
    draw_index: int
    symbols: np.ndarray | None = None  # Bernoulli only
    base_point: float | None = None  # rotation only
    alpha: float | None = None

    def symbol(self, k: int) -> Symbol:
        """Driving symbol at position k; rotation symbols come back
        quantized to the caching grid."""
        if abs(k) > self.window:
            raise ValueError(f"position {k} outside window half-width {self.window}")
        if self.kind is DrivingKind.BERNOULLI:
            return int(self.symbols[k + self.window])
        return _quantize(self.base_point + k * self.alpha)

    def shifted(self, j: int) -> "OmegaPath":
        """Path anchored at the j-step shift of this path's anchor; the
        usable window shrinks by |j|."""
        w = self.window - abs(j)
        if w < 0:
            raise ValueError("shift exceeds window")
        if self.kind is DrivingKind.BERNOULLI:
            lo = j + self.window - w
            return OmegaPath(
                self.kind, w, self.seed, self.draw_index,
                symbols=self.symbols[lo : lo + 2 * w + 1],
            )
        return OmegaPath(
            self.kind, w, self.seed, self.draw_index,
            base_point=float(np.mod(self.base_point + j * self.alpha, 1.0)),
            alpha=self.alpha,
        )


def sample_path(driving: DrivingSystem, window: int, draw_index: int) -> OmegaPath:
    """Deterministic path draw: counter-based uniforms keyed on
    (seed, draw_index, position) for Bernoulli symbols; a golden-ratio
    Kronecker (low-discrepancy) point for the rotation base."""
    if window < 1:
        raise ValueError("window half-width must be >= 1")
    if driving.kind is DrivingKind.BERNOULLI:
        probs = np.asarray(driving.probs, dtype=float)
        cum = np.cumsum(probs / probs.sum())
        u = _uniform_at(driving.seed, draw_index, np.arange(-window, window + 1))
        symbols = np.searchsorted(cum, u, side="right").astype(np.int64)
        symbols = np.minimum(symbols, len(probs) - 1)
        return OmegaPath(
            driving.kind, window, driving.seed, draw_index, symbols=symbols
        )
    offset = _splitmix64(driving.seed) / 2.0**64
    base = float(np.mod(offset + draw_index * GOLDEN_MEAN, 1.0))
    return OmegaPath(
        driving.kind, window, driving.seed, draw_index,
        base_point=base, alpha=driving.alpha,
    )


class MatrixCache:
    """Per-(symbol, eps) store of assembled matrices; reads are lock-free
    on hit, inserts are serialized (assembly is deterministic, so a lost
    race just repeats identical work)."""

    def __init__(self, family: MapFamily, order: int, oversample: int = 8):
        self.family = family
        self.order = order
        self.oversample = oversample
        self._store: dict = {}
        self._lock = threading.Lock()

    def transfer(self, symbol: Symbol, eps: float) -> TransferMatrix:
        key = (MatrixKind.TRANSFER, symbol, float(eps))
        mat = self._store.get(key)
        if mat is None:
            mat = assemble_transfer(self.family, symbol, eps, self.order, self.oversample)
            with self._lock:
                self._store.setdefault(key, mat)
        return mat

    def derivative(self, symbol: Symbol) -> TransferMatrix:
        key = (MatrixKind.DERIVATIVE, symbol, 0.0)
        mat = self._store.get(key)
        if mat is None:
            mat = assemble_derivative(self.family, symbol, self.order, self.oversample)
            with self._lock:
                self._store.setdefault(key, mat)
        return mat

    def __len__(self) -> int:
        return len(self._store)


def apply_chain(
    cache: MatrixCache,
    path: OmegaPath,
    eps: float,
    start: int,
    count: int,
    v: SpectralVector,
) -> SpectralVector:
    """Apply the matrices of symbols start..start+count-1, earliest first."""
    out = v
    for k in range(start, start + count):
        out = cache.transfer(path.symbol(k), eps).apply(out)
    return out


def cocycle_apply(
    cache: MatrixCache,
    path: OmegaPath,
    eps: float,
    n: int,
    v: SpectralVector,
    direction: Direction = Direction.FROM_ANCHOR,
) -> SpectralVector:
    """n-step cocycle action on v: from the anchor forward, or the n-step
    chain that ends at the anchor (pullback orientation)."""
    if n > path.window:
        raise ValueError(f"n={n} exceeds window half-width {path.window}")
    if direction is Direction.FROM_ANCHOR:
        return apply_chain(cache, path, eps, 0, n, v)
    return apply_chain(cache, path, eps, -n, n, v)


@dataclass
class DecayEstimate:
    """Fitted uniform-decay constants: ||L^n v||_s <= dprime *
    exp(-lambdaprime * n) * ||v||_s over sampled paths and zero-mean test
    vectors, with the least-squares residual of the tail fit."""

    dprime: float
    lambdaprime: float
    fit_residual: float
    rates: np.ndarray  # r_n, n = 0..n_max

    def tail_count(self, target: float, prefactor: float = 1.0) -> int:
        """Smallest n with dprime * prefactor * exp(-lambdaprime n) < target."""
        level = self.dprime * prefactor
        if level <= target:
            return 1
        return max(1, math.ceil(math.log(level / target) / self.lambdaprime))


def estimate_decay(
    cache: MatrixCache,
    driving: DrivingSystem,
    eps: float,
    samples: int,
    n_max: int,
    n_modes: int = 4,
) -> DecayEstimate:
    """Decay-rate fit over sampled paths and the mean-zero modes
    e_k - mass(e_k), k = 1..n_modes.

    The rate is the negative slope of log max-ratio on the tail half of
    the range; exact-zero tails are floored at DECAY_FLOOR and the fit
    window is truncated at the first floored step.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    order = cache.order
    rates = np.zeros(n_max + 1)
    rates[0] = 1.0
    for draw in range(samples):
        path = sample_path(driving, n_max, draw)
        for k in range(1, n_modes + 1):
            v = basis(order, k)
            v = v - v.mass * basis(order, 0)
            denom = norm(v, Space.BS)
            u = v
            for n in range(1, n_max + 1):
                u = cache.transfer(path.symbol(n - 1), eps).apply(u)
                rates[n] = max(rates[n], norm(u, Space.BS) / denom)
    rates = np.maximum(rates, DECAY_FLOOR)

    noisy = np.nonzero(rates[1:] <= FIT_FLOOR)[0]
    n_limit = int(noisy[0]) + 1 if noisy.size else n_max
    lo = max(1, n_limit // 2)
    ns = np.arange(lo, n_limit + 1)
    logs = np.log(rates[lo : n_limit + 1])
    slope, intercept = np.polyfit(ns, logs, 1)
    if slope >= 0.0:
        raise HypothesisFailureError(
            f"cocycle norms do not decay (fit slope {slope:.3e} >= 0)"
        )
    lam = -float(slope)
    # envelope constant over the pre-noise range only; floored steps are
    # roundoff, not operator norms
    valid = np.arange(0, n_limit + 1)
    dprime = float(np.max(rates[valid] * np.exp(lam * valid)))
    resid = float(np.sqrt(np.mean((logs - (intercept + slope * ns)) ** 2)))
    return DecayEstimate(dprime, lam, resid, rates)


def _h2_weights(order: int) -> np.ndarray:
    ks = np.arange(-order, order + 1).astype(float)
    return np.sqrt(1.0 + (1.0 + ks**2) + (1.0 + ks**2) ** 2)


def lyapunov_top(
    cache: MatrixCache,
    path: OmegaPath,
    eps: float,
    n: int,
    return_sequence: bool = False,
):
    """(1/n) log ||L^n_{omega,eps}||, accumulated with per-step rescaling.

    The operator norm is taken in the coefficient-exact H^2 metric of the
    strong space (the W-norms are not induced-norm computable); for the
    doubling map every step has norm exactly 1 in these coordinates.
    """
    if n > path.window:
        raise ValueError("n exceeds window half-width")
    order = cache.order
    w = _h2_weights(order)
    prod = np.eye(2 * order + 1, dtype=complex)
    log_total = 0.0
    partials = np.empty(n)
    for k in range(n):
        prod = cache.transfer(path.symbol(k), eps).data @ prod
        s = float(np.linalg.norm(w[:, None] * prod / w[None, :], 2))
        prod = prod / s
        log_total += math.log(s)
        partials[k] = log_total / (k + 1)
    if return_sequence:
        return float(partials[-1]), partials
    return float(partials[-1])
