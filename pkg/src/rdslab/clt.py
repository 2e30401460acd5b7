"""Asymptotic variance of Birkhoff sums along the random orbit, its
parameter derivative, and an empirical quenched CLT check.

The variance is the centered Green-Kubo series: the anchor-density
average of the squared centered observable plus twice the correlation
sum, each correlation evaluated through the cocycle identity
``<f_n, L^n (f_0 h)>``.  The derivative at parameter 0 is assembled from
the three limits of the difference-quotient decomposition (response of
the zeroth term, the derivative cocycle acting inside the correlations,
and the response of the centered pair), with finite differences of the
variance as the independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cocycle import DecayEstimate, DrivingSystem, MatrixCache, OmegaPath, sample_path
from .equivariant import density_sweep
from .errors import DegenerateVarianceError, HypothesisFailureError
from .maps import map_point
from .response import choose_n_terms, hat_h, hat_h_forward, observable_for, sup_bound
from .spectral import SpectralVector, convolve, evaluate_at, grid_eval, pair

NEGATIVE_TOL = 1e-8
DEGENERATE_SIGMA2 = 1e-6
SAMPLING_GRID = 1 << 14


@dataclass
class VarianceResult:
    sigma2: float
    n_corr: int
    mc_samples: int
    stderr: float
    zeroth: float
    terms: np.ndarray  # path-averaged correlation terms, index n-1


def _centered(
    observables: list[SpectralVector],
    symbol,
    density_vec: SpectralVector,
) -> tuple[SpectralVector, float]:
    phi = observable_for(observables, symbol)
    mean = pair(phi, density_vec).real
    f = phi.copy()
    f.coeffs[f.order] -= mean
    return f, mean


def sigma2(
    cache: MatrixCache,
    driving: DrivingSystem,
    observables: list[SpectralVector],
    eps: float,
    samples: int,
    n_corr: int = 30,
    depth: int = 60,
    tol: float = 1e-12,
    mapper=map,
) -> VarianceResult:
    """Green-Kubo variance at the given parameter, Monte Carlo averaged
    over sampled driving paths."""
    window = n_corr + depth + 1

    def one_path(draw: int):
        path = sample_path(driving, window, draw)
        dens = density_sweep(cache, path, eps, 0, n_corr, depth, tol)
        f0, _ = _centered(observables, path.symbol(0), dens[0].vec)
        zeroth = pair(convolve(f0, f0), dens[0].vec).real
        u = convolve(f0, dens[0].vec)
        terms = np.empty(n_corr)
        for n in range(1, n_corr + 1):
            u = cache.transfer(path.symbol(n - 1), eps).apply(u)
            fn, _ = _centered(observables, path.symbol(n), dens[n].vec)
            terms[n - 1] = pair(fn, u).real
        return zeroth, terms

    zeros = []
    term_rows = []
    for zeroth, terms in mapper(one_path, range(samples)):
        zeros.append(zeroth)
        term_rows.append(terms)
    zeros = np.array(zeros)
    term_mat = np.array(term_rows)
    per_path = zeros + 2.0 * term_mat.sum(axis=1)
    value = float(np.mean(per_path))
    stderr = (
        float(np.std(per_path, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    )
    if value < -NEGATIVE_TOL:
        raise HypothesisFailureError(
            f"variance {value:.3e} < -{NEGATIVE_TOL}: increase n_corr or samples"
        )
    return VarianceResult(
        value, n_corr, samples, stderr, float(np.mean(zeros)), term_mat.mean(axis=0)
    )


@dataclass
class VarianceDerivative:
    value: float
    stderr: float
    zeroth: float
    terms_I: np.ndarray
    terms_II: np.ndarray
    terms_III: np.ndarray
    max_abs_I: float
    n_corr: int
    n_terms: int


def sigma2_derivative(
    cache: MatrixCache,
    driving: DrivingSystem,
    observables: list[SpectralVector],
    samples: int,
    decay: DecayEstimate,
    n_corr: int = 30,
    n_terms: int | None = None,
    depth: int = 60,
    tol: float = 1e-12,
    mapper=map,
) -> VarianceDerivative:
    """Parameter derivative of the variance at 0, assembled from the
    three difference-quotient limits.

    Per correlation index n the three contributions are: the zero-mass
    pairing (vanishes identically and is asserted small), the derivative
    cocycle of the correlation chain, and the forward image of the
    derivative of the centered pair.  The zeroth term contributes the
    response of the squared centered observable.
    """
    if n_terms is None:
        probe_path = sample_path(driving, depth + 2, 0)
        probe = hat_h(cache, probe_path, 1, depth, tol)
        phi_sup = max(sup_bound(phi) for phi in observables)
        n_terms = choose_n_terms(decay, max(probe.max_term_strong, 1e-6) * phi_sup)
    window = n_corr + n_terms + depth + 2

    def one_path(draw: int):
        path = sample_path(driving, window, draw)
        dens = density_sweep(cache, path, 0.0, -n_terms - 1, n_corr, depth, tol)
        hat0 = hat_h(cache, path, n_terms, depth, tol, densities=dens)
        hats = hat_h_forward(cache, path, hat0.vec, dens, n_corr)
        h0 = dens[0].vec
        f0, _ = _centered(observables, path.symbol(0), h0)
        s0 = pair(observable_for(observables, path.symbol(0)), hats[0]).real
        zeroth = pair(convolve(f0, f0), hats[0]).real
        u = convolve(f0, h0)
        w = 0.0 * u
        z = convolve(f0, hats[0]) - s0 * h0
        tI = np.empty(n_corr)
        tII = np.empty(n_corr)
        tIII = np.empty(n_corr)
        for n in range(1, n_corr + 1):
            sym = path.symbol(n - 1)
            mat = cache.transfer(sym, 0.0)
            w = mat.apply(w) + cache.derivative(sym).apply(u)
            u = mat.apply(u)
            z = mat.apply(z)
            fn, _ = _centered(observables, path.symbol(n), dens[n].vec)
            s_n = pair(observable_for(observables, path.symbol(n)), hats[n]).real
            tI[n - 1] = -s_n * u.mass.real
            tII[n - 1] = pair(fn, w).real
            tIII[n - 1] = pair(fn, z).real
        total = zeroth + 2.0 * float(np.sum(tI + tII + tIII))
        return total, zeroth, tI, tII, tIII

    totals, zeroths, rows_I, rows_II, rows_III = [], [], [], [], []
    for total, zeroth, tI, tII, tIII in mapper(one_path, range(samples)):
        totals.append(total)
        zeroths.append(zeroth)
        rows_I.append(tI)
        rows_II.append(tII)
        rows_III.append(tIII)
    totals = np.array(totals)
    value = float(np.mean(totals))
    stderr = (
        float(np.std(totals, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    )
    return VarianceDerivative(
        value,
        stderr,
        float(np.mean(zeroths)),
        np.mean(rows_I, axis=0),
        np.mean(rows_II, axis=0),
        np.mean(rows_III, axis=0),
        float(np.max(np.abs(rows_I))),
        n_corr,
        n_terms,
    )


def sigma2_derivative_fd(
    cache: MatrixCache,
    driving: DrivingSystem,
    observables: list[SpectralVector],
    samples: int,
    eps_fd: float = 1e-2,
    n_corr: int = 30,
    depth: int = 60,
    tol: float = 1e-12,
    mapper=map,
) -> float:
    """Finite-difference oracle for the variance derivative: central
    differences over the same sampled paths, Richardson-extrapolated
    over step halving."""

    def central(e: float) -> float:
        up = sigma2(cache, driving, observables, +e, samples, n_corr, depth, tol, mapper)
        dn = sigma2(cache, driving, observables, -e, samples, n_corr, depth, tol, mapper)
        return (up.sigma2 - dn.sigma2) / (2.0 * e)

    d1 = central(eps_fd)
    d2 = central(eps_fd / 2.0)
    return (4.0 * d2 - d1) / 3.0


def sample_initial_points(
    density_vec: SpectralVector, trials: int, seed: int, draw: int
) -> np.ndarray:
    """Inverse-CDF sampling from the spectral density: cumulative
    trapezoid on a fine grid with linear interpolation."""
    grid = SAMPLING_GRID
    vals = np.maximum(grid_eval(density_vec, grid).real, 0.0)
    closed = np.append(vals, vals[0])
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (closed[:-1] + closed[1:]) / grid)))
    cdf /= cdf[-1]
    xs = np.arange(grid + 1) / grid
    gen = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, draw]))
    u = gen.random(trials)
    return np.interp(u, cdf, xs)


def simulate_birkhoff(
    cache: MatrixCache,
    path: OmegaPath,
    eps: float,
    observables: list[SpectralVector],
    n: int,
    trials: int,
    sim_seed: int,
    depth: int = 60,
    tol: float = 1e-12,
    densities: dict | None = None,
) -> np.ndarray:
    """Normalized Birkhoff sums S_n/sqrt(n) of the per-step centered
    observable over `trials` initial points drawn from the anchor
    density, following the quenched map sequence."""
    if densities is None:
        densities = density_sweep(cache, path, eps, 0, n - 1, depth, tol)
    means = np.empty(n)
    for k in range(n):
        phi = observable_for(observables, path.symbol(k))
        means[k] = pair(phi, densities[k].vec).real
    x = sample_initial_points(densities[0].vec, trials, sim_seed, path.draw_index)
    total = np.zeros(trials)
    fam = cache.family
    # Low-order dither keeps orbits generic: maps that are exact in binary
    # arithmetic (the plain doubling map) otherwise exhaust the mantissa
    # and collapse every float64 orbit onto the fixed point within ~52
    # steps.  The dither scale is far below every statistical tolerance.
    dither = np.random.Generator(
        np.random.Philox(key=[(sim_seed ^ 0xD17) & 0xFFFFFFFFFFFFFFFF, path.draw_index])
    )
    scale = 2.0**-50
    for k in range(n):
        sym = path.symbol(k)
        phi = observable_for(observables, sym)
        total += evaluate_at(phi, x).real - means[k]
        x = map_point(fam, sym, eps, x)
        x = np.mod(x + (dither.random(trials) - 0.5) * scale, 1.0)
    return total / math.sqrt(n)


@dataclass
class CltResult:
    ks_stat: float
    sigma2_used: float
    samples: np.ndarray


def clt_empirical(
    cache: MatrixCache,
    driving: DrivingSystem,
    observables: list[SpectralVector],
    eps: float,
    path: OmegaPath,
    n: int,
    trials: int,
    sigma2_value: float | None = None,
    sigma2_samples: int = 100,
    n_corr: int = 30,
    depth: int = 60,
    tol: float = 1e-12,
    sim_seed: int | None = None,
) -> CltResult:
    """Kolmogorov-Smirnov distance between the law of S_n/sqrt(n) along
    the given path and the centered normal with the Green-Kubo variance."""
    if sigma2_value is None:
        sigma2_value = sigma2(
            cache, driving, observables, eps, sigma2_samples, n_corr, depth, tol
        ).sigma2
    if sigma2_value <= DEGENERATE_SIGMA2:
        raise DegenerateVarianceError(
            f"sigma^2 = {sigma2_value:.3e} <= {DEGENERATE_SIGMA2}; CLT degenerate"
        )
    if sim_seed is None:
        sim_seed = driving.seed ^ 0x5DEECE66D
    vals = simulate_birkhoff(
        cache, path, eps, observables, n, trials, sim_seed, depth, tol
    )
    ks = stats.kstest(vals, "norm", args=(0.0, math.sqrt(sigma2_value))).statistic
    return CltResult(float(ks), float(sigma2_value), vals)
