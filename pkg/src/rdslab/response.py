"""Derivative of the equivariant density with respect to the map
parameter, evaluated three ways.

* series route: the tail-summed chain of cocycle images of the derivative
  operator applied to unperturbed densities, paired with the observable;
* observable route: the same series written against the observable, each
  term evaluated by pushing the observable through the composed map chain
  pointwise on an oversampled grid (an independent code path exercising
  the dual form of the formula);
* finite differences of the perturbed densities (oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cocycle import (
    DecayEstimate,
    DrivingSystem,
    MatrixCache,
    OmegaPath,
    sample_path,
)
from .equivariant import EquivariantDensity, density_sweep, pullback_density
from .errors import CrossCheckError
from .maps import map_jet
from .spectral import (
    Space,
    SpectralVector,
    constant,
    evaluate_at,
    grid_eval,
    norm,
    pair,
)

TAIL_TARGET = 1e-10
KOOPMAN_GRID_MIN = 4096
KOOPMAN_GRID_CAP = 1 << 20


class ResponseMethod(Enum):
    SERIES_HAT_H = "series_hat_h"
    SERIES_OBSERVABLE = "series_observable"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass
class ResponseResult:
    value: float
    n_terms: int
    tail_bound: float
    method: ResponseMethod
    value_observable: float = math.nan
    stderr: float = math.nan


def sup_bound(phi: SpectralVector) -> float:
    return float(np.sum(np.abs(phi.coeffs)))


def effective_degree(phi: SpectralVector) -> int:
    """Largest |k| carrying a nonzero coefficient (at least 1)."""
    nz = np.nonzero(np.abs(phi.coeffs) > 0.0)[0]
    if nz.size == 0:
        return 1
    return max(1, int(np.max(np.abs(nz - phi.order))))


def tail_bound(decay: DecayEstimate, n_terms: int, prefactor: float) -> float:
    """Bound on the dropped series tail: geometric sum of the fitted
    decay envelope from term n_terms on."""
    lam = decay.lambdaprime
    return decay.dprime * prefactor * math.exp(-lam * n_terms) / (1.0 - math.exp(-lam))


@dataclass
class HatDensity:
    """Partial sum of the response series at the path anchor."""

    vec: SpectralVector
    n_terms: int
    max_term_strong: float  # max_j ||Lhat h_j||_s, the tail prefactor
    densities: dict[int, EquivariantDensity]


def hat_h(
    cache: MatrixCache,
    path: OmegaPath,
    n_terms: int,
    depth: int = 60,
    tol: float = 1e-12,
    anchor: int = 0,
    densities: dict[int, EquivariantDensity] | None = None,
) -> HatDensity:
    """Response density: sum over j < n_terms of the j-step cocycle image
    of (derivative operator applied to the density one step earlier),
    accumulated backward along the window.

    The result has zero mass up to roundoff.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    if anchor - n_terms - depth < -path.window:
        raise ValueError("window too small for requested terms and depth")
    if densities is None:
        densities = density_sweep(
            cache, path, 0.0, anchor - n_terms, anchor - 1, depth, tol
        )
    order = cache.order
    acc = constant(order, 0.0)
    max_term = 0.0
    for a in range(anchor - n_terms, anchor):
        sym = path.symbol(a)
        term = cache.derivative(sym).apply(densities[a].vec)
        max_term = max(max_term, norm(term, Space.BS))
        acc = cache.transfer(sym, 0.0).apply(acc) + term
    return HatDensity(acc, n_terms, max_term, densities)


def hat_h_forward(
    cache: MatrixCache,
    path: OmegaPath,
    hat0: SpectralVector,
    densities: dict[int, EquivariantDensity],
    k_max: int,
) -> list[SpectralVector]:
    """Push the response density forward along the path:
    hat_{a+1} = L_a hat_a + Lhat_a h_a.  Needs densities at anchors
    0..k_max-1."""
    out = [hat0]
    cur = hat0
    for a in range(k_max):
        sym = path.symbol(a)
        cur = cache.transfer(sym, 0.0).apply(cur) + cache.derivative(sym).apply(
            densities[a].vec
        )
        out.append(cur)
    return out


def _koopman_need(degree: int, n: int, phi_degree: int) -> int:
    # the composed chain is a frequency-modulated carrier at degree^(n+1):
    # each composition level adds sidebands of comparable width, so the
    # bandwidth margin must grow linearly with the chain length
    return 4 * (1 + n) * max(1, phi_degree) * degree ** (n + 1) + 512


def _koopman_grid(degree: int, n: int, phi_degree: int) -> int:
    need = _koopman_need(degree, n, phi_degree)
    g = KOOPMAN_GRID_MIN
    while g < need and g < KOOPMAN_GRID_CAP:
        g *= 2
    return g


def koopman_resolvable_terms(degree: int, phi_degree: int) -> int:
    """Number of observable-side terms whose composed bandwidth fits the
    capped grid."""
    count = 0
    while count < 200:
        if _koopman_need(degree, count, phi_degree) > KOOPMAN_GRID_CAP:
            break
        count += 1
    return max(1, count)


def observable_term(
    cache: MatrixCache,
    path: OmegaPath,
    phi: SpectralVector,
    n: int,
    h_vec: SpectralVector,
    anchor: int = 0,
) -> float:
    """Term n of the observable-side series: the integral against the
    density at anchor-(n+1) of the parameter derivative of
    (observable composed with the n-step chain composed with the
    parametrized first map), evaluated pointwise on a grid sized to the
    composed bandwidth."""
    fam = cache.family
    grid = _koopman_grid(fam.degree, n, effective_degree(phi))
    x = np.arange(grid) / grid
    sym0 = path.symbol(anchor - (n + 1))
    jet0 = map_jet(fam, sym0, 0.0, x)
    z = jet0.T
    deriv = np.ones(grid)
    for k in range(n):
        jet = map_jet(fam, path.symbol(anchor - n + k), 0.0, z)
        deriv = deriv * jet.Tx
        z = jet.T
    phi_prime = evaluate_at(phi, z, deriv=1).real
    hvals = grid_eval(h_vec, grid).real
    integrand = phi_prime * deriv * jet0.Te * hvals
    return math.fsum(integrand.tolist()) / grid


def choose_n_terms(
    decay: DecayEstimate,
    prefactor: float,
    target: float = TAIL_TARGET,
    cap: int = 200,
) -> int:
    n = 1
    while n < cap and tail_bound(decay, n, prefactor) > target:
        n += 1
    return n


def quenched_response(
    cache: MatrixCache,
    path: OmegaPath,
    phi: SpectralVector,
    decay: DecayEstimate,
    n_terms: int | None = None,
    depth: int = 60,
    tol: float = 1e-12,
    observable_side: bool = True,
    anchor: int = 0,
) -> ResponseResult:
    """Parameter derivative of the observable average against the anchor
    density, by the response series; optionally cross-checked against the
    observable-side evaluation.

    Raises CrossCheckError when the two routes disagree beyond ten times
    the series tail bound.
    """
    phi_sup = sup_bound(phi)
    if n_terms is None:
        # probe the first term to scale the tail prefactor
        probe = hat_h(cache, path, 1, depth, tol, anchor)
        n_terms = choose_n_terms(decay, max(probe.max_term_strong, 1e-6) * phi_sup)
        max_allowed = path.window - depth + anchor
        if n_terms > max_allowed:
            raise ValueError(
                f"adaptive n_terms={n_terms} exceeds window headroom {max_allowed}"
            )
    hat = hat_h(cache, path, n_terms, depth, tol, anchor)
    value = pair(phi, hat.vec).real
    bound = tail_bound(decay, n_terms, hat.max_term_strong * phi_sup)
    result = ResponseResult(value, n_terms, bound, ResponseMethod.SERIES_HAT_H)
    if observable_side:
        # the pointwise route resolves the composed bandwidth only up to
        # the grid cap, so the identity check runs at the common
        # truncation both routes can evaluate exactly
        m = min(n_terms, koopman_resolvable_terms(cache.family.degree, effective_degree(phi)))
        total = 0.0
        for n in range(m):
            h_vec = hat.densities[anchor - (n + 1)].vec
            total += observable_term(cache, path, phi, n, h_vec, anchor)
        result.value_observable = total
        if m == n_terms:
            series_at_m = value
            bound_m = bound
        else:
            hat_m = hat_h(cache, path, m, depth, tol, anchor, densities=hat.densities)
            series_at_m = pair(phi, hat_m.vec).real
            bound_m = tail_bound(decay, m, hat.max_term_strong * phi_sup)
        if abs(series_at_m - total) > 10.0 * max(bound_m, 1e-14):
            raise CrossCheckError(
                f"series value {series_at_m:.6e} vs observable-side {total:.6e} "
                f"at {m} terms differ beyond 10 * tail bound {bound_m:.3e}"
            )
    return result


def fd_response(
    cache: MatrixCache,
    path: OmegaPath,
    phi: SpectralVector,
    eps_fd: float = 1e-3,
    depth: int = 60,
    tol: float = 1e-13,
    anchor: int = 0,
) -> float:
    """Finite-difference oracle: central differences of the observable
    average in the parameter, Richardson-extrapolated over step halving."""

    def central(e: float) -> float:
        hp = pullback_density(cache, path, +e, depth, tol, anchor)
        hm = pullback_density(cache, path, -e, depth, tol, anchor)
        return (pair(phi, hp.vec).real - pair(phi, hm.vec).real) / (2.0 * e)

    d1 = central(eps_fd)
    d2 = central(eps_fd / 2.0)
    return (4.0 * d2 - d1) / 3.0


def observable_for(observables: list[SpectralVector], symbol) -> SpectralVector:
    if isinstance(symbol, (int, np.integer)) and len(observables) > 1:
        return observables[int(symbol)]
    return observables[0]


@dataclass
class AnnealedResponse:
    value: float
    stderr: float
    fd_value: float
    fd_stderr: float
    paired_se: float
    n_terms: int
    tail_bound: float
    rows: list  # (draw, symbol0, value_series, value_fd)


def annealed_response(
    cache: MatrixCache,
    driving: DrivingSystem,
    observables: list[SpectralVector],
    samples: int,
    decay: DecayEstimate,
    n_terms: int | None = None,
    depth: int = 60,
    tol: float = 1e-12,
    eps_fd: float = 1e-3,
    with_fd: bool = True,
    mapper=map,
) -> AnnealedResponse:
    """Response of the path-averaged observable mean: Monte Carlo average
    of the quenched series over sampled paths, with the paired
    finite-difference estimate over the same paths."""
    if n_terms is None:
        probe_path = sample_path(driving, depth + 2, 0)
        probe = hat_h(cache, probe_path, 1, depth, tol)
        phi_sup = max(sup_bound(phi) for phi in observables)
        n_terms = choose_n_terms(decay, max(probe.max_term_strong, 1e-6) * phi_sup)
    window = n_terms + depth + 1

    def one_path(draw: int):
        path = sample_path(driving, window, draw)
        phi = observable_for(observables, path.symbol(0))
        res = quenched_response(
            cache, path, phi, decay, n_terms, depth, tol, observable_side=False
        )
        fd = fd_response(cache, path, phi, eps_fd, depth, tol) if with_fd else math.nan
        return (draw, path.symbol(0), res.value, fd, res.tail_bound)

    rows = list(mapper(one_path, range(samples)))
    vals = np.array([r[2] for r in rows])
    fds = np.array([r[3] for r in rows])
    value = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    if with_fd:
        fd_value = float(np.mean(fds))
        fd_stderr = float(np.std(fds, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
        diffs = vals - fds
        paired = float(np.std(diffs, ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    else:
        fd_value = math.nan
        fd_stderr = math.nan
        paired = math.nan
    bound = max(r[4] for r in rows)
    return AnnealedResponse(
        value, stderr, fd_value, fd_stderr, paired, n_terms, bound,
        [r[:4] for r in rows],
    )


@dataclass
class RemainderRow:
    eps: float
    path_id: int
    remainder_w: float


def remainder_curve(
    cache: MatrixCache,
    driving: DrivingSystem,
    eps_list: list[float],
    samples: int,
    decay: DecayEstimate,
    n_terms: int | None = None,
    depth: int = 60,
    tol: float = 1e-12,
    mapper=map,
) -> tuple[dict[float, float], list[RemainderRow]]:
    """sup over sampled paths of the weak norm of
    (perturbed - unperturbed density)/eps - response density,
    per eps in eps_list.  The first-order remainder of the response
    theorem; decreases to zero as eps -> 0 when the series is right."""
    if n_terms is None:
        probe_path = sample_path(driving, depth + 2, 0)
        probe = hat_h(cache, probe_path, 1, depth, tol)
        n_terms = choose_n_terms(decay, max(probe.max_term_strong, 1e-6))
    window = max(n_terms + depth + 1, depth + 1)

    def one_path(draw: int) -> list[RemainderRow]:
        path = sample_path(driving, window, draw)
        base = pullback_density(cache, path, 0.0, depth, tol)
        hat = hat_h(cache, path, n_terms, depth, tol)
        rows = []
        for e in eps_list:
            dens = pullback_density(cache, path, e, depth, tol)
            diff = (dens.vec - base.vec) * (1.0 / e) - hat.vec
            rows.append(RemainderRow(e, draw, norm(diff, Space.BW)))
        return rows

    rows: list[RemainderRow] = []
    for chunk in mapper(one_path, range(samples)):
        rows.extend(chunk)
    sup = {e: max(r.remainder_w for r in rows if r.eps == e) for e in eps_list}
    return sup, rows
