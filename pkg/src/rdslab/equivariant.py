"""Equivariant densities by pullback, and the statistical-stability
experiment.

The density attached to an anchor point of the driving orbit is the limit
of applying the operator chain that ends at the anchor to the constant
density; the pullback is stopped at the first depth where the successive-
iterate gap (in the strong norm) falls below tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import DrivingSystem, MatrixCache, OmegaPath, sample_path
from .spectral import Space, SpectralVector, constant, grid_eval, hk_norm, norm

POSITIVITY_GRID = 1024


@dataclass
class EquivariantDensity:
    """Unit-mass fixed density of the operator chain ending at
    (path anchor shifted by ``anchor``, eps)."""

    vec: SpectralVector
    eps: float
    anchor: int
    n_used: int
    residual: float
    converged: bool
    grid_min: float = math.nan

    @property
    def mass(self) -> float:
        return float(self.vec.mass.real)


def _finalize(
    coeffs: np.ndarray, order: int, eps: float, anchor: int,
    n_used: int, residual: float, converged: bool,
) -> EquivariantDensity:
    c = coeffs / coeffs[order].real
    vec = SpectralVector(c, order)
    gmin = float(np.min(grid_eval(vec, POSITIVITY_GRID).real))
    return EquivariantDensity(vec, eps, anchor, n_used, residual, converged, gmin)


def pullback_density(
    cache: MatrixCache,
    path: OmegaPath,
    eps: float,
    n: int,
    tol: float = 1e-12,
    anchor: int = 0,
) -> EquivariantDensity:
    """Iterated pullback of the constant density to the given anchor.

    Returns the m-step pullback for the smallest m <= n whose successive-
    iterate gap (strong norm) is <= tol; otherwise the n-step pullback
    with ``converged=False``.
    """
    if n < 1:
        raise ValueError("pullback depth must be >= 1")
    if anchor - n < -path.window or anchor > path.window:
        raise ValueError("pullback depth exceeds the path window")
    order = cache.order
    dim = 2 * order + 1
    prod = np.eye(dim, dtype=complex)
    prev = np.zeros(dim, dtype=complex)
    prev[order] = 1.0
    col = prev
    gap = math.inf
    m = 0
    for m in range(1, n + 1):
        mat = cache.transfer(path.symbol(anchor - m), eps).data
        col = prod @ mat[:, order]
        gap = norm(SpectralVector(col - prev, order), Space.BS)
        if gap <= tol:
            return _finalize(col, order, eps, anchor, m, gap, True)
        prod = prod @ mat
        prev = col
    return _finalize(col, order, eps, anchor, n, gap, False)


def density_sweep(
    cache: MatrixCache,
    path: OmegaPath,
    eps: float,
    lo: int,
    hi: int,
    depth: int = 60,
    tol: float = 1e-12,
) -> dict[int, EquivariantDensity]:
    """Densities at every anchor in [lo, hi] from one forward sweep.

    The chain starts ``depth`` steps before ``lo``; a twin vector started
    one step later tracks the successive-iterate gap, so each recorded
    density carries its own residual.
    """
    if hi < lo:
        raise ValueError("empty anchor range")
    start = lo - depth
    if start < -path.window or hi - 1 > path.window:
        raise ValueError("sweep range exceeds the path window")
    order = cache.order
    u = constant(order)
    twin = constant(order)
    out: dict[int, EquivariantDensity] = {}
    for pos in range(start, hi):
        mat = cache.transfer(path.symbol(pos), eps)
        u = mat.apply(u)
        u = u * (1.0 / u.mass.real)
        if pos > start:
            twin = mat.apply(twin)
            twin = twin * (1.0 / twin.mass.real)
        a = pos + 1
        if a >= lo:
            gap = norm(u - twin, Space.BS)
            out[a] = _finalize(
                u.coeffs.copy(), order, eps, a, a - start, gap, gap <= tol
            )
    return out


@dataclass
class StabilityRow:
    eps: float
    path_id: int
    diff_w: float
    diff_h1: float
    residual: float
    n_used: int


@dataclass
class StabilityResult:
    """Per-(eps, path) weak-norm differences plus the scaling fits."""

    rows: list[StabilityRow]
    sup_diff: dict[float, float]
    beta: float = math.nan  # slope of log sup-diff vs log(eps |log eps|)
    log_constant: float = math.nan
    r2: float = math.nan
    slope_logeps: float = math.nan
    r2_logeps: float = math.nan
    degenerate: bool = False

    def fitted_constant(self) -> float:
        return math.exp(self.log_constant) if not math.isnan(self.log_constant) else math.nan


DEGENERATE_DIFF = 1e-12


def _fit_loglog(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    pred = intercept + slope * x
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return float(slope), float(intercept), r2


def stability_curve(
    cache: MatrixCache,
    driving: DrivingSystem,
    eps_list: list[float],
    samples: int,
    n: int = 60,
    tol: float = 1e-12,
    mapper=map,
) -> StabilityResult:
    """Statistical-stability experiment: for each eps, the max over
    sampled paths of the weak-norm distance between perturbed and
    unperturbed densities at a shared anchor, with log-log scaling fits
    against both eps|log eps| and eps."""
    if any(e == 0.0 for e in eps_list):
        raise ValueError("eps_list entries must be nonzero")
    for e in eps_list:
        cache.family.check_eps(e)

    def one_path(draw: int) -> list[StabilityRow]:
        path = sample_path(driving, n, draw)
        base = pullback_density(cache, path, 0.0, n, tol)
        rows = []
        for e in eps_list:
            dens = pullback_density(cache, path, e, n, tol)
            diff = dens.vec - base.vec
            rows.append(
                StabilityRow(
                    eps=e,
                    path_id=draw,
                    diff_w=norm(diff, Space.BW),
                    diff_h1=hk_norm(diff, 1),
                    residual=max(dens.residual, base.residual),
                    n_used=max(dens.n_used, base.n_used),
                )
            )
        return rows

    rows: list[StabilityRow] = []
    for chunk in mapper(one_path, range(samples)):
        rows.extend(chunk)

    sup = {e: max(r.diff_w for r in rows if r.eps == e) for e in eps_list}
    result = StabilityResult(rows=rows, sup_diff=sup)
    diffs = np.array([sup[e] for e in eps_list])
    if np.all(diffs <= DEGENERATE_DIFF) or len(eps_list) < 2:
        result.degenerate = bool(np.all(diffs <= DEGENERATE_DIFF))
        return result
    eps_arr = np.array(eps_list, dtype=float)
    y = np.log(np.maximum(diffs, 1e-300))
    x_mod = np.log(np.abs(eps_arr) * np.abs(np.log(np.abs(eps_arr))))
    x_eps = np.log(np.abs(eps_arr))
    result.beta, result.log_constant, result.r2 = _fit_loglog(x_mod, y)
    result.slope_logeps, _, result.r2_logeps = _fit_loglog(x_eps, y)
    return result
