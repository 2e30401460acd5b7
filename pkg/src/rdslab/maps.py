"""Parametrized families of smooth expanding circle maps.

A family is a finite set of base maps ``T_s(x) = d*x + p_s(x) (mod 1)``
(``p_s`` a real trigonometric polynomial, ``d >= 2`` the common winding
number) together with a perturbation that switches on with the parameter
``eps``:

* composed kind:  ``T_{s,eps} = (Id + eps*S) o T_s``
* additive kind:  ``T_{s,eps}(x) = T_s(x) + eps*q_s(x) (mod 1)``

Driving symbols are either integers (indices into the base-map list) or
floats, in which case the single base map is rigidly shifted by the symbol
value (rotation-driven families).  All pointwise quantities — the map, its
space and parameter derivatives, the transfer weight and the coefficients
of the derivative operator — are evaluated here in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, HypothesisFailureError

TWO_PI = 2.0 * math.pi

Symbol = Union[int, float]

# Expansion certificate grid; Lipschitz-corrected minimum over this grid
# must exceed 1.
CERT_GRID = 4096


class FamilyKind(Enum):
    COMPOSED = "composed"
    ADDITIVE = "additive"


@dataclass(frozen=True)
class TrigPoly:
    """Real trigonometric polynomial
    ``p(x) = const + sum_j cos_j*cos(2 pi j x) + sin_j*sin(2 pi j x)``.
    """

    const: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    @property
    def degree(self) -> int:
        return max(len(self.cos), len(self.sin))

    def __call__(self, x, deriv: int = 0):
        """Evaluate the ``deriv``-th derivative at ``x`` (scalar or array)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if deriv == 0:
            out = out + self.const
        # d/dx cos(2pi j x) = (2pi j) cos(2pi j x + pi/2), same phase shift
        # for sin, so one rotation per derivative order.
        phase = deriv * (math.pi / 2.0)
        for j, a in enumerate(self.cos, start=1):
            if a != 0.0:
                out = out + a * (TWO_PI * j) ** deriv * np.cos(TWO_PI * j * x + phase)
        for j, b in enumerate(self.sin, start=1):
            if b != 0.0:
                out = out + b * (TWO_PI * j) ** deriv * np.sin(TWO_PI * j * x + phase)
        return out

    def sup_bound(self, deriv: int = 0) -> float:
        """Coefficient bound on ``sup |p^(deriv)|`` (triangle inequality)."""
        total = abs(self.const) if deriv == 0 else 0.0
        for j, a in enumerate(self.cos, start=1):
            total += abs(a) * (TWO_PI * j) ** deriv
        for j, b in enumerate(self.sin, start=1):
            total += abs(b) * (TWO_PI * j) ** deriv
        return total

    def fourier_coefficients(self, order: int) -> np.ndarray:
        """Coefficients c_k, |k| <= order, of p = sum_k c_k exp(2 pi i k x)."""
        if self.degree > order:
            raise ValueError(f"degree {self.degree} exceeds order {order}")
        c = np.zeros(2 * order + 1, dtype=complex)
        c[order] = self.const
        for j, a in enumerate(self.cos, start=1):
            c[order + j] += 0.5 * a
            c[order - j] += 0.5 * a
        for j, b in enumerate(self.sin, start=1):
            c[order + j] += -0.5j * b
            c[order - j] += 0.5j * b
        return c


@dataclass(frozen=True)
class MapJet:
    """Pointwise jet of ``T_{s,eps}``: image point (mod 1), space
    derivative, eps derivative, mixed and second space derivatives."""

    x: np.ndarray
    T: np.ndarray
    Tx: np.ndarray
    Te: np.ndarray
    Txe: np.ndarray
    Txx: np.ndarray


class MapFamily:
    """Validated family of expanding circle maps with parameter interval
    ``[-eps_max, eps_max]``.

    Construction runs the expansion certificate: a Lipschitz-corrected
    grid bound on ``T'`` over all symbols and the whole parameter
    interval must exceed 1.  The certified bound is stored as
    ``expansion``.
    """

    def __init__(
        self,
        kind: FamilyKind,
        degree: int,
        base: Sequence[TrigPoly],
        perturbation: Sequence[TrigPoly],
        eps_max: float,
    ):
        if degree < 2:
            raise ConfigError(f"winding number must be >= 2, got {degree}")
        if eps_max < 0:
            raise ConfigError("eps_max must be nonnegative")
        if not base:
            raise ConfigError("at least one base map is required")
        if kind is FamilyKind.COMPOSED and len(perturbation) != 1:
            raise ConfigError("composed kind takes exactly one perturbation")
        if kind is FamilyKind.ADDITIVE and len(perturbation) not in (1, len(base)):
            raise ConfigError(
                "additive kind takes one shared perturbation or one per symbol"
            )
        self.kind = kind
        self.degree = int(degree)
        self.base = tuple(base)
        self.perturbation = tuple(perturbation)
        self.eps_max = float(eps_max)
        self.expansion = self._certify_expansion()

    # -- symbol handling -------------------------------------------------

    def _resolve(self, symbol: Symbol) -> tuple[TrigPoly, float]:
        """Return (base polynomial, rigid drift) for a driving symbol."""
        if isinstance(symbol, (int, np.integer)):
            s = int(symbol)
            if not 0 <= s < len(self.base):
                raise ValueError(f"symbol {s} out of range for {len(self.base)} base maps")
            return self.base[s], 0.0
        drift = float(symbol)
        if len(self.base) != 1:
            raise ValueError("drift symbols require a single base map")
        return self.base[0], drift

    def _perturbation_for(self, symbol: Symbol) -> TrigPoly:
        if self.kind is FamilyKind.COMPOSED or len(self.perturbation) == 1:
            return self.perturbation[0]
        return self.perturbation[int(symbol)]

    def check_eps(self, eps: float) -> float:
        eps = float(eps)
        if abs(eps) > self.eps_max * (1.0 + 1e-12):
            raise ValueError(f"eps={eps} outside [-{self.eps_max}, {self.eps_max}]")
        return eps

    # -- expansion certificate -------------------------------------------

    def _certify_expansion(self) -> float:
        lam = math.inf
        x = np.arange(CERT_GRID) / CERT_GRID
        half_h = 0.5 / CERT_GRID
        e = self.eps_max
        for s in range(len(self.base)):
            p = self.base[s]
            bx = self.degree + p(x, 1)
            if self.kind is FamilyKind.COMPOSED:
                S = self.perturbation[0]
                # T' = B'(x) * (1 + eps*S'(Bx)); minimum over |eps| <= e is
                # B' - |B'| e |S'(Bx)| pointwise.
                b = self.degree * x + p(x)
                lo = bx - np.abs(bx) * e * np.abs(S(b, 1))
                # second-derivative bound for the Lipschitz correction
                s1 = S.sup_bound(1)
                bpp = p.sup_bound(2)
                bx_sup = self.degree + p.sup_bound(1)
                txx = bpp * (1.0 + e * s1) + bx_sup**2 * e * S.sup_bound(2)
            else:
                q = self._perturbation_for(s)
                lo = bx - e * np.abs(q(x, 1))
                txx = p.sup_bound(2) + e * q.sup_bound(2)
            grid_min = float(np.min(lo))
            lam = min(lam, grid_min - txx * half_h)
        if lam <= 1.0:
            raise ConfigError(
                f"expansion certificate failed: certified min |T'| = {lam:.6f} <= 1"
            )
        return lam


def map_jet(family: MapFamily, symbol: Symbol, eps: float, x) -> MapJet:
    """Closed-form jet of ``T_{symbol,eps}`` at ``x`` (scalar or array).

    The image point is reduced mod 1; all derivatives are exact
    trigonometric evaluations.
    """
    eps = family.check_eps(eps)
    p, drift = family._resolve(symbol)
    x = np.asarray(x, dtype=float)
    b = family.degree * x + p(x) + drift
    bx = family.degree + p(x, 1)
    bxx = p(x, 2)
    if family.kind is FamilyKind.COMPOSED:
        S = family.perturbation[0]
        sb = S(b)
        sb1 = S(b, 1)
        sb2 = S(b, 2)
        T = b + eps * sb
        Tx = bx * (1.0 + eps * sb1)
        Te = sb
        Txe = sb1 * bx
        Txx = bxx * (1.0 + eps * sb1) + bx**2 * eps * sb2
    else:
        q = family._perturbation_for(symbol)
        T = b + eps * q(x)
        Tx = bx + eps * q(x, 1)
        Te = q(x)
        Txe = q(x, 1)
        Txx = bxx + eps * q(x, 2)
    return MapJet(x=x, T=np.mod(T, 1.0), Tx=Tx, Te=Te, Txe=Txe, Txx=Txx)


def map_lift(family: MapFamily, symbol: Symbol, eps: float, x) -> np.ndarray:
    """Lift of the map to the real line (no mod-1 reduction); strictly
    increasing with total increment ``degree`` over one period."""
    eps = family.check_eps(eps)
    p, drift = family._resolve(symbol)
    x = np.asarray(x, dtype=float)
    b = family.degree * x + p(x) + drift
    if family.kind is FamilyKind.COMPOSED:
        return b + eps * family.perturbation[0](b)
    return b + eps * family._perturbation_for(symbol)(x)


def map_point(family: MapFamily, symbol: Symbol, eps: float, x) -> np.ndarray:
    """Image point(s) on the circle; cheaper than a full jet."""
    return np.mod(map_lift(family, symbol, eps, x), 1.0)


def weight_jet(family: MapFamily, symbol: Symbol, eps: float, x):
    """Transfer weight ``g = 1/|T'|`` together with the coefficients of
    the derivative operator: ``J = (d_eps g + v g') / g`` and the scalar
    field ``v`` of the derivation ``phi -> v phi'``.

    In one dimension ``v = -Te/Tx`` and ``J`` collapses to ``v'``.
    """
    jet = map_jet(family, symbol, eps, x)
    g = 1.0 / np.abs(jet.Tx)
    v = -jet.Te / jet.Tx
    J = (jet.Te * jet.Txx - jet.Txe * jet.Tx) / jet.Tx**2
    return g, J, v


def branch_preimages(
    family: MapFamily,
    symbol: Symbol,
    eps: float,
    x,
    residual_tol: float = 1e-13,
    max_newton: int = 60,
) -> np.ndarray:
    """All ``degree`` preimages of ``x`` under ``T_{symbol,eps}``.

    Each monotone branch is bracketed by bisection and polished by Newton.
    For array input of shape (n,) the result has shape (degree, n).

    Raises HypothesisFailureError if Newton fails to reach the residual
    tolerance (which signals a violated expansion invariant).
    """
    eps = family.check_eps(eps)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = family.degree
    t0 = float(map_lift(family, symbol, eps, 0.0))
    # branch m: solve lift(y) = x + k_m, with the d integers k_m making the
    # target fall in [t0, t0 + d)
    k0 = np.ceil(t0 - x)
    out = np.empty((d, x.size), dtype=float)
    for m in range(d):
        target = x + k0 + m
        lo = np.zeros_like(x)
        hi = np.ones_like(x)
        for _ in range(45):
            mid = 0.5 * (lo + hi)
            too_low = map_lift(family, symbol, eps, mid) < target
            lo = np.where(too_low, mid, lo)
            hi = np.where(too_low, hi, mid)
        y = 0.5 * (lo + hi)
        for _ in range(max_newton):
            jet = map_jet(family, symbol, eps, y)
            f = map_lift(family, symbol, eps, y) - target
            if np.max(np.abs(f)) <= 0.25 * residual_tol:
                break
            y = np.clip(y - f / jet.Tx, 0.0, 1.0)
        res = np.abs(map_lift(family, symbol, eps, y) - target)
        if np.max(res) > residual_tol:
            raise HypothesisFailureError(
                f"preimage Newton stalled at residual {np.max(res):.3e}"
            )
        out[m] = np.mod(y, 1.0)
    return out


def transfer_pointwise(
    family: MapFamily, symbol: Symbol, eps: float, phi, x
) -> np.ndarray:
    """Direct branch-sum action of the transfer operator,
    ``(L phi)(x) = sum_{T y = x} phi(y)/|T'(y)|``, for a callable ``phi``.

    Reference implementation used by the spectral assembly cross-checks.
    """
    ys = branch_preimages(family, symbol, eps, x)
    total = np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
    for y in ys:
        jet = map_jet(family, symbol, eps, y)
        total = total + np.asarray(phi(y)) / np.abs(jet.Tx)
    return total
