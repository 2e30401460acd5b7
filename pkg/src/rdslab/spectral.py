"""Truncated Fourier representation of densities and observables, and the
Fourier-Galerkin assembly of the transfer operator and its parameter
derivative.

Functions are represented by coefficients ``c_k``, ``|k| <= N``, of
``sum_k c_k exp(2 pi i k x)``.  The matrix of the transfer operator is
computed through the Koopman change of variables: entry ``(j, k)`` is the
equispaced quadrature of ``exp(-2 pi i j T(y)) exp(2 pi i k y)`` with
``oversample*(2N+1)`` nodes, which is exact up to the (geometrically
small) aliasing tail of the analytic integrand.

The norm ladder mirrors W^{3,1} ⊃ W^{2,1} ⊃ W^{1,1} (strong-strong,
strong, weak); coefficient-exact H^k norms are exposed as a secondary
readout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .maps import TWO_PI, FamilyKind, MapFamily, Symbol, map_jet, weight_jet


class Space(Enum):
    """Sobolev ladder; the value is the W^{k,1} differentiation order."""

    BSS = 3
    BS = 2
    BW = 1


class MatrixKind(Enum):
    TRANSFER = "transfer"
    DERIVATIVE = "derivative"


@dataclass
class SpectralVector:
    """Fourier coefficients c_k for |k| <= order; index k+order."""

    coeffs: np.ndarray
    order: int

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (2 * self.order + 1,):
            raise ValueError("coefficient array must have length 2*order+1")

    @property
    def mass(self) -> complex:
        """c_0, the integral of the represented function."""
        return self.coeffs[self.order]

    def __add__(self, other: "SpectralVector") -> "SpectralVector":
        return SpectralVector(self.coeffs + other.coeffs, self.order)

    def __sub__(self, other: "SpectralVector") -> "SpectralVector":
        return SpectralVector(self.coeffs - other.coeffs, self.order)

    def __mul__(self, scalar) -> "SpectralVector":
        return SpectralVector(self.coeffs * scalar, self.order)

    __rmul__ = __mul__

    def copy(self) -> "SpectralVector":
        return SpectralVector(self.coeffs.copy(), self.order)


def constant(order: int, value: float = 1.0) -> SpectralVector:
    c = np.zeros(2 * order + 1, dtype=complex)
    c[order] = value
    return SpectralVector(c, order)


def basis(order: int, k: int) -> SpectralVector:
    """The single mode exp(2 pi i k x)."""
    c = np.zeros(2 * order + 1, dtype=complex)
    c[order + k] = 1.0
    return SpectralVector(c, order)


def from_trigpoly(p, order: int) -> SpectralVector:
    return SpectralVector(p.fourier_coefficients(order), order)


def resize(v: SpectralVector, order: int) -> SpectralVector:
    """Zero-pad or truncate to the requested order."""
    if order == v.order:
        return v.copy()
    c = np.zeros(2 * order + 1, dtype=complex)
    m = min(order, v.order)
    c[order - m : order + m + 1] = v.coeffs[v.order - m : v.order + m + 1]
    return SpectralVector(c, order)


def derivative(v: SpectralVector, n: int = 1) -> SpectralVector:
    ks = np.arange(-v.order, v.order + 1)
    return SpectralVector(v.coeffs * (TWO_PI * 1j * ks) ** n, v.order)


def grid_eval(v: SpectralVector, npoints: int, deriv: int = 0) -> np.ndarray:
    """Values of the deriv-th derivative on the grid m/npoints (complex;
    imaginary part is roundoff for conjugate-symmetric input)."""
    if npoints < 2 * v.order + 1:
        raise ValueError("grid too coarse for the truncation order")
    ks = np.arange(-v.order, v.order + 1)
    c = v.coeffs * (TWO_PI * 1j * ks) ** deriv if deriv else v.coeffs
    spectrum = np.zeros(npoints, dtype=complex)
    spectrum[ks % npoints] = c
    return np.fft.ifft(spectrum) * npoints


def evaluate_at(v: SpectralVector, x, deriv: int = 0) -> np.ndarray:
    """Evaluate at arbitrary points (direct mode sum; for low-degree
    observables on scattered points)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=complex)
    for k in range(-v.order, v.order + 1):
        c = v.coeffs[v.order + k]
        if c != 0.0:
            out = out + c * (TWO_PI * 1j * k) ** deriv * np.exp(TWO_PI * 1j * k * x)
    return out


def pair(phi: SpectralVector, h: SpectralVector) -> complex:
    """Duality pairing ``h(phi) = int phi h dx = sum_k phi_{-k} h_k``."""
    if phi.order != h.order:
        m = max(phi.order, h.order)
        phi, h = resize(phi, m), resize(h, m)
    return complex(np.dot(phi.coeffs[::-1], h.coeffs))


def convolve(u: SpectralVector, v: SpectralVector, order: int | None = None) -> SpectralVector:
    """Coefficients of the pointwise product, truncated to ``order``
    (default: max of the input orders)."""
    full = np.convolve(u.coeffs, v.coeffs)
    total = u.order + v.order
    if order is None:
        order = max(u.order, v.order)
    c = np.zeros(2 * order + 1, dtype=complex)
    m = min(order, total)
    c[order - m : order + m + 1] = full[total - m : total + m + 1]
    return SpectralVector(c, order)


def conjugate_symmetry_defect(v: SpectralVector) -> float:
    """max_k |c_{-k} - conj(c_k)|; zero for real-valued functions."""
    return float(np.max(np.abs(v.coeffs[::-1] - np.conj(v.coeffs))))


# -- norms ----------------------------------------------------------------

NORM_GRID_FACTOR = 8


def wk1_norm(v: SpectralVector, k: int) -> float:
    """W^{k,1} norm: sum over j <= k of the integral of |v^{(j)}|,
    by the periodic trapezoid rule on NORM_GRID_FACTOR*(2N+1) points."""
    npoints = NORM_GRID_FACTOR * (2 * v.order + 1)
    total = 0.0
    for j in range(k + 1):
        total += float(np.mean(np.abs(grid_eval(v, npoints, j))))
    return total


def hk_norm(v: SpectralVector, k: int) -> float:
    """Coefficient-exact companion norm:
    sqrt( sum_m sum_{j<=k} (1+m^2)^j |c_m|^2 )."""
    ms = np.arange(-v.order, v.order + 1)
    w = sum((1.0 + ms.astype(float) ** 2) ** j for j in range(k + 1))
    return float(np.sqrt(np.sum(w * np.abs(v.coeffs) ** 2)))


def norm(v: SpectralVector, space: Space) -> float:
    return wk1_norm(v, space.value)


# -- operator assembly -----------------------------------------------------


@dataclass
class TransferMatrix:
    """Dense Fourier-Galerkin matrix of L_{symbol,eps} (kind TRANSFER) or
    of its eps-derivative at 0 (kind DERIVATIVE)."""

    data: np.ndarray
    order: int
    kind: MatrixKind
    symbol: Symbol
    eps: float

    def apply(self, v: SpectralVector) -> SpectralVector:
        if v.order != self.order:
            raise ValueError("order mismatch between matrix and vector")
        return SpectralVector(self.data @ v.coeffs, self.order)


def _quadrature_nodes(order: int, oversample: int) -> np.ndarray:
    if oversample < 4:
        raise ValueError("oversample must be >= 4")
    npoints = oversample * (2 * order + 1)
    return np.arange(npoints) / npoints


def assemble_transfer(
    family: MapFamily, symbol: Symbol, eps: float, order: int, oversample: int = 8
) -> TransferMatrix:
    """Matrix entries (j,k) = (1/M) sum_m exp(-2 pi i j T(y_m)) exp(2 pi i k y_m)."""
    y = _quadrature_nodes(order, oversample)
    npts = y.size
    t = map_jet(family, symbol, eps, y).T
    ks = np.arange(-order, order + 1)
    u = np.exp(-TWO_PI * 1j * np.outer(ks, t))
    rows = np.fft.ifft(u, axis=1)
    data = rows[:, ks % npts]
    return TransferMatrix(data, order, MatrixKind.TRANSFER, symbol, float(eps))


def assemble_derivative(
    family: MapFamily, symbol: Symbol, order: int, oversample: int = 8
) -> TransferMatrix:
    """Matrix of phi -> L(J phi + v phi') at eps = 0, with (J, v) from the
    weight jet.  Rows with j = 0 vanish (outputs have zero mean)."""
    y = _quadrature_nodes(order, oversample)
    npts = y.size
    jet = map_jet(family, symbol, 0.0, y)
    _, J, v = weight_jet(family, symbol, 0.0, y)
    ks = np.arange(-order, order + 1)
    u = np.exp(-TWO_PI * 1j * np.outer(ks, jet.T))
    part_j = np.fft.ifft(u * J[None, :], axis=1)[:, ks % npts]
    part_v = np.fft.ifft(u * v[None, :], axis=1)[:, ks % npts]
    data = part_j + part_v * (TWO_PI * 1j * ks)[None, :]
    return TransferMatrix(data, order, MatrixKind.DERIVATIVE, symbol, 0.0)


def multiplication_matrix(p_coeffs: SpectralVector, order: int) -> np.ndarray:
    """Matrix of pointwise multiplication by the trig polynomial with the
    given coefficients, truncated to |j|,|k| <= order."""
    src = resize(p_coeffs, 2 * order)
    ks = np.arange(-order, order + 1)
    diff = ks[:, None] - ks[None, :]
    return src.coeffs[diff + src.order]


def assemble_derivative_composed(
    family: MapFamily, symbol: Symbol, order: int, oversample: int = 8
) -> TransferMatrix:
    """Alternative derivative-operator assembly for composed families:
    phi -> -(L(phi) * S)', valid when the perturbation acts by
    post-composition with Id + eps*S.  Used as a cross-check against
    ``assemble_derivative``.

    The composition is carried out on a window padded by deg(S) so that
    the cropped central block holds the exact truncated entries."""
    if family.kind is not FamilyKind.COMPOSED:
        raise ValueError("composed-form assembly requires a composed family")
    pad = family.perturbation[0].degree
    wide = order + pad
    L = assemble_transfer(family, symbol, 0.0, wide, oversample)
    smat = multiplication_matrix(from_trigpoly_s(family, wide), wide)
    ks = np.arange(-wide, wide + 1)
    deriv = np.diag(TWO_PI * 1j * ks)
    data = (-deriv @ (smat @ L.data))[pad : pad + 2 * order + 1,
                                      pad : pad + 2 * order + 1]
    return TransferMatrix(data, order, MatrixKind.DERIVATIVE, symbol, 0.0)


def from_trigpoly_s(family: MapFamily, order: int) -> SpectralVector:
    return SpectralVector(family.perturbation[0].fourier_coefficients(order), order)


def mass_row_defect(mat: TransferMatrix) -> float:
    """Deviation of the k-row j=0 from its exact value: the unit row
    delta_{0k} for TRANSFER, the zero row for DERIVATIVE."""
    row = mat.data[mat.order].copy()
    if mat.kind is MatrixKind.TRANSFER:
        row[mat.order] -= 1.0
    return float(np.max(np.abs(row)))
