"""Dense complex linear algebra used throughout the package.

All matrix functions go through a Hermitian eigendecomposition: every
operator exponentiated in this package is Hermitian, and the same spectrum
also yields fractional powers of positive states.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    ExponentOverflowError,
    NonHermitianError,
    SpectralFloorError,
)

HERMITIAN_TOL = 1e-10
EXP_BOUND = 700.0
SPECTRAL_FLOOR = 1e-12
DEFAULT_MAX_DIM = 4096
MAX_DIM_ENV = "MICROLAB_MAX_DIM"


def max_dim():
    """Dimension cap for Fock spaces and tensor products.

    Overridable through the ``MICROLAB_MAX_DIM`` environment variable.
    """
    raw = os.environ.get(MAX_DIM_ENV)
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise DimensionError(f"{MAX_DIM_ENV}={raw!r} is not an integer") from exc
    if value < 1:
        raise DimensionError(f"{MAX_DIM_ENV} must be positive, got {value}")
    return value


def as_matrix(M):
    """Return ``M`` as a finite, square complex array."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DimensionError("matrix has non-finite entries")
    return M


def dagger(M):
    return np.conj(M).T


def asymmetry(H):
    """Largest entry of ``|H - H^dagger|``."""
    H = np.asarray(H)
    if H.size == 0:
        return 0.0
    return float(np.max(np.abs(H - dagger(H))))


def is_hermitian(H, tol=HERMITIAN_TOL):
    return asymmetry(H) <= tol


def check_hermitian(H, tol=HERMITIAN_TOL):
    """Validate ``H`` and return its exactly Hermitian part."""
    H = as_matrix(H)
    gap = asymmetry(H)
    if gap > tol:
        raise NonHermitianError(gap, tol)
    return 0.5 * (H + dagger(H))


def commutator(A, B):
    return A @ B - B @ A


def anticommutator(A, B):
    return A @ B + B @ A


@dataclass(frozen=True)
class HermitianSpectrum:
    """Eigenvalues (ascending) and unitary eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return len(self.eigenvalues)

    def apply(self, f):
        """Matrix function ``V diag(f(lambda)) V^dagger``."""
        V = self.eigenvectors
        return (V * f(self.eigenvalues)) @ dagger(V)

    def reconstruct(self):
        return self.apply(lambda lam: lam)

    def residuals(self, H):
        """(reconstruction residual, unitarity residual), both max-abs."""
        V = self.eigenvectors
        rec = float(np.max(np.abs(self.reconstruct() - H))) if self.dim else 0.0
        uni = float(np.max(np.abs(dagger(V) @ V - np.eye(self.dim)))) if self.dim else 0.0
        return rec, uni


def hermitian_eig(H, tol=HERMITIAN_TOL):
    """Eigendecomposition of a Hermitian matrix.

    Raises :class:`NonHermitianError` carrying the offending asymmetry when
    ``max |H - H^dagger|`` exceeds ``tol``.
    """
    H = check_hermitian(H, tol)
    lam, V = np.linalg.eigh(H)
    return HermitianSpectrum(lam, V)


def hermitian_exp(H, bound=EXP_BOUND, tol=HERMITIAN_TOL):
    """``exp(H)`` for Hermitian ``H``; refuses eigenvalues above ``bound``."""
    spec = hermitian_eig(H, tol)
    if spec.dim and spec.eigenvalues[-1] > bound:
        raise ExponentOverflowError(spec.eigenvalues[-1], bound)
    return spec.apply(np.exp)


def unitary(H, t, hbar=1.0, tol=HERMITIAN_TOL):
    """Propagator ``exp(-i H t / hbar)``."""
    spec = hermitian_eig(H, tol)
    return spec.apply(lambda lam: np.exp(-1j * lam * t / hbar))


def psd_power(R, u, floor=SPECTRAL_FLOOR, tol=HERMITIAN_TOL):
    """Fractional power ``R**u`` of a positive-definite matrix, ``|u| <= 1/2``."""
    if abs(u) > 0.5 + 1e-15:
        raise ValueError(f"exponent u={u} outside [-1/2, 1/2]")
    spec = positive_spectrum(R, floor, tol)
    return spec.apply(lambda lam: lam**u)


def positive_spectrum(R, floor=SPECTRAL_FLOOR, tol=HERMITIAN_TOL):
    """Spectrum of ``R`` after checking every eigenvalue exceeds ``floor``."""
    spec = hermitian_eig(R, tol)
    if spec.dim and spec.eigenvalues[0] <= floor:
        raise SpectralFloorError(spec.eigenvalues[0], floor)
    return spec


def kron(A, B, limit=None):
    """Kronecker product with a dimension cap (default :func:`max_dim`)."""
    A = as_matrix(A)
    B = as_matrix(B)
    limit = max_dim() if limit is None else limit
    dim = A.shape[0] * B.shape[0]
    if dim > limit:
        raise DimensionError(f"tensor product dimension {dim} exceeds the cap {limit}")
    return np.kron(A, B)


def partial_trace(M, dims, keep):
    """Trace out one factor of a bipartite operator.

    ``dims`` is ``(d1, d2)`` and ``keep`` selects the surviving factor.
    """
    d1, d2 = (int(d) for d in dims)
    M = np.asarray(M)
    if M.shape != (d1 * d2, d1 * d2):
        raise DimensionError(f"matrix shape {M.shape} does not match dims ({d1}, {d2})")
    T = M.reshape(d1, d2, d1, d2)
    if keep == 1:
        return np.einsum("ajbj->ab", T)
    if keep == 2:
        return np.einsum("iaib->ab", T)
    raise ValueError(f"keep must be 1 or 2, got {keep!r}")


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights on ``[lower, upper]``."""

    nodes: np.ndarray
    weights: np.ndarray
    lower: float = 0.0
    upper: float = 0.5

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("nodes and weights must be equal-length 1D arrays")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if np.any(nodes < self.lower) or np.any(nodes > self.upper):
            raise ValueError("quadrature nodes outside the integration interval")
        length = self.upper - self.lower
        if abs(weights.sum() - length) > 1e-12 * max(1.0, length):
            raise ValueError(f"weights sum to {weights.sum()}, expected {length}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.nodes)


def gauss_legendre(n=64, lower=0.0, upper=0.5):
    """Gauss-Legendre rule with ``n`` nodes mapped onto ``[lower, upper]``."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (upper - lower)
    return QuadratureRule(lower + half * (x + 1.0), half * w, lower, upper)


def _exp_factors(spec, u):
    """``(exp(u H), exp(-u H))`` from one spectrum."""
    V = spec.eigenvectors
    Vd = dagger(V)
    plus = (V * np.exp(u * spec.eigenvalues)) @ Vd
    minus = (V * np.exp(-u * spec.eigenvalues)) @ Vd
    return plus, minus


def duhamel_factors(A, B, rule=None):
    """Exact half-interval Duhamel factorization.

    Returns ``(L, R)`` with ``exp(A + B) = L exp(A) R`` where::

        L = 1 + int_0^{1/2} exp(u(A+B)) B exp(-uA) du
        R = 1 + int_0^{1/2} exp(-uA) B exp(u(A+B)) du

    The identity is exact; the only error is the quadrature of ``rule``.
    """
    rule = gauss_legendre() if rule is None else rule
    A = check_hermitian(A)
    B = check_hermitian(B)
    sA = hermitian_eig(A)
    sAB = hermitian_eig(A + B)
    eye = np.eye(A.shape[0], dtype=complex)
    L = eye.copy()
    R = eye.copy()
    for u, w in zip(rule.nodes, rule.weights):
        eAp, eAm = _exp_factors(sA, u)
        eABp, _ = _exp_factors(sAB, u)
        L += w * (eABp @ B @ eAm)
        R += w * (eAm @ B @ eABp)
    return L, R


def first_order_duhamel(A, B, rule=None):
    """First-order truncation of :func:`duhamel_factors` in ``B``.

    ``L1 = 1 + int_0^{1/2} exp(uA) B exp(-uA) du`` and
    ``R1 = 1 + int_0^{1/2} exp(-uA) B exp(uA) du``; the error of
    ``L1 exp(A) R1`` against ``exp(A + B)`` is second order in ``B``.
    """
    rule = gauss_legendre() if rule is None else rule
    A = check_hermitian(A)
    B = check_hermitian(B)
    sA = hermitian_eig(A)
    Bt = dagger(sA.eigenvectors) @ B @ sA.eigenvectors
    diff = sA.eigenvalues[:, None] - sA.eigenvalues[None, :]
    # exp(uA) B exp(-uA) is an entrywise phase in the eigenbasis of A
    kernel = sum(w * np.exp(u * diff) for u, w in zip(rule.nodes, rule.weights))
    V = sA.eigenvectors
    eye = np.eye(A.shape[0], dtype=complex)
    L = eye + V @ (Bt * kernel) @ dagger(V)
    R = eye + V @ (Bt * kernel.T) @ dagger(V)
    return L, R
