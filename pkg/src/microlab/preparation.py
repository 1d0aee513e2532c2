"""Generalized Gibbs states, parameter fitting and the prepared state.

The prepared statistical operator is ``exp(-S) / Tr exp(-S)`` where ``S``
collects the instantaneous state parameters, the preparation integrals
over ``[T, t0]`` and the boundary term at ``T``.  When the preparation
Hamiltonian couples the two regions, ``S`` splits into single-region
parts plus a cross part ``C12``; the positivity-preserving first-order
expansion in ``C12`` is ``(1 + C) rho1 (x) rho2 (1 + C^dagger)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceError, DimensionError, ExponentOverflowError, LabError
from .fock import number_op
from .kernel import (
    EXP_BOUND,
    SPECTRAL_FLOOR,
    as_matrix,
    check_hermitian,
    commutator,
    dagger,
    gauss_legendre,
    hermitian_eig,
    partial_trace,
    positive_spectrum,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelevantVariableSet:
    """Labelled Hermitian, number-conserving operators ``A_j``."""

    labels: tuple
    operators: tuple

    def __post_init__(self):
        if len(self.labels) != len(self.operators):
            raise ValueError("labels and operators differ in length")
        ops = tuple(check_hermitian(A) for A in self.operators)
        dims = {A.shape[0] for A in ops}
        if len(dims) > 1:
            raise DimensionError(f"relevant variables act on different dimensions {sorted(dims)}")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def __len__(self):
        return len(self.operators)

    @property
    def dim(self):
        return self.operators[0].shape[0]

    def check_conserving(self, N, tol=1e-10):
        """Raise unless every variable commutes with the total number ``N``."""
        for label, A in zip(self.labels, self.operators):
            gap = float(np.max(np.abs(commutator(A, N)))) if A.size else 0.0
            if gap > tol:
                raise LabError(f"relevant variable {label!r} does not conserve N (|[A, N]| = {gap:.2e})")

    def combine(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (len(self),):
            raise DimensionError(f"need {len(self)} state parameters, got shape {zeta.shape}")
        if not np.all(np.isfinite(zeta)):
            raise ValueError("state parameters must be finite")
        return sum(z * A for z, A in zip(zeta, self.operators))

    def expectations(self, rho):
        return np.array([np.real(np.trace(A @ rho)) for A in self.operators])


def _blocks_or_all(dim, blocks):
    if blocks is None:
        return [np.arange(dim)]
    return [np.asarray(b) for b in blocks]


def _block_spectrum(H, blocks):
    """Eigenpairs of a block-diagonal Hermitian matrix, block by block."""
    dim = H.shape[0]
    vals = np.empty(dim)
    V = np.zeros((dim, dim), dtype=complex)
    pos = 0
    for idx in _blocks_or_all(dim, blocks):
        lam, vec = np.linalg.eigh(H[np.ix_(idx, idx)])
        n = len(idx)
        vals[pos : pos + n] = lam
        V[idx, pos : pos + n] = vec
        pos += n
    if pos != dim:
        raise DimensionError("blocks do not partition the space")
    return vals, V


def gibbs_from_exponent(S, blocks=None, bound=EXP_BOUND):
    """Normalized ``exp(-S) / Tr exp(-S)``.

    ``blocks`` optionally lists index sets on which ``S`` is block
    diagonal (e.g. particle-number sectors); off-block entries of the
    result are then exact zeros.  The exponent is shifted by its minimum
    so evaluation never overflows; a spread above ``bound`` would
    underflow the state to reduced rank and is refused.
    """
    S = check_hermitian(S)
    E, V = _block_spectrum(S, blocks)
    spread = float(E.max() - E.min()) if E.size else 0.0
    if spread > bound:
        raise ExponentOverflowError(spread, bound)
    p = np.exp(-(E - E.min()))
    p /= p.sum()
    rho = (V * p) @ dagger(V)
    return 0.5 * (rho + dagger(rho))


def gibbs_state(variables, zeta, blocks=None):
    """Generalized Gibbs state ``exp(-sum_j zeta_j A_j) / Tr``."""
    return gibbs_from_exponent(variables.combine(zeta), blocks)


def _log_partition(E):
    m = E.min()
    return -m + np.log(np.sum(np.exp(-(E - m))))


def kubo_mori_covariance(variables, zeta, blocks=None):
    """Canonical-correlation covariance of the relevant variables.

    This is minus the Jacobian of ``zeta -> <A_j>`` (exact for
    non-commuting variables; reduces to the ordinary covariance when the
    variables commute).  Returns ``(cov, expectations, log_Z)``.
    """
    S = variables.combine(zeta)
    E, V = _block_spectrum(check_hermitian(S), blocks)
    logZ = _log_partition(E)
    p = np.exp(-E - logZ)
    delta = E[None, :] - E[:, None]      # E_b - E_a
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        g_pos = np.where(np.abs(delta) > 1e-12, -np.expm1(-delta) / delta, 1.0)
        g_neg = np.where(np.abs(delta) > 1e-12, np.expm1(delta) / delta, 1.0)
        f = np.where(delta >= 0, p[:, None] * g_pos, p[None, :] * g_neg)
    rotated = [dagger(V) @ A @ V for A in variables.operators]
    mean = np.array([np.real(np.sum(np.diag(A) * p)) for A in rotated])
    n = len(rotated)
    cov = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            val = np.real(np.sum(rotated[i] * rotated[j].T * f)) - mean[i] * mean[j]
            cov[i, j] = cov[j, i] = val
    return cov, mean, logZ


@dataclass(frozen=True)
class FitResult:
    zeta: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: tuple = field(default=(), repr=False)


def fit_state_parameters(variables, targets, zeta0=None, tol=1e-8, max_iter=200,
                         blocks=None, singular_tol=1e-12):
    """Fit ``zeta`` so that ``Tr(A_j w_zeta)`` matches ``targets``.

    Damped Newton iteration on the convex function
    ``log Z(zeta) + zeta . targets`` whose gradient is the residual and
    whose Hessian is the Kubo-Mori covariance.  The covariance is checked
    symmetric positive semidefinite at each iterate.  Non-convergence is
    reported through ``FitResult.converged`` with the final residual.
    """
    targets = np.asarray(targets, dtype=float)
    n = len(variables)
    if targets.shape != (n,):
        raise DimensionError(f"need {n} targets, got shape {targets.shape}")
    zeta = np.zeros(n) if zeta0 is None else np.array(zeta0, dtype=float)

    cov, mean, logZ = kubo_mori_covariance(variables, zeta, blocks)
    ev = np.linalg.eigvalsh(cov)
    if ev[0] <= singular_tol * max(ev[-1], 1.0):
        raise LabError(
            "covariance of the relevant variables is singular "
            f"(eigenvalues {ev[0]:.3e} .. {ev[-1]:.3e}); variables are linearly dependent"
        )
    objective = logZ + zeta @ targets
    history = []
    for it in range(max_iter + 1):
        resid = mean - targets
        rnorm = float(np.max(np.abs(resid)))
        history.append(rnorm)
        if rnorm < tol:
            return FitResult(zeta, rnorm, it, True, tuple(history))
        if it == max_iter:
            break
        ev = np.linalg.eigvalsh(cov)
        if ev[0] < -1e-10 * max(1.0, ev[-1]):
            raise LabError(f"covariance lost positivity (min eigenvalue {ev[0]:.3e})")
        step = np.linalg.lstsq(cov, resid, rcond=None)[0]
        alpha = 1.0
        grad_dot = float(-(resid @ step))
        while True:
            trial = zeta + alpha * step
            try:
                c2, m2, lz2 = kubo_mori_covariance(variables, trial, blocks)
            except ExponentOverflowError:
                c2 = None
            if c2 is not None:
                obj2 = lz2 + trial @ targets
                if obj2 <= objective + 1e-4 * alpha * grad_dot or alpha < 1e-10:
                    break
            alpha *= 0.5
            if alpha < 1e-10:
                break
        if c2 is None:
            break
        zeta, cov, mean, objective = trial, c2, m2, obj2
    log.warning("state-parameter fit did not converge: residual %.3e", history[-1])
    return FitResult(zeta, history[-1], len(history) - 1, False, tuple(history))


@dataclass(frozen=True)
class PreparationChannel:
    """One preparation drive ``gamma * int A_j(t'-t0) h(t') dt'``.

    ``amplitude`` holds samples of ``h`` on the preparation grid;
    ``gamma_current`` weights the matching current term when a current
    operator is supplied for variable ``variable``.
    """

    variable: int
    gamma: float
    amplitude: np.ndarray
    gamma_current: float = 0.0


@dataclass(frozen=True)
class PreparationSpec:
    T: float
    t0: float
    steps: int
    zeta_t0: np.ndarray
    zeta_T: np.ndarray
    channels: tuple = ()
    hbar: float = 1.0

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError("preparation needs at least one step")
        if not self.t0 > self.T:
            raise ValueError("preparation interval must have t0 > T")
        for ch in self.channels:
            amp = np.asarray(ch.amplitude, dtype=float)
            if amp.shape != (int(self.steps) + 1,):
                raise DimensionError(
                    f"amplitude has {amp.size} samples, grid has {int(self.steps) + 1}"
                )
            if not np.all(np.isfinite(amp)):
                raise ValueError("preparation amplitudes must be finite")

    @property
    def grid(self):
        return np.linspace(self.T, self.t0, int(self.steps) + 1)

    def trapezoid_weights(self):
        n = int(self.steps)
        h = (self.t0 - self.T) / n
        w = np.full(n + 1, h)
        w[0] = w[-1] = 0.5 * h
        return w

    def resampled(self, steps, amplitude_fns):
        """Same preparation on a new grid; ``amplitude_fns[i](t)`` per channel."""
        grid = np.linspace(self.T, self.t0, int(steps) + 1)
        chans = tuple(
            PreparationChannel(c.variable, c.gamma, np.asarray(fn(grid), dtype=float), c.gamma_current)
            for c, fn in zip(self.channels, amplitude_fns)
        )
        return PreparationSpec(self.T, self.t0, steps, self.zeta_t0, self.zeta_T, chans, self.hbar)


def prepared_exponent(variables, prep, H, currents=None):
    """Minus-log exponent ``S`` of the prepared statistical operator.

    ``S = sum_j zeta_j(t0) A_j
          - sum_ch gamma int_T^t0 A_j(t'-t0) h(t') dt'
          - sum_ch gamma_J int_T^t0 J_j(t'-t0) h(t') dt'
          + sum_j zeta_j(T) A_j(T-t0)``

    with ``X(tau) = exp(iH tau/hbar) X exp(-iH tau/hbar)`` and the
    integrals discretized by the trapezoid rule on ``prep.grid``.
    """
    H = check_hermitian(H)
    if H.shape[0] != variables.dim:
        raise DimensionError("Hamiltonian and relevant variables differ in dimension")
    currents = [None] * len(variables) if currents is None else list(currents)
    spec = hermitian_eig(H)
    V = spec.eigenvectors
    Vd = dagger(V)
    gap = spec.eigenvalues[:, None] - spec.eigenvalues[None, :]

    def rotated(X):
        return Vd @ X @ V

    def evolved_sum(X, taus, weights):
        # sum_i w_i X(tau_i), assembled in the eigenbasis of H
        phase = sum(w * np.exp(1j * gap * tau / prep.hbar) for tau, w in zip(taus, weights))
        return V @ (rotated(X) * phase) @ Vd

    zeta_t0 = np.asarray(prep.zeta_t0, dtype=float)
    zeta_T = np.asarray(prep.zeta_T, dtype=float)
    S = variables.combine(zeta_t0)
    taus = prep.grid - prep.t0
    tw = prep.trapezoid_weights()
    for ch in prep.channels:
        amp = np.asarray(ch.amplitude, dtype=float)
        A = variables.operators[ch.variable]
        if ch.gamma:
            S = S - ch.gamma * evolved_sum(A, taus, tw * amp)
        J = currents[ch.variable]
        if ch.gamma_current and J is not None:
            S = S - ch.gamma_current * evolved_sum(check_hermitian(J), taus, tw * amp)
    if np.any(zeta_T):
        boundary = variables.combine(zeta_T)
        S = S + evolved_sum(boundary, [prep.T - prep.t0], [1.0])
    return 0.5 * (S + dagger(S))


@dataclass(frozen=True)
class ExponentSplit:
    """``S = S1 + S2 + C12`` on a product basis.

    ``S1``, ``S2`` and ``C12`` act on the full space; ``local1`` and
    ``local2`` are the region-space matrices with ``S1 = local1 (x) 1`` and
    ``S2 = 1 (x) local2``.
    """

    S1: np.ndarray
    S2: np.ndarray
    C12: np.ndarray
    local1: np.ndarray
    local2: np.ndarray

    def reconstruct(self):
        return self.S1 + self.S2 + self.C12


def split_exponent(S, basis):
    """Separate single-region content from the cross-region remainder.

    Single-region parts are the Hilbert-Schmidt projections onto
    ``X (x) 1`` and ``1 (x) Y``, i.e. scaled partial traces; everything
    sector-shifting or genuinely mixed lands in ``C12``, whose partial
    traces over either region vanish.  The identity component is carried
    by ``S1``.
    """
    S = check_hermitian(S)
    if not basis.is_product:
        raise DimensionError("exponent splitting needs a product truncation")
    d1, d2 = basis.region_dims
    if S.shape[0] != d1 * d2:
        raise DimensionError(f"exponent dim {S.shape[0]} != basis dim {d1 * d2}")
    c = np.trace(S) / (d1 * d2)
    local1 = partial_trace(S, (d1, d2), keep=1) / d2
    local2 = partial_trace(S, (d1, d2), keep=2) / d1 - c * np.eye(d2)
    local1 = 0.5 * (local1 + dagger(local1))
    local2 = 0.5 * (local2 + dagger(local2))
    S1 = np.kron(local1, np.eye(d2))
    S2 = np.kron(np.eye(d1), local2)
    return ExponentSplit(S1, S2, S - S1 - S2, local1, local2)


def _product_spectrum(rho1, rho2, floor):
    s1 = positive_spectrum(rho1, floor)
    s2 = positive_spectrum(rho2, floor)
    lam = np.kron(s1.eigenvalues, s2.eigenvalues)
    V = np.kron(s1.eigenvectors, s2.eigenvectors)
    return lam, V


def curly_C(rho1, rho2, C12, rule=None, floor=SPECTRAL_FLOOR):
    """``int_0^{1/2} R^u C12 R^{-u} du`` with ``R = rho1 (x) rho2``.

    Evaluated with ``rule`` (default 64-node Gauss-Legendre on [0, 1/2]);
    in the eigenbasis of ``R`` each node is an entrywise factor
    ``(lambda_a / lambda_b)^u``.
    """
    rule = gauss_legendre() if rule is None else rule
    lam, V = _product_spectrum(rho1, rho2, floor)
    C12 = as_matrix(C12)
    if C12.shape[0] != len(lam):
        raise DimensionError(f"cross term dim {C12.shape[0]} != product dim {len(lam)}")
    log_ratio = np.log(lam)[:, None] - np.log(lam)[None, :]
    kernel = sum(w * np.exp(u * log_ratio) for u, w in zip(rule.nodes, rule.weights))
    return V @ ((dagger(V) @ C12 @ V) * kernel) @ dagger(V)


def _sqrt_factor(rho1, rho2):
    s1 = hermitian_eig(rho1)
    s2 = hermitian_eig(rho2)
    lam = np.clip(np.kron(s1.eigenvalues, s2.eigenvalues), 0.0, None)
    V = np.kron(s1.eigenvectors, s2.eigenvectors)
    return V * np.sqrt(lam)


def expanded_state(rho1, rho2, C):
    """``(1 + C) rho1 (x) rho2 (1 + C^dagger) / Tr[...]``.

    Built as ``G G^dagger`` with ``G = (1 + C) (rho1 (x) rho2)^{1/2}``, so the
    result is positive semidefinite for any ``C``.
    """
    C = as_matrix(C)
    root = _sqrt_factor(rho1, rho2)
    if C.shape[0] != root.shape[0]:
        raise DimensionError(f"C dim {C.shape[0]} != product dim {root.shape[0]}")
    G = root + C @ root
    Y = G @ dagger(G)
    tr = np.real(np.trace(Y))
    if not tr > 0:
        raise LabError("expanded state has zero normalization")
    Y = Y / tr
    return 0.5 * (Y + dagger(Y))


def first_order_transfer(split, rule=None):
    """First-order correlation operator of ``exp(-(S1 + S2 + C12))``.

    The exponent enters with a minus sign, so the factor multiplying
    ``rho1 (x) rho2`` from the left is ``1 - curly_C(C12)``; this returns
    that ``C = -curly_C(...)`` together with the region states.
    """
    rho1 = gibbs_from_exponent(split.local1)
    rho2 = gibbs_from_exponent(split.local2)
    C = -curly_C(rho1, rho2, split.C12, rule)
    return C, rho1, rho2


def exact_state(S):
    """``exp(-S) / Tr exp(-S)``."""
    return gibbs_from_exponent(S)
