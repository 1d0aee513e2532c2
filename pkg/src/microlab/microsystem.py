"""One-particle picture read off the transfer branch.

Region 2 acts as the source and region 1 as the detector.  The source
fixes the one-particle state ``w_hk = Tr[D_h rho2 D_k^dagger] / norm`` on
region-1 mode space; detector observables become mode-space matrices
``A_kh(t) = Tr[A U a_h^dagger U^dagger rho1_t U a_k U^dagger]``, and

    Tr[(A (x) 1) rho_t] = sigma * sum_hk A_kh(t) w_hk

on the transfer branch.  ``sigma`` equals one when the emitted states are
empty in the detector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .demixing import check_local_admissible, region_number
from .errors import DimensionError, LabError
from .fock import (
    BOSON,
    annihilators,
    creation_safe_for,
    creators,
    mode_annihilator,
    single_particle_block,
)
from .kernel import check_hermitian, dagger, hermitian_eig, unitary

STATE_TOL = 1e-12


@dataclass(frozen=True)
class OneParticleState:
    """Density matrix ``w[h, k] = <h|w|k>`` on region-1 mode space."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"one-particle state must be square, got {w.shape}")
        object.__setattr__(self, "w", w)

    def violations(self):
        """(anti-Hermitian part, negative eigenvalue depth, trace error)."""
        w = self.w
        herm = float(np.max(np.abs(w - dagger(w))))
        lam = np.linalg.eigvalsh(0.5 * (w + dagger(w)))
        return herm, float(max(0.0, -lam[0])), float(abs(np.trace(w) - 1.0))

    def validate(self, tol=STATE_TOL):
        herm, neg, tr = self.violations()
        if herm > tol or neg > tol or tr > tol:
            raise LabError(
                f"invalid one-particle state: hermiticity {herm:.2e}, negativity {neg:.2e}, trace {tr:.2e}"
            )
        return self

    @property
    def purity(self):
        return float(np.real(np.trace(self.w @ self.w)))

    @property
    def coherence(self):
        """l1 norm of the off-diagonal part in the mode basis."""
        return float(np.sum(np.abs(self.w)) - np.sum(np.abs(np.diag(self.w))))


def _region1(term):
    return term.basis.region_basis(1)


def effective_w(term, rho2):
    """One-particle state prepared by the source."""
    D = term.local_lowering
    M = len(D)
    w = np.empty((M, M), dtype=complex)
    for h in range(M):
        X = D[h] @ rho2
        for k in range(M):
            w[h, k] = np.trace(X @ dagger(D[k]))
    norm = float(np.real(sum(np.trace(dagger(Dh) @ Dh @ rho2) for Dh in D)))
    if not norm > 0:
        raise LabError("no emission channel is populated (zero normalization)")
    w = w / norm
    return OneParticleState(0.5 * (w + dagger(w))).validate()


@dataclass(frozen=True)
class TransferredObservable:
    matrix: np.ndarray   # matrix[k, h] = A_kh(t)
    time: float


def _heisenberg(A1, H1, t, hbar):
    """``U^dagger A U`` with ``U = exp(-i H1 t / hbar)``."""
    if t == 0:
        return np.asarray(A1, dtype=complex)
    U = unitary(H1, t, hbar)
    return dagger(U) @ A1 @ U


def transferred_observable(A1, rho1, H1, term, t, hbar=1.0, guard=True):
    """Mode-space matrix of a detector observable at time ``t`` after ``t0``."""
    rb1 = _region1(term)
    if guard:
        check_local_admissible(A1, term.basis, 1)
    At = _heisenberg(np.asarray(A1, dtype=complex), H1, t, hbar)
    a = annihilators(rb1, 1)
    ad = creators(rb1, 1)
    M = len(a)
    out = np.empty((M, M), dtype=complex)
    for h in range(M):
        X = ad[h] @ rho1          # a_h^dagger rho1
        for k in range(M):
            # Tr[A(t) a_h^dagger rho1 a_k] = sum((a_k A(t)) * X^T)
            out[k, h] = np.sum((a[k] @ At) * X.T)
    return TransferredObservable(out, float(t))


def sigma(term, rho1, rho2):
    """Correction factor of the one-particle reduction."""
    rb1 = _region1(term)
    a = annihilators(rb1, 1)
    ad = creators(rb1, 1)
    D = term.local_lowering
    M = len(D)
    # Tr[D_h rho2 D_h^dagger] = Tr[D_h^dagger D_h rho2]; same products as the
    # denominator so that an empty detector gives exactly one
    num = 0.0
    den = 0.0
    for h in range(M):
        X = ad[h] @ rho1
        Y = D[h] @ rho2
        num += np.trace(Y @ dagger(D[h]))
        for k in range(M):
            den += np.trace(X @ a[k]) * np.trace(Y @ dagger(D[k]))
    return float(np.real(num)) / float(np.real(den))


def depletion(rho1, psi, basis1):
    """Occupation ``Tr[a_psi^dagger a_psi rho1]`` of a mode function."""
    a = mode_annihilator(basis1, 1, psi)
    return float(np.real(np.trace(dagger(a) @ a @ rho1)))


def one_body_density(rho1, basis1):
    """``G[k, h] = Tr[a_h^dagger a_k rho1]``."""
    a = annihilators(basis1, 1)
    ad = creators(basis1, 1)
    M = len(a)
    G = np.empty((M, M), dtype=complex)
    for h in range(M):
        for k in range(M):
            G[k, h] = np.trace(ad[h] @ a[k] @ rho1)
    return G


def depletion_bound(rho1, basis1):
    """Largest depletion over all mode functions (top eigenvalue of ``G``)."""
    G = one_body_density(rho1, basis1)
    return float(np.linalg.eigvalsh(0.5 * (G + dagger(G)))[-1])


def cap_weight(rho1, basis1):
    """Population of the states at the region cap, where creators are truncated."""
    n = basis1.sectors[:, 0]
    cap = basis1.region_caps[0] if basis1.region_caps else basis1.N_total
    if cap is None or (basis1.statistics != BOSON and cap >= basis1.M1):
        return 0.0
    return float(np.real(np.sum(np.diag(rho1)[n == cap])))


def identity_transfer_bound(rho1, basis1):
    """Bound on ``||A_id - 1||`` for the transferred identity.

    ``A_id = 1 +- G - E`` with ``G`` the one-body density matrix and ``E``
    the positive truncation loss at the cap, whose trace is at most
    ``(cap + M1) p_cap`` (bosons) or ``(M1 - cap) p_cap`` (fermions).
    """
    p = cap_weight(rho1, basis1)
    cap = basis1.region_caps[0] if basis1.region_caps else basis1.N_total
    factor = (cap + basis1.M1) if basis1.statistics == BOSON else max(basis1.M1 - cap, 0)
    return depletion_bound(rho1, basis1) + factor * p


def diagonalize_w(w, cutoff=1e-14):
    """Weights ``lam_alpha`` (descending) and mode vectors ``psi_alpha`` (columns).

    Eigenvalues at or below ``cutoff`` are dropped; small negative
    rounding is clipped to zero.
    """
    w = w.w if isinstance(w, OneParticleState) else np.asarray(w)
    spec = hermitian_eig(w)
    lam = np.clip(spec.eigenvalues[::-1], 0.0, None)
    vec = spec.eigenvectors[:, ::-1]
    keep = lam > cutoff
    return lam[keep], vec[:, keep]


def sigma_spectral(w, rho1, basis1, statistics):
    """Right-hand side ``1 +- sum_alpha lam_alpha Tr[a^dagger a rho1]``.

    ``+`` for bosons, ``-`` for fermions.  Exact whenever ``rho1`` carries
    no weight on states where the emitted creators are truncated.
    """
    lam, vecs = diagonalize_w(w)
    sign = 1.0 if statistics == BOSON else -1.0
    occ = sum(l * depletion(rho1, vecs[:, i], basis1) for i, l in enumerate(lam))
    return 1.0 + sign * occ


@dataclass(frozen=True)
class ReducedExpectation:
    value: float
    sigma: float
    oracle: Optional[float] = None

    @property
    def deviation(self):
        return None if self.oracle is None else abs(self.value - self.oracle)


def branch_state(term, rho1, rho2):
    """Normalized ``C rho1 (x) rho2 C^dagger``."""
    C = term.operator
    B = C @ np.kron(rho1, rho2) @ dagger(C)
    return B / np.real(np.trace(B))


def reduced_expectation(A1, rho1, rho2, term, H1, t, hbar=1.0, oracle=False, w=None, s=None):
    """Detector expectation on the transfer branch via the one-particle formula.

    With ``oracle`` the same quantity is recomputed as a full-space trace
    ``Tr[(A1 (x) 1) U B U^dagger]`` of the evolved branch state.
    """
    w = effective_w(term, rho2) if w is None else w
    s = sigma(term, rho1, rho2) if s is None else s
    At = transferred_observable(A1, rho1, H1, term, t, hbar)
    value = s * float(np.real(np.trace(At.matrix @ w.w)))
    ref = None
    if oracle:
        ref = full_space_expectation(A1, term, rho1, rho2, H1, t, hbar)
    return ReducedExpectation(value, s, ref)


def full_space_expectation(A1, term, rho1, rho2, H1, t, hbar=1.0):
    basis = term.basis
    B = branch_state(term, rho1, rho2)
    U = basis.embed(unitary(H1, t, hbar), 1)
    Bt = U @ B @ dagger(U)
    return float(np.real(np.trace(basis.embed(A1, 1) @ Bt)))


def free_evolve(psi0, modes, t, t0=0.0):
    """Mode coefficients ``<h|psi_t> = exp(-i W_h (t - t0) / hbar) <h|psi0>``."""
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != modes.energies.shape:
        raise DimensionError(f"coefficients shape {psi0.shape} != {modes.energies.shape}")
    return np.exp(-1j * modes.energies * (t - t0) / modes.spec.hbar) * psi0


def overlap_rate(psi0, modes, t):
    """``d/dt |<psi0|psi_t>|^2``."""
    pt = free_evolve(psi0, modes, t)
    ov = np.vdot(psi0, pt)
    dov = np.vdot(psi0, -1j * modes.energies / modes.spec.hbar * pt)
    return 2.0 * float(np.real(np.conj(ov) * dov))


def revival_time(psi0, modes, guess):
    """First return of ``|<psi0|psi_t>|`` to its maximum near ``guess``.

    Located as the sign change of the overlap rate inside
    ``[0.75, 1.25] * guess``.
    """
    return brentq(lambda t: overlap_rate(psi0, modes, t), 0.75 * guess, 1.25 * guess,
                  xtol=1e-15 * guess, rtol=4 * np.finfo(float).eps)


def heisenberg_equivalence(psi0, basis1, H1, t, hbar=1.0):
    """``|| U a_psi0^dagger U^dagger - a_psi_t^dagger ||_F`` on the Fock space.

    ``psi_t`` is propagated with the single-particle block of ``H1``; for
    a quadratic ``H1`` the two sides coincide.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    K = single_particle_block(H1, basis1, 1)
    psi_t = unitary(K, t, hbar) @ psi0
    U = unitary(H1, t, hbar)
    lhs = U @ dagger(mode_annihilator(basis1, 1, psi0)) @ dagger(U)
    rhs = dagger(mode_annihilator(basis1, 1, psi_t))
    return float(np.linalg.norm(lhs - rhs))


@dataclass(frozen=True)
class DressedObservable:
    direct: np.ndarray          # a_psi A a_psi^dagger
    decomposition: np.ndarray   # A + [a_psi, A] a_psi^dagger +- A a_psi^dagger a_psi
    safe: np.ndarray            # states where a_psi^dagger is not truncated

    def deviation(self):
        """Max mismatch of the two forms on cutoff-safe columns."""
        diff = np.abs(self.direct - self.decomposition)[:, self.safe]
        return float(diff.max()) if diff.size else 0.0


def dressed_observable(A, psi_t, basis1, guard=True):
    """Detector observable dressed by the microsystem's ladder operators."""
    A = np.asarray(A, dtype=complex)
    if guard:
        N = np.diag(basis1.sectors[:, 0].astype(float))
        gap = float(np.max(np.abs(A @ N - N @ A)))
        if gap > 1e-10:
            from .errors import AdmissibilityError
            raise AdmissibilityError(f"observable does not commute with N1 ({gap:.2e})")
    a = mode_annihilator(basis1, 1, psi_t)
    ad = dagger(a)
    sign = 1.0 if basis1.statistics == BOSON else -1.0
    direct = a @ A @ ad
    decomposition = A + (a @ A - A @ a) @ ad + sign * A @ ad @ a
    return DressedObservable(direct, decomposition, creation_safe_for(basis1, 1, psi_t))


def no_signal_gap(A, psi_t, rho1, basis1):
    """``(|<dressed A> - <A>|, bound)`` for an observable commuting with ``a_psi``.

    The bound is ``||A|| * (depletion + edge weight)``, the edge weight being
    the population of states where ``a_psi^dagger`` is truncated (zero for
    fermions and for untruncated bosons).
    """
    dressed = dressed_observable(A, psi_t, basis1)
    diff = abs(np.trace(dressed.direct @ rho1) - np.trace(A @ rho1))
    dep = depletion(rho1, psi_t, basis1)
    edge = float(np.real(np.sum(np.diag(rho1)[~dressed.safe])))
    norm = float(np.linalg.norm(A, 2))
    return float(diff), norm * (dep + edge)


def commuting_projection(K, psi):
    """``P K P`` with ``P`` projecting out ``psi``; its one-body operator commutes with ``a_psi``."""
    psi = np.asarray(psi, dtype=complex)
    P = np.eye(len(psi)) - np.outer(psi, np.conj(psi))
    return P @ K @ P
