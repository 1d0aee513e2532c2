"""Single-particle transfer term and the demixed description of the state.

The correlation operator ``C = sum_h a_h^(1)dagger D_h^(2)`` moves one
particle from region 2 into region 1.  On observables that commute with
both region number operators the cross terms ``C rho`` and
``rho C^dagger`` have vanishing expectation, so the expanded state acts
as the mixture ``lam * rho1 (x) rho2 + (1 - lam) * C rho C^dagger / b`` with
``b = Tr[C rho C^dagger]`` and ``lam = 1 / (1 + b)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AdmissibilityError, DimensionError, LabError
from .fock import (
    BOSON,
    annihilators,
    conserves_sectors,
    creators,
    ladder,
    number_op,
    one_body,
)
from .kernel import check_hermitian, commutator, dagger, hermitian_eig
from .preparation import expanded_state

INVARIANT_TOL = 1e-12
ADMISSIBLE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CorrelationTerm:
    """``C = sum_h a_h^(1)dagger D_h`` on a product basis.

    ``lowering`` holds the full-space ``D_h`` and ``local_lowering`` the
    same operators on the region-2 factor; ``amplitudes`` is the
    ``(M1, M2)`` matrix ``d_hn`` when ``D_h = sum_n d_hn a_n^(2)``.
    """

    basis: object
    lowering: tuple
    local_lowering: tuple
    operator: np.ndarray
    amplitudes: Optional[np.ndarray] = None

    @property
    def channels(self):
        return [(h, D) for h, D in enumerate(self.lowering)]

    def invariant_residuals(self):
        """(max lowering defect over channels, max |[C, N]|)."""
        N2 = number_op(self.basis, 2)
        N = number_op(self.basis, "total")
        low = max(
            float(np.max(np.abs(N2 @ D - D @ (N2 - np.eye(len(N2)))))) for D in self.lowering
        )
        cons = float(np.max(np.abs(commutator(self.operator, N))))
        return low, cons


def _check_product(basis):
    if not basis.is_product:
        raise DimensionError("the transfer term needs a product truncation")


def build_transfer_term(basis, amplitudes):
    """Transfer term with ``D_h = sum_n d[h, n] a_n^(2)``."""
    _check_product(basis)
    d = np.asarray(amplitudes, dtype=complex)
    if d.shape != (basis.M1, basis.M2):
        raise DimensionError(f"amplitudes shape {d.shape} != ({basis.M1}, {basis.M2})")
    if not np.any(d):
        raise LabError("all transfer amplitudes are zero; there is no transfer channel")
    rb2 = basis.region_basis(2)
    a2 = annihilators(basis, 2)
    a2_local = annihilators(rb2, 1)
    lowering = tuple(sum(d[h, n] * a2[n] for n in range(basis.M2)) for h in range(basis.M1))
    local = tuple(sum(d[h, n] * a2_local[n] for n in range(basis.M2)) for h in range(basis.M1))
    return _assemble(basis, lowering, local, d)


def transfer_term_from_lowering(basis, local_lowering):
    """Transfer term from arbitrary region-2 lowering operators ``D_h``.

    Each ``D_h`` is checked to lower ``N2`` by exactly one.
    """
    _check_product(basis)
    local = tuple(np.asarray(D, dtype=complex) for D in local_lowering)
    if len(local) != basis.M1:
        raise DimensionError(f"need {basis.M1} lowering operators, got {len(local)}")
    rb2 = basis.region_basis(2)
    N2 = number_op(rb2, 1)
    for h, D in enumerate(local):
        gap = float(np.max(np.abs(N2 @ D - D @ (N2 - np.eye(len(N2))))))
        if gap > INVARIANT_TOL:
            raise LabError(f"D_{h} does not lower N2 by one (defect {gap:.2e})")
    if not any(np.any(D) for D in local):
        raise LabError("all lowering operators vanish")
    lowering = tuple(basis.embed(D, 2) for D in local)
    return _assemble(basis, lowering, local, None)


def _assemble(basis, lowering, local, d):
    ad1 = creators(basis, 1)
    C = sum(ad1[h] @ lowering[h] for h in range(basis.M1))
    term = CorrelationTerm(basis, lowering, local, C, d)
    low, cons = term.invariant_residuals()
    if low > INVARIANT_TOL or cons > INVARIANT_TOL:
        raise LabError(f"transfer term invariants violated (lowering {low:.2e}, [C, N] {cons:.2e})")
    return term


def extract_transfer_amplitudes(C, basis):
    """Least-squares amplitudes ``d`` of ``C ~ sum d_hn a_h^(1)dagger a_n^(2)``.

    Returns ``(d, residual)`` where the residual is the Frobenius norm of
    what the single-particle transfer form does not capture (reverse
    transfer, multi-particle terms).
    """
    _check_product(basis)
    ad1 = creators(basis, 1)
    a2 = annihilators(basis, 2)
    pairs = [(h, n) for h in range(basis.M1) for n in range(basis.M2)]
    design = np.stack([(ad1[h] @ a2[n]).ravel() for h, n in pairs], axis=1)
    coef, *_ = np.linalg.lstsq(design, np.asarray(C).ravel(), rcond=None)
    resid = float(np.linalg.norm(np.asarray(C).ravel() - design @ coef))
    return coef.reshape(basis.M1, basis.M2), resid


def region_number(basis, region):
    """Number operator of one region on its own factor space."""
    return number_op(basis.region_basis(region), 1)


def check_local_admissible(A, basis, region, tol=ADMISSIBLE_TOL):
    N = region_number(basis, region)
    gap = float(np.max(np.abs(commutator(np.asarray(A), N))))
    if gap > tol:
        raise AdmissibilityError(
            f"region-{region} observable does not commute with N{region} (|[A, N{region}]| = {gap:.2e})"
        )


def check_admissible(O, basis, tol=ADMISSIBLE_TOL):
    """Raise unless a full-space observable commutes with N1 and N2."""
    for r in (1, 2):
        N = number_op(basis, r)
        gap = float(np.max(np.abs(commutator(np.asarray(O), N))))
        if gap > tol:
            raise AdmissibilityError(
                f"observable does not commute with N{r} (|[O, N{r}]| = {gap:.2e})"
            )


def cross_term_residual(A1, A2, term, rho1, rho2, guard=True):
    """``|Tr[(A1 (x) A2) C rho1 (x) rho2]|`` for region-local observables.

    With ``guard`` the observables must commute with their region number
    operators; the residual then vanishes by sector counting.
    """
    basis = term.basis
    if guard:
        check_local_admissible(A1, basis, 1)
        check_local_admissible(A2, basis, 2)
    O = basis.embed(A1, 1) @ basis.embed(A2, 2)
    rho = np.kron(rho1, rho2)
    return float(abs(np.trace(O @ term.operator @ rho)))


@dataclass(frozen=True)
class MixtureDecomposition:
    lam: float
    uncorrelated: np.ndarray
    branch: np.ndarray
    branch_weight: float

    def state(self):
        return self.lam * self.uncorrelated + (1 - self.lam) * self.branch


def mixture_decompose(rho1, rho2, term):
    """Split the expanded state into its uncorrelated and transfer branches."""
    rho = np.kron(rho1, rho2)
    C = term.operator
    B = C @ rho @ dagger(C)
    b = float(np.real(np.trace(B)))
    if not b > 1e-300:
        raise LabError("transfer branch has zero weight; the state is factorized (use rho1 (x) rho2)")
    B = B / b
    B = 0.5 * (B + dagger(B))
    return MixtureDecomposition(1.0 / (1.0 + b), rho, B, b)


def product_propagator(H1, H2, t, hbar=1.0, tol=1e-10):
    """``exp(-i (H1 + H2) t / hbar)`` for commuting full-space Hamiltonians."""
    H1 = check_hermitian(H1)
    H2 = check_hermitian(H2)
    gap = float(np.max(np.abs(commutator(H1, H2))))
    if gap > tol:
        raise LabError(f"region Hamiltonians do not commute (|[H1, H2]| = {gap:.2e})")
    return hermitian_eig(H1 + H2).apply(lambda lam: np.exp(-1j * lam * t / hbar))


def evolve_product(rho, H1, H2, t, hbar=1.0):
    """``U rho U^dagger`` under the product dynamics."""
    U = product_propagator(H1, H2, t, hbar)
    out = U @ rho @ dagger(U)
    return 0.5 * (out + dagger(out))


class _Evolver:
    """Cached spectrum of ``H1 + H2`` for repeated evolutions."""

    def __init__(self, H1, H2, hbar):
        H1 = check_hermitian(H1)
        H2 = check_hermitian(H2)
        if float(np.max(np.abs(commutator(H1, H2)))) > 1e-10:
            raise LabError("region Hamiltonians do not commute")
        self.spec = hermitian_eig(H1 + H2)
        self.hbar = hbar

    def __call__(self, rho, t):
        V = self.spec.eigenvectors
        ph = np.exp(-1j * self.spec.eigenvalues * t / self.hbar)
        U = (V * ph) @ dagger(V)
        return U @ rho @ dagger(U)


def equivalence_deviations(rho_full, mix, observables, H1, H2, times, basis=None, hbar=1.0):
    """Array ``[time, observable]`` of ``|Tr[O rho_full(t)] - Tr[O mix(t)]|``."""
    observables = list(observables)
    if basis is not None:
        for O in observables:
            check_admissible(O, basis)
    times = list(times)
    out = np.zeros((len(times), len(observables)))
    if not observables:
        return out
    ev = _Evolver(H1, H2, hbar)
    for i, t in enumerate(times):
        full = ev(rho_full, t)
        A = ev(mix.uncorrelated, t)
        B = ev(mix.branch, t)
        for j, O in enumerate(observables):
            lhs = np.trace(O @ full)
            rhs = mix.lam * np.trace(O @ A) + (1 - mix.lam) * np.trace(O @ B)
            out[i, j] = abs(lhs - rhs)
    return out


def equivalence_test(rho_full, mix, observables, H1, H2, times, basis=None, hbar=1.0):
    """Largest expectation mismatch between the state and its mixture.

    Observables are full-space matrices; when ``basis`` is given each is
    checked to commute with both region number operators.
    """
    dev = equivalence_deviations(rho_full, mix, observables, H1, H2, times, basis, hbar)
    return float(dev.max()) if dev.size else 0.0


@dataclass(frozen=True)
class FamilyMember:
    """Admissible observable; ``local1``/``local2`` set for product forms."""

    label: str
    full: np.ndarray
    local1: Optional[np.ndarray] = None
    local2: Optional[np.ndarray] = None

    @property
    def region1_only(self):
        return self.local1 is not None and self.local2 is None


def random_sector_hermitian(basis, rng, scale=1.0):
    """Random Hermitian matrix, block diagonal in the ``(N1, N2)`` sectors."""
    d = basis.dim
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    X = np.where(basis.sector_mask(), X, 0.0)
    return scale * 0.5 * (X + dagger(X))


def random_psd_sector(basis, rng):
    """Random positive semidefinite matrix commuting with N1 and N2."""
    X = random_sector_hermitian(basis, rng)
    return X @ X


def admissible_family(basis, size, rng, kernels1=(), kernels2=(), energies1=None, energies2=None):
    """Generate ``size`` admissible observables.

    Order: number operators, region Hamiltonians (when energies are
    given), cell-density one-body operators from ``kernels1``/``kernels2``,
    products of region observables, then random sector-block Hermitians
    (alternating product form and full-space form) until ``size`` members.
    """
    rb1 = basis.region_basis(1)
    rb2 = basis.region_basis(2)
    members = []

    def add1(label, A):
        members.append(FamilyMember(label, basis.embed(A, 1), A, None))

    def add2(label, A):
        members.append(FamilyMember(label, basis.embed(A, 2), None, A))

    N1 = number_op(rb1, 1)
    N2 = number_op(rb2, 1)
    add1("N1", N1)
    add2("N2", N2)
    H1 = H2 = None
    if energies1 is not None:
        H1 = one_body(rb1, np.diag(energies1), 1)
        add1("H1", H1)
    if energies2 is not None:
        H2 = one_body(rb2, np.diag(energies2), 1)
        add2("H2", H2)
    for i, K in enumerate(kernels1):
        add1(f"cell1_{i}", one_body(rb1, K, 1))
    for i, K in enumerate(kernels2):
        add2(f"cell2_{i}", one_body(rb2, K, 1))
    members.append(FamilyMember("N1*N2", basis.embed(N1, 1) @ basis.embed(N2, 2), N1, N2))
    if H1 is not None and H2 is not None:
        members.append(FamilyMember("H1*H2", basis.embed(H1, 1) @ basis.embed(H2, 2), H1, H2))
    k = 0
    while len(members) < size:
        if k % 3 == 0:
            A = random_sector_hermitian(rb1, rng)
            add1(f"rand1_{k}", A)
        elif k % 3 == 1:
            A1 = random_sector_hermitian(rb1, rng)
            A2 = random_sector_hermitian(rb2, rng)
            members.append(
                FamilyMember(f"rand12_{k}", basis.embed(A1, 1) @ basis.embed(A2, 2), A1, A2)
            )
        else:
            members.append(FamilyMember(f"randfull_{k}", random_sector_hermitian(basis, rng)))
        k += 1
    return members[:size]


def full_cross_residual(O, term, rho1, rho2):
    """``|Tr[O C rho1 (x) rho2]|`` for a full-space observable."""
    return float(abs(np.trace(O @ term.operator @ np.kron(rho1, rho2))))


def state_from_term(rho1, rho2, term):
    """Expanded state ``(1 + C) rho (1 + C^dagger) / Tr`` of a transfer term."""
    return expanded_state(rho1, rho2, term.operator)
