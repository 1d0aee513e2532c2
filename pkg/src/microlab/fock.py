"""Truncated occupation-number space for two regions of confined modes.

Modes of region 1 are numbered before those of region 2; the fermion
Jordan-Wigner string follows this global order.  Two truncations exist:

* joint (``region_caps=None``): occupations bounded per mode by ``n_max``
  and in total by ``N_total``.  States are graded by particle number, then
  by descending occupation vectors.
* product (``region_caps=(c1, c2)``): each region carries at most ``c_r``
  particles.  The space is then an exact tensor product, ordered with the
  region-1 state as the major index, so ``partial_trace`` with
  ``region_dims`` applies directly.

Every truncation is closed under annihilation, so lowering operators are
exact and creation operators are their adjoints (cut off at the edge).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError
from .kernel import as_matrix, check_hermitian, dagger, max_dim

BOSON = "boson"
FERMION = "fermion"
STATISTICS = (BOSON, FERMION)


def _occupations(modes, n_max, cap):
    """All occupation vectors of ``modes`` modes with per-mode and total caps."""
    if modes == 0:
        yield ()
        return
    for n in range(min(n_max, cap), -1, -1):
        for rest in _occupations(modes - 1, n_max, cap - n):
            yield (n,) + rest


def _count(modes, n_max, cap):
    """Number of occupation vectors, by polynomial coefficient counting."""
    poly = np.zeros(cap + 1, dtype=object)
    poly[0] = 1
    for _ in range(modes):
        nxt = np.zeros(cap + 1, dtype=object)
        for n in range(min(n_max, cap) + 1):
            nxt[n:] += poly[: cap + 1 - n]
        poly = nxt
    return int(sum(poly))


def _graded(states):
    return sorted(states, key=lambda s: (sum(s), tuple(-n for n in s)))


@dataclass(frozen=True, eq=False)
class FockBasis:
    M1: int
    M2: int
    statistics: str
    n_max: int
    N_total: int
    region_caps: Optional[tuple]
    states: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {s: i for i, s in enumerate(self.states)})
        occ = np.array(self.states, dtype=int).reshape(len(self.states), self.M1 + self.M2)
        object.__setattr__(self, "occupations", occ)
        sectors = np.stack([occ[:, : self.M1].sum(axis=1), occ[:, self.M1 :].sum(axis=1)], axis=1)
        object.__setattr__(self, "sectors", sectors)

    @property
    def dim(self):
        return len(self.states)

    @property
    def n_modes(self):
        return self.M1 + self.M2

    @property
    def is_product(self):
        return self.region_caps is not None

    @property
    def region_dims(self):
        if not self.is_product:
            return None
        return (self.region_basis(1).dim, self.region_basis(2).dim)

    def region_modes(self, region):
        """Global mode indices of a region."""
        if region == 1:
            return list(range(self.M1))
        if region == 2:
            return list(range(self.M1, self.M1 + self.M2))
        raise ValueError(f"region must be 1 or 2, got {region!r}")

    def mode_count(self, region):
        return self.M1 if region == 1 else self.M2

    def global_mode(self, region, mode):
        count = self.mode_count(region)
        if not 0 <= mode < count:
            raise IndexError(f"mode {mode} out of range for region {region} ({count} modes)")
        return mode if region == 1 else self.M1 + mode

    def sector_indices(self):
        """Map ``(N1, N2)`` to the basis indices of that sector."""
        key = "sectors"
        if key not in self._cache:
            out = {}
            for i, (n1, n2) in enumerate(map(tuple, self.sectors)):
                out.setdefault((int(n1), int(n2)), []).append(i)
            self._cache[key] = {k: np.array(v) for k, v in sorted(out.items())}
        return self._cache[key]

    def sector_mask(self):
        """Boolean matrix: True where row and column share ``(N1, N2)``."""
        s = self.sectors
        return (s[:, None, 0] == s[None, :, 0]) & (s[:, None, 1] == s[None, :, 1])

    def region_basis(self, region):
        """Single-region factor of a product basis (region as its "region 1")."""
        if not self.is_product:
            raise DimensionError("region factors exist only for product truncations")
        key = ("region", region)
        if key not in self._cache:
            M = self.mode_count(region)
            cap = self.region_caps[region - 1]
            self._cache[key] = build_basis(M, 0, self.statistics, cap, self.n_max)
        return self._cache[key]

    def parity(self, region=None):
        """Diagonal of ``(-1)^N`` (of one region, or of all modes)."""
        if region is None:
            n = self.occupations.sum(axis=1)
        else:
            n = self.sectors[:, region - 1]
        return np.where(n % 2 == 0, 1.0, -1.0)

    def embed(self, op, region):
        """Lift a single-region operator to the product space.

        Region 1 comes first in the Jordan-Wigner order, so its operators
        lift as ``op (x) 1``.  Region-2 operators lift as ``1 (x) op_even``
        plus ``P1 (x) op_odd`` for fermions, ``P1`` the region-1 parity.
        """
        if not self.is_product:
            raise DimensionError("embedding needs a product truncation")
        d1, d2 = self.region_dims
        op = as_matrix(op)
        if region == 1:
            if op.shape[0] != d1:
                raise DimensionError(f"operator dim {op.shape[0]} != region-1 dim {d1}")
            return np.kron(op, np.eye(d2))
        if region != 2:
            raise ValueError(f"region must be 1 or 2, got {region!r}")
        if op.shape[0] != d2:
            raise DimensionError(f"operator dim {op.shape[0]} != region-2 dim {d2}")
        if self.statistics == BOSON:
            return np.kron(np.eye(d1), op)
        P2 = self.region_basis(2).parity()
        flipped = P2[:, None] * op * P2[None, :]
        even = 0.5 * (op + flipped)
        odd = 0.5 * (op - flipped)
        P1 = np.diag(self.region_basis(1).parity())
        return np.kron(np.eye(d1), even) + np.kron(P1, odd)

    def product_state(self, rho1, rho2):
        """``rho1 (x) rho2`` on the product space (both must be parity-even)."""
        return np.kron(as_matrix(rho1), as_matrix(rho2))

    def vacuum(self):
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[(0,) * self.n_modes]] = 1.0
        return v

    def creation_safe(self, region, mode):
        """States whose image under the creator of ``mode`` stays in the basis."""
        g = self.global_mode(region, mode)
        occ = self.occupations.copy()
        occ[:, g] += 1
        return np.array([tuple(o) in self.index for o in occ])


def build_basis(M1, M2=0, statistics=BOSON, N_total=None, n_max=None, *,
                region_caps=None, limit=None):
    """Enumerate a truncated Fock basis.

    Parameters
    ----------
    M1, M2 : int
        Mode counts of region 1 and region 2.
    statistics : {"boson", "fermion"}
    N_total : int, optional
        Total-particle cap for the joint truncation.  Defaults to
        ``M1 + M2`` for fermions; required for bosons unless
        ``region_caps`` is given.
    n_max : int, optional
        Per-mode occupation cap for bosons (default ``N_total`` or the
        largest region cap).  Fermions always use 1.
    region_caps : (int, int), optional
        Per-region particle caps; selects the product truncation.
    limit : int, optional
        Dimension cap, default :func:`microlab.kernel.max_dim`.
    """
    M1, M2 = int(M1), int(M2)
    if M1 < 0 or M2 < 0 or M1 + M2 == 0:
        raise ValueError("need at least one mode")
    if statistics not in STATISTICS:
        raise ValueError(f"statistics must be one of {STATISTICS}, got {statistics!r}")
    limit = max_dim() if limit is None else limit

    if region_caps is not None:
        c1, c2 = (int(c) for c in region_caps)
        if statistics == FERMION:
            c1, c2 = min(c1, M1), min(c2, M2)
            n_max = 1
        elif n_max is None:
            n_max = max(c1, c2)
        n_max = int(n_max)
        d1 = _count(M1, n_max, c1)
        d2 = _count(M2, n_max, c2)
        if d1 * d2 > limit:
            raise DimensionError(
                f"truncated Fock dimension would be {d1 * d2} ({d1} x {d2}), "
                f"above the cap {limit}"
            )
        s1 = _graded(_occupations(M1, n_max, c1))
        s2 = _graded(_occupations(M2, n_max, c2))
        states = tuple(a + b for a in s1 for b in s2)
        return FockBasis(M1, M2, statistics, n_max, c1 + c2, (c1, c2), states)

    if statistics == FERMION:
        N_total = M1 + M2 if N_total is None else min(int(N_total), M1 + M2)
        n_max = 1
    else:
        if N_total is None:
            raise ValueError("bosonic bases need N_total (or region_caps)")
        N_total = int(N_total)
        n_max = N_total if n_max is None else int(n_max)
    if N_total < 0 or n_max < 0:
        raise ValueError("caps must be non-negative")
    dim = _count(M1 + M2, n_max, N_total)
    if dim > limit:
        raise DimensionError(f"truncated Fock dimension would be {dim}, above the cap {limit}")
    states = tuple(_graded(_occupations(M1 + M2, n_max, N_total)))
    return FockBasis(M1, M2, statistics, n_max, N_total, None, states)


@dataclass(frozen=True)
class LadderOp:
    region: int
    mode: int
    direction: str
    matrix: np.ndarray


def _annihilator(basis, g):
    key = ("a", g)
    if key not in basis._cache:
        A = np.zeros((basis.dim, basis.dim), dtype=complex)
        for j, s in enumerate(basis.states):
            n = s[g]
            if n == 0:
                continue
            target = s[:g] + (n - 1,) + s[g + 1 :]
            i = basis.index[target]
            if basis.statistics == BOSON:
                A[i, j] = np.sqrt(n)
            else:
                A[i, j] = -1.0 if sum(s[:g]) % 2 else 1.0
        A.setflags(write=False)
        Ad = np.ascontiguousarray(np.conj(A).T)
        Ad.setflags(write=False)
        basis._cache[key] = (A, Ad)
    return basis._cache[key]


def ladder(basis, region, mode, direction="annihilate"):
    """Creation or annihilation matrix of one mode (read-only array)."""
    g = basis.global_mode(region, mode)
    a, ad = _annihilator(basis, g)
    if direction in ("annihilate", "a", "-"):
        return LadderOp(region, mode, "annihilate", a)
    if direction in ("create", "adag", "+"):
        return LadderOp(region, mode, "create", ad)
    raise ValueError(f"direction must be 'create' or 'annihilate', got {direction!r}")


def annihilators(basis, region):
    return [ladder(basis, region, k).matrix for k in range(basis.mode_count(region))]


def creators(basis, region):
    return [ladder(basis, region, k, "create").matrix for k in range(basis.mode_count(region))]


def graded_commutator(A, B, statistics):
    """``[A, B]_-`` for bosons, ``[A, B]_+`` for fermions."""
    if statistics == BOSON:
        return A @ B - B @ A
    return A @ B + B @ A


def number_op(basis, region="total"):
    """Diagonal number operator of region 1, region 2 or all modes."""
    if region == "total":
        n = basis.occupations.sum(axis=1)
    elif region in (1, 2):
        n = basis.sectors[:, region - 1]
    else:
        raise ValueError(f"region must be 1, 2 or 'total', got {region!r}")
    return np.diag(n.astype(complex))


def one_body(basis, K, region):
    """Second-quantized ``sum_hk K_hk a_h^dagger a_k`` over one region."""
    M = basis.mode_count(region)
    K = np.asarray(K, dtype=complex)
    if K.shape != (M, M):
        raise DimensionError(f"kernel shape {K.shape} does not match {M} modes of region {region}")
    K = check_hermitian(K)
    a = annihilators(basis, region)
    ad = creators(basis, region)
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    for k in range(M):
        col = K[:, k]
        if not np.any(col):
            continue
        out += sum(col[h] * ad[h] for h in range(M) if col[h] != 0) @ a[k]
    return 0.5 * (out + dagger(out))


def mode_annihilator(basis, region, psi, tol=1e-8):
    """``a_psi = sum_k conj(psi_k) a_k`` for a normalized coefficient vector."""
    psi = np.asarray(psi, dtype=complex)
    M = basis.mode_count(region)
    if psi.shape != (M,):
        raise DimensionError(f"coefficient vector has shape {psi.shape}, expected ({M},)")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"mode function is not normalized (norm {norm:.12g})")
    a = annihilators(basis, region)
    return sum(np.conj(psi[k]) * a[k] for k in range(M))


def mode_creator(basis, region, psi, tol=1e-8):
    return dagger(mode_annihilator(basis, region, psi, tol))


def creation_safe_for(basis, region, psi):
    """States where every creator in the support of ``psi`` stays in the basis."""
    mask = np.ones(basis.dim, dtype=bool)
    for k, c in enumerate(np.asarray(psi)):
        if c != 0:
            mask &= basis.creation_safe(region, k)
    return mask


def ccr_violation(basis, region, mode, other=None):
    """Deviation of ``[a_n, a_m^dagger]_pm - delta_nm`` (safe, edge).

    Returns the maximum deviation over cutoff-safe columns and over the
    remaining edge columns separately; the first is zero up to rounding,
    the second quantifies the truncation.
    """
    other = mode if other is None else other
    a = ladder(basis, region, mode).matrix
    ad = ladder(basis, region, other, "create").matrix
    target = np.eye(basis.dim) if mode == other else 0.0
    dev = np.abs(graded_commutator(a, ad, basis.statistics) - target)
    safe = basis.creation_safe(region, other)
    on_safe = float(dev[:, safe].max()) if safe.any() else 0.0
    on_edge = float(dev[:, ~safe].max()) if (~safe).any() else 0.0
    return on_safe, on_edge


def single_particle_states(basis, region):
    """Basis indices of ``a_h^dagger |vac>`` for each mode of a region."""
    idx = []
    for h in range(basis.mode_count(region)):
        occ = [0] * basis.n_modes
        occ[basis.global_mode(region, h)] = 1
        key = tuple(occ)
        if key not in basis.index:
            raise DimensionError("the basis does not contain single-particle states")
        idx.append(basis.index[key])
    return np.array(idx)


def single_particle_block(op, basis, region):
    """Matrix ``<h| op |k>`` on the one-particle states of a region."""
    idx = single_particle_states(basis, region)
    return np.asarray(op)[np.ix_(idx, idx)]


def sector_shift(op, basis, tol=0.0):
    """Set of ``(dN1, dN2)`` shifts carried by the nonzero elements of ``op``."""
    op = np.asarray(op)
    rows, cols = np.nonzero(np.abs(op) > tol)
    s = basis.sectors
    return {(int(a), int(b)) for a, b in (s[rows] - s[cols])}


def conserves_sectors(op, basis, tol=1e-10):
    """True when ``op`` commutes with both region number operators."""
    op = np.asarray(op)
    off = np.where(basis.sector_mask(), 0.0, np.abs(op))
    return float(off.max()) <= tol if off.size else True
