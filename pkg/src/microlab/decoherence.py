"""Decoherence of the one-particle state.

``dw/dt = -(i/hbar)[H, w] + sum_i g_i (L_i w L_i^dagger - {L_i^dagger L_i, w}/2)``
integrated either by classical fourth-order Runge-Kutta or by the exact
exponential of the Liouvillian.  A full-space reference trajectory is
available from :func:`reduced_dynamics_oracle`, which evolves the whole
transfer branch and re-extracts the one-particle state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DimensionError, LabError, StepSizeError
from .fock import annihilators, creators, single_particle_states
from .kernel import check_hermitian, dagger, partial_trace, unitary
from .microsystem import OneParticleState, branch_state

RK4_STABILITY = 2.5


@dataclass(frozen=True)
class LindbladModel:
    H: np.ndarray
    jumps: tuple = ()        # matrices L_i
    rates: tuple = ()        # g_i >= 0
    hbar: float = 1.0

    def __post_init__(self):
        H = check_hermitian(self.H)
        object.__setattr__(self, "H", H)
        if len(self.jumps) != len(self.rates):
            raise ValueError("one rate per jump operator")
        M = H.shape[0]
        jumps = tuple(np.asarray(L, dtype=complex) for L in self.jumps)
        for L in jumps:
            if L.shape != (M, M):
                raise DimensionError(f"jump operator shape {L.shape} != ({M}, {M})")
        rates = tuple(float(g) for g in self.rates)
        if any(g < 0 for g in rates):
            raise ValueError("decoherence rates must be non-negative")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "rates", rates)

    @property
    def dim(self):
        return self.H.shape[0]

    def __add__(self, other):
        if other.hbar != self.hbar:
            raise ValueError("models use different hbar")
        return LindbladModel(self.H + other.H, self.jumps + other.jumps,
                             self.rates + other.rates, self.hbar)

    def is_unital(self, tol=1e-12):
        total = sum(g * (L @ dagger(L) - dagger(L) @ L) for g, L in zip(self.rates, self.jumps))
        return not np.any(np.abs(total) > tol) if self.jumps else True


def dephasing_model(energies, gamma, hbar=1.0):
    """Free Hamiltonian ``diag(W)`` plus mode-basis dephasing at rate ``gamma``."""
    W = np.asarray(energies, dtype=float)
    M = len(W)
    jumps = tuple(np.outer(np.eye(M)[i], np.eye(M)[i]) for i in range(M))
    return LindbladModel(np.diag(W).astype(complex), jumps, (gamma,) * M, hbar)


def thermal_damping_model(energies, gamma, beta, hbar=1.0):
    """Transitions ``|k><h|`` between modes obeying detailed balance.

    Downward jumps (``W_k < W_h``) have rate ``gamma``; upward ones
    ``gamma * exp(-beta (W_k - W_h))``.  No Hamiltonian part.
    """
    W = np.asarray(energies, dtype=float)
    M = len(W)
    jumps, rates = [], []
    for h in range(M):
        for k in range(M):
            if h == k:
                continue
            L = np.zeros((M, M), dtype=complex)
            L[k, h] = 1.0
            rate = gamma if W[k] < W[h] else gamma * np.exp(-beta * (W[k] - W[h]))
            jumps.append(L)
            rates.append(rate)
    return LindbladModel(np.zeros((M, M), dtype=complex), tuple(jumps), tuple(rates), hbar)


def apply_generator(model, w):
    out = -1j / model.hbar * (model.H @ w - w @ model.H)
    for g, L in zip(model.rates, model.jumps):
        if g == 0:
            continue
        LdL = dagger(L) @ L
        out += g * (L @ w @ dagger(L) - 0.5 * (LdL @ w + w @ LdL))
    return out


def liouvillian(model):
    """Matrix of the generator acting on row-major ``vec(w)``."""
    M = model.dim
    eye = np.eye(M)
    H = model.H
    out = -1j / model.hbar * (np.kron(H, eye) - np.kron(eye, H.T))
    for g, L in zip(model.rates, model.jumps):
        LdL = dagger(L) @ L
        out += g * (np.kron(L, np.conj(L)) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
    return out


def stability_number(model, dt):
    """``dt * ||generator||_2``, compared against the RK4 bound."""
    return float(dt * np.linalg.norm(liouvillian(model), 2))


def step_map(model, dt):
    """Exact one-step superoperator ``exp(dt * generator)``."""
    return expm(dt * liouvillian(model))


def choi_matrix(superop, dim):
    """Choi matrix ``sum_ij |i><j| (x) Phi(|i><j|)`` of a row-major superoperator."""
    C = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            E = np.zeros((dim, dim))
            E[i, j] = 1.0
            image = (superop @ E.ravel()).reshape(dim, dim)
            C[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim] = image
    return C


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple

    def column(self, name):
        fns = {
            "trace": lambda w: float(np.real(np.trace(w))),
            "purity": lambda w: float(np.real(np.trace(w @ w))),
            "coherence": lambda w: float(np.sum(np.abs(w)) - np.sum(np.abs(np.diag(w)))),
            "min_eig": lambda w: float(np.linalg.eigvalsh(0.5 * (w + dagger(w)))[0]),
        }
        return np.array([fns[name](w) for w in self.states])

    def trace_drift(self):
        return float(np.max(np.abs(self.column("trace") - self.column("trace")[0])))


def lindblad_evolve(w0, model, dt, steps, method="rk4"):
    """Trajectory of the one-particle state under a Lindblad model.

    ``method="rk4"`` requires ``dt * ||generator|| <= 2.5`` (inside the
    RK4 stability region on both axes); ``method="exact"`` applies the
    exact step map and has no step-size restriction.
    """
    w = w0.w if isinstance(w0, OneParticleState) else np.asarray(w0, dtype=complex)
    if w.shape != (model.dim, model.dim):
        raise DimensionError(f"state shape {w.shape} != model dim {model.dim}")
    steps = int(steps)
    states = [w.copy()]
    if method == "exact":
        P = step_map(model, dt)
        v = w.ravel()
        for _ in range(steps):
            v = P @ v
            x = v.reshape(model.dim, model.dim)
            states.append(0.5 * (x + dagger(x)))
    elif method == "rk4":
        number = stability_number(model, dt)
        if number > RK4_STABILITY:
            raise StepSizeError(number, RK4_STABILITY)
        for _ in range(steps):
            k1 = apply_generator(model, w)
            k2 = apply_generator(model, w + 0.5 * dt * k1)
            k3 = apply_generator(model, w + 0.5 * dt * k2)
            k4 = apply_generator(model, w + dt * k3)
            w = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            w = 0.5 * (w + dagger(w))
            states.append(w)
    else:
        raise ValueError(f"unknown integrator {method!r}; use 'rk4' or 'exact'")
    return Trajectory(dt * np.arange(steps + 1), tuple(states))


def bilinear_coupling(basis, mode1, mode2, g):
    """``g (a_mode1^(1)dagger a_mode2^(2) + h.c.)`` on the full product space."""
    ad = creators(basis, 1)[mode1]
    a = annihilators(basis, 2)[mode2]
    X = g * (ad @ a)
    return X + dagger(X)


def extract_one_particle(rho_full, basis):
    """Region-1 one-particle state of a full-space state.

    Reduces to region 1 and keeps the block on the single-particle states
    ``a_h^dagger |vac>``, normalized to unit trace.  For an empty detector
    this is the microsystem's state.
    """
    d1, d2 = basis.region_dims
    red = partial_trace(rho_full, (d1, d2), keep=1)
    idx = single_particle_states(basis.region_basis(1), 1)
    block = red[np.ix_(idx, idx)]
    tr = float(np.real(np.trace(block)))
    if not tr > 0:
        raise LabError("no weight in the one-particle sector of region 1")
    block = block / tr
    return OneParticleState(0.5 * (block + dagger(block))), tr


def reduced_dynamics_oracle(term, rho1, rho2, H_full, t, hbar=1.0):
    """One-particle state of the transfer branch evolved under ``H_full``."""
    H_full = check_hermitian(H_full)
    B = branch_state(term, rho1, rho2)
    U = unitary(H_full, t, hbar)
    state, _ = extract_one_particle(U @ B @ dagger(U), term.basis)
    return state
