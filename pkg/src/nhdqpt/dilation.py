"""Hermitian dilation of the two-band evolution with one ancilla qubit.

The composite state |Omega> = |psi>|-> + omega(t)|psi>|+> evolves under the
Hermitian H'(k, t) = Lambda (x) sigma_0 + Gamma (x) sigma_z; projecting the
ancilla on |-> recovers the non-Hermitian evolution U(k, t)|psi0> up to
normalization.

omega(t) is built from the metric M(t) = (U^-1)^dag m0 U^-1, which obeys
dM/dt = i(M H - H^dag M) and makes Lambda and Gamma Hermitian. Then
omega = sqrt(M - 1) and d(omega)/dt solves the Sylvester equation
omega X + X omega = dM/dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import PAULI, ChiralTwoBandModel, evolution_operator, hamiltonian
from .errors import (
    HermiticityError,
    ParameterDomainError,
    SingularEvolutionError,
    StepSizeError,
    WindowExceededError,
)

HERMITICITY_TOL = 1e-8
NORM_DRIFT_TOL = 1e-6
MAX_M0_DOUBLINGS = 3


@dataclass(frozen=True)
class DilationConfig:
    m0: float = 20.0
    t_max: float = 3.0
    n_steps: int = 3000
    k: float = 0.0

    def __post_init__(self):
        if not self.m0 > 1:
            raise ParameterDomainError(f"m0 must exceed 1, got {self.m0}")
        if self.n_steps < 16:
            raise ParameterDomainError(f"n_steps must be at least 16, got {self.n_steps}")
        if not self.t_max >= 0:
            raise ParameterDomainError(f"t_max must be non-negative, got {self.t_max}")


class AncillaBasis:
    """sigma_y eigenstates |-> (eigenvalue -1) and |+> (eigenvalue +1)."""

    minus = np.array([1, -1j], dtype=complex) / np.sqrt(2)
    plus = -1j * np.array([1, 1j], dtype=complex) / np.sqrt(2)


@dataclass
class DilationFrame:
    t: float
    metric: np.ndarray
    omega: np.ndarray
    h_dilated: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray
    A: np.ndarray
    B: np.ndarray
    state: np.ndarray
    hermiticity_residual: float
    infidelity: float = 0.0
    plus_residual: float = 0.0


def _dag(m):
    return np.conj(np.swapaxes(m, -1, -2))


def metric(model: ChiralTwoBandModel, k, t, m0: float = 20.0):
    """M(t) = (U^-1)^dag (m0 sigma_0) U^-1; broadcasts over t."""
    if not m0 > 1:
        raise ParameterDomainError(f"m0 must exceed 1, got {m0}")
    t = np.asarray(t, dtype=float)
    U = evolution_operator(model, np.full_like(t, float(k)), t)
    if np.any(np.abs(np.linalg.det(U)) < 1e-14):
        raise SingularEvolutionError("U(k, t) is numerically singular")
    Vinv = evolution_operator(model, np.full_like(t, float(k)), -t)  # exp(+iHt) = U^-1
    return m0 * _dag(Vinv) @ Vinv


def _sqrt_shifted(M, m0):
    """Hermitian square root of M - 1 with its eigen-decomposition."""
    M = 0.5 * (M + _dag(M))
    lam, Q = np.linalg.eigh(M - PAULI["0"])
    lo = float(np.min(lam))
    if lo <= 0:
        # the smallest eigenvalue of M scales as m0 / ||U||^2
        need = m0 / (lo + 1.0) if lo + 1.0 > 0 else np.inf
        raise WindowExceededError(
            f"M - 1 is not positive definite (min eigenvalue {lo:.3g}); need m0 > {need:.3g}",
            min_m0=need,
        )
    r = np.sqrt(lam)
    return (Q * r[..., None, :]) @ _dag(Q), r, Q


def omega(model: ChiralTwoBandModel, k, t, m0: float = 20.0):
    """Positive square root of M(t) - sigma_0."""
    return _sqrt_shifted(metric(model, k, t, m0), m0)[0]


def _omega_dot_sylvester(M, H, r, Q):
    Md = 1j * (M @ H - _dag(H) @ M)
    Mq = _dag(Q) @ Md @ Q
    X = Mq / (r[..., :, None] + r[..., None, :])
    return Q @ X @ _dag(Q)


def omega_dot(model: ChiralTwoBandModel, k, t, m0: float = 20.0, method: str = "sylvester", h: float = 1e-6):
    """d(omega)/dt, exactly from the Sylvester equation or by centered difference."""
    if method == "fd":
        return (omega(model, k, np.asarray(t) + h, m0) - omega(model, k, np.asarray(t) - h, m0)) / (2 * h)
    if method != "sylvester":
        raise ValueError(f"unknown method {method!r}")
    M = metric(model, k, t, m0)
    w, r, Q = _sqrt_shifted(M, m0)
    return _omega_dot_sylvester(M, hamiltonian(model, float(k)), r, Q)


def pauli_coefficients(h4):
    """A_i = Tr[(s_i x s_0) H']/4, B_i = Tr[(s_i x s_z) H']/4 for i = 0, x, y, z."""
    labels = ("0", "x", "y", "z")
    A = np.stack([np.trace(np.kron(PAULI[s], PAULI["0"]) @ h4, axis1=-2, axis2=-1) / 4 for s in labels], -1)
    B = np.stack([np.trace(np.kron(PAULI[s], PAULI["z"]) @ h4, axis1=-2, axis2=-1) / 4 for s in labels], -1)
    return A, B


def assemble_from_coefficients(A, B):
    """H' = sum_i s_i x (A_i s_0 + B_i s_z)."""
    out = 0
    for i, s in enumerate(("0", "x", "y", "z")):
        anc = A[..., i, None, None] * PAULI["0"] + B[..., i, None, None] * PAULI["z"]
        out = out + np.einsum("ab,...cd->...acbd", PAULI[s], anc).reshape(anc.shape[:-2] + (4, 4))
    return out


def _dilated_terms(model, k, t, m0):
    """(M, omega, Lambda, Gamma, H') at the times t (array)."""
    H = hamiltonian(model, float(k))
    M = metric(model, k, t, m0)
    w, r, Q = _sqrt_shifted(M, m0)
    wd = _omega_dot_sylvester(M, H, r, Q)
    Minv = np.linalg.inv(M)
    lam = (H + (1j * wd + w @ H) @ w) @ Minv
    gam = 1j * (H @ w - w @ H - 1j * wd) @ Minv
    h4 = np.einsum("...ab,cd->...acbd", lam, PAULI["0"]) + np.einsum("...ab,cd->...acbd", gam, PAULI["z"])
    h4 = h4.reshape(np.shape(t) + (4, 4))
    return M, w, lam, gam, h4


def dilated_hamiltonian(model: ChiralTwoBandModel, k: float, t: float, m0: float = 20.0,
                        tol: float = HERMITICITY_TOL) -> DilationFrame:
    M, w, lam, gam, h4 = _dilated_terms(model, k, np.asarray(float(t)), m0)
    res = float(np.max(np.abs(h4 - _dag(h4))))
    if res > tol:
        raise HermiticityError(f"H' fails Hermiticity by {res:.3g} at t={t}")
    A, B = pauli_coefficients(h4)
    return DilationFrame(float(t), M, w, h4, lam, gam, A, B, np.zeros(4, complex), res)


def _initial_state(psi0, w0):
    a = AncillaBasis
    return np.kron(psi0, a.minus) + np.kron(w0 @ psi0, a.plus)


def split_ancilla(state):
    """System components attached to |-> and |+>."""
    S = np.asarray(state).reshape(2, 2)
    return S @ AncillaBasis.minus.conj(), S @ AncillaBasis.plus.conj()


def _infidelity(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(max(0.0, 1.0 - abs(np.vdot(a / na, b / nb)) ** 2))


def _simulate_once(model, k, psi0, cfg):
    n = cfg.n_steps
    h = cfg.t_max / n
    ts = np.linspace(0.0, cfg.t_max, 2 * n + 1)  # full and half steps
    M, w, lam, gam, h4 = _dilated_terms(model, k, ts, cfg.m0)
    herm = np.max(np.abs(h4 - _dag(h4)), axis=(-2, -1))
    if float(herm.max()) > HERMITICITY_TOL:
        raise HermiticityError(f"H' fails Hermiticity by {herm.max():.3g}")
    A, B = pauli_coefficients(h4)
    direct = evolution_operator(model, np.full(n + 1, float(k)), ts[::2]) @ psi0

    state = _initial_state(psi0, w[0])
    norm0 = float(np.vdot(state, state).real)
    rhs = [-1j * m for m in h4]
    frames = []
    for j in range(n + 1):
        i = 2 * j
        minus, plus = split_ancilla(state)
        frames.append(DilationFrame(
            float(ts[i]), M[i], w[i], h4[i], lam[i], gam[i], A[i], B[i], state.copy(),
            float(herm[i]), _infidelity(direct[j], minus),
            float(np.max(np.abs(plus - w[i] @ minus))),
        ))
        if j == n:
            break
        k1 = rhs[i] @ state
        k2 = rhs[i + 1] @ (state + 0.5 * h * k1)
        k3 = rhs[i + 1] @ (state + 0.5 * h * k2)
        k4 = rhs[i + 2] @ (state + h * k3)
        state = state + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = abs(float(np.vdot(state, state).real) - norm0) / norm0
        if drift > NORM_DRIFT_TOL:
            raise StepSizeError(f"composite norm drifted by {drift:.3g} at t={ts[i + 2]:.6g}")
    return frames


def simulate_dilated(model: ChiralTwoBandModel, k: float, psi0, config: DilationConfig,
                     max_doublings: int = MAX_M0_DOUBLINGS):
    """RK4 integration of the dilated Schrodinger equation, one frame per step.

    m0 is doubled (at most ``max_doublings`` times) while the metric window
    check fails. Returns (frames, m0 actually used).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (2,) or abs(np.linalg.norm(psi0) - 1) > 1e-12:
        raise ParameterDomainError("psi0 must be a normalized 2-vector")
    cfg = config
    for attempt in range(max_doublings + 1):
        try:
            return _simulate_once(model, k, psi0, cfg), cfg.m0
        except WindowExceededError:
            if attempt == max_doublings:
                raise
            cfg = DilationConfig(2 * cfg.m0, cfg.t_max, cfg.n_steps, cfg.k)


def max_infidelity(frames):
    return max(f.infidelity for f in frames)


def norm_drift(frames):
    n = np.array([np.vdot(f.state, f.state).real for f in frames])
    return float(np.max(np.abs(n - n[0])) / n[0])
