"""Total, dynamical and geometric phases of the return amplitude, and the DTOP.

The DTOP nu(t) is the winding of the geometric phase Phi_G(k, t) along k at
fixed t, over half the Brillouin zone [0, pi] for the inversion-symmetric
LKC family and over the whole zone otherwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .bloch import PAULI, ChiralTwoBandModel, dispersion, hamiltonian
from .errors import CriticalTimeError, EPDegeneracyError, InsufficientGridError, UndefinedPhaseError
from .quench import critical_set, return_amplitude

ZERO_G = 1e-14
SERIES_X = 1e-4
INVERSION_SYMMETRIC = ("lkc", "nnn_lkc")

EP_E2_TOL = 1e-12


def total_phase(model: ChiralTwoBandModel, k, t):
    """Principal argument of G(k, t), in (-pi, pi]."""
    G = return_amplitude(model, k, t)
    if np.any(np.abs(G) <= ZERO_G):
        raise UndefinedPhaseError("total phase is undefined at a zero of G(k, t)")
    phi = np.angle(G)
    return np.where(phi == -np.pi, np.pi, phi)


def _log_cosh_over_x(x):
    """ln(cosh x) / x, analytic at x = 0 (value 0)."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    small = ax < SERIES_X
    xs = np.where(small, 1.0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        big = (np.abs(xs) + np.log1p(np.exp(-2 * np.abs(xs))) - math.log(2)) / xs
    return np.where(small, x / 2 - x**3 / 12, big)


def dynamical_phase_closed(model: ChiralTwoBandModel, k, t):
    """Phi_D = -Re E ln cosh(2 Im E t) / (2 Im E).

    Written as -Re E * t * L(2 Im E t) with L(x) = ln(cosh x)/x so the
    Im E -> 0 limit is taken by the series L(x) = x/2 - x^3/12.
    """
    E = dispersion(model, k)
    t = np.asarray(t, dtype=float)
    return -E.real * t * _log_cosh_over_x(2 * E.imag * t)


@dataclass
class BiorthogonalPair:
    right: np.ndarray  # columns |psi_+>, |psi_->
    left: np.ndarray  # columns |~psi_+>, |~psi_->
    energies: np.ndarray  # (E, -E)

    def reconstruct(self):
        return (self.right * self.energies) @ self.left.conj().T


def biorthogonal_decompose(model: ChiralTwoBandModel, k: float) -> BiorthogonalPair:
    """Right/left eigenvectors with <~psi_s|psi_s'> = delta_ss'."""
    E = complex(dispersion(model, k))
    # E is the square root of a rounded E^2, so an exact EP shows up near sqrt(eps)
    if abs(E) ** 2 <= EP_E2_TOL:
        raise EPDegeneracyError(f"eigenvectors coalesce at the exceptional point k={k}")
    H = hamiltonian(model, float(k))
    vals, R = np.linalg.eig(H)
    if abs(vals[0] - E) > abs(vals[1] - E):
        vals, R = vals[::-1], R[:, ::-1]
    L = np.linalg.inv(R).conj().T
    return BiorthogonalPair(R, L, np.array([E, -E]))


def evolution_pair(pair: BiorthogonalPair, t):
    """(U, U~) at times t from the biorthogonal projectors."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ph = np.exp(-1j * np.multiply.outer(t, pair.energies))  # (nt, 2)
    U = np.einsum("ts,is,js->tij", ph, pair.right, pair.left.conj())
    Ut = np.einsum("ts,is,js->tij", ph, pair.left, pair.right.conj())
    return U, Ut


def trace_ratio_terms(model, k, t, rho0=None):
    """Tr[U~^dag rho0 U H] and Tr[U~^dag rho0 U] at fixed k over times t."""
    pair = biorthogonal_decompose(model, k)
    U, Ut = evolution_pair(pair, t)
    H = hamiltonian(model, float(k))
    rho = PAULI["0"] if rho0 is None else rho0
    core = np.conj(np.swapaxes(Ut, -1, -2)) @ rho @ U
    return np.trace(core @ H, axis1=-2, axis2=-1), np.trace(core, axis1=-2, axis2=-1)


def dynamical_phase_quadrature(model: ChiralTwoBandModel, k: float, t: float, n_t: int = 1024, rho0=None):
    """Phi_D by Simpson quadrature of -Re{Tr[U~^dag U H] / Tr[U~^dag U]} over [0, t]."""
    if n_t < 16:
        raise ValueError("n_t must be at least 16")
    ts = np.linspace(0.0, float(t), n_t + 1)
    num, den = trace_ratio_terms(model, k, ts, rho0)
    return -float(simpson((num / den).real, x=ts))


def geometric_phase(model: ChiralTwoBandModel, k, t):
    return total_phase(model, k, t) - dynamical_phase_closed(model, k, t)


def default_bz(model):
    return "reduced" if model.family in INVERSION_SYMMETRIC else "full"


def _bz_grid(bz, n_k):
    if bz == "reduced":
        return np.linspace(0.0, np.pi, n_k)
    if bz == "full":
        return np.linspace(-np.pi, np.pi, n_k)
    raise ValueError(f"unknown Brillouin-zone range {bz!r}")


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def nearest_critical_time(model, t):
    """Distance from t to the closest critical time of the model (inf if none)."""
    cs = critical_set(model, n_range=(1,))
    best = math.inf
    for T in cs.periods:
        n = max(1, round(t / T + 0.5))
        for m in (n - 1, n, n + 1):
            if m >= 1:
                best = min(best, abs(t - (m - 0.5) * T))
    return best


@dataclass
class DtopValue:
    nu: float
    bz_range: str
    n_k: int
    max_increment: float = 0.0


def dtop(model: ChiralTwoBandModel, t: float, n_k: int = 4097, bz: str | None = None,
         max_doublings: int = 2, check_critical: bool = True) -> DtopValue:
    """nu(t) = (1/2pi) * sum of nearest-branch increments of Phi_G along k."""
    if n_k < 256:
        raise ValueError("dtop needs n_k >= 256")
    bz = bz or default_bz(model)
    if check_critical and nearest_critical_time(model, t) < 1e-6:
        raise CriticalTimeError(f"t={t} is within 1e-6 of a critical time")
    n = int(n_k)
    for _ in range(max_doublings + 1):
        pg = geometric_phase(model, _bz_grid(bz, n), t)
        inc = _wrap(np.diff(pg))
        biggest = float(np.max(np.abs(inc)))
        if biggest <= np.pi / 2:
            return DtopValue(float(inc.sum() / (2 * np.pi)), bz, n, biggest)
        n = 2 * (n - 1) + 1
    raise InsufficientGridError(f"geometric-phase increments exceed pi/2 at n_k={n}")


def _dtop_one(args):
    model, t, n_k, bz = args
    return dtop(model, t, n_k, bz).nu


def dtop_series(model, times, n_k=4097, bz=None, workers=1):
    jobs = [(model, float(t), n_k, bz) for t in times]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(_dtop_one, jobs)))
    return np.array([_dtop_one(j) for j in jobs])


@dataclass
class DtopJump:
    t_c: float
    raw: float  # nu(t_c + delta) - nu(t_c - delta)
    boundary_drift: float  # continuous change of the end-point term over the same interval
    jump: float  # raw - boundary_drift: the discontinuity of nu at t_c


def dtop_jump(model: ChiralTwoBandModel, t_c: float, delta: float = 0.05, n_k: int = 4097,
              bz: str | None = None, n_t: int = 2001) -> DtopJump:
    """Discontinuity of nu(t) across t_c, measured at t_c +- delta.

    On a range [k0, k1] the accumulated increments equal
    [Phi_G(k1) - Phi_G(k0)] / 2pi plus an integer, and only the integer part
    can jump. The end-point term varies smoothly in t and is tracked
    continuously between the two offsets, then removed. On the full zone the
    end points coincide and the drift is identically zero.
    """
    bz = bz or default_bz(model)
    before = dtop(model, t_c - delta, n_k, bz).nu
    after = dtop(model, t_c + delta, n_k, bz).nu
    drift = 0.0
    if bz == "reduced":
        ts = np.linspace(t_c - delta, t_c + delta, n_t)
        ends = []
        for kk in (0.0, np.pi):
            phi = np.unwrap(total_phase(model, np.full_like(ts, kk), ts))
            ends.append(phi - dynamical_phase_closed(model, kk, ts))
        edge = ends[1] - ends[0]
        drift = float((edge[-1] - edge[0]) / (2 * np.pi))
    raw = after - before
    return DtopJump(t_c, raw, drift, raw - drift)


def phase_heatmap(model, ks, ts):
    """Phi_G on a (t, k) grid: wrapped to (-pi, pi] and unwrapped along t."""
    K, T = np.meshgrid(np.asarray(ks, float), np.asarray(ts, float))
    G = return_amplitude(model, K, T)
    with np.errstate(divide="ignore"):
        total = np.angle(G)
    pg = total - dynamical_phase_closed(model, K, T)
    wrapped = _wrap(pg)
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    unwrapped = np.unwrap(pg, axis=0)
    return wrapped, unwrapped
