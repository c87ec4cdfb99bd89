"""Chiral two-band non-Hermitian Bloch Hamiltonians.

A model is H(k) = [h_a(k) - i g_a(k)] sigma_a + [h_b(k) - i g_b(k)] sigma_b
with real, 2pi-periodic profiles stored as truncated Fourier series. The
remaining Pauli axis c gives the chiral operator sigma_c.

All evaluation functions broadcast over numpy arrays of k (and t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ParameterDomainError

AXES = ("x", "y", "z")

PAULI = {
    "0": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# below this |E| the evolution operator uses the nilpotent limit
EPS_E = 1e-12


@dataclass(frozen=True)
class FourierProfile:
    """Real periodic profile  c0 + sum_m cos[m] cos(mk) + sum_m sin[m-1] sin(mk).

    ``cos`` is indexed from m = 0, ``sin`` from m = 1.
    """

    cos: tuple = ()
    sin: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))

    @classmethod
    def constant(cls, value):
        return cls(cos=(value,))

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = np.zeros_like(k)
        for m, c in enumerate(self.cos):
            if c:
                out = out + (c if m == 0 else c * np.cos(m * k))
        for m, s in enumerate(self.sin, start=1):
            if s:
                out = out + s * np.sin(m * k)
        return out

    @property
    def is_constant(self):
        return not any(self.cos[1:]) and not any(self.sin)

    @property
    def is_zero(self):
        return not any(self.cos) and not any(self.sin)


@dataclass(frozen=True)
class LKCParams:
    """Lossy Kitaev chain: hopping J, pairing Delta, chemical potential u, loss v."""

    J: float = 1.0
    Delta: float = 1.0
    u: float = 0.0
    v: float = 0.0


@dataclass(frozen=True)
class NNNLKCParams:
    J1: float = 1.0
    J2: float = 1.5
    Delta1: float = 1.0
    Delta2: float = 1.5
    u: float = 0.5
    v: float = 0.0


@dataclass(frozen=True)
class NRSSHParams:
    """Nonreciprocal SSH. Intracell hoppings J1 +- gamma, intercell J2."""

    J1: float = 0.5
    J2: float = 1.0
    gamma: float = 0.1

    def __post_init__(self):
        if not self.J2 > 0:
            raise ParameterDomainError(f"NRSSH requires J2 > 0, got J2={self.J2}")
        if not self.gamma > 0:
            raise ParameterDomainError(f"NRSSH requires gamma > 0, got gamma={self.gamma}")


Params = Union[LKCParams, NNNLKCParams, NRSSHParams]


@dataclass(frozen=True)
class ChiralTwoBandModel:
    axes: tuple
    h_a: FourierProfile
    h_b: FourierProfile
    g_a: FourierProfile = field(default_factory=FourierProfile)
    g_b: FourierProfile = field(default_factory=FourierProfile)
    family: str = "generic"
    params: Optional[Params] = None

    def __post_init__(self):
        a, b = self.axes
        if a not in AXES or b not in AXES:
            raise ParameterDomainError(f"Pauli axes must be drawn from {AXES}, got {self.axes}")
        if a == b:
            raise ParameterDomainError(f"the two Pauli axes must differ, got {self.axes}")
        object.__setattr__(self, "axes", (a, b))

    @property
    def chiral_axis(self):
        (c,) = set(AXES) - set(self.axes)
        return c

    @property
    def constant_loss(self):
        return self.g_a.is_constant and self.g_b.is_constant

    @property
    def loss_vector(self):
        """(g_a, g_b) for constant-loss models, else None."""
        if not self.constant_loss:
            return None
        return float(self.g_a(0.0)), float(self.g_b(0.0))

    @property
    def is_hermitian(self):
        return self.g_a.is_zero and self.g_b.is_zero

    def profiles(self, k):
        """Return (h_a, h_b, g_a, g_b) evaluated at k."""
        return self.h_a(k), self.h_b(k), self.g_a(k), self.g_b(k)

    def coefficients(self, k):
        """Complex Pauli coefficients (d_a, d_b) = (h_a - i g_a, h_b - i g_b)."""
        ha, hb, ga, gb = self.profiles(k)
        return ha - 1j * ga, hb - 1j * gb

    def components(self, k):
        """Map each Pauli axis label to its (h, g) pair at k."""
        ha, hb, ga, gb = self.profiles(k)
        return {self.axes[0]: (ha, ga), self.axes[1]: (hb, gb)}


def build_lkc(params: LKCParams) -> ChiralTwoBandModel:
    """Lossy Kitaev chain, h_y = Delta sin k, h_z = u + J cos k, loss v on sigma_z.

    The axes are ordered (z, y): with this ordering the winding angle
    arctan(d_b / d_a) advances counterclockwise for Delta, J > 0 and the
    topological phase carries w = +1.
    """
    p = params
    return ChiralTwoBandModel(
        axes=("z", "y"),
        h_a=FourierProfile(cos=(p.u, p.J)),
        h_b=FourierProfile(sin=(p.Delta,)),
        g_a=FourierProfile.constant(p.v),
        g_b=FourierProfile(),
        family="lkc",
        params=p,
    )


def build_nnn_lkc(params: NNNLKCParams) -> ChiralTwoBandModel:
    p = params
    return ChiralTwoBandModel(
        axes=("z", "y"),
        h_a=FourierProfile(cos=(p.u, p.J1, p.J2)),
        h_b=FourierProfile(sin=(p.Delta1, p.Delta2)),
        g_a=FourierProfile.constant(p.v),
        g_b=FourierProfile(),
        family="nnn_lkc",
        params=p,
    )


def build_nrssh(params: NRSSHParams) -> ChiralTwoBandModel:
    p = params
    return ChiralTwoBandModel(
        axes=("x", "y"),
        h_a=FourierProfile(cos=(p.J1, p.J2)),
        h_b=FourierProfile(sin=(p.J2,)),
        g_a=FourierProfile(),
        g_b=FourierProfile.constant(p.gamma),
        family="nrssh",
        params=p,
    )


def build_generic(axes: Sequence[str], h_a, h_b, g_a=None, g_b=None) -> ChiralTwoBandModel:
    """Model from Fourier data; each profile is a FourierProfile or a (cos, sin) pair."""

    def as_profile(p):
        if p is None:
            return FourierProfile()
        if isinstance(p, FourierProfile):
            return p
        cos, sin = p
        return FourierProfile(cos=tuple(cos), sin=tuple(sin))

    return ChiralTwoBandModel(
        axes=tuple(axes),
        h_a=as_profile(h_a),
        h_b=as_profile(h_b),
        g_a=as_profile(g_a),
        g_b=as_profile(g_b),
    )


def build_model(family: str, **params) -> ChiralTwoBandModel:
    """Build one of the built-in models by family name."""
    family = family.lower().replace("-", "_")
    if family == "lkc":
        return build_lkc(LKCParams(**params))
    if family in ("nnn_lkc", "nnnlkc"):
        return build_nnn_lkc(NNNLKCParams(**params))
    if family == "nrssh":
        return build_nrssh(NRSSHParams(**params))
    raise ParameterDomainError(f"unknown model family {family!r}")


def hamiltonian(model: ChiralTwoBandModel, k):
    """H(k) as an array of shape k.shape + (2, 2)."""
    da, db = model.coefficients(k)
    sa, sb = PAULI[model.axes[0]], PAULI[model.axes[1]]
    return np.multiply.outer(da, sa) + np.multiply.outer(db, sb)


def energy_branch(e2):
    """Square root of e2 with Re E >= 0, ties (Re E == 0) broken by Im E >= 0."""
    e = np.sqrt(np.asarray(e2, dtype=complex))
    flip = (e.real < 0) | ((e.real == 0) & (e.imag < 0))
    return np.where(flip, -e, e)


def dispersion(model: ChiralTwoBandModel, k):
    """Upper-branch complex energy E(k); the spectrum is {+E, -E}."""
    da, db = model.coefficients(k)
    return energy_branch(da * da + db * db)


def evolution_operator(model: ChiralTwoBandModel, k, t):
    """U(k, t) = exp(-i H(k) t) in closed form.

    Uses U = cos(Et) - i sin(Et)/E H, which is valid for any traceless 2x2
    generator since H^2 = E^2. At |E| < EPS_E (exceptional points, where H is
    nilpotent) the series truncates to 1 - i t H.
    """
    k, t = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(t, dtype=float))
    H = hamiltonian(model, k)
    E = dispersion(model, k)
    small = np.abs(E) < EPS_E
    Es = np.where(small, 1.0, E)
    c = np.where(small, 1.0, np.cos(Es * t))
    s = np.where(small, t, np.sin(Es * t) / Es)
    return c[..., None, None] * PAULI["0"] - 1j * s[..., None, None] * H
