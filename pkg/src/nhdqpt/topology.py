"""Gap closings, exceptional points, winding numbers and phase diagrams."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .bloch import PAULI, ChiralTwoBandModel, build_model, dispersion, hamiltonian
from .errors import (
    DegenerateGeometryError,
    GaplessError,
    InsufficientGridError,
    ParameterDomainError,
    UnsupportedModelError,
)

DEFAULT_NK = 4097
GAPLESS_TOL = 1e-8


def wrap_momentum(k):
    """Map momenta onto [-pi, pi)."""
    return (np.asarray(k, dtype=float) + np.pi) % (2 * np.pi) - np.pi


def _dedupe(ks, tol=1e-9):
    out = []
    for k in sorted(float(x) for x in wrap_momentum(ks)):
        if all(abs(math.remainder(k - q, 2 * math.pi)) > tol for q in out):
            out.append(k)
    return out


def gap_condition(model, k):
    """Residuals of the two gap-closing conditions at k.

    Returns (|h|^2 - |g|^2, h.g); E(k) = 0 exactly when both vanish.
    """
    ha, hb, ga, gb = model.profiles(k)
    return ha**2 + hb**2 - ga**2 - gb**2, ha * ga + hb * gb


def _periodic_roots(fun, n_grid=4096, tol=1e-12):
    """Roots of a smooth 2pi-periodic real function on [-pi, pi)."""
    k = -np.pi + 2 * np.pi * np.arange(n_grid) / n_grid
    f = fun(k)
    roots = list(k[f == 0.0])
    k_next = np.append(k[1:], np.pi)
    f_next = np.append(f[1:], f[0])
    for i in np.nonzero(f * f_next < 0)[0]:
        roots.append(brentq(fun, k[i], k_next[i], xtol=1e-15, rtol=1e-15))
    # touching roots show no sign change; look at local minima of |f|
    a = np.abs(f)
    lm = np.nonzero((a <= np.roll(a, 1)) & (a <= np.roll(a, -1)) & (a > 0))[0]
    step = 2 * np.pi / n_grid
    for i in lm:
        res = minimize_scalar(
            lambda x: abs(fun(x)), bounds=(k[i] - step, k[i] + step), method="bounded",
            options={"xatol": 1e-14},
        )
        if abs(fun(res.x)) <= tol:
            roots.append(res.x)
    return _dedupe(roots)


@dataclass
class GaplessSet:
    """Solutions of the gap-closing conditions.

    ``candidates`` solve h.g = 0 (the condition shared with the DQPT
    critical-momentum problem); ``momenta`` are the candidates that also
    satisfy |h|^2 = |g|^2, i.e. where the spectrum actually closes.
    """

    candidates: list
    norm_residuals: list
    dot_residuals: list
    momenta: list
    degenerate: bool = False


def _closed_form_candidates(model):
    p = model.params
    if model.family == "lkc":
        if p.v == 0:
            return None
        if p.J == 0:
            return None if p.u == 0 else []
        x = -p.u / p.J
        if abs(x) > 1:
            return []
        k0 = math.acos(x)
        return _dedupe([k0, -k0])
    if model.family == "nnn_lkc":
        if p.v == 0:
            return None
        if p.J2 == 0:
            if p.J1 == 0:
                return None if p.u == 0 else []
            xs = [-p.u / p.J1]
        else:
            disc = p.J1**2 + 8 * p.J2 * (p.J2 - p.u)
            if disc < 0:
                return []
            xs = [(-p.J1 + s * math.sqrt(disc)) / (4 * p.J2) for s in (1, -1)]
        ks = []
        for x in xs:
            if abs(x) <= 1:
                k0 = math.acos(x)
                ks += [k0, -k0]
        return _dedupe(ks)
    if model.family == "nrssh":
        return _dedupe([0.0, math.pi])
    return None


def gap_candidates(model):
    """Momenta solving h.g = 0, plus a flag when that condition holds identically."""
    ks = _closed_form_candidates(model)
    if ks is not None:
        return ks, False
    dot = lambda k: gap_condition(model, k)[1]  # noqa: E731
    grid = np.linspace(-np.pi, np.pi, 1024, endpoint=False)
    if np.max(np.abs(dot(grid))) == 0.0:
        return [], True
    return _periodic_roots(dot), False


def gapless_momenta(model: ChiralTwoBandModel, tol: float = 1e-10) -> GaplessSet:
    if not tol > 0:
        raise ParameterDomainError("tol must be positive")
    cands, degenerate = gap_candidates(model)
    if degenerate:
        # h.g vanishes everywhere, so the gap closes wherever |h| = |g|
        norm = lambda k: gap_condition(model, k)[0]  # noqa: E731
        cands = _periodic_roots(norm)
    if cands:
        norm_res, dot_res = (list(map(float, r)) for r in gap_condition(model, np.array(cands)))
    else:
        norm_res, dot_res = [], []
    momenta = [k for k, a, b in zip(cands, norm_res, dot_res) if abs(a) <= tol and abs(b) <= tol]
    return GaplessSet(cands, norm_res, dot_res, momenta, degenerate)


@dataclass
class ExceptionalPoints:
    axes: tuple
    points: np.ndarray  # shape (2, 2), coordinates on the (h_a, h_b) plane
    hermitian_limit: bool = False

    def on_plane(self, axes):
        """Coordinates re-ordered onto the plane spanned by ``axes``."""
        if tuple(axes) == self.axes:
            return self.points.copy()
        if tuple(axes) == self.axes[::-1]:
            return self.points[:, ::-1].copy()
        raise ValueError(f"axes {axes} do not span the model plane {self.axes}")


def exceptional_points(model: ChiralTwoBandModel) -> ExceptionalPoints:
    """Points of the (h_a, h_b) plane where E = 0 for a constant loss vector g.

    They sit at +-(g_b, -g_a): orthogonal to g with magnitude |g|.
    """
    g = model.loss_vector
    if g is None:
        raise UnsupportedModelError("exceptional points need a k-independent loss vector")
    ga, gb = g
    pts = np.array([[gb, -ga], [-gb, ga]], dtype=float)
    return ExceptionalPoints(model.axes, pts, hermitian_limit=(ga == 0 and gb == 0))


@dataclass
class WindingResult:
    w: float
    method: str
    grid_size: int
    imag_accumulated: float = 0.0
    max_increment: float = 0.0


def _angle_increments(z):
    return np.angle(z[1:] / z[:-1])


def winding_number(
    model: ChiralTwoBandModel,
    n_k: int = DEFAULT_NK,
    tol: float = GAPLESS_TOL,
    max_doublings: int = 4,
) -> WindingResult:
    """Winding of the complex angle phi(k) = arctan(d_b / d_a) over one period.

    With z_pm = d_a +- i d_b one has exp(2 i phi) = z_+ / z_-, so
    Re phi = (arg z_+ - arg z_-) / 2 and w = (W[z_+] - W[z_-]) / 2. Each
    argument is accumulated from principal-value increments between adjacent
    grid points; the grid is doubled until every increment stays below pi/2.
    Im phi = -ln|z_+/z_-| / 2 is periodic, so its accumulated change is zero.
    """
    if n_k < 64:
        raise ParameterDomainError("winding_number needs n_k >= 64")
    n = int(n_k)
    for _ in range(max_doublings + 1):
        k = np.linspace(-np.pi, np.pi, n)
        da, db = model.coefficients(k)
        zp, zm = da + 1j * db, da - 1j * db
        # |E|^2 = |z_+||z_-|, so the smaller factor is the sharper gap test
        if min(np.abs(zp).min(), np.abs(zm).min()) < tol:
            raise GaplessError("spectrum closes on the grid; the winding number is ill-defined")
        ip, im = _angle_increments(zp), _angle_increments(zm)
        biggest = float(max(np.abs(ip).max(), np.abs(im).max()))
        if biggest <= np.pi / 2:
            w = (ip.sum() - im.sum()) / (4 * np.pi)
            if abs(2 * w - round(2 * w)) > 1e-6:
                raise GaplessError(f"winding {w:.6g} is not half-integer; the gap is numerically closed")
            w = round(2 * w) / 2 if abs(2 * w - round(2 * w)) < 1e-9 else w
            lr = np.log(np.abs(zp / zm))
            imag_acc = float(-0.5 * (lr[-1] - lr[0]))
            return WindingResult(float(w), "angle-integration", n, imag_acc, biggest)
        n = 2 * (n - 1) + 1
    raise InsufficientGridError(
        f"angle increments still exceed pi/2 at n_k={n}; model is too close to a gap closing"
    )


def _signed_crossings(vx, vy, px, py):
    """Winding number of the closed polygon (vx, vy) around (px, py) by ray crossings."""
    x0, y0, x1, y1 = vx[:-1], vy[:-1], vx[1:], vy[1:]
    is_left = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
    up = (y0 <= py) & (y1 > py) & (is_left > 0)
    down = (y0 > py) & (y1 <= py) & (is_left < 0)
    return int(up.sum() - down.sum())


def _distance_to_polyline(vx, vy, px, py):
    x0, y0 = vx[:-1], vy[:-1]
    dx, dy = vx[1:] - x0, vy[1:] - y0
    L2 = dx * dx + dy * dy
    s = np.clip(np.where(L2 > 0, ((px - x0) * dx + (py - y0) * dy) / np.where(L2 > 0, L2, 1), 0), 0, 1)
    return float(np.min(np.hypot(x0 + s * dx - px, y0 + s * dy - py)))


def winding_via_ep_enclosure(model: ChiralTwoBandModel, n_k: int = DEFAULT_NK) -> WindingResult:
    """w as half the summed signed enclosures of the two exceptional points by h(k)."""
    eps = exceptional_points(model)
    # sample one period without the duplicate end point, then close the polygon
    # exactly: sin(+-pi) round-off would otherwise leave a gap on the ray y = 0
    k = np.linspace(-np.pi, np.pi, n_k - 1, endpoint=False)
    ha, hb, _, _ = model.profiles(k)
    ha, hb = np.append(ha, ha[0]), np.append(hb, hb[0])
    total = 0
    for px, py in eps.points:
        if _distance_to_polyline(ha, hb, px, py) < 1e-10:
            raise DegenerateGeometryError(f"h(k) passes through the exceptional point ({px}, {py})")
        total += _signed_crossings(ha, hb, px, py)
    return WindingResult(total / 2, "ep-enclosure", n_k)


@dataclass
class SymmetryReport:
    flags: dict
    residuals: dict
    operators: dict

    chiral = property(lambda self: self.flags["chiral"])
    particle_hole = property(lambda self: self.flags["particle_hole"])
    time_reversal = property(lambda self: self.flags["time_reversal"])
    inversion = property(lambda self: self.flags["inversion"])
    pt = property(lambda self: self.flags["pt"])


def _relations(model):
    """(name, operator label, residual function of (H(k), H(-k))) for the model's symmetry set."""
    s0 = PAULI["0"]
    T = lambda m: np.swapaxes(m, -1, -2)  # noqa: E731
    conj = np.conj
    sand = lambda O, m: O @ m @ O.conj().T  # noqa: E731  (all operators are unitary)
    if model.family == "nrssh":
        S, C, P = PAULI["z"], PAULI["z"], PAULI["x"]
        return [
            ("chiral", "sigma_z", lambda H, Hm: sand(S, H) + H),
            ("particle_hole", "sigma_z K", lambda H, Hm: sand(C, conj(H)) + Hm),
            ("time_reversal", "sigma_0 K", lambda H, Hm: sand(s0, conj(H)) - Hm),
            ("inversion", "sigma_x", lambda H, Hm: sand(P, H) - Hm),
            ("pt", "sigma_0 K, k -> -k", lambda H, Hm: conj(Hm) - H),
        ]
    c, a = model.chiral_axis, model.axes[0]
    S, P = PAULI[c], PAULI[a]
    return [
        ("chiral", f"sigma_{c}", lambda H, Hm: sand(S, H) + H),
        ("particle_hole", f"sigma_{c} (transpose)", lambda H, Hm: sand(S, T(H)) + Hm),
        ("time_reversal", "sigma_0 (transpose)", lambda H, Hm: sand(s0, T(H)) - Hm),
        ("inversion", f"sigma_{a}", lambda H, Hm: sand(P, H) - Hm),
        ("pt", f"sigma_{a} (transpose)", lambda H, Hm: sand(P, T(H)) - H),
    ]


def verify_symmetries(model: ChiralTwoBandModel, n_k: int = 257, tol: float = 1e-10) -> SymmetryReport:
    """Check the model's chiral, particle-hole, time-reversal, inversion and PT relations.

    Operator realizations: the LKC family (and generic models) use
    S = C = sigma_c, T = sigma_0 with transposition, P = PT = sigma_a; the
    NRSSH uses S = C = sigma_z with complex conjugation, T = sigma_0 K,
    P = sigma_x, and PT as the antiunitary map H*(-k) -> H(k).
    """
    k = np.linspace(-np.pi, np.pi, n_k)
    H, Hm = hamiltonian(model, k), hamiltonian(model, -k)
    flags, residuals, ops = {}, {}, {}
    for name, label, rel in _relations(model):
        r = float(np.max(np.abs(rel(H, Hm))))
        flags[name] = r <= tol
        residuals[name] = r
        ops[name] = label
    return SymmetryReport(flags, residuals, ops)


def phase_boundary_residual(model: ChiralTwoBandModel) -> float:
    """Function of the parameters that vanishes on the phase boundaries.

    LKC: u^2/J^2 + v^2/Delta^2 - 1, negative on the topological side.
    NNN LKC and NRSSH: the product over the distinct gap-closing candidates
    k0 (one per +-k0 pair) of |g|^2 - |h(k0)|^2. Each factor vanishes on one
    boundary family, so the product changes sign across every single
    boundary crossing.
    """
    p = model.params
    if model.family == "lkc":
        return p.u**2 / p.J**2 + p.v**2 / p.Delta**2 - 1.0
    if model.family not in ("nnn_lkc", "nrssh"):
        raise UnsupportedModelError("phase_boundary_residual is defined for the built-in models only")
    cands, _ = gap_candidates(model)
    reps = []
    for k in cands:
        if all(abs(abs(k) - abs(q)) > 1e-9 for q in reps):
            reps.append(k)
    if not reps:
        return math.inf
    norm, _ = gap_condition(model, np.array(reps))
    return float(np.prod(-np.asarray(norm)))


@dataclass(frozen=True)
class ParameterAxis:
    name: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.steps < 2 or not self.stop > self.start:
            raise ParameterDomainError(f"degenerate parameter axis {self}")

    @property
    def values(self):
        return np.linspace(self.start, self.stop, self.steps)


@dataclass
class PhaseDiagramGrid:
    family: str
    axis1: ParameterAxis
    axis2: ParameterAxis
    fixed: dict
    values: np.ndarray  # w, NaN where status != "ok"
    status: np.ndarray  # "ok" | "boundary" | "invalid"
    n_k: int = DEFAULT_NK
    extras: dict = field(default_factory=dict)


def _winding_cell(family, params, n_k):
    try:
        model = build_model(family, **params)
    except ParameterDomainError:
        return math.nan, "invalid"
    try:
        return winding_number(model, n_k).w, "ok"
    except (GaplessError, InsufficientGridError):
        return math.nan, "boundary"


def _phase_row(args):
    family, fixed, name1, x, name2, ys, n_k = args
    return [_winding_cell(family, {**fixed, name1: x, name2: y}, n_k) for y in ys]


def phase_diagram(
    family: str,
    axis1: ParameterAxis,
    axis2: ParameterAxis,
    fixed: dict | None = None,
    n_k: int = DEFAULT_NK,
    workers: int = 1,
) -> PhaseDiagramGrid:
    """Winding number on a rectangular grid of two model parameters.

    Rows follow ``axis1``; cells where the gap closes on the k grid are
    flagged "boundary", parameter points outside a model's domain "invalid".
    """
    fixed = dict(fixed or {})
    ys = axis2.values
    jobs = [(family, fixed, axis1.name, float(x), axis2.name, ys, n_k) for x in axis1.values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_phase_row, jobs))
    else:
        rows = [_phase_row(j) for j in jobs]
    values = np.array([[w for w, _ in row] for row in rows], dtype=float)
    status = np.array([[s for _, s in row] for row in rows], dtype=object)
    return PhaseDiagramGrid(family, axis1, axis2, fixed, values, status, n_k)
