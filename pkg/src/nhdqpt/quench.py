"""Infinite-temperature quench: return amplitude, critical times, rate function."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter

from .bloch import ChiralTwoBandModel, dispersion
from .errors import DegenerateTraceError, GaplessError, ParameterDomainError, UnsupportedModelError
from .topology import WindingResult, gap_candidates, gap_condition, winding_number, wrap_momentum

DEFAULT_N_RANGE = range(1, 9)
RATE_NK = 4096
CUSP_THRESHOLD = 50.0
CUSP_WINDOW = 25


def return_amplitude(model: ChiralTwoBandModel, k, t):
    """G(k, t) = Tr[rho0 U(k, t)] = cos(E(k) t) for rho0 = 1/2."""
    return np.cos(dispersion(model, k) * np.asarray(t, dtype=float))


@dataclass
class CriticalSet:
    """Critical momenta with their periods T = pi / E(k_c) and times t_n = (n - 1/2) T."""

    momenta: list
    periods: list
    times: dict  # (k_c, n) -> t_n(k_c)
    n_range: tuple
    unobservable: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def empty(self):
        return not self.momenta

    def distinct_periods(self, rtol=1e-9):
        out = []
        for T in sorted(self.periods):
            if not out or abs(T - out[-1]) > rtol * T:
                out.append(T)
        return out

    def sorted_times(self, t_max=math.inf):
        """All distinct critical times up to t_max, merged across momenta."""
        ts = sorted({round(t, 12) for t in self.times.values() if t <= t_max})
        return ts

    def families(self):
        """Period -> list of momenta sharing it (e.g. +-k_c)."""
        fam = {}
        for k, T in zip(self.momenta, self.periods):
            key = next((q for q in fam if abs(q - T) <= 1e-9 * T), T)
            fam.setdefault(key, []).append(k)
        return fam


def _critical_energy_squared(model, k):
    """E(k_c)^2 at a root of h.g = 0, where it is real and equals |h|^2 - |g|^2."""
    p = model.params
    if model.family == "lkc":
        return p.Delta**2 * math.sin(k) ** 2 - p.v**2
    if model.family == "nnn_lkc":
        return (p.Delta1 * math.sin(k) + p.Delta2 * math.sin(2 * k)) ** 2 - p.v**2
    if model.family == "nrssh":
        # (J1 + J2 cos k)^2 - gamma^2 at k in {0, pi}
        s = p.J1 + p.J2 * math.cos(k)
        return (s - p.gamma) * (s + p.gamma)
    return float(gap_condition(model, k)[0])


def critical_set(
    model: ChiralTwoBandModel,
    n_range=DEFAULT_N_RANGE,
    tol: float = 1e-10,
) -> CriticalSet:
    """Critical momenta (h.g = 0 and |h| > |g| strictly) and their critical times.

    Candidates at which |h| = |g| within ``tol`` would have divergent critical
    times; they are listed in ``unobservable`` rather than returned. When
    h.g = 0 holds for every k (Hermitian limit) there are no isolated critical
    momenta and the set is flagged ``degenerate``.
    """
    n_range = tuple(n_range)
    cands, degenerate = gap_candidates(model)
    if degenerate:
        return CriticalSet([], [], {}, n_range, degenerate=True)
    momenta, periods, times, unobs = [], [], {}, []
    for k in cands:
        e2 = _critical_energy_squared(model, k)
        if abs(e2) <= tol:
            unobs.append(k)
            continue
        if e2 < 0:
            continue
        T = math.pi / math.sqrt(e2)
        momenta.append(k)
        periods.append(T)
        for n in n_range:
            times[(k, n)] = (n - 0.5) * T
    return CriticalSet(momenta, periods, times, n_range, unobs)


def bz_midpoints(n_k: int):
    return -np.pi + (np.arange(n_k) + 0.5) * (2 * np.pi / n_k)


def _log_abs_cos_sq(x, y):
    """ln|cos(x + i y)|^2 without overflow for large |y|."""
    ay = np.abs(y)
    e2 = np.exp(-2 * ay)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 2 * ay - math.log(4) + np.log1p(e2 * e2 + 2 * e2 * np.cos(2 * x))


def _rate_chunk(args):
    E, ts = args
    phase = np.multiply.outer(ts, E)
    L = _log_abs_cos_sq(phase.real, phase.imag)
    return -L.mean(axis=1)


def rate_function(model: ChiralTwoBandModel, t, n_k: int = RATE_NK, workers: int = 1, chunk: int = 256):
    """g(t) = -(1/2pi) int dk ln|G(k,t)|^2 by the midpoint rule on n_k points.

    The midpoint grid k_j = -pi + (j + 1/2) 2pi/n_k avoids k = 0, +-pi/2, pi
    when n_k is a multiple of 4, which keeps the built-in critical momenta off
    the grid. A grid point sitting exactly on a zero of G gives +inf.
    """
    if n_k < 64:
        raise ParameterDomainError("rate_function needs n_k >= 64")
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ParameterDomainError("rate_function needs t >= 0")
    E = dispersion(model, bz_midpoints(n_k))
    jobs = [(E, ts[i : i + chunk]) for i in range(0, len(ts), chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_rate_chunk, jobs))
    else:
        parts = [_rate_chunk(j) for j in jobs]
    g = np.concatenate(parts) if parts else np.empty(0)
    return float(g[0]) if scalar else g


@dataclass
class QuenchTrace:
    times: np.ndarray
    rate: np.ndarray
    n_k: int


def rate_trace(model, t_min, t_max, dt, n_k=RATE_NK, workers=1) -> QuenchTrace:
    n = int(round((t_max - t_min) / dt)) + 1
    times = t_min + dt * np.arange(n)
    return QuenchTrace(times, rate_function(model, times, n_k, workers), n_k)


def detect_cusps(trace: QuenchTrace, jump_threshold: float = CUSP_THRESHOLD, window: int = CUSP_WINDOW):
    """Times where g(t) has a first-derivative discontinuity.

    A sample is flagged when its centered second difference exceeds
    ``jump_threshold`` times the running median of the second difference
    over ``2 * window + 1`` neighbouring samples; adjacent flagged samples
    are merged and the sharpest one kept. The local reference keeps smooth
    curvature from being flagged where the trace turns linear elsewhere.

    The BZ quadrature rounds each kink over a time scale of roughly
    t |dE/dk| (2 pi / n_k) / E(k_c); cusps are only resolved when that is
    below the sampling step.
    """
    t = np.asarray(trace.times, dtype=float)
    g = np.asarray(trace.rate, dtype=float)
    if len(t) < 3:
        raise DegenerateTraceError("cusp detection needs at least 3 samples")
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        raise DegenerateTraceError("cusp detection needs a uniformly sampled trace")
    d2 = np.abs(g[2:] - 2 * g[1:-1] + g[:-2])
    floor = 1e-12 * max(1.0, float(np.max(np.abs(g[np.isfinite(g)]), initial=0.0)))
    local = median_filter(d2, size=2 * window + 1, mode="nearest")
    flagged = np.nonzero(d2 > jump_threshold * np.maximum(local, floor))[0]
    cusps = []
    start = 0
    for i in range(1, len(flagged) + 1):
        if i == len(flagged) or flagged[i] - flagged[i - 1] > 2:
            group = flagged[start:i]
            if len(group):
                best = group[np.argmax(d2[group])]
                cusps.append(float(t[best + 1]))
            start = i
    return cusps


@dataclass(frozen=True)
class TableRow:
    condition: str
    picture: str
    w: float | None
    dqpts: str
    critical_momenta: tuple | None = None  # expected k_c (NRSSH)
    n_periods: int | None = None  # expected distinct critical periods


_LKC_ROWS = [
    TableRow("u^2/J^2 + v^2/Delta^2 < 1", "two EPs are encircled by h(k)", 1.0,
             "DQPTs at t_n(k_c) for all n, k_c = k_0", n_periods=1),
    TableRow("u^2/J^2 + v^2/Delta^2 = 1", "two EPs are crossed by h(k)", None, "ill-defined"),
    TableRow("u^2/J^2 + v^2/Delta^2 > 1", "no EPs are encircled by h(k)", 0.0,
             "no k_c and t_n, no DQPTs", n_periods=0),
]

_NNN_ROWS = [
    TableRow("h_y^2(k_c^+) > v^2 and h_y^2(k_c^-) > v^2", "two EPs are encircled twice by h(k)", 2.0,
             "DQPTs at t_n(k_c^+-) for all n, k_c^+- = k_0^+-", n_periods=2),
    TableRow("h_y^2(k_c^+/-) > v^2 and h_y^2(k_c^-/+) < v^2", "two EPs are encircled once by h(k)", 1.0,
             "DQPTs at t_n(k_c^+/-) for all n", n_periods=1),
    TableRow("h_y^2(k_c^+-) < v^2", "no EPs are encircled by h(k)", 0.0,
             "no k_c and t_n, no DQPTs", n_periods=0),
]

_NRSSH_ROWS = [
    TableRow("J1 - J2 < -gamma and J1 + J2 > gamma", "two EPs are encircled by h(k)", 1.0,
             "DQPTs at t_n^0 and t_n^pi for all n, k_c = 0, pi", (0.0, math.pi), 2),
    TableRow("J1 - J2 < -gamma and |J1 + J2| < gamma", "one EP is encircled by h(k)", 0.5,
             "DQPTs at t_n^pi for all n, k_c = pi", (math.pi,), 1),
    TableRow("J1 + J2 > gamma and |J1 - J2| < gamma", "one EP is encircled by h(k)", 0.5,
             "DQPTs at t_n^0 for all n, k_c = 0", (0.0,), 1),
    TableRow("|J1 +- J2| < gamma", "no EPs are encircled by h(k)", 0.0,
             "no k_c and t_n, no DQPTs", (), 0),
    TableRow("|J1 +- J2| > gamma", "no EPs are encircled by h(k)", 0.0,
             "DQPTs at t_n^0 and t_n^pi for all n, k_c = 0, pi", (0.0, math.pi), 2),
]

CORRESPONDENCE_TABLES = {"lkc": _LKC_ROWS, "nnn_lkc": _NNN_ROWS, "nrssh": _NRSSH_ROWS}


def match_table_row(model: ChiralTwoBandModel, tol: float = 1e-12) -> TableRow:
    """Row of the model family's correspondence table whose condition the parameters satisfy."""
    p = model.params
    if model.family == "lkc":
        r = p.u**2 / p.J**2 + p.v**2 / p.Delta**2 - 1
        return _LKC_ROWS[1] if abs(r) <= tol else _LKC_ROWS[0] if r < 0 else _LKC_ROWS[2]
    if model.family == "nnn_lkc":
        cands, _ = gap_candidates(model)
        above, seen = 0, []
        for k in cands:
            if any(abs(abs(k) - q) <= 1e-9 for q in seen):
                continue  # +-k_0 share h_y^2
            seen.append(abs(k))
            e2 = _critical_energy_squared(model, k)
            if abs(e2) <= tol:
                raise GaplessError("NNN LKC on a phase boundary")
            above += e2 > 0
        return _NNN_ROWS[2 - min(above, 2)]
    if model.family == "nrssh":
        s, d, g = p.J1 + p.J2, p.J1 - p.J2, p.gamma
        if min(abs(abs(s) - g), abs(abs(d) - g)) <= tol:
            raise GaplessError("NRSSH on a phase boundary")
        if d < -g and s > g:
            return _NRSSH_ROWS[0]
        if d < -g and abs(s) < g:
            return _NRSSH_ROWS[1]
        if s > g and abs(d) < g:
            return _NRSSH_ROWS[2]
        if abs(s) < g and abs(d) < g:
            return _NRSSH_ROWS[3]
        return _NRSSH_ROWS[4]
    raise UnsupportedModelError("correspondence tables exist for the built-in models only")


@dataclass
class DqptReport:
    family: str
    params: dict
    winding: WindingResult
    critical: CriticalSet
    table_row: TableRow
    consistent: bool
    diagnostics: list

    def to_dict(self):
        c = self.critical
        return {
            "family": self.family,
            "params": self.params,
            "winding_number": self.winding.w,
            "winding_grid": self.winding.grid_size,
            "critical_momenta": c.momenta,
            "critical_periods": c.periods,
            "distinct_periods": c.distinct_periods(),
            "critical_times": [
                {"k_c": k, "n": n, "t": t} for (k, n), t in sorted(c.times.items(), key=lambda kv: kv[1])
            ],
            "unobservable_momenta": c.unobservable,
            "table_row": {
                "condition": self.table_row.condition,
                "geometric_picture": self.table_row.picture,
                "w": self.table_row.w,
                "dqpts": self.table_row.dqpts,
            },
            "consistent": self.consistent,
            "diagnostics": self.diagnostics,
        }


def dqpt_report(model: ChiralTwoBandModel, n_k: int = 4097, n_range=DEFAULT_N_RANGE) -> DqptReport:
    """Winding number and DQPT structure, matched against the family's table."""
    if model.family not in CORRESPONDENCE_TABLES:
        raise UnsupportedModelError("dqpt_report needs a built-in model")
    row = match_table_row(model)
    if row.w is None:
        raise GaplessError("model sits on a phase boundary; winding number is ill-defined")
    wr = winding_number(model, n_k)
    crit = critical_set(model, n_range)
    diag = []
    if abs(wr.w - row.w) > 1e-6:
        diag.append(f"winding number {wr.w:g} differs from table value {row.w:g}")
    if row.critical_momenta is None and row.n_periods is not None and len(crit.distinct_periods()) != row.n_periods:
        diag.append(
            f"{len(crit.distinct_periods())} distinct critical periods, table expects {row.n_periods}"
        )
    if row.critical_momenta is not None:
        got = sorted(float(abs(wrap_momentum(k))) for k in crit.momenta)
        want = sorted(row.critical_momenta)
        if len(got) != len(want) or any(abs(a - b) > 1e-9 for a, b in zip(got, want)):
            diag.append(f"critical momenta {got} differ from table {want}")
    params = {k: float(v) for k, v in vars(model.params).items()}
    return DqptReport(model.family, params, wr, crit, row, not diag, diag)
