"""Exit criteria of the package, each at its stated tolerance and time budget.

Every criterion prints one PASS/FAIL line; the lines are also collected in
the terminal summary.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from nhdqpt.bloch import build_model, dispersion, hamiltonian
from nhdqpt.dilation import DilationConfig, max_infidelity, simulate_dilated
from nhdqpt.dynphase import (
    dtop_jump,
    dtop_series,
    dynamical_phase_closed,
    dynamical_phase_quadrature,
    geometric_phase,
    trace_ratio_terms,
)
from nhdqpt.quench import critical_set, detect_cusps, rate_trace, return_amplitude
from nhdqpt.topology import winding_number

from .conftest import ACCEPTANCE_LINES
from .oracles import expm_taylor_batch

pytestmark = pytest.mark.acceptance


@contextmanager
def criterion(number, title, budget):
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        if status == "PASS" and elapsed >= budget:
            status = "FAIL"
        line = f"criterion {number}: {status} {title} ({elapsed:.2f} s, budget {budget:g} s)"
        print(line)
        ACCEPTANCE_LINES.append(line)
    assert elapsed < budget, f"criterion {number} took {elapsed:.2f} s, budget {budget} s"


def lkc(v, u=0.0):
    return build_model("lkc", J=1, Delta=1, u=u, v=v)


def nnn(v):
    return build_model("nnn_lkc", J1=1, J2=1.5, Delta1=1, Delta2=1.5, u=0.5, v=v)


def nrssh(J2, gamma, J1=0.5):
    return build_model("nrssh", J1=J1, J2=J2, gamma=gamma)


def random_model(rng):
    family = rng.choice(["lkc", "nnn_lkc", "nrssh"])
    if family == "lkc":
        return build_model("lkc", J=rng.uniform(0.2, 1.5), Delta=rng.uniform(0.2, 1.5),
                           u=rng.uniform(-1, 1), v=rng.uniform(-1, 1))
    if family == "nnn_lkc":
        return build_model("nnn_lkc", J1=rng.uniform(0.2, 1.5), J2=rng.uniform(0.2, 1.5),
                           Delta1=rng.uniform(0.2, 1.5), Delta2=rng.uniform(0.2, 1.5),
                           u=rng.uniform(-1, 1), v=rng.uniform(-1, 1))
    return build_model("nrssh", J1=rng.uniform(-1, 1), J2=rng.uniform(0.1, 1.5), gamma=rng.uniform(0.05, 1))


def test_lkc_winding():
    with criterion(1, "LKC winding numbers w(v=0.3)=1, w(v=1.3)=0", 1.0):
        assert abs(winding_number(lkc(0.3), 4097).w - 1) <= 1e-6
        assert abs(winding_number(lkc(1.3), 4097).w - 0) <= 1e-6


def test_lkc_phase_boundary():
    with criterion(2, "LKC winding jumps 1 -> 0 across v = 1 within 1e-4", 5.0):
        vs = np.concatenate([np.linspace(0.0, 0.99, 34), np.linspace(1.01, 2.0, 34)])
        ws = [winding_number(lkc(v)).w for v in vs]
        assert all(w == 1.0 for w, v in zip(ws, vs) if v < 1) and all(w == 0.0 for w, v in zip(ws, vs) if v > 1)
        # bisection on the sign change; the bracket is skewed so no midpoint lands on v = 1
        lo, hi = 0.99, 1.0137
        while hi - lo > 5e-5:
            mid = 0.5 * (lo + hi)
            if winding_number(lkc(mid)).w == 1.0:
                lo = mid
            else:
                hi = mid
        assert lo <= 1.0 <= hi and hi - lo <= 1e-4
        assert winding_number(lkc(1 - 1e-4)).w == 1.0 and winding_number(lkc(1 + 1e-4)).w == 0.0


def test_lkc_cusps():
    with criterion(3, "LKC rate-function cusps at t_1..t_3 within 2e-3 (dt = 1e-3)", 30.0):
        trace = rate_trace(lkc(0.3), 0.0, 10.0, 1e-3)
        cusps = detect_cusps(trace)
        targets = [(n - 0.5) * math.pi / math.sqrt(0.91) for n in (1, 2, 3)]
        assert len(cusps) == 3
        for t_n in targets:
            assert min(abs(c - t_n) for c in cusps) <= 2e-3


def test_nnn_three_phases():
    with criterion(4, "NNN LKC w = 2/1/0 with 2/1/0 critical periods", 10.0):
        for v, w, periods in [(0.4, 2, 2), (1.4, 1, 1), (2.4, 0, 0)]:
            m = nnn(v)
            assert abs(winding_number(m, 4097).w - w) <= 1e-6
            assert len(critical_set(m).distinct_periods()) == periods


def test_nrssh_three_phases():
    with criterion(5, "NRSSH w = 1/(1/2)/0 with k_c sets {0,pi}/{0}/empty", 10.0):
        for (J2, g), w, ks in [((0.8, 0.2), 1.0, {0.0, math.pi}), ((0.4, 0.5), 0.5, {0.0}), ((0.2, 0.8), 0.0, set())]:
            m = nrssh(J2, g)
            assert abs(winding_number(m, 4097).w - w) <= 1e-6
            got = {round(abs(k), 12) for k in critical_set(m).momenta}
            assert got == {round(k, 12) for k in ks}


def test_nrssh_anomalous_row():
    with criterion(6, "NRSSH (0.5, 0.2, 0.1): w = 0 with DQPTs at k = 0 and k = pi", 5.0):
        m = nrssh(0.2, 0.1)
        assert abs(0.5 + 0.2) > 0.1 and abs(0.5 - 0.2) > 0.1
        assert abs(winding_number(m, 4097).w) <= 1e-6
        cs = critical_set(m)
        assert {round(abs(k), 12) for k in cs.momenta} == {0.0, round(math.pi, 12)}
        assert all(cs.times[(k, 1)] > 0 for k in cs.momenta)


def _assert_unit_jumps(model, times):
    jumps = [dtop_jump(model, t).jump for t in times]
    assert all(abs(abs(j) - 1) <= 1e-3 for j in jumps), jumps
    return jumps


def test_dtop_quantized_jumps():
    with criterion(7, "DTOP |jump| = 1 +- 1e-3 at every plotted critical time; monotonic for w = 1/2", 60.0):
        # LKC: t_1..t_6
        cs = critical_set(lkc(0.3), range(1, 7))
        assert len(cs.sorted_times()) == 6
        _assert_unit_jumps(lkc(0.3), cs.sorted_times())

        # NNN v = 0.4: eight ticks interleaving the k_c^+ and k_c^- families
        m = nnn(0.4)
        cs = critical_set(m, range(1, 7))
        fam = cs.families()
        k_plus = math.acos((-1 + math.sqrt(13)) / 6)
        T_plus = next(T for T, ks in fam.items() if any(abs(abs(k) - k_plus) < 1e-6 for k in ks))
        T_minus = next(T for T in fam if T != T_plus)
        labelled = sorted([((n - 0.5) * T_plus, "+", n) for n in range(1, 7)]
                          + [((n - 0.5) * T_minus, "-", n) for n in range(1, 7)])[:8]
        assert [(s, n) for _, s, n in labelled] == [("+", 1), ("-", 1), ("+", 2), ("+", 3),
                                                    ("+", 4), ("-", 2), ("+", 5), ("+", 6)]
        _assert_unit_jumps(m, [t for t, _, _ in labelled])

        # NNN v = 1.4: t_n(k_c^+), n = 1..5
        cs = critical_set(nnn(1.4), range(1, 6))
        assert len(cs.distinct_periods()) == 1
        _assert_unit_jumps(nnn(1.4), cs.sorted_times())

        # NRSSH panels: the first six critical times of each
        for J2, g in [(0.8, 0.2), (0.4, 0.5)]:
            m = nrssh(J2, g)
            times = critical_set(m, range(1, 7)).sorted_times()[:6]
            jumps = _assert_unit_jumps(m, times)
            if (J2, g) == (0.4, 0.5):
                assert len({np.sign(j) for j in jumps}) == 1
                nus = dtop_series(m, [0.5 * times[0]] + [t + 0.05 for t in times])
                assert np.all(np.sign(jumps[0]) * np.diff(nus) > 0.5)


def test_dynamical_phase_identity():
    with criterion(8, "closed-form dynamical phase vs Simpson (1e-6, 1000 samples); trace identities (1e-10)", 10.0):
        rng = np.random.default_rng(2024)
        worst_phase = worst_trace = 0.0
        done = 0
        while done < 1000:
            m, k, t = random_model(rng), rng.uniform(-math.pi, math.pi), rng.uniform(0, 3)
            E = complex(dispersion(m, k))
            if abs(E) < 1e-3:
                continue
            done += 1
            worst_phase = max(worst_phase, abs(dynamical_phase_closed(m, k, t) - dynamical_phase_quadrature(m, k, t)))
            num, den = trace_ratio_terms(m, k, np.array([t]))
            worst_trace = max(worst_trace, abs(den[0] - 2 * math.cosh(2 * E.imag * t)),
                              abs(num[0] - 2 * E * math.sinh(2 * E.imag * t)))
        assert worst_phase <= 1e-6, worst_phase
        assert worst_trace <= 1e-10, worst_trace


def test_return_amplitude_oracle():
    with criterion(9, "return amplitude cos(E t) vs series exponential (1e-10, 10^4 samples)", 5.0):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            m = random_model(rng)
            k, t = rng.uniform(-math.pi, math.pi, 100), rng.uniform(0, 3, 100)
            ref = 0.5 * np.trace(expm_taylor_batch(-1j * t[:, None, None] * hamiltonian(m, k)), axis1=-2, axis2=-1)
            worst = max(worst, float(np.max(np.abs(return_amplitude(m, k, t) - ref))))
        assert worst <= 1e-10, worst


def test_geometric_phase_parity():
    with criterion(10, "geometric phase even in k for LKC/NNN LKC, not for NRSSH", 5.0):
        k = np.linspace(0.01, math.pi - 0.01, 400)
        ts = np.linspace(0.1, 10, 40)
        for m in (lkc(0.3), nnn(0.4), nnn(1.4)):
            for t in ts:
                assert np.max(np.abs(geometric_phase(m, k, t) - geometric_phase(m, -k, t))) <= 1e-10
        m = nrssh(0.8, 0.2)
        worst = max(np.max(np.abs(geometric_phase(m, k, t) - geometric_phase(m, -k, t))) for t in ts)
        assert worst > 1e-6


def test_dilation_equivalence():
    with criterion(11, "dilated evolution reproduces direct evolution (infidelity 1e-6, Hermiticity 1e-8)", 60.0):
        rng = np.random.default_rng(11)
        psi0 = np.array([1.0, 0.0])
        for m in (lkc(0.3), nnn(0.4), nrssh(0.8, 0.2)):
            for k in rng.uniform(-math.pi, math.pi, 5):
                frames, _ = simulate_dilated(m, k, psi0, DilationConfig(m0=20, t_max=3, n_steps=3000, k=k))
                assert frames[-1].t == pytest.approx(3.0)
                assert max_infidelity(frames) <= 1e-6
                assert max(f.hermiticity_residual for f in frames) <= 1e-8
