import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nhdqpt.bloch import build_generic, build_model, dispersion, hamiltonian
from nhdqpt.errors import DegenerateTraceError, GaplessError, ParameterDomainError, UnsupportedModelError
from nhdqpt.quench import (
    CORRESPONDENCE_TABLES,
    QuenchTrace,
    critical_set,
    detect_cusps,
    dqpt_report,
    match_table_row,
    rate_function,
    rate_trace,
    return_amplitude,
)
from nhdqpt.topology import gap_condition

from .oracles import expm_taylor


def lkc(v=0.3, u=0.0):
    return build_model("lkc", J=1, Delta=1, u=u, v=v)


def nnn(v, u=0.5):
    return build_model("nnn_lkc", J1=1, J2=1.5, Delta1=1, Delta2=1.5, u=u, v=v)


def nrssh(J2, gamma, J1=0.5):
    return build_model("nrssh", J1=J1, J2=J2, gamma=gamma)


KP = math.acos((-1 + math.sqrt(13)) / 6)
KM = math.acos((-1 - math.sqrt(13)) / 6)


def hy_nnn(k):
    return math.sin(k) + 1.5 * math.sin(2 * k)


def rate_oracle(model, t):
    """-(1/2pi) int ln|cos(E t)|^2 dk by adaptive quadrature on the raw definition."""
    f = lambda k: -math.log(abs(np.cos(complex(dispersion(model, k)) * t)) ** 2)  # noqa: E731
    return quad(f, -math.pi, math.pi, limit=400, epsabs=1e-11, epsrel=1e-11)[0] / (2 * math.pi)


class TestReturnAmplitude:
    def test_initial(self):
        assert return_amplitude(lkc(), 0.4, 0.0) == 1

    def test_zero_at_first_critical_time(self):
        t1 = math.pi / (2 * math.sqrt(0.91))
        assert abs(return_amplitude(lkc(), math.pi / 2, t1)) < 1e-10

    def test_growth_with_imaginary_energy(self):
        m = lkc()
        k, t = 0.3, 5.0
        y = abs(dispersion(m, k).imag) * t
        g = abs(return_amplitude(m, k, t))
        assert math.sinh(y) <= g <= math.cosh(y)
        assert g / (0.5 * math.exp(y)) == pytest.approx(1.0, abs=2 * math.exp(-2 * y))

    def test_trace_oracle_random(self):
        rng = np.random.default_rng(3)
        models = [lkc(), nnn(0.4), nrssh(0.8, 0.2), nrssh(0.4, 0.5)]
        for i in range(400):
            m = models[i % 4]
            k, t = rng.uniform(-np.pi, np.pi), rng.uniform(0, 6)
            U = expm_taylor(-1j * t * hamiltonian(m, k))
            assert abs(return_amplitude(m, k, t) - 0.5 * np.trace(U)) <= 1e-10 * max(1, abs(np.trace(U)))


class TestCriticalSet:
    def test_lkc(self):
        cs = critical_set(lkc())
        T = math.pi / math.sqrt(0.91)
        assert sorted(cs.momenta) == pytest.approx([-np.pi / 2, np.pi / 2])
        assert cs.periods == pytest.approx([T, T], rel=1e-14)
        assert cs.times[(cs.momenta[0], 1)] == pytest.approx(T / 2, rel=1e-14)
        assert cs.distinct_periods() == pytest.approx([T])

    def test_nnn_middle_row(self):
        cs = critical_set(nnn(1.4))
        assert sorted(cs.momenta) == pytest.approx([-KP, KP], abs=1e-12)
        assert abs(hy_nnn(KM)) < 1.4 < abs(hy_nnn(KP))
        assert cs.periods[0] == pytest.approx(math.pi / math.sqrt(hy_nnn(KP) ** 2 - 1.96), rel=1e-12)

    def test_nnn_two_families(self):
        cs = critical_set(nnn(0.4))
        want = sorted([math.pi / math.sqrt(hy_nnn(k) ** 2 - 0.16) for k in (KP, KM)])
        assert cs.distinct_periods() == pytest.approx(want, rel=1e-12)

    def test_nrssh(self):
        cs = critical_set(nrssh(0.8, 0.2))
        fam = {round(abs(k), 12): T for k, T in zip(cs.momenta, cs.periods)}
        assert fam[0.0] == pytest.approx(math.pi / math.sqrt(1.65), rel=1e-13)
        assert fam[round(math.pi, 12)] == pytest.approx(math.pi / math.sqrt(0.05), rel=1e-12)

    def test_empty_when_trivial(self):
        assert critical_set(lkc(v=1.3)).empty
        assert critical_set(nnn(2.4)).empty
        assert critical_set(nrssh(0.2, 0.8)).empty

    def test_unobservable_on_boundary(self):
        cs = critical_set(lkc(v=1.0))
        assert cs.empty and len(cs.unobservable) == 2

    def test_hermitian_degenerate(self):
        cs = critical_set(lkc(v=0.0))
        assert cs.degenerate and cs.empty

    def test_generic_fallback(self):
        ref = nnn(0.4)
        m = build_generic(ref.axes, ref.h_a, ref.h_b, ref.g_a, ref.g_b)
        a, b = critical_set(m), critical_set(ref)
        assert sorted(a.momenta) == pytest.approx(sorted(b.momenta), abs=1e-10)
        assert sorted(a.periods) == pytest.approx(sorted(b.periods), rel=1e-9)

    @pytest.mark.parametrize("model", [lkc(), nnn(0.4), nnn(1.4), nrssh(0.8, 0.2), nrssh(0.4, 0.5), nrssh(0.2, 0.1)])
    def test_subset_and_periodicity(self, model):
        cs = critical_set(model, range(1, 9))
        for k, T in zip(cs.momenta, cs.periods):
            norm, dot = gap_condition(model, k)
            assert abs(dot) <= 1e-10 and norm > 0
            for n in range(1, 8):
                assert cs.times[(k, n + 1)] - cs.times[(k, n)] == pytest.approx(T, rel=1e-13)
            assert abs(np.cos(dispersion(model, k) * cs.times[(k, 3)])) < 1e-10


class TestRateFunction:
    def test_zero_at_start(self):
        assert rate_function(lkc(), 0.0) == 0.0

    @pytest.mark.parametrize("model, t", [(lkc(), 1.0), (nnn(0.4), 0.5), (nrssh(0.4, 0.5), 3.0), (lkc(v=1.3), 7.0)])
    def test_against_quadrature(self, model, t):
        assert rate_function(model, t) == pytest.approx(rate_oracle(model, t), abs=1e-6)

    def test_convergence_off_critical(self):
        for m in (lkc(), nnn(0.4), nrssh(0.8, 0.2)):
            crit = critical_set(m, range(1, 12)).sorted_times()
            ts = [t for t in np.linspace(0.1, 9.9, 25) if min(abs(t - c) for c in crit) >= 0.05]
            a, b = rate_function(m, np.array(ts), 2049), rate_function(m, np.array(ts), 8193)
            assert np.max(np.abs(a - b)) <= 1e-4

    def test_branch_independence(self):
        m = nnn(0.4)
        k = -np.pi + (np.arange(4096) + 0.5) * 2 * np.pi / 4096
        E = dispersion(m, k)
        for t in (0.3, 2.9, 7.7):
            plus = -np.mean(np.log(np.abs(np.cos(E * t)) ** 2))
            minus = -np.mean(np.log(np.abs(np.cos(-E * t)) ** 2))
            assert rate_function(m, t) == pytest.approx(plus, abs=1e-12)
            assert plus == pytest.approx(minus, abs=1e-12)

    def test_large_time_no_overflow(self):
        assert np.isfinite(rate_function(nnn(0.4), 4000.0))

    def test_workers_bitwise(self):
        ts = np.linspace(0, 5, 700)
        assert np.array_equal(rate_function(lkc(), ts, workers=1), rate_function(lkc(), ts, workers=2))

    def test_domain(self):
        with pytest.raises(ParameterDomainError):
            rate_function(lkc(), 1.0, n_k=32)
        with pytest.raises(ParameterDomainError):
            rate_function(lkc(), -1.0)


class TestCusps:
    def test_lkc_cusps(self):
        tr = rate_trace(lkc(), 0.0, 6.0, 1e-3)
        got = detect_cusps(tr)
        want = [(n - 0.5) * math.pi / math.sqrt(0.91) for n in (1, 2)]
        assert len(got) == 2
        assert got == pytest.approx(want, abs=2e-3)

    def test_trivial_lkc_smooth(self):
        assert detect_cusps(rate_trace(lkc(v=1.3), 0.0, 12.0, 1e-2)) == []

    @pytest.mark.parametrize("v", [1.4, 2.4])
    def test_nnn_cusp_count_matches_table(self, v):
        m = nnn(v)
        want = critical_set(m, range(1, 12)).sorted_times(9.9)
        got = detect_cusps(rate_trace(m, 0.0, 9.9, 1e-2))
        assert got == pytest.approx(want, abs=2e-2)

    def test_local_reference_ignores_late_linear_growth(self):
        t = np.linspace(0, 10, 1001)
        g = np.log(np.cosh(t))  # smooth, curvature concentrated near t = 0
        assert detect_cusps(QuenchTrace(t, g, 64)) == []

    def test_constant_trace(self):
        t = np.linspace(0, 1, 101)
        assert detect_cusps(QuenchTrace(t, np.full_like(t, 0.7), 64)) == []

    def test_synthetic_kink(self):
        t = np.linspace(0, 2, 2001)
        g = np.abs(t - 1.2345) + 0.1 * t**2
        assert detect_cusps(QuenchTrace(t, g, 64)) == pytest.approx([1.2345], abs=1.5e-3)

    def test_nrssh_anomalous_row_cusps(self):
        m = nrssh(0.2, 0.1)
        tr = rate_trace(m, 0.0, 7.5, 1e-3)
        t0 = math.pi / math.sqrt(0.49 - 0.01)
        tp = math.pi / math.sqrt(0.09 - 0.01)
        want = sorted([0.5 * t0, 1.5 * t0, 0.5 * tp])
        assert detect_cusps(tr) == pytest.approx(want, abs=2e-3)

    @pytest.mark.parametrize("t", [np.array([0.0, 1.0]), np.array([0.0, 0.1, 0.3, 0.4])])
    def test_degenerate_trace(self, t):
        with pytest.raises(DegenerateTraceError):
            detect_cusps(QuenchTrace(t, np.zeros_like(t), 64))


DESIGNATED = [
    (lkc(0.3), "lkc", 0),
    (lkc(1.3), "lkc", 2),
    (nnn(0.4), "nnn_lkc", 0),
    (nnn(1.4), "nnn_lkc", 1),
    (nnn(2.4), "nnn_lkc", 2),
    (nrssh(0.8, 0.2), "nrssh", 0),
    (nrssh(0.8, 0.5, J1=-0.5), "nrssh", 1),
    (nrssh(0.4, 0.5), "nrssh", 2),
    (nrssh(0.2, 0.8), "nrssh", 3),
    (nrssh(0.2, 0.1), "nrssh", 4),
]


class TestTables:
    @pytest.mark.parametrize("model, family, row", DESIGNATED)
    def test_every_row_reproduced(self, model, family, row):
        expected = CORRESPONDENCE_TABLES[family][row]
        assert match_table_row(model) is expected
        rep = dqpt_report(model)
        assert rep.consistent, rep.diagnostics
        assert rep.winding.w == pytest.approx(expected.w, abs=1e-6)
        assert len(rep.critical.distinct_periods()) == expected.n_periods

    def test_lkc_boundary_row(self):
        row = match_table_row(lkc(1.0))
        assert row.w is None and row.dqpts == "ill-defined"
        with pytest.raises(GaplessError):
            dqpt_report(lkc(1.0))

    def test_nrssh_boundary(self):
        with pytest.raises(GaplessError):
            match_table_row(nrssh(0.5, 1.0))

    def test_report_dict(self):
        d = dqpt_report(lkc(0.3)).to_dict()
        assert d["winding_number"] == 1.0
        assert d["table_row"]["dqpts"].startswith("DQPTs at t_n(k_c)")
        assert d["critical_times"][0]["t"] == pytest.approx(math.pi / (2 * math.sqrt(0.91)))

    def test_generic_unsupported(self):
        with pytest.raises(UnsupportedModelError):
            dqpt_report(build_generic(("x", "y"), ((1,), ()), ((), (1,))))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(-2.0, 2.0))
def test_nrssh_table_consistency(J2, gamma, J1):
    m = nrssh(J2, gamma, J1=J1)
    s, d = J1 + J2, J1 - J2
    if min(abs(abs(s) - gamma), abs(abs(d) - gamma)) < 1e-3:
        return
    rep = dqpt_report(m, n_k=2049)
    assert rep.consistent, rep.diagnostics
