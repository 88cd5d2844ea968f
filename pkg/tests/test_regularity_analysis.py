import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mfglab.regularity_analysis as ra
from mfglab import AnalysisConfig, Grid, ProblemSpec, analyze, make_model, solve
from mfglab.regularity_analysis import (
    computationzeta_audit,
    constancy_of_D,
    extend_terminal,
    h1_space_quotient,
    h1_time_quotient,
    loglog_fit,
    reparametrize,
    space_quadratic_fit,
    terminal_inequality,
    time_translation_test,
    translated_state,
    translation_curve,
    uniform_translation_cost,
    zeta_profile,
)
from mfglab.solver_alg2 import evaluate_B, uniform_pair
from mfglab.transport import PrimalState, continuity_residual, integrate_continuity, mass_audit

CFG = AnalysisConfig()


def cosine_spec(amp, N=64, Nt=None, T=1.0, **kw):
    g = Grid(1, N, Nt or N, T)
    return ProblemSpec(g, make_model("quadratic"), amp * np.cos(2 * np.pi * g.coords[0]), np.ones(N), **kw)


@pytest.fixture(scope="module")
def uniform():
    spec = cosine_spec(0.0)
    primal, dual = uniform_pair(spec)
    return spec, primal, dual


@pytest.fixture(scope="module")
def cos01():
    spec = cosine_spec(0.1, tol=1e-7)
    primal, dual, rep = solve(spec)
    assert rep.converged
    return spec, primal, dual, rep


@pytest.fixture(scope="module")
def cos05():
    spec = cosine_spec(0.5, max_iter=4000)
    primal, dual, rep = solve(spec)
    assert rep.converged
    return spec, primal, dual, rep


def test_config_validation():
    with pytest.raises(ValueError):
        AnalysisConfig(audit_profile="both")
    with pytest.raises(ValueError):
        AnalysisConfig(eps_steps=(0, 1))
    with pytest.raises(ValueError, match="t1"):
        AnalysisConfig(t1=0.6).resolve_t1(Grid(1, 8, 8, 1.0))
    assert CFG.resolve_t1(Grid(1, 8, 8, 2.0)) == 0.25


def test_zeta_profile():
    t = np.linspace(0, 1, 1001)
    z = zeta_profile(t, 0.2, 1.0)
    assert np.all(z[t <= 0.1] == 0) and np.all(z[t >= 0.2] == 1)
    assert np.all(np.diff(z) >= 0)
    zi = zeta_profile(t, 0.2, 1.0, "interior")
    assert np.all(zi[t >= 0.9] == 0) and np.all(zi[(t >= 0.2) & (t <= 0.8)] == 1)


def test_fits():
    fit = space_quadratic_fit([1, 2, 4], [1.3 + 0.05, 1.3 + 0.2, 1.3 + 0.8], 1.3)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert loglog_fit([1, 2, 4, 8], 3.0 * np.array([1, 2, 4, 8.0]) ** 2).slope == pytest.approx(2.0)
    assert loglog_fit([1, 2], [0.0, 0.0]).status == "flat"
    with pytest.raises(ValueError, match="three"):
        space_quadratic_fit([1, -1, 2], [1, 1, 4], 0.0)


# --------------------------------------------------------------------------
# space translation


def test_translation_at_zero_is_identity(cos01):
    spec, primal, _, _ = cos01
    state, lost = translated_state(spec, primal, 0, CFG)
    assert np.array_equal(state.m, primal.m) and lost < 1e-12
    assert evaluate_B(spec, state) == pytest.approx(evaluate_B(spec, primal), abs=1e-12)


def test_uniform_translation_closed_form(uniform):
    spec, primal, _ = uniform
    curve = translation_curve(spec, primal, CFG)
    g = spec.grid
    for d, M in zip(curve.deltas, curve.M):
        assert M - curve.M0 == pytest.approx(uniform_translation_cost(g, d, CFG), rel=1e-12)
    # the smoothstep ramp on [t1/2, t1] has int zeta'^2 = 36/30 / (t1/2);
    # same physical shift 1/8 on finer time grids
    continuum = 0.5 * 0.125**2 * 1.2 / (1 / 16)
    errs = [abs(uniform_translation_cost(Grid(1, n, n, 1.0), n // 8, CFG) - continuum) for n in (64, 128, 256)]
    assert errs[-1] < 0.01 * continuum and errs[2] < errs[1] < errs[0]
    fit = space_quadratic_fit(curve.deltas, curve.M, curve.M0)
    assert fit.slope == pytest.approx(2.0, abs=1e-6)


def test_competitors_are_admissible(cos05):
    spec, primal, _, rep = cos05
    g = spec.grid
    cfg = AnalysisConfig(deltas=(1, -1, 2, -2, 4, -4, 8, -8))
    curve = translation_curve(spec, primal, cfg)
    for d, M in zip(curve.deltas, curve.M):
        state, _ = translated_state(spec, primal, d, cfg)
        drift, mn = mass_audit(state.m, g)
        assert drift <= 1e-6 and mn >= 0
        assert np.array_equal(state.m[0], primal.m[0])
        assert continuity_residual(state, spec.m0, g) < 1e-10
        assert M >= curve.M0 - rep.gap - 1e-12
    # even data: M(delta) = M(-delta)
    M = dict(zip(curve.deltas, curve.M))
    for d in (1, 2, 4, 8):
        assert abs(M[d] - M[-d]) <= 1e-8 * max(1.0, abs(curve.M0))


def test_cosine_space_slope(cos05):
    spec, primal, _, _ = cos05
    curve = translation_curve(spec, primal, CFG)
    slope = space_quadratic_fit(curve.deltas, curve.M, curve.M0).slope
    assert 1.8 <= slope <= 2.2


# --------------------------------------------------------------------------
# H1 quotients


def test_h1_quotients_uniform(uniform):
    spec, primal, _ = uniform
    assert all(v == 0 for v in h1_space_quotient(spec, primal, CFG).values())
    assert all(v == 0 for v in h1_time_quotient(spec, primal, CFG).values())


@pytest.mark.parametrize("N", [32, 64, 128])
def test_h1_space_quotient_static_cosine(N):
    g = Grid(1, N, N, 1.0)
    spec = ProblemSpec(g, make_model("quadratic"), np.zeros(N), np.ones(N))
    m = np.broadcast_to(1 + 0.3 * np.cos(2 * np.pi * g.coords[0]), g.node_shape).copy()
    state = PrimalState(m, g.zeros_vector())
    q = h1_space_quotient(spec, state, AnalysisConfig(deltas=(1, 2)))
    # ||cos(2 pi (x + h)) - cos(2 pi x)||_L2(torus) = 2 sin(pi h) / sqrt 2; time window = nodes t >= t1
    t_measure = g.ht * np.count_nonzero(g.t_nodes >= g.T / 8 - 1e-12)
    for d in (1, 2):
        h = d * g.hx
        exact = math.sqrt(t_measure) * 0.3 * 2 * math.sin(math.pi * h) / math.sqrt(2) / h
        assert q[d] == pytest.approx(exact, rel=1e-12)
    limit = 0.3 * 2 * math.pi / math.sqrt(2) * math.sqrt(g.T - g.T / 8)
    assert q[1] == pytest.approx(limit, rel=4.0 / N)


# --------------------------------------------------------------------------
# D and the terminal inequality


def test_D_uniform(uniform):
    spec, primal, _ = uniform
    Ds = constancy_of_D(spec, primal, CFG)
    assert np.all(np.array(Ds.D) == 0.5) and Ds.dispersion == 0.0
    term = terminal_inequality(spec, primal, CFG)
    assert term.margin == 0.0 and term.passed


def test_D_under_time_rescaling(cos01):
    spec, primal, _, _ = cos01
    D1 = constancy_of_D(spec, primal, CFG)
    spec2 = cosine_spec(0.1, Nt=128, T=2.0, tol=1e-7)
    primal2, _, _ = solve(spec2)
    D2 = constancy_of_D(spec2, primal2, CFG)
    assert D1.dispersion <= 0.05 and D2.dispersion <= 0.05
    assert D2.mean == pytest.approx(D1.mean, rel=0.01)


def test_terminal_rhs_grows_with_amplitude():
    rhs = []
    for amp in (0.05, 0.1, 0.2, 0.3):
        spec = cosine_spec(amp, N=32, tol=1e-6)
        primal, _, _ = solve(spec)
        term = terminal_inequality(spec, primal, CFG)
        assert math.isfinite(term.potential_T)
        rhs.append(term.rhs)
    assert np.all(np.diff(rhs) > 0)


# --------------------------------------------------------------------------
# time translation and the audit


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_reparametrize_keeps_feasibility(seed, shift):
    g = Grid(1, 8, 8, 1.0)
    w = 0.1 * np.random.default_rng(seed).standard_normal(g.vector_shape)
    m = integrate_continuity(np.ones(8), w, g)
    z = zeta_profile(g.t_nodes, 0.25, 1.0, "interior")
    state = reparametrize(m, w, g.t_nodes + shift * g.ht * z, g.ht)
    assert continuity_residual(state, np.ones(8), g) < 1e-12


def test_extension_is_feasible(cos01):
    spec, primal, _, _ = cos01
    ext = extend_terminal(spec, primal, 8)
    g = spec.grid
    defect = (ext.m[1:] - ext.m[:-1]) / g.ht + ra.divergence_x(ext.w, g)
    assert np.abs(defect).max() < 1e-10
    assert mass_audit(ext.m, g)[0] < 1e-10


def test_time_translation_uniform(uniform):
    spec, primal, _ = uniform
    tt = time_translation_test(spec, primal, CFG)
    assert np.all(np.abs(tt.differences) <= 1e-14)
    assert tt.fit.status == "flat"


def test_time_translation_cosine(cos01):
    spec, primal, _, rep = cos01
    tt = time_translation_test(spec, primal, CFG, rep.gap)
    assert all(tt.lower_bound_ok)
    assert 1.8 <= tt.fit.slope <= 2.2
    # the discrete extension stays close to the exact pushforward
    assert max(tt.pushforward_w2) < 1e-2


def test_time_translation_out_of_range(cos05):
    spec, primal, _, _ = cos05
    with pytest.raises(ValueError, match="homeomorphism range"):
        time_translation_test(spec, primal, CFG)


def test_audit_uniform(uniform):
    spec, primal, _ = uniform
    au = computationzeta_audit(spec, primal, CFG)
    assert np.ptp(au.direct) <= 1e-14
    assert au.fit_corrected.status == "exact"
    # the other sign is off by eps * 2 |int zeta' G| = eps
    assert np.allclose(au.residual_stated, au.eps, rtol=1e-9)
    assert au.fit_stated.slope == pytest.approx(1.0, abs=1e-9)
    assert au.selected == "corrected"


def test_audit_orders_on_cosine(cos05):
    spec, primal, _, _ = cos05
    au = computationzeta_audit(spec, primal, CFG)
    assert au.selected == "corrected"
    rc, rs = np.array(au.residual_corrected), np.array(au.residual_stated)
    # eps -> eps/2 quarters the matched residual and halves the mismatched one
    assert np.all(rc[1:] / rc[:-1] > 3.0)
    assert np.allclose(rs[1:] / rs[:-1], 2.0, rtol=0.05)


def test_audit_without_cutoff(uniform, monkeypatch):
    spec, primal, _ = uniform
    monkeypatch.setattr(ra, "zeta_profile", lambda t, *a, **k: np.zeros_like(np.asarray(t, dtype=float)))
    au = computationzeta_audit(spec, primal, CFG)
    assert au.residual_corrected == [0.0] * 4 and au.residual_stated == [0.0] * 4


# --------------------------------------------------------------------------
# full report


def test_analyze_uniform(uniform, tmp_path):
    spec, primal, dual = uniform
    report = analyze(spec, primal, dual, CFG)
    assert report.passed, report.failing()
    d = report.to_dict()
    json.dumps(d, allow_nan=False)
    assert d["terminal"]["margin"] == 0.0 and d["D"]["mean"] == 0.5
    files = report.write_csvs(tmp_path)
    rows = np.loadtxt(tmp_path / "translation.csv", delimiter=",", skiprows=1)
    assert rows.shape == (5, 2) and rows[0, 1] == report.translation.M0
    assert {p.name for p in files} >= {"D.csv", "audit.csv", "h1_space.csv", "h1_time.csv"}


def test_analyze_cosine(cos01):
    spec, primal, dual, _ = cos01
    report = analyze(spec, primal, dual, CFG)
    assert report.passed, report.failing()
    for row in report.transfer:
        assert row["lhs"] <= row["rhs"] + 1e-9
    assert report.constants["c"] == 0.5


def test_analyze_names_failing_check(cos01):
    spec, primal, dual, _ = cos01
    strict = AnalysisConfig(dispersion_max=0.0)
    report = analyze(spec, primal, dual, strict)
    assert report.failing() == ["D_dispersion"]
