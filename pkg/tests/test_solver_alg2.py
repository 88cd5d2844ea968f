import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfglab.congestion_models import certify_c0, make_model
from mfglab.grid_core import Grid
from mfglab.solver_alg2 import (
    DualState,
    ProblemSpec,
    evaluate_A,
    evaluate_B,
    feasible_primal,
    gap_decomposition,
    mfg_residuals,
    qp_transfer,
    solve,
    uniform_pair,
)
from mfglab.transport import PrimalState, continuity_residual, integrate_continuity

ENTROPY = make_model("entropy").with_c0(certify_c0())


def make_spec(N=16, Nt=None, psi=None, model="quadratic", d=1, m0=None, **kw):
    g = Grid(d, N, Nt or N, kw.pop("T", 1.0))
    mdl = ENTROPY if model == "entropy" else make_model(*model) if isinstance(model, tuple) else make_model(model)
    psi = np.zeros(g.space_shape) if psi is None else psi(g)
    m0 = np.ones(g.space_shape) if m0 is None else m0(g)
    return ProblemSpec(g, mdl, psi, m0, **kw)


def cosine(amp):
    return lambda g: amp * np.cos(2 * np.pi * g.coords[0])


def test_spec_validation():
    with pytest.raises(ValueError, match="unit mass"):
        make_spec(m0=lambda g: 2 * np.ones(g.space_shape))
    with pytest.raises(ValueError, match="nonnegative"):
        make_spec(m0=lambda g: 1 + 2 * np.cos(2 * np.pi * g.coords[0]))
    with pytest.raises(ValueError):
        make_spec(max_iter=0)


def test_evaluate_B_examples():
    spec = make_spec(psi=lambda g: np.full(g.space_shape, 0.3))
    g = spec.grid
    state = PrimalState(np.ones(g.node_shape), g.zeros_vector())
    assert evaluate_B(spec, state) == pytest.approx(0.8, abs=1e-14)
    neg = state.m.copy()
    neg[3, 2] = -1e-9
    assert evaluate_B(spec, PrimalState(neg, state.w)) == np.inf
    zero = state.m.copy()
    zero[4, 5] = 0.0
    w = g.zeros_vector()
    w[3, 0, 5] = 0.1  # interval 3 is charged with node 4
    assert evaluate_B(spec, PrimalState(zero, w)) == np.inf


def test_evaluate_A_examples():
    c = 0.3
    spec = make_spec(psi=lambda g: np.full(g.space_shape, c), T=1.5)
    g = spec.grid
    _, dual = uniform_pair(spec)
    assert evaluate_A(spec, dual) == pytest.approx(1.5 / 2 - (c + 1.5), abs=1e-12)
    # u independent of x, u_t = 0: price 0
    static = DualState(np.full(g.node_shape, c))
    assert evaluate_A(spec, static) == pytest.approx(-c, abs=1e-14)
    ent = make_spec(psi=lambda g: np.full(g.space_shape, c), model="entropy", T=1.5)
    assert evaluate_A(ent, static) == pytest.approx(1.5 - c, abs=1e-12)
    with pytest.raises(ValueError, match="u\\(T\\)"):
        evaluate_A(spec, DualState(np.zeros(g.node_shape)))


@pytest.mark.parametrize("model", ["quadratic", ("power", 3.0), "entropy"])
def test_uniform_pair_is_optimal(model):
    spec = make_spec(psi=lambda g: np.full(g.space_shape, -0.2), model=model)
    primal, dual = uniform_pair(spec)
    assert evaluate_A(spec, dual) + evaluate_B(spec, primal) == pytest.approx(0.0, abs=1e-12)
    fen, kin = gap_decomposition(spec, primal, dual)
    assert abs(fen) < 1e-10 and abs(kin) < 1e-10
    assert mfg_residuals(spec, primal, dual) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_gap_decomposition_under_dual_perturbation():
    spec = make_spec(N=16, psi=lambda g: np.full(g.space_shape, 0.1))
    g = spec.grid
    primal, dual = uniform_pair(spec)
    bump = np.cos(2 * np.pi * g.coords[0])[None] * (g.T - g.t_nodes[:, None]) / g.T
    terms = []
    for eta in (1e-2, 2e-2, 4e-2):
        pert = DualState(dual.u + eta * bump)
        fen, kin = gap_decomposition(spec, primal, pert)
        gap = evaluate_A(spec, pert) + evaluate_B(spec, primal)
        assert fen + kin == pytest.approx(gap, rel=1e-9, abs=1e-15)
        terms.append(fen + kin)
    ratios = np.array(terms[1:]) / np.array(terms[:-1])
    assert np.allclose(ratios, 4.0, rtol=0.05)


def test_gap_decomposition_term_separation():
    spec = make_spec(N=16)
    g = spec.grid
    primal, dual = uniform_pair(spec)
    moved = PrimalState(primal.m, primal.w + 0.3)  # v -> v + 0.3 keeps continuity (m = 1)
    fen0, kin0 = gap_decomposition(spec, primal, dual)
    fen1, kin1 = gap_decomposition(spec, moved, dual)
    assert fen1 == fen0 and kin1 > kin0
    assert continuity_residual(moved, spec.m0, g) < 1e-13


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["quadratic", "entropy", "p3"]), st.sampled_from([1, 2]))
def test_weak_duality_and_exact_decomposition(seed, name, d):
    model = ("power", 3.0) if name == "p3" else name
    spec = make_spec(N=8, Nt=6, d=d, model=model, psi=lambda g: 0.3 * np.sin(2 * np.pi * g.coords[0]))
    g = spec.grid
    rng = np.random.default_rng(seed)
    w = 0.1 * rng.standard_normal(g.vector_shape)
    primal, _ = feasible_primal(spec, w)
    u = rng.standard_normal(g.node_shape)
    u[-1] = spec.psi
    dual = DualState(u)
    A, B = evaluate_A(spec, dual), evaluate_B(spec, primal)
    assert A + B >= -1e-8
    fen, kin = gap_decomposition(spec, primal, dual)
    assert fen + kin == pytest.approx(A + B, rel=1e-9, abs=1e-12)
    assert qp_transfer(spec, primal, dual) <= fen + 1e-9 * (1 + abs(fen))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_feasible_primal(seed, scale):
    spec = make_spec(N=8, Nt=8)
    g = spec.grid
    w = scale * np.random.default_rng(seed).standard_normal(g.vector_shape)
    state, theta = feasible_primal(spec, w)
    assert 0.0 <= theta <= 1.0
    assert state.m.min() >= 0
    assert continuity_residual(state, spec.m0, g) < 1e-12
    if theta == 0.0:
        assert np.array_equal(state.m, integrate_continuity(spec.m0, w, g))


def test_solve_uniform():
    spec = make_spec(N=32, psi=lambda g: np.full(g.space_shape, 0.25))
    primal, dual, rep = solve(spec)
    assert rep.converged
    assert np.abs(primal.m - 1).max() <= 1e-3
    assert rep.primal_value == pytest.approx(0.75, abs=1e-4)
    assert rep.gap <= 1e-5


def test_solve_flags_non_convergence(caplog):
    spec = make_spec(N=16, psi=cosine(0.5), max_iter=1)
    with caplog.at_level(logging.WARNING):
        primal, dual, rep = solve(spec)
    assert not rep.converged and rep.iterations == 1
    assert primal.m.shape == spec.grid.node_shape and dual.u.shape == spec.grid.node_shape
    assert "without meeting tolerance" in caplog.text


@pytest.mark.parametrize(
    "kw",
    [
        dict(psi=cosine(0.5)),
        dict(psi=cosine(0.3), model="entropy"),
        dict(psi=cosine(0.3), model=("power", 1.5)),
        dict(psi=cosine(0.3), model=("power", 3.0)),
        dict(psi=cosine(0.3), m0=lambda g: 1 + 0.5 * np.sin(2 * np.pi * g.coords[0])),
        dict(d=2, psi=lambda g: 0.3 * np.cos(2 * np.pi * g.coords[0]) + 0.2 * np.sin(2 * np.pi * g.coords[1])),
    ],
    ids=["cosine", "entropy", "power1.5", "power3", "nonuniform_m0", "2d"],
)
def test_solver_invariants(kw):
    spec = make_spec(N=16, max_iter=4000, **kw)
    g = spec.grid
    primal, dual, rep = solve(spec)
    assert rep.converged
    assert rep.relative_gap <= spec.tol
    best = np.array(rep.history["best_gap"])
    assert np.all(np.diff(best) <= 0)
    assert primal.m.min() >= -1e-8
    assert rep.mass_drift <= 1e-6
    assert continuity_residual(primal, spec.m0, g) <= 1e-8
    fen, kin = gap_decomposition(spec, primal, dual)
    assert fen + kin == pytest.approx(rep.gap, rel=1e-9, abs=1e-12)
    pres, kres = mfg_residuals(spec, primal, dual)
    assert kres <= 2 * rep.gap + 1e-9
    assert qp_transfer(spec, primal, dual) <= rep.gap + 1e-9
