"""Augmented-Lagrangian (ALG2) solver for the primal/dual MFG pair.

Sign conventions, all in one place:

* dual variable ``u`` on time nodes with ``u[Nt] = Psi``; the price is
  ``p_k = -(u_{k+1} - u_k)/ht + |grad u_k|^2 / 2`` on intervals;
* interval ``k`` carries the momentum ``w_k`` and is charged with the density
  at its right node, ``|w_k|^2 / (2 m_{k+1}) + G(m_{k+1})``;
* the splitting variable is ``q = (a, b)`` approximating ``D u``;
* the multiplier is ``-(m, w)``: after every iteration the prox root ``lam`` is
  the density ``m`` and ``w = -m b``, so at convergence ``v = w/m = -grad u``.

The multiplier obtained from the potential step alone,
``-(m, w) - r (D u - q_old)``, satisfies the discrete continuity equation
exactly. Its densities can dip slightly below zero before convergence; the
reported primal state is the smallest convex combination with the static
state ``(m0, 0)`` that is nonnegative, so it is always exactly feasible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .congestion_models import CongestionModel, fenchel_residual, prox_hamiltonian
from .grid_core import (
    EllipticSolver,
    Grid,
    apply_D,
    apply_DT,
    gradient_x,
    integrate_space,
)
from .transport import (
    PrimalState,
    continuity_residual,
    integrate_continuity,
)

log = logging.getLogger(__name__)

@dataclass
class ProblemSpec:
    grid: Grid
    model: CongestionModel
    psi: np.ndarray
    m0: np.ndarray
    r: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-5
    tol_continuity: float = 1e-8
    check_every: int = 10

    def __post_init__(self):
        g = self.grid
        self.psi = np.asarray(self.psi, dtype=float)
        self.m0 = np.asarray(self.m0, dtype=float)
        if self.psi.shape != g.space_shape or self.m0.shape != g.space_shape:
            raise ValueError("psi and m0 must be spatial fields on the grid")
        if np.any(self.m0 < 0):
            raise ValueError("m0 must be nonnegative")
        mass = g.cell_volume * self.m0.sum()
        if abs(mass - 1.0) > 1e-8:
            raise ValueError(f"m0 must have unit mass, got {mass}")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.max_iter < 1 or self.check_every < 1:
            raise ValueError("max_iter and check_every must be positive")


@dataclass
class DualState:
    u: np.ndarray  # nodes

    def p(self, grid: Grid) -> np.ndarray:
        return price(self.u, grid)


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    primal_value: float
    dual_value: float
    gap: float
    relative_gap: float
    best_gap: float
    splitting_residual: float
    continuity_residual: float
    multiplier_defect: float
    blend_weight: float
    fenchel_term: float
    kinetic_term: float
    price_residual: float
    kinetic_residual: float
    min_density: float
    mass_drift: float
    history: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def price(u: np.ndarray, grid: Grid) -> np.ndarray:
    a, b = apply_D(u, grid)
    return -a + 0.5 * np.sum(b**2, axis=1)


def kinetic_density(m: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pointwise ``|w|^2 / (2m)`` with 0 at (0,0) and +inf where m <= 0 < |w|."""
    ww = np.sum(w**2, axis=1)
    pos = m > 0
    out = np.where(pos, ww / (2 * np.where(pos, m, 1.0)), 0.0)
    return np.where(~pos & (ww > 0), np.inf, out)


def evaluate_B(spec: ProblemSpec, state: PrimalState) -> float:
    g = spec.grid
    m, w = state.m, state.w
    if np.any(m < 0):
        return np.inf
    dens = kinetic_density(m[1:], w) + spec.model.G(m[1:])
    running = g.ht * g.cell_volume * float(np.sum(dens))
    return running + g.cell_volume * float(np.sum(spec.psi * m[-1]))


def evaluate_A(spec: ProblemSpec, dual: DualState, tol: float = 1e-12) -> float:
    g = spec.grid
    u = dual.u
    if np.max(np.abs(u[-1] - spec.psi)) > tol:
        raise ValueError("dual state infeasible: u(T) != Psi")
    p = price(u, g)
    return g.ht * g.cell_volume * float(np.sum(spec.model.conj(p))) - g.cell_volume * float(
        np.sum(u[0] * spec.m0)
    )


def gap_decomposition(spec: ProblemSpec, primal: PrimalState, dual: DualState) -> tuple[float, float]:
    """``(sum G(m)+G*(p)-mp, sum m|v+grad u|^2/2)``; their sum equals A + B."""
    g = spec.grid
    if np.max(np.abs(dual.u[-1] - spec.psi)) > 1e-12:
        raise ValueError("dual state infeasible: u(T) != Psi")
    m = primal.m[1:]
    p = price(dual.u, g)
    fen = g.ht * g.cell_volume * float(np.sum(fenchel_residual(spec.model, m, p)))
    # m |v + grad u|^2 / 2 = |w + m grad u|^2 / (2m)
    grad_u = gradient_x(dual.u[:-1], g)
    kin = g.ht * g.cell_volume * float(np.sum(kinetic_density(m, primal.w + m[:, None] * grad_u)))
    return fen, kin


def mfg_residuals(spec: ProblemSpec, primal: PrimalState, dual: DualState, rho: float = 1e-3):
    """``(||p - g(m)||_{L^2({m > rho})}, int int m |v + grad u|^2)``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    g = spec.grid
    m = primal.m[1:]
    p = price(dual.u, g)
    mask = m > rho
    gm = spec.model.g(np.where(mask, m, 1.0))
    price_res = np.sqrt(g.ht * g.cell_volume * float(np.sum(np.where(mask, (p - gm) ** 2, 0.0))))
    _, kin = gap_decomposition(spec, primal, dual)
    return price_res, 2.0 * kin


def qp_transfer(spec: ProblemSpec, primal: PrimalState, dual: DualState) -> float:
    """``c ||J(m) - J_*(p)||^2_{L^2}``, bounded by the gap."""
    g = spec.grid
    m = primal.m[1:]
    p = price(dual.u, g)
    d = spec.model.J(m) - spec.model.J_star(p)
    return spec.model.c * g.ht * g.cell_volume * float(np.sum(d**2))


def uniform_pair(spec: ProblemSpec) -> tuple[PrimalState, DualState]:
    """Analytic optimal pair for m0 = 1 and constant Psi (any model).

    ``m = 1, w = 0`` and ``u = Psi + g(1) (T - t)`` so that ``p = g(1)``.
    """
    g = spec.grid
    m = np.ones(g.node_shape)
    w = g.zeros_vector()
    g1 = float(spec.model.g(1.0))
    t = g.t_nodes.reshape((-1,) + (1,) * g.d)
    u = spec.psi[None] + g1 * (g.T - t)
    u[-1] = spec.psi
    return PrimalState(m, w), DualState(u)


def iterate_continuity_residual(m_int: np.ndarray, w: np.ndarray, m0: np.ndarray, grid: Grid) -> float:
    """Continuity residual of a multiplier holding the densities of nodes 1..Nt."""
    m = np.concatenate([np.asarray(m0, dtype=float)[None], m_int])
    return continuity_residual(PrimalState(m, w), m0, grid)


def feasible_primal(spec: ProblemSpec, w: np.ndarray) -> tuple[PrimalState, float]:
    """Exactly feasible, nonnegative primal state built from a momentum field.

    Densities come from the discrete continuity equation. If some are
    negative the state is blended with the static state ``(m0, 0)``; the
    weight ``theta`` minimizes ``B`` over the admissible part of the segment
    (``B`` is convex along it). Returns the state and ``theta``.
    """
    g = spec.grid
    m = integrate_continuity(spec.m0, w, g)
    neg = m < 0
    if not neg.any():
        return PrimalState(m, w), 0.0
    still = np.broadcast_to(spec.m0, m.shape)
    if np.any(still[neg] <= 0):
        # the static density vanishes where a correction is needed
        return PrimalState(m, w), 1.0
    theta_min = float(np.max(-m[neg] / (still[neg] - m[neg])))

    def blend(theta):
        mb = theta * still + (1.0 - theta) * m
        mb[mb < 0] = 0.0  # round-off only: the blend is >= 0 for theta >= theta_min
        return PrimalState(mb, (1.0 - theta) * w)

    def objective(theta):
        val = evaluate_B(spec, blend(theta))
        return val if np.isfinite(val) else 1e300

    res = minimize_scalar(objective, bounds=(theta_min, 1.0), method="bounded",
                          options={"xatol": 1e-14 + 1e-9 * theta_min})
    theta = float(res.x)
    if objective(theta) > objective(1.0):
        theta = 1.0
    return blend(theta), theta


def _gap_terms(spec, u, w):
    primal, theta = feasible_primal(spec, w)
    dual = DualState(u)
    return primal, dual, evaluate_A(spec, dual), evaluate_B(spec, primal), theta


def solve(spec: ProblemSpec, callback=None) -> tuple[PrimalState, DualState, SolveReport]:
    """Run ALG2 until the relative gap and continuity residual fall below tolerance."""
    g = spec.grid
    r = spec.r
    tau = 1.0 / r
    ell = EllipticSolver(g, r)

    u = np.broadcast_to(spec.psi, g.node_shape).copy()
    m = np.broadcast_to(spec.m0, g.interval_shape).copy()
    w = g.zeros_vector()
    a, b = apply_D(u, g)

    hist = {"gap": [], "best_gap": [], "splitting": [], "multiplier_defect": []}
    best = np.inf
    converged = False
    it = 0
    for it in range(1, spec.max_iter + 1):
        # potential step
        rhs = (r * apply_DT(a, b, g) + apply_DT(m, w, g))[:-1] / g.ht
        u = ell.solve(rhs, spec.m0, spec.psi)
        Du_a, Du_b = apply_D(u, g)
        # pointwise prox on D u shifted by the multiplier
        a, b, _ = prox_hamiltonian(spec.model, tau, Du_a - m / r, np.moveaxis(Du_b - w / r, 1, 0))
        b = np.moveaxis(b, 0, 1)
        # multiplier update; equals (lam, -lam b) by the prox optimality condition
        m = np.maximum(m - r * (Du_a - a), 0.0)
        w = w - r * (Du_b - b)

        split = float(np.sqrt(g.ht * g.cell_volume * (np.sum((Du_a - a) ** 2) + np.sum((Du_b - b) ** 2))))
        hist["splitting"].append(split)
        hist["multiplier_defect"].append(iterate_continuity_residual(m, w, spec.m0, g))
        if it % spec.check_every == 0 or it == spec.max_iter:
            primal, _, A, B, _ = _gap_terms(spec, u, w)
            gap = A + B
            best = min(best, gap)
            hist["gap"].append(gap)
            hist["best_gap"].append(best)
            if callback is not None:
                callback(it, gap, split, hist["multiplier_defect"][-1])
            cont = continuity_residual(primal, spec.m0, g)
            if np.isfinite(gap) and gap / max(1.0, abs(B)) < spec.tol and cont < spec.tol_continuity:
                converged = True
                break

    primal, dual, A, B, theta = _gap_terms(spec, u, w)
    gap = A + B
    finite = bool(np.isfinite(B))
    fen, kin = gap_decomposition(spec, primal, dual) if finite else (np.inf, np.inf)
    pres, kres = mfg_residuals(spec, primal, dual) if finite else (np.inf, np.inf)
    mass = integrate_space(primal.m, g)
    report = SolveReport(
        iterations=it,
        converged=converged,
        primal_value=B,
        dual_value=-A,
        gap=gap,
        relative_gap=gap / max(1.0, abs(B)) if finite else np.inf,
        best_gap=min(best, gap),
        splitting_residual=hist["splitting"][-1],
        continuity_residual=continuity_residual(primal, spec.m0, g),
        multiplier_defect=hist["multiplier_defect"][-1],
        blend_weight=theta,
        fenchel_term=fen,
        kinetic_term=kin,
        price_residual=float(pres),
        kinetic_residual=float(kres),
        min_density=float(primal.m.min()),
        mass_drift=float(np.max(np.abs(mass - 1.0))),
        history=hist,
    )
    if not converged:
        log.warning("ALG2 stopped after %d iterations without meeting tolerance (rel gap %.3e)",
                    it, report.relative_gap)
    return primal, dual, report
