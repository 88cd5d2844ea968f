"""Congestion costs G and derived quantities.

Three families are supported: ``quadratic`` (G = m^2/2), ``power``
(G = m^q/q) and ``entropy`` (G = m log m - m). Densities are constrained to
``m >= 0`` (G = +inf below zero), so conjugates use positive parts and the
dual transform is taken as ``J_*(p) = J((G*)'(p))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

KINDS = ("quadratic", "power", "entropy")

_LOG_FLOOR = 1e-300
_EXP_CAP = 700.0


class ProxConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class CongestionModel:
    kind: str
    q: float = 2.0
    c0: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"model must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "power" and not self.q > 1:
            raise ValueError(f"power model needs q > 1, got {self.q}")
        if self.kind == "quadratic":
            object.__setattr__(self, "q", 2.0)

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def c(self) -> float:
        """Constant of the quantitative Fenchel inequality for this model."""
        if self.kind == "quadratic":
            return 0.5
        if self.kind == "power":
            return 1.0 / (2.0 * max(self.q, self.q_conj))
        if self.c0 is None:
            raise ValueError("entropy model has no certified c0; run certify_c0 first")
        return self.c0

    def with_c0(self, c0: float) -> "CongestionModel":
        return CongestionModel(self.kind, self.q, c0)

    # -- primal side -----------------------------------------------------

    def G(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * m**2
        if self.kind == "power":
            return m**self.q / self.q
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(m > 0, m * np.log(np.where(m > 0, m, 1.0)) - m, 0.0)

    def g(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind == "quadratic":
            return m.copy()
        if self.kind == "power":
            return m ** (self.q - 1)
        with np.errstate(divide="ignore"):
            return np.log(m)

    def J(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind == "quadratic":
            return m.copy()
        if self.kind == "power":
            return m ** (self.q / 2)
        return np.sqrt(m)

    # -- dual side -------------------------------------------------------

    def conj(self, p):
        """G*(p) = sup_{m >= 0} (p m - G(m))."""
        p = np.asarray(p, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * np.maximum(p, 0.0) ** 2
        if self.kind == "power":
            return np.maximum(p, 0.0) ** self.q_conj / self.q_conj
        return np.exp(p)

    def conj_prime(self, p):
        """(G*)'(p), the density at price p."""
        p = np.asarray(p, dtype=float)
        if self.kind == "quadratic":
            return np.maximum(p, 0.0)
        if self.kind == "power":
            return np.maximum(p, 0.0) ** (self.q_conj - 1)
        return np.exp(p)

    def J_star(self, p):
        if self.kind == "entropy":
            return np.exp(np.asarray(p, dtype=float) / 2)
        return self.J(self.conj_prime(p))


def make_model(name: str, q: float | None = None) -> CongestionModel:
    if name == "power":
        if q is None:
            raise ValueError("power model needs q")
        return CongestionModel("power", float(q))
    return CongestionModel(name)


def g_eval(model: CongestionModel, m):
    if np.any(np.asarray(m) < 0):
        raise ValueError("density must be nonnegative")
    return model.g(m)


def conj_eval(model: CongestionModel, p):
    return model.conj(p)


def fenchel_residual(model: CongestionModel, m, p):
    """G(m) + G*(p) - m p (nonnegative by Fenchel-Young)."""
    m = np.asarray(m, dtype=float)
    return model.G(m) + model.conj(p) - m * np.asarray(p, dtype=float)


def qp_gap(model: CongestionModel, m, p, c: float | None = None):
    """G(m) + G*(p) - m p - c |J(m) - J_*(p)|^2."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("density must be nonnegative")
    c = model.c if c is None else c
    return fenchel_residual(model, m, p) - c * (model.J(m) - model.J_star(p)) ** 2


def certify_c0(m_max: float = 10.0, p_min: float = -5.0, p_max: float = 5.0, n: int = 500,
               m_min: float = 1e-6, safety: float = 0.9) -> float:
    """Sampled lower bound for the entropy constant c0.

    Infimum over an ``n x n`` grid on ``[m_min, m_max] x [p_min, p_max]`` of
    ``(G(m) + e^p - m p) / |sqrt(m) - e^{p/2}|^2``, times ``safety``. Points
    with denominator below 1e-12 are excluded.
    """
    if not (m_max >= m_min > 0) or not (p_max >= p_min) or n < 1:
        raise ValueError("degenerate sampling box")
    model = CongestionModel("entropy")
    m = np.geomspace(m_min, m_max, n) if m_max > m_min else np.array([m_min])
    p = np.linspace(p_min, p_max, n) if p_max > p_min else np.array([p_min])
    M, P = np.meshgrid(m, p, indexing="ij")
    den = (np.sqrt(M) - np.exp(P / 2)) ** 2
    keep = den >= 1e-12
    if not keep.any():
        raise ValueError("all points excluded (sampling box lies on the equality locus)")
    ratio = fenchel_residual(model, M[keep], P[keep]) / den[keep]
    c0 = safety * float(ratio.min())
    if not c0 > 0:
        raise ValueError(f"certification failed: c0 = {c0}")
    return c0


def hpol_margin(model: CongestionModel, a0: float, samples, n_a: int = 200) -> float:
    """Smallest C >= 0 with G((1+a)m) <= (1+Ca) G(m) + C on the samples, a in (0, a0]."""
    if not 0 < a0 < 1:
        raise ValueError("a0 must lie in (0, 1)")
    m = np.asarray(samples, dtype=float)[:, None]
    a = np.linspace(a0 / n_a, a0, n_a)[None, :]
    Gm = model.G(m)
    # the inequality reads  G((1+a)m) - G(m) <= C (a G(m) + 1); the bracket is > 0 here
    den = a * Gm + 1.0
    if np.any(den <= 0):
        raise ValueError("a * G(m) + 1 must be positive on the sample set")
    need = (model.G((1 + a) * m) - Gm) / den
    return float(max(0.0, need.max()))


# --------------------------------------------------------------------------
# proximal map of H(a, b) = G*(-a + |b|^2 / 2)


def prox_hamiltonian(model: CongestionModel, tau: float, a_t, b_t, tol: float = 1e-13,
                     max_iter: int = 200):
    """Pointwise ``argmin 1/2|a - a_t|^2 + 1/2|b - b_t|^2 + tau G*(-a + |b|^2/2)``.

    ``a_t`` has shape ``S``; ``b_t`` has shape ``(d, *S)``. Returns ``(a, b, lam)``
    with ``lam = (G*)'(-a + |b|^2/2) >= 0``, ``a = a_t + tau lam`` and
    ``b = b_t / (1 + tau lam)``. ``lam`` solves ``g(lam) = s(lam)`` where
    ``s(lam) = -a_t - tau lam + |b_t|^2 / (2 (1 + tau lam)^2)``; the root is
    found by safeguarded Newton on ``y = log lam``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    a_t = np.asarray(a_t, dtype=float)
    b_t = np.asarray(b_t, dtype=float)
    bb = np.sum(b_t**2, axis=0)
    s0 = -a_t + 0.5 * bb

    lam = np.zeros_like(a_t)
    if model.kind == "entropy":
        active = np.ones(a_t.shape, dtype=bool)
    else:
        active = s0 > 0
    if active.any():
        lam[active] = _solve_lambda(model, tau, a_t[active], bb[active], s0[active], tol, max_iter)
    a = a_t + tau * lam
    b = b_t / (1.0 + tau * lam)
    return a, b, lam


def _g_of_log(model, y):
    if model.kind == "entropy":
        return y, np.ones_like(y)
    e = model.q - 1.0
    v = np.exp(e * y)
    return v, e * v


def _solve_lambda(model, tau, a_t, bb, s0, tol, max_iter):
    # bracket in y = log(lam); F(y) = g(e^y) - s(e^y) is increasing
    pos = s0 > 0
    hi = np.where(pos, np.log(np.maximum(s0, _LOG_FLOOR) / tau), 0.0)
    if model.kind == "entropy":
        hi = np.where(pos, np.minimum(s0, np.maximum(0.0, hi)), s0)
        lo = np.minimum(0.0, -a_t - tau)
        lo = np.minimum(lo, hi)
    else:
        # for q-1 > 0 the root also satisfies lam^(q-1) <= s0
        hi = np.minimum(hi, np.log(np.maximum(s0, _LOG_FLOOR)) / (model.q - 1.0))
        lo = np.full_like(hi, np.log(_LOG_FLOOR))
    lo = np.maximum(lo, -_EXP_CAP)
    hi = np.minimum(hi, _EXP_CAP)

    def F(y):
        lam = np.exp(y)
        gv, dg = _g_of_log(model, y)
        one = 1.0 + tau * lam
        s = -a_t - tau * lam + 0.5 * bb / one**2
        ds = lam * (-tau - tau * bb / one**3)
        return gv - s, dg - ds, gv, s

    # widen the bracket if round-off put the root outside it
    Flo = F(lo)[0]
    Fhi = F(hi)[0]
    lo = np.where(Flo > 0, lo - 50.0, lo)
    hi = np.where(Fhi < 0, hi + 50.0, hi)

    y = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f, df, gv, s = F(y)
        lo = np.where(f < 0, y, lo)
        hi = np.where(f > 0, y, hi)
        scale = 1.0 + np.abs(gv) + np.abs(s)
        done = (np.abs(f) <= tol * scale) | (hi - lo <= 1e-15 * (1.0 + np.abs(y)))
        if done.all():
            return np.exp(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            y_new = y - f / df
        bad = ~np.isfinite(y_new) | (y_new <= lo) | (y_new >= hi)
        y_new = np.where(bad, 0.5 * (lo + hi), y_new)
        y = np.where(done, y, y_new)
    raise ProxConvergenceError(f"prox root-finding did not converge in {max_iter} iterations")


def prox_objective(model: CongestionModel, tau: float, a_t, b_t, a, b):
    a_t = np.asarray(a_t, dtype=float)
    b_t = np.asarray(b_t, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = -a + 0.5 * np.sum(b**2, axis=0)
    return 0.5 * (a - a_t) ** 2 + 0.5 * np.sum((b - b_t) ** 2, axis=0) + tau * model.conj(p)


# --------------------------------------------------------------------------
# property suite


def brute_force_prox(model: CongestionModel, tau: float, a_t: float, b_t, n: int = 201) -> float:
    """Minimum of the prox objective by a dense grid search and a local polish."""
    b_t = np.atleast_1d(np.asarray(b_t, dtype=float))
    if b_t.size != 1:
        raise ValueError("brute force is implemented for scalar b only")
    b0 = float(b_t[0])
    # a = a_t + tau lam with lam <= (G*)'(-a_t + b_t^2/2); b lies between 0 and b_t
    s0 = -a_t + 0.5 * b0**2
    a_hi = a_t + tau * float(model.conj_prime(s0)) + 1e-2
    A = np.linspace(a_t - 1e-3, a_hi + 1e-3, n)
    B = np.linspace(min(0.0, b0) - 1e-3, max(0.0, b0) + 1e-3, n)
    AA, BB = np.meshgrid(A, B, indexing="ij")
    obj = prox_objective(model, tau, a_t, b0, AA, BB[None])
    i = np.unravel_index(np.argmin(obj), obj.shape)
    f = lambda z: float(prox_objective(model, tau, a_t, b0, z[0], np.array([z[1]])))  # noqa: E731
    res = minimize(f, np.array([AA[i], BB[i]]), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    return min(float(res.fun), float(obj[i]))


def property_suite(model: CongestionModel, seed: int = 0, n_qp: int = 100_000,
                   n_prox: int = 1000) -> dict:
    """Fenchel-Young, (QP) and prox checks on random samples.

    Returns a dict of named results, each with ``passed`` and the worst value.
    """
    rng = np.random.default_rng(seed)
    if model.kind == "entropy" and model.c0 is None:
        model = model.with_c0(certify_c0())
    m = rng.uniform(0.0, 10.0, n_qp)
    m[rng.random(n_qp) < 0.05] = 0.0
    if model.kind == "entropy":
        m = np.where(m > 0, np.maximum(m, 1e-6), 0.0)
    p = rng.uniform(-5.0, 5.0, n_qp)
    fy = fenchel_residual(model, m, p)
    qp = qp_gap(model, m, p)
    out = {
        "fenchel_young": {"worst": float(fy.min()), "passed": bool(fy.min() >= -1e-10)},
        "qp": {"worst": float(qp.min()), "c": model.c, "passed": bool(qp.min() >= -1e-10)},
    }
    worst = -np.inf
    for _ in range(n_prox):
        tau = float(rng.uniform(0.1, 5.0))
        a_t = float(rng.uniform(-3.0, 3.0))
        b_t = np.array([rng.uniform(-3.0, 3.0)])
        a, b, _ = prox_hamiltonian(model, tau, np.array([a_t]), b_t[:, None])
        val = float(prox_objective(model, tau, a_t, b_t, a[0], b[:, 0]))
        worst = max(worst, val - brute_force_prox(model, tau, a_t, b_t))
    out["prox"] = {"worst_excess": float(worst), "passed": bool(worst <= 1e-8)}
    samples = np.geomspace(1e-6, 1e3, 400)
    out["hpol"] = {"a0": 0.1, "C": hpol_margin(model, 0.1, samples), "passed": True}
    return out
