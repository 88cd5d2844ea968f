"""Numerical experiments on a solved instance: space and time translations
of the optimal density, H^1 difference quotients of ``J(m)``, the first
integral ``D`` and the terminal inequality.

Every competitor built here is an exactly feasible discrete primal state
(continuity equation and initial slice), so ``B(competitor) >= B(m) - gap``
is a hard check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .congestion_models import certify_c0, hpol_margin
from .grid_core import Grid, divergence_x, gradient_x, periodic_shift
from .solver_alg2 import (
    DualState,
    ProblemSpec,
    evaluate_A,
    evaluate_B,
    kinetic_density,
)
from .transport import (
    PrimalState,
    continuity_residual,
    lipschitz_estimate,
    metric_speed,
    pushforward_terminal,
    w2_circle,
)

FLAT = 1e-12


@dataclass(frozen=True)
class AnalysisConfig:
    t1: float | None = None  # None -> T/8
    deltas: tuple[int, ...] = (1, 2, 4, 8)  # cells
    eps_steps: tuple[int, ...] = (1, 2, 4, 8)  # multiples of ht
    rho: float = 1e-3
    audit_profile: str = "terminal"
    shift_axis: int = 0
    fit_window: tuple[int, int] | None = None
    slope_min: float = 1.8
    dispersion_max: float = 0.05
    terminal_tol: float = 0.05

    def __post_init__(self):
        if self.audit_profile not in ("terminal", "interior"):
            raise ValueError("audit_profile must be 'terminal' or 'interior'")
        if len(set(abs(d) for d in self.deltas)) < 1 or any(int(d) != d for d in self.deltas):
            raise ValueError("deltas must be integers (cells)")
        if any(int(e) != e or e < 1 for e in self.eps_steps):
            raise ValueError("eps_steps must be positive integers")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    def resolve_t1(self, grid: Grid) -> float:
        t1 = grid.T / 8 if self.t1 is None else float(self.t1)
        if not 0 < t1 < grid.T / 2:
            raise ValueError(f"t1 must lie in (0, T/2), got {t1}")
        return t1


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def zeta_profile(t, t1: float, T: float, kind: str = "terminal") -> np.ndarray:
    """Cut-off: 0 on ``[0, t1/2]``, cubic ramp, 1 on ``[t1, T]``.

    ``kind="interior"`` also ramps back down to 0 on ``[T - t1, T - t1/2]``.
    """
    t = np.asarray(t, dtype=float)
    z = smoothstep((t - t1 / 2) / (t1 / 2))
    if kind == "interior":
        z = z * smoothstep((T - t1 / 2 - t) / (t1 / 2))
    return z


# --------------------------------------------------------------------------
# fits


@dataclass
class Fit:
    status: str  # "fit", "flat" or "exact"
    slope: float
    intercept: float
    x: list
    y: list
    residuals: list


def loglog_fit(x, y, floor: float = FLAT) -> Fit:
    """Least-squares slope of ``log|y|`` against ``log|x|``."""
    x = np.abs(np.asarray(x, dtype=float))
    y = np.abs(np.asarray(y, dtype=float))
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct abscissae")
    if np.all(y <= floor):
        return Fit("flat", math.nan, math.nan, x.tolist(), y.tolist(), [])
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        return Fit("degenerate", math.nan, math.nan, x.tolist(), y.tolist(), [])
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + intercept)
    return Fit("fit", float(slope), float(intercept), x.tolist(), y.tolist(), res.tolist())


def space_quadratic_fit(deltas, M, M0: float, window: tuple[int, int] | None = None) -> Fit:
    """Slope of ``log|M(delta) - M(0)|`` against ``log|delta|``."""
    d = np.asarray(deltas, dtype=float)
    diff = np.asarray(M, dtype=float) - M0
    keep = d != 0
    d, diff = d[keep], diff[keep]
    if np.unique(np.abs(d)).size < 3:
        raise ValueError("need at least three distinct |delta|")
    if window is not None:
        d, diff = d[window[0]:window[1]], diff[window[0]:window[1]]
    return loglog_fit(d, diff)


# --------------------------------------------------------------------------
# space translation


def _pinv_divergence(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, float]:
    """Minimal-norm ``e`` with ``div e = f`` (centred, periodic), plus the
    L1 norm of the part of ``f`` outside the range of the operator."""
    axes = tuple(range(f.ndim - grid.d, f.ndim))
    F = scipy.fft.fftn(f, axes=axes)
    k = np.fft.fftfreq(grid.Nx, d=1.0 / grid.Nx)
    sym = [1j * np.sin(2 * np.pi * k / grid.Nx) / grid.hx for _ in range(grid.d)]
    grids = np.meshgrid(*sym, indexing="ij")
    norm2 = sum(np.abs(s) ** 2 for s in grids)
    ok = norm2 > 1e-12 * (1 / grid.hx**2)
    safe = np.where(ok, norm2, 1.0)
    # e_hat_i = conj(s_i) f_hat / |s|^2 (gradient-type, minimal norm)
    comps = [scipy.fft.ifftn(np.where(ok, np.conj(s) * F / safe, 0.0), axes=axes).real for s in grids]
    e = np.stack(comps, axis=f.ndim - grid.d)
    lost = scipy.fft.ifftn(np.where(ok, 0.0, F), axes=axes).real
    return e, float(grid.cell_volume * np.abs(lost).sum())


@dataclass
class TranslationCurve:
    deltas: list
    M: list
    M0: float
    continuity: list
    unrepresentable: list
    min_density: list


def translated_state(spec: ProblemSpec, primal: PrimalState, delta: float, cfg: AnalysisConfig):
    """``m^delta(t, x) = m(t, x + zeta(t) delta)`` with momentum
    ``tau w - zeta' delta tau m`` and a minimal-norm correction that makes
    the discrete continuity equation exact. Returns ``(state, lost_L1)``."""
    g = spec.grid
    t1 = cfg.resolve_t1(g)
    z = zeta_profile(g.t_nodes, t1, g.T)
    vec = np.zeros(g.d)
    vec[cfg.shift_axis] = delta
    m = np.empty_like(primal.m)
    for k in range(g.Nt + 1):
        m[k] = periodic_shift(primal.m[k], z[k] * vec, g) if z[k] != 0 else primal.m[k]
    w = np.empty_like(primal.w)
    dz = np.diff(z) / g.ht
    for k in range(g.Nt):
        s = z[k + 1] * vec
        wk = np.stack([periodic_shift(primal.w[k, i], s, g) for i in range(g.d)]) if z[k + 1] else primal.w[k].copy()
        wk[cfg.shift_axis] -= dz[k] * delta * g.hx * m[k + 1]
        w[k] = wk
    f = -((m[1:] - m[:-1]) / g.ht + divergence_x(w, g))
    lost = 0.0
    if np.any(f):
        e, lost_all = _pinv_divergence(f, g)
        w = w + e
        lost = lost_all
    return PrimalState(m, w), lost


def translation_curve(spec: ProblemSpec, primal: PrimalState, cfg: AnalysisConfig) -> TranslationCurve:
    M0 = evaluate_B(spec, primal)
    M, cont, lost, mins = [], [], [], []
    for d in cfg.deltas:
        state, lost_d = translated_state(spec, primal, d, cfg)
        if state.m.min() < -1e-8:
            raise ValueError(f"shift {d} destroys positivity (min {state.m.min():.3e})")
        M.append(evaluate_B(spec, state))
        cont.append(continuity_residual(state, spec.m0, spec.grid))
        lost.append(lost_d)
        mins.append(float(state.m.min()))
    return TranslationCurve(list(cfg.deltas), M, M0, cont, lost, mins)


def uniform_translation_cost(grid: Grid, delta: float, cfg: AnalysisConfig) -> float:
    """Closed-form ``M(delta) - M(0)`` for a uniform state: the correction
    velocity ``-zeta' delta`` is the only cost."""
    z = zeta_profile(grid.t_nodes, cfg.resolve_t1(grid), grid.T)
    dz = np.diff(z) / grid.ht
    return 0.5 * (delta * grid.hx) ** 2 * grid.ht * float(np.sum(dz**2))


# --------------------------------------------------------------------------
# H^1 quotients


def _J_over_window(spec, primal, cfg):
    g = spec.grid
    t1 = cfg.resolve_t1(g)
    nodes = g.t_nodes >= t1 - 1e-12
    return spec.model.J(np.maximum(primal.m, 0.0)), nodes


def h1_space_quotient(spec: ProblemSpec, primal: PrimalState, cfg: AnalysisConfig) -> dict:
    """``Q(delta) = ||J(m(.+delta)) - J(m)||_{L^2([t1,T] x torus)} / (|delta| hx)``."""
    g = spec.grid
    J, nodes = _J_over_window(spec, primal, cfg)
    Jw = J[nodes]
    out = {}
    for d in cfg.deltas:
        if d == 0:
            continue
        shifted = np.roll(Jw, -int(d), axis=1 + cfg.shift_axis)
        l2 = math.sqrt(g.ht * g.cell_volume * float(np.sum((shifted - Jw) ** 2)))
        out[int(d)] = l2 / (abs(d) * g.hx)
    return out


def h1_time_quotient(spec: ProblemSpec, primal: PrimalState, cfg: AnalysisConfig) -> dict:
    """``||J(m_{t+eps}) - J(m_t)||_{L^2([t1, T-eps] x torus)} / eps`` for node shifts."""
    g = spec.grid
    J, nodes = _J_over_window(spec, primal, cfg)
    first = int(np.argmax(nodes))
    out = {}
    for j in cfg.eps_steps:
        if first + j > g.Nt:
            continue
        diff = J[first + j:] - J[first:g.Nt + 1 - j]
        l2 = math.sqrt(g.ht * g.cell_volume * float(np.sum(diff**2)))
        out[int(j)] = l2 / (j * g.ht)
    return out


# --------------------------------------------------------------------------
# D and the terminal inequality


@dataclass
class DSeries:
    t: list
    D: list
    speed: list
    potential: list
    mean: float
    max_deviation: float
    dispersion: float
    speed_method: str


def potential_energy(spec: ProblemSpec, m: np.ndarray) -> np.ndarray:
    """``G(m_t) = hx^d sum G(m_t)`` per slice."""
    g = spec.grid
    return g.cell_volume * spec.model.G(np.maximum(m, 0.0)).reshape(m.shape[0], -1).sum(axis=1)


def constancy_of_D(spec: ProblemSpec, primal: PrimalState, cfg: AnalysisConfig) -> DSeries:
    g = spec.grid
    t1 = cfg.resolve_t1(g)
    if g.d == 1:
        speed = metric_speed(primal.m, g, "w2")
        method = "w2"
    else:
        speed = metric_speed(primal.m, g, "kinetic", w=primal.w)
        method = "kinetic (upper bound)"
    pot = potential_energy(spec, primal.m)
    D = -0.5 * speed**2 + pot
    t = g.t_nodes
    keep = (t >= t1 - 1e-12) & (t <= g.T - t1 + 1e-12)
    Dk = D[keep]
    mean = float(Dk.mean())
    dev = float(np.max(np.abs(Dk - mean)))
    disp = dev / abs(mean) if mean != 0 else (0.0 if dev == 0 else math.inf)
    return DSeries(t[keep].tolist(), Dk.tolist(), speed[keep].tolist(), pot[keep].tolist(),
                   mean, dev, disp, method)


@dataclass
class TerminalCheck:
    lhs: float  # G(m_T) - D
    rhs: float  # 1/2 int |grad Psi|^2 dm_T
    margin: float
    potential_T: float
    D: float
    passed: bool


def terminal_inequality(spec: ProblemSpec, primal: PrimalState, cfg: AnalysisConfig,
                        D: float | None = None) -> TerminalCheck:
    g = spec.grid
    if D is None:
        D = constancy_of_D(spec, primal, cfg).mean
    mT = primal.m[-1]
    GT = float(potential_energy(spec, mT[None])[0])
    grad = gradient_x(spec.psi, g)
    rhs = 0.5 * g.cell_volume * float(np.sum(np.sum(grad**2, axis=0) * mT))
    lhs = GT - D
    margin = rhs - lhs
    return TerminalCheck(lhs, rhs, margin, GT, D, bool(margin >= -cfg.terminal_tol * max(1.0, abs(rhs))))


# --------------------------------------------------------------------------
# time reparametrisations


def reparametrize(m: np.ndarray, w: np.ndarray, s: np.ndarray, ht: float) -> PrimalState:
    """Series sampled at times ``s_k`` (nondecreasing, within the node range).

    Densities are interpolated linearly in time; the momentum on
    ``[s_k, s_{k+1}]`` is the time average of the piecewise-constant ``w``
    rescaled to a step ``ht``. An exactly feasible input stays exactly
    feasible.
    """
    n = m.shape[0] - 1
    pos = np.clip(np.asarray(s, dtype=float) / ht, 0.0, n)
    j = np.minimum(np.floor(pos).astype(int), n - 1)
    f = pos - j
    shape = (-1,) + (1,) * (m.ndim - 1)
    m_s = (1 - f).reshape(shape) * m[j] + f.reshape(shape) * m[j + 1]
    # cumulative momentum W(t) = int_0^t w, linear between nodes
    W = np.concatenate([np.zeros((1,) + w.shape[1:]), ht * np.cumsum(w, axis=0)])
    shape_w = (-1,) + (1,) * (w.ndim - 1)
    W_s = (1 - f).reshape(shape_w) * W[j] + f.reshape(shape_w) * W[j + 1]
    w_s = np.diff(W_s, axis=0) / ht
    return PrimalState(m_s, w_s)


def _flux_matrix(g_field: np.ndarray, grid: Grid) -> sp.csr_matrix:
    """Sparse ``m -> div(m g)`` with the centred periodic divergence."""
    shape = grid.space_shape
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    rows, cols, vals = [], [], []
    for ax in range(grid.d):
        gi = g_field[ax].ravel()
        plus = np.roll(idx, -1, axis=ax).ravel()
        minus = np.roll(idx, 1, axis=ax).ravel()
        rows += [idx.ravel(), idx.ravel()]
        cols += [plus, minus]
        vals += [gi[plus] / (2 * grid.hx), -gi[minus] / (2 * grid.hx)]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def extend_terminal(spec: ProblemSpec, primal: PrimalState, steps: int) -> PrimalState:
    """Continue the flow past ``T`` with the Lagrangian velocity ``-grad Psi``.

    Each step solves ``m_new - ht div(m_new grad Psi) = m_old`` and sets
    ``w = -m_new grad Psi``, so the velocity is exactly ``-grad Psi`` and the
    discrete continuity equation holds.
    """
    g = spec.grid
    grad = gradient_x(spec.psi, g)
    A = (sp.identity(int(np.prod(g.space_shape)), format="csr") - g.ht * _flux_matrix(grad, g)).tocsc()
    lu = spla.splu(A)
    m_ext = [primal.m[-1]]
    w_ext = []
    for _ in range(steps):
        new = lu.solve(m_ext[-1].ravel()).reshape(g.space_shape)
        m_ext.append(new)
        w_ext.append(-new[None] * grad)
    m = np.concatenate([primal.m, np.stack(m_ext[1:])]) if steps else primal.m
    w = np.concatenate([primal.w, np.stack(w_ext)]) if steps else primal.w
    return PrimalState(m, w)


@dataclass
class TimeTranslation:
    eps: list
    B: list
    B0: float
    differences: list
    lower_bound_ok: list
    extension_min_density: list
    pushforward_w2: list
    fit: Fit | None


def time_translation_test(spec: ProblemSpec, primal: PrimalState, cfg: AnalysisConfig,
                          gap: float = 0.0) -> TimeTranslation:
    """``B(m^eps)`` for ``m^eps_t = m_{t + eps zeta(t)}``, extended past ``T``."""
    g = spec.grid
    t1 = cfg.resolve_t1(g)
    grad = gradient_x(spec.psi, g)
    lip = lipschitz_estimate(grad, g)
    eps_list = [j * g.ht for j in cfg.eps_steps]
    bad = [e for e in eps_list if e * lip >= 0.5]
    if bad:
        raise ValueError(
            f"eps out of homeomorphism range: eps * Lip(grad Psi) = {max(bad) * lip:.3f} >= 1/2"
        )
    B0 = evaluate_B(spec, primal)
    z = zeta_profile(g.t_nodes, t1, g.T)
    ext = extend_terminal(spec, primal, max(cfg.eps_steps))
    Bs, diffs, ok, mins, pw = [], [], [], [], []
    for j, eps in zip(cfg.eps_steps, eps_list):
        s = g.t_nodes + eps * z
        state = reparametrize(ext.m[: g.Nt + j + 1], ext.w[: g.Nt + j], s, g.ht)
        ext_min = float(ext.m[g.Nt + 1: g.Nt + j + 1].min())
        mins.append(ext_min)
        B = evaluate_B(spec, state) if ext_min >= -1e-8 else math.inf
        Bs.append(B)
        diffs.append(B - B0)
        ok.append(bool(B - B0 >= -gap - 1e-12))
        if g.d == 1:
            ref = pushforward_terminal(primal.m[-1], grad, eps, g)
            cur = np.maximum(ext.m[g.Nt + j], 0.0)
            cur = cur / (g.cell_volume * cur.sum())
            pw.append(w2_circle(ref, cur))
    fit = loglog_fit(eps_list, diffs) if len(set(eps_list)) >= 2 else None
    return TimeTranslation(eps_list, Bs, B0, diffs, ok, mins, pw, fit)


@dataclass
class Audit:
    eps: list
    direct: list
    expansion_corrected: list
    expansion_stated: list
    residual_corrected: list
    residual_stated: list
    fit_corrected: Fit
    fit_stated: Fit
    selected: str
    profile: str


def _interval_energies(spec: ProblemSpec, primal: PrimalState) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval kinetic and potential energies, as charged by ``B``."""
    g = spec.grid
    m1 = primal.m[1:]
    kin = g.cell_volume * kinetic_density(m1, primal.w).reshape(g.Nt, -1).sum(axis=1)
    pot = potential_energy(spec, m1)
    return kin, pot


def computationzeta_audit(spec: ProblemSpec, primal: PrimalState, cfg: AnalysisConfig) -> Audit:
    """Compare ``B(m^eps)``, ``m^eps_t = m_{t - eps zeta(t)}``, with its first-order
    expansion under both signs of the correction ``eps zeta' (G - |m'|^2/2)``."""
    g = spec.grid
    t1 = cfg.resolve_t1(g)
    z = zeta_profile(g.t_nodes, t1, g.T, cfg.audit_profile)
    dz = np.diff(z) / g.ht
    kin, pot = _interval_energies(spec, primal)
    B0 = evaluate_B(spec, primal)
    psi_int = lambda mm: g.cell_volume * float(np.sum(spec.psi * mm))  # noqa: E731
    eps_list, direct, plus, minus = [], [], [], []
    for j in cfg.eps_steps:
        eps = j * g.ht
        e1 = eps * z[-1]
        s = g.t_nodes - eps * z
        state = reparametrize(primal.m, primal.w, s, g.ht)
        direct.append(evaluate_B(spec, state))
        # cut at T - eps1 (a node when zeta(T) is 0 or 1)
        n_cut = int(round((g.T - e1) / g.ht))
        tail = g.ht * float(np.sum(kin[n_cut:] + pot[n_cut:]))
        corr = eps * g.ht * float(np.sum(dz[:n_cut] * (pot[:n_cut] - kin[:n_cut])))
        term = psi_int(primal.m[n_cut]) - psi_int(primal.m[-1])
        plus.append(B0 - tail + corr + term)
        minus.append(B0 - tail - corr + term)
        eps_list.append(eps)
    direct_a = np.array(direct)
    r_plus = np.abs(direct_a - np.array(plus))
    r_minus = np.abs(direct_a - np.array(minus))
    scale = max(1.0, abs(B0))

    def fit(r):
        if np.all(r <= FLAT * scale):
            return Fit("exact", math.nan, math.nan, eps_list, r.tolist(), [])
        return loglog_fit(eps_list, r)

    selected = "corrected" if r_plus.sum() <= r_minus.sum() else "stated"
    return Audit(eps_list, direct, plus, minus, r_plus.tolist(), r_minus.tolist(), fit(r_plus),
                 fit(r_minus), selected, cfg.audit_profile)


# --------------------------------------------------------------------------
# report


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class AnalysisReport:
    constants: dict
    gap: float
    translation: TranslationCurve | None
    space_fit: Fit | None
    h1_space: dict
    h1_time: dict
    D: DSeries
    terminal: TerminalCheck
    time_translation: TimeTranslation | None
    audit: Audit
    transfer: list
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def write_csvs(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []

        def dump(name, header, rows):
            p = directory / name
            with p.open("w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(header)
                for row in rows:
                    wr.writerow([_fmt(v) for v in row])
            files.append(p)

        if self.translation is not None:
            tr = self.translation
            dump("translation.csv", ["delta", "M"], [(0, tr.M0)] + list(zip(tr.deltas, tr.M)))
        if self.time_translation is not None:
            tt = self.time_translation
            dump("time_translation.csv", ["eps", "B"], [(0.0, tt.B0)] + list(zip(tt.eps, tt.B)))
        dump("D.csv", ["t", "D"], list(zip(self.D.t, self.D.D)))
        dump("h1_space.csv", ["delta", "Q"], sorted(self.h1_space.items()))
        dump("h1_time.csv", ["steps", "Q"], sorted(self.h1_time.items()))
        au = self.audit
        dump("audit.csv", ["eps", "direct", "residual_corrected", "residual_stated"],
             list(zip(au.eps, au.direct, au.residual_corrected, au.residual_stated)))
        return files


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def certified_constants(spec: ProblemSpec, primal: PrimalState) -> dict:
    model = spec.model
    if model.kind == "entropy" and model.c0 is None:
        model = model.with_c0(certify_c0())
    samples = np.unique(np.round(primal.m[primal.m > 0], 12))
    if samples.size > 2000:
        samples = np.quantile(samples, np.linspace(0, 1, 2000))
    out = {"model": model.kind, "q": model.q, "c": model.c}
    if model.kind == "entropy":
        out["c0"] = model.c
    if samples.size:
        out["hpol_C"] = hpol_margin(model, 0.1, samples)
        out["hpol_a0"] = 0.1
    return out


def analyze(spec: ProblemSpec, primal: PrimalState, dual: DualState, cfg: AnalysisConfig) -> AnalysisReport:
    g = spec.grid
    A = evaluate_A(spec, dual)
    B0 = evaluate_B(spec, primal)
    gap = A + B0
    consts = certified_constants(spec, primal)
    checks: list[Check] = []

    translation, space_fit, transfer = None, None, []
    try:
        translation = translation_curve(spec, primal, cfg)
        diffs = np.array(translation.M) - translation.M0
        checks.append(Check("space_translation_lower_bound", bool(np.all(diffs >= -gap - 1e-12)),
                            {"differences": diffs.tolist(), "gap": gap}))
        space_fit = space_quadratic_fit(translation.deltas, translation.M, translation.M0, cfg.fit_window)
        checks.append(Check("space_translation_slope",
                            space_fit.status in ("flat", "exact") or space_fit.slope >= cfg.slope_min,
                            {"status": space_fit.status, "slope": space_fit.slope, "min": cfg.slope_min}))
        # J(m) transfer: c ||J(m^delta) - J(m)||^2 <= 2 (gap + M(delta) - M(0)) + 2 gap
        c = consts["c"]
        for d, M in zip(translation.deltas, translation.M):
            state, _ = translated_state(spec, primal, d, cfg)
            diff = spec.model.J(state.m[1:]) - spec.model.J(primal.m[1:])
            lhs = c * g.ht * g.cell_volume * float(np.sum(diff**2))
            rhs = 2 * (gap + abs(M - translation.M0)) + 2 * gap
            transfer.append({"delta": d, "lhs": lhs, "rhs": rhs})
        checks.append(Check("J_transfer", all(t["lhs"] <= t["rhs"] + 1e-9 for t in transfer),
                            {"rows": transfer}))
    except ValueError as exc:
        checks.append(Check("space_translation", False, {"error": str(exc)}))

    h1s = h1_space_quotient(spec, primal, cfg)
    h1t = h1_time_quotient(spec, primal, cfg)
    Ds = constancy_of_D(spec, primal, cfg)
    checks.append(Check("D_dispersion", Ds.dispersion <= cfg.dispersion_max,
                        {"dispersion": Ds.dispersion, "max": cfg.dispersion_max, "mean": Ds.mean}))
    term = terminal_inequality(spec, primal, cfg, Ds.mean)
    checks.append(Check("terminal_inequality", term.passed,
                        {"lhs": term.lhs, "rhs": term.rhs, "margin": term.margin,
                         "tolerance": cfg.terminal_tol * max(1.0, abs(term.rhs))}))

    tt = None
    try:
        tt = time_translation_test(spec, primal, cfg, gap)
        checks.append(Check("time_translation_lower_bound", all(tt.lower_bound_ok),
                            {"differences": tt.differences, "gap": gap}))
        fit_ok = tt.fit is not None and (tt.fit.status == "flat" or (tt.fit.status == "fit" and tt.fit.slope >= cfg.slope_min))
        checks.append(Check("time_translation_slope", bool(fit_ok),
                            {"status": tt.fit.status if tt.fit else None,
                             "slope": tt.fit.slope if tt.fit else None, "min": cfg.slope_min}))
    except ValueError as exc:
        checks.append(Check("time_translation", False, {"error": str(exc)}))

    audit = computationzeta_audit(spec, primal, cfg)
    checks.append(Check("audit_sign", audit.selected == "corrected",
                        {"selected": audit.selected,
                         "residual_corrected": audit.residual_corrected,
                         "residual_stated": audit.residual_stated}))

    return AnalysisReport(consts, gap, translation, space_fit, h1s, h1t, Ds, term, tt, audit,
                          transfer, checks)
