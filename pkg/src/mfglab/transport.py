"""Measure-level utilities: continuity residuals, circular W2, metric speed,
the terminal pushforward and characteristic trajectories.

Densities are per-volume values on the grid; cell ``i`` is centred at
``x_i = i * hx``. In 1-D two readings of a density are available to
:func:`w2_circle`: ``"cells"`` (piecewise constant on ``[x_i - hx/2, x_i + hx/2)``)
and ``"atoms"`` (a point mass ``hx * m_i`` at ``x_i``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.optimize import minimize_scalar

from .grid_core import Grid, divergence_x, gradient_x

VELOCITY_THRESHOLD = 1e-12


@dataclass
class PrimalState:
    """Density on time nodes and momentum ``w = m v`` on intervals.

    Interval ``k`` pairs ``w_k`` with the density at node ``k + 1``.
    """

    m: np.ndarray
    w: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return velocity(self.m[1:], self.w)


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # (n_times, d), wrapped to [0, 1)


def velocity(m: np.ndarray, w: np.ndarray, threshold: float = VELOCITY_THRESHOLD) -> np.ndarray:
    """``v = w / m`` where ``m > threshold``, else 0."""
    pos = m > threshold
    safe = np.where(pos, m, 1.0)
    return np.where(pos[:, None], w / safe[:, None], 0.0)


def integrate_continuity(m0: np.ndarray, w: np.ndarray, grid: Grid) -> np.ndarray:
    """Node densities from ``m_{k+1} = m_k - ht div w_k`` and ``m_0 = m0``."""
    m = np.empty(grid.node_shape)
    m[0] = m0
    m[1:] = m0 - grid.ht * np.cumsum(divergence_x(w, grid), axis=0)
    return m


def continuity_defect(state: PrimalState, grid: Grid) -> np.ndarray:
    return (state.m[1:] - state.m[:-1]) / grid.ht + divergence_x(state.w, grid)


def continuity_residual(state: PrimalState, m0: np.ndarray, grid: Grid) -> float:
    """Max per-interval L1 norm of the continuity defect plus the L1 mismatch at t=0."""
    if state.m.shape != grid.node_shape or state.w.shape != grid.vector_shape:
        raise ValueError(
            f"state shapes {state.m.shape}, {state.w.shape} do not match grid "
            f"{grid.node_shape}, {grid.vector_shape}"
        )
    m0 = np.asarray(m0, dtype=float)
    if m0.shape != grid.space_shape:
        raise ValueError("m0 shape does not match the grid")
    per_slice = grid.cell_volume * np.abs(continuity_defect(state, grid)).reshape(grid.Nt, -1).sum(axis=1)
    return float(per_slice.max() + grid.cell_volume * np.abs(state.m[0] - m0).sum())


def mass_audit(m: np.ndarray, grid: Grid) -> tuple[float, float]:
    """``(max |mass_k - 1|, min m)`` over the slices of a density series."""
    mass = grid.cell_volume * m.reshape(m.shape[0], -1).sum(axis=1)
    return float(np.max(np.abs(mass - 1.0))), float(m.min())


# --------------------------------------------------------------------------
# circular W2


def _check_density(f, name):
    f = np.asarray(f, dtype=float)
    if f.ndim != 1:
        raise ValueError(f"{name} must be a 1-D density")
    if np.any(f < 0):
        raise ValueError(f"{name} has negative entries")
    return f


class _Quantile:
    """Lifted quantile ``Q(t + 1) = Q(t) + 1`` of a measure on the circle."""

    def __init__(self, weights: np.ndarray, mode: str):
        n = weights.size
        h = 1.0 / n
        keep = weights > 0
        idx = np.flatnonzero(keep)
        wk = weights[keep]
        cum = np.concatenate([[0.0], np.cumsum(wk)])
        cum /= cum[-1]
        self.c0, self.c1 = cum[:-1], cum[1:]
        self.c1[-1] = 1.0
        if mode == "atoms":
            self.x0 = idx * h
            self.slope = np.zeros(idx.size)
        else:
            self.x0 = (idx - 0.5) * h
            self.slope = h / (self.c1 - self.c0)
        # breakpoints inside one period, 0 included
        self.breaks = self.c0

    def __call__(self, t: np.ndarray) -> np.ndarray:
        n = np.floor(t)
        s = t - n
        j = np.searchsorted(self.c1, s, side="right")
        j = np.minimum(j, self.c1.size - 1)
        return n + self.x0[j] + self.slope[j] * (s - self.c0[j])


_GL = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def _offset_cost(qa: _Quantile, qb: _Quantile, theta: float) -> float:
    """``int_0^1 |Q_a(t) - Q_b(t + theta)|^2 dt``, exact for both modes."""
    shifted = qb.breaks - theta
    shifted = shifted - np.floor(shifted)
    t = np.unique(np.concatenate([qa.breaks, shifted, [0.0, 1.0]]))
    t = t[(t >= 0.0) & (t <= 1.0)]
    lo, hi = t[:-1], t[1:]
    length = hi - lo
    good = length > 0
    lo, length = lo[good], length[good]
    # two-point Gauss-Legendre is exact for the quadratic integrand on each piece
    total = 0.0
    for node in _GL:
        tt = lo + node * length
        diff = qa(tt) - qb(tt + theta)
        total += 0.5 * float(np.sum(length * diff**2))
    return total


def w2_circle(mu, nu, mode: str = "cells", scan_factor: int = 1, tol: float = 1e-12) -> float:
    """2-Wasserstein distance between two densities on the unit circle.

    Minimizes the quantile-coupling cost over the rotation offset: a scan at
    resolution ``1/(scan_factor * N)`` followed by a golden-section search (the
    cost is convex in the offset).
    """
    if mode not in ("cells", "atoms"):
        raise ValueError(f"mode must be 'cells' or 'atoms', got {mode!r}")
    mu = _check_density(mu, "mu")
    nu = _check_density(nu, "nu")
    if mu.size != nu.size:
        raise ValueError("densities must share a grid")
    n = mu.size
    mass_mu, mass_nu = mu.sum() / n, nu.sum() / n
    if abs(mass_mu - 1.0) > 1e-8 or abs(mass_nu - 1.0) > 1e-8:
        raise ValueError(f"densities must have unit mass, got {mass_mu} and {mass_nu}")
    if np.array_equal(mu, nu):
        return 0.0
    qa, qb = _Quantile(mu, mode), _Quantile(nu, mode)
    step = 1.0 / (scan_factor * n)
    grid = np.arange(-1.0, 1.0 + step / 2, step)
    costs = np.array([_offset_cost(qa, qb, th) for th in grid])
    i = int(np.argmin(costs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    # search in s = theta - lo so the relative tolerance acts on a small number
    res = minimize_scalar(lambda s: _offset_cost(qa, qb, lo + s), bracket=(0.0, hi - lo), method="golden",
                          options={"xtol": tol})
    best = min(float(res.fun), costs[i])
    return float(np.sqrt(max(best, 0.0)))


# --------------------------------------------------------------------------
# metric speed


def kinetic_proxy(m_next: np.ndarray, w: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-interval ``sqrt(int |w_k|^2 / m_{k+1} dx)``."""
    ww = np.sum(w**2, axis=1)
    pos = m_next > 0
    dens = np.where(pos, ww / np.where(pos, m_next, 1.0), np.where(ww > 0, np.inf, 0.0))
    return np.sqrt(grid.cell_volume * dens.reshape(grid.Nt, -1).sum(axis=1))


def metric_speed(m: np.ndarray, grid: Grid, method: str = "w2", w: np.ndarray | None = None,
                 mode: str = "cells") -> np.ndarray:
    """Metric speed ``|m'|`` of a density series on the time nodes.

    ``method="w2"`` (d=1) uses centred W2 difference quotients, one-sided at
    the ends. ``method="kinetic"`` returns the kinetic proxy averaged from the
    two intervals adjacent to each node (one interval at the ends); it bounds
    the metric speed from above.
    """
    if m.shape != grid.node_shape:
        raise ValueError("m must hold one slice per time node")
    if method == "w2":
        if grid.d != 1:
            raise ValueError("the W2 route is only available for d=1; use method='kinetic'")
        n = grid.Nt
        out = np.empty(n + 1)
        dist = lambda i, j: w2_circle(m[i], m[j], mode=mode)  # noqa: E731
        out[0] = dist(0, 1) / grid.ht
        out[n] = dist(n - 1, n) / grid.ht
        for k in range(1, n):
            out[k] = dist(k - 1, k + 1) / (2 * grid.ht)
        return out
    if method == "kinetic":
        if w is None:
            raise ValueError("the kinetic proxy needs the momentum w")
        kin = kinetic_proxy(m[1:], w, grid)
        out = np.empty(grid.Nt + 1)
        out[0], out[-1] = kin[0], kin[-1]
        out[1:-1] = 0.5 * (kin[:-1] + kin[1:])
        return out
    raise ValueError(f"unknown method {method!r}")


def step_distances(m: np.ndarray, mode: str = "cells") -> np.ndarray:
    """``W2(m_k, m_{k+1})`` for consecutive slices of a 1-D series."""
    return np.array([w2_circle(m[k], m[k + 1], mode=mode) for k in range(m.shape[0] - 1)])


# --------------------------------------------------------------------------
# terminal pushforward


def _interp_periodic(f: np.ndarray, pts_cells: np.ndarray) -> np.ndarray:
    """Periodic (bi)linear interpolation of ``f`` at fractional cell coordinates."""
    return map_coordinates(f, pts_cells, order=1, mode="grid-wrap")


def jacobian(v: np.ndarray, grid: Grid) -> np.ndarray:
    """``Dv[i, j] = d v_i / d x_j`` by centred differences, shape ``(d, d, *space)``."""
    return np.stack([gradient_x(v[i], grid) for i in range(grid.d)])


def lipschitz_estimate(v: np.ndarray, grid: Grid) -> float:
    """Largest spectral norm of the discrete Jacobian of ``v``."""
    J = np.moveaxis(jacobian(v, grid).reshape(grid.d, grid.d, -1), -1, 0)
    return float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2))))


def pushforward_terminal(m_T: np.ndarray, v: np.ndarray, delta: float, grid: Grid) -> np.ndarray:
    """Density of ``(R_delta)_# m_T`` with ``R_delta(x) = x - delta v(x)``.

    In 1-D every cell's mass is spread uniformly over the image of the cell
    and deposited by overlap, so mass and nonnegativity are exact. In 2-D the
    change-of-variables density ``m_T / det(I - delta Dv)`` is evaluated at
    ``R^{-1}`` of every node (found by fixed-point iteration) and the result is
    rescaled to the input mass.
    """
    m_T = np.asarray(m_T, dtype=float)
    v = np.asarray(v, dtype=float)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if m_T.shape != grid.space_shape or v.shape != (grid.d,) + grid.space_shape:
        raise ValueError("m_T / v shapes do not match the grid")
    if np.any(m_T < 0):
        raise ValueError("m_T must be nonnegative")
    if delta == 0:
        return m_T.copy()
    if delta * lipschitz_estimate(v, grid) >= 0.5:
        raise ValueError("delta * Lip(v) must be below 1/2 for R_delta to be a homeomorphism")
    if grid.d == 1:
        return _pushforward_1d(m_T, v[0], delta, grid)
    return _pushforward_nd(m_T, v, delta, grid)


def _pushforward_1d(m_T, v, delta, grid):
    n, h = grid.Nx, grid.hx
    x = np.arange(n) * h
    # cell edges x_{i-1/2} and their images; v at edges by periodic averaging
    v_edge = 0.5 * (v + np.roll(v, 1))
    left = (x - h / 2) - delta * v_edge
    # R is increasing, so image intervals are contiguous; the last wraps
    right = np.roll(left, -1)
    right[-1] += 1.0
    mass = h * m_T
    out = np.zeros(n)
    dens = np.where(right > left, mass / np.maximum(right - left, 1e-300), 0.0)
    # target cells [j h - h/2, j h + h/2); walk the overlap of each image interval
    start = np.floor((left + h / 2) / h).astype(int)
    stop = np.floor((right + h / 2) / h).astype(int)
    for i in range(n):
        if mass[i] == 0.0:
            continue
        for j in range(start[i], stop[i] + 1):
            a = max(left[i], j * h - h / 2)
            b = min(right[i], j * h + h / 2)
            if b > a:
                out[j % n] += dens[i] * (b - a)
    out /= h
    # deposit round-off only
    out *= m_T.sum() / out.sum()
    return out


def _pushforward_nd(m_T, v, delta, grid):
    h = grid.hx
    idx = np.indices(grid.space_shape).astype(float)
    y = idx * h
    x = y.copy()
    # R^{-1}(y) solves x = y + delta v(x); contraction since delta Lip(v) < 1/2
    for _ in range(200):
        vx = np.stack([_interp_periodic(v[i], x / h) for i in range(grid.d)])
        x_new = y + delta * vx
        if np.max(np.abs(x_new - x)) < 1e-15:
            x = x_new
            break
        x = x_new
    J = jacobian(v, grid)
    A = np.eye(grid.d).reshape((grid.d, grid.d) + (1,) * grid.d) - delta * J
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    det_x = _interp_periodic(det, x / h)
    m_x = _interp_periodic(m_T, x / h)
    out = np.maximum(m_x, 0.0) / det_x
    total = out.sum()
    if total > 0:
        out *= m_T.sum() / total
    return out


# --------------------------------------------------------------------------
# trajectories


def flow_trajectories(u: np.ndarray, starts, grid: Grid, substeps: int = 4) -> list[Trajectory]:
    """Integrate ``x' = -grad u(t, x)`` from each start with classical RK4.

    ``grad u`` is interpolated (bi)linearly in space and linearly in time;
    the step is ``ht / substeps``. Positions are reported on the time nodes.
    """
    if u.shape != grid.node_shape:
        raise ValueError("u must be given on every time node")
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if starts.shape[1] != grid.d:
        raise ValueError(f"starts must have {grid.d} coordinates each")
    grad = gradient_x(u, grid)  # (Nt+1, d, *space)
    h, ht = grid.hx, grid.ht

    def field(t, x):
        s = min(max(t / ht, 0.0), grid.Nt)
        k = min(int(np.floor(s)), grid.Nt - 1)
        f = s - k
        cells = (np.mod(x, 1.0) / h).T
        out = np.empty_like(x)
        for i in range(grid.d):
            g0 = _interp_periodic(grad[k, i], cells)
            g1 = _interp_periodic(grad[k + 1, i], cells)
            out[:, i] = -((1 - f) * g0 + f * g1)
        return out

    x = starts.copy()
    path = [np.mod(x, 1.0)]
    dt = ht / substeps
    for k in range(grid.Nt):
        for s in range(substeps):
            t = k * ht + s * dt
            k1 = field(t, x)
            k2 = field(t + dt / 2, x + dt / 2 * k1)
            k3 = field(t + dt / 2, x + dt / 2 * k2)
            k4 = field(t + dt, x + dt * k3)
            x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        path.append(np.mod(x, 1.0))
    path = np.stack(path)  # (Nt+1, n_starts, d)
    times = grid.t_nodes
    return [Trajectory(times.copy(), path[:, j]) for j in range(starts.shape[0])]


def write_trajectories(directory, trajectories: list[Trajectory]) -> list[Path]:
    """One CSV per trajectory with columns ``t,x1[,x2]``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, tr in enumerate(trajectories):
        p = directory / f"trajectory_{j:03d}.csv"
        d = tr.positions.shape[1]
        with p.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t"] + [f"x{i + 1}" for i in range(d)])
            for t, pos in zip(tr.times, tr.positions):
                wr.writerow([repr(float(t))] + [repr(float(c)) for c in pos])
        paths.append(p)
    return paths
