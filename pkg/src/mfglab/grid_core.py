"""Discrete space-time calculus on [0, T] x the unit torus.

Layout
------
Potentials ``u`` and densities ``m`` live on the ``Nt + 1`` time nodes
``t_k = k * ht``. Time differences, momenta ``w`` and prices ``p`` live on the
``Nt`` time intervals. Space is collocated with centered periodic differences.

Scalar fields are arrays of shape ``(n_slices, *space)``; vector fields are
``(n_slices, d, *space)``.

The space-time operator used by the solver is

    D u = (a, b),   a_k = (u_{k+1} - u_k) / ht,   b_k = grad u_k,

for ``k = 0 .. Nt-1``. Its adjoint (see :func:`apply_DT`) is the discrete
continuity equation ``(m_{k+1} - m_k)/ht + div w_k = 0``, which makes the
discrete duality identity exact. A quantity paired with interval ``k`` in
the ``a`` slot stands for the density at node ``k + 1``: every node after the
first is charged exactly once, the terminal one included.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft


def fft_workers() -> int:
    """Worker cap for FFTs, from ``MFGLAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MFGLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    d: int
    Nx: int
    Nt: int
    T: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.Nx < 4:
            raise ValueError(f"Nx >= 4 required, got {self.Nx}")
        if self.Nt < 4:
            raise ValueError(f"Nt >= 4 required, got {self.Nt}")
        if not self.T > 0:
            raise ValueError(f"T > 0 required, got {self.T}")

    @property
    def hx(self) -> float:
        return 1.0 / self.Nx

    @property
    def ht(self) -> float:
        return self.T / self.Nt

    @property
    def cell_volume(self) -> float:
        return self.hx**self.d

    @property
    def space_shape(self) -> tuple[int, ...]:
        return (self.Nx,) * self.d

    @property
    def node_shape(self) -> tuple[int, ...]:
        return (self.Nt + 1, *self.space_shape)

    @property
    def interval_shape(self) -> tuple[int, ...]:
        return (self.Nt, *self.space_shape)

    @property
    def vector_shape(self) -> tuple[int, ...]:
        return (self.Nt, self.d, *self.space_shape)

    @cached_property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.Nt + 1) * self.ht

    @cached_property
    def t_mid(self) -> np.ndarray:
        return (np.arange(self.Nt) + 0.5) * self.ht

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Space node coordinates ``x_i = i * hx`` as broadcastable mesh arrays."""
        x = np.arange(self.Nx) * self.hx
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    def zeros_nodes(self) -> np.ndarray:
        return np.zeros(self.node_shape)

    def zeros_intervals(self) -> np.ndarray:
        return np.zeros(self.interval_shape)

    def zeros_vector(self) -> np.ndarray:
        return np.zeros(self.vector_shape)


def _space_axes(f: np.ndarray, grid: Grid) -> tuple[int, ...]:
    return tuple(range(f.ndim - grid.d, f.ndim))


def gradient_x(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered periodic gradient; output inserts a component axis before space."""
    axes = _space_axes(f, grid)
    comps = [(np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * grid.hx) for ax in axes]
    return np.stack(comps, axis=f.ndim - grid.d)


def divergence_x(w: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered periodic divergence, the negative adjoint of :func:`gradient_x`."""
    caxis = w.ndim - grid.d - 1
    out = np.zeros(w.shape[:caxis] + w.shape[caxis + 1 :])
    for i in range(grid.d):
        wi = np.take(w, i, axis=caxis)
        ax = out.ndim - grid.d + i
        out += (np.roll(wi, -1, axis=ax) - np.roll(wi, 1, axis=ax)) / (2 * grid.hx)
    return out


def laplacian_x(f: np.ndarray, grid: Grid) -> np.ndarray:
    """``div(grad f)``: the wide (2h) centered Laplacian."""
    return divergence_x(gradient_x(f, grid), grid)


def time_derivative(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Forward difference ``(f_{k+1} - f_k) / ht`` located on intervals."""
    if f.shape[0] != grid.Nt + 1:
        raise ValueError(f"expected {grid.Nt + 1} time slices, got {f.shape[0]}")
    return (f[1:] - f[:-1]) / grid.ht


def apply_D(u: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """``D u = (du/dt on intervals, grad u at the left node of each interval)``."""
    return time_derivative(u, grid), gradient_x(u[:-1], grid)


def apply_DT(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    """Node coefficients ``X`` with ``<D u, (a, b)> = hx^d * sum_j u_j X_j``.

    The interval inner product is ``ht * hx^d * sum``. For ``(a, b) = (m, w)``
    with ``m`` read as node densities ``m_{k+1}`` the entries for ``0 < j < Nt``
    are ``-ht * [(m_{j+1} - m_j)/ht + div w_j]``, the first entry is
    ``-(m_1 + ht div w_0)`` and the last is ``m_Nt``.
    """
    if a.shape != grid.interval_shape or b.shape != grid.vector_shape:
        raise ValueError("shape mismatch between (a, b) and grid")
    out = np.zeros(grid.node_shape)
    out[:-1] -= a + grid.ht * divergence_x(b, grid)
    out[1:] += a
    return out


def inner_intervals(f: np.ndarray, g: np.ndarray, grid: Grid) -> float:
    return float(grid.ht * grid.cell_volume * np.sum(f * g))


def adjoint_pair_check(u: np.ndarray, mu: tuple[np.ndarray, np.ndarray], grid: Grid) -> float:
    """``<D u, mu> - <u, D^T mu>``, boundary terms at t=0 and t=T included."""
    m, w = mu
    if u.shape != grid.node_shape:
        raise ValueError(f"u has shape {u.shape}, expected {grid.node_shape}")
    a, b = apply_D(u, grid)
    lhs = inner_intervals(a, m, grid) + inner_intervals(b, w, grid)
    rhs = grid.cell_volume * float(np.sum(u * apply_DT(m, w, grid)))
    return lhs - rhs


def integrate_slice(f: np.ndarray, k: int, grid: Grid) -> float:
    return float(grid.cell_volume * np.sum(f[k]))


def integrate_space(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-slice spatial integrals of a field with leading slice axis."""
    return grid.cell_volume * f.reshape(f.shape[0], -1).sum(axis=1)


# --------------------------------------------------------------------------
# shifts


def periodic_shift(f: np.ndarray, shift: np.ndarray | float, grid: Grid) -> np.ndarray:
    """``f(x + shift * hx)`` for one spatial slice, periodic linear interpolation.

    ``shift`` is in cells, one entry per axis (a scalar is allowed for d=1).
    """
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (grid.d,))
    out = f
    for ax, s in enumerate(shift):
        if s == 0.0:
            continue
        n = int(np.floor(s))
        frac = s - n
        lo = np.roll(out, -n, axis=ax)
        if frac == 0.0:
            out = lo
        else:
            out = (1.0 - frac) * lo + frac * np.roll(lo, -1, axis=ax)
    return out


def shift_space(f: np.ndarray, delta, zeta: np.ndarray, grid: Grid) -> np.ndarray:
    """Slice-wise ``f(t_k, x + zeta_k * delta * hx)``; ``delta`` in cells."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (f.shape[0],):
        raise ValueError("zeta must have one value per time slice")
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (grid.d,))
    out = np.empty_like(f, dtype=float)
    for k in range(f.shape[0]):
        out[k] = periodic_shift(f[k], zeta[k] * delta, grid) if zeta[k] != 0.0 else f[k]
    return out


# --------------------------------------------------------------------------
# elliptic solve


def _laplacian_symbol(grid: Grid) -> np.ndarray:
    """``kappa >= 0`` with ``-laplacian_x`` acting as ``kappa`` on rfftn modes."""
    k = np.arange(grid.Nx)
    s = np.sin(2 * np.pi * k / grid.Nx) ** 2 / grid.hx**2
    sr = s[: grid.Nx // 2 + 1]
    if grid.d == 1:
        return sr
    return s[:, None] + sr[None, :]


class EllipticSolver:
    """Solver for ``r (-d_tt - Lap) u = rhs`` on nodes ``0 .. Nt-1``.

    Discrete system, for each node ``j < Nt`` (``u_Nt`` is prescribed)::

        j = 0:   r (u_0 - u_1) / ht^2 + r K u_0                = rhs_0 + neumann0 / ht
        j > 0:   r (2 u_j - u_{j-1} - u_{j+1}) / ht^2 + r K u_j = rhs_j

    with ``K = -laplacian_x``. These rows are ``(r / ht) * D^T D`` of
    :func:`apply_D`. Space is diagonalized by FFT; each mode gets one
    tridiagonal solve in time (Thomas algorithm, vectorized over modes).
    """

    def __init__(self, grid: Grid, r: float):
        if not r > 0:
            raise ValueError(f"penalty r must be positive, got {r}")
        self.grid = grid
        self.r = float(r)
        n = grid.Nt
        c = r / grid.ht**2
        kappa = _laplacian_symbol(grid)
        diag = np.empty((n,) + kappa.shape)
        diag[0] = c + r * kappa
        diag[1:] = 2 * c + r * kappa
        off = -c
        # forward elimination coefficients (matrix is SPD, no pivoting)
        cp = np.empty_like(diag)
        denom = np.empty_like(diag)
        denom[0] = diag[0]
        cp[0] = off / denom[0]
        for j in range(1, n):
            denom[j] = diag[j] - off * cp[j - 1]
            cp[j] = off / denom[j]
        self._off = off
        self._cp = cp
        self._denom = denom

    def _rfft(self, f):
        return scipy.fft.rfftn(f, axes=tuple(range(1, f.ndim)), workers=fft_workers())

    def _irfft(self, F):
        g = self.grid
        return scipy.fft.irfftn(F, s=g.space_shape, axes=tuple(range(1, F.ndim)), workers=fft_workers())

    def solve(self, rhs: np.ndarray, neumann0: np.ndarray, dirichletT: np.ndarray) -> np.ndarray:
        g = self.grid
        n = g.Nt
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] == n + 1:
            rhs = rhs[:-1]
        if rhs.shape != g.interval_shape:
            raise ValueError(f"rhs has shape {rhs.shape}, expected {g.interval_shape}")
        R = self._rfft(rhs)
        R[0] += self._rfft(np.asarray(neumann0, dtype=float)[None])[0] / g.ht
        UT = self._rfft(np.asarray(dirichletT, dtype=float)[None])[0]
        R[n - 1] -= self._off * UT
        off, cp, denom = self._off, self._cp, self._denom
        y = np.empty_like(R)
        y[0] = R[0] / denom[0]
        for j in range(1, n):
            y[j] = (R[j] - off * y[j - 1]) / denom[j]
        U = np.empty_like(R)
        U[n - 1] = y[n - 1]
        for j in range(n - 2, -1, -1):
            U[j] = y[j] - cp[j] * U[j + 1]
        u = np.empty(g.node_shape)
        u[:-1] = self._irfft(U)
        u[-1] = dirichletT
        return u


def elliptic_apply(u: np.ndarray, neumann0: np.ndarray, grid: Grid, r: float) -> np.ndarray:
    """Left-hand side of the :class:`EllipticSolver` rows (neumann term moved left).

    Returns an interval-shaped array that equals ``rhs`` for the solution.
    """
    ht = grid.ht
    out = np.empty(grid.interval_shape)
    out[0] = r * (u[0] - u[1]) / ht**2 - np.asarray(neumann0) / ht
    out[1:] = r * (2 * u[1:-1] - u[:-2] - u[2:]) / ht**2
    out -= r * laplacian_x(u[:-1], grid)
    return out


def elliptic_solve(rhs, neumann0, dirichletT, r: float, grid: Grid) -> np.ndarray:
    return EllipticSolver(grid, r).solve(rhs, neumann0, dirichletT)


# --------------------------------------------------------------------------
# field dump format: header line then little-endian float64, time-major,
# then (for vector fields) component, then row-major space.

_HEADER = "MFGGRID"


def write_field(path, f: np.ndarray, grid: Grid, kind: str) -> None:
    header = f"{_HEADER} {grid.d} {grid.Nx} {grid.Nt} {grid.T!r} {kind}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def field_shape(grid: Grid, kind: str) -> tuple[int, ...]:
    shapes = {"m": grid.node_shape, "u": grid.node_shape, "p": grid.interval_shape, "w": grid.vector_shape}
    if kind not in shapes:
        raise ValueError(f"unknown field kind {kind!r}")
    return shapes[kind]


def read_field(path) -> tuple[np.ndarray, Grid, str]:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    try:
        parts = raw[:nl].decode("ascii").split()
        if nl < 0 or len(parts) != 6 or parts[0] != _HEADER:
            raise ValueError
        grid = Grid(int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4]))
        kind = parts[5]
        shape = field_shape(grid, kind)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ValueError(f"malformed field file: {path}") from exc
    body = raw[nl + 1 :]
    if len(body) != 8 * int(np.prod(shape)):
        raise ValueError(f"malformed field file: {path} (size mismatch)")
    return np.frombuffer(body, dtype="<f8").reshape(shape).copy(), grid, kind
