"""Matrix-free grid operator for ``-2 div(G grad) + V`` on a ball-masked lattice.

Unknowns are the lattice points strictly inside the truncation ball; all
other points carry the Dirichlet value zero.  Only the masked points are
stored, together with a neighbour table, so a 6D ball costs about 8% of the
surrounding box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConvergenceError, MemoryCapError, PreconditionError

# bytes per unknown besides the neighbour table: flat index (8), multi-index
# (2 per axis), and eight float64 work vectors (V, diag, phi, r, z, p, Ap, rhs)
_FLOATS_PER_POINT = 8


@numba.njit(cache=True)
def _count_ball(n, dim, lo, h, r2max):
    idx = np.zeros(dim, dtype=np.int64)
    total = n**dim
    count = 0
    for _ in range(total):
        s = 0.0
        for a in range(dim):
            c = lo + (idx[a] + 1) * h
            s += c * c
        if s < r2max:
            count += 1
        a = dim - 1
        while a >= 0:
            idx[a] += 1
            if idx[a] < n:
                break
            idx[a] = 0
            a -= 1
    return count


@numba.njit(cache=True)
def _fill_ball(n, dim, lo, h, r2max, flat_out, multi_out):
    idx = np.zeros(dim, dtype=np.int64)
    total = n**dim
    k = 0
    for f in range(total):
        s = 0.0
        for a in range(dim):
            c = lo + (idx[a] + 1) * h
            s += c * c
        if s < r2max:
            flat_out[k] = f
            for a in range(dim):
                multi_out[k, a] = idx[a]
            k += 1
        a = dim - 1
        while a >= 0:
            idx[a] += 1
            if idx[a] < n:
                break
            idx[a] = 0
            a -= 1


@numba.njit(cache=True)
def _apply(x, diag, nbr, coef, out):
    m, nn = nbr.shape
    for i in range(m):
        acc = diag[i] * x[i]
        for k in range(nn):
            j = nbr[i, k]
            if j >= 0:
                acc += coef[k] * x[j]
        out[i] = acc


def stencil(gram: np.ndarray, h: float):
    """Offsets and coefficients of the kinetic part ``-2 div(G grad)``.

    Mixed derivatives use the lattice diagonal aligned with the sign of
    ``G_ij``, which keeps every off-diagonal coefficient nonpositive as long as
    ``G`` is diagonally dominant.  Returns ``(offsets, coefs, centre)``.
    """
    G = np.asarray(gram, dtype=float)
    dim = G.shape[0]
    off_sum = np.sum(np.abs(G), axis=1) - np.abs(np.diag(G))
    if np.any(off_sum > np.diag(G) * (1 + 1e-12)):
        raise PreconditionError("metric Gram matrix must be diagonally dominant")
    inv = 1.0 / (h * h)
    offsets, coefs = [], []
    centre = 0.0
    axis_coef = -2.0 * np.diag(G).copy()
    for i in range(dim):
        for j in range(i + 1, dim):
            g = G[i, j]
            if g == 0.0:
                continue
            s = 1 if g > 0 else -1
            e = np.zeros(dim, dtype=np.int64)
            e[i] = 1
            e[j] = s
            offsets += [e.copy(), -e]
            coefs += [-2.0 * abs(g) * inv] * 2
            axis_coef[i] += 2.0 * abs(g)
            axis_coef[j] += 2.0 * abs(g)
            centre -= 4.0 * abs(g)
    for i in range(dim):
        e = np.zeros(dim, dtype=np.int64)
        e[i] = 1
        offsets += [e.copy(), -e]
        coefs += [axis_coef[i] * inv] * 2
        centre += 4.0 * G[i, i]
    return np.array(offsets, dtype=np.int64), np.array(coefs), centre * inv


@dataclass
class BallGrid:
    """Lattice points strictly inside a ball, with neighbour connectivity."""

    dim: int
    n: int
    half_width: float
    radius: float
    h: float
    flat: np.ndarray
    multi: np.ndarray

    @property
    def size(self) -> int:
        return int(self.flat.size)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def coordinates(self, start=0, stop=None) -> np.ndarray:
        stop = self.size if stop is None else stop
        return -self.half_width + (self.multi[start:stop].astype(float) + 1.0) * self.h

    def neighbours(self, offsets: np.ndarray) -> np.ndarray:
        n, dim = self.n, self.dim
        strides = n ** np.arange(dim - 1, -1, -1, dtype=np.int64)
        nbr = np.full((self.size, len(offsets)), -1, dtype=np.int32)
        multi = self.multi.astype(np.int64)
        for k, off in enumerate(offsets):
            moved = multi + off
            valid = np.all((moved >= 0) & (moved < n), axis=1)
            target = self.flat + int(off @ strides)
            pos = np.searchsorted(self.flat, target)
            pos = np.minimum(pos, self.size - 1)
            hit = valid & (self.flat[pos] == target)
            nbr[hit, k] = pos[hit]
        return nbr

    def scatter_to_box(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        box = np.full(self.n**self.dim, fill)
        box[self.flat] = values
        return box.reshape((self.n,) * self.dim)


def estimate_bytes(m: int, dim: int, n_neighbours: int) -> int:
    return int(m * (8 + 2 * dim + 4 * n_neighbours + 8 * _FLOATS_PER_POINT))


def build_ball_grid(dim, n, half_width, radius, n_neighbours, memory_cap_bytes) -> BallGrid:
    h = 2.0 * half_width / (n + 1)
    lo = -half_width
    m = int(_count_ball(int(n), int(dim), float(lo), float(h), float(radius) ** 2))
    need = estimate_bytes(m, dim, n_neighbours)
    if need > memory_cap_bytes:
        raise MemoryCapError(
            f"grid with {m} unknowns needs ~{need / 2**30:.2f} GiB, cap is {memory_cap_bytes / 2**30:.2f} GiB",
            need,
            memory_cap_bytes,
        )
    flat = np.empty(m, dtype=np.int64)
    multi = np.empty((m, dim), dtype=np.int16)
    _fill_ball(int(n), int(dim), float(lo), float(h), float(radius) ** 2, flat, multi)
    return BallGrid(int(dim), int(n), float(half_width), float(radius), h, flat, multi)


class GridOperator:
    """``A = K + diag(V)`` with ``K`` the PSD stencil matrix of ``-2 div(G grad)``."""

    def __init__(self, grid: BallGrid, gram: np.ndarray, potential_values: np.ndarray):
        offsets, coefs, centre = stencil(gram, grid.h)
        self.grid = grid
        self.nbr = grid.neighbours(offsets)
        self.coef = coefs
        self.V = np.ascontiguousarray(potential_values, dtype=float)
        self.diag = self.V + centre
        self._buf = np.empty(grid.size)

    def matvec(self, x, out=None):
        out = np.empty_like(x) if out is None else out
        _apply(x, self.diag, self.nbr, self.coef, out)
        return out

    def kinetic_form(self, x) -> float:
        """``x^T K x`` (unscaled by the cell volume)."""
        ax = self.matvec(x, self._buf)
        return float(x @ ax - x @ (self.V * x))


def conjugate_gradient(op: GridOperator, rhs, tol=1e-10, max_iterations=5000, stall_window=200):
    """Jacobi-preconditioned CG.  Returns ``(x, relative_residual, iterations, trace)``.

    Raises :class:`ConvergenceError` if the residual has not improved for
    ``stall_window`` iterations or the iteration budget runs out.
    """
    x = np.zeros_like(rhs)
    bnorm = float(np.sqrt(rhs @ rhs))
    if bnorm == 0.0:
        return x, 0.0, 0, [0.0]
    minv = 1.0 / op.diag
    r = rhs.copy()
    z = minv * r
    p = z.copy()
    ap = np.empty_like(rhs)
    rz = float(r @ z)
    trace = [1.0]
    best, best_it = 1.0, 0
    for it in range(1, max_iterations + 1):
        op.matvec(p, ap)
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rel = float(np.sqrt(r @ r)) / bnorm
        trace.append(rel)
        if rel <= tol:
            return x, rel, it, trace
        if rel < best * (1 - 1e-3):
            best, best_it = rel, it
        elif it - best_it > stall_window:
            raise ConvergenceError(f"CG stagnated at relative residual {rel:.3e}", trace)
        np.multiply(minv, r, out=z)
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise ConvergenceError(
        f"CG did not reach tolerance {tol:g} in {max_iterations} iterations (residual {trace[-1]:.3e})",
        trace,
    )
