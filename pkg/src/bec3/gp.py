"""Minimization of the energy-critical GP functional under unit mass.

The discrete energy of a real field ``u`` on a 3D grid is

    E(u) = K + T + Q4 + Q6,
    K = <u, -Lap u>,  T = <u, V_ext u>,  Q4 = (b1/2) sum u^4,  Q6 = (b2/6) sum u^6,

all sums weighted by the cell volume.  Periodic grids use the spectral
Laplacian, Dirichlet grids the second-order 7-point stencil.  The minimizer
is a Sobolev-preconditioned projected gradient flow with backtracking.
"""
from __future__ import annotations

import dataclasses
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.fft as sfft

from .errors import ConvergenceError, PreconditionError

log = logging.getLogger(__name__)

__all__ = [
    "Grid3D",
    "Trap",
    "GPProblem",
    "GPSolution",
    "EnergyBreakdown",
    "MinimizeOptions",
    "energy",
    "energy_gradient",
    "minimize",
    "chemical_potential",
    "stability_bound",
    "check_gradient",
    "virial_residual",
    "droplet_search",
    "DropletReport",
]

NORM_TOL = 1e-9
ROUNDOFF = 1e-13


@dataclass(frozen=True)
class Grid3D:
    """Cubic grid of side ``side`` centred at the origin.

    Periodic grids hold ``points`` nodes per axis with spacing ``side/points``;
    Dirichlet grids hold ``points`` interior nodes with spacing
    ``side/(points+1)`` and zero boundary values.
    """

    side: float
    points: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary not in ("periodic", "dirichlet"):
            raise PreconditionError(f"unknown boundary {self.boundary!r}")
        if self.points < 2 or self.side <= 0:
            raise PreconditionError("grid needs side > 0 and at least 2 points")

    @property
    def spacing(self) -> float:
        n = self.points
        return self.side / n if self.boundary == "periodic" else self.side / (n + 1)

    @property
    def shape(self):
        return (self.points,) * 3

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def axis(self) -> np.ndarray:
        h = self.spacing
        offset = 0 if self.boundary == "periodic" else 1
        return -0.5 * self.side + (np.arange(self.points) + offset) * h

    def mesh(self):
        x = self.axis
        return np.meshgrid(x, x, x, indexing="ij")

    def radius_squared(self) -> np.ndarray:
        x2 = self.axis**2
        return x2[:, None, None] + x2[None, :, None] + x2[None, None, :]

    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of ``-Lap`` in the grid's diagonalizing basis (FFT or DST-I)."""
        n, h = self.points, self.spacing
        if self.boundary == "periodic":
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        else:
            j = np.arange(1, n + 1)
            k = np.sqrt(2.0 - 2.0 * np.cos(np.pi * j / (n + 1))) / h
        k2 = k**2
        return k2[:, None, None] + k2[None, :, None] + k2[None, None, :]

    def laplacian_norm(self) -> float:
        return float(np.max(self.laplacian_symbol()))

    def neg_laplacian(self, u: np.ndarray) -> np.ndarray:
        if self.boundary == "periodic":
            return sfft.ifftn(self._symbol * sfft.fftn(u)).real
        h2 = self.spacing**2
        out = 6.0 * u
        out[1:, :, :] -= u[:-1, :, :]
        out[:-1, :, :] -= u[1:, :, :]
        out[:, 1:, :] -= u[:, :-1, :]
        out[:, :-1, :] -= u[:, 1:, :]
        out[:, :, 1:] -= u[:, :, :-1]
        out[:, :, :-1] -= u[:, :, 1:]
        return out / h2

    def solve_shifted(self, u: np.ndarray, shift: float) -> np.ndarray:
        """``(shift - Lap)^{-1} u``."""
        if self.boundary == "periodic":
            return sfft.ifftn(sfft.fftn(u) / (shift + self._symbol)).real
        coeffs = self._sine_transform(u)
        return self._sine_transform(coeffs / (shift + self._symbol))

    def _sine_transform(self, u: np.ndarray) -> np.ndarray:
        # orthonormal DST-I as dense matrix products; pocketfft is slow when
        # points + 1 has a large prime factor
        S = self.__dict__.get("_sine_cache")
        n = self.points
        if S is None:
            j = np.arange(1, n + 1)
            S = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(j, j) / (n + 1))
            object.__setattr__(self, "_sine_cache", S)
        out = (S @ u.reshape(n, n * n)).reshape(u.shape)
        out = np.matmul(S, out)
        return out @ S

    @property
    def _symbol(self) -> np.ndarray:
        cache = self.__dict__.get("_symbol_cache")
        if cache is None:
            cache = self.laplacian_symbol()
            object.__setattr__(self, "_symbol_cache", cache)
        return cache

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f)) * self.cell_volume

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.vdot(f, g)) * self.cell_volume

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))


@dataclass(frozen=True)
class Trap:
    """External potential: ``none``, ``power`` (``C |x|^alpha``) or ``tabulated``."""

    kind: str = "none"
    C: float = 0.0
    alpha: float = 2.0
    values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("none", "power", "tabulated"):
            raise PreconditionError(f"unknown trap kind {self.kind!r}")
        if self.kind == "power" and (self.C <= 0 or self.alpha <= 0):
            raise PreconditionError("power trap needs C > 0 and alpha > 0")
        if self.kind == "tabulated":
            if self.values is None or not np.all(np.isfinite(self.values)):
                raise PreconditionError("tabulated trap needs finite values on the grid")

    @classmethod
    def harmonic(cls, C: float = 1.0) -> "Trap":
        return cls("power", C, 2.0)

    def evaluate(self, grid: Grid3D) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(grid.shape)
        if self.kind == "power":
            r2 = grid.radius_squared()
            return self.C * r2 if self.alpha == 2.0 else self.C * r2 ** (0.5 * self.alpha)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != grid.shape:
            raise PreconditionError(f"tabulated trap has shape {vals.shape}, grid is {grid.shape}")
        return vals


@dataclass(frozen=True)
class GPProblem:
    grid: Grid3D
    trap: Trap = Trap()
    b1: float = 0.0
    b2: float = 0.0

    def __post_init__(self):
        if self.b2 < 0:
            raise PreconditionError("quintic coupling b2 must be nonnegative")
        if self.b1 < 0 and self.b2 == 0:
            warnings.warn("b1 < 0 with b2 = 0: the continuum functional is unbounded below", stacklevel=2)

    @property
    def trap_values(self) -> np.ndarray:
        cache = self.__dict__.get("_trap_cache")
        if cache is None:
            cache = self.trap.evaluate(self.grid)
            object.__setattr__(self, "_trap_cache", cache)
        return cache


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    trap: float
    quartic: float
    quintic: float

    @property
    def total(self) -> float:
        return self.kinetic + self.trap + self.quartic + self.quintic

    @property
    def magnitude(self) -> float:
        return max(1.0, abs(self.kinetic) + abs(self.trap) + abs(self.quartic) + abs(self.quintic))


@dataclass
class GPSolution:
    u: np.ndarray = field(repr=False)
    energy: float
    breakdown: EnergyBreakdown
    mu: float
    residual: float
    iterations: int
    converged: bool
    tolerance: float
    seed: int = 0
    trace: list = field(default_factory=list, repr=False)
    min_evaluated_energy: float = np.inf
    restart_energies: tuple = ()
    restart_residuals: tuple = ()

    @property
    def spread(self) -> float:
        if len(self.restart_energies) < 2:
            return 0.0
        return float(max(self.restart_energies) - min(self.restart_energies))


@dataclass(frozen=True)
class MinimizeOptions:
    step: Optional[float] = None
    max_iterations: int = 5000
    tolerance: float = 1e-9
    restarts: int = 1
    seed: int = 0
    initial: Union[str, np.ndarray] = "auto"
    preconditioned: bool = True
    workers: int = 1


# ---------------------------------------------------------------------------
# energy, gradient
# ---------------------------------------------------------------------------


def _terms(u, problem, lap_u=None):
    g = problem.grid
    lap_u = g.neg_laplacian(u) if lap_u is None else lap_u
    u2 = u * u
    K = g.inner(u, lap_u)
    T = g.integrate(problem.trap_values * u2)
    Q4 = 0.5 * problem.b1 * g.integrate(u2 * u2) if problem.b1 else 0.0
    Q6 = problem.b2 / 6.0 * g.integrate(u2 * u2 * u2) if problem.b2 else 0.0
    return EnergyBreakdown(K, T, Q4, Q6)


def _apply_h(u, problem, lap_u):
    u2 = u * u
    out = lap_u + problem.trap_values * u
    if problem.b1:
        out += problem.b1 * u2 * u
    if problem.b2:
        out += 0.5 * problem.b2 * u2 * u2 * u
    return out


def energy(u: np.ndarray, problem: GPProblem, check_norm: bool = True) -> EnergyBreakdown:
    """Energy terms of a unit-mass field (``check_norm=False`` evaluates any field)."""
    nrm = problem.grid.norm(u)
    if check_norm and abs(nrm - 1.0) > NORM_TOL:
        raise PreconditionError(f"field norm {nrm:.12f} differs from 1")
    return _terms(u, problem)


def energy_gradient(u: np.ndarray, problem: GPProblem) -> np.ndarray:
    """Gradient of the discrete energy w.r.t. the grid values of ``u``.

    Equals ``2 dV (-Lap u + V_ext u + b1 u^3 + (b2/2) u^5)`` with ``dV`` the
    cell volume; no mass constraint is applied.
    """
    lap_u = problem.grid.neg_laplacian(u)
    return 2.0 * problem.grid.cell_volume * _apply_h(u, problem, lap_u)


def check_gradient(problem: GPProblem, seed: int = 0, fields: int = 10, eps: float = 1e-3) -> float:
    """Largest relative mismatch between the analytic gradient and central differences.

    Uses ``fields`` seeded random unit-mass fields, each probed along one
    random direction.
    """
    rng = np.random.default_rng(seed)
    g = problem.grid
    worst = 0.0
    for _ in range(fields):
        u = rng.standard_normal(g.shape)
        u /= g.norm(u)
        v = rng.standard_normal(g.shape)
        v /= np.linalg.norm(v)
        analytic = float(np.vdot(energy_gradient(u, problem), v))
        ep = _terms(u + eps * v, problem).total
        em = _terms(u - eps * v, problem).total
        numeric = (ep - em) / (2.0 * eps)
        worst = max(worst, abs(numeric - analytic) / max(abs(analytic), 1e-300))
    return worst


def stability_bound(b1: float, b2: float) -> float:
    """Lower bound ``-3 b1^2 / (8 b2)`` valid for every unit-mass field when ``b1 < 0 < b2``.

    From ``int u^4 <= (int u^6)^{1/2}`` at unit mass and minimizing
    ``(b1/2) t + (b2/6) t^2`` over ``t >= 0``.
    """
    if b2 <= 0:
        raise PreconditionError("bound needs b2 > 0")
    if b1 >= 0:
        return 0.0
    return -3.0 * b1 * b1 / (8.0 * b2)


def virial_residual(sol: GPSolution, alpha: float = 2.0) -> float:
    """``2K - alpha T + 3 Q4 + 6 Q6``: zero at a minimizer (mass-preserving dilations)."""
    e = sol.breakdown
    return 2.0 * e.kinetic - alpha * e.trap + 3.0 * e.quartic + 6.0 * e.quintic


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------


def _initial_field(problem, kind, seed):
    g = problem.grid
    if isinstance(kind, np.ndarray):
        u = np.array(kind, dtype=float)
        if u.shape != g.shape:
            raise PreconditionError(f"initial field shape {u.shape} != grid {g.shape}")
        return u
    rng = np.random.default_rng(seed)
    if kind == "constant":
        u = np.ones(g.shape)
    elif kind == "gaussian":
        width = 0.2 * g.side
        u = np.exp(-g.radius_squared() / (2 * width**2))
    elif kind == "random":
        u = 0.5 + rng.random(g.shape)
    else:
        raise PreconditionError(f"unknown initial field {kind!r}")
    if g.boundary == "dirichlet":
        # soft taper so the initial field is compatible with zero boundary values
        x = g.axis / (0.5 * g.side)
        taper = np.cos(0.5 * np.pi * x)
        u = u * taper[:, None, None] * taper[None, :, None] * taper[None, None, :]
    return u


def _run(problem: GPProblem, opts: MinimizeOptions, seed: int, initial) -> GPSolution:
    g = problem.grid
    dv = g.cell_volume
    u = _initial_field(problem, initial, seed)
    u /= g.norm(u)

    lap_u = g.neg_laplacian(u)
    E = _terms(u, problem, lap_u).total
    hu = _apply_h(u, problem, lap_u)
    mu = g.inner(u, hu)
    res = g.norm(hu - mu * u)
    min_eval = E

    if opts.preconditioned:
        tau0 = 1.0 if opts.step is None else float(opts.step)
    else:
        tau0 = (1.0 / g.laplacian_norm()) if opts.step is None else float(opts.step)
    tau = tau0
    trace = [(0, E, res)]
    it = 0
    while res > opts.tolerance and it < opts.max_iterations:
        it += 1
        if opts.preconditioned:
            shift = max(1.0, abs(mu))
            pg = g.solve_shifted(hu, shift)
            pu = g.solve_shifted(u, shift)
            direction = pg - (g.inner(u, pg) / g.inner(u, pu)) * pu
        else:
            direction = hu - mu * u
        while True:
            trial = u - tau * direction
            nrm = g.norm(trial)
            if not np.isfinite(nrm) or nrm == 0.0:
                raise ConvergenceError("field diverged (non-finite norm)", trace)
            trial /= nrm
            lap_t = g.neg_laplacian(trial)
            parts_t = _terms(trial, problem, lap_t)
            E_t = parts_t.total
            if not np.isfinite(E_t):
                raise ConvergenceError("energy became non-finite", trace)
            min_eval = min(min_eval, E_t)
            hu_t = _apply_h(trial, problem, lap_t)
            mu_t = g.inner(trial, hu_t)
            res_t = g.norm(hu_t - mu_t * trial)
            # below the roundoff floor of the energy sum, accept on residual decrease
            if E_t < E or (E_t - E <= ROUNDOFF * parts_t.magnitude and res_t < res):
                break
            tau *= 0.5
            if tau < 1e-14 * tau0:
                raise ConvergenceError(
                    f"line search failed at iteration {it} (energy {E:.15g}, residual {res:.3e})", trace
                )
        u, lap_u, E, hu, mu, res = trial, lap_t, E_t, hu_t, mu_t, res_t
        trace.append((it, E, res))
        tau = min(tau * 1.5, 64.0 * tau0)

    if float(np.sum(u)) < 0:
        u = -u
    if u.min() < 0 and u.min() > -1e-8 * u.max():
        u = np.abs(u)
        u /= g.norm(u)
        lap_u = g.neg_laplacian(u)
        hu = _apply_h(u, problem, lap_u)
        mu = g.inner(u, hu)
        res = g.norm(hu - mu * u)
    parts = _terms(u, problem, lap_u)
    return GPSolution(
        u=u,
        energy=parts.total,
        breakdown=parts,
        mu=mu,
        residual=res,
        iterations=it,
        converged=res <= opts.tolerance,
        tolerance=opts.tolerance,
        seed=seed,
        trace=trace,
        min_evaluated_energy=min_eval,
    )


def minimize(problem: GPProblem, opts: Optional[MinimizeOptions] = None, **kwargs) -> GPSolution:
    """Ground state of the discrete functional by projected gradient flow.

    Each step moves along the Sobolev gradient ``(s - Lap)^{-1} H u``
    projected onto the tangent space of the unit sphere, renormalizes, and
    halves the step until the energy does not increase.  With ``restarts > 1``
    the runs use seeds ``seed, seed+1, ...`` (the first from ``initial``, the
    rest from random fields) and the lowest energy wins; ties go to the lower
    residual, then the lower seed.
    """
    if opts is None:
        opts = MinimizeOptions(**kwargs)
    elif kwargs:
        raise TypeError("pass either opts or keyword options, not both")
    if opts.restarts < 1:
        raise PreconditionError("restarts must be >= 1")
    seeds = [opts.seed + i for i in range(opts.restarts)]

    def initial_for(i):
        if isinstance(opts.initial, np.ndarray) or opts.initial != "auto":
            return opts.initial if i == 0 else "random"
        if i > 0:
            return "random"
        return "constant" if problem.grid.boundary == "periodic" and problem.trap.kind == "none" else "gaussian"

    jobs = list(zip(seeds, [initial_for(i) for i in range(len(seeds))]))
    if opts.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            runs = list(pool.map(lambda j: _run(problem, opts, *j), jobs))
    else:
        runs = [_run(problem, opts, *j) for j in jobs]
    best = min(runs, key=lambda s: (s.energy, s.residual, s.seed))
    best.restart_energies = tuple(s.energy for s in runs)
    best.restart_residuals = tuple(s.residual for s in runs)
    best.min_evaluated_energy = min(s.min_evaluated_energy for s in runs)
    if not best.converged:
        log.warning("GP minimization stopped at residual %.3e after %d iterations", best.residual, best.iterations)
    return best


def chemical_potential(sol: GPSolution, problem: GPProblem) -> float:
    """``mu = K + T + b1 int u^4 + (b2/2) int u^6`` for a converged minimizer."""
    if not sol.converged:
        raise PreconditionError(f"solution not converged (residual {sol.residual:.3e})")
    e = sol.breakdown
    return e.kinetic + e.trap + 2.0 * e.quartic + 3.0 * e.quintic


# ---------------------------------------------------------------------------
# droplets
# ---------------------------------------------------------------------------


@dataclass
class DropletReport:
    box_sizes: tuple
    participation: tuple
    energies: tuple
    relative_change: float
    self_trapped: bool
    bound: float
    solutions: list = field(repr=False, default_factory=list)

    @property
    def best(self) -> GPSolution:
        return self.solutions[-1]


def droplet_search(
    b1: float,
    b2: float,
    box_sizes: Sequence[float],
    spacing: float = 0.1,
    opts: Optional[MinimizeOptions] = None,
    stabilization: float = 0.05,
) -> DropletReport:
    """Minimize on growing periodic boxes and track ``1 / int u^4``.

    A self-trapped droplet keeps the participation volume fixed as the box
    grows; a delocalized state has participation equal to the box volume.
    """
    if b1 > 0 or b2 <= 0:
        raise PreconditionError("droplet search needs b1 <= 0 < b2")
    sizes = tuple(sorted(float(s) for s in box_sizes))
    if len(sizes) < 2:
        raise PreconditionError("need at least two box sizes")
    opts = opts or MinimizeOptions(max_iterations=20000)
    sols, prs, energies = [], [], []
    width = None
    for L in sizes:
        n = max(8, int(round(L / spacing)))
        problem = GPProblem(Grid3D(L, n, "periodic"), Trap(), b1, b2)
        if b1 == 0:
            init = "constant"
        elif width is None:
            init = "gaussian"
        else:
            # continue from the previous box: a Gaussian with the same participation volume
            init = np.exp(-problem.grid.radius_squared() / (2.0 * width**2))
        sol = minimize(problem, dataclasses.replace(opts, initial=init))
        u2 = sol.u**2
        pr = 1.0 / problem.grid.integrate(u2 * u2)
        width = pr ** (1.0 / 3.0) / np.sqrt(2.0 * np.pi)
        prs.append(pr)
        energies.append(sol.energy)
        sols.append(sol)
    change = abs(prs[-1] - prs[-2]) / prs[-2]
    bound = stability_bound(b1, b2) if b1 < 0 else 0.0
    return DropletReport(sizes, tuple(prs), tuple(energies), change, change <= stabilization, bound, sols)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_field(path, u: np.ndarray, grid: Grid3D) -> tuple:
    """Dump ``u`` as raw little-endian float64 plus a ``.json`` header; returns both paths."""
    import json
    from pathlib import Path

    path = Path(path)
    np.ascontiguousarray(u, dtype="<f8").tofile(path)
    header = path.with_suffix(path.suffix + ".json")
    meta = {"shape": list(u.shape), "spacing": grid.spacing, "boundary": grid.boundary, "dtype": "<f8"}
    header.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, header


def read_field(path) -> tuple:
    import json
    from pathlib import Path

    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    u = np.fromfile(path, dtype=meta.get("dtype", "<f8")).reshape(meta["shape"])
    return u, meta


def write_trace(path, trace) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "energy", "residual"])
        for it, e, r in trace:
            w.writerow([it, repr(float(e)), repr(float(r))])
