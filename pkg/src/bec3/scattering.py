"""Zero-energy scattering: ``b(v)`` in dimension ``d`` and the metric version ``b_M(V)``.

Two independent routes are provided:

* :func:`solve_radial` -- P1 finite elements for radial potentials on a graded
  mesh of ``[0, R_inf]`` with the Dirichlet condition ``f(R_inf) = 1``.
* :func:`solve_grid` -- the quadratic functional on a ball-masked lattice in
  ``R^d`` (``d = 3`` or ``6``), minimized by preconditioned conjugate gradient.

Both report the value of the functional at the discrete minimizer, which
equals ``int v f`` by stationarity.  The Dirichlet truncation bias is removed
with :func:`extrapolate_truncation`.
"""
from __future__ import annotations

import logging
import warnings
import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_banded

from . import _gridops
from .errors import ConvergenceError, PreconditionError
from .potentials import (
    MetricM,
    Potential6D,
    RadialPotential,
    make_metric_M,
    sphere_area,
    transform_by_metric,
)

log = logging.getLogger(__name__)

__all__ = [
    "ScatteringProblem",
    "ScatteringSolution",
    "Extrapolation",
    "solve_radial",
    "solve_radial_extrapolated",
    "hard_sphere_b",
    "solve_grid",
    "b_modified",
    "extrapolate_truncation",
    "DEFAULT_TRUNCATION_FACTORS",
]

DEFAULT_TRUNCATION_FACTORS = (4.0, 8.0, 16.0)
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class Extrapolation:
    b_inf: float
    coefficient: float
    residual: float
    model: str
    exponent: float
    radii: tuple
    values: tuple


@dataclass
class ScatteringSolution:
    """Result of a zero-energy scattering solve.

    ``r``/``f`` hold the radial profile for the radial route; grid solves keep
    the full lattice profile in ``lattice_f`` only when requested.
    """

    b: float
    dimension: int
    method: str
    truncation_radius: float
    residual: float
    potential_integral: float
    r: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    lattice_f: Optional[np.ndarray] = dataclasses.field(default=None, repr=False)
    iterations: int = 0
    resolution: int = 0
    phi_min: float = 0.0
    phi_max: float = 0.0
    extrapolation: Optional[Extrapolation] = None
    trace: list = dataclasses.field(default_factory=list, repr=False)

    @property
    def omega(self):
        return None if self.f is None else 1.0 - self.f

    @property
    def extrapolated_b(self) -> Optional[float]:
        return None if self.extrapolation is None else self.extrapolation.b_inf

    @property
    def a_nom(self) -> float:
        """``b**(1/(d-2))``: the scattering length up to a universal factor."""
        b = self.extrapolated_b if self.extrapolation is not None else self.b
        return float(max(b, 0.0) ** (1.0 / (self.dimension - 2)))


@dataclass(frozen=True)
class ScatteringProblem:
    potential: Union[RadialPotential, Potential6D]
    truncation_radius: float
    metric: Optional[MetricM] = None
    nodes: int = 2000
    points: int = 16
    box_half_width: Optional[float] = None
    min_points_per_radius: float = 8.0
    cg_tolerance: float = 1e-10
    max_iterations: int = 20000
    memory_cap_bytes: int = 4 * 2**30
    potential_subsamples: int = 1
    store_profile: bool = False

    @property
    def dimension(self) -> int:
        return 6 if isinstance(self.potential, Potential6D) else self.potential.dimension

    def __post_init__(self):
        R0 = self.potential.support_radius
        if self.truncation_radius <= R0:
            raise PreconditionError(
                f"truncation radius {self.truncation_radius} must exceed the support radius {R0}"
            )
        if self.nodes < 8 or self.points < 8:
            raise PreconditionError("node and point counts must be >= 8")
        if self.box_half_width is not None and self.box_half_width < self.truncation_radius:
            raise PreconditionError("box half-width must be at least the truncation radius")


# ---------------------------------------------------------------------------
# radial route
# ---------------------------------------------------------------------------


def hard_sphere_b(d: int, a: float) -> float:
    """``b`` of the hard sphere of radius ``a``: ``2 (d-2) |S^{d-1}| a^{d-2}``.

    Outside the sphere the minimizer is ``f = 1 - (a/r)^{d-2}``, and ``b`` is
    twice the gradient flux of ``f`` through any enclosing sphere.
    """
    if d < 3:
        raise PreconditionError("hard-sphere scattering energy needs d >= 3")
    if a < 0:
        raise PreconditionError("radius must be nonnegative")
    return float(2.0 * (d - 2) * sphere_area(d) * a ** (d - 2))


def radial_mesh(R0: float, R_inf: float, nodes: int) -> np.ndarray:
    """Nodes on ``[0, R_inf]``: sine-graded on ``[0, R0]`` (clustered at ``R0``),
    geometric on ``[R0, R_inf]``.  ``R0`` is always a node."""
    n_in = max(nodes // 2, 2)
    n_out = max(nodes - n_in, 2)
    s = np.linspace(0.0, 1.0, n_in + 1)
    inner = R0 * np.sin(0.5 * np.pi * s)
    inner[-1] = R0
    t = np.linspace(0.0, 1.0, n_out + 1)[1:]
    outer = R0 * (R_inf / R0) ** t
    outer[-1] = R_inf
    return np.concatenate([inner, outer])


def _element_quadrature(v, r, d):
    """Gauss points/weights of ``v(r) r^{d-1} dr`` on each element."""
    h = np.diff(r)
    t = 0.5 * (_GAUSS_X + 1.0)
    rq = r[:-1, None] + h[:, None] * t
    wq = v(rq) * rq ** (d - 1) * (0.5 * h[:, None] * _GAUSS_W)
    return t, wq


def solve_radial(d: int, v: RadialPotential, R_inf: float, nodes: int = 2000, tol: float = 1e-10) -> ScatteringSolution:
    """Solve ``2 (f'' + (d-1)/r f') = v f`` on ``[0, R_inf]`` with ``f(R_inf) = 1``.

    The discrete problem is the Galerkin restriction of the quadratic
    functional to continuous piecewise-linear ``phi = 1 - f``; the stiffness
    weight ``r^{d-1}`` is integrated exactly and the potential term with
    three-point Gauss rules per element.
    """
    if d < 3:
        raise PreconditionError("radial scattering needs d >= 3")
    if v.dimension != d:
        raise PreconditionError(f"potential is {v.dimension}-dimensional, solver asked for d={d}")
    R0 = v.support_radius
    if R_inf <= R0:
        raise PreconditionError(f"truncation radius {R_inf} must exceed the support radius {R0}")
    if R_inf < 4.0 * R0:
        warnings.warn(f"truncation radius {R_inf} is below 4 x support radius", stacklevel=2)
    if nodes < 8:
        raise PreconditionError("nodes must be >= 8")

    surf = sphere_area(d)
    if v.family == "zero" or R0 == 0.0:
        r = np.linspace(0.0, R_inf, nodes + 1)
        return ScatteringSolution(0.0, d, "radial", R_inf, 0.0, 0.0, r, np.ones_like(r), resolution=nodes)

    r = radial_mesh(R0, R_inf, nodes)
    h = np.diff(r)
    stiff = 2.0 * (r[1:] ** d - r[:-1] ** d) / d / h**2
    t, wq = _element_quadrature(v, r, d)
    n = r.size
    diag = np.zeros(n)
    off = -stiff.copy()
    rhs = np.zeros(n)
    diag[:-1] += stiff
    diag[1:] += stiff
    for q in range(t.size):
        wt = wq[:, q]
        tq = t[q]
        diag[:-1] += wt * (1 - tq) ** 2
        diag[1:] += wt * tq**2
        off += wt * tq * (1 - tq)
        rhs[:-1] += wt * (1 - tq)
        rhs[1:] += wt * tq

    # unknowns phi_0 .. phi_{n-2}; phi_{n-1} = 0
    m = n - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = off[: m - 1]
    ab[1] = diag[:m]
    ab[2, :-1] = off[: m - 1]
    b_vec = rhs[:m]

    def matvec(x):
        y = diag[:m] * x
        y[:-1] += off[: m - 1] * x[1:]
        y[1:] += off[: m - 1] * x[:-1]
        return y

    anorm = float(np.max(np.abs(diag[:m]) + 2.0 * np.abs(np.append(off, 0.0)[:m])))

    def backward_error(x):
        # normwise backward error: insensitive to the r^{d-1} growth of the rows
        res = np.max(np.abs(matvec(x) - b_vec))
        return float(res / (anorm * np.max(np.abs(x)) + np.max(np.abs(b_vec))))

    phi = solve_banded((1, 1), ab, b_vec)
    history = [backward_error(phi)]
    for _ in range(3):
        if history[-1] <= tol:
            break
        phi += solve_banded((1, 1), ab, b_vec - matvec(phi))
        history.append(backward_error(phi))
    if not np.all(np.isfinite(phi)) or history[-1] > tol:
        raise ConvergenceError(f"radial linear solve residual {history[-1]:.3e} above {tol:g}", history)

    phi = np.append(phi, 0.0)
    f = 1.0 - phi
    fq = f[:-1, None] * (1 - t) + f[1:, None] * t
    b = surf * float(np.sum(wq * fq))
    vint = surf * float(np.sum(wq))
    return ScatteringSolution(
        b=b,
        dimension=d,
        method="radial",
        truncation_radius=float(R_inf),
        residual=history[-1],
        potential_integral=vint,
        r=r,
        f=f,
        iterations=len(history),
        resolution=int(nodes),
        phi_min=float(phi.min()),
        phi_max=float(phi.max()),
        trace=history,
    )


def solve_radial_extrapolated(
    v: RadialPotential,
    factors: Sequence[float] = DEFAULT_TRUNCATION_FACTORS,
    nodes: int = 2000,
    model: str = "reciprocal",
    executor=None,
) -> ScatteringSolution:
    """Radial solves at ``R_inf = factor * R0`` followed by truncation extrapolation.

    Returns the solution at the largest radius with ``extrapolation`` filled in.
    """
    d = v.dimension
    R0 = v.support_radius
    radii = [float(c) * R0 for c in factors]
    if R0 == 0.0:
        sol = solve_radial(d, v, max(factors), nodes)
        sol.extrapolation = Extrapolation(0.0, 0.0, 0.0, model, d - 2.0, tuple(radii), (0.0,) * len(radii))
        return sol
    run = lambda R: solve_radial(d, v, R, nodes)
    sols = list(executor.map(run, radii)) if executor is not None else [run(R) for R in radii]
    ex = extrapolate_truncation([(R, s.b) for R, s in zip(radii, sols)], d=d, model=model)
    out = sols[-1]
    out.extrapolation = ex
    return out


def extrapolate_truncation(samples, d: int = 3, model: str = "reciprocal") -> Extrapolation:
    """Remove the Dirichlet truncation bias from ``(R_inf, b_R)`` samples.

    ``model="linear"`` fits ``b_R = b_inf + c R^{-(d-2)}``.
    ``model="reciprocal"`` fits ``1/b_R = 1/b_inf + c R^{-(d-2)}``, which is
    exact for a compactly supported potential inside the truncation ball
    (the exterior shell adds its harmonic resistance in series), with
    ``c = -1 / hard_sphere_b(d, 1)``.
    """
    if model not in ("linear", "reciprocal"):
        raise PreconditionError(f"unknown extrapolation model {model!r}")
    pts = sorted((float(R), float(b)) for R, b in samples)
    if len(pts) < 3:
        raise PreconditionError("extrapolation needs at least 3 samples")
    R = np.array([p[0] for p in pts])
    b = np.array([p[1] for p in pts])
    if np.any(np.diff(R) <= 0) or np.any(R <= 0):
        raise PreconditionError("truncation radii must be positive and distinct")
    p = d - 2.0
    x = R ** (-p)
    if np.ptp(x) <= 1e-14 * np.max(np.abs(x)):
        raise PreconditionError("degenerate extrapolation: transformed radii are collinear")
    if model == "reciprocal":
        if np.any(b <= 0):
            if np.all(b == 0):
                return Extrapolation(0.0, 0.0, 0.0, model, p, tuple(R), tuple(b))
            raise PreconditionError("reciprocal model needs positive samples")
        y = 1.0 / b
    else:
        y = b
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    if np.linalg.matrix_rank(A) < 2:
        raise PreconditionError("degenerate extrapolation fit")
    fit = A @ coef
    if model == "reciprocal":
        b_inf = 1.0 / coef[0]
        resid = float(np.max(np.abs(1.0 / fit - b)))
    else:
        b_inf = coef[0]
        resid = float(np.max(np.abs(fit - b)))
    return Extrapolation(float(b_inf), float(coef[1]), resid, model, p, tuple(R), tuple(b))


# ---------------------------------------------------------------------------
# grid route
# ---------------------------------------------------------------------------


def _evaluate_potential(potential, grid, subsamples: int, chunk: int = 1 << 18) -> np.ndarray:
    dim = grid.dim
    if isinstance(potential, Potential6D):
        ev = potential.on_points
    else:
        ev = lambda z: potential(np.sqrt(np.sum(z * z, axis=-1)))
    if subsamples > 1:
        s = int(subsamples)
        sub = (np.arange(s) + 0.5) / s - 0.5
        mesh = np.stack(np.meshgrid(*([sub] * dim), indexing="ij"), -1).reshape(-1, dim) * grid.h
    out = np.empty(grid.size)
    for start in range(0, grid.size, chunk):
        stop = min(start + chunk, grid.size)
        z = grid.coordinates(start, stop)
        if subsamples > 1:
            acc = np.zeros(stop - start)
            for shift in mesh:
                acc += ev(z + shift)
            out[start:stop] = acc / len(mesh)
        else:
            out[start:stop] = ev(z)
    if np.any(out < 0):
        raise PreconditionError("potential evaluator returned negative values")
    return out


def solve_grid(problem: ScatteringProblem) -> ScatteringSolution:
    """Minimize ``int 2 |M grad phi|^2 + V |1 - phi|^2`` on the truncated lattice.

    Lattice: ``points`` interior nodes per axis on ``[-L, L]`` (``L`` is the
    box half-width, default ``R_inf``), spacing ``2L/(points+1)``; unknowns
    are the nodes with ``|x| < R_inf``, all others are pinned to ``phi = 0``.
    """
    pot = problem.potential
    d = problem.dimension
    metric = problem.metric
    if metric is not None and not metric.is_identity() and d != 6:
        raise PreconditionError("the three-body metric acts on R^6 only")
    gram = metric.gram if metric is not None else np.eye(d)
    R_inf = float(problem.truncation_radius)
    L = float(problem.box_half_width or R_inf)
    n = int(problem.points)
    h = 2.0 * L / (n + 1)
    R0 = pot.support_radius
    if R0 > 0 and h > R0 / problem.min_points_per_radius * (1 + 1e-12):
        raise PreconditionError(
            f"grid spacing {h:.4g} exceeds support radius / {problem.min_points_per_radius:g} = "
            f"{R0 / problem.min_points_per_radius:.4g}"
        )
    offsets, _, _ = _gridops.stencil(gram, h)
    grid = _gridops.build_ball_grid(d, n, L, R_inf, len(offsets), problem.memory_cap_bytes)
    log.info("grid solve: d=%d n=%d unknowns=%d h=%.4g", d, n, grid.size, h)
    V = _evaluate_potential(pot, grid, problem.potential_subsamples)
    dv = grid.cell_volume
    vint = float(np.sum(V)) * dv
    if not np.any(V > 0):
        return ScatteringSolution(0.0, d, "grid", R_inf, 0.0, 0.0, resolution=n)
    op = _gridops.GridOperator(grid, gram, V)
    phi, rel, its, trace = _gridops.conjugate_gradient(
        op, V, tol=problem.cg_tolerance, max_iterations=problem.max_iterations
    )
    b = float(np.sum(V * (1.0 - phi))) * dv
    sol = ScatteringSolution(
        b=b,
        dimension=d,
        method="grid" if metric is None or metric.is_identity() else "grid-metric",
        truncation_radius=R_inf,
        residual=rel,
        potential_integral=vint,
        iterations=its,
        resolution=n,
        phi_min=float(phi.min()),
        phi_max=float(phi.max()),
        trace=trace,
    )
    if problem.store_profile:
        sol.lattice_f = grid.scatter_to_box(1.0 - phi, fill=1.0)
    return sol


def default_grid_radius(support_radius: float, points: int, min_points_per_radius: float = 8.0) -> float:
    """Largest truncation radius whose lattice spacing still resolves the support."""
    return (points + 1) * support_radius / (2.0 * min_points_per_radius)


def b_modified(
    V: Potential6D,
    method: str = "direct",
    *,
    metric: Optional[MetricM] = None,
    points: int = 16,
    truncation_radius: Optional[float] = None,
    factors: Sequence[float] = DEFAULT_TRUNCATION_FACTORS,
    nodes: int = 2000,
    **grid_options,
) -> ScatteringSolution:
    """Modified scattering energy ``b_M(V)``.

    ``method`` is ``"direct"`` (anisotropic stencil for ``|M grad|^2``),
    ``"change-of-variables"`` (isotropic solve of ``V(M .)`` times ``det M``)
    or ``"radial"`` (isotropic-after-M and radial families only; extrapolated
    in the truncation radius).
    """
    M = make_metric_M() if metric is None else metric
    if method == "radial":
        if V.family == "isotropic-after-M" and not M.is_identity():
            w = V.profile
        elif V.family == "radial" and M.is_identity():
            w = V.profile
        else:
            raise PreconditionError(f"radial path unavailable for family {V.family!r} with this metric")
        sol = solve_radial_extrapolated(w, factors, nodes)
        det = M.det6
        sol.b *= det
        sol.potential_integral *= det
        ex = sol.extrapolation
        sol.extrapolation = Extrapolation(
            ex.b_inf * det, ex.coefficient, ex.residual * det, ex.model, ex.exponent, ex.radii,
            tuple(det * np.asarray(ex.values)),
        )
        sol.method = "radial-M"
        return sol

    if method == "direct":
        target, gmetric, det = V, M, 1.0
    elif method == "change-of-variables":
        target, gmetric, det = transform_by_metric(V, M), None, M.det6
    else:
        raise PreconditionError(f"unknown method {method!r}")
    min_ppr = grid_options.get("min_points_per_radius", 8.0)
    R_inf = truncation_radius or default_grid_radius(target.support_radius, points, min_ppr)
    problem = ScatteringProblem(target, R_inf, metric=gmetric, points=points, **grid_options)
    sol = solve_grid(problem)
    sol.b *= det
    sol.potential_integral *= det
    sol.method = method
    return sol
