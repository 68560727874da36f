"""Hessian of the GP functional at a minimizer and the Bogoliubov excitation spectrum.

Perturbing the minimizer ``u0`` by ``x + i y`` (``x, y`` real, orthogonal to
``u0``) gives the second variation ``<x, D_plus x> + <y, D y>`` with

    D      = -Lap + V_ext + b1 u0^2 + (b2/2) u0^4 - mu,
    D_plus = D + 2 W,    W = b1 u0^2 + kappa b2 u0^4.

The excitation energies are the eigenvalues of ``(D^{1/2} D_plus D^{1/2})^{1/2}``
on the orthogonal complement of ``u0``.  With ``convention="exact"``
(``kappa = 1``) ``W`` is the true pairing term of the sextic interaction; the
default ``convention="half"`` (``kappa = 1/2``) uses half of it, which gives
the homogeneous dispersion ``sqrt(p^2 (p^2 + b))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, PreconditionError
from .gp import GPProblem, GPSolution

__all__ = [
    "HessianOperators",
    "BogoliubovSpectrum",
    "ExpansionTable",
    "build_hessian",
    "excitation_spectrum",
    "hessian_expansion_check",
    "homogeneous_dispersion",
    "write_spectrum",
]

CONVENTIONS = {"half": 0.5, "exact": 1.0}
DENSE_LIMIT = 16**3
CLUSTER_RTOL = 1e-7


def homogeneous_dispersion(p2, b2: float, b1: float = 0.0, rho: float = 1.0, convention: str = "half"):
    """``sqrt(p^2 (p^2 + 2W))`` for a constant condensate of density ``rho``."""
    w = b1 * rho + CONVENTIONS[convention] * b2 * rho**2
    p2 = np.asarray(p2, dtype=float)
    return np.sqrt(p2 * (p2 + 2.0 * w))


@dataclass
class HessianOperators:
    """``D`` and ``D_plus`` at a converged minimizer, acting on grid fields."""

    problem: GPProblem
    solution: GPSolution = field(repr=False)
    convention: str
    potential: np.ndarray = field(repr=False)  # multiplicative part of D
    pairing: np.ndarray = field(repr=False)  # W
    mu: float

    @property
    def u0(self) -> np.ndarray:
        return self.solution.u

    @property
    def shape(self):
        return self.u0.shape

    @property
    def size(self) -> int:
        return self.u0.size

    @property
    def projector_rank(self) -> int:
        return self.size - 1

    @property
    def scale(self) -> float:
        g = self.problem.grid
        return float(max(1.0, (2 * np.pi / g.side) ** 2 + 2.0 * np.max(np.abs(self.pairing))))

    @property
    def homogeneous(self) -> bool:
        u = self.u0
        return self.problem.grid.boundary == "periodic" and self.problem.trap.kind == "none" and np.ptp(u) <= 1e-10 * np.max(u)

    def project(self, x: np.ndarray) -> np.ndarray:
        u = self.u0
        return x - (np.vdot(u, x) / np.vdot(u, u)) * u

    def apply_D(self, x: np.ndarray) -> np.ndarray:
        x = self.project(x)
        return self.project(self.problem.grid.neg_laplacian(x) + self.potential * x)

    def apply_D_plus(self, x: np.ndarray) -> np.ndarray:
        x = self.project(x)
        return self.project(self.problem.grid.neg_laplacian(x) + (self.potential + 2.0 * self.pairing) * x)

    def quadratic_form(self, phi: np.ndarray, convention: Optional[str] = None) -> float:
        """``<(phi, conj phi), E''(u0) (phi, conj phi)>`` = ``2(<x, D_plus x> + <y, D y>)``."""
        W = self.pairing
        if convention is not None and convention != self.convention:
            W = W * (CONVENTIONS[convention] / CONVENTIONS[self.convention])
        g = self.problem.grid
        x, y = np.real(phi), np.imag(phi)
        x = self.project(x)
        y = self.project(y)
        qx = g.inner(x, g.neg_laplacian(x) + (self.potential + 2.0 * W) * x)
        qy = g.inner(y, g.neg_laplacian(y) + self.potential * y) if np.iscomplexobj(phi) else 0.0
        return 2.0 * (qx + qy)


def build_hessian(sol: GPSolution, problem: GPProblem, convention: str = "half") -> HessianOperators:
    if convention not in CONVENTIONS:
        raise PreconditionError(f"unknown convention {convention!r}; use 'half' or 'exact'")
    if not sol.converged:
        raise PreconditionError(f"solution not converged (residual {sol.residual:.3e})")
    u2 = sol.u**2
    potential = problem.trap_values + problem.b1 * u2 + 0.5 * problem.b2 * u2 * u2 - sol.mu
    pairing = problem.b1 * u2 + CONVENTIONS[convention] * problem.b2 * u2 * u2
    return HessianOperators(problem, sol, convention, potential, pairing, sol.mu)


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


@dataclass
class BogoliubovSpectrum:
    eigenvalues: np.ndarray
    multiplicities: list
    method: str
    projector_rank: int
    momentum_squared: Optional[np.ndarray] = None
    d_min: float = float("nan")

    def clusters(self):
        """``(value, multiplicity)`` pairs, in ascending order."""
        out, i = [], 0
        for m in self.multiplicities:
            out.append((float(np.mean(self.eigenvalues[i : i + m])), m))
            i += m
        return out


def _cluster(values: np.ndarray, rtol: float = CLUSTER_RTOL) -> list:
    mult = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[start] > rtol * max(abs(values[start]), 1e-300):
            mult.append(i - start)
            start = i
    return mult


class _Reduced:
    """Coordinates on the orthogonal complement of ``u0`` via one Householder reflection."""

    def __init__(self, u0: np.ndarray):
        q = u0.ravel() / np.linalg.norm(u0)
        n = q.size
        e = np.zeros(n)
        e[-1] = 1.0
        v = q - e if q[-1] < 0 else q + e  # reflection mapping q to -sign(q_n) e_n
        self.v = v / np.linalg.norm(v)
        self.n = n

    def lift(self, z: np.ndarray) -> np.ndarray:
        x = np.zeros(self.n) if z.ndim == 1 else np.zeros((self.n, z.shape[1]))
        x[: self.n - 1] = z
        return x - 2.0 * np.outer(self.v, self.v @ x).reshape(x.shape)

    def restrict(self, x: np.ndarray) -> np.ndarray:
        y = x - 2.0 * np.outer(self.v, self.v @ x).reshape(x.shape)
        return y[: self.n - 1]


def _dense_matrices(hess: HessianOperators):
    n = hess.size
    shape = hess.shape
    grid = hess.problem.grid
    eye = np.eye(n).reshape((n,) + shape)
    if grid.boundary == "periodic":
        lap = sfft.ifftn(grid._symbol * sfft.fftn(eye, axes=(1, 2, 3)), axes=(1, 2, 3)).real.reshape(n, n)
    else:
        lap = np.stack([grid.neg_laplacian(c) for c in eye]).reshape(n, n)
    lap = 0.5 * (lap + lap.T)
    red = _Reduced(hess.u0)
    Q = red.lift(np.eye(n - 1))
    Dfull = lap + np.diag(hess.potential.ravel())
    Dr = Q.T @ Dfull @ Q
    Pr = Dr + Q.T @ (np.diag(2.0 * hess.pairing.ravel()) @ Q)
    return 0.5 * (Dr + Dr.T), 0.5 * (Pr + Pr.T)


def _check_d(dmin: float, hess: HessianOperators):
    if dmin < -1e-8 * hess.scale:
        raise PreconditionError(f"D is indefinite on the complement of u0 (smallest eigenvalue {dmin:.3e}): not a minimizer")


def _dense_spectrum(hess: HessianOperators, k: int):
    Dr, Pr = _dense_matrices(hess)
    w, U = sla.eigh(Dr)
    dmin = float(w[0])
    _check_d(dmin, hess)
    S = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    e2 = sla.eigh(S @ Pr @ S, eigvals_only=True, subset_by_index=[0, k - 1])
    return _roots(e2, hess), dmin


def _roots(e2: np.ndarray, hess: HessianOperators) -> np.ndarray:
    # a negative e^2 means D_plus is indefinite: the state is a saddle
    if e2[0] < -1e-8 * hess.scale**2:
        raise PreconditionError(f"negative squared excitation energy {e2[0]:.3e}: not a minimizer")
    return np.sqrt(np.clip(e2, 0.0, None))


def _cg(apply, rhs, tol, maxiter):
    """Plain CG; raises on loss of positive definiteness or stagnation."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = float(r @ r)
    bnorm = np.sqrt(rr)
    if bnorm == 0:
        return x
    for _ in range(maxiter):
        ap = apply(p)
        curv = float(p @ ap)
        if curv <= 0:
            raise PreconditionError("operator is not positive definite on the complement of u0: not a minimizer")
        alpha = rr / curv
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= tol * bnorm:
            return x
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(f"inner CG did not converge (relative residual {np.sqrt(rr) / bnorm:.3e})")


def _iterative_spectrum(hess: HessianOperators, k: int, tol: float, inner_tol: float):
    red = _Reduced(hess.u0)
    shape = hess.shape
    m = hess.size - 1
    lap = hess.problem.grid.neg_laplacian
    vd = hess.potential
    vp = hess.potential + 2.0 * hess.pairing

    def reduced(vpot):
        def apply(z):
            x = red.lift(z).reshape(shape)
            return red.restrict((lap(x) + vpot * x).ravel())

        return apply

    dr, pr = reduced(vd), reduced(vp)
    maxiter = 20 * m
    # generalized pencil  D y = e^2 D_plus^{-1} y, solved in shift-invert mode about 0
    A = spla.LinearOperator((m, m), matvec=dr, dtype=float)
    M = spla.LinearOperator((m, m), matvec=lambda z: _cg(pr, z, inner_tol, maxiter), dtype=float)
    OPinv = spla.LinearOperator((m, m), matvec=lambda z: _cg(dr, z, inner_tol, maxiter), dtype=float)
    ncv = min(m, max(2 * k + 1, k + 20))
    try:
        vals = spla.eigsh(A, k=k, M=M, sigma=0.0, OPinv=OPinv, which="LM", tol=tol, ncv=ncv, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"ARPACK did not converge: {exc}") from exc
    vals = np.sort(vals)
    _check_d(float(vals[0]), hess)
    return _roots(vals, hess), float("nan")


def excitation_spectrum(
    hess: HessianOperators, k: int, method: str = "auto", tol: float = 0.0, inner_tol: float = 1e-14
) -> BogoliubovSpectrum:
    """The ``k`` smallest Bogoliubov energies.

    ``method="dense"`` diagonalizes ``D`` on the complement of ``u0``, forms its
    square root and diagonalizes ``D^{1/2} D_plus D^{1/2}``.  ``"iterative"``
    runs shift-invert Lanczos on the pencil ``D y = e^2 D_plus^{-1} y`` with
    inner CG solves.  ``"auto"`` picks dense up to ``16^3`` grid points.
    Multiplicities group eigenvalues within a relative gap of 1e-7; the last
    group can be truncated by ``k``.
    """
    rank = hess.projector_rank
    if not 1 <= k < rank:
        raise PreconditionError(f"k must satisfy 1 <= k < {rank}")
    if method == "auto":
        method = "dense" if hess.size <= DENSE_LIMIT else "iterative"
    if method == "dense":
        if hess.size > DENSE_LIMIT:
            raise PreconditionError(f"dense path limited to {DENSE_LIMIT} grid points")
        vals, dmin = _dense_spectrum(hess, k)
    elif method == "iterative":
        vals, dmin = _iterative_spectrum(hess, k, tol, inner_tol)
    else:
        raise PreconditionError(f"unknown method {method!r}")
    p2 = None
    if hess.homogeneous:
        w = float(np.mean(hess.pairing))
        p2 = -w + np.sqrt(w * w + vals**2)
    return BogoliubovSpectrum(vals, _cluster(vals), method, rank, p2, dmin)


def write_spectrum(path, spec: BogoliubovSpectrum) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue", "multiplicity", "p2"])
        i = 0
        for m in spec.multiplicities:
            for j in range(i, i + m):
                p2 = "" if spec.momentum_squared is None else repr(float(spec.momentum_squared[j]))
                w.writerow([j, repr(float(spec.eigenvalues[j])), m, p2])
            i += m


# ---------------------------------------------------------------------------
# second-order expansion check
# ---------------------------------------------------------------------------


@dataclass
class ExpansionTable:
    eps: tuple
    energy_change: tuple
    quadratic: tuple
    ratio: tuple

    @property
    def deviation(self) -> tuple:
        return tuple(abs(r - 1.0) for r in self.ratio)

    @property
    def reduction(self) -> tuple:
        """Successive ratios ``|r(eps_i) - 1| / |r(eps_{i+1}) - 1|``."""
        d = self.deviation
        return tuple(d[i] / d[i + 1] if d[i + 1] > 0 else float("inf") for i in range(len(d) - 1))


def _energy_any(u: np.ndarray, problem: GPProblem) -> float:
    g = problem.grid
    re, im = np.real(u), np.imag(u)
    k = g.inner(re, g.neg_laplacian(re))
    if np.iscomplexobj(u):
        k += g.inner(im, g.neg_laplacian(im))
    rho = re * re + im * im
    e = k + g.integrate(problem.trap_values * rho)
    if problem.b1:
        e += 0.5 * problem.b1 * g.integrate(rho * rho)
    if problem.b2:
        e += problem.b2 / 6.0 * g.integrate(rho**3)
    return e


def hessian_expansion_check(
    hess: HessianOperators, phi: np.ndarray, eps: Sequence[float], convention: str = "exact"
) -> ExpansionTable:
    """Compare ``E((u0 + eps phi)/norm) - e_GP`` with ``(eps^2/2) q(phi)``.

    ``q`` is the second-variation quadratic form; with the default exact
    pairing the ratio tends to 1 with an ``eps^2`` remainder.  ``phi`` may be
    complex (real part: amplitude, imaginary part: phase perturbation).
    """
    g = hess.problem.grid
    u0 = hess.u0
    phi = np.asarray(phi)
    if phi.shape != u0.shape:
        raise PreconditionError("phi must live on the solution grid")
    overlap = abs(g.inner(u0, np.real(phi))) + abs(g.inner(u0, np.imag(phi)))
    if overlap > 1e-10 * max(1.0, g.norm(np.abs(phi))):
        raise PreconditionError(f"phi is not orthogonal to u0 (overlap {overlap:.3e})")
    q = hess.quadratic_form(phi, convention)
    e0 = _energy_any(u0, hess.problem)
    dE, quad, ratio = [], [], []
    for e in eps:
        w = u0 + e * phi
        w = w / g.norm(np.abs(w))
        de = _energy_any(w, hess.problem) - e0
        qq = 0.5 * e * e * q
        dE.append(de)
        quad.append(qq)
        ratio.append(de / qq if qq != 0 else (1.0 if de == 0 else float("inf")))
    return ExpansionTable(tuple(float(x) for x in eps), tuple(dE), tuple(quad), tuple(ratio))
