"""Cross-module invariant suite behind ``bec3 verify``.

Every check returns the measured deviation and its tolerance.  All random
inputs derive from the run seed, so reports are reproducible bit for bit.
"""
from __future__ import annotations

import math

import numpy as np

from .. import bogoliubov, dilute, gp, potentials, scattering


def _check(name, measured, tolerance, detail=""):
    measured = float(measured)
    return {"name": name, "measured": measured, "tolerance": float(tolerance), "passed": bool(measured <= tolerance), "detail": detail}


def _square_well_closed_form():
    sol = scattering.solve_radial_extrapolated(potentials.square_well(3, 2.0, 1.0))
    exact = 8 * math.pi * (1 - math.tanh(1.0))
    return _check("scattering_square_well", abs(sol.extrapolated_b - exact) / exact, 1e-3, "d=3, v0=2, R=1")


def _hard_sphere(d):
    sol = scattering.solve_radial_extrapolated(potentials.square_well(d, 1e6, 1.0))
    exact = scattering.hard_sphere_b(d, 1.0)
    return _check(f"hard_sphere_d{d}", abs(sol.extrapolated_b - exact) / exact, 1e-2, "v0=1e6, a=1")


def _suite_6d():
    return [
        potentials.isotropic_after_M(potentials.gaussian(6, 100.0, 0.4, cutoff=2.5)),
        potentials.isotropic_after_M(potentials.square_well(6, 50.0, 1.0)),
    ]


def _scaling_radial():
    worst = 0.0
    for V in _suite_6d():
        ref = scattering.b_modified(V, "radial").extrapolated_b
        for ell in (0.5, 2.0):
            b = scattering.b_modified(V.scaled(ell), "radial").extrapolated_b
            worst = max(worst, abs(ell**4 * b - ref) / ref)
    return _check("scaling_law_radial", worst, 1e-3, "ell in {1/2, 2}")


def _strict_bound():
    worst = -math.inf
    for V in _suite_6d():
        sol = scattering.b_modified(V, "radial")
        # ratio b/int V must stay below 1
        worst = max(worst, sol.extrapolated_b / sol.potential_integral)
    return {"name": "strict_bound", "measured": worst, "tolerance": 1.0, "passed": bool(worst < 1.0), "detail": "max b_M / int V"}


def _gp_torus():
    b = 3.0
    problem = gp.GPProblem(gp.Grid3D(1.0, 16), gp.Trap(), 0.0, b)
    sol = gp.minimize(problem, initial="random", seed=0, tolerance=1e-10)
    return _check("gp_torus_energy", abs(sol.energy - b / 6), 1e-8, "16^3 torus, b2=3, random start")


def _gradient(seed):
    worst = 0.0
    for bc in ("periodic", "dirichlet"):
        for b1 in (0.0, -2.0):
            problem = gp.GPProblem(gp.Grid3D(2.0, 10, bc), gp.Trap.harmonic(), b1, 3.0)
            worst = max(worst, gp.check_gradient(problem, seed=seed, fields=3))
    return _check("gp_gradient", worst, 1e-6, "central differences, 3 fields per configuration")


def _stability():
    worst = -math.inf
    for b1, b2 in ((-1.0, 1.0), (-2.0, 0.5)):
        problem = gp.GPProblem(gp.Grid3D(1.0, 12), gp.Trap(), b1, b2)
        sol = gp.minimize(problem, tolerance=1e-9)
        worst = max(worst, gp.stability_bound(b1, b2) - sol.min_evaluated_energy)
    return {"name": "stability_bound", "measured": worst, "tolerance": 0.0, "passed": bool(worst < 0.0), "detail": "bound - min evaluated energy"}


def _bogoliubov():
    b = 5.0
    problem = gp.GPProblem(gp.Grid3D(1.0, 6), gp.Trap(), 0.0, b)
    sol = gp.minimize(problem)
    spec = bogoliubov.excitation_spectrum(bogoliubov.build_hessian(sol, problem), 12, "dense")
    k = 2 * np.pi * np.fft.fftfreq(6, 1 / 6)
    p2 = np.sort((k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2).ravel())[1:13]
    exact = bogoliubov.homogeneous_dispersion(p2, b)
    return _check("bogoliubov_closed_form", np.max(np.abs(spec.eigenvalues - exact) / exact), 1e-8, "6^3 torus, dense")


def _expansion():
    problem = gp.GPProblem(gp.Grid3D(1.0, 8), gp.Trap(), 0.0, 5.0)
    sol = gp.minimize(problem)
    hess = bogoliubov.build_hessian(sol, problem)
    x = problem.grid.mesh()[0]
    table = bogoliubov.hessian_expansion_check(hess, np.cos(2 * np.pi * x), [1e-2, 5e-3])
    return _check("hessian_expansion", abs(table.reduction[0] - 4.0), 0.5, "|r-1| reduction factor minus 4")


def _dilute(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        n, ell, b = rng.uniform(0.1, 10, 3)
        iv = b * rng.uniform(1.0, 3.0)
        s = dilute.mean_field_energy(n, ell, iv) + dilute.renormalization_shift(n, ell, b, iv)
        ref = n**3 * b / (6 * ell**4)
        worst = max(worst, abs(s - ref) / ref)
    lam, rho, a = 1.7, 0.01, 0.3
    base = dilute.e2b_LHY(rho, a).energy_density
    scaled = dilute.e2b_LHY(rho / lam**3, a * lam).energy_density
    inv = abs(scaled * lam**5 - base) / base
    coeff = abs(dilute.LHY_COEFFICIENTS[1][1] - 128 / (15 * math.sqrt(math.pi)))
    return [
        _check("renormalization_identity", worst, 1e-12, "50 random inputs"),
        _check("lhy_rescaling", inv, 1e-12, "lambda = 1.7"),
        _check("lhy_coefficient", coeff, 1e-15),
    ]


def run_suite(seed: int = 0, quick: bool = False) -> list:
    checks = [_square_well_closed_form(), _hard_sphere(3)]
    if not quick:
        checks += [_hard_sphere(6), _scaling_radial(), _strict_bound()]
    checks += [_gp_torus(), _gradient(seed), _stability(), _bogoliubov(), _expansion()]
    checks += _dilute(seed)
    return checks
