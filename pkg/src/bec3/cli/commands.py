"""Dispatch of each subcommand to the solver modules and artifact writers."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import bogoliubov, dilute, gp, potentials, scattering
from ..errors import ConfigError
from .config import RunConfig
from .output import write_csv, write_json, write_svg_loglog


def _ordered_map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def build_potential(block):
    d = block.dimension
    profile_dim = 3 if (d == 6 and block.construction == "product_triplet") else d
    if block.family == "square_well":
        prof = potentials.square_well(profile_dim, block.v0, block.radius)
    elif block.family == "gaussian":
        prof = potentials.gaussian(profile_dim, block.amplitude, block.width, block.cutoff)
    else:
        prof = potentials.load_tabulated(block.file, profile_dim)
    if d == 3:
        return prof
    return {
        "radial": potentials.radial_6d,
        "isotropic_after_M": potentials.isotropic_after_M,
        "product_triplet": potentials.product_triplet,
    }[block.construction](prof)


def _scatter_one(cfg: RunConfig, V, ell):
    s = cfg.scatter
    Vs = V.scaled(ell) if ell != 1.0 else V
    d = cfg.potential.dimension
    grid_opts = dict(
        min_points_per_radius=s.min_points_per_radius,
        potential_subsamples=s.potential_subsamples,
        memory_cap_bytes=int(s.memory_cap_gib * 2**30),
    )
    if d == 3:
        if s.method == "radial":
            sol = scattering.solve_radial_extrapolated(Vs, s.factors, s.nodes, s.model)
        else:
            R0 = Vs.support_radius
            R_inf = s.truncation_radius * ell if s.truncation_radius else scattering.default_grid_radius(
                R0, s.points, s.min_points_per_radius
            )
            sol = scattering.solve_grid(scattering.ScatteringProblem(Vs, R_inf, points=s.points, **grid_opts))
    else:
        metric = potentials.make_metric_M() if s.metric == "M" else potentials.identity_metric()
        method = "direct" if s.method == "grid" else s.method
        kw = dict(metric=metric, points=s.points, factors=s.factors, nodes=s.nodes)
        if method != "radial":
            kw.update(grid_opts)
            if s.truncation_radius:
                kw["truncation_radius"] = s.truncation_radius * ell
        sol = scattering.b_modified(Vs, method, **kw)
    b = sol.extrapolated_b if sol.extrapolation is not None else sol.b
    profile = None
    if sol.r is not None:
        profile = {"r": sol.r, "f": sol.f}
    return {
        "dimension": d,
        "family": cfg.potential.family,
        "resolution": s.nodes if sol.r is not None else s.points,
        "a_nom": max(b, 0.0) ** (1.0 / (d - 2)),
        "profile": profile,
        "scale": ell,
        "b": b,
        "b_truncated": sol.b,
        "rescaled_b": ell ** (d - 2) * b,
        "integral_V": sol.potential_integral,
        "margin": sol.potential_integral - b,
        "residual": sol.residual,
        "truncation_radius": sol.truncation_radius,
        "method": sol.method,
        "iterations": sol.iterations,
        "phi_min": sol.phi_min,
        "phi_max": sol.phi_max,
    }


def run_scatter(cfg: RunConfig, out: Path) -> dict:
    if cfg.potential.dimension == 3 and cfg.scatter.method in ("direct", "change-of-variables"):
        raise ConfigError("scatter.method: 'direct'/'change-of-variables' need dimension 6", "scatter.method")
    V = build_potential(cfg.potential)
    rows = _ordered_map(lambda ell: _scatter_one(cfg, V, ell), list(cfg.scatter.scales), cfg.workers)
    cols = [
        "dimension", "family", "scale", "truncation_radius", "resolution", "b", "b_truncated", "rescaled_b",
        "integral_V", "margin", "residual", "a_nom", "method",
    ]
    record = {
        "command": "scatter",
        "dimension": cfg.potential.dimension,
        "family": cfg.potential.family,
        "construction": cfg.potential.construction,
        "runs": rows,
    }
    fmt = cfg.output.formats
    if "csv" in fmt:
        write_csv(out / "scatter.csv", cols, [[r[c] for c in cols] for r in rows])
        for i, r in enumerate(rows):
            if r["profile"] is not None:
                write_csv(out / f"profile_{i}.csv", ["r", "f"], zip(r["profile"]["r"], r["profile"]["f"]))
    if "json" in fmt:
        write_json(out / "scatter.json", record)
    if "svg" in fmt:
        write_svg_loglog(
            out / "scatter.svg",
            [("b", [r["scale"] for r in rows], [r["b"] for r in rows])],
            "scale", "b", "scattering energy vs potential scale",
        )
    return record


def _gp_problem(block) -> gp.GPProblem:
    grid = gp.Grid3D(block.side, block.points, block.boundary)
    t = block.trap
    if t.kind == "none":
        trap = gp.Trap()
    elif t.kind == "power":
        trap = gp.Trap("power", t.C, t.alpha)
    else:
        trap = gp.Trap("tabulated", values=np.load(t.file))
    return gp.GPProblem(grid, trap, block.b1, block.b2)


def _minimize(cfg: RunConfig, problem):
    s = cfg.solver
    opts = gp.MinimizeOptions(
        step=s.step, max_iterations=s.max_iterations, tolerance=s.tolerance, restarts=s.restarts,
        seed=cfg.output.seed, initial=s.initial, workers=cfg.workers,
    )
    return gp.minimize(problem, opts)


def _gp_record(sol: gp.GPSolution, problem) -> dict:
    e = sol.breakdown
    return {
        "energy": sol.energy,
        "kinetic": e.kinetic,
        "trap": e.trap,
        "quartic": e.quartic,
        "quintic": e.quintic,
        "mu": sol.mu,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "tolerance": sol.tolerance,
        "seed": sol.seed,
        "restart_energies": list(sol.restart_energies),
        "spread": sol.spread,
        "min_evaluated_energy": sol.min_evaluated_energy,
        "grid": {"side": problem.grid.side, "points": problem.grid.points, "boundary": problem.grid.boundary},
        "b1": problem.b1,
        "b2": problem.b2,
    }


def run_gp(cfg: RunConfig, out: Path) -> dict:
    problem = _gp_problem(cfg.problem)
    sol = _minimize(cfg, problem)
    record = {"command": "gp", **_gp_record(sol, problem)}
    gp.write_field(out / "field.bin", sol.u, problem.grid)
    fmt = cfg.output.formats
    if "csv" in fmt:
        write_csv(out / "trace.csv", ["iteration", "energy", "residual"], sol.trace)
    if "json" in fmt:
        write_json(out / "gp.json", record)
    if "svg" in fmt:
        tr = [t for t in sol.trace if t[0] > 0]
        write_svg_loglog(
            out / "trace.svg", [("residual", [t[0] for t in tr], [t[2] for t in tr])],
            "iteration", "EL residual", "GP minimization",
        )
    return record


def run_bogoliubov(cfg: RunConfig, out: Path) -> dict:
    problem = _gp_problem(cfg.problem)
    sol = _minimize(cfg, problem)
    hess = bogoliubov.build_hessian(sol, problem, cfg.spectrum.convention)
    spec = bogoliubov.excitation_spectrum(hess, cfg.spectrum.k, cfg.spectrum.method)
    record = {
        "command": "bogoliubov",
        "method": spec.method,
        "convention": cfg.spectrum.convention,
        "projector_rank": spec.projector_rank,
        "eigenvalues": spec.eigenvalues,
        "multiplicities": spec.multiplicities,
        "momentum_squared": spec.momentum_squared,
        "ground_state": _gp_record(sol, problem),
    }
    fmt = cfg.output.formats
    if "csv" in fmt:
        bogoliubov.write_spectrum(out / "spectrum.csv", spec)
    if "json" in fmt:
        write_json(out / "bogoliubov.json", record)
    return record


def run_expand(cfg: RunConfig, out: Path) -> dict:
    e = cfg.expand
    rhos = np.logspace(np.log10(e.rho_min), np.log10(e.rho_max), e.samples)
    rows = dilute.sweep(rhos, e.a, e.b_M, e.order, e.threshold)
    cross = dilute.crossover_density(e.a, e.b_M, e.threshold)
    cols = ["rho", "Y", "e3b"] + [f"e2b_order{k}" for k in range(e.order + 1)] + ["above_crossover"]
    record = {
        "command": "expand",
        "a": e.a,
        "b_M": e.b_M,
        "order": e.order,
        "coefficients": [{"term": n, "value": v} for n, v in dilute.LHY_COEFFICIENTS],
        "crossover": {"rho": cross.rho, "gas_parameter": cross.gas_parameter, "Y": cross.Y, "dilute": cross.dilute},
        "rows": len(rows),
    }
    fmt = cfg.output.formats
    if "csv" in fmt:
        write_csv(out / "expand.csv", cols, rows)
    if "json" in fmt:
        write_json(out / "expand.json", record)
    if "svg" in fmt:
        series = [("e3b", rhos, [r[2] for r in rows])]
        series += [(f"e2b order {k}", rhos, [r[3 + k] for r in rows]) for k in range(e.order + 1)]
        write_svg_loglog(out / "expand.svg", series, "rho", "energy density", "dilute expansions")
    return record


def run_verify(cfg: RunConfig, out: Path) -> dict:
    from .verify import run_suite

    results = run_suite(seed=cfg.output.seed, quick=cfg.verify.quick)
    passed = all(r["passed"] for r in results)
    record = {"command": "verify", "seed": cfg.output.seed, "passed": passed, "checks": results}
    cols = ["name", "measured", "tolerance", "passed"]
    fmt = cfg.output.formats
    if "csv" in fmt:
        write_csv(out / "verify.csv", cols, [[r[c] for c in cols] for r in results])
    if "json" in fmt:
        write_json(out / "verify.json", record)
    return record


COMMANDS = {
    "scatter": run_scatter,
    "gp": run_gp,
    "bogoliubov": run_bogoliubov,
    "expand": run_expand,
    "verify": run_verify,
}
