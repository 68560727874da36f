"""Closed-form dilute-limit energies and length scales.

Units: lengths ``L``, densities ``L^-3``, two-body scattering length ``a`` in
``L``, three-body scattering energy ``b_M`` in ``L^4``; energy densities come
out in ``L^-5`` (with ``hbar^2/2m = 1``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import PreconditionError

__all__ = [
    "LHY_COEFFICIENTS",
    "ExpansionQuery",
    "e3b_leading",
    "diluteness",
    "gp_length",
    "e2b_LHY",
    "crossover_density",
    "mean_field_energy",
    "renormalization_shift",
    "conjectured_orders",
    "sweep",
]

# coefficients of 1, sqrt(rho a^3) and rho a^3 log(rho a^3) relative to 4 pi a rho^2
LHY_COEFFICIENTS = (
    ("leading", 4.0 * math.pi),
    ("sqrt(rho a^3)", 128.0 / (15.0 * math.sqrt(math.pi))),
    ("rho a^3 log(rho a^3)", 8.0 * (4.0 * math.pi / 3.0 - math.sqrt(3.0))),
)


def _nonneg(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise PreconditionError(f"{k} must be nonnegative, got {v!r}")


def diluteness(rho: float, b_M: float) -> float:
    """``Y = rho b_M^{3/4}``."""
    _nonneg(rho=rho, b_M=b_M)
    return rho * b_M**0.75


@dataclass(frozen=True)
class Leading:
    energy_density: float
    Y: float
    error_order: str = "O(Y^nu)"


def e3b_leading(rho: float, b_M: float) -> Leading:
    """``b_M rho^3 / 6`` with the diluteness parameter attached."""
    _nonneg(rho=rho, b_M=b_M)
    return Leading(b_M * rho**3 / 6.0, diluteness(rho, b_M))


@dataclass(frozen=True)
class GPLength:
    value: float
    via_scattering_length: float
    scattering_length: float


def gp_length(rho: float, b_M: float) -> GPLength:
    """``1/(rho sqrt(b_M))``, also in the form ``a/(rho a^3)`` with ``a = b_M^{1/4}``."""
    if not (rho > 0 and b_M > 0):
        raise PreconditionError("gp_length needs rho > 0 and b_M > 0")
    a = b_M**0.25
    return GPLength(1.0 / (rho * math.sqrt(b_M)), a / (rho * a**3), a)


@dataclass(frozen=True)
class LHYResult:
    energy_density: float
    partial_sums: tuple
    terms: tuple  # (name, coefficient, term value)
    gas_parameter: float


def e2b_LHY(rho: float, a: float, order: int = 2) -> LHYResult:
    """Two-body dilute expansion ``4 pi a rho^2 (1 + c1 sqrt(x) + c2 x log x)``, ``x = rho a^3``.

    ``partial_sums[k]`` holds the sum through order ``k``.
    """
    _nonneg(rho=rho, a=a)
    if order not in (0, 1, 2):
        raise PreconditionError("order must be 0, 1 or 2")
    x = rho * a**3
    if x >= 1:
        warnings.warn(f"gas parameter rho a^3 = {x:g} is not small", stacklevel=2)
    lead = LHY_COEFFICIENTS[0][1] * a * rho**2
    factors = (1.0, math.sqrt(x), x * math.log(x) if x > 0 else 0.0)
    coeffs = (1.0, LHY_COEFFICIENTS[1][1], LHY_COEFFICIENTS[2][1])
    terms, sums, acc = [], [], 0.0
    for k in range(order + 1):
        value = lead * coeffs[k] * factors[k]
        acc += value
        sums.append(acc)
        terms.append((LHY_COEFFICIENTS[k][0], LHY_COEFFICIENTS[k][1], value))
    return LHYResult(acc, tuple(sums), tuple(terms), x)


@dataclass(frozen=True)
class Crossover:
    rho: float
    gas_parameter: float
    Y: float
    dilute: bool


def crossover_density(a: float, b_M: float, threshold: float = 0.1) -> Crossover:
    """Density where ``4 pi a rho^2 = b_M rho^3 / 6``, i.e. ``rho* = 24 pi a / b_M``.

    ``dilute`` is true when both ``rho* a^3`` and ``Y(rho*)`` are below ``threshold``.
    """
    if not (a > 0 and b_M > 0):
        raise PreconditionError("crossover needs a > 0 and b_M > 0")
    rho = 24.0 * math.pi * a / b_M
    x = rho * a**3
    y = diluteness(rho, b_M)
    return Crossover(rho, x, y, bool(x < threshold and y < threshold))


def _check_nl(n, ell, integral):
    if not (n > 0 and ell > 0):
        raise PreconditionError("n and ell must be positive")
    _nonneg(integral_V=integral)


def mean_field_energy(n: float, ell: float, integral_V: float) -> float:
    """``n^3 ell^-4 (int V) / 6``."""
    _check_nl(n, ell, integral_V)
    return n**3 * integral_V / (6.0 * ell**4)


def renormalization_shift(n: float, ell: float, b_M: float, integral_V: float) -> float:
    """``n^3 ell^-4 (b_M - int V) / 6``; negative since ``b_M < int V``."""
    _check_nl(n, ell, integral_V)
    _nonneg(b_M=b_M)
    return n**3 * (b_M - integral_V) / (6.0 * ell**4)


@dataclass(frozen=True)
class ExpansionQuery:
    rho: float
    b_M: Optional[float] = None
    a: Optional[float] = None
    order: int = 2
    C_TL: Optional[float] = None
    C_GP: Optional[float] = None
    N: Optional[float] = None
    e_GP: Optional[float] = None

    def __post_init__(self):
        _nonneg(rho=self.rho)
        for name in ("a", "b_M", "N"):
            v = getattr(self, name)
            if v is not None:
                _nonneg(**{name: v})


def conjectured_orders(query: ExpansionQuery) -> dict:
    """Second-order forms with user-supplied constants (conjectural; constants unknown).

    Returns ``thermodynamic`` = ``rho^3 b_M (1 + C_TL rho) / 6``, ``gp`` =
    ``N e_GP + sqrt(N) C_GP`` when those inputs are given, and the quartic
    correction scale ``rho^4 b_M^{7/4}``.
    """
    if query.b_M is None:
        raise PreconditionError("b_M is required")
    if query.C_TL is None:
        raise PreconditionError("C_TL must be supplied; it is not known and has no default")
    rho, b = query.rho, query.b_M
    out = {
        "status": "conjectural: constants are user-supplied",
        "C_TL": query.C_TL,
        "thermodynamic": rho**3 * b * (1.0 + query.C_TL * rho) / 6.0,
        "quartic_scale": rho**4 * b**1.75,
        "Y": diluteness(rho, b),
    }
    if query.C_GP is not None:
        if query.N is None or query.e_GP is None:
            raise PreconditionError("the GP-order form needs N and e_GP together with C_GP")
        out["C_GP"] = query.C_GP
        out["gp"] = query.N * query.e_GP + math.sqrt(query.N) * query.C_GP
    return out


def sweep(rhos, a: float, b_M: float, order: int = 2, threshold: float = 0.1) -> list:
    """Rows ``(rho, Y, e3b, e2b_0..e2b_order, above_crossover)`` for a density sweep."""
    cross = crossover_density(a, b_M, threshold).rho if a > 0 and b_M > 0 else math.inf
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for rho in np.asarray(rhos, dtype=float):
            rho = float(rho)
            lead = e3b_leading(rho, b_M)
            lhy = e2b_LHY(rho, a, order)
            rows.append((rho, lead.Y, lead.energy_density, *lhy.partial_sums, rho > cross))
    return rows
