"""Interaction potentials, the three-body metric and the symmetry check.

Radial potentials live in ``R^d`` and are evaluated on radii.  Three-body
potentials live on ``R^3 x R^3`` and are evaluated on pairs ``(x, y)`` of
arrays whose last axis has length 3.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma

from .errors import PreconditionError

__all__ = [
    "RadialPotential",
    "Potential6D",
    "MetricM",
    "SymmetryReport",
    "sphere_area",
    "zero",
    "square_well",
    "gaussian",
    "tabulated",
    "load_tabulated",
    "product_triplet",
    "isotropic_after_M",
    "radial_6d",
    "custom_6d",
    "make_metric_M",
    "identity_metric",
    "check_three_body_symmetry",
    "transform_by_metric",
]

DEFAULT_GAUSSIAN_CUTOFF = 6.0


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in ``R^d``."""
    return float(2.0 * np.pi ** (d / 2.0) / gamma(d / 2.0))


# ---------------------------------------------------------------------------
# radial potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """Nonnegative, bounded, compactly supported potential ``v(|x|)`` on ``R^d``.

    Build instances with :func:`zero`, :func:`square_well`, :func:`gaussian`
    or :func:`tabulated` rather than calling the constructor directly.
    """

    dimension: int
    family: str
    params: dict
    support_radius: float
    radii: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        fam = self.family
        if fam == "zero":
            return np.zeros_like(r)
        if fam == "square-well":
            return np.where(r < self.params["radius"], self.params["v0"], 0.0)
        if fam == "gaussian":
            w = self.params["width"]
            out = self.params["amplitude"] * np.exp(-((r / w) ** 2))
            return np.where(r < self.support_radius, out, 0.0)
        if fam == "tabulated":
            return np.interp(r, self.radii, self.values, left=self.values[0], right=0.0)
        raise ValueError(f"unknown radial family {fam!r}")

    @property
    def breakpoints(self) -> tuple:
        """Radii where the profile is discontinuous (mesh nodes should sit there)."""
        if self.family in ("square-well", "gaussian", "tabulated") and self.support_radius > 0:
            return (self.support_radius,)
        return ()

    def scaled(self, ell: float) -> "RadialPotential":
        """Return ``ell**2 * v(ell * r)``, which has support ``R0 / ell``."""
        return self.rescaled(float(ell) ** 2, ell)

    def rescaled(self, amplitude: float, ell: float) -> "RadialPotential":
        """Return ``amplitude * v(ell * r)``."""
        ell = float(ell)
        if ell <= 0 or amplitude < 0:
            raise PreconditionError("scale factor must be positive")
        d = self.dimension
        fam = self.family
        if fam == "zero":
            return zero(d, self.support_radius / ell)
        if fam == "square-well":
            return square_well(d, amplitude * self.params["v0"], self.params["radius"] / ell)
        if fam == "gaussian":
            return gaussian(
                d,
                amplitude * self.params["amplitude"],
                self.params["width"] / ell,
                cutoff=self.params["cutoff"],
            )
        return tabulated(d, self.radii / ell, amplitude * self.values)

    def integral(self) -> float:
        """``int_{R^d} v`` (exact for the piecewise families, quadrature otherwise)."""
        d = self.dimension
        s = sphere_area(d)
        fam = self.family
        if fam == "zero":
            return 0.0
        if fam == "square-well":
            R = self.params["radius"]
            return s * self.params["v0"] * R**d / d
        if fam == "gaussian":
            from scipy.special import gammainc

            a, w, c = self.params["amplitude"], self.params["width"], self.params["cutoff"]
            # int_0^{cw} e^{-(r/w)^2} r^{d-1} dr = (w^d / 2) Gamma(d/2) P(d/2, c^2)
            return s * a * 0.5 * w**d * gamma(d / 2) * gammainc(d / 2, c**2)
        # piecewise-linear profile: integrate each segment with Gauss-Legendre
        x, wts = np.polynomial.legendre.leggauss(d + 2)
        r0, r1 = self.radii[:-1], self.radii[1:]
        v0, v1 = self.values[:-1], self.values[1:]
        t = 0.5 * (x[:, None] + 1.0)
        rq = r0 + t * (r1 - r0)
        vq = v0 + t * (v1 - v0)
        seg = 0.5 * (r1 - r0) * np.sum(wts[:, None] * vq * rq ** (d - 1), axis=0)
        inner = self.values[0] * self.radii[0] ** d / d
        return s * float(np.sum(seg) + inner)


def _check_dimension(d):
    if int(d) != d or d < 1:
        raise PreconditionError(f"dimension must be a positive integer, got {d}")
    return int(d)


def zero(d: int = 3, support_radius: float = 0.0) -> RadialPotential:
    return RadialPotential(_check_dimension(d), "zero", {}, float(support_radius))


def square_well(d: int, v0: float, radius: float) -> RadialPotential:
    """Square well of height ``v0`` on the ball of the given radius."""
    if v0 < 0:
        raise PreconditionError(f"v0 must be nonnegative, got {v0}")
    if radius <= 0:
        raise PreconditionError(f"radius must be positive, got {radius}")
    return RadialPotential(
        _check_dimension(d), "square-well", {"v0": float(v0), "radius": float(radius)}, float(radius)
    )


def gaussian(d: int, amplitude: float, width: float, cutoff: float = DEFAULT_GAUSSIAN_CUTOFF) -> RadialPotential:
    """Gaussian ``amplitude * exp(-(r/width)^2)`` cut to zero at ``cutoff * width``."""
    if amplitude < 0:
        raise PreconditionError(f"amplitude must be nonnegative, got {amplitude}")
    if width <= 0 or cutoff <= 0:
        raise PreconditionError("width and cutoff must be positive")
    params = {"amplitude": float(amplitude), "width": float(width), "cutoff": float(cutoff)}
    return RadialPotential(_check_dimension(d), "gaussian", params, float(cutoff * width))


def tabulated(d: int, radii, values) -> RadialPotential:
    """Piecewise-linear profile through ``(radii, values)``, zero beyond the last radius."""
    radii = np.asarray(radii, dtype=float).copy()
    values = np.asarray(values, dtype=float).copy()
    if radii.ndim != 1 or radii.shape != values.shape or radii.size < 2:
        raise PreconditionError("tabulated profile needs two equal-length columns with >= 2 rows")
    if np.any(np.diff(radii) <= 0) or radii[0] < 0:
        raise PreconditionError("tabulated radii must be nonnegative and strictly increasing")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise PreconditionError("tabulated values must be finite and nonnegative")
    radii.setflags(write=False)
    values.setflags(write=False)
    return RadialPotential(_check_dimension(d), "tabulated", {}, float(radii[-1]), radii, values)


def load_tabulated(path, d: int) -> RadialPotential:
    """Read a two-column (radius, value) text file."""
    data = np.loadtxt(path, dtype=float, ndmin=2)
    if data.shape[1] != 2:
        raise PreconditionError(f"{path}: expected two columns, found {data.shape[1]}")
    return tabulated(d, data[:, 0], data[:, 1])


# ---------------------------------------------------------------------------
# the metric M
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricM:
    """Symmetric 2x2 block matrix acting on ``R^3 x R^3``."""

    block: np.ndarray

    @property
    def matrix6(self) -> np.ndarray:
        return np.kron(self.block, np.eye(3))

    @property
    def det6(self) -> float:
        return float(np.linalg.det(self.block) ** 3)

    @property
    def gram(self) -> np.ndarray:
        """``M^T M`` as a 6x6 matrix: the coefficient of the quadratic form ``|M grad|^2``."""
        m = self.matrix6
        return m.T @ m

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.block)

    def apply(self, x, y):
        (a, b), (c, d) = self.block
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return a * x + b * y, c * x + d * y

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.block, np.eye(2)))


@lru_cache(maxsize=None)
def _canonical_block():
    s3 = np.sqrt(3.0)
    blk = np.array([[s3 + 1.0, s3 - 1.0], [s3 - 1.0, s3 + 1.0]]) / (2.0 * np.sqrt(2.0))
    blk.setflags(write=False)
    return blk


def make_metric_M() -> MetricM:
    """The positive square root of ``(1/2) [[2, 1], [1, 2]]`` (block-wise)."""
    return MetricM(_canonical_block())


def identity_metric() -> MetricM:
    blk = np.eye(2)
    blk.setflags(write=False)
    return MetricM(blk)


# ---------------------------------------------------------------------------
# three-body potentials
# ---------------------------------------------------------------------------

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Potential6D:
    """Nonnegative potential ``V(x, y)`` on ``R^3 x R^3`` supported in ``|(x, y)| <= R0``.

    ``symmetry`` is one of ``"asserted"`` (holds by construction),
    ``"checked"``, ``"violated"`` or ``"unchecked"``.
    """

    evaluator: Evaluator = field(repr=False)
    support_radius: float
    family: str
    symmetry: str = "unchecked"
    profile: Optional[RadialPotential] = None
    params: dict = field(default_factory=dict)

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.asarray(self.evaluator(x, y), dtype=float)

    def on_points(self, z) -> np.ndarray:
        """Evaluate on an ``(..., 6)`` array of concatenated ``(x, y)``."""
        z = np.asarray(z, dtype=float)
        return self(z[..., :3], z[..., 3:])

    def scaled(self, ell: float) -> "Potential6D":
        """``ell**2 * V(ell * .)`` with support ``R0 / ell``."""
        ell = float(ell)
        if ell <= 0:
            raise PreconditionError("scale factor must be positive")
        if self.family == "product-triplet":
            # ell^2 h(ell|x|) h(ell|y|) h(ell|x-y|) is the triplet of ell^(2/3) h(ell .)
            return product_triplet(self.profile.rescaled(ell ** (2.0 / 3.0), ell))
        if self.family == "isotropic-after-M":
            return isotropic_after_M(self.profile.scaled(ell))
        if self.family == "radial":
            return radial_6d(self.profile.scaled(ell))
        ev = self.evaluator
        return dataclasses.replace(
            self,
            evaluator=lambda x, y: ell**2 * ev(ell * x, ell * y),
            support_radius=self.support_radius / ell,
        )

    def integral(self) -> float:
        """``int_{R^6} V``; available for the radial-type and product-triplet families."""
        if self.family == "radial":
            return self.profile.integral()
        if self.family == "isotropic-after-M":
            # V(z) = w(|M^{-1} z|): substitute z = M x
            return make_metric_M().det6 * self.profile.integral()
        if self.family == "product-triplet":
            return _triplet_integral(self.profile)
        raise NotImplementedError(f"no closed-form integral for family {self.family!r}")


def _triplet_integral(h: RadialPotential, nodes: int = 96) -> float:
    """``int h(|x|) h(|y|) h(|x-y|) dx dy`` via the radial convolution identity.

    With ``g = h * h`` (3D convolution of radial functions),
    ``g(r) = (2 pi / r) int s h(s) int_{|r-s|}^{r+s} t h(t) dt ds``.
    """
    R = h.support_radius
    x, w = np.polynomial.legendre.leggauss(nodes)
    # r, s on [0, R] (h vanishes beyond R, so g only matters for r <= R)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * w
    s = r
    ws = wr

    def th_integral(lo, hi):
        hi = np.minimum(hi, R)
        span = np.clip(hi - lo, 0.0, None)
        t = lo[..., None] + 0.5 * span[..., None] * (x + 1.0)
        return 0.5 * span * np.sum(w * t * h(t), axis=-1)

    rr = r[:, None]
    ss = s[None, :]
    inner = th_integral(np.abs(rr - ss), rr + ss)
    g = 2.0 * np.pi / r * np.sum(ws * s * h(s) * inner, axis=1)
    return float(4.0 * np.pi * np.sum(wr * r**2 * h(r) * g))


def _norm3(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def product_triplet(h: RadialPotential) -> Potential6D:
    """``V(x, y) = h(|x|) h(|y|) h(|x - y|)``; three-body symmetric by construction."""
    if h.dimension != 3:
        raise PreconditionError("the triplet profile h must be a 3D radial potential")

    def ev(x, y):
        return h(_norm3(x)) * h(_norm3(y)) * h(_norm3(x - y))

    return Potential6D(ev, np.sqrt(2.0) * h.support_radius, "product-triplet", "asserted", h)


def isotropic_after_M(w: RadialPotential) -> Potential6D:
    """``V(z) = w(|M^{-1} z|)`` so that ``V(M .)`` is the radial profile ``w``.

    ``|M^{-1}(x, y)|^2 = (2/3)(|x|^2 + |y|^2 + |x - y|^2)`` is invariant under
    the three-body permutations, hence the symmetry holds by construction.
    """
    if w.dimension != 6:
        raise PreconditionError("isotropic-after-M needs a 6D radial profile")

    def ev(x, y):
        q = (2.0 / 3.0) * (np.sum(x * x, -1) + np.sum(y * y, -1) + np.sum((x - y) ** 2, -1))
        return w(np.sqrt(q))

    # |M^{-1} z| <= r_w  implies  |z| <= sigma_max(M) r_w = sqrt(3/2) r_w
    return Potential6D(ev, np.sqrt(1.5) * w.support_radius, "isotropic-after-M", "asserted", w)


def radial_6d(w: RadialPotential) -> Potential6D:
    """``V(x, y) = w(|(x, y)|)``.  Not three-body symmetric in general."""
    if w.dimension != 6:
        raise PreconditionError("radial_6d needs a 6D radial profile")

    def ev(x, y):
        return w(np.sqrt(np.sum(x * x, -1) + np.sum(y * y, -1)))

    return Potential6D(ev, w.support_radius, "radial", "unchecked", w)


def custom_6d(evaluator: Evaluator, support_radius: float, family: str = "custom") -> Potential6D:
    """Wrap an arbitrary evaluator; values outside ``support_radius`` are forced to zero."""

    def ev(x, y):
        inside = (np.sum(x * x, -1) + np.sum(y * y, -1)) <= support_radius**2
        return np.where(inside, evaluator(x, y), 0.0)

    return Potential6D(ev, float(support_radius), family)


def transform_by_metric(V: Potential6D, M: MetricM) -> Potential6D:
    """Return ``(x, y) -> V(M (x, y))``.

    The support radius is multiplied by the largest eigenvalue of ``M^{-1}``.
    """
    if M.is_identity():
        return V
    lam_min = float(np.min(M.eigenvalues()))

    def ev(x, y):
        return V(*M.apply(x, y))

    return Potential6D(ev, V.support_radius / lam_min, "transformed", "unchecked",
                       params={"base_family": V.family})


# ---------------------------------------------------------------------------
# symmetry check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetryReport:
    max_violation: float
    passed: bool
    sample_count: int
    tolerance: float
    worst_identity: str = ""


def _sample_ball(rng, n, dim, radius):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.random(n) ** (1.0 / dim)
    return g * rad[:, None]


def _rel(a, b):
    den = np.maximum(np.abs(a), np.abs(b))
    out = np.zeros_like(den)
    nz = den > 0
    out[nz] = np.abs(a[nz] - b[nz]) / den[nz]
    return out


def check_three_body_symmetry(
    V: Potential6D, sample_count: int = 256, tolerance: float = 1e-12, seed: int = 0
) -> SymmetryReport:
    """Sample both permutation identities of a three-body potential.

    Pairs ``(a, b)`` are drawn uniformly from the support ball with a seeded
    generator; writing ``a = x1 - x2`` and ``b = x1 - x3`` the identities read
    ``V(a, b) = V(b, a)`` and ``V(a, b) = V(-a, b - a) = V(a - b, -b)``.
    """
    if sample_count < 1:
        raise PreconditionError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    R0 = V.support_radius if V.support_radius > 0 else 1.0
    z = _sample_ball(rng, sample_count, 6, R0)
    a, b = z[:, :3], z[:, 3:]
    v_ab = V(a, b)
    others = {
        "swap": V(b, a),
        "cyclic-1": V(-a, b - a),
        "cyclic-2": V(a - b, -b),
    }
    for vals in (v_ab, *others.values()):
        if np.any(vals < 0):
            raise PreconditionError("potential evaluator returned negative values")
    worst, worst_name = 0.0, ""
    for name, vals in others.items():
        m = float(np.max(_rel(v_ab, vals)))
        if m > worst:
            worst, worst_name = m, name
    return SymmetryReport(worst, worst <= tolerance, int(sample_count), float(tolerance), worst_name)


def certify(V: Potential6D, report: SymmetryReport) -> Potential6D:
    """Return ``V`` with its symmetry certificate updated from ``report``."""
    return dataclasses.replace(V, symmetry="checked" if report.passed else "violated")
