"""The energy functional, its gradient, the nonlocal norm and the quotient.

With ``p = 2_mu^*`` and ``D(u) = iint |u|^p |u|^p / |x - y|^mu``::

    J(u) = 1/2 ||grad u||^2 - D(u)/(2p) - lambda/2 |u|_2^2
    ||u||_NL = D(u)^{1/(2p)}
    Q(u) = (||grad u||^2 - lambda |u|_2^2) / ||u||_NL^2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import riesz
from .constants import SharpConstants, level_coefficient, level_exponent, sharp_constants
from .errors import DegenerateInput, DimensionError, RayUnbounded
from .field import (
    GridDomain,
    ScalarField,
    apply_laplacian,
    grad_sq_integral,
    l2_sq_integral,
    lp_integral,
)

ZERO_GUARD = 1e-300


@dataclass(frozen=True, eq=False)
class EnergyContext:
    domain: GridDomain
    constants: SharpConstants
    plan: riesz.RieszPlan
    lam: float

    def __post_init__(self):
        if self.plan.mu != self.constants.mu or not self.plan.domain.same_as(self.domain):
            raise DimensionError("plan does not match the domain or mu of the context")

    @property
    def power(self) -> float:
        return self.constants.upper_crit

    def with_lambda(self, lam: float) -> EnergyContext:
        return EnergyContext(self.domain, self.constants, self.plan, float(lam))


def make_context(domain: GridDomain, mu: float, lam: float, plan: riesz.RieszPlan | None = None) -> EnergyContext:
    return EnergyContext(
        domain=domain,
        constants=sharp_constants(domain.dim, mu),
        plan=plan if plan is not None else riesz.plan(domain, mu),
        lam=float(lam),
    )


def abs_power(values: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(values)
    out = np.zeros_like(a)
    nz = a >= ZERO_GUARD
    out[nz] = np.exp(p * np.log(a[nz]))
    return out


def signed_power(values: np.ndarray, p: float) -> np.ndarray:
    """``sign(u) |u|^p``, i.e. ``|u|^{p-1} u`` written with the exponent ``p``."""
    return np.sign(values) * abs_power(values, p)


@dataclass(frozen=True)
class EnergyBreakdown:
    grad_term: float
    nl_term: float
    l2_term: float
    total: float
    quotient: float | None
    nl_norm: float

    def as_dict(self) -> dict:
        return {
            "grad_term": self.grad_term,
            "nl_term": self.nl_term,
            "l2_term": self.l2_term,
            "total": self.total,
            "quotient": self.quotient,
            "nl_norm": self.nl_norm,
        }


@dataclass(frozen=True)
class Parts:
    """Raw ingredients shared by the energy, quotient and ray formulas."""

    grad_sq: float
    l2_sq: float
    nl_double: float
    lam: float
    power: float

    @property
    def numerator(self) -> float:
        return self.grad_sq - self.lam * self.l2_sq

    @property
    def nl_norm(self) -> float:
        return self.nl_double ** (1.0 / (2.0 * self.power))

    @property
    def nl_sq(self) -> float:
        return self.nl_double ** (1.0 / self.power)


def nl_double(ctx: EnergyContext, u: ScalarField) -> float:
    w = ScalarField(u.domain, abs_power(u.values, ctx.power), check=False)
    return riesz.double_integral(ctx.plan, w, w)


def parts(ctx: EnergyContext, u: ScalarField) -> Parts:
    return Parts(grad_sq_integral(u), l2_sq_integral(u), nl_double(ctx, u), ctx.lam, ctx.power)


def nl_norm(ctx: EnergyContext, u: ScalarField) -> float:
    return parts(ctx, u).nl_norm if not u.is_zero() else 0.0


def energy(ctx: EnergyContext, u: ScalarField) -> EnergyBreakdown:
    pt = parts(ctx, u)
    grad_term = 0.5 * pt.grad_sq
    nl_term = pt.nl_double / (2.0 * pt.power)
    l2_term = 0.5 * ctx.lam * pt.l2_sq
    q = pt.numerator / pt.nl_sq if pt.nl_double > 0 else None
    return EnergyBreakdown(grad_term, nl_term, l2_term, grad_term - nl_term - l2_term, q, pt.nl_norm)


def nonlinear_term(ctx: EnergyContext, u: ScalarField) -> ScalarField:
    """``(|x|^{-mu} * |u|^p) |u|^{p-2} u`` on the mask."""
    w = abs_power(u.values, ctx.power)
    pot = riesz.potential(ctx.plan, w) if np.any(w) else np.zeros_like(w)
    return ScalarField.masked(u.domain, pot * signed_power(u.values, ctx.power - 1.0))


def energy_gradient(ctx: EnergyContext, u: ScalarField) -> ScalarField:
    """L^2_h representer ``g`` of ``J'(u)``: ``inner(g, phi)`` is the directional derivative."""
    return apply_laplacian(u) - ctx.lam * u - nonlinear_term(ctx, u)


def quotient(ctx: EnergyContext, u: ScalarField) -> float:
    if u.is_zero():
        raise DegenerateInput("quotient of the zero field")
    pt = parts(ctx, u)
    return pt.numerator / pt.nl_sq


def quotient_gradient(ctx: EnergyContext, u: ScalarField, pt: Parts | None = None) -> tuple[float, ScalarField]:
    """Value and L^2_h gradient of the quotient."""
    pt = pt or parts(ctx, u)
    q = pt.numerator / pt.nl_sq
    # d(D^{1/p}) = 2 D^{1/p - 1} (pot |u|^{p-2} u)
    dnum = 2.0 * (apply_laplacian(u) - ctx.lam * u)
    dden = 2.0 * pt.nl_double ** (1.0 / pt.power - 1.0) * nonlinear_term(ctx, u)
    return q, (dnum - q * dden) / pt.nl_sq


@dataclass(frozen=True)
class RayMax:
    t_star: float
    level: float


def ray_max_from_parts(pt: Parts, N: int, mu: float) -> RayMax:
    A, B, p = pt.numerator, pt.nl_double, pt.power
    if A <= 0 or B <= 0:
        raise RayUnbounded("energy along the ray has no positive maximum (Q <= 0)")
    t_star = (A / B) ** (1.0 / (2.0 * p - 2.0))
    q = A / B ** (1.0 / p)
    return RayMax(t_star, level_coefficient(N, mu) * q ** level_exponent(N, mu))


def ray_max(ctx: EnergyContext, u: ScalarField) -> RayMax:
    """``max_{t >= 0} J(t u)`` in closed form."""
    if u.is_zero():
        raise RayUnbounded("zero field")
    return ray_max_from_parts(parts(ctx, u), ctx.domain.dim, ctx.constants.mu)


def ray_energy(pt: Parts, t: float) -> float:
    """``J(t u)`` from the homogeneous pieces of ``u``."""
    p = pt.power
    return 0.5 * t * t * pt.numerator - t ** (2.0 * p) * pt.nl_double / (2.0 * p)


def ray_max_scan(pt: Parts, tol: float = 1e-12) -> tuple[float, float]:
    """Golden-section maximization of ``t -> J(t u)``; independent of the closed form."""
    if pt.numerator <= 0:
        raise RayUnbounded("no positive maximum")
    hi = 1.0
    while ray_energy(pt, hi) > 0:
        hi *= 2.0
    t = scipy.optimize.golden(lambda s: -ray_energy(pt, s), brack=(0.0, hi / 2.0, hi), tol=tol)
    return float(t), ray_energy(pt, float(t))


def hls_check(ctx: EnergyContext, u: ScalarField) -> float:
    """``D(u)^{(N-2)/(2N-mu)} / (C(N,mu)^{(N-2)/(2N-mu)} |u|_{2*}^2)``; at most 1 up to quadrature."""
    if u.is_zero():
        raise DegenerateInput("HLS ratio of the zero field")
    c = ctx.constants
    e = c.nl_exponent
    lhs = nl_double(ctx, u) ** e
    rhs = c.hls_const**e * lp_integral(u, c.sobolev_exp) ** (2.0 / c.sobolev_exp)
    return lhs / rhs


def brezis_lieb_defect(ctx: EnergyContext, u0: ScalarField, bubbles) -> list[float]:
    """``|[D(u0 + w) - D(w)] - D(u0)|`` for each ``w`` in ``bubbles``."""
    base = nl_double(ctx, u0)
    out = []
    for w in bubbles:
        if u0.is_zero() or w.is_zero():
            out.append(0.0)
            continue
        out.append(abs(nl_double(ctx, u0 + w) - nl_double(ctx, w) - base))
    return out


def directional_derivative_fd(ctx: EnergyContext, u: ScalarField, phi: ScalarField, s: float = 1e-5) -> float:
    """Central difference ``(J(u + s phi) - J(u - s phi)) / (2 s)``."""
    return (energy(ctx, u + s * phi).total - energy(ctx, u - s * phi).total) / (2.0 * s)


def ray_level_formula(q: float, N: int, mu: float) -> float:
    if q <= 0:
        raise RayUnbounded("no positive maximum")
    return level_coefficient(N, mu) * q ** level_exponent(N, mu)


__all__ = [
    "EnergyBreakdown",
    "EnergyContext",
    "Parts",
    "RayMax",
    "abs_power",
    "brezis_lieb_defect",
    "directional_derivative_fd",
    "energy",
    "energy_gradient",
    "hls_check",
    "make_context",
    "nl_double",
    "nl_norm",
    "nonlinear_term",
    "parts",
    "quotient",
    "quotient_gradient",
    "ray_energy",
    "ray_level_formula",
    "ray_max",
    "ray_max_from_parts",
    "ray_max_scan",
    "signed_power",
]
