"""Cut-off Talenti bubbles ``u_eps = psi U_eps`` and their energy estimates.

``U_eps(x) = eps^{(2-N)/2} U(x / eps)`` and ``psi`` is a radial C^1 cutoff
equal to 1 on ``B_delta`` and 0 outside ``B_{2 delta}``.  The quotient of
``u_eps`` (``A_eps``) drops below ``S_{H,L}`` for small ``eps`` at a rate
that depends on the dimension; the helpers here measure and fit that rate.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import riesz
from .constants import ExtremalProfile, sharp_constants
from .energy import EnergyContext, abs_power, make_context
from .errors import DomainError, FitError, NotFound, ResolutionError
from .field import GridDomain, ScalarField, grad_sq_integral, l2_sq_integral

log = logging.getLogger(__name__)


def cutoff(r, delta: float, outer: float | None = None):
    """``psi(r)``: 1 on ``r <= delta``, 0 on ``r >= outer``, cubic ``1 - 3s^2 + 2s^3`` between.

    ``outer`` defaults to ``2 delta``.
    """
    outer = 2.0 * delta if outer is None else outer
    r = np.asarray(r, dtype=float)
    s = np.clip((r - delta) / (outer - delta), 0.0, 1.0)
    return 1.0 - 3.0 * s**2 + 2.0 * s**3


def inradius(domain: GridDomain, center=None) -> float:
    """Distance from ``center`` to the nearest node outside the mask."""
    r = domain.radius(center)
    return float(r[~domain.mask].min())


@dataclass(frozen=True, eq=False)
class BubbleSpec:
    epsilon: float
    delta: float
    domain: GridDomain
    center: tuple = field(default=())
    outer: float = field(init=False, default=0.0)

    def __post_init__(self):
        d = self.domain
        center = tuple(float(c) for c in self.center) or (0.0,) * d.dim
        if len(center) != d.dim:
            raise DomainError("center has the wrong dimension")
        object.__setattr__(self, "center", center)
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        # psi must vanish off the mask, so its support stops at the inradius
        rho = inradius(d, center)
        if self.delta + d.h > rho + 1e-12:
            raise DomainError(f"B_delta (delta={self.delta}) does not fit inside the mask (inradius {rho:.6g})")
        object.__setattr__(self, "outer", min(2.0 * self.delta, rho))
        if self.epsilon < 2.0 * d.h - 1e-12:
            raise ResolutionError(f"eps={self.epsilon} is below the resolution guard 2h={2.0 * d.h:.6g}")
        if self.epsilon > self.delta / 2.0 + 1e-12:
            raise DomainError(f"eps={self.epsilon} exceeds delta/2={self.delta / 2.0}")

    @property
    def radius(self) -> np.ndarray:
        return self.domain.radius(self.center)


def make_bubble_field(spec: BubbleSpec, mu: float = 1.0) -> ScalarField:
    """``u_eps`` sampled on the mask.

    ``mu`` only feeds the profile's constant check; ``U`` itself does not
    depend on it.
    """
    prof = ExtremalProfile(spec.domain.dim, mu, center=spec.center, scale=spec.epsilon)
    r = spec.radius
    return ScalarField.masked(spec.domain, cutoff(r, spec.delta, spec.outer) * prof.radial(r))


@dataclass(frozen=True)
class BubbleReport:
    epsilon: float
    grad_sq: float
    l2_sq: float
    nl_double: float
    a_epsilon: float
    tail_D: float
    tail_E: float
    dim: int
    mu: float
    lam: float
    s_hl: float

    @property
    def deficit(self) -> float:
        return self.s_hl - self.a_epsilon

    def a_at(self, lam: float) -> float:
        """``A_eps`` for another ``lambda`` from the stored pieces."""
        e = (self.dim - 2.0) / (2.0 * self.dim - self.mu)
        return (self.grad_sq - lam * self.l2_sq) / self.nl_double**e

    def row(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "grad_sq": self.grad_sq,
            "l2_sq": self.l2_sq,
            "nl_double": self.nl_double,
            "a_epsilon": self.a_epsilon,
            "tail_D": self.tail_D,
            "tail_E": self.tail_E,
            "deficit": self.deficit,
        }


CSV_COLUMNS = ("epsilon", "grad_sq", "l2_sq", "nl_double", "a_epsilon", "tail_D", "tail_E", "deficit")


def bubble_report(spec: BubbleSpec, lam: float, mu: float, ctx: EnergyContext | None = None) -> BubbleReport:
    """All bubble quantities from one field.

    ``tail_D`` restricts the double integral to pairs with one point outside
    ``B_delta`` and one inside; ``tail_E`` to pairs with both outside.  The
    outside region is the mask minus ``B_delta``.
    """
    d = spec.domain
    ctx = ctx if ctx is not None else make_context(d, mu, lam)
    u = make_bubble_field(spec, mu)
    w = abs_power(u.values, ctx.power)
    inside = (spec.radius <= spec.delta) & d.mask
    w_in = ScalarField(d, np.where(inside, w, 0.0), check=False)
    w_out = ScalarField(d, np.where(inside, 0.0, w), check=False)
    whole = ScalarField(d, w, check=False)
    D = riesz.double_integral(ctx.plan, whole, whole)
    tail_D = riesz.double_integral(ctx.plan, w_out, w_in)
    tail_E = riesz.double_integral(ctx.plan, w_out, w_out)
    g, l2 = grad_sq_integral(u), l2_sq_integral(u)
    e = ctx.constants.nl_exponent
    return BubbleReport(
        epsilon=float(spec.epsilon),
        grad_sq=g,
        l2_sq=l2,
        nl_double=D,
        a_epsilon=(g - lam * l2) / D**e,
        tail_D=tail_D,
        tail_E=tail_E,
        dim=d.dim,
        mu=float(mu),
        lam=float(lam),
        s_hl=ctx.constants.nonlocal_S_HL,
    )


def default_eps_grid(domain: GridDomain, delta: float, count: int = 4) -> list[float]:
    """Geometric ``delta/4 * 2^{-k}``, stopping at the ``2h`` guard."""
    out = []
    for k in range(count):
        eps = delta / 4.0 * 2.0**-k
        if eps < 2.0 * domain.h:
            break
        out.append(eps)
    return out


def bubble_scan(
    domain: GridDomain, mu: float, lam: float, eps_grid, delta: float, center=(), threads: int = 1
) -> list[BubbleReport]:
    ctx = make_context(domain, mu, lam)

    def one(eps):
        return bubble_report(BubbleSpec(float(eps), delta, domain, center), lam, mu, ctx)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, eps_grid))
    return [one(e) for e in eps_grid]


@dataclass(frozen=True)
class FitResult:
    exponent: float
    log_slope: float
    r_squared: float
    model: str
    constant: float
    ratios: tuple

    @property
    def ratio_spread(self) -> float:
        """``(max - min)/min`` of deficit/model over the last three points."""
        tail = np.asarray(self.ratios[-3:])
        return float((tail.max() - tail.min()) / tail.min())


def model_rate(N: int):
    """Name, power and log factor of the predicted deficit ``S_HL - A_eps``."""
    if N == 3:
        return "eps", 1.0, lambda e: np.ones_like(e)
    if N == 4:
        return "eps^2 |ln eps|", 2.0, lambda e: np.abs(np.log(e))
    return "eps^2", 2.0, lambda e: np.ones_like(e)


def deficit_rate_fit(reports, N: int, lam: float | None = None) -> FitResult:
    """Log-log fit of the deficit against ``eps`` with the model's log factor divided out.

    ``exponent`` is the power fitted after dividing by the model's log
    factor; ``log_slope`` is the raw slope of log-deficit against log-eps.
    With ``lam`` given the deficits are recomputed at that ``lambda``.
    """
    reports = sorted(reports, key=lambda r: -r.epsilon)
    if len(reports) < 4:
        raise FitError("need at least 4 reports")
    eps = np.array([r.epsilon for r in reports])
    if lam is None:
        deficit = np.array([r.deficit for r in reports])
    else:
        deficit = np.array([r.s_hl - r.a_at(lam) for r in reports])
    if np.any(deficit <= 0):
        raise FitError(f"nonpositive deficit in the sweep: {deficit.tolist()}")
    name, power, logf = model_rate(N)
    factor = logf(eps)
    if np.any(factor <= 0):
        raise FitError("|ln eps| vanishes on the sweep")
    x = np.log(eps)
    y_raw = np.log(deficit)
    y = y_raw - np.log(factor)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    raw_slope = float(np.polyfit(x, y_raw, 1)[0])
    ratios = deficit / (eps**power * factor)
    return FitResult(
        exponent=float(slope),
        log_slope=raw_slope,
        r_squared=r2,
        model=name,
        constant=float(math.exp(icpt)),
        ratios=tuple(float(v) for v in ratios),
    )


def lambda_star_estimate(N: int, mu: float, domain: GridDomain, eps_grid, lambda_grid, delta: float | None = None) -> float:
    """Smallest grid ``lambda`` for which ``min_eps A_eps < S_{H,L}``.

    Only ``N = 3`` is meaningful here (for ``N >= 4`` every positive
    ``lambda`` qualifies for small enough ``eps``).
    """
    if N != 3 or domain.dim != 3:
        raise DomainError("the lambda* estimate is defined for N = 3")
    if delta is None:
        delta = _largest_delta(domain)
    reports = bubble_scan(domain, mu, 0.0, eps_grid, delta)
    s_hl = sharp_constants(N, mu).nonlocal_S_HL
    lams = sorted(float(v) for v in lambda_grid)
    ok = [min(r.a_at(lam) for r in reports) < s_hl for lam in lams]
    if not any(ok):
        raise NotFound("no lambda on the grid pushes A_eps below S_HL")
    first = ok.index(True)
    if not all(ok[first:]):
        # A_eps decreases in lambda, so this signals a bookkeeping error
        raise NotFound("qualifying lambdas do not form an up-set")
    return lams[first]


def _largest_delta(domain: GridDomain) -> float:
    """``delta`` giving ``B_{2 delta}`` equal to the inscribed ball around the origin."""
    return inradius(domain) / 2.0


__all__ = [
    "CSV_COLUMNS",
    "BubbleReport",
    "BubbleSpec",
    "FitResult",
    "bubble_report",
    "bubble_scan",
    "cutoff",
    "inradius",
    "deficit_rate_fit",
    "default_eps_grid",
    "lambda_star_estimate",
    "make_bubble_field",
]
