"""Sharp constants, critical exponents and the extremal profiles.

Closed forms use :func:`math.gamma`; the Sobolev constant is also obtained
by radial Gauss-Legendre quadrature of the explicit minimizer and the two
routes are required to agree.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DomainError

#: relative agreement demanded between closed form and quadrature
TWO_ROUTE_RTOL = 1e-6


def _check(N: int, mu: float | None = None) -> None:
    if int(N) != N or N < 3:
        raise DomainError(f"dimension must be an integer >= 3, got {N!r}")
    if mu is not None and not (0.0 < mu < N):
        raise DomainError(f"mu must lie in (0, N) = (0, {N}), got {mu!r}")


def sobolev_exponent(N: int) -> float:
    return 2.0 * N / (N - 2.0)


def upper_critical_exponent(N: int, mu: float) -> float:
    """The power 2_mu^* = (2N - mu)/(N - 2)."""
    return (2.0 * N - mu) / (N - 2.0)


def lower_critical_exponent(N: int, mu: float) -> float:
    return (2.0 * N - mu) / N


def ball_surface(N: int) -> float:
    """Area of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def hls_sharp_constant(N: int, mu: float) -> float:
    """Sharp Hardy-Littlewood-Sobolev constant C(N, mu) for t = r = 2N/(2N - mu)."""
    _check(N, mu)
    ratio = math.gamma(N / 2.0) / math.gamma(float(N))
    return (
        math.pi ** (mu / 2.0)
        * math.gamma(N / 2.0 - mu / 2.0)
        / math.gamma(N - mu / 2.0)
        * ratio ** (-1.0 + mu / N)
    )


def sobolev_closed_form(N: int) -> float:
    _check(N)
    return math.pi * N * (N - 2.0) * (math.gamma(N / 2.0) / math.gamma(float(N))) ** (2.0 / N)


def radial_integral(g, N: int, panels: int = 64, order: int = 16) -> float:
    """Integrate a radial function over R^N.

    ``g(r)`` is the radial profile; the integral is
    ``|S^{N-1}| * int_0^inf g(r) r^{N-1} dr`` evaluated after the substitution
    ``r = tan(theta)`` with a composite Gauss-Legendre rule on ``[0, pi/2)``.
    ``panels * order`` nodes are used (1024 by default).
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, math.pi / 2.0, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    theta = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    r = np.tan(theta)
    jac = 1.0 / np.cos(theta) ** 2
    return ball_surface(N) * float(np.sum(weights * g(r) * r ** (N - 1) * jac))


def _talenti_grad_sq_profile(N: int):
    amp = (N * (N - 2.0)) ** ((N - 2.0) / 4.0)

    def g(r):
        dU = -amp * (N - 2.0) * r * (1.0 + r * r) ** (-N / 2.0)
        return dU * dU

    return g


def sobolev_by_quadrature(N: int) -> float:
    """S from ``int |grad U|^2 = S^{N/2}`` by radial quadrature."""
    _check(N)
    return radial_integral(_talenti_grad_sq_profile(N), N) ** (2.0 / N)


@lru_cache(maxsize=None)
def best_sobolev_constant(N: int) -> float:
    closed = sobolev_closed_form(N)
    quad = sobolev_by_quadrature(N)
    if abs(closed - quad) > TWO_ROUTE_RTOL * closed:
        raise ConvergenceError(
            f"Sobolev constant routes disagree for N={N}: closed={closed!r} quadrature={quad!r}"
        )
    return closed


def best_nonlocal_constant(N: int, mu: float) -> float:
    """S_{H,L} = S / C(N, mu)^{(N-2)/(2N-mu)}."""
    c = hls_sharp_constant(N, mu)
    return best_sobolev_constant(N) / c ** ((N - 2.0) / (2.0 * N - mu))


def extremal_energy(N: int, mu: float) -> float:
    """Common value of ``int |grad U~|^2`` and the double integral of U~."""
    return best_nonlocal_constant(N, mu) ** ((2.0 * N - mu) / (N - mu + 2.0))


def level_coefficient(N: int, mu: float) -> float:
    """(N + 2 - mu)/(4N - 2mu), the factor in front of every ray-maximum level."""
    return (N + 2.0 - mu) / (4.0 * N - 2.0 * mu)


def level_exponent(N: int, mu: float) -> float:
    return (2.0 * N - mu) / (N + 2.0 - mu)


def threshold_level(N: int, mu: float) -> float:
    """Compactness threshold for Palais-Smale sequences."""
    return level_coefficient(N, mu) * best_nonlocal_constant(N, mu) ** level_exponent(N, mu)


@dataclass(frozen=True)
class SharpConstants:
    dim: int
    mu: float
    sobolev_exp: float
    upper_crit: float
    lower_crit: float
    hls_const: float
    sobolev_S: float
    nonlocal_S_HL: float
    ps_threshold: float

    def as_dict(self) -> dict:
        return {
            "dim": self.dim,
            "mu": self.mu,
            "sobolev_exp": self.sobolev_exp,
            "upper_crit": self.upper_crit,
            "lower_crit": self.lower_crit,
            "hls_const": self.hls_const,
            "sobolev_S": self.sobolev_S,
            "nonlocal_S_HL": self.nonlocal_S_HL,
            "ps_threshold": self.ps_threshold,
        }

    @property
    def power(self) -> float:
        """Exponent 2_mu^* applied to |u| inside the double integral."""
        return self.upper_crit

    @property
    def nl_exponent(self) -> float:
        """(N - 2)/(2N - mu): turns the double integral into ||u||_NL^2."""
        return (self.dim - 2.0) / (2.0 * self.dim - self.mu)


@lru_cache(maxsize=None)
def sharp_constants(N: int, mu: float) -> SharpConstants:
    """Cached, immutable bundle of every constant for ``(N, mu)``."""
    _check(N, mu)
    return SharpConstants(
        dim=int(N),
        mu=float(mu),
        sobolev_exp=sobolev_exponent(N),
        upper_crit=upper_critical_exponent(N, mu),
        lower_crit=lower_critical_exponent(N, mu),
        hls_const=hls_sharp_constant(N, mu),
        sobolev_S=best_sobolev_constant(N),
        nonlocal_S_HL=best_nonlocal_constant(N, mu),
        ps_threshold=threshold_level(N, mu),
    )


class Normalization(enum.Enum):
    SOBOLEV_U = "sobolev_U"
    NONLOCAL_TILDE_U = "nonlocal_tilde_U"


@dataclass(frozen=True)
class ExtremalProfile:
    """Talenti-type profile ``C (b / (b^2 + |x - a|^2))^{(N-2)/2}``.

    With ``b = 1`` and the ``sobolev_U`` normalization this is
    ``U(x) = [N(N-2)]^{(N-2)/4} (1 + |x|^2)^{-(N-2)/2}``; the general ``b``
    uses the dilation ``b^{-(N-2)/2} U((x - a)/b)`` that keeps every energy
    fixed.
    """

    dim: int
    mu: float
    center: tuple = field(default=())
    scale: float = 1.0
    normalization: Normalization = Normalization.SOBOLEV_U

    def __post_init__(self):
        _check(self.dim, self.mu)
        if not self.scale > 0:
            raise DomainError("scale b must be positive")
        center = tuple(float(c) for c in self.center) or (0.0,) * self.dim
        if len(center) != self.dim:
            raise DomainError("center has the wrong dimension")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    @property
    def prefactor(self) -> float:
        N, mu = self.dim, self.mu
        amp = (N * (N - 2.0)) ** ((N - 2.0) / 4.0)
        if self.normalization is Normalization.NONLOCAL_TILDE_U:
            S = best_sobolev_constant(N)
            C = hls_sharp_constant(N, mu)
            amp *= S ** ((N - mu) * (2.0 - N) / (4.0 * (N - mu + 2.0)))
            amp *= C ** ((2.0 - N) / (2.0 * (N - mu + 2.0)))
        return amp

    def radial(self, r):
        """Profile value as a function of the distance to the center."""
        N, b = self.dim, self.scale
        r = np.asarray(r, dtype=float)
        return self.prefactor * b ** (-(N - 2.0) / 2.0) * (1.0 + (r / b) ** 2) ** (-(N - 2.0) / 2.0)

    def radial_derivative(self, r):
        N, b = self.dim, self.scale
        r = np.asarray(r, dtype=float)
        return (
            -self.prefactor
            * (N - 2.0)
            * b ** (-(N - 2.0) / 2.0)
            * (r / b**2)
            * (1.0 + (r / b) ** 2) ** (-N / 2.0)
        )

    def grad_sq_integral(self) -> float:
        """``int |grad profile|^2`` over R^N by radial quadrature."""
        return radial_integral(lambda r: self.radial_derivative(r) ** 2, self.dim)


def extremal_value(profile: ExtremalProfile, x) -> float | np.ndarray:
    """Evaluate the profile at a point (last axis of ``x`` holds coordinates)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x - np.asarray(profile.center), axis=-1)
    out = profile.radial(r)
    return float(out) if np.ndim(out) == 0 else out
