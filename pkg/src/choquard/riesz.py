"""Riesz potential ``f -> int f(y) |x - y|^{-mu} dy`` on grid fields.

The grid kernel is ``|d h|^{-mu}`` at nonzero offsets ``d`` and, at the zero
offset, the mean of ``|x|^{-mu}`` over the ball whose volume is one cell.
:func:`apply` evaluates the discrete convolution with zero-padded real FFTs
(linear, not circular); :func:`apply_direct` is the O(M^2) reference sum
with the same kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from . import _core
from .errors import DimensionError, DomainError, ResourceError
from .field import GridDomain, ScalarField

#: default cap on the number of padded grid points per plan
MAX_PADDED_VOLUME = 1 << 26
#: guard on masked nodes for the O(M^2) direct path
MAX_DIRECT_NODES = 100_000


def unit_ball_volume(N: int) -> float:
    return math.pi ** (N / 2.0) / math.gamma(N / 2.0 + 1.0)


def self_cell_value(N: int, mu: float, h: float) -> float:
    """Mean of ``|x|^{-mu}`` over the ball of volume ``h^N``."""
    r_eff = (h**N / unit_ball_volume(N)) ** (1.0 / N)
    return N / (N - mu) * r_eff ** (-mu)


def _check_mu(domain: GridDomain, mu: float) -> None:
    if not 0.0 < mu < domain.dim:
        raise DomainError(f"mu must lie in (0, N) = (0, {domain.dim}), got {mu!r}")


def padded_length(n: int) -> int:
    return scipy.fft.next_fast_len(2 * n - 1, real=True)


def _offset_distance(offsets_per_axis: list[np.ndarray], h: float) -> np.ndarray:
    r2 = 0.0
    N = len(offsets_per_axis)
    for ax, d in enumerate(offsets_per_axis):
        shape = [1] * N
        shape[ax] = d.size
        r2 = r2 + (h * d.reshape(shape).astype(float)) ** 2
    return np.sqrt(r2)


def kernel_samples(N: int, mu: float, h: float, offsets_per_axis: list[np.ndarray]) -> np.ndarray:
    r = _offset_distance(offsets_per_axis, h)
    with np.errstate(divide="ignore"):
        k = r ** (-mu)
    k[r == 0] = self_cell_value(N, mu, h)
    return k


@dataclass(frozen=True, eq=False)
class RieszPlan:
    domain: GridDomain
    mu: float
    padded_extent: tuple
    kernel_spectrum: np.ndarray = field(repr=False)
    self_cell_value: float

    def __post_init__(self):
        self.kernel_spectrum.setflags(write=False)


def plan(domain: GridDomain, mu: float, max_padded_volume: int = MAX_PADDED_VOLUME) -> RieszPlan:
    """Precompute the padded kernel spectrum for ``domain`` and ``mu``."""
    _check_mu(domain, mu)
    n, N = domain.n, domain.dim
    P = padded_length(n)
    if P**N > max_padded_volume:
        raise ResourceError(f"padded grid {P}^{N} exceeds the cap of {max_padded_volume} points")
    wrapped = np.arange(P)
    wrapped = np.where(wrapped <= P // 2, wrapped, wrapped - P)
    k = kernel_samples(N, mu, domain.h, [wrapped] * N)
    spectrum = scipy.fft.rfftn(k)
    return RieszPlan(
        domain=domain,
        mu=float(mu),
        padded_extent=(P,) * N,
        kernel_spectrum=spectrum,
        self_cell_value=self_cell_value(N, mu, domain.h),
    )


def _convolve_array(p: RieszPlan, values: np.ndarray) -> np.ndarray:
    d = p.domain
    spec = scipy.fft.rfftn(values, s=p.padded_extent)
    spec *= p.kernel_spectrum
    full = scipy.fft.irfftn(spec, s=p.padded_extent)
    return full[(slice(0, d.n),) * d.dim] * d.cell_volume


def apply(p: RieszPlan, f: ScalarField) -> ScalarField:
    """Riesz potential of ``f`` restricted to the mask."""
    if not p.domain.same_as(f.domain):
        raise DimensionError("field and plan live on different domains")
    if f.is_zero():
        return ScalarField.zeros(p.domain)
    g = _convolve_array(p, f.values)
    return ScalarField(p.domain, np.where(p.domain.mask, g, 0.0), check=False)


def potential(p: RieszPlan, values: np.ndarray) -> np.ndarray:
    """Riesz potential of raw node values on every grid node (no masking)."""
    if values.shape != p.domain.grid_shape:
        raise DimensionError("values do not match the plan's grid")
    return _convolve_array(p, values)


def kernel_table(domain: GridDomain, mu: float) -> np.ndarray:
    """Kernel at every offset in ``[-(n-1), n-1]^N`` (index ``d + n - 1``)."""
    d = np.arange(-(domain.n - 1), domain.n)
    return kernel_samples(domain.dim, mu, domain.h, [d] * domain.dim)


def apply_direct(domain: GridDomain, mu: float, f: ScalarField, backend: str | None = None) -> ScalarField:
    """Reference O(M^2) evaluation of :func:`apply` by explicit summation."""
    _check_mu(domain, mu)
    if not domain.same_as(f.domain):
        raise DimensionError("field lives on a different domain")
    idx = domain.flat_mask_index
    if idx.size > MAX_DIRECT_NODES:
        raise ResourceError(f"{idx.size} masked nodes exceed the direct-summation guard")
    table = kernel_table(domain, mu).ravel()
    width = 2 * domain.n - 1
    strides = np.array([width ** (domain.dim - 1 - ax) for ax in range(domain.dim)], dtype=np.int64)
    nodes = np.stack(np.unravel_index(idx, domain.grid_shape), axis=1).astype(np.int64)
    code = np.ascontiguousarray(nodes @ strides)
    center = int((domain.n - 1) * strides.sum())
    kernel = _core.BACKENDS[backend] if backend else _core.direct_sum
    vals = np.ascontiguousarray(f.values.ravel()[idx])
    g = kernel(vals, code, table, center) * domain.cell_volume
    out = np.zeros(domain.mask.size)
    out[idx] = g
    return ScalarField(domain, out.reshape(domain.grid_shape), check=False)


def double_integral(p: RieszPlan, a: ScalarField, b: ScalarField) -> float:
    """``iint a(x) b(y) |x - y|^{-mu} dx dy`` as ``<a, apply(b)>``."""
    if not (p.domain.same_as(a.domain) and p.domain.same_as(b.domain)):
        raise DimensionError("fields and plan live on different domains")
    if a.is_zero() or b.is_zero():
        return 0.0
    g = _convolve_array(p, b.values)
    return float(np.sum(a.values * g)) * p.domain.cell_volume
