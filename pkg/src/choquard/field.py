"""Tensor grids on boxes, Omega-masks and discrete calculus.

Nodes sit at ``x_k = -L + k h`` with ``h = 2L/(n - 1)``.  Fields are stored
on the full ``n**N`` array and vanish off the mask, so the zero extension
is implicit.  Gradient energy uses forward differences over every grid
edge; its Euler-Lagrange operator is the (2N+1)-point Dirichlet Laplacian
restricted to the mask.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft
import scipy.sparse as sp

from .errors import DimensionError, DomainError

MAGIC = b"CHQF"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class FullBox:
    kind = "full_box"

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class Ball:
    """Ball about the origin; ``radius=None`` means the inscribed ball of the box."""

    radius: float | None = None
    kind = "ball"

    def params(self) -> dict:
        return {"radius": self.radius}


@dataclass(frozen=True)
class StarMask:
    """Mask given by a vectorized predicate on node coordinates.

    ``predicate(points)`` receives an array of shape ``(..., N)`` and returns
    booleans.  ``star_shaped`` records whether the set is strictly star-shaped
    about the origin; it cannot be checked from the predicate.
    """

    predicate: Callable[[np.ndarray], np.ndarray]
    star_shaped: bool = True
    name: str = "custom"
    kind = "star_mask"

    def params(self) -> dict:
        return {"name": self.name, "star_shaped": self.star_shaped}


Shape = FullBox | Ball | StarMask


def parse_shape(text: str | Shape | None) -> Shape:
    """``"full_box"``, ``"ball"`` (inscribed), ``"ball:R"`` or an existing shape object."""
    if text is None:
        return FullBox()
    if not isinstance(text, str):
        return text
    kind, _, arg = text.partition(":")
    if kind in ("full_box", "box"):
        return FullBox()
    if kind == "ball":
        return Ball(float(arg)) if arg else Ball()
    raise DomainError(f"unknown shape {text!r}")


@dataclass(frozen=True)
class BoundaryFaces:
    """Faces between a masked node and an unmasked neighbour.

    ``node`` is the flat index of the masked node, ``axis`` the normal
    direction and ``sign`` (+1/-1) the orientation of the outward normal.
    """

    node: np.ndarray
    axis: np.ndarray
    sign: np.ndarray
    area: float

    def __len__(self) -> int:
        return len(self.node)


class GridDomain:
    """Uniform tensor grid on ``[-L, L]^N`` with an Omega-membership mask."""

    def __init__(self, dim: int, half_width: float, n: int, mask: np.ndarray,
                 shape: Shape = FullBox(), star_shaped: bool = True):
        self.dim = int(dim)
        self.half_width = float(half_width)
        self.n = int(n)
        self.h = 2.0 * self.half_width / (self.n - 1)
        mask = np.ascontiguousarray(mask, dtype=bool)
        mask.setflags(write=False)
        self.mask = mask
        self.shape = shape
        self.star_shaped = bool(star_shaped)
        self._validate()

    def _validate(self) -> None:
        if self.mask.shape != (self.n,) * self.dim:
            raise DomainError("mask shape does not match the grid")
        if not self.mask.any():
            raise DomainError("mask is empty")
        for ax in range(self.dim):
            edge = np.take(self.mask, [0, self.n - 1], axis=ax)
            if edge.any():
                raise DomainError("mask touches the box edge; a one-node margin is required")
        if self.mask.sum() < 2**self.dim:
            raise DomainError(f"degenerate mask: fewer than 2^N = {2**self.dim} nodes")

    def __repr__(self) -> str:
        return (f"GridDomain(dim={self.dim}, L={self.half_width}, n={self.n}, "
                f"shape={self.shape.kind}, nodes={self.node_count})")

    @property
    def grid_shape(self) -> tuple:
        return self.mask.shape

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def node_count(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def key(self) -> str:
        """Digest identifying the grid and mask; equal keys mean interchangeable domains."""
        d = hashlib.sha256()
        d.update(struct.pack("<iid", self.dim, self.n, self.half_width))
        d.update(np.packbits(self.mask).tobytes())
        return d.hexdigest()

    def same_as(self, other: GridDomain) -> bool:
        return self is other or self.key == other.key

    @cached_property
    def axis_coords(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.n)

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out.append(self.axis_coords.reshape(shape))
        return out

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``grid_shape + (N,)``."""
        return np.stack(np.broadcast_arrays(*self.coords()), axis=-1)

    def radius(self, center=None) -> np.ndarray:
        r2 = np.zeros(self.grid_shape)
        center = np.zeros(self.dim) if center is None else np.asarray(center, float)
        for ax, c in enumerate(self.coords()):
            r2 = r2 + (c - center[ax]) ** 2
        return np.sqrt(r2)

    @cached_property
    def boundary_faces(self) -> BoundaryFaces:
        nodes, axes, signs = [], [], []
        flat = np.arange(self.mask.size).reshape(self.grid_shape)
        for ax in range(self.dim):
            for sign in (1, -1):
                neighbour_in = np.roll(self.mask, -sign, axis=ax)
                hit = self.mask & ~neighbour_in
                idx = flat[hit]
                nodes.append(idx)
                axes.append(np.full(idx.size, ax))
                signs.append(np.full(idx.size, sign))
        node = np.concatenate(nodes)
        order = np.lexsort((np.concatenate(signs), np.concatenate(axes), node))
        return BoundaryFaces(
            node=node[order],
            axis=np.concatenate(axes)[order],
            sign=np.concatenate(signs)[order],
            area=self.h ** (self.dim - 1),
        )

    @cached_property
    def flat_mask_index(self) -> np.ndarray:
        """Flat indices of masked nodes in lexicographic order."""
        return np.flatnonzero(self.mask)

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse (2N+1)-point Dirichlet Laplacian on the masked nodes (scaled by 1/h^2)."""
        idx = self.flat_mask_index
        m = idx.size
        pos = -np.ones(self.mask.size, dtype=np.int64)
        pos[idx] = np.arange(m)
        rows, cols = [np.arange(m)], [np.arange(m)]
        vals = [np.full(m, 2.0 * self.dim)]
        strides = [int(np.prod(self.grid_shape[ax + 1:])) for ax in range(self.dim)]
        for s in strides:
            for nb in (idx + s, idx - s):
                j = pos[nb]
                ok = j >= 0
                rows.append(np.arange(m)[ok])
                cols.append(j[ok])
                vals.append(-np.ones(ok.sum()))
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
        )
        return (A.tocsr() / self.h**2).astype(float)

    def is_full_box(self) -> bool:
        inner = np.zeros(self.grid_shape, dtype=bool)
        inner[(slice(1, -1),) * self.dim] = True
        return bool(np.array_equal(inner, self.mask))

    def metadata(self) -> dict:
        meta = {
            "dim": self.dim,
            "half_width": self.half_width,
            "n": self.n,
            "h": self.h,
            "shape": self.shape.kind,
            "shape_params": self.shape.params(),
            "star_shaped": self.star_shaped,
            "node_count": self.node_count,
            "mask_sha256": self.key,
        }
        if isinstance(self.shape, StarMask):
            meta["mask_runs"] = _run_lengths(self.mask.ravel())
        return meta


def make_box_domain(N: int, L: float, n: int, shape: Shape | str | None = None) -> GridDomain:
    """Build a grid on ``[-L, L]^N`` with ``n`` points per axis and the given mask shape."""
    if int(N) != N or N < 1:
        raise DomainError("dimension must be a positive integer")
    if not L > 0:
        raise DomainError("half width must be positive")
    if n < 8:
        raise DomainError("at least 8 points per axis are required")
    shape = parse_shape(shape)
    axis = -L + (2.0 * L / (n - 1)) * np.arange(n)
    grids = np.meshgrid(*([axis] * N), indexing="ij")
    interior = np.zeros((n,) * N, dtype=bool)
    interior[(slice(1, -1),) * N] = True
    if isinstance(shape, FullBox):
        mask, star = interior, True
    elif isinstance(shape, Ball):
        if shape.radius is None:
            shape = Ball(float(L))
        if not 0 < shape.radius <= L:
            raise DomainError(f"ball radius {shape.radius} must lie in (0, L={L}]")
        r = np.sqrt(sum(g * g for g in grids))
        mask, star = (r < shape.radius) & interior, True
    elif isinstance(shape, StarMask):
        mask = np.asarray(shape.predicate(np.stack(grids, axis=-1)), dtype=bool)
        star = shape.star_shaped
    else:
        raise DomainError(f"unsupported shape {shape!r}")
    return GridDomain(N, L, n, mask, shape=shape, star_shaped=star)


class ScalarField:
    """Real node values on a :class:`GridDomain`, zero off the mask."""

    __array_priority__ = 1000

    def __init__(self, domain: GridDomain, values: np.ndarray, *, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.shape != domain.grid_shape:
            raise DimensionError(f"values of shape {values.shape} do not fit {domain!r}")
        if check:
            if not np.all(np.isfinite(values)):
                raise DomainError("field values must be finite")
            if np.any(values[~domain.mask] != 0.0):
                raise DomainError("field must vanish off the mask")
        self.domain = domain
        self.values = values

    @classmethod
    def masked(cls, domain: GridDomain, values) -> ScalarField:
        """Zero ``values`` off the mask (broadcasting scalars)."""
        v = np.broadcast_to(np.asarray(values, dtype=float), domain.grid_shape)
        return cls(domain, np.where(domain.mask, v, 0.0), check=False)

    @classmethod
    def zeros(cls, domain: GridDomain) -> ScalarField:
        return cls(domain, np.zeros(domain.grid_shape), check=False)

    @classmethod
    def from_function(cls, domain: GridDomain, fn: Callable[[np.ndarray], np.ndarray]) -> ScalarField:
        """Sample ``fn(points)`` (points shaped ``(..., N)``) on the masked nodes."""
        return cls.masked(domain, fn(domain.points()))

    @classmethod
    def random(cls, domain: GridDomain, rng: np.random.Generator, scale: float = 1.0) -> ScalarField:
        return cls.masked(domain, scale * rng.standard_normal(domain.grid_shape))

    def copy(self) -> ScalarField:
        return ScalarField(self.domain, self.values.copy(), check=False)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def _other(self, other):
        if isinstance(other, ScalarField):
            _same(self, other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.domain, self.values + self._other(other), check=False)

    def __sub__(self, other):
        return ScalarField(self.domain, self.values - self._other(other), check=False)

    def __neg__(self):
        return ScalarField(self.domain, -self.values, check=False)

    def __mul__(self, t: float):
        if isinstance(t, ScalarField):
            return NotImplemented
        return ScalarField(self.domain, float(t) * self.values, check=False)

    __rmul__ = __mul__

    def __truediv__(self, t: float):
        return ScalarField(self.domain, self.values / float(t), check=False)

    def __repr__(self) -> str:
        return f"ScalarField({self.domain!r}, max|u|={np.abs(self.values).max():.4g})"


def _same(u: ScalarField, v: ScalarField) -> None:
    if not u.domain.same_as(v.domain):
        raise DimensionError("fields live on different domains")


def grad_sq_integral(u: ScalarField) -> float:
    """``int |grad u|^2`` with forward differences and zero extension."""
    d = u.domain
    total = 0.0
    for ax in range(d.dim):
        diff = np.diff(u.values, axis=ax)
        total += float(np.sum(diff * diff))
    return total * d.h ** (d.dim - 2)


def grad_inner(u: ScalarField, v: ScalarField) -> float:
    """Bilinear form of :func:`grad_sq_integral`."""
    _same(u, v)
    d = u.domain
    total = 0.0
    for ax in range(d.dim):
        total += float(np.sum(np.diff(u.values, axis=ax) * np.diff(v.values, axis=ax)))
    return total * d.h ** (d.dim - 2)


def l2_sq_integral(u: ScalarField) -> float:
    return float(np.sum(u.values * u.values)) * u.domain.cell_volume


def inner(u: ScalarField, v: ScalarField) -> float:
    _same(u, v)
    return float(np.sum(u.values * v.values)) * u.domain.cell_volume


def lp_integral(u: ScalarField, p: float) -> float:
    """``int |u|^p``."""
    return float(np.sum(np.abs(u.values) ** p)) * u.domain.cell_volume


def apply_laplacian(u: ScalarField) -> ScalarField:
    """Discrete Dirichlet ``-Delta_h u`` on the mask; ``inner(Au, v) == grad_inner(u, v)``."""
    d = u.domain
    x = u.values
    out = 2.0 * d.dim * x
    for ax in range(d.dim):
        lo = [slice(None)] * d.dim
        hi = [slice(None)] * d.dim
        lo[ax], hi[ax] = slice(0, -1), slice(1, None)
        out[tuple(lo)] -= x[tuple(hi)]
        out[tuple(hi)] -= x[tuple(lo)]
    return ScalarField(d, np.where(d.mask, out / d.h**2, 0.0), check=False)


def interior_grad_sq_integral(u: ScalarField) -> float:
    """``int |grad u|^2`` over edges with both ends in the mask.

    This is the gradient energy of the restriction of ``u`` to the domain,
    ignoring the jump to zero across the boundary.
    """
    d = u.domain
    total = 0.0
    for ax in range(d.dim):
        both = d.mask[_part(d.dim, ax, False)] & d.mask[_part(d.dim, ax, True)]
        diff = np.diff(u.values, axis=ax)
        total += float(np.sum(np.where(both, diff * diff, 0.0)))
    return total * d.h ** (d.dim - 2)


def _part(dim: int, ax: int, upper: bool) -> tuple:
    sl = [slice(None)] * dim
    sl[ax] = slice(1, None) if upper else slice(0, -1)
    return tuple(sl)


def _inside_gradient(u: ScalarField) -> np.ndarray:
    """Nodal gradient averaging the one-sided differences that stay in the mask."""
    d = u.domain
    out = np.zeros((d.dim,) + d.grid_shape)
    for ax in range(d.dim):
        lo, hi = _part(d.dim, ax, False), _part(d.dim, ax, True)
        both = d.mask[lo] & d.mask[hi]
        diff = np.where(both, np.diff(u.values, axis=ax) / d.h, 0.0)
        acc = np.zeros(d.grid_shape)
        cnt = np.zeros(d.grid_shape)
        acc[lo] += diff
        cnt[lo] += both
        acc[hi] += diff
        cnt[hi] += both
        out[ax] = np.divide(acc, cnt, out=np.zeros_like(acc), where=cnt > 0)
    return out


def boundary_weighted_grad_sq(u: ScalarField, trace: str = "dirichlet") -> float:
    """``int_{dOmega} (x . nu) |grad u|^2 ds`` over the staircase boundary.

    ``trace="dirichlet"``: ``u`` vanishes off the mask, the tangential
    derivative is zero and each face contributes
    ``(x_face . nu) (u_p / h)^2 h^{N-1}``.

    ``trace="free"``: ``u`` is read as the restriction of a smooth function,
    ``|grad u|^2`` at the boundary node comes from in-mask differences and
    the face sits at the node.
    """
    if trace not in ("dirichlet", "free"):
        raise ValueError(f"unknown trace mode {trace!r}")
    d = u.domain
    faces = d.boundary_faces
    if len(faces) == 0:
        return 0.0
    coords = np.unravel_index(faces.node, d.grid_shape)
    x_axis = np.choose(faces.axis, [d.axis_coords[c] for c in coords])
    if trace == "free":
        g = _inside_gradient(u).reshape(d.dim, -1)[:, faces.node]
        return float(np.sum(faces.sign * x_axis * np.sum(g * g, axis=0))) * faces.area
    vals = u.values.ravel()[faces.node]
    if not np.any(vals):
        return 0.0
    # face midpoint x_p + sign*h/2 along the normal
    x_dot_nu = faces.sign * x_axis + 0.5 * d.h
    return float(np.sum(x_dot_nu * (vals / d.h) ** 2)) * faces.area


# -- Dirichlet solves ---------------------------------------------------------


class DirichletSolver:
    """Solve ``-Delta_h w = f`` on the mask.

    The full box uses the exact type-I sine transform; other masks use
    algebraic-multigrid preconditioned conjugate gradients.
    """

    def __init__(self, domain: GridDomain, rtol: float = 1e-10):
        self.domain = domain
        self.rtol = rtol
        self._box = domain.is_full_box()
        if self._box:
            m = domain.n - 2
            k = np.arange(1, m + 1)
            lam1 = (2.0 - 2.0 * np.cos(np.pi * k / (m + 1))) / domain.h**2
            sym = np.zeros((m,) * domain.dim)
            for ax in range(domain.dim):
                shape = [1] * domain.dim
                shape[ax] = m
                sym = sym + lam1.reshape(shape)
            self._symbol = sym
        else:
            import pyamg

            self._A = domain.laplacian_matrix
            self._ml = pyamg.smoothed_aggregation_solver(self._A.tocsr())

    def solve(self, f: ScalarField) -> ScalarField:
        d = self.domain
        if self._box:
            inner_slice = (slice(1, -1),) * d.dim
            rhs = f.values[inner_slice]
            coef = scipy.fft.dstn(rhs, type=1, norm="ortho")
            w = scipy.fft.idstn(coef / self._symbol, type=1, norm="ortho")
            out = np.zeros(d.grid_shape)
            out[inner_slice] = w
            return ScalarField(d, out, check=False)
        b = f.values.ravel()[d.flat_mask_index]
        if not np.any(b):
            return ScalarField.zeros(d)
        x = self._ml.solve(b, tol=self.rtol, accel="cg", maxiter=500)
        out = np.zeros(d.mask.size)
        out[d.flat_mask_index] = x
        return ScalarField(d, out.reshape(d.grid_shape), check=False)


_SOLVERS: dict[str, DirichletSolver] = {}


def dirichlet_solver(domain: GridDomain) -> DirichletSolver:
    """Per-domain cached solver."""
    s = _SOLVERS.get(domain.key)
    if s is None:
        if len(_SOLVERS) > 8:
            _SOLVERS.clear()
        s = _SOLVERS[domain.key] = DirichletSolver(domain)
    return s


def dual_norm(g: ScalarField) -> float:
    """H^{-1} norm ``sqrt(<g, (-Delta_h)^{-1} g>)`` of an L^2-represented functional."""
    w = dirichlet_solver(g.domain).solve(g)
    return math.sqrt(max(inner(g, w), 0.0))


# -- snapshot files -----------------------------------------------------------


def _run_lengths(bits: np.ndarray) -> list[list[int]]:
    idx = np.flatnonzero(np.diff(np.concatenate(([0], bits.astype(np.int8), [0]))))
    return [[int(a), int(b - a)] for a, b in zip(idx[::2], idx[1::2])]


def _mask_from_runs(size: int, runs) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    for start, length in runs:
        out[start:start + length] = True
    return out


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_snapshot(path: str | Path, u: ScalarField, extra: dict | None = None) -> Path:
    """Write the binary snapshot and its JSON sidecar; returns the sidecar path."""
    d = u.domain
    path = Path(path)
    header = MAGIC + struct.pack("<II", SNAPSHOT_VERSION, d.dim)
    header += struct.pack(f"<{d.dim}I", *d.grid_shape) + struct.pack("<d", d.half_width)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    meta = d.metadata()
    if extra:
        meta["extra"] = extra
    side = sidecar_path(path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def read_snapshot(path: str | Path) -> ScalarField:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise DomainError(f"{path} is not a field snapshot")
    version, dim = struct.unpack_from("<II", raw, 4)
    if version != SNAPSHOT_VERSION:
        raise DomainError(f"unsupported snapshot version {version}")
    off = 12
    shape = struct.unpack_from(f"<{dim}I", raw, off)
    off += 4 * dim
    (L,) = struct.unpack_from("<d", raw, off)
    off += 8
    values = np.frombuffer(raw, dtype="<f8", offset=off).astype(float).reshape(shape)
    if len(set(shape)) != 1:
        raise DomainError("only cubic grids are supported")
    n = shape[0]
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {"shape": "full_box", "shape_params": {}}
    kind = meta.get("shape", "full_box")
    params = meta.get("shape_params", {})
    if kind == "full_box":
        domain = make_box_domain(dim, L, n, FullBox())
    elif kind == "ball":
        domain = make_box_domain(dim, L, n, Ball(float(params["radius"])))
    else:
        mask = _mask_from_runs(n**dim, meta["mask_runs"]).reshape(shape)
        star = bool(params.get("star_shaped", meta.get("star_shaped", False)))
        stored = StarMask(lambda p, m=mask: m, star_shaped=star, name=params.get("name", "custom"))
        domain = GridDomain(dim, L, n, mask, shape=stored, star_shaped=star)
    return ScalarField(domain, values)
