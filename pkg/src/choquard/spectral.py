"""Dirichlet eigenpairs of the grid Laplacian and the Y_j / E_{j+1} splitting."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DomainError
from .field import GridDomain, ScalarField, dirichlet_solver, inner

log = logging.getLogger(__name__)

MAX_MODES = 64
DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EigenBasis:
    domain: GridDomain
    eigenvalues: np.ndarray
    eigenfields: tuple
    residuals: np.ndarray

    @property
    def count(self) -> int:
        return len(self.eigenfields)

    def coefficients(self, u: ScalarField, j: int | None = None) -> np.ndarray:
        j = self.count if j is None else j
        return np.array([inner(u, e) for e in self.eigenfields[:j]])

    def combine(self, coeffs) -> ScalarField:
        out = np.zeros(self.domain.grid_shape)
        for c, e in zip(coeffs, self.eigenfields):
            out += c * e.values
        return ScalarField(self.domain, out, check=False)


def _to_field(domain: GridDomain, vec: np.ndarray) -> ScalarField:
    out = np.zeros(domain.mask.size)
    out[domain.flat_mask_index] = vec
    return ScalarField(domain, out.reshape(domain.grid_shape), check=False)


def _sign_fix(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for i in range(V.shape[1]):
        col = V[:, i]
        big = np.flatnonzero(np.abs(col) > 1e-10 * np.abs(col).max())
        if col[big[0]] < 0:
            V[:, i] = -col
    return V


def dirichlet_eigenpairs(domain: GridDomain, k: int, seed: int = 0) -> EigenBasis:
    """Lowest ``k`` eigenpairs of the (2N+1)-point Dirichlet Laplacian on the mask.

    Eigenfields are L^2(Omega)-orthonormal with weight ``h^N`` and sign-fixed
    so that the first clearly nonzero node value is positive.
    """
    m = domain.node_count
    if not 1 <= k <= min(MAX_MODES, m):
        raise DomainError(f"k must lie in [1, {min(MAX_MODES, m)}], got {k}")
    A = domain.laplacian_matrix
    if domain.is_full_box() and m > DENSE_LIMIT:
        w, V = _box_modes(domain, k)
    elif m <= DENSE_LIMIT:
        w, V = scipy.linalg.eigh(A.toarray(), subset_by_index=(0, k - 1))
    else:
        solver = dirichlet_solver(domain)

        def opinv(x):
            f = _to_field(domain, np.asarray(x).ravel())
            return solver.solve(f).values.ravel()[domain.flat_mask_index]

        op = spla.LinearOperator((m, m), matvec=opinv, dtype=float)
        v0 = np.random.default_rng(seed).standard_normal(m)
        # a few extra Ritz vectors keep degenerate clusters intact at the cut
        nev = min(k + 4, m - 2)
        w, V = spla.eigsh(A, k=nev, sigma=0.0, which="LM", OPinv=op, v0=v0, tol=1e-13)
        Q, _ = np.linalg.qr(V)
        H = Q.T @ (A @ Q)
        w, Y = np.linalg.eigh(0.5 * (H + H.T))
        V = Q @ Y
        order = np.argsort(w)[:k]
        w, V = w[order], V[:, order]
    V = _sign_fix(V)
    # ties (within round-off) ordered by the sign-fixed vectors, lexicographically
    keys = [(round(float(lam), 9), tuple(np.round(V[:64, i], 12))) for i, lam in enumerate(w)]
    order = sorted(range(len(w)), key=lambda i: keys[i])[:k]
    w, V = w[order], V[:, order]
    resid = np.linalg.norm(A @ V - V * w, axis=0) / np.abs(w)
    if np.any(resid > RESIDUAL_TOL):
        raise ConvergenceError(f"eigen-residual {resid.max():.3e} exceeds {RESIDUAL_TOL}")
    scale = domain.cell_volume ** -0.5
    fields = tuple(_to_field(domain, scale * V[:, i]) for i in range(k))
    return EigenBasis(domain=domain, eigenvalues=np.asarray(w), eigenfields=fields, residuals=resid)


def _box_modes(domain: GridDomain, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact eigenpairs of the full-box operator: products of discrete sines.

    Multi-indices are enumerated in order of eigenvalue with a heap; a
    degenerate cluster straddling the cut is returned whole so the caller's
    tie-break picks from all of it.
    """
    n, N = domain.n, domain.dim
    kmax = n - 2
    i = np.arange(1, n - 1)
    mu1 = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, kmax + 1) / (n - 1))) / domain.h**2
    start = (1,) * N
    heap = [(float(N * mu1[0]), start)]
    seen = {start}
    modes: list[tuple[float, tuple]] = []
    while heap:
        lam, idx = heapq.heappop(heap)
        if len(modes) >= k and lam > modes[k - 1][0] * (1.0 + 1e-12):
            break
        modes.append((lam, idx))
        for ax in range(N):
            if idx[ax] < kmax:
                nxt = idx[:ax] + (idx[ax] + 1,) + idx[ax + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (float(sum(mu1[j - 1] for j in nxt)), nxt))
    cols = []
    for _, idx in modes:
        vec = np.ones(())
        for kk in idx:
            vec = np.multiply.outer(vec, np.sin(np.pi * kk * i / (n - 1)))
        cols.append(vec.ravel() / np.sqrt(((n - 1) / 2.0) ** N))
    w = np.array([lam for lam, _ in modes])
    V = np.stack(cols, axis=1)
    # keep k plus the rest of the cluster at the cut; the caller trims after tie-breaking
    return w, V


def project_split(u: ScalarField, basis: EigenBasis, j: int) -> tuple[ScalarField, ScalarField]:
    """Split ``u = y + z`` with ``y`` in span{e_1..e_j} and ``z`` L^2-orthogonal to it."""
    if not 0 <= j <= basis.count:
        raise IndexError(f"j={j} outside [0, {basis.count}]")
    y = basis.combine(basis.coefficients(u, j)) if j else ScalarField.zeros(u.domain)
    return y, u - y


def box_eigenvalue(modes, n: int, L: float) -> float:
    """Discrete eigenvalue of the full-box Laplacian for integer modes ``k_i >= 1``."""
    h = 2.0 * L / (n - 1)
    return float(sum((2.0 - 2.0 * np.cos(np.pi * k / (n - 1))) / h**2 for k in modes))
