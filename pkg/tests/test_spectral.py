import math

import numpy as np
import pytest

from choquard import field as fm
from choquard.errors import DomainError
from choquard.field import ScalarField, make_box_domain
from choquard.spectral import box_eigenvalue, dirichlet_eigenpairs, project_split


@pytest.fixture(scope="module")
def unit_box():
    return dirichlet_eigenpairs(make_box_domain(3, 0.5, 33), 10)


@pytest.fixture(scope="module")
def small_ball():
    return dirichlet_eigenpairs(make_box_domain(3, 1.0, 15, "ball"), 8)


def test_first_eigenvalue_unit_box(unit_box):
    # [DERIVED] continuum 3 pi^2, O(h^2) discretization
    assert abs(unit_box.eigenvalues[0] - 3 * math.pi**2) / (3 * math.pi**2) < 0.02


def test_box_values_match_discrete_formula(unit_box):
    # [DERIVED] discrete separable eigenvalues, multiplicities of the (2,1,1) and (2,2,1) classes
    expect = sorted(
        box_eigenvalue(k, 33, 0.5) for k in [(1, 1, 1)] + [(2, 1, 1)] * 3 + [(2, 2, 1)] * 3 + [(3, 1, 1)] * 3
    )
    assert np.allclose(unit_box.eigenvalues, expect, rtol=1e-12)


def test_distinct_mode_order_strictly_increasing():
    # [DERIVED] (1,1,1) < (2,1,1) < (2,2,1) < (3,1,1) analytically
    vals = [box_eigenvalue(k, 33, 0.5) for k in [(1, 1, 1), (2, 1, 1), (2, 2, 1), (3, 1, 1)]]
    assert all(a < b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("basis", ["unit_box", "small_ball"])
def test_orthonormal_and_residual(basis, request):
    b = request.getfixturevalue(basis)
    G = np.array([[fm.inner(a, c) for c in b.eigenfields] for a in b.eigenfields])
    assert np.abs(G - np.eye(b.count)).max() < 1e-10
    assert b.residuals.max() < 1e-8
    assert np.all(np.diff(b.eigenvalues) >= -1e-9)


@pytest.mark.parametrize("basis", ["unit_box", "small_ball"])
def test_first_mode_positive(basis, request):
    # [TRIVIAL] Perron vector of an M-matrix
    e1 = request.getfixturevalue(basis).eigenfields[0]
    d = e1.domain
    assert np.all(e1.values[d.mask] > 0)


def test_ball_sparse_path_matches_dense():
    d = make_box_domain(3, 1.0, 21, "ball")  # above the dense limit
    b = dirichlet_eigenpairs(d, 4)
    A = d.laplacian_matrix
    for lam, e in zip(b.eigenvalues, b.eigenfields):
        v = e.values.ravel()[d.flat_mask_index]
        assert np.linalg.norm(A @ v - lam * v) < 1e-8 * lam * np.linalg.norm(v)


def test_k_bounds():
    d = make_box_domain(3, 1.0, 9)
    with pytest.raises(DomainError):
        dirichlet_eigenpairs(d, 0)


def test_project_split_cases(small_ball):
    e1, e2 = small_ball.eigenfields[:2]
    y, z = project_split(e1, small_ball, 1)
    assert np.abs(y.values - e1.values).max() < 1e-12 and np.abs(z.values).max() < 1e-12
    y, z = project_split(e1 + e2, small_ball, 1)
    assert np.abs(y.values - e1.values).max() < 1e-12
    assert np.abs(z.values - e2.values).max() < 1e-12
    u = ScalarField.random(e1.domain, np.random.default_rng(0))
    y, z = project_split(u, small_ball, 3)
    # z is defined as u - y, so the sum reproduces u up to one rounding per node
    assert np.abs((y + z).values - u.values).max() <= 4 * np.finfo(float).eps * np.abs(u.values).max()
    assert max(abs(fm.inner(z, e)) for e in small_ball.eigenfields[:3]) < 1e-12


def test_rayleigh_bounds_on_splits(small_ball):
    # Y_j: Q <= lambda_j;  E_{j+1} (orthogonal to Y_j): Q >= lambda_{j+1}
    rng = np.random.default_rng(5)
    lam = small_ball.eigenvalues
    for j in (1, 2, 4):
        c = rng.standard_normal(j)
        y = small_ball.combine(np.concatenate([c, np.zeros(small_ball.count - j)]))
        assert fm.grad_sq_integral(y) / fm.l2_sq_integral(y) <= lam[j - 1] * (1 + 1e-8)
        u = ScalarField.random(y.domain, rng)
        _, z = project_split(u, small_ball, j)
        assert fm.grad_sq_integral(z) / fm.l2_sq_integral(z) >= lam[j] * (1 - 1e-8)
