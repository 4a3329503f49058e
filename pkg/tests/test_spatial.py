import numpy as np
import pytest

from dgcert import (
    Coefficient,
    FeFunction,
    SpaceHierarchy,
    SpatialOperators,
    refine,
    space_from_points,
    subspace,
    superspace,
    uniform_space,
)
from dgcert.spatial import gauss01, prolong_values, restrict_functional


# --- dense quadrature oracle, assembled from scratch -----------------------

def dense_mass_stiffness(space, coeff, npts=10):
    """Independent dense assembly of M and K by per-element Gauss quadrature."""
    n = space.dim
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    s, w = gauss01(npts)
    verts = space.vertices
    for e in range(space.n_elements):
        xl, xr = verts[e], verts[e + 1]
        h = xr - xl
        x = xl + h * s
        a = coeff(x)
        lam = (x - xl) / h
        # local dofs: global interior indices e-1 (left vertex), e (right vertex)
        for loc_i, gi in ((0, e - 1), (1, e)):
            if not 0 <= gi < n:
                continue
            phi_i = (1 - lam) if loc_i == 0 else lam
            dphi_i = (-1 / h) if loc_i == 0 else (1 / h)
            for loc_j, gj in ((0, e - 1), (1, e)):
                if not 0 <= gj < n:
                    continue
                phi_j = (1 - lam) if loc_j == 0 else lam
                dphi_j = (-1 / h) if loc_j == 0 else (1 / h)
                M[gi, gj] += h * np.dot(w, phi_i * phi_j)
                K[gi, gj] += h * np.dot(w, a * dphi_i * dphi_j)
    return M, K


def dense_load(space, g, npts=10, extra_breaks=()):
    """<g, phi_i> by Gauss quadrature, splitting at any extra breakpoints."""
    pieces = np.unique(np.concatenate((space.vertices, np.asarray(extra_breaks))))
    s, w = gauss01(npts)
    load = np.zeros(space.dim)
    for i in range(space.dim):
        e = np.zeros(space.dim)
        e[i] = 1.0
        phi = FeFunction(space, e)
        for xl, xr in zip(pieces[:-1], pieces[1:]):
            x = xl + (xr - xl) * s
            load[i] += (xr - xl) * np.dot(w, g(x) * phi(x))
    return load


# --- meshes -----------------------------------------------------------------

def test_superspace_subspace_examples(hier):
    A = space_from_points(hier, [0.25, 0.5])
    B = space_from_points(hier, [0.5, 0.75])
    nested_coarse = space_from_points(hier, [0.5])
    assert superspace(A, A) is A
    assert subspace(A, A) is A
    assert np.allclose(superspace(nested_coarse, A).vertices, [0, 0.25, 0.5, 1])
    assert np.allclose(subspace(nested_coarse, A).vertices, [0, 0.5, 1])
    assert np.allclose(superspace(A, B).vertices, [0, 0.25, 0.5, 0.75, 1])
    assert np.allclose(subspace(A, B).vertices, [0, 0.5, 1])


def test_space_dim_ordering(hier):
    A = space_from_points(hier, [0.25, 0.5])
    B = space_from_points(hier, [0.5, 0.75])
    lo, hi = subspace(A, B), superspace(A, B)
    assert lo.dim <= min(A.dim, B.dim) <= max(A.dim, B.dim) <= hi.dim


def test_containment_roundtrip(hier):
    # interpolating any basis function of the smaller space into the larger
    # and back reproduces it exactly
    A = space_from_points(hier, [0.25, 0.5])
    B = space_from_points(hier, [0.5, 0.75])
    hi = superspace(A, B)
    for sp in (A, B, subspace(A, B)):
        for i in range(sp.dim):
            e = np.zeros(sp.dim)
            e[i] = 1.0
            up = prolong_values(sp, hi, e)
            back = np.interp(sp.vertices[1:-1], hi.vertices,
                             np.concatenate(([0], up, [0])))
            assert np.allclose(back, e, atol=1e-14)


def test_invalid_meshes_rejected(hier):
    with pytest.raises(ValueError, match="not a subtree"):
        space_from_points(hier, [0.75])
    with pytest.raises(ValueError, match="dyadic"):
        space_from_points(hier, [1 / 3])
    other = SpaceHierarchy(max_depth=10)
    with pytest.raises(ValueError, match="incompatible mesh trees"):
        superspace(uniform_space(hier, 2), uniform_space(other, 2))


def test_refine_and_prolong_exact(hier):
    V = space_from_points(hier, [0.25, 0.5])
    W = refine(V, 2)
    assert W.n_elements == 4 * V.n_elements
    rng = np.random.default_rng(0)
    c = rng.standard_normal(V.dim)
    up = prolong_values(V, W, c)
    x = rng.uniform(0, 1, 50)
    assert np.allclose(FeFunction(W, up)(x), FeFunction(V, c)(x), atol=1e-14)


def test_restrict_is_adjoint_of_prolong(hier):
    V = space_from_points(hier, [0.25, 0.5])
    W = refine(V, 3)
    rng = np.random.default_rng(1)
    c = rng.standard_normal(V.dim)
    w = rng.standard_normal(W.dim)
    lhs = np.dot(prolong_values(V, W, c), w)
    rhs = np.dot(c, restrict_functional(V, W, w))
    assert lhs == pytest.approx(rhs, rel=1e-13)


# --- coefficient --------------------------------------------------------------

def test_coefficient_element_averages_exact(hier):
    coeff = Coefficient(values=[1.0, 4.0, 2.0], breaks=[0.25, 0.625])
    V = uniform_space(hier, 1)  # elements (0,.5), (.5,1)
    avg = coeff.element_averages(V.vertices)
    # (0,.5): 1 on (0,.25), 4 on (.25,.5) -> 2.5 ; (.5,1): 4 on (.5,.625), 2 after
    assert avg == pytest.approx([2.5, (4 * 0.125 + 2 * 0.375) / 0.5])
    assert coeff.aligned_with(uniform_space(hier, 4))
    assert not coeff.aligned_with(uniform_space(hier, 2))  # 0.625 not a vertex


# --- projections and operators ------------------------------------------------

def test_l2_project_examples(hier, unit_coeff):
    W = space_from_points(hier, [0.5])
    ops = SpatialOperators.get(W, unit_coeff)
    # dense quadrature oracle for g = x(1-x)
    M, _ = dense_mass_stiffness(W, unit_coeff)
    expected = np.linalg.solve(M, dense_load(W, lambda x: x * (1 - x)))
    got = ops.l2_project(lambda x: x * (1 - x))
    assert np.allclose(got, expected, atol=1e-13)
    assert got == pytest.approx([0.3125])  # 1x1 mass system solved by hand

    # idempotence on members and the zero function
    V = space_from_points(hier, [0.25, 0.5, 0.75])
    opsV = SpatialOperators.get(V, unit_coeff)
    rng = np.random.default_rng(3)
    member = FeFunction(V, rng.standard_normal(V.dim))
    assert np.allclose(opsV.l2_project(member), member.values, atol=1e-12)
    assert np.allclose(opsV.l2_project(lambda x: 0 * x), 0.0)


def test_projection_linearity(hier, unit_coeff):
    V = uniform_space(hier, 3)
    ops = SpatialOperators.get(V, unit_coeff)
    g1 = lambda x: np.sin(3 * x)
    g2 = lambda x: x**2 * (1 - x)
    a, b = 2.25, -0.75
    combo = lambda x: a * g1(x) + b * g2(x)
    assert np.allclose(ops.l2_project(combo),
                       a * ops.l2_project(g1) + b * ops.l2_project(g2), atol=1e-12)
    r1 = ops.ritz_project(g1, w_prime=lambda x: 3 * np.cos(3 * x))
    r2 = ops.ritz_project(g2, w_prime=lambda x: 2 * x - 3 * x**2)
    rc = ops.ritz_project(combo, w_prime=lambda x: a * 3 * np.cos(3 * x) + b * (2 * x - 3 * x**2))
    assert np.allclose(rc, a * r1 + b * r2, atol=1e-12)


def test_discrete_elliptic_apply_against_dense_oracle(hier, unit_coeff):
    V = uniform_space(hier, 2)  # h = 1/4
    ops = SpatialOperators.get(V, unit_coeff)
    w = np.sin(np.pi * V.vertices[1:-1])
    M, K = dense_mass_stiffness(V, unit_coeff)
    expected = np.linalg.solve(M, K @ w)
    assert np.allclose(ops.elliptic_apply(w), expected, atol=1e-12)
    assert np.allclose(ops.elliptic_apply(np.zeros(V.dim)), 0.0)


def test_elliptic_roundtrip(hier, unit_coeff):
    V = uniform_space(hier, 4)
    ops = SpatialOperators.get(V, unit_coeff)
    rng = np.random.default_rng(5)
    w = rng.standard_normal(V.dim)
    assert np.allclose(ops.elliptic_solve(ops.elliptic_apply(w)), w, atol=1e-10)
    with pytest.raises(ValueError, match="dimension mismatch"):
        ops.elliptic_apply(np.zeros(V.dim + 1))


def test_ritz_projection_examples(hier, unit_coeff):
    V = space_from_points(hier, [0.25, 0.5, 0.75])
    ops = SpatialOperators.get(V, unit_coeff)
    rng = np.random.default_rng(6)
    member = FeFunction(V, rng.standard_normal(V.dim))
    assert np.allclose(ops.ritz_project(member), member.values, atol=1e-12)
    # 1D with a == 1: Ritz projection == nodal interpolant
    got = ops.ritz_project(lambda x: x * (1 - x), w_prime=lambda x: 1 - 2 * x)
    interp = V.vertices[1:-1] * (1 - V.vertices[1:-1])
    assert np.allclose(got, interp, atol=1e-12)
    assert np.allclose(ops.ritz_project(lambda x: 0 * x, w_prime=lambda x: 0 * x), 0.0)


def test_ritz_galerkin_orthogonality(hier):
    coeff = Coefficient(values=[1.0, 3.0], breaks=[0.5])
    V = uniform_space(hier, 2)
    W = refine(V, 3)
    rng = np.random.default_rng(8)
    w = FeFunction(W, rng.standard_normal(W.dim))
    opsV = SpatialOperators.get(V, coeff)
    proj = opsV.ritz_project(w)
    # a(w - Pw, phi_i) = 0 for every coarse hat
    resid = opsV.energy_pair(w) - opsV.stiffness_matvec(proj)
    assert np.abs(resid).max() <= 1e-12 * (1 + np.abs(w.values).max())


def test_stiffness_coercivity(hier):
    coeff = Coefficient(values=[2.0, 0.5, 1.5], breaks=[0.25, 0.75])
    V = uniform_space(hier, 4)
    ops = SpatialOperators.get(V, coeff)
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.standard_normal(V.dim)
        assert ops.energy_sq(x) >= coeff.vmin * ops.x_norm_sq(x) - 1e-12


def test_load_from_function_exact_across_meshes(hier, unit_coeff):
    A = space_from_points(hier, [0.25, 0.5])
    B = space_from_points(hier, [0.5, 0.75])
    rng = np.random.default_rng(12)
    g = FeFunction(B, rng.standard_normal(B.dim))
    ops = SpatialOperators.get(A, unit_coeff)
    got = ops.load_from_function(g)
    expected = dense_load(A, g, npts=6, extra_breaks=B.vertices)
    assert np.allclose(got, expected, atol=1e-14)
