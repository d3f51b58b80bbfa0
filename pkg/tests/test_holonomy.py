import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from microkin.body import BodyGrid
from microkin.errors import AffineConnectionNotSupported, PathOutsideGrid
from microkin.geometry import AffineConnection, levi_civita
from microkin.holonomy import (
    area_scaling_fit,
    convergence_order,
    covariant_derivative,
    defect_density_field,
    holonomy_map,
    loop_defect,
    parallel_transport,
    square_loop,
)
from microkin.placement import HOLONOMIC_FAMILIES, builtin_placement, random_placement
from microkin.pullback import material_connection, noslip_connection

CENTER = np.array([0.5, 0.5, 0.5])


def _uniform_linear(A, n=3, axis=0):
    c1 = np.zeros((3, 3, n))
    c1[..., axis] = A
    return AffineConnection(np.zeros((3, n)), c1)


def test_trivial_transport_is_identity():
    conn = AffineConnection.trivial(3)
    y0 = np.array([0.3, -1.0, 2.0])
    path = np.array([[0, 0, 0], [1, 0.5, 0], [0.2, 0.7, 1.0]])
    np.testing.assert_array_equal(parallel_transport(conn, path, y0), y0)


def test_matrix_exponential_transport():
    # |A L| ~ 0.6; the RK4 error grows like (|A L| / steps)^4
    A = np.array([[0.0, -0.5, 0.1], [0.5, 0.0, 0.2], [0.0, -0.2, -0.1]])
    L = 1.0
    y0 = np.array([1.0, 0.5, -0.2])
    y = parallel_transport(_uniform_linear(A), [[0, 0, 0], [L, 0, 0]], y0, steps=64)
    assert np.abs(y - expm(A * L) @ y0).max() <= 1e-10


def test_rk4_order_four():
    A = np.array([[0.0, -2.0, 0.0], [2.0, 0.0, 0.5], [0.0, -0.5, 0.0]])
    y0 = np.array([1.0, 0.0, 0.0])
    exact = expm(A * 2.0) @ y0
    steps = np.array([16, 32, 64, 128])
    errs = [np.abs(parallel_transport(_uniform_linear(A), [[0, 0, 0], [2.0, 0, 0]], y0, s) - exact).max() for s in steps]
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert abs(slope + 4) <= 0.3


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_constant_affine_part(a, b):
    C0 = np.array([[1.0, 0.5, 0.0], [0.0, -1.0, 2.0], [0.3, 0.0, 1.0]])
    conn = AffineConnection(C0, np.zeros((3, 3, 3)))
    path = np.array([[0.0, 0.0, 0.0], [a, b, 0.0], [a, b, 1.0]])
    y0 = np.array([0.1, 0.2, 0.3])
    np.testing.assert_allclose(parallel_transport(conn, path, y0, 8), y0 + C0 @ (path[-1] - path[0]), atol=1e-13)


def test_transport_requires_steps_and_stays_in_grid(small_grid):
    conn = material_connection(builtin_placement("WRY", grid=small_grid))
    with pytest.raises(ValueError):
        parallel_transport(conn, [[0.1] * 3, [0.2] * 3], np.zeros(3), steps=4, grid=small_grid)
    with pytest.raises(PathOutsideGrid):
        parallel_transport(conn, [[0.5] * 3, [1.5, 0.5, 0.5]], np.zeros(3), grid=small_grid)


def test_trivial_loop_defect_is_zero():
    d = loop_defect(AffineConnection.trivial(3), CENTER, (0, 1), 0.3)
    assert d.linear_norm == 0.0 and d.translation_norm == 0.0


def test_loop_reversal_inverts_holonomy(grid):
    conn = material_connection(builtin_placement("WRY", grid=grid))
    v = square_loop(CENTER[None], (0, 2), 0.4)
    M, b = holonomy_map(conn, v, 32, grid)
    Mr, br = holonomy_map(conn, square_loop(CENTER[None], (0, 2), 0.4, reverse=True), 32, grid)
    np.testing.assert_allclose(Mr[0] @ M[0], np.eye(3), atol=1e-10)
    np.testing.assert_allclose(Mr[0] @ b[0] + br[0], 0, atol=1e-10)
    assert np.abs(M[0] - np.eye(3)).max() > 1e-3


@settings(max_examples=5)
@given(st.integers(0, 2**31))
def test_path_independence_for_flat_connection(seed):
    g = BodyGrid.cube(points=9)
    conn = material_connection(random_placement(g, seed, holonomic=True))
    y0 = np.array([0.2, -0.1, 0.4])
    p1 = [[0.2, 0.2, 0.2], [0.8, 0.2, 0.2], [0.8, 0.8, 0.2], [0.8, 0.8, 0.8]]
    p2 = [[0.2, 0.2, 0.2], [0.2, 0.2, 0.8], [0.2, 0.8, 0.8], [0.8, 0.8, 0.8]]
    y1 = parallel_transport(conn, p1, y0, 32, g)
    y2 = parallel_transport(conn, p2, y0, 32, g)
    assert np.abs(y1 - y2).max() <= 1e-8


def test_flat_loops_converge_fast(grid):
    conn = material_connection(random_placement(grid, 1, holonomic=True))
    sides = [0.8, 0.4, 0.2, 0.1]
    d = [loop_defect(conn, CENTER, (0, 1), s, 8, grid).linear_norm for s in sides]
    assert convergence_order(sides, d) >= 2.5
    for name in ("SHEAR", "TWIST"):
        c = material_connection(builtin_placement(name, grid=grid))
        d = [loop_defect(c, CENTER, (0, 1), s, 8, grid).linear_norm for s in sides]
        assert convergence_order(sides, d) >= 2.5


def _wry_curvature_norm(a, x1, i, j):
    # C_j(X) = -a X1 E_j with (E_j)_ab = eps_abj; only d/dX1 is non-zero
    E = levi_civita()
    C = [-a * x1 * E[..., k] for k in range(3)]
    dC = lambda k, l: -a * E[..., l] if k == 0 else np.zeros((3, 3))  # noqa: E731
    R = dC(i, j) - dC(j, i) + C[j] @ C[i] - C[i] @ C[j]
    return np.linalg.norm(R)


@pytest.mark.parametrize("plane", [(0, 1), (0, 2), (1, 2)])
def test_wry_curvature_scales_with_area(grid, plane):
    a = 0.3
    conn = material_connection(builtin_placement("WRY", {"a": a}, grid))
    sides = np.array([0.05, 0.1, 0.2, 0.3])
    d = [loop_defect(conn, CENTER, plane, s, 16, grid).linear_norm for s in sides]
    c, r2 = area_scaling_fit(sides, d)
    assert c > 0 and r2 >= 0.99
    assert c == pytest.approx(_wry_curvature_norm(a, CENTER[0], *plane), rel=0.01)


def test_batched_loops_match_single(grid):
    conn = material_connection(builtin_placement("WRY", grid=grid))
    centers = np.array([[0.4, 0.5, 0.5], [0.6, 0.5, 0.5]])
    batch = loop_defect(conn, centers, (1, 2), 0.2, 8, grid)
    for i, c in enumerate(centers):
        one = loop_defect(conn, c, (1, 2), 0.2, 8, grid)
        np.testing.assert_allclose(batch.linear_part[i], one.linear_part, atol=1e-15)


def test_covariant_derivative_examples(grid):
    triv = AffineConnection.trivial(3)
    const = np.broadcast_to([1.0, 2.0, 3.0], grid.shape + (3,))
    assert np.abs(covariant_derivative(triv, const, [1.0, 0, 0], grid)).max() <= 1e-13
    sigma = grid.points[..., 0, None] * np.array([1.0, 0, 0])
    np.testing.assert_allclose(covariant_derivative(triv, sigma, [1.0, 0, 0], grid), np.broadcast_to([1.0, 0, 0], sigma.shape), atol=1e-12)
    with pytest.raises(AffineConnectionNotSupported):
        covariant_derivative(AffineConnection(np.ones((3, 3)), np.zeros((3, 3, 3))), sigma, [1.0, 0, 0], grid)


def test_covariant_derivative_linear_connection(grid):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3, 3)) * 0.5
    conn = AffineConnection(np.zeros((3, 3)), A)
    X = grid.points
    sigma = np.stack([np.sin(X[..., 0] + X[..., 1]), X[..., 2] ** 2, np.cos(X[..., 0])], -1)
    dsig = np.zeros(grid.shape + (3, 3))
    dsig[..., 0, 0] = dsig[..., 0, 1] = np.cos(X[..., 0] + X[..., 1])
    dsig[..., 1, 2] = 2 * X[..., 2]
    dsig[..., 2, 0] = -np.sin(X[..., 0])
    u = np.array([0.3, -0.7, 1.1])
    exact = dsig @ u - np.einsum("abj,...b,j->...a", A, sigma, u)
    assert np.abs(covariant_derivative(conn, sigma, u, grid) - exact).max() <= 10 * grid.h**4


def test_defect_fields(small_grid):
    ident = defect_density_field(builtin_placement("ID", grid=small_grid))
    assert max(ident.interior_max()) <= 1e-8
    for name in HOLONOMIC_FAMILIES:
        curv, _ = defect_density_field(builtin_placement(name, grid=small_grid)).interior_max()
        assert curv <= 1e-6, name


def test_wry_defect_field_matches_loop_oracle(grid):
    F = builtin_placement("WRY", {"a": 0.3}, grid)
    fields = defect_density_field(F)
    conn = material_connection(F)
    sides = np.array([0.05, 0.1, 0.2])
    best = 0.0
    for plane in ((0, 1), (0, 2), (1, 2)):
        d = [loop_defect(conn, CENTER, plane, s, 16, grid).linear_norm for s in sides]
        best = max(best, area_scaling_fit(sides, d)[0])
    idx = tuple(np.argmin(np.abs(ax - 0.5)) for ax in grid.axes())
    assert fields.curvature[idx] == pytest.approx(best, rel=0.2)
    assert np.isnan(fields.curvature[0, 0, 0])
    # non-holonomic WRY has no translation defect of its own from Tc, but the no-slip connection does
    assert np.all(np.isfinite(fields.dislocation[fields.mask]))
    assert noslip_connection(F).n == 3


def test_order_helpers():
    assert convergence_order([1, 0.5], [1e-16, 1e-17]) == np.inf
    assert convergence_order([1, 0.5, 0.25], [1.0, 0.125, 0.015625]) == pytest.approx(3.0)
    c, r2 = area_scaling_fit([1, 2, 3], [2, 8, 18])
    assert c == pytest.approx(2.0) and r2 == pytest.approx(1.0)
