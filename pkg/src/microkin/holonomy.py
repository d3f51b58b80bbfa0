"""Parallel transport, covariant derivatives and loop defects of material connections."""
from dataclasses import dataclass

import numpy as np

from .body import fd_gradient
from .errors import AffineConnectionNotSupported, PathOutsideGrid

MIN_STEPS = 8


def coeffs_at(conn, x, grid=None):
    """Connection coefficients ``(c0, c1)`` at base points ``x`` of shape (..., n)."""
    x = np.asarray(x, float)
    if conn.field_shape == ():
        lead = x.shape[:-1]
        return (np.broadcast_to(conn.c0, lead + conn.c0.shape), np.broadcast_to(conn.c1, lead + conn.c1.shape))
    if grid is not None and not np.all(grid.contains(x)):
        raise PathOutsideGrid("path leaves the grid box")
    if conn.sampler is not None:
        return conn.sampler(x)
    if grid is None:
        raise ValueError("a grid is needed to interpolate a sampled connection")
    return grid.interpolate(conn.c0, x), grid.interpolate(conn.c1, x)


def _velocity(coeffs, dx, y):
    """``(c0 + c1[y]) dx`` for coefficients at (B,) points, tangent ``dx`` (B, n), fibers ``y`` (B, P, 3)."""
    c0, c1 = coeffs
    a0 = np.einsum("zaj,zj->za", c0, dx)
    a1 = np.einsum("zacj,zj->zac", c1, dx)
    return a0[:, None, :] + np.einsum("zac,zpc->zpa", a1, y)


def transport_polyline(conn, vertices, y0, steps=32, grid=None):
    """Classical RK4 transport of fiber points along straight segments.

    Parameters
    ----------
    vertices : (B, V, n) array
        Batch of polylines.
    y0 : (B, P, 3) array
        Fiber points transported simultaneously along each polyline.
    steps : int
        RK4 steps per segment.

    Returns
    -------
    (B, P, 3) array
    """
    if steps < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps per segment")
    vertices = np.asarray(vertices, float)
    if grid is not None and not np.all(grid.contains(vertices)):
        raise PathOutsideGrid("path leaves the grid box")
    y = np.array(y0, float)
    h = 1.0 / steps
    for seg in range(vertices.shape[1] - 1):
        p0 = vertices[:, seg]
        dx = vertices[:, seg + 1] - p0
        # coefficients at the step start are reused from the previous step's end
        start = coeffs_at(conn, p0, grid)
        for i in range(steps):
            s = i * h
            mid = coeffs_at(conn, p0 + (s + h / 2) * dx, grid)
            end = coeffs_at(conn, p0 + (s + h) * dx, grid)
            k1 = _velocity(start, dx, y)
            k2 = _velocity(mid, dx, y + (h / 2) * k1)
            k3 = _velocity(mid, dx, y + (h / 2) * k2)
            k4 = _velocity(end, dx, y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            start = end
    return y


def parallel_transport(conn, path, y0, steps=32, grid=None):
    """Transport the fiber point ``y0`` along the polyline ``path`` (V, n).

    Integrates ``y' = (c0 + c1[y]) rho'`` with a fourth-order Runge-Kutta
    scheme, ``steps`` steps per segment.  Coefficients come from the
    connection's sampler when it has one, else by multilinear interpolation.
    """
    path = np.asarray(path, float)
    out = transport_polyline(conn, path[None], np.asarray(y0, float)[None, None], steps, grid)
    return out[0, 0]


@dataclass(frozen=True)
class LoopDefect:
    linear_part: np.ndarray  # (..., 3, 3) holonomy linear map minus identity
    translation_part: np.ndarray  # (..., 3) image of the fiber origin
    loop_area: float

    @property
    def linear_norm(self):
        return np.linalg.norm(self.linear_part, axis=(-2, -1))

    @property
    def translation_norm(self):
        return np.linalg.norm(self.translation_part, axis=-1)


def square_loop(center, plane, side, reverse=False):
    """Vertices (..., 5, n) of the square loop of given side around ``center`` in ``plane``."""
    center = np.asarray(center, float)
    i, j = plane
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1], [-1, -1]], float) * (side / 2)
    if reverse:
        corners = corners[::-1]
    v = np.repeat(center[..., None, :], 5, axis=-2).copy()
    v[..., i] += corners[:, 0]
    v[..., j] += corners[:, 1]
    return v


def holonomy_map(conn, vertices, steps=16, grid=None):
    """Affine holonomy ``y -> M y + b`` along closed polylines (B, V, n)."""
    B = vertices.shape[0]
    frame = np.vstack([np.zeros(3), np.eye(3)])
    y = transport_polyline(conn, vertices, np.broadcast_to(frame, (B, 4, 3)), steps, grid)
    b = y[:, 0]
    M = np.swapaxes(y[:, 1:] - b[:, None, :], -1, -2)
    return M, b


def loop_defect(conn, center, plane=(0, 1), side=0.25, steps=16, grid=None, reverse=False):
    """Transport an affine frame around a square loop and split the holonomy.

    ``center`` may be a single point (n,) or a batch (B, n).
    """
    center = np.asarray(center, float)
    single = center.ndim == 1
    c = center[None] if single else center
    verts = square_loop(c, plane, side, reverse)
    M, b = holonomy_map(conn, verts, steps, grid)
    lin = M - np.eye(3)
    if single:
        lin, b = lin[0], b[0]
    return LoopDefect(lin, b, side * side)


def covariant_derivative(conn, sigma, u, grid, order=4):
    """``nabla_u sigma = D sigma u - c1[sigma] u`` for a linear connection.

    Parameters
    ----------
    sigma : array, shape counts+(3,)
        Section sampled on the grid.
    u : array, shape (n,) or counts+(n,)

    Raises
    ------
    AffineConnectionNotSupported
        If the connection has a non-zero constant part.
    """
    if not np.all(conn.c0 == 0.0):
        raise AffineConnectionNotSupported("covariant derivative needs a linear connection")
    sigma = np.asarray(sigma, float)
    u = np.broadcast_to(np.asarray(u, float), grid.shape + (grid.n,))
    ds = fd_gradient(sigma, grid, order)
    c1 = np.broadcast_to(conn.c1, grid.shape + (3, 3, grid.n))
    corr = np.einsum("...abj,...b,...j->...a", c1, sigma, u)
    return np.einsum("...aj,...j->...a", ds, u) - corr


@dataclass(frozen=True)
class DefectFields:
    curvature: np.ndarray  # per node; NaN where the loop does not fit
    dislocation: np.ndarray
    side: float
    mask: np.ndarray

    def interior_max(self):
        if not self.mask.any():
            return 0.0, 0.0
        return float(self.curvature[self.mask].max()), float(self.dislocation[self.mask].max())


def defect_density_field(F, side=None, steps=8, order=4):
    """Loop-defect densities over the grid.

    Curvature proxy: norm of the linear holonomy part of the material connection
    per unit area.  Dislocation proxy: norm of the translation part of the
    no-slip connection per unit area.  Both maximised over coordinate planes.
    """
    from .pullback import material_connection, noslip_connection

    grid = F.grid
    side = 4 * grid.h if side is None else side
    if side < 2 * grid.h - 1e-12:
        raise ValueError("loop side must be at least two grid steps")
    pts = grid.points
    half = side / 2
    mask = np.all((pts - half >= grid.origin - 1e-12) & (pts + half <= grid.upper + 1e-12), axis=-1)
    curv = np.full(grid.shape, np.nan)
    disl = np.full(grid.shape, np.nan)
    if grid.n < 2 or not mask.any():
        return DefectFields(curv, disl, side, np.zeros(grid.shape, bool))
    centers = pts[mask]
    gam = material_connection(F)
    nos = noslip_connection(F)
    area = side * side
    c_best = np.zeros(len(centers))
    d_best = np.zeros(len(centers))
    for a in range(grid.n):
        for b in range(a + 1, grid.n):
            c_best = np.maximum(c_best, loop_defect(gam, centers, (a, b), side, steps, grid).linear_norm / area)
            d_best = np.maximum(d_best, loop_defect(nos, centers, (a, b), side, steps, grid).translation_norm / area)
    curv[mask] = c_best
    disl[mask] = d_best
    return DefectFields(curv, disl, side, mask)


def area_scaling_fit(sides, defects):
    """Least-squares fit ``defect = c * side^2`` through the origin; returns ``(c, R^2)``."""
    a = np.asarray(sides, float) ** 2
    d = np.asarray(defects, float)
    c = float(a @ d / (a @ a))
    ss_res = float(np.sum((d - c * a) ** 2))
    ss_tot = float(np.sum((d - d.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return c, r2


def convergence_order(sides, defects, floor=1e-14):
    """Log-log slope of defect versus side; ``inf`` when every defect sits below ``floor``."""
    d = np.asarray(defects, float)
    s = np.asarray(sides, float)
    if np.all(d <= floor):
        return np.inf
    keep = d > floor
    if keep.sum() < 2:
        return np.inf
    return float(np.polyfit(np.log(s[keep]), np.log(d[keep]), 1)[0])
