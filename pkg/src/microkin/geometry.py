"""Point-wise geometry of bundle tangent spaces.

Total tangent vectors are stored in a trivializing frame as ``(dX, dY)`` with
``dX`` in R^n (macroscopic part) and ``dY`` in R^3 (vertical coordinate).  A
connection or solder form is an affine-in-Y coefficient pair ``(c0, c1)`` so
that the vertical coordinate of the lift of ``u`` at fiber point ``Y`` is

    (c0 + c1[Y]) @ u,      (c1[Y])[a, j] = sum_b c1[a, b, j] * Y[b].

Every array carries arbitrary leading "field" axes, so the same functions act on
single points and on whole grids.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import subspace_angles

from .errors import DegenerateSolder, NegativeSquare, NonSquareSolder

FIBER_DIM = 3


@dataclass(frozen=True)
class SpaceSignature:
    n: int
    k: int = FIBER_DIM

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"base dimension must be 1, 2 or 3, got {self.n}")
        if self.k != FIBER_DIM:
            raise ValueError("fiber dimension is fixed to 3")

    @property
    def total_dim(self):
        return self.n + self.k


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector ``(dX, dY)`` attached at the total point ``(X, Y)``."""

    base_point: np.ndarray
    fiber_point: np.ndarray
    macro_part: np.ndarray
    vert_coord: np.ndarray

    def as_array(self):
        return np.concatenate([np.asarray(self.macro_part, float), np.asarray(self.vert_coord, float)])

    @classmethod
    def from_array(cls, base_point, fiber_point, u):
        u = np.asarray(u, float)
        n = len(base_point)
        return cls(np.asarray(base_point, float), np.asarray(fiber_point, float), u[:n], u[n:])


def apply_linear_part(c1, y):
    """Contract the Y-slot of a ``(..., 3, 3, n)`` coefficient with ``y`` of shape ``(..., 3)``."""
    return np.einsum("...abj,...b->...aj", c1, y)


def _affine_coeff(c0, c1, y):
    y = np.asarray(y, float)
    return c0 + apply_linear_part(c1, y)


def _affine_coeff_samples(c0, c1, ys):
    """Evaluate on a list of fiber points, appending a sample axis: ``(..., K, 3, n)``."""
    ys = np.asarray(ys, float)
    return c0[..., None, :, :] + np.einsum("...abj,kb->...kaj", c1, ys)


@dataclass(frozen=True, eq=False)
class AffineConnection:
    """Affine connection given by its lift coefficients over a field of base points.

    Parameters
    ----------
    c0 : ndarray, shape (..., 3, n)
        Constant part of the vertical lift coordinate.
    c1 : ndarray, shape (..., 3, 3, n)
        Y-linear part.
    sampler : callable, optional
        ``sampler(X) -> (c0, c1)`` evaluating the coefficients at arbitrary
        base points.  Used by transport instead of plain interpolation when the
        connection is derived algebraically from interpolable data.
    """

    c0: np.ndarray
    c1: np.ndarray
    sampler: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        c0 = np.asarray(self.c0, float)
        c1 = np.asarray(self.c1, float)
        if c0.shape[-2] != FIBER_DIM or c1.shape[-3:-1] != (FIBER_DIM, FIBER_DIM):
            raise ValueError("bad coefficient shapes")
        if c1.shape[-1] != c0.shape[-1]:
            raise ValueError("const and linear parts disagree on base dimension")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)

    @property
    def n(self):
        return self.c0.shape[-1]

    @property
    def field_shape(self):
        return self.c0.shape[:-2]

    @property
    def is_linear(self):
        return bool(np.all(self.c0 == 0.0))

    @classmethod
    def trivial(cls, n, shape=()):
        return cls(np.zeros(shape + (3, n)), np.zeros(shape + (3, 3, n)))

    def coeff(self, y):
        """Lift coefficient ``C(Y)`` with shape ``(..., 3, n)``."""
        return _affine_coeff(self.c0, self.c1, y)

    def coeff_samples(self, ys):
        return _affine_coeff_samples(self.c0, self.c1, ys)

    def lift_matrix(self, y):
        """Matrix of ``u -> gamma(u)``, shape ``(..., n+3, n)``."""
        return lift_matrix(self.coeff(y))

    def minus(self, solder):
        """The connection ``self - solder`` (e.g. the no-slip connection)."""
        sampler = None
        if self.sampler is not None and solder.sampler is not None:
            fa, fb = self.sampler, solder.sampler

            def sampler(x):
                a0, a1 = fa(x)
                b0, b1 = fb(x)
                return a0 - b0, a1 - b1

        return AffineConnection(self.c0 - solder.s0, self.c1 - solder.s1, sampler)

    def linear_part(self):
        return AffineConnection(np.zeros_like(self.c0), self.c1)

    def max_abs_diff(self, other, mask=None):
        d0 = np.abs(self.c0 - other.c0)
        d1 = np.abs(self.c1 - other.c1)
        if mask is not None:
            d0, d1 = d0[mask], d1[mask]
        return float(max(d0.max(initial=0.0), d1.max(initial=0.0)))


@dataclass(frozen=True, eq=False)
class SolderForm:
    """Injective vertical-valued form with coefficients ``(s0, s1)``, affine in Y."""

    s0: np.ndarray
    s1: np.ndarray
    sampler: Optional[Callable] = field(default=None, repr=False)
    check: bool = True

    def __post_init__(self):
        s0 = np.asarray(self.s0, float)
        s1 = np.asarray(self.s1, float)
        if s1.shape[:-3] != s0.shape[:-2] or s1.shape[-1] != s0.shape[-1]:
            raise ValueError("bad coefficient shapes")
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "s1", s1)
        if self.check:
            # rank-n test at Y = 0 and Y = e_b through the Gram determinant ratio
            ys = np.vstack([np.zeros(3), np.eye(3)])
            if gram_ratio(_affine_coeff_samples(s0, s1, ys)).min(initial=1.0) < 1e-24:
                raise DegenerateSolder("solder form is not injective")

    @property
    def n(self):
        return self.s0.shape[-1]

    @property
    def field_shape(self):
        return self.s0.shape[:-2]

    @classmethod
    def canonical(cls, shape=()):
        return cls(np.broadcast_to(np.eye(3), shape + (3, 3)).copy(), np.zeros(shape + (3, 3, 3)))

    def coeff(self, y):
        return _affine_coeff(self.s0, self.s1, y)

    def coeff_samples(self, ys):
        return _affine_coeff_samples(self.s0, self.s1, ys)

    def lift_matrix(self, y):
        return solder_lift(self.coeff(y))

    def max_abs_diff(self, other, mask=None):
        d0 = np.abs(self.s0 - other.s0)
        d1 = np.abs(self.s1 - other.s1)
        if mask is not None:
            d0, d1 = d0[mask], d1[mask]
        return float(max(d0.max(initial=0.0), d1.max(initial=0.0)))


def inv3(m):
    """Inverse of a field of 3x3 matrices through the adjugate; returns ``(inverse, det)``."""
    m = np.asarray(m, float)
    a, b, c = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
    d, e, f = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
    g, h, i = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
    adj = np.stack(
        [
            np.stack([e * i - f * h, c * h - b * i, b * f - c * e], -1),
            np.stack([f * g - d * i, a * i - c * g, c * d - a * f], -1),
            np.stack([d * h - e * g, b * g - a * h, a * e - b * d], -1),
        ],
        -2,
    )
    det = a * adj[..., 0, 0] + b * adj[..., 1, 0] + c * adj[..., 2, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return adj / det[..., None, None], det


def gram_ratio(s):
    """``det(S^T S) / prod |s_j|^2`` in [0, 1]; zero exactly when the columns are dependent."""
    gram = np.swapaxes(s, -1, -2) @ s
    d = np.diagonal(gram, axis1=-2, axis2=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.linalg.det(gram) / np.prod(d, axis=-1)
    return np.where(np.prod(d, axis=-1) > 0, r, 0.0)


def _as_coeff(obj, y):
    if isinstance(obj, (AffineConnection, SolderForm)):
        if y is None:
            y = np.zeros(3)
        return obj.coeff(y)
    return np.asarray(obj, float)


def tangent_projection(n, m=FIBER_DIM):
    """Matrix of T(pi) in trivializing coordinates, ``[I_n 0]``."""
    return np.hstack([np.eye(n), np.zeros((n, m))])


def lift_matrix(c):
    """Stack ``[[I_n], [C]]`` for coefficient ``C`` of shape ``(..., 3, n)``."""
    c = np.asarray(c, float)
    n = c.shape[-1]
    top = np.broadcast_to(np.eye(n), c.shape[:-2] + (n, n))
    return np.concatenate([top, c], axis=-2)


def solder_lift(s):
    s = np.asarray(s, float)
    n = s.shape[-1]
    return np.concatenate([np.zeros(s.shape[:-2] + (n, n)), s], axis=-2)


def projectors(conn, y=None):
    """Horizontal and vertical projectors ``(h, v)`` of a connection.

    ``conn`` is an :class:`AffineConnection` (evaluated at fiber point ``y``) or
    a lift coefficient array of shape ``(..., 3, n)``.
    """
    c = _as_coeff(conn, y)
    n = c.shape[-1]
    lift = lift_matrix(c)
    h = lift @ tangent_projection(n)
    v = np.eye(n + 3) - h
    return h, v


@dataclass(frozen=True)
class BlockMap:
    """Four projector products of a linear map between total tangent spaces.

    ``hh = h_dst L h_src``, ``hv = v_dst L h_src``, ``vv = v_dst L v_src`` and
    ``vh = h_dst L v_src``; all stored as full matrices.
    """

    hh: np.ndarray
    hv: np.ndarray
    vv: np.ndarray
    vh: np.ndarray
    src_lift: np.ndarray
    n_dst: int

    def recompose(self):
        return self.hh + self.hv + self.vv + self.vh

    @property
    def hh_coords(self):
        n = self.src_lift.shape[-1]
        return self.hh[..., : self.n_dst, :n]

    @property
    def hv_coords(self):
        """Vertical coordinate of ``L_h^v`` along the source horizontal lift, ``(..., 3, n)``."""
        return (self.hv @ self.src_lift)[..., self.n_dst :, :]

    @property
    def vv_coords(self):
        n = self.src_lift.shape[-1]
        return self.vv[..., self.n_dst :, n:]

    @property
    def vh_norm(self):
        return np.linalg.norm(self.vh, axis=(-2, -1))


def block_decompose(L, src, dst, y_src=None, y_dst=None):
    """Split ``L`` with respect to a source and a destination connection."""
    L = np.asarray(L, float)
    c_src = _as_coeff(src, y_src)
    c_dst = _as_coeff(dst, y_dst)
    h_s, v_s = projectors(c_src)
    h_d, v_d = projectors(c_dst)
    return BlockMap(
        hh=h_d @ L @ h_s,
        hv=v_d @ L @ h_s,
        vv=v_d @ L @ v_s,
        vh=h_d @ L @ v_s,
        src_lift=lift_matrix(c_src),
        n_dst=c_dst.shape[-1],
    )


def block_recompose(B):
    return B.recompose()


def interpretation_projection(conn, solder, y=None):
    """Projection of interpretation ``iota = T(pi) + solder^{-1} v_gamma``.

    In coordinates ``iota = [I - S^{-1} C, S^{-1}]``.

    Raises
    ------
    NonSquareSolder
        If the base dimension is not 3.
    """
    c = _as_coeff(conn, y)
    s = _as_coeff(solder, y)
    n = c.shape[-1]
    if n != FIBER_DIM or s.shape[-1] != FIBER_DIM:
        raise NonSquareSolder("full-space interpretation needs base dimension 3")
    s_inv = np.linalg.inv(s)
    left = np.eye(n) - s_inv @ c
    return np.concatenate([left, s_inv], axis=-1)


def compatible_pseudo_metric(g, conn, solder, y=None):
    """The unique pseudo-metric ``iota^T g iota`` compatible with ``(g, conn, solder)``."""
    iota = interpretation_projection(conn, solder, y)
    gt = np.swapaxes(iota, -1, -2) @ np.asarray(g, float) @ iota
    return 0.5 * (gt + np.swapaxes(gt, -1, -2))


def compatibility_residual(gt, g, conn, solder, samples, y=None):
    """Largest violation of the compatibility identity over sample quadruples.

    Parameters
    ----------
    gt : (n+3, n+3) array
    g : (n, n) array
    samples : (K, 4, n) array
        Rows ``(u, w, u', w')``; the identity tested is
        ``<S u + G w, S u' + G w'>_gt = <u + w, u' + w'>_g``.
    """
    c = _as_coeff(conn, y)
    s = _as_coeff(solder, y)
    samples = np.asarray(samples, float)
    if samples.size == 0:
        return 0.0
    theta = solder_lift(s)
    gam = lift_matrix(c)
    a = samples[:, 0] @ theta.T + samples[:, 1] @ gam.T
    b = samples[:, 2] @ theta.T + samples[:, 3] @ gam.T
    lhs = np.einsum("ki,ij,kj->k", a, gt, b)
    rhs = np.einsum("ki,ij,kj->k", samples[:, 0] + samples[:, 1], g, samples[:, 2] + samples[:, 3])
    return float(np.max(np.abs(lhs - rhs)))


def pseudo_metric_kernel(gt, rel_tol=1e-9):
    """Kernel of a PSD matrix from its eigen-decomposition.

    Eigenvalues below ``rel_tol * max|eigenvalue|`` count as zero.

    Returns
    -------
    dim : int
    basis : (m, dim) array with orthonormal columns
    """
    gt = np.asarray(gt, float)
    lam, vec = np.linalg.eigh(0.5 * (gt + gt.T))
    scale = np.max(np.abs(lam))
    zero = lam < rel_tol * scale if scale > 0 else np.ones_like(lam, bool)
    return int(zero.sum()), vec[:, zero]


def kernel_dims(gt, rel_tol=1e-9):
    """Vectorised kernel dimension over a field of PSD matrices."""
    lam = np.linalg.eigvalsh(gt)
    scale = np.max(np.abs(lam), axis=-1, keepdims=True)
    return np.sum(lam < rel_tol * scale, axis=-1)


def semi_norm_and_inner(gt, u, w, tol=1e-12):
    """Return ``(<u, w>, |u|)`` for the pseudo-metric ``gt``."""
    gt = np.asarray(gt, float)
    u = np.asarray(u, float)
    w = np.asarray(w, float)
    uu = float(u @ gt @ u)
    scale = max(1.0, float(np.abs(gt).max()) * float(u @ u))
    if uu < -tol * scale:
        raise NegativeSquare(f"<u,u> = {uu:.3e} < 0")
    return float(u @ gt @ w), float(np.sqrt(max(uu, 0.0)))


def check_pseudo_metric(m, sym_tol=1e-12, eig_tol=1e-10):
    """True when ``m`` is symmetric and PSD within tolerance (field-wise all)."""
    m = np.asarray(m, float)
    if np.abs(m - np.swapaxes(m, -1, -2)).max(initial=0.0) > sym_tol:
        return False
    return bool(np.linalg.eigvalsh(m).min() >= -eig_tol)


def check_metric(m):
    m = np.asarray(m, float)
    if np.abs(m - np.swapaxes(m, -1, -2)).max(initial=0.0) > 1e-12:
        return False
    return bool(np.linalg.eigvalsh(m).min() > 0.0)


def principal_angles(a, b):
    """Principal angles between the column spans of ``a`` and ``b``."""
    return subspace_angles(np.asarray(a, float), np.asarray(b, float))


def hat(x):
    """Skew matrix with ``hat(x) @ y = cross(x, y)``; broadcast over leading axes."""
    x = np.asarray(x, float)
    z = np.zeros_like(x[..., 0])
    return np.stack(
        [
            np.stack([z, -x[..., 2], x[..., 1]], -1),
            np.stack([x[..., 2], z, -x[..., 0]], -1),
            np.stack([-x[..., 1], x[..., 0], z], -1),
        ],
        -2,
    )


def levi_civita():
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    return eps
