"""Euclidean micro-structured ambient space in holonomic coordinates and its Galilean group."""
from dataclasses import dataclass

import numpy as np

from .errors import NotInvertible
from .geometry import AffineConnection, SolderForm, compatible_pseudo_metric


@dataclass(frozen=True, eq=False)
class AmbientSpace:
    gamma: AffineConnection
    theta: SolderForm
    g: np.ndarray
    gt: np.ndarray

    @classmethod
    def canonical(cls):
        gamma = AffineConnection.trivial(3)
        theta = SolderForm.canonical()
        g = np.eye(3)
        return cls(gamma, theta, g, compatible_pseudo_metric(g, gamma, theta))


AMBIENT = AmbientSpace.canonical()


@dataclass(frozen=True, eq=False)
class GalileanElement:
    """``(x, y) -> (R x + tbar, R y + tv)`` with ``R`` orthogonal."""

    R: np.ndarray
    tbar: np.ndarray
    tv: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, float)
        if R.shape != (3, 3) or np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
            raise ValueError("R must be orthogonal")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "tbar", np.asarray(self.tbar, float).reshape(3))
        object.__setattr__(self, "tv", np.asarray(self.tv, float).reshape(3))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    def compose(self, other):
        """``self o other``."""
        return GalileanElement(self.R @ other.R, self.R @ other.tbar + self.tbar, self.R @ other.tv + self.tv)

    def inverse(self):
        Rt = self.R.T
        return GalileanElement(Rt, -Rt @ self.tbar, -Rt @ self.tv)

    def tangent_matrix(self):
        z = np.zeros((3, 3))
        return np.block([[self.R, z], [z, self.R]])

    def as_dict(self):
        return {"R": self.R.tolist(), "tbar": self.tbar.tolist(), "tv": self.tv.tolist()}


def apply_galilean(A, x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return x @ A.R.T + A.tbar, y @ A.R.T + A.tv


def apply_galilean_tangent(A, dx, dy):
    return np.asarray(dx, float) @ A.R.T, np.asarray(dy, float) @ A.R.T


def random_orthogonal(rng):
    """Haar-distributed element of O(3): QR of a Gaussian matrix with the R-diagonal sign fix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


def random_galilean(seed):
    rng = np.random.default_rng(seed)
    R = random_orthogonal(rng)
    return GalileanElement(R, rng.normal(size=3), rng.normal(size=3))


# --------------------------------------------------------------- stabilizer


def galilean_placement(grid, A):
    """The element ``A`` restricted to a 3-dimensional grid of the ambient space."""
    from .placement import FirstOrderPlacement, PunctualPlacement

    if grid.n != 3:
        raise ValueError("ambient maps live on 3-dimensional grids")
    s = grid.shape
    x = grid.points
    R = np.broadcast_to(A.R, s + (3, 3)).copy()
    punct = PunctualPlacement(grid, x @ A.R.T + A.tbar, R, np.broadcast_to(A.tv, s + (3,)).copy())
    return FirstOrderPlacement(punct, R.copy(), R.copy(), np.zeros(s + (3, 3)), np.zeros(s + (3, 3, 3)), name="GALILEAN")


@dataclass(frozen=True)
class StabilizerResiduals:
    r_gt: float
    r_gamma: float
    r_tgamma: float

    def all_below(self, tol=1e-10):
        return max(self.r_gt, self.r_gamma, self.r_tgamma) <= tol

    def as_tuple(self):
        return self.r_gt, self.r_gamma, self.r_tgamma


def _check_invertible(A, eps=1e-10):
    for blk in (A.Fhh, A.Fvv, A.punctual.phiv):
        if np.linalg.svd(blk, compute_uv=False)[..., -1].min() < eps:
            raise NotInvertible("ambient map or its shadow is not invertible")


def stabilizer_residuals(A, order=4):
    """Distances of an ambient self-map from preserving ``gt``, ``gamma`` and, through its shadow, ``gamma``.

    ``A`` is a physically acceptable total map given as a first-order placement
    over a 3-dimensional grid of the ambient space.  Norms are Frobenius norms of
    holonomic-frame matrices, maximised over nodes and fiber samples.
    """
    from .placement import holonomic_lift
    from .pullback import material_connection, pull_back_pseudo_metric

    _check_invertible(A)
    ys = A.grid.fiber_samples
    G = pull_back_pseudo_metric(A, ys)
    r_gt = float(np.linalg.norm(G - AMBIENT.gt, axis=(-2, -1)).max())
    gam = material_connection(A).coeff_samples(ys)
    r_gamma = float(np.linalg.norm(gam, axis=(-2, -1)).max())
    tgam = material_connection(holonomic_lift(A.punctual, order)).coeff_samples(ys)
    r_tgamma = float(np.linalg.norm(tgam, axis=(-2, -1)).max())
    return StabilizerResiduals(r_gt, r_gamma, r_tgamma)


def extract_galilean(A, anchor=0):
    """Read a Galilean element off an ambient map and measure how well it reproduces ``A``.

    ``R`` is the micro block at the anchor node, conjugated by the canonical
    solder form (the identity in holonomic coordinates); translations come
    from the shadow.  Returns ``(element or None, reconstruction_error)``.
    """
    idx = np.unravel_index(anchor, A.grid.shape)
    R = A.Fvv[idx]
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-8:
        return None, np.inf
    # project onto O(3) so the element is exactly orthogonal
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    x0 = A.grid.points[idx]
    el = GalileanElement(R, A.punctual.phibar[idx] - R @ x0, A.punctual.tv[idx])
    B = galilean_placement(A.grid, el)
    err = max(
        float(np.abs(getattr(A, k) - getattr(B, k)).max()) for k in ("Fhh", "Fvv", "Tc", "Lc")
    )
    err = max(
        err,
        float(np.abs(A.punctual.phibar - B.punctual.phibar).max()),
        float(np.abs(A.punctual.phiv - B.punctual.phiv).max()),
        float(np.abs(A.punctual.tv - B.punctual.tv).max()),
    )
    return el, err


def pres_gt_block_residual(A):
    """Block-form residual for maps preserving ``gt``: ``Avv = O`` orthogonal and ``Ahv = O - Ahh``.

    Returns ``(orthogonality residual, block residual)`` maximised over nodes and samples.
    """
    O = A.Fvv
    orth = float(np.abs(np.swapaxes(O, -1, -2) @ O - np.eye(3)).max())
    fhv = A.Fhv_samples()
    blk = float(np.abs(fhv - (O - A.Fhh)[..., None, :, :]).max())
    return orth, blk
