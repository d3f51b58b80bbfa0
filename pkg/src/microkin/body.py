"""Discretized material body: grid, fiber samples, differences, reference connections."""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .errors import GridTooSmall, PathOutsideGrid
from .geometry import AffineConnection, SpaceSignature

MIN_POINTS = 5

# 0, the unit vectors, and one generic point (used to detect non-affine Y-dependence)
DEFAULT_FIBER_SAMPLES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, -0.3, 0.2]]
)


@dataclass(frozen=True, eq=False)
class BodyGrid:
    """Tensor-product grid over a box chart of the body.

    Parameters
    ----------
    n : int
        Base dimension.
    counts : tuple of int
        Points per axis (each >= 5).
    origin, spacing : array_like
        Lower corner and step per axis.
    fiber_samples : (K, 3) array
        Fiber points used to identify affine-in-Y coefficients.
    """

    n: int
    counts: Tuple[int, ...]
    origin: np.ndarray
    spacing: np.ndarray
    fiber_samples: np.ndarray = field(default_factory=lambda: DEFAULT_FIBER_SAMPLES.copy())

    def __post_init__(self):
        SpaceSignature(self.n)
        counts = tuple(int(c) for c in np.broadcast_to(self.counts, (self.n,)))
        if min(counts) < MIN_POINTS:
            raise GridTooSmall(f"need at least {MIN_POINTS} points per axis, got {counts}")
        spacing = np.broadcast_to(np.asarray(self.spacing, float), (self.n,)).copy()
        if np.any(spacing <= 0):
            raise ValueError("spacing must be positive")
        ys = np.asarray(self.fiber_samples, float)
        design = np.hstack([np.ones((len(ys), 1)), ys])
        if not np.allclose(ys[0], 0.0) or np.linalg.matrix_rank(design) < 4:
            raise ValueError("fiber samples must start with 0 and contain an affine frame")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "origin", np.broadcast_to(np.asarray(self.origin, float), (self.n,)).copy())
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "fiber_samples", ys)

    @classmethod
    def cube(cls, n=3, points=17, extent=1.0, origin=0.0):
        return cls(n, (points,) * n, np.full(n, float(origin)), np.full(n, extent / (points - 1)))

    @property
    def signature(self):
        return SpaceSignature(self.n)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def h(self):
        return float(self.spacing.max())

    @property
    def upper(self):
        return self.origin + self.spacing * (np.array(self.counts) - 1)

    def axes(self):
        return [self.origin[i] + self.spacing[i] * np.arange(self.counts[i]) for i in range(self.n)]

    @property
    def points(self):
        """Node coordinates, shape ``counts + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def embedded_points(self):
        """Node coordinates zero-padded into R^3."""
        p = self.points
        return np.concatenate([p, np.zeros(p.shape[:-1] + (3 - self.n,))], axis=-1)

    def interior_mask(self, radius):
        mask = np.ones(self.counts, bool)
        for ax in range(self.n):
            idx = [slice(None)] * self.n
            idx[ax] = slice(0, radius)
            mask[tuple(idx)] = False
            idx[ax] = slice(self.counts[ax] - radius, None)
            mask[tuple(idx)] = False
        return mask

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, float)
        lo = self.origin - tol * (1 + np.abs(self.origin))
        hi = self.upper + tol * (1 + np.abs(self.upper))
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def interpolate(self, values, x):
        """Multilinear interpolation of a node field at points ``x`` of shape ``(..., n)``.

        ``values`` has shape ``counts + comp``; result has shape ``x.shape[:-1] + comp``.
        """
        x = np.asarray(x, float)
        if not np.all(self.contains(x)):
            raise PathOutsideGrid("interpolation point outside the grid box")
        values = np.asarray(values, float)
        comp = values.shape[self.n :]
        flat = values.reshape(self.size, -1)
        lead = x.shape[:-1]
        xf = x.reshape(-1, self.n)
        s = (xf - self.origin) / self.spacing
        counts = np.array(self.counts)
        i0 = np.clip(np.floor(s).astype(int), 0, counts - 2)
        t = np.clip(s - i0, 0.0, 1.0)
        strides = np.cumprod(np.concatenate([counts[1:], [1]])[::-1])[::-1]
        base = i0 @ strides
        bits = (np.arange(2**self.n)[:, None] >> np.arange(self.n)) & 1  # (corners, n)
        w = np.prod(np.where(bits, t[:, None, :], 1.0 - t[:, None, :]), axis=-1)
        corners = flat[base[:, None] + bits @ strides]
        out = np.einsum("bc,bcp->bp", w, corners)
        return out.reshape(lead + comp)

    def describe(self):
        return {
            "dim": self.n,
            "counts": list(self.counts),
            "origin": self.origin.tolist(),
            "spacing": self.spacing.tolist(),
        }


@lru_cache(maxsize=None)
def fd_weights(offsets, h=1.0):
    """First-derivative weights on integer ``offsets`` exact for polynomials of degree ``len(offsets)-1``."""
    off = np.asarray(offsets, float)
    m = len(off)
    V = np.vander(off, m, increasing=True).T  # V[p, k] = off_k ** p
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs) / h


@lru_cache(maxsize=None)
def _diff_matrix(count, h, order):
    r = order // 2
    D = np.zeros((count, count))
    for i in range(count):
        lo = min(max(i - r, 0), count - order - 1)
        offsets = tuple(range(lo - i, lo - i + order + 1))
        D[i, lo : lo + order + 1] = fd_weights(offsets, h)
    return D


def fd_gradient(values, grid, order=4):
    """Finite-difference gradient of a node field.

    Central stencils in the interior and one-sided stencils of the same order
    near the boundary; exact for polynomials of degree ``<= order``.

    Parameters
    ----------
    values : ndarray, shape ``counts + comp``
    grid : BodyGrid
    order : {2, 4}

    Returns
    -------
    ndarray, shape ``counts + comp + (n,)``
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if min(grid.counts) < order + 1:
        raise GridTooSmall(f"order {order} needs {order + 1} points per axis")
    values = np.asarray(values, float)
    out = []
    for ax in range(grid.n):
        D = _diff_matrix(grid.counts[ax], float(grid.spacing[ax]), order)
        d = np.tensordot(D, values, axes=([1], [ax]))
        out.append(np.moveaxis(d, 0, ax))
    return np.stack(out, axis=-1)


@dataclass(frozen=True)
class ReferenceConnection:
    """Reference connection with a provenance tag (``canonical-trivial`` or ``randomized``)."""

    kind: str
    connection: AffineConnection
    seed: Optional[int] = None


def _smooth_field(rng, pts, comp, amp, modes=3):
    """Sum of a few low-frequency sinusoids with random phases, shape ``pts.shape[:-1] + comp``."""
    n = pts.shape[-1]
    out = np.zeros(pts.shape[:-1] + comp)
    for _ in range(modes):
        k = rng.normal(size=n) * 1.5
        phase = rng.uniform(0, 2 * np.pi)
        coeff = rng.normal(size=comp) * amp / modes
        out += np.sin(pts @ k + phase)[(...,) + (None,) * len(comp)] * coeff
    return out


def reference_connection(kind, grid, seed=None):
    """Build a reference connection on ``grid``.

    ``kind`` is ``"canonical-trivial"`` (zero coefficients) or ``"randomized"``
    (smooth random coefficients, deterministic per ``seed``).
    """
    shape = grid.shape
    if kind in ("canonical", "canonical-trivial", "trivial"):
        return ReferenceConnection("canonical-trivial", AffineConnection.trivial(grid.n, shape))
    if kind == "randomized":
        rng = np.random.default_rng(seed)
        pts = grid.points
        c0 = _smooth_field(rng, pts, (3, grid.n), 0.5)
        c1 = _smooth_field(rng, pts, (3, 3, grid.n), 0.5)
        return ReferenceConnection("randomized", AffineConnection(c0, c1), seed)
    raise ValueError(f"unknown reference connection kind {kind!r}")
