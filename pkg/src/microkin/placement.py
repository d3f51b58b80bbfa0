"""Punctual and first-order placement maps over a body grid.

A first-order placement at a node stores the blocks of the total map

    F(Y) = [[Fhh,                 0  ],
            [Lc[Y] + Tc,          Fvv]]      (6 x (n+3))

relative to the trivial reference connection of the body and the canonical
ambient connection.  Its punctual shadow is
``phi(X, Y) = (phibar(X), phiv(X) @ Y + tv(X))``.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .body import BodyGrid, fd_gradient
from .errors import InadmissibleParams, Singular, UnknownFamily
from .geometry import apply_linear_part, hat, levi_civita

EPS_EMBED = 1e-6
MICRO_LINEAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PunctualPlacement:
    """Shadow map data: ``phibar`` (counts+(3,)), ``phiv`` (counts+(3,3)), ``tv`` (counts+(3,))."""

    grid: BodyGrid
    phibar: np.ndarray
    phiv: np.ndarray
    tv: np.ndarray

    def __post_init__(self):
        s = self.grid.shape
        for name, tail in (("phibar", (3,)), ("phiv", (3, 3)), ("tv", (3,))):
            arr = np.asarray(getattr(self, name), float)
            if arr.shape != s + tail:
                raise ValueError(f"{name} has shape {arr.shape}, expected {s + tail}")
            object.__setattr__(self, name, arr)

    def map_points(self, y):
        """Image of the total points ``(X, y)`` for every node; ``y`` has shape (3,) or counts+(3,)."""
        return self.phibar, np.einsum("...ab,...b->...a", self.phiv, y) + self.tv

    def injectivity_gap(self):
        """Smallest distance between images of distinct nodes, relative to the grid step."""
        pts = self.phibar.reshape(-1, 3)
        tree = cKDTree(pts)
        d, _ = tree.query(pts, k=2)
        return float(d[:, 1].min() / self.grid.h)


@dataclass(frozen=True, eq=False)
class FirstOrderPlacement:
    punctual: PunctualPlacement
    Fhh: np.ndarray
    Fvv: np.ndarray
    Tc: np.ndarray
    Lc: np.ndarray
    name: str = ""
    params: dict = field(default_factory=dict)
    analytic: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        s = self.grid.shape
        n = self.grid.n
        for attr, tail in (("Fhh", (3, n)), ("Fvv", (3, 3)), ("Tc", (3, n)), ("Lc", (3, 3, n))):
            arr = np.asarray(getattr(self, attr), float)
            if arr.shape != s + tail:
                raise ValueError(f"{attr} has shape {arr.shape}, expected {s + tail}")
            object.__setattr__(self, attr, arr)

    @property
    def grid(self):
        return self.punctual.grid

    @property
    def n(self):
        return self.grid.n

    def with_blocks(self, **kw):
        """Copy with some fields replaced; an analytic evaluator is dropped when blocks change."""
        if "analytic" not in kw and any(k in kw for k in ("Fhh", "Fvv", "Tc", "Lc")):
            kw["analytic"] = None
        return replace(self, **kw)

    def Fhv(self, y):
        return self.Tc + apply_linear_part(self.Lc, y)

    def Fhv_samples(self, ys=None):
        ys = self.grid.fiber_samples if ys is None else np.asarray(ys, float)
        return self.Tc[..., None, :, :] + np.einsum("...abj,kb->...kaj", self.Lc, ys)

    def total_matrix(self, y):
        """Assembled total map at fiber point ``y``: shape counts+(6, n+3)."""
        return assemble(self.Fhh, self.Fhv(y), self.Fvv)

    def total_samples(self, ys=None):
        """Assembled total maps at every fiber sample: shape counts+(K, 6, n+3)."""
        fhv = self.Fhv_samples(ys)
        fhh = np.broadcast_to(self.Fhh[..., None, :, :], fhv.shape)
        fvv = np.broadcast_to(self.Fvv[..., None, :, :], fhv.shape[:-2] + (3, 3))
        return assemble(fhh, fhv, fvv)

    @cached_property
    def _packed(self):
        lead = self.grid.shape
        return np.concatenate([b.reshape(lead + (-1,)) for b in (self.Fhh, self.Fvv, self.Tc, self.Lc)], axis=-1)

    def blocks_at(self, x):
        """``(Fhh, Fvv, Tc, Lc)`` at base points ``x`` of shape (..., n).

        Uses the analytic evaluator when the placement has one, otherwise
        multilinear interpolation of the node values.
        """
        if self.analytic is not None:
            return self.analytic(np.asarray(x, float))
        n = self.n
        v = self.grid.interpolate(self._packed, x)
        lead = v.shape[:-1]
        cuts = np.cumsum([3 * n, 9, 3 * n])
        fhh, fvv, tc, lc = np.split(v, cuts, axis=-1)
        return (
            fhh.reshape(lead + (3, n)),
            fvv.reshape(lead + (3, 3)),
            tc.reshape(lead + (3, n)),
            lc.reshape(lead + (3, 3, n)),
        )

    def describe(self):
        return {"family": self.name, "params": _jsonable(self.params)}


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            out[k] = v.tolist()
        else:
            out[k] = v
    return out


def assemble(fhh, fhv, fvv):
    """Stack blocks into ``[[Fhh, 0], [Fhv, Fvv]]``."""
    top = np.concatenate([fhh, np.zeros(fhh.shape[:-1] + (3,))], axis=-1)
    bottom = np.concatenate([fhv, fvv], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def holonomic_lift(phi, order=4):
    """First-order placement ``T(phi)`` of a punctual placement, by finite differences."""
    g = phi.grid
    return FirstOrderPlacement(
        phi,
        Fhh=fd_gradient(phi.phibar, g, order),
        Fvv=phi.phiv.copy(),
        Tc=fd_gradient(phi.tv, g, order),
        Lc=fd_gradient(phi.phiv, g, order),
        name="HOLONOMIC_LIFT",
    )


@dataclass(frozen=True)
class AcceptabilityReport:
    vh_zero: float
    macro_gradient_residual: float
    macro_gradient_residual_interior: float
    micro_gradient_residual: float
    affine_in_Y_residual: float
    fd_tolerance: float
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def affine_fit_residual(values, ys):
    """Max residual of a least-squares affine fit ``v(Y) = a + b Y`` over samples.

    ``values`` has a sample axis at position -3 (shape ``(..., K, p, q)``).
    """
    ys = np.asarray(ys, float)
    design = np.hstack([np.ones((len(ys), 1)), ys])
    proj = design @ np.linalg.pinv(design)
    fitted = np.einsum("kl,...lpq->...kpq", proj, values)
    return float(np.abs(values - fitted).max(initial=0.0))


def validate_physically_acceptable(F, order=4, tol_scale=1.0):
    """Residual report for the physically acceptable structure of ``F``.

    FD residuals pass at ``10 * h**order``; algebraic ones at ``1e-12``, both
    scaled by ``tol_scale``.  Boundary nodes use one-sided stencils and are
    reported separately through the interior residual.
    """
    g = F.grid
    mats = F.total_samples()
    n = F.n
    vh = float(np.abs(mats[..., :3, n:]).max())
    dphi = fd_gradient(F.punctual.phibar, g, order)
    macro = np.abs(F.Fhh - dphi).max(axis=(-2, -1))
    interior = g.interior_mask(order // 2)
    micro = float(np.abs(F.Fvv - F.punctual.phiv).max())
    affine = affine_fit_residual(mats, g.fiber_samples)
    fd_tol = 10.0 * g.h**order * tol_scale
    alg_tol = 1e-12 * tol_scale
    passed = vh <= alg_tol and macro.max() <= fd_tol and micro <= alg_tol and affine <= 1e-10 * tol_scale
    return AcceptabilityReport(
        vh_zero=vh,
        macro_gradient_residual=float(macro.max()),
        macro_gradient_residual_interior=float(macro[interior].max(initial=0.0)),
        micro_gradient_residual=micro,
        affine_in_Y_residual=affine,
        fd_tolerance=fd_tol,
        passed=bool(passed),
    )


@dataclass(frozen=True)
class EmbeddingReport:
    min_singular_value: np.ndarray  # per node, minimum over fiber samples
    interior_min: float
    injectivity_gap: float
    passed: bool

    def as_dict(self):
        return {
            "min_singular_value": float(self.min_singular_value.min()),
            "interior_min_singular_value": self.interior_min,
            "injectivity_gap": self.injectivity_gap,
            "passed": self.passed,
        }


def validate_embedding(F, eps_embed=EPS_EMBED):
    """Smallest singular value of the assembled total map at every node."""
    sv = np.linalg.svd(F.total_samples(), compute_uv=False)[..., -1]
    smin = sv.min(axis=-1)
    interior = smin[F.grid.interior_mask(1)]
    imin = float(interior.min())
    gap = F.punctual.injectivity_gap()
    return EmbeddingReport(smin, imin, gap, bool(imin >= eps_embed and gap > 1e-9))


@dataclass(frozen=True)
class PartialInverses:
    """Coordinate partial inverses: ``hh`` (n,3), ``vv`` (3,3), ``hv`` (3,3)."""

    hh: np.ndarray
    vv: np.ndarray
    hv: np.ndarray

    def assembled(self):
        """Block left inverse ``[[Fhh^+, 0], [hv, Fvv^-1]]`` of shape (..., n+3, 6)."""
        n = self.hh.shape[-2]
        top = np.concatenate([self.hh, np.zeros(self.hh.shape[:-2] + (n, 3))], axis=-1)
        bottom = np.concatenate([self.hv, self.vv], axis=-1)
        return np.concatenate([top, bottom], axis=-2)


def partial_inverses(fhh, fhv, fvv, eps=EPS_EMBED):
    """Partial inverses of a block-triangular total map.

    Parameters
    ----------
    fhh : (..., 3, n)
    fhv : (..., 3, n)
    fvv : (..., 3, 3)

    Raises
    ------
    Singular
        If ``fhh`` is not injective or ``fvv`` is not invertible.
    """
    s_h = np.linalg.svd(fhh, compute_uv=False)[..., -1]
    s_v = np.linalg.svd(fvv, compute_uv=False)[..., -1]
    if s_h.min(initial=np.inf) < eps or s_v.min(initial=np.inf) < eps:
        raise Singular("placement block is rank deficient")
    hh = np.linalg.pinv(fhh)
    vv = np.linalg.inv(fvv)
    hv = -vv @ fhv @ hh
    return PartialInverses(hh, vv, hv)


def is_micro_linear(F, tol=MICRO_LINEAR_TOL):
    return bool(np.abs(F.punctual.tv).max() <= tol and np.abs(F.Tc).max() <= tol)


# ---------------------------------------------------------------- built-ins

BUILTIN_FAMILIES = ("ID", "SHEAR", "DILATE", "MACROROT", "FREECOUPLE", "MICROTRANS", "WRY", "TWIST")
HOLONOMIC_FAMILIES = ("ID", "SHEAR", "DILATE", "MACROROT", "TWIST")


def rotation(axis, angle):
    axis = np.asarray(axis, float)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()


def _rotation_param(params, default_axis=(0, 0, 1), default_angle=np.pi / 2):
    if "R" in params:
        R = np.asarray(params["R"], float)
        if R.shape != (3, 3) or np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
            raise InadmissibleParams("R must be an orthogonal 3x3 matrix")
        return R
    return rotation(params.get("axis", default_axis), float(params.get("angle", default_angle)))


def _uniform(grid, mat):
    return np.broadcast_to(np.asarray(mat, float), grid.shape + np.shape(mat)).copy()


def _from_linear_shadow(grid, M, phiv, name, params, tv=None, Tc=None, Lc=None):
    """Placement with phibar = M @ embed(X), analytic Fhh = M[:, :n]."""
    n = grid.n
    X = grid.embedded_points()
    phibar = X @ np.asarray(M, float).T
    phiv = _uniform(grid, phiv) if np.ndim(phiv) == 2 else np.asarray(phiv, float)
    tv = np.zeros(grid.shape + (3,)) if tv is None else tv
    punct = PunctualPlacement(grid, phibar, phiv, tv)
    return FirstOrderPlacement(
        punct,
        Fhh=_uniform(grid, np.asarray(M, float)[:, :n]),
        Fvv=phiv.copy(),
        Tc=np.zeros(grid.shape + (3, n)) if Tc is None else Tc,
        Lc=np.zeros(grid.shape + (3, 3, n)) if Lc is None else Lc,
        name=name,
        params=params,
    )


def builtin_placement(name, params=None, grid=None):
    """Analytically specified placement families sampled on ``grid``.

    Families: ``ID``; ``SHEAR`` (``kappa``); ``DILATE`` (``lam``); ``MACROROT``
    (``R`` or ``axis``/``angle``); ``FREECOUPLE`` (``R``): identity with
    ``Tc = Fvv R``; ``MICROTRANS`` (``a``, ``direction``): identity blocks with
    shadow ``tv = a X1 direction``; ``WRY`` (``a``): ``Lc[Y] dX = a X1 (Y x dX)``;
    ``TWIST`` (``a``): holonomic, ``phiv = I - a hat(X)``.
    """
    params = dict(params or {})
    grid = grid or BodyGrid.cube()
    key = name.upper()
    n = grid.n
    I = np.eye(3)
    if key == "ID":
        return _from_linear_shadow(grid, I, I, key, params)
    if key == "SHEAR":
        k = float(params.get("kappa", 0.3))
        M = np.array([[1.0, k, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        return _from_linear_shadow(grid, M, I, key, params)
    if key == "DILATE":
        lam = float(params.get("lam", 2.0))
        if not lam > 0:
            raise InadmissibleParams("dilation factor must be positive")
        return _from_linear_shadow(grid, lam * I, lam * I, key, params)
    if key == "MACROROT":
        R = _rotation_param(params)
        return _from_linear_shadow(grid, R, I, key, params)
    if key == "FREECOUPLE":
        R = _rotation_param(params, default_angle=np.pi / 3)
        Tc = _uniform(grid, R[:, :n])
        return _from_linear_shadow(grid, I, I, key, params, Tc=Tc)
    if key == "MICROTRANS":
        a = float(params.get("a", 1.0))
        d = np.asarray(params.get("direction", [1.0, 0.0, 0.0]), float)
        if a == 0 or not np.any(d):
            raise InadmissibleParams("micro translation must be non-uniform")
        X1 = grid.points[..., 0]
        tv = a * X1[..., None] * d
        return _from_linear_shadow(grid, I, I, key, params, tv=tv)
    if key == "WRY":
        a = float(params.get("a", 0.3))
        X1 = grid.points[..., 0]
        Lc = a * X1[..., None, None, None] * levi_civita()[..., :n]
        return _from_linear_shadow(grid, I, I, key, params, Lc=Lc)
    if key == "TWIST":
        a = float(params.get("a", 0.5))
        phiv = I - a * hat(grid.embedded_points())
        # D(phiv)[Y] dX = a (Y x dX)
        Lc = _uniform(grid, a * levi_civita()[..., :n])
        return _from_linear_shadow(grid, I, phiv, key, params, Lc=Lc)
    raise UnknownFamily(f"unknown placement family {name!r}")


# ------------------------------------------------------- random placements


class _Sines:
    """Analytic field ``sum_m c_m sin(k_m . X + p_m)`` with its gradient."""

    def __init__(self, rng, n, comp, amp, modes=3):
        self.k = rng.normal(size=(modes, n))
        self.p = rng.uniform(0, 2 * np.pi, size=modes)
        self.c = rng.normal(size=(modes,) + comp) * amp / modes
        self.comp = comp

    def value(self, X):
        arg = X @ self.k.T + self.p
        return np.tensordot(np.sin(arg), self.c, axes=([-1], [0]))



def _sines_grad(s, X):
    arg = X @ s.k.T + s.p  # (..., m)
    cos = np.cos(arg)
    # sum_m cos_m * c_m[comp] * k_m[j]
    c = s.c.reshape(len(s.p), -1)
    out = np.einsum("...m,mc,mj->...cj", cos, c, s.k)
    return out.reshape(X.shape[:-1] + s.comp + (X.shape[-1],))


def random_placement(grid, seed, micro_linear=False, holonomic=False, amp=0.15):
    """Smooth random valid placement with analytic blocks, deterministic per ``seed``."""
    rng = np.random.default_rng(seed)
    n = grid.n
    X = grid.points
    A = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
    t0 = rng.normal(size=3)
    fbar = _Sines(rng, n, (3,), amp)
    phibar = (grid.embedded_points() @ A.T) + t0 + fbar.value(X)
    B = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
    fv = _Sines(rng, n, (3, 3), amp)
    phiv = B + fv.value(X)
    ft = _Sines(rng, n, (3,), amp)
    tv = np.zeros(grid.shape + (3,)) if micro_linear else rng.normal(size=3) * 0.3 + ft.value(X)
    fl = _Sines(rng, n, (3, 3, n), 0.5)
    l0 = 0.3 * rng.normal(size=(3, 3, n))
    ftc = _Sines(rng, n, (3, n), 0.5)
    t0c = 0.3 * rng.normal(size=(3, n))

    def blocks(x):
        fhh = A[:, :n] + _sines_grad(fbar, x)
        fvv = B + fv.value(x)
        if holonomic:
            lc = _sines_grad(fv, x)
            tc = np.zeros(x.shape[:-1] + (3, n)) if micro_linear else _sines_grad(ft, x)
        else:
            lc = fl.value(x) + l0
            tc = np.zeros(x.shape[:-1] + (3, n)) if micro_linear else ftc.value(x) + t0c
        return fhh, fvv, tc, lc

    Fhh, Fvv, Tc, Lc = blocks(X)
    punct = PunctualPlacement(grid, phibar, phiv, tv)
    return FirstOrderPlacement(punct, Fhh, Fvv, Tc, Lc, name="RANDOM", params={"seed": int(seed)}, analytic=blocks)
