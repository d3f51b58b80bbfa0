"""Pull-back of the ambient geometry through a first-order placement.

Closed forms in the body trivialization (trivial reference connection):

    connection  C  = -Fvv^{-1} (Lc[Y] + Tc)
    solder      S  =  Fvv^{-1} Fhh
    micro-metric   =  Fvv^T Fvv
    Cauchy-Green   =  Fhh^T Fhh

Each is cross-checked against an independent route (definition through the
pseudo-inverse of the assembled total map, or block formulas relative to an
arbitrary reference connection).
"""
from dataclasses import dataclass, field

import numpy as np

from .ambient import AMBIENT
from .errors import Inconsistent, KernelDimMismatch, NotMicroLinear, Singular
from .geometry import AffineConnection, SolderForm, inv3, lift_matrix, projectors, solder_lift
from .placement import EPS_EMBED, holonomic_lift, is_micro_linear


def _inv_vv(fvv):
    # 1/|A^-1|_F bounds the smallest singular value within a factor sqrt(3)
    inv, det = inv3(fvv)
    if fvv.size and not (np.all(np.isfinite(inv)) and (1.0 / np.linalg.norm(inv, axis=(-2, -1))).min() >= EPS_EMBED):
        raise Singular("micro block Fvv is not invertible")
    return inv


def _apply_left(m, lc):
    """``m @ lc`` contracting the first axis of a (..., 3, 3, n) coefficient."""
    shp = lc.shape
    return (m @ lc.reshape(shp[:-3] + (3, shp[-2] * shp[-1]))).reshape(shp)


def fit_affine(values, ys):
    """Identify ``(c0, c1)`` from samples ``values[..., k, a, j] = c0[a, j] + c1[a, b, j] ys[k, b]``."""
    ys = np.asarray(ys, float)
    design = np.hstack([np.ones((len(ys), 1)), ys])
    coef = np.einsum("lk,...kaj->...laj", np.linalg.pinv(design), values)
    c0 = coef[..., 0, :, :]
    c1 = np.moveaxis(coef[..., 1:, :, :], -3, -2)
    return c0, c1


# ---------------------------------------------------------------- connection


def _connection_coeffs(fvv, tc, lc):
    inv = _inv_vv(fvv)
    return -inv @ tc, -_apply_left(inv, lc)


def material_connection(F):
    """Closed-form pull-back connection, with an interpolating sampler for transport."""
    c0, c1 = _connection_coeffs(F.Fvv, F.Tc, F.Lc)

    def sampler(x):
        _, fvv, tc, lc = F.blocks_at(x)
        return _connection_coeffs(fvv, tc, lc)

    return AffineConnection(c0, c1, sampler)


def connection_definitional(F, ys=None, gamma=None):
    """Lift coefficients of ``F^{-1} gamma Fbar`` at the fiber samples, shape counts+(K, 3, n).

    The horizontal lift of the ambient connection is taken at the image point and
    pulled back through the Moore-Penrose inverse of the assembled total map.
    """
    gamma = gamma or AMBIENT.gamma
    ys = F.grid.fiber_samples if ys is None else ys
    mats = F.total_samples(ys)
    n = F.n
    # ambient coefficients are uniform; evaluate at the image fiber point anyway
    y_img = np.einsum("...ab,kb->...ka", F.punctual.phiv, ys) + F.punctual.tv[..., None, :]
    amb_lift = lift_matrix(gamma.coeff(y_img))  # (..., K, 6, 3)
    rhs = amb_lift @ F.Fhh[..., None, :, :]
    U = np.linalg.pinv(mats) @ rhs
    return U[..., :n, :], U[..., n:, :]


def connection_block_formula(F, ref=None, ys=None):
    """Lift coefficients from ``h_Gamma = h_ref - Fvv^{-1} Fhv`` relative to ``ref``.

    Blocks are formed as full projector products with the ambient and the
    reference connections, so the result must not depend on ``ref``.
    """
    ys = F.grid.fiber_samples if ys is None else ys
    n = F.n
    mats = F.total_samples(ys)
    if ref is None:
        cref = np.zeros(mats.shape[:-2] + (3, n))
    else:
        cref = ref.coeff_samples(ys)
    h_ref, v_ref = projectors(cref)
    h_amb, v_amb = projectors(np.zeros((3, 3)))
    f_hv = v_amb @ mats @ h_ref
    finv_vv = v_ref @ np.linalg.pinv(mats) @ v_amb
    h_gam = h_ref - finv_vv @ f_hv
    lift = h_gam @ lift_matrix(cref)
    return lift[..., n:, :]


@dataclass(frozen=True)
class ConnectionCheck:
    definitional_vs_block: float
    definitional_vs_closed: float
    macro_part_residual: float


def check_connection_paths(F, ref=None):
    ys = F.grid.fiber_samples
    top, c_def = connection_definitional(F, ys)
    c_blk = connection_block_formula(F, ref, ys)
    c_cls = material_connection(F).coeff_samples(ys)
    eye = np.eye(F.n)
    return ConnectionCheck(
        definitional_vs_block=float(np.abs(c_def - c_blk).max()),
        definitional_vs_closed=float(np.abs(c_def - c_cls).max()),
        macro_part_residual=float(np.abs(top - eye).max()),
    )


def pull_back_connection(F, ref=None, check=False, tol=1e-10):
    """Pull-back of the ambient connection.

    Parameters
    ----------
    ref : AffineConnection, optional
        Reference connection used by the block-formula route.
    check : bool
        Recompute through the definitional and block routes and raise
        :class:`Inconsistent` if they disagree by more than ``tol``.
    """
    gam = material_connection(F)
    if check:
        c = check_connection_paths(F, ref)
        worst = max(c.definitional_vs_block, c.definitional_vs_closed, c.macro_part_residual)
        if worst > tol:
            raise Inconsistent(f"pull-back connection routes disagree by {worst:.3e}")
    return gam


# ---------------------------------------------------------------- solder


def _solder_coeffs(fhh, fvv):
    return _inv_vv(fvv) @ fhh


def pull_back_solder(F, check=False, tol=1e-10):
    """Pull-back solder form ``Fvv^{-1} theta Fbar`` (independent of Y)."""
    s0 = _solder_coeffs(F.Fhh, F.Fvv)

    def sampler(x):
        fhh, fvv, _, _ = F.blocks_at(x)
        return _solder_coeffs(fhh, fvv), np.zeros(fhh.shape[:-2] + (3, 3, F.n))

    theta = SolderForm(s0, np.zeros(s0.shape[:-2] + (3, 3, F.n)), sampler)
    if check:
        r = solder_definitional_residual(F)
        if r > tol:
            raise Inconsistent(f"pull-back solder routes disagree by {r:.3e}")
    return theta


def solder_definitional_residual(F):
    """Compare ``F^{-1} theta_amb Fbar`` (pseudo-inverse route) with the closed form."""
    ys = F.grid.fiber_samples
    mats = F.total_samples(ys)
    n = F.n
    rhs = solder_lift(np.broadcast_to(np.eye(3), F.Fhh.shape[:-2] + (3, 3)))[..., None, :, :] @ F.Fhh[..., None, :, :]
    U = np.linalg.pinv(mats) @ rhs
    s = _solder_coeffs(F.Fhh, F.Fvv)[..., None, :, :]
    return float(max(np.abs(U[..., :n, :]).max(), np.abs(U[..., n:, :] - s).max()))


# ---------------------------------------------------------------- metrics


def pull_back_pseudo_metric(F, ys=None, gt=None):
    """``F^T gt F`` at every node and fiber sample: counts+(K, n+3, n+3)."""
    gt = AMBIENT.gt if gt is None else gt
    mats = F.total_samples(ys)
    G = np.swapaxes(mats, -1, -2) @ gt @ mats
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def pull_back_pseudo_metric_blocks(F, ref=None, ys=None):
    """Pseudo-metric assembled from its four block formulas relative to ``ref``.

    With ``F_h = F h_ref = F_h^h + F_h^v`` and ``F_v = F v_ref = F_v^v`` the
    blocks ``G_hh, G_hv, G_vh, G_vv`` are built from the ambient blocks
    ``g_xy = x_amb^T gt y_amb`` and summed.
    """
    ys = F.grid.fiber_samples if ys is None else ys
    n = F.n
    mats = F.total_samples(ys)
    cref = np.zeros(mats.shape[:-2] + (3, n)) if ref is None else ref.coeff_samples(ys)
    h_ref, v_ref = projectors(cref)
    h_a, v_a = projectors(np.zeros((3, 3)))
    gt = AMBIENT.gt
    g_hh, g_hv, g_vh, g_vv = h_a.T @ gt @ h_a, h_a.T @ gt @ v_a, v_a.T @ gt @ h_a, v_a.T @ gt @ v_a
    Fhh = h_a @ mats @ h_ref
    Fhv = v_a @ mats @ h_ref
    Fvv = v_a @ mats @ v_ref
    T = lambda m: np.swapaxes(m, -1, -2)  # noqa: E731
    G_hh = T(Fhh) @ g_hh @ Fhh + T(Fhh) @ g_hv @ Fhv + T(Fhv) @ g_vh @ Fhh + T(Fhv) @ g_vv @ Fhv
    G_hv = T(Fvv) @ g_vh @ Fhh + T(Fvv) @ g_vv @ Fhv
    G_vh = T(Fhh) @ g_hv @ Fvv + T(Fhv) @ g_vv @ Fvv
    G_vv = T(Fvv) @ g_vv @ Fvv
    return G_hh + G_hv + G_vh + G_vv


def cauchy_green(F, g=None):
    g = np.eye(3) if g is None else g
    return np.swapaxes(F.Fhh, -1, -2) @ g @ F.Fhh


def micro_metric(F):
    return np.swapaxes(F.Fvv, -1, -2) @ F.Fvv


# ---------------------------------------------------------------- invariants


@dataclass(frozen=True, eq=False)
class InvariantQuadruplet:
    micro_metric: np.ndarray
    solder: SolderForm
    connection: AffineConnection
    holonomic_connection: AffineConnection
    checks: dict = field(default_factory=dict)

    COMPONENTS = ("micro_metric", "solder", "connection", "holonomic")

    def deviation(self, other, mask=None):
        """Max absolute field deviation per component."""
        dg = np.abs(self.micro_metric - other.micro_metric)
        if mask is not None:
            dg = dg[mask]
        return {
            "micro_metric": float(dg.max(initial=0.0)),
            "solder": self.solder.max_abs_diff(other.solder, mask),
            "connection": self.connection.max_abs_diff(other.connection, mask),
            "holonomic": self.holonomic_connection.max_abs_diff(other.holonomic_connection, mask),
        }

    def relative_to(self, ref):
        """Component-wise differences ``II - II_ref`` as raw coefficient fields."""
        return {
            "micro_metric": self.micro_metric - ref.micro_metric,
            "solder": (self.solder.s0 - ref.solder.s0, self.solder.s1 - ref.solder.s1),
            "connection": (self.connection.c0 - ref.connection.c0, self.connection.c1 - ref.connection.c1),
            "holonomic": (
                self.holonomic_connection.c0 - ref.holonomic_connection.c0,
                self.holonomic_connection.c1 - ref.holonomic_connection.c1,
            ),
        }


def principal_invariants(F, order=4):
    """The four principal invariants of ``F``.

    The holonomic connection is always recomputed from a fresh finite-difference
    lift of the punctual shadow.  ``checks`` records how far the micro-metric and
    solder of ``F`` are from those of that lift.
    """
    tphi = holonomic_lift(F.punctual, order)
    gvv = micro_metric(F)
    theta = pull_back_solder(F)
    checks = {
        "micro_metric_vs_holonomic_lift": float(np.abs(gvv - micro_metric(tphi)).max()),
        "solder_vs_holonomic_lift": float(np.abs(theta.s0 - _solder_coeffs(tphi.Fhh, tphi.Fvv)).max()),
    }
    return InvariantQuadruplet(gvv, theta, material_connection(F), material_connection(tphi), checks)


# ---------------------------------------------------------------- data equivalence


def noslip_connection(F):
    """``Gamma - Theta`` in closed form."""
    return material_connection(F).minus(pull_back_solder(F))


def decompose_pseudo_metric(G, ys, rel_tol=1e-9):
    """Split sampled pseudo-metric values into micro-metric and no-slip connection.

    Parameters
    ----------
    G : ndarray, shape (..., K, n+3, n+3)
        Pseudo-metric at the fiber samples ``ys``.

    Returns
    -------
    gvv : (..., 3, 3)
    noslip : AffineConnection
        Recovered from the kernel, each kernel basis normalized to macro part ``I_n``.

    Raises
    ------
    KernelDimMismatch
        If some kernel dimension differs from ``n``.
    """
    G = np.asarray(G, float)
    n = G.shape[-1] - 3
    gvv_s = G[..., n:, n:]
    gvv = gvv_s[..., 0, :, :]
    lam, vec = np.linalg.eigh(0.5 * (G + np.swapaxes(G, -1, -2)))
    scale = np.abs(lam).max(axis=-1, keepdims=True)
    dims = np.sum(lam < rel_tol * scale, axis=-1)
    if np.any(dims != n):
        bad = np.unique(dims[dims != n])
        raise KernelDimMismatch(f"kernel dimension {bad.tolist()} differs from base dimension {n}")
    kern = vec[..., :, :n]
    top = kern[..., :n, :]
    bottom = kern[..., n:, :]
    # normalize: N = bottom @ top^{-1}, via a linear solve on the transpose
    N = np.swapaxes(np.linalg.solve(np.swapaxes(top, -1, -2), np.swapaxes(bottom, -1, -2)), -1, -2)
    c0, c1 = fit_affine(N, ys)
    return gvv, AffineConnection(c0, c1)


def reconstruct_pseudo_metric(gvv, noslip, ys):
    """``v^T gvv v`` for the vertical projector of the no-slip connection, at each sample."""
    N = noslip.coeff_samples(ys)  # (..., K, 3, n)
    P = np.concatenate([-N, np.broadcast_to(np.eye(3), N.shape[:-1] + (3,))], axis=-1)
    return np.swapaxes(P, -1, -2) @ gvv[..., None, :, :] @ P


def microlinear_split(noslip, F):
    """Linear and constant parts of ``Gamma - Theta`` for a micro-linear placement."""
    if not is_micro_linear(F):
        raise NotMicroLinear("placement has a micro translation or a constant coupling")
    gam = AffineConnection(np.zeros_like(noslip.c0), noslip.c1)
    theta = SolderForm(-noslip.c0, np.zeros_like(noslip.c1))
    return gam, theta


@dataclass(frozen=True)
class EringenStrains:
    deformation: np.ndarray  # solder coordinates, the non-zero block of Theta T(pi)
    micro_deformation: np.ndarray
    wryness: np.ndarray  # Fvv^{-1} Lc, shape (..., 3, 3, n)

    def wryness_at(self, y):
        return np.einsum("...abj,...b->...aj", self.wryness, y)


def eringen_strain_measures(F):
    if not is_micro_linear(F):
        raise NotMicroLinear("Eringen measures are defined for micro-linear placements")
    inv = _inv_vv(F.Fvv)
    return EringenStrains(
        deformation=inv @ F.Fhh,
        micro_deformation=micro_metric(F),
        wryness=_apply_left(inv, F.Lc),
    )


def kernel_angle_field(G, noslip, ys, rel_tol=1e-9):
    """Largest principal angle between ker G and the no-slip horizontal space, per node and sample.

    Uses the sine form ``|(I - Q_k Q_k^T) Q_l|_2`` which stays accurate for tiny angles.
    """
    n = G.shape[-1] - 3
    lift = lift_matrix(noslip.coeff_samples(ys))
    _, vec = np.linalg.eigh(G)
    qk = vec[..., :, :n]
    ql, _ = np.linalg.qr(lift)
    resid = ql - qk @ (np.swapaxes(qk, -1, -2) @ ql)
    s = np.linalg.svd(resid, compute_uv=False)[..., 0]
    return np.arcsin(np.clip(s, 0.0, 1.0))
