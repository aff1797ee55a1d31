"""Linearised shell strains evaluated from pointwise field jets.

Fields are represented by their values and derivatives at the evaluation
points (jets), which is all the strain formulas need.  Leading batch axes of
a field broadcast against those of the geometry data, so the same routines
serve analytic test fields and finite-element basis functions.

Derivative layout: ``deta[..., i, j]`` is d_j eta_i.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .geometry import SurfacePointData, VolumePointData

_Y1, _Y2, _X3 = sp.symbols("y1 y2 x3", real=True)


@dataclass
class Field2D:
    """Midsurface displacement eta_i a^i through its jets."""

    eta: np.ndarray  # (..., 2)
    deta: np.ndarray  # (..., 2, 2)
    eta3: np.ndarray  # (...)
    deta3: np.ndarray  # (..., 2)
    ddeta3: np.ndarray  # (..., 2, 2)

    @classmethod
    def from_expressions(cls, exprs, y) -> "Field2D":
        """Jets of symbolic components (eta_1, eta_2, eta_3) in y1, y2."""
        exprs = [sp.sympify(e, locals={"y1": _Y1, "y2": _Y2}) for e in exprs]
        y = np.asarray(y, dtype=float)
        ys = (_Y1, _Y2)

        def ev(e):
            f = sp.lambdify(ys, e, "numpy")
            return np.broadcast_to(np.asarray(f(y[..., 0], y[..., 1]), dtype=float), y.shape[:-1])

        eta = np.stack([ev(exprs[a]) for a in range(2)], -1)
        deta = np.stack([np.stack([ev(sp.diff(exprs[a], ys[b])) for b in range(2)], -1) for a in range(2)], -2)
        eta3 = ev(exprs[2])
        deta3 = np.stack([ev(sp.diff(exprs[2], ys[b])) for b in range(2)], -1)
        ddeta3 = np.stack(
            [np.stack([ev(sp.diff(exprs[2], ys[a], ys[b])) for b in range(2)], -1) for a in range(2)], -2
        )
        return cls(eta, deta, eta3, deta3, ddeta3)

    def __add__(self, other: "Field2D") -> "Field2D":
        return Field2D(*(getattr(self, k) + getattr(other, k) for k in _F2))

    def __rmul__(self, c: float) -> "Field2D":
        return Field2D(*(c * getattr(self, k) for k in _F2))


_F2 = ("eta", "deta", "eta3", "deta3", "ddeta3")


@dataclass
class Field3D:
    """Covariant components v_i on the fixed domain, with d_j v_i in ``dv[..., i, j]``."""

    v: np.ndarray  # (..., 3)
    dv: np.ndarray  # (..., 3, 3)

    @classmethod
    def from_expressions(cls, exprs, x) -> "Field3D":
        exprs = [sp.sympify(e, locals={"y1": _Y1, "y2": _Y2, "x3": _X3}) for e in exprs]
        x = np.asarray(x, dtype=float)
        xs = (_Y1, _Y2, _X3)

        def ev(e):
            f = sp.lambdify(xs, e, "numpy")
            return np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1], x[..., 2]), dtype=float), x.shape[:-1])

        v = np.stack([ev(e) for e in exprs], -1)
        dv = np.stack([np.stack([ev(sp.diff(e, s)) for s in xs], -1) for e in exprs], -2)
        return cls(v, dv)

    def __add__(self, other: "Field3D") -> "Field3D":
        return Field3D(self.v + other.v, self.dv + other.dv)

    def __rmul__(self, c: float) -> "Field3D":
        return Field3D(c * self.v, c * self.dv)


@dataclass
class StrainSample:
    gamma_ab: np.ndarray | None = None
    rho_ab: np.ndarray | None = None
    e_scaled: np.ndarray | None = None
    e1_ab: np.ndarray | None = None


def _sym(t):
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def gamma_eval(field: Field2D, surf: SurfacePointData) -> np.ndarray:
    """Linearised change of metric gamma_{al be}(eta)."""
    grad = _sym(field.deta)
    return grad - np.einsum("...sab,...s->...ab", surf.Gamma, field.eta) - surf.b_ab * field.eta3[..., None, None]


def rho_eval(field: Field2D, surf: SurfacePointData) -> np.ndarray:
    """Linearised change of curvature rho_{al be}(eta), term by term."""
    eta, eta3 = field.eta, field.eta3
    b_up, G = surf.b_up, surf.Gamma
    # eta_s|_be = d_be eta_s - Gamma^t_{be s} eta_t
    cov = field.deta - np.einsum("...tbs,...t->...sb", G, eta)
    t1 = field.ddeta3
    t2 = -np.einsum("...sab,...s->...ab", G, field.deta3)
    t3 = -surf.c_ab * eta3[..., None, None]
    t4 = np.einsum("...sa,...sb->...ab", b_up, cov)
    t5 = np.einsum("...tb,...ta->...ab", b_up, cov)
    t6 = np.einsum("...tba,...t->...ab", surf.b_covder, eta)
    return _sym(t1 + t2 + t3 + t4 + t5 + t6)


def scaled_grad(field: Field3D, eps: float) -> np.ndarray:
    """Derivatives with d_3 replaced by (1/eps) d_3."""
    g = field.dv.copy()
    g[..., 2] /= eps
    return g


def strain3d_eval(field: Field3D, vol: VolumePointData, eps: float) -> np.ndarray:
    """Scaled linearised strains e_{i||j}(eps; v) on the fixed domain."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _sym(scaled_grad(field, eps)) - np.einsum("...pij,...p->...ij", vol.Gamma3, field.v)


def _as_surface_field(field: Field3D) -> Field2D:
    z = np.zeros(field.v.shape[:-1])
    return Field2D(field.v[..., :2], field.dv[..., :2, :2], field.v[..., 2], field.dv[..., 2, :2],
                   np.zeros(z.shape + (2, 2)))


def strain1_corrected(field: Field3D, surf: SurfacePointData, eps: float, x3) -> np.ndarray:
    """e1_{al be}(eps; v) = gamma(v)/eps + x3 (b^s_{be|al} v_s + b^s_al b_{s be} v_3)."""
    x3 = np.asarray(x3, dtype=float)[..., None, None]
    gam = gamma_eval(_as_surface_field(field), surf)
    corr = np.einsum("...sba,...s->...ab", surf.b_covder, field.v[..., :2]) + surf.c_ab * field.v[..., 2, None, None]
    return gam / eps + x3 * corr


def rotation_theta(field: Field2D, surf: SurfacePointData):
    """theta_al = d_al eta_3 + 2 b^s_al eta_s and its first derivatives d_be theta_al."""
    th = field.deta3 + 2 * np.einsum("...sa,...s->...a", surf.b_up, field.eta)
    dth = (field.ddeta3
           + 2 * np.einsum("...gsa,...s->...ag", surf.db_up, field.eta)
           + 2 * np.einsum("...sa,...sg->...ag", surf.b_up, field.deta))
    return th, dth


def lift(field: Field2D, surf: SurfacePointData, eps: float, x3) -> Field3D:
    """Three-dimensional test field v_al = eta_al - eps x3 theta_al, v_3 = eta_3."""
    x3 = np.asarray(x3, dtype=float)
    th, dth = rotation_theta(field, surf)
    z = (eps * x3)[..., None]
    v_al = field.eta - z * th
    batch = v_al.shape[:-1]
    v = np.concatenate([v_al, np.broadcast_to(field.eta3, batch)[..., None]], -1)
    dv = np.zeros(v.shape + (3,))
    dv[..., :2, :2] = field.deta - z[..., None] * dth
    dv[..., :2, 2] = -eps * th
    dv[..., 2, :2] = field.deta3
    return Field3D(v, dv)


def lift_limit(field: Field2D, surf: SurfacePointData, eps: float, x3) -> np.ndarray:
    """-x3 rho(eta) - eps x3^2 b^s_{be|al} theta_s: the value of e1 on a lifted field when gamma(eta)=0."""
    x3 = np.asarray(x3, dtype=float)[..., None, None]
    th, _ = rotation_theta(field, surf)
    return -x3 * rho_eval(field, surf) - eps * x3**2 * np.einsum("...sba,...s->...ab", surf.b_covder, th)
