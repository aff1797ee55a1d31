"""Midsurface charts, fundamental forms and the scaled three-dimensional chart.

All evaluation routines are batched: a point argument of shape ``(..., 2)``
(surface) or ``(..., 3)`` (volume) yields arrays with the same leading shape.

Index conventions (leading batch axes omitted):

* ``a_cov[al]`` is the covariant basis vector a_al, ``a_con[al]`` is a^al.
* ``b_up[s, al]`` is the mixed curvature b^s_al = a^{s t} b_{t al}.
* ``Gamma[s, al, be]`` is Gamma^s_{al be}.
* ``b_covder[s, be, al]`` is the covariant derivative b^s_be|_al.
* ``Gamma3[p, i, j]`` is Gamma^p_{ij}(eps) on the scaled domain.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import DegenerateChart, EpsilonTooLarge

_Y1, _Y2 = sp.symbols("y1 y2", real=True)


def _lambdify_scalar(expr) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    f = sp.lambdify((_Y1, _Y2), expr, modules="numpy")

    def call(y1, y2):
        return np.broadcast_to(np.asarray(f(y1, y2), dtype=float), np.shape(y1))

    return call


@dataclass(frozen=True, eq=False)
class SurfaceChart:
    """Analytic parametrisation theta(y1, y2) of a midsurface.

    Derivatives up to third order are generated symbolically once, so every
    evaluation is exact to rounding.
    """

    name: str
    exprs: tuple
    lengths: tuple[float, float]
    periodic_y1: bool = False
    params: dict = field(default_factory=dict)

    @classmethod
    def from_expressions(cls, name, exprs, lengths, periodic_y1=False, **params):
        exprs = tuple(sp.sympify(e, locals={"y1": _Y1, "y2": _Y2}) for e in exprs)
        if len(exprs) != 3:
            raise ValueError("a chart needs exactly three component expressions")
        return cls(name, exprs, (float(lengths[0]), float(lengths[1])), periodic_y1, dict(params))

    @cached_property
    def _funcs(self):
        ys = (_Y1, _Y2)
        f0 = [_lambdify_scalar(e) for e in self.exprs]
        f1 = [[_lambdify_scalar(sp.diff(e, ys[a])) for e in self.exprs] for a in range(2)]
        f2 = {}
        f3 = {}
        for a in range(2):
            for b in range(a, 2):
                f2[a, b] = [_lambdify_scalar(sp.diff(e, ys[a], ys[b])) for e in self.exprs]
                for c in range(b, 2):
                    f3[a, b, c] = [
                        _lambdify_scalar(sp.diff(e, ys[a], ys[b], ys[c])) for e in self.exprs
                    ]
        return f0, f1, f2, f3

    def map(self, y):
        y = np.asarray(y, dtype=float)
        f0 = self._funcs[0]
        return np.stack([f(y[..., 0], y[..., 1]) for f in f0], axis=-1)

    def jets(self, y):
        """Return (theta, d1, d2, d3) with shapes (...,3), (...,2,3), (...,2,2,3), (...,2,2,2,3)."""
        y = np.asarray(y, dtype=float)
        y1, y2 = y[..., 0], y[..., 1]
        f0, f1, f2, f3 = self._funcs
        shape = y.shape[:-1]
        th = np.stack([f(y1, y2) for f in f0], axis=-1)
        d1 = np.empty(shape + (2, 3))
        d2 = np.empty(shape + (2, 2, 3))
        d3 = np.empty(shape + (2, 2, 2, 3))
        for a in range(2):
            d1[..., a, :] = np.stack([f(y1, y2) for f in f1[a]], axis=-1)
        for (a, b), fs in f2.items():
            v = np.stack([f(y1, y2) for f in fs], axis=-1)
            d2[..., a, b, :] = v
            d2[..., b, a, :] = v
        for (a, b, c), fs in f3.items():
            v = np.stack([f(y1, y2) for f in fs], axis=-1)
            for perm in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
                d3[(Ellipsis,) + perm + (slice(None),)] = v
        return th, d1, d2, d3

    def contains(self, y, tol=1e-12) -> bool:
        y = np.asarray(y, dtype=float)
        L1, L2 = self.lengths
        ok2 = np.all((y[..., 1] >= -tol * L2) & (y[..., 1] <= L2 * (1 + tol)))
        if self.periodic_y1:
            return bool(ok2)
        ok1 = np.all((y[..., 0] >= -tol * L1) & (y[..., 0] <= L1 * (1 + tol)))
        return bool(ok1 and ok2)


# -- built-in catalogue -------------------------------------------------------

def plate(L1=1.0, L2=1.0) -> SurfaceChart:
    return SurfaceChart.from_expressions("plate", (_Y1, _Y2, 0), (L1, L2))


def cylinder(R=1.0, L1=None, L2=1.0, periodic=False) -> SurfaceChart:
    """Circular cylinder of radius R; y1 is arc length, y2 runs along the axis."""
    R = sp.nsimplify(R) if isinstance(R, int) else R
    if L1 is None:
        L1 = float(2 * np.pi * float(R)) if periodic else 1.0
    return SurfaceChart.from_expressions(
        "cylinder",
        (R * sp.cos(_Y1 / R), R * sp.sin(_Y1 / R), _Y2),
        (L1, L2),
        periodic_y1=periodic,
        R=float(R),
    )


def hemisphere_patch(L1=np.pi / 2, L2=np.pi / 2) -> SurfaceChart:
    """Unit sphere in polar/azimuth angles; the domain must stay away from the pole."""
    return SurfaceChart.from_expressions(
        "hemisphere_patch",
        (sp.sin(_Y1) * sp.cos(_Y2), sp.sin(_Y1) * sp.sin(_Y2), sp.cos(_Y1)),
        (L1, L2),
    )


def graph(h, L1=1.0, L2=1.0) -> SurfaceChart:
    """Graph z = h(y1, y2); ``h`` is a sympy expression or a string in y1, y2."""
    h = sp.sympify(h, locals={"y1": _Y1, "y2": _Y2})
    return SurfaceChart.from_expressions("graph", (_Y1, _Y2, h), (L1, L2), h=str(h))


CHARTS = {
    "plate": plate,
    "cylinder": cylinder,
    "hemisphere_patch": hemisphere_patch,
    "graph": graph,
}


# -- surface quantities --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfacePointData:
    y: np.ndarray
    a_cov: np.ndarray
    a_con: np.ndarray
    a3: np.ndarray
    a_ab: np.ndarray
    a_AB: np.ndarray
    area_a: np.ndarray
    b_ab: np.ndarray
    b_up: np.ndarray
    Gamma: np.ndarray
    b_covder: np.ndarray
    # derived quantities reused by the volume chart and the kinematics
    d2theta: np.ndarray  # [al, be] -> d_al d_be theta
    da3: np.ndarray  # [al] -> d_al a3
    dda3: np.ndarray  # [al, be] -> d_al d_be a3
    db_up: np.ndarray  # [ga, s, al] -> d_ga b^s_al

    @property
    def sqrt_a(self):
        return np.sqrt(self.area_a)

    @property
    def b_mixed(self):
        """Mixed curvature b^be_al, same layout as ``b_up``."""
        return self.b_up

    def expand(self, axis: int) -> "SurfacePointData":
        """Insert a broadcast axis into every array field (axis counts batch axes only)."""
        nb = self.area_a.ndim
        ax = axis if axis >= 0 else nb + 1 + axis
        return SurfacePointData(**{
            f.name: np.expand_dims(getattr(self, f.name), ax) for f in fields(self)
        })

    @property
    def c_ab(self):
        """Third fundamental form c_{al be} = b^s_al b_{s be}."""
        return np.einsum("...sa,...sb->...ab", self.b_up, self.b_ab)


def surface_eval(chart: SurfaceChart, y) -> SurfacePointData:
    """Fundamental forms, Christoffel symbols and curvature derivatives at y."""
    y = np.asarray(y, dtype=float)
    if not chart.contains(y, tol=1e-9):
        raise ValueError(f"point outside the domain of chart {chart.name!r}")
    _, a_cov, th2, th3 = chart.jets(y)

    n = np.cross(a_cov[..., 0, :], a_cov[..., 1, :])
    nn = np.linalg.norm(n, axis=-1)
    scale = np.linalg.norm(a_cov[..., 0, :], axis=-1) * np.linalg.norm(a_cov[..., 1, :], axis=-1)
    if np.any(nn < 1e-12 * scale):
        raise DegenerateChart(f"a_1 and a_2 are parallel somewhere on chart {chart.name!r}")
    a3 = n / nn[..., None]

    a_ab = np.einsum("...ai,...bi->...ab", a_cov, a_cov)
    a_AB = np.linalg.inv(a_ab)
    a_con = np.einsum("...ab,...bi->...ai", a_AB, a_cov)
    area_a = np.linalg.det(a_ab)

    b_ab = np.einsum("...i,...abi->...ab", a3, th2)
    b_up = np.einsum("...st,...ta->...sa", a_AB, b_ab)
    # Gamma^s_{al be} = a^s . d_be a_al
    Gamma = np.einsum("...si,...abi->...sab", a_con, th2)

    # first-kind symbols a_t . d_al d_be theta
    G1 = np.einsum("...ti,...abi->...tab", a_cov, th2)
    # d_ga b_{al be} = d_ga a3 . theta_{al be} + a3 . theta_{al be ga},  d_ga a3 = -b^t_ga a_t
    db_ab = -np.einsum("...tg,...tab->...gab", b_up, G1) + np.einsum("...i,...abgi->...gab", a3, th3)
    # d_ga a_{mu nu}
    da_ab = np.einsum("...mgi,...ni->...gmn", th2, a_cov)
    da_ab = da_ab + np.swapaxes(da_ab, -1, -2)
    da_AB = -np.einsum("...sm,...gmn,...nt->...gst", a_AB, da_ab, a_AB)
    db_up = np.einsum("...gst,...ta->...gsa", da_AB, b_ab) + np.einsum(
        "...st,...gta->...gsa", a_AB, db_ab
    )
    # b^s_be|_al = d_al b^s_be + Gamma^s_{al t} b^t_be - Gamma^t_{al be} b^s_t
    b_covder = (
        np.einsum("...asb->...sba", db_up)
        + np.einsum("...sat,...tb->...sba", Gamma, b_up)
        - np.einsum("...tab,...st->...sba", Gamma, b_up)
    )

    da3 = -np.einsum("...ta,...ti->...ai", b_up, a_cov)
    # d_be (d_al a3) = -d_be b^t_al a_t - b^t_al theta_{t be}
    dda3 = -np.einsum("...bta,...ti->...abi", db_up, a_cov) - np.einsum(
        "...ta,...tbi->...abi", b_up, th2
    )

    return SurfacePointData(
        y=y, a_cov=a_cov, a_con=a_con, a3=a3, a_ab=a_ab, a_AB=a_AB, area_a=area_a,
        b_ab=b_ab, b_up=b_up, Gamma=Gamma, b_covder=b_covder,
        d2theta=th2, da3=da3, dda3=dda3, db_up=db_up,
    )


# -- scaled volume quantities --------------------------------------------------

@dataclass(frozen=True, eq=False)
class VolumePointData:
    x: np.ndarray
    epsilon: float
    g_cov: np.ndarray  # [i] -> g_i(eps)
    g_con: np.ndarray  # [i] -> g^i(eps)
    g_ij: np.ndarray
    g_AB: np.ndarray  # contravariant metric g^{ij}(eps)
    Gamma3: np.ndarray  # [p, i, j] -> Gamma^p_{ij}(eps)
    det_g: np.ndarray

    @property
    def sqrt_g(self):
        return np.sqrt(self.det_g)

    def expand(self, axis: int) -> "VolumePointData":
        """Insert a broadcast axis into every array field (axis counts batch axes only)."""
        nb = self.det_g.ndim
        ax = axis if axis >= 0 else nb + 1 + axis
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for k, v in kw.items():
            if k != "epsilon":
                kw[k] = np.expand_dims(v, ax)
        return VolumePointData(**kw)


def volume_eval(chart: SurfaceChart, eps: float, x, surf: SurfacePointData | None = None) -> VolumePointData:
    """Metric and Christoffel symbols of Theta(y, eps*x3) = theta(y) + eps*x3*a3(y).

    ``x`` holds points of the fixed domain omega x [-1, 1]; derivatives are the
    unscaled ones of the thin domain, matching the scaled symbols Gamma^p_ij(eps).
    ``surf`` may be passed to reuse a surface evaluation at the same footprints.
    """
    x = np.asarray(x, dtype=float)
    eps = float(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if surf is None:
        surf = surface_eval(chart, x[..., :2])
    z = eps * x[..., 2]
    zz = z[..., None]

    g_cov = np.empty(x.shape[:-1] + (3, 3))
    g_cov[..., 0, :] = surf.a_cov[..., 0, :] + zz * surf.da3[..., 0, :]
    g_cov[..., 1, :] = surf.a_cov[..., 1, :] + zz * surf.da3[..., 1, :]
    g_cov[..., 2, :] = surf.a3

    det = np.einsum("...i,...i->...", np.cross(g_cov[..., 0, :], g_cov[..., 1, :]), g_cov[..., 2, :])
    if np.any(det <= 0):
        raise EpsilonTooLarge(
            f"det(g_1, g_2, g_3) <= 0 for eps={eps}; the shell self-intersects on chart {chart.name!r}"
        )
    g_con = np.swapaxes(np.linalg.inv(g_cov), -1, -2)
    g_ij = np.einsum("...ik,...jk->...ij", g_cov, g_cov)
    g_AB = np.einsum("...ik,...jk->...ij", g_con, g_con)

    # D[i, j] = d_i g_j (thin-domain derivatives)
    D = np.zeros(x.shape[:-1] + (3, 3, 3))
    D[..., :2, :2, :] = surf.d2theta + z[..., None, None, None] * surf.dda3
    D[..., :2, 2, :] = surf.da3
    D[..., 2, :2, :] = surf.da3
    Gamma3 = np.einsum("...pk,...ijk->...pij", g_con, D)
    Gamma3[..., 2, :2, 2] = 0.0
    Gamma3[..., 2, 2, :2] = 0.0
    Gamma3[..., :, 2, 2] = 0.0

    return VolumePointData(
        x=x, epsilon=eps, g_cov=g_cov, g_con=g_con, g_ij=g_ij, g_AB=g_AB,
        Gamma3=Gamma3, det_g=det**2,
    )


# -- asymptotics -----------------------------------------------------------------

@dataclass
class AsymptoticReport:
    eps: np.ndarray
    residuals: dict[str, np.ndarray]
    slopes: dict[str, float | str]
    gamma3_identity_max: float


EXACT_TOL = 1e-13


def loglog_slope(eps: Sequence[float], res: Sequence[float]) -> float | str:
    """Least-squares slope of log(res) against log(eps); "exact" for vanishing residuals."""
    eps = np.asarray(eps, dtype=float)
    res = np.asarray(res, dtype=float)
    if np.all(res < EXACT_TOL):
        return "exact"
    if np.any(res <= 0):
        raise ValueError("mixed zero and non-zero residuals; slope undefined")
    return float(np.polyfit(np.log(eps), np.log(res), 1)[0])


def asymptotic_check(chart: SurfaceChart, y, eps_list, x3_values=(-1.0, 1.0)) -> AsymptoticReport:
    """Measure the eps-expansions of the scaled symbols and of g(eps) at footprint y.

    Residuals are sup-norms over the requested x3 levels and all index values.
    """
    eps_arr = np.asarray(eps_list, dtype=float)
    if len(np.unique(eps_arr)) < 3:
        raise ValueError("need at least three distinct eps values")
    if eps_arr.max() / eps_arr.min() < 4:
        raise ValueError("eps values should span a wide range (ratio >= 4)")
    y = np.asarray(y, dtype=float).reshape(2)
    surf = surface_eval(chart, y)
    x3 = np.asarray(x3_values, dtype=float)
    pts = np.column_stack([np.full_like(x3, y[0]), np.full_like(x3, y[1]), x3])
    surf_b = surface_eval(chart, pts[:, :2])

    keys = ("Gamma_ab", "Gamma_a3", "g")
    res = {k: [] for k in keys}
    g3 = 0.0
    c_ab = surf.c_ab
    # b^t_al b^s_t for the Gamma^s_{al 3} expansion
    bb = np.einsum("ta,st->sa", surf.b_up, surf.b_up)
    for eps in eps_arr:
        vol = volume_eval(chart, eps, pts, surf=surf_b)
        z = eps * x3[:, None, None, None]
        pred_ab = surf.Gamma[None] - z * surf.b_covder.transpose(0, 2, 1)[None]
        res["Gamma_ab"].append(np.max(np.abs(vol.Gamma3[:, :2, :2, :2] - pred_ab)))
        # Gamma^s_{al 3}(eps) = -b^s_al - eps x3 b^t_al b^s_t + O(eps^2)
        pred_a3 = -surf.b_up[None] - z[..., 0] * bb[None]
        res["Gamma_a3"].append(np.max(np.abs(vol.Gamma3[:, :2, :2, 2] - pred_a3)))
        res["g"].append(np.max(np.abs(vol.det_g - surf.area_a)))
        pred_3 = surf.b_ab[None] - z[..., 0] * c_ab[None]
        g3 = max(g3, float(np.max(np.abs(vol.Gamma3[:, 2, :2, :2] - pred_3))))
    res = {k: np.asarray(v) for k, v in res.items()}
    slopes = {k: loglog_slope(eps_arr, v) for k, v in res.items()}
    return AsymptoticReport(eps_arr, res, slopes, g3)


def fd_jets(chart: SurfaceChart, y, h=None):
    """Five-point central finite differences of the chart map (test oracle only)."""
    y = np.asarray(y, dtype=float)
    if h is None:
        h = 1e-4 * max(chart.lengths)
    f = chart.map

    def d(fun, a):
        e = np.zeros(2)
        e[a] = h
        return lambda p: (-fun(p + 2 * e) + 8 * fun(p + e) - 8 * fun(p - e) + fun(p - 2 * e)) / (12 * h)

    d1 = np.stack([d(f, a)(y) for a in range(2)], axis=-2)
    d2 = np.stack([np.stack([d(d(f, a), b)(y) for b in range(2)], axis=-2) for a in range(2)], axis=-3)
    return d1, d2
