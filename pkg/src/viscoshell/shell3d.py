"""Scaled three-dimensional Kelvin-Voigt shell on the fixed domain omega x (-1, 1).

Trilinear hexahedra on the footprint grid extruded into ``nz`` layers, with
2x2x2 Gauss quadrature.  An optional assumed-strain sampling evaluates the
transverse shear e_{1||3} at the element mid-line in y1 and e_{2||3} at the
mid-line in y2, which removes the parasitic shear of trilinear bending modes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sps
from scipy.integrate import trapezoid

from .errors import InadmissibleField, SolverFailure, ZeroField, IndefiniteSystem
from .flexural2d import Mesh2D, SPDFactor, backward_error, bilinear_jets, gauss_rule
from .geometry import SurfaceChart, VolumePointData, surface_eval, volume_eval
from .kinematics import Field3D, strain3d_eval
from .loads import Loads
from .material import MaterialParams, tensors_3d


@dataclass(frozen=True)
class Mesh3D:
    base: Mesh2D
    nz: int = 8

    def __post_init__(self):
        if self.nz < 1:
            raise ValueError("need at least one layer")

    @property
    def hz(self):
        return 2.0 / self.nz

    @property
    def levels(self):
        return np.linspace(-1.0, 1.0, self.nz + 1)

    @property
    def n_nodes(self):
        return self.base.n_nodes * (self.nz + 1)

    @property
    def node_coords(self):
        y = self.base.node_coords
        z = self.levels
        return np.concatenate([np.column_stack([y, np.full(len(y), zk)]) for zk in z])

    @property
    def elements(self):
        """Node ids (n_el, 8): bottom face in CORNERS order, then top face; e = k * n_el2d + e2d."""
        el2 = self.base.elements
        n2 = self.base.n_nodes
        out = [np.concatenate([el2 + k * n2, el2 + (k + 1) * n2], axis=1) for k in range(self.nz)]
        return np.concatenate(out)

    @property
    def element_origins(self):
        o2 = self.base.element_origins
        return np.concatenate([np.column_stack([o2, np.full(len(o2), z)]) for z in self.levels[:-1]])

    def column_nodes(self, edge: str):
        n2 = self.base.n_nodes
        e = self.base.edge_nodes(edge)
        return np.concatenate([e + k * n2 for k in range(self.nz + 1)])


def trilinear_jets(stz, hx, hy, hz):
    """Trilinear jets at local points (..., 3): value (..., 8), gradient (..., 8, 3)."""
    v2, g2 = bilinear_jets(stz[..., :2], hx, hy)
    z = stz[..., 2]
    lz = np.stack([1 - z, z], -1)
    dz = np.stack([-np.ones_like(z), np.ones_like(z)], -1) / hz
    val = np.concatenate([v2 * lz[..., :1], v2 * lz[..., 1:]], -1)
    grad = np.concatenate([
        np.concatenate([g2 * lz[..., :1, None], (v2 * dz[..., :1])[..., None]], -1),
        np.concatenate([g2 * lz[..., 1:, None], (v2 * dz[..., 1:])[..., None]], -1),
    ], -2)
    return val, grad


def gauss_rule_3d(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = np.einsum("i,j,k->ijk", w, w, w)
    return np.column_stack([X.ravel(), Y.ravel(), Z.ravel()]), W.ravel()


def basis_fields(stz, mesh: Mesh3D) -> Field3D:
    """Jets of the 24 local vector basis functions (node-major, component-minor)."""
    val, grad = trilinear_jets(stz, mesh.base.hx, mesh.base.hy, mesh.hz)
    nq = stz.shape[0]
    v = np.zeros((nq, 24, 3))
    dv = np.zeros((nq, 24, 3, 3))
    for a in range(8):
        for i in range(3):
            v[:, 3 * a + i, i] = val[:, a]
            dv[:, 3 * a + i, i, :] = grad[:, a]
    return Field3D(v, dv)


@dataclass
class Quad3D:
    x: np.ndarray  # (n_el, nq, 3)
    weights: np.ndarray  # (n_el, nq), plain dx weights
    vol: VolumePointData
    basis: Field3D  # batch (nq, 24)


def quad3d(mesh: Mesh3D, chart: SurfaceChart, eps: float, stz, w) -> Quad3D:
    origins = mesh.element_origins
    h = np.array([mesh.base.hx, mesh.base.hy, mesh.hz])
    x = origins[:, None, :] + stz[None] * h
    # the footprint geometry is shared by all layers
    n2 = mesh.base.nx * mesh.base.ny
    surf = surface_eval(chart, x[:n2, :, :2])
    surf_all = type(surf)(**{f.name: np.concatenate([getattr(surf, f.name)] * mesh.nz)
                             for f in fields(surf)})
    vol = volume_eval(chart, eps, x, surf=surf_all)
    return Quad3D(x, w[None] * np.prod(h) * np.ones(len(x))[:, None], vol, basis_fields(stz, mesh))


def strain_operator(q: Quad3D, eps: float) -> np.ndarray:
    """Scaled strains of every local basis function: (n_el, nq, 24, 3, 3)."""
    b = Field3D(q.basis.v[None], q.basis.dv[None])
    return strain3d_eval(b, q.vol.expand(2), eps)


class Shell3D:
    """Assembled scaled 3D problem for one value of eps."""

    def __init__(self, chart: SurfaceChart, mat: MaterialParams, mesh: Mesh3D, eps: float,
                 clamped=("y1=0",), shear_sampling: bool = False):
        if eps <= 0:
            raise ValueError("eps must be positive")
        if not clamped:
            raise ValueError("the 3D problem needs a clamped portion of the lateral face")
        self.chart, self.mat, self.mesh, self.eps = chart, mat, mesh, float(eps)
        self.clamped = tuple(clamped)
        self.shear_sampling = shear_sampling
        self.n_dofs = 3 * mesh.n_nodes
        el = mesh.elements
        self.element_dofs = (el[:, :, None] * 3 + np.arange(3)).reshape(len(el), 24)
        cons = np.unique(np.concatenate([mesh.column_nodes(e) for e in self.clamped]))
        self.constrained = (cons[:, None] * 3 + np.arange(3)).ravel()
        mask = np.ones(self.n_dofs, bool)
        mask[self.constrained] = False
        self.free = np.flatnonzero(mask)

        stz, w = gauss_rule_3d(2)
        self.quad = quad3d(mesh, chart, self.eps, stz, w)
        E = self.strains(self.quad, stz)
        tens = tensors_3d(mat, self.quad.vol)
        wq = self.quad.weights * self.quad.vol.sqrt_g
        self.KA = self._assemble(E, tens.A3, wq)
        self.KB = self._assemble(E, tens.B3, wq)
        self._factor = None

    def strains(self, q: Quad3D, stz) -> np.ndarray:
        E = strain_operator(q, self.eps)
        if self.shear_sampling:
            for a in range(2):
                st = stz.copy()
                st[:, a] = 0.5
                qa = quad3d(self.mesh, self.chart, self.eps, st, np.ones(len(st)))
                Ea = strain_operator(qa, self.eps)
                E[..., a, 2] = Ea[..., a, 2]
                E[..., 2, a] = Ea[..., 2, a]
        return E

    def _assemble(self, E, T, wq):
        TE = np.einsum("eqijkl,eqnkl->eqnij", T, E)
        Ke = np.einsum("eq,eqmij,eqnij->emn", wq, E, TE)
        Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
        d = self.element_dofs
        rows = np.repeat(d, 24, axis=1).ravel()
        cols = np.tile(d, (1, 24)).ravel()
        K = sps.coo_matrix((Ke.ravel(), (rows, cols)), shape=(self.n_dofs,) * 2).tocsr()
        K.sum_duplicates()
        return K

    def energy(self, u) -> float:
        return float(u @ (self.KA @ u))

    def load(self, loads: Loads, t: float) -> np.ndarray:
        return load3d(self, loads, t)

    def factor(self, dt: float) -> SPDFactor:
        if self._factor is None or self._factor[0] != dt:
            S = (self.KA + self.KB / dt)[self.free][:, self.free]
            try:
                self._factor = (dt, SPDFactor(S, "3D step matrix"))
            except IndefiniteSystem as exc:
                raise SolverFailure(str(exc)) from exc
        return self._factor[1]

    def run(self, loads: Loads, dt: float, T: float, u0=None, residual_tol: float = 1e-10):
        """Implicit Euler; returns (times, list of coefficient vectors)."""
        nsteps = int(math.ceil(T / dt - 1e-12))
        u = np.zeros(self.n_dofs) if u0 is None else np.array(u0, dtype=float)
        lu = self.factor(dt)
        f = self.free
        times, hist = [0.0], [u.copy()]
        absA, absB = abs(self.KA), abs(self.KB)
        self.residuals = []
        for n in range(1, nsteps + 1):
            t = n * dt
            F = self.load(loads, t)
            rhs = F + self.KB @ u / dt
            new = np.zeros_like(u)
            new[f] = lu.solve(rhs[f])
            terms = (self.KA @ new, self.KB @ (new - u) / dt, -F)
            sizes = (absA @ np.abs(new), absB @ np.abs(new - u) / dt, np.abs(F))
            res = backward_error(terms, sizes, f)
            if res > residual_tol:
                raise SolverFailure(f"3D step {n}: backward error {res:.2e}")
            self.residuals.append(res)
            times.append(t)
            hist.append(new)
            u = new
        return np.array(times), hist

    def static(self, F: np.ndarray) -> np.ndarray:
        """K_A^{-1} F on the free dofs: the long-time limit under a constant load."""
        u = np.zeros(self.n_dofs)
        u[self.free] = SPDFactor(self.KA[self.free][:, self.free], "3D elasticity matrix").solve(F[self.free])
        return u

    # -- field evaluation -------------------------------------------------------------

    def field_at_quad(self, u: np.ndarray, q: Quad3D | None = None) -> Field3D:
        q = q or self.quad
        c = u[self.element_dofs]  # (n_el, 24)
        v = np.einsum("el,qli->eqi", c, q.basis.v)
        dv = np.einsum("el,qlij->eqij", c, q.basis.dv)
        return Field3D(v, dv)

    def strain_at_quad(self, u: np.ndarray) -> np.ndarray:
        """e_{i||j}(eps; u) at the quadrature points, with the same shear sampling as the stiffness."""
        stz, _ = gauss_rule_3d(2)
        E = self.strains(self.quad, stz)
        return np.einsum("el,eqlij->eqij", u[self.element_dofs], E)


def step3d(sh: Shell3D, u_prev: np.ndarray, loads: Loads, t: float, dt: float) -> np.ndarray:
    """(K_A + K_B / dt) u = F(t) + K_B u_prev / dt."""
    lu = sh.factor(dt)
    rhs = sh.load(loads, t) + sh.KB @ u_prev / dt
    u = np.zeros_like(u_prev)
    u[sh.free] = lu.solve(rhs[sh.free])
    return u


def load3d(sh: Shell3D, loads: Loads, t: float) -> np.ndarray:
    """eps^2 (int_Omega f^{i,2} v_i sqrt(g) dx + int_{Gamma+-} h^{i,3} v_i sqrt(g) dGamma)."""
    F = np.zeros(sh.n_dofs)
    if loads.is_zero:
        return F
    eps2 = sh.eps**2
    q = sh.quad
    fb = loads.body(t, q.x)  # (n_el, nq, 3)
    Fe = np.einsum("eq,eqi,qli->el", q.weights * q.vol.sqrt_g, fb, q.basis.v)
    np.add.at(F, sh.element_dofs, eps2 * Fe)
    mesh = sh.mesh
    n2 = mesh.base.nx * mesh.base.ny

    st, w = gauss_rule(2)
    for side, layer in ((+1, mesh.nz - 1), (-1, 0)):
        zloc = 1.0 if side > 0 else 0.0
        stz = np.column_stack([st, np.full(len(st), zloc)])
        y = mesh.base.element_origins[:, None, :] + st[None] * [mesh.base.hx, mesh.base.hy]
        x = np.concatenate([y, np.full(y.shape[:-1] + (1,), float(side))], -1)
        vol = volume_eval(sh.chart, sh.eps, x)
        h = loads.face(t, y, side)
        bf = basis_fields(stz, mesh)
        wts = w[None] * mesh.base.hx * mesh.base.hy * vol.sqrt_g
        Fe = np.einsum("eq,eqi,qli->el", wts, h, bf.v)
        np.add.at(F, sh.element_dofs[layer * n2:(layer + 1) * n2], eps2 * Fe)
    return F


# -- diagnostics ----------------------------------------------------------------------

def transverse_average(mesh: Mesh3D, u: np.ndarray) -> np.ndarray:
    """Half the trapezoid integral over each nodal column: footprint array (n_nodes2d, ncomp).

    ``u`` is either a dof vector with three components per node or a nodal array.
    """
    u = np.asarray(u, dtype=float)
    n2 = mesh.base.n_nodes
    if u.ndim == 1 and u.size == 3 * mesh.n_nodes:
        u = u.reshape(-1, 3)
    if u.shape[0] != mesh.n_nodes:
        raise ValueError(f"expected {mesh.n_nodes} nodal rows, got {u.shape[0]}")
    cols = u.reshape((mesh.nz + 1, n2) + u.shape[1:])
    return 0.5 * trapezoid(cols, mesh.levels, axis=0)


def extrude(mesh: Mesh3D, ubar: np.ndarray) -> np.ndarray:
    """Nodal array of a footprint field repeated on every level."""
    return np.concatenate([ubar] * (mesh.nz + 1))


def average_jets(mesh2: Mesh2D, ubar: np.ndarray, y):
    """Bilinear interpolant of footprint nodal values: value (..., c) and gradient (..., c, 2)."""
    y = np.asarray(y, dtype=float)
    el, st = mesh2.locate(y)
    nodes = mesh2.elements[el]  # (..., 4)
    val, grad = bilinear_jets(st, mesh2.hx, mesh2.hy)
    c = ubar[nodes]  # (..., 4, c)
    return np.einsum("...a,...ac->...c", val, c), np.einsum("...ab,...ac->...cb", grad, c)


def h1_norms(sh: Shell3D, u: np.ndarray):
    """||v||_{1,Omega} (plain dx, unscaled derivatives) and the scaled strain norm."""
    fld = sh.field_at_quad(u)
    w = sh.quad.weights
    h1 = np.sqrt(np.sum(w * (np.sum(fld.v**2, -1) + np.sum(fld.dv**2, (-1, -2)))))
    e = sh.strain_at_quad(u)
    en = np.sqrt(np.sum(w * np.sum(e**2, (-1, -2))))
    return h1, en


def korn_ratio(sh: Shell3D, u: np.ndarray, tol: float = 0.0) -> float:
    """eps ||v||_{1,Omega} / (sum_ij |e_{i||j}(eps; v)|^2_{0,Omega})^{1/2}."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u[sh.constrained]) > tol):
        raise InadmissibleField("field does not vanish on the clamped lateral face")
    h1, en = h1_norms(sh, u)
    if h1 == 0 or en == 0:
        raise ZeroField("Korn ratio undefined for a field with zero norm or zero strain")
    return float(sh.eps * h1 / en)
