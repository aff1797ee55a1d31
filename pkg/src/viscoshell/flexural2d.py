"""Finite elements for the viscoelastic flexural shell limit model.

eta_3 uses Bogner-Fox-Schmit bicubic Hermite elements (value, d1, d2, d12 per
node), the tangential components use bilinear elements.  On the plate chart an
exact "plate mode" drops the tangential unknowns.  Inextensibility is imposed
by a quadratic penalty on gamma_{al be}.

Time discretisation: implicit Euler for the viscous term and a trapezoidal
exponential recurrence for the fading-memory integral.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .errors import IndefiniteSystem, MeshMismatch, SolverFailure
from .geometry import SurfaceChart, surface_eval
from .kinematics import Field2D, gamma_eval, rho_eval
from .loads import Loads
from .material import MaterialParams, isotropic_tensor, tensors_2d, twod_coefficients

log = logging.getLogger(__name__)

EDGES = ("y1=0", "y1=L1", "y2=0", "y2=L2")
# local corner offsets, counter-clockwise
CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))


# -- mesh -------------------------------------------------------------------------

@dataclass(frozen=True)
class Mesh2D:
    nx: int
    ny: int
    L1: float
    L2: float
    periodic_y1: bool = False

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("need at least one element per direction")

    @property
    def hx(self):
        return self.L1 / self.nx

    @property
    def hy(self):
        return self.L2 / self.ny

    @property
    def ncols(self):
        """Distinct node columns in y1 (one fewer when periodic)."""
        return self.nx if self.periodic_y1 else self.nx + 1

    @property
    def n_nodes(self):
        return self.ncols * (self.ny + 1)

    def node_id(self, i, j):
        i = np.asarray(i)
        if self.periodic_y1:
            i = i % self.nx
        return np.asarray(j) * self.ncols + i

    @property
    def node_coords(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.ncols), np.arange(self.ny + 1), indexing="xy")
        return np.column_stack([i.ravel() * self.hx, j.ravel() * self.hy])

    @property
    def elements(self) -> np.ndarray:
        """Node ids (n_el, 4) in CORNERS order; element e = ey * nx + ex."""
        ex, ey = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        ex, ey = ex.ravel(), ey.ravel()
        return np.stack([self.node_id(ex + ci, ey + cj) for ci, cj in CORNERS], axis=1)

    @property
    def element_origins(self) -> np.ndarray:
        ex, ey = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        return np.column_stack([ex.ravel() * self.hx, ey.ravel() * self.hy])

    def edge_nodes(self, edge: str) -> np.ndarray:
        if edge not in EDGES:
            raise ValueError(f"unknown edge {edge!r}; expected one of {EDGES}")
        if edge.startswith("y1") and self.periodic_y1:
            raise ValueError("a periodic direction has no y1 edges")
        if edge == "y1=0":
            return self.node_id(np.zeros(self.ny + 1, int), np.arange(self.ny + 1))
        if edge == "y1=L1":
            return self.node_id(np.full(self.ny + 1, self.nx), np.arange(self.ny + 1))
        if edge == "y2=0":
            return self.node_id(np.arange(self.ncols), np.zeros(self.ncols, int))
        return self.node_id(np.arange(self.ncols), np.full(self.ncols, self.ny))

    def locate(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Element index and local coordinates in [0, 1]^2 for points y (..., 2)."""
        y = np.asarray(y, dtype=float)
        s = y[..., 0] / self.hx
        t = y[..., 1] / self.hy
        ex = np.clip(np.floor(s), 0, self.nx - 1).astype(int)
        ey = np.clip(np.floor(t), 0, self.ny - 1).astype(int)
        return ey * self.nx + ex, np.stack([s - ex, t - ey], -1)

    def compatible(self, other: "Mesh2D") -> bool:
        return (self.nx, self.ny, self.periodic_y1) == (other.nx, other.ny, other.periodic_y1) and \
            np.isclose(self.L1, other.L1) and np.isclose(self.L2, other.L2)


# -- shape functions ----------------------------------------------------------------

def _hermite_1d(s, h):
    """Cubic Hermite functions on [0, 1] scaled to length h: (4, 3, ...) = (fn, derivative order)."""
    s = np.asarray(s, dtype=float)
    one = np.ones_like(s)
    f = np.array([
        [1 - 3 * s**2 + 2 * s**3, (-6 * s + 6 * s**2) / h, (-6 + 12 * s) / h**2],
        [h * (s - 2 * s**2 + s**3), 1 - 4 * s + 3 * s**2, (-4 + 6 * s) / h],
        [3 * s**2 - 2 * s**3, (6 * s - 6 * s**2) / h, (6 - 12 * s) / h**2],
        [h * (-s**2 + s**3), -2 * s + 3 * s**2, (-2 + 6 * s) / h],
    ])
    return f * one


def _linear_1d(s, h):
    s = np.asarray(s, dtype=float)
    one = np.ones_like(s)
    return np.array([[1 - s, -one / h], [s, one / h]]) * one


def hermite_jets(st, hx, hy):
    """BFS basis jets at local points st (..., 2).

    Returns value (..., 16), gradient (..., 16, 2), Hessian (..., 16, 2, 2);
    basis order is corner-major with (w, w_1, w_2, w_12) per corner.
    """
    X = _hermite_1d(st[..., 0], hx)
    Y = _hermite_1d(st[..., 1], hy)
    val, grad, hess = [], [], []
    for ci, cj in CORNERS:
        vx, sx = X[2 * ci], X[2 * ci + 1]
        vy, sy = Y[2 * cj], Y[2 * cj + 1]
        for fx, fy in ((vx, vy), (sx, vy), (vx, sy), (sx, sy)):
            val.append(fx[0] * fy[0])
            grad.append(np.stack([fx[1] * fy[0], fx[0] * fy[1]], -1))
            hess.append(np.stack([np.stack([fx[2] * fy[0], fx[1] * fy[1]], -1),
                                  np.stack([fx[1] * fy[1], fx[0] * fy[2]], -1)], -2))
    return np.stack(val, -1), np.stack(grad, -2), np.stack(hess, -3)


def bilinear_jets(st, hx, hy):
    """Bilinear basis jets: value (..., 4), gradient (..., 4, 2), corner order."""
    X = _linear_1d(st[..., 0], hx)
    Y = _linear_1d(st[..., 1], hy)
    val, grad = [], []
    for ci, cj in CORNERS:
        val.append(X[ci][0] * Y[cj][0])
        grad.append(np.stack([X[ci][1] * Y[cj][0], X[ci][0] * Y[cj][1]], -1))
    return np.stack(val, -1), np.stack(grad, -2)


def gauss_rule(n: int):
    """Tensor Gauss-Legendre rule on [0, 1]^2: points (n*n, 2), weights (n*n,)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


# -- dof layout ------------------------------------------------------------------------

@dataclass
class DofLayout2D:
    """Per-node unknowns and the constrained set.

    Shell layout per node: (eta_1, eta_2, w, w_1, w_2, w_12); plate layout: (w, w_1, w_2, w_12).
    """

    mesh: Mesh2D
    plate_mode: bool
    clamped: tuple[str, ...]
    supported: tuple[str, ...] = ()
    constrained: np.ndarray = field(init=False)

    def __post_init__(self):
        self.clamped = tuple(self.clamped)
        self.supported = tuple(self.supported)
        if not self.clamped and not self.supported:
            raise ValueError("at least one edge must be clamped or supported")
        cons = set()
        for edge in self.clamped:
            for n in self.mesh.edge_nodes(edge):
                cons.update(self.node_dofs(n))
        for edge in self.supported:
            # w and its tangential derivative vanish; tangential components too
            tang = self.W2 if edge.startswith("y1") else self.W1
            for n in self.mesh.edge_nodes(edge):
                d = self.node_dofs(n)
                cons.update([d[self.W], d[tang]])
                if not self.plate_mode:
                    cons.update([d[0], d[1]])
        self.constrained = np.array(sorted(cons), dtype=int)

    @property
    def per_node(self):
        return 4 if self.plate_mode else 6

    @property
    def W(self):
        return 0 if self.plate_mode else 2

    @property
    def W1(self):
        return self.W + 1

    @property
    def W2(self):
        return self.W + 2

    @property
    def n_dofs(self):
        return self.per_node * self.mesh.n_nodes

    def node_dofs(self, n):
        return list(range(n * self.per_node, (n + 1) * self.per_node))

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    @property
    def element_dofs(self) -> np.ndarray:
        el = self.mesh.elements
        return (el[:, :, None] * self.per_node + np.arange(self.per_node)).reshape(len(el), -1)

    def local_fields(self, st) -> Field2D:
        """Jets of every local basis function at local points st (nq, 2): batch (nq, n_local)."""
        hx, hy = self.mesh.hx, self.mesh.hy
        hv, hg, hh = hermite_jets(st, hx, hy)
        nq = st.shape[0]
        nloc = 4 * self.per_node
        eta = np.zeros((nq, nloc, 2))
        deta = np.zeros((nq, nloc, 2, 2))
        eta3 = np.zeros((nq, nloc))
        deta3 = np.zeros((nq, nloc, 2))
        ddeta3 = np.zeros((nq, nloc, 2, 2))
        for c in range(4):
            base = c * self.per_node
            w = slice(base + self.W, base + self.W + 4)
            eta3[:, w] = hv[:, 4 * c:4 * c + 4]
            deta3[:, w] = hg[:, 4 * c:4 * c + 4]
            ddeta3[:, w] = hh[:, 4 * c:4 * c + 4]
        if not self.plate_mode:
            lv, lg = bilinear_jets(st, hx, hy)
            for c in range(4):
                for a in range(2):
                    eta[:, c * 6 + a, a] = lv[:, c]
                    deta[:, c * 6 + a, a, :] = lg[:, c]
        return Field2D(eta, deta, eta3, deta3, ddeta3)

    def interpolate_w(self, w, dw, ddw12) -> np.ndarray:
        """Nodal Hermite interpolant of a scalar eta_3 given callables of y (n, 2)."""
        y = self.mesh.node_coords
        x = np.zeros(self.n_dofs)
        base = np.arange(self.mesh.n_nodes) * self.per_node + self.W
        g = dw(y)
        x[base] = w(y)
        x[base + 1] = g[:, 0]
        x[base + 2] = g[:, 1]
        x[base + 3] = ddw12(y)
        return x


class FEField2D:
    """Finite-element function of a DofLayout2D, evaluable at arbitrary points."""

    def __init__(self, layout: DofLayout2D, coeffs: np.ndarray):
        self.layout = layout
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (layout.n_dofs,):
            raise MeshMismatch(f"expected {layout.n_dofs} coefficients, got {self.coeffs.shape}")

    def jets(self, y) -> Field2D:
        y = np.asarray(y, dtype=float)
        shp = y.shape[:-1]
        y = y.reshape(-1, 2)
        el, st = self.layout.mesh.locate(y)
        loc = self.layout.element_dofs[el]  # (n, nloc)
        c = self.coeffs[loc]
        f = self.layout.local_fields(st)  # (n, nloc)
        eta = np.einsum("nl,nla->na", c, f.eta)
        deta = np.einsum("nl,nlab->nab", c, f.deta)
        eta3 = np.einsum("nl,nl->n", c, f.eta3)
        deta3 = np.einsum("nl,nla->na", c, f.deta3)
        ddeta3 = np.einsum("nl,nlab->nab", c, f.ddeta3)
        return Field2D(eta.reshape(shp + (2,)), deta.reshape(shp + (2, 2)), eta3.reshape(shp),
                       deta3.reshape(shp + (2,)), ddeta3.reshape(shp + (2, 2)))


# -- quadrature data and assembly --------------------------------------------------------

@dataclass
class QuadData:
    """Geometry and basis jets at every element quadrature point."""

    y: np.ndarray  # (n_el, nq, 2)
    weights: np.ndarray  # (n_el, nq) including sqrt(a) and the element Jacobian
    surf: object
    basis: Field2D  # batch (1, nq, n_local)


def quad_data(layout: DofLayout2D, chart: SurfaceChart, order: int) -> QuadData:
    mesh = layout.mesh
    st, w = gauss_rule(order)
    y = mesh.element_origins[:, None, :] + st[None] * np.array([mesh.hx, mesh.hy])
    surf = surface_eval(chart, y)
    weights = w[None] * mesh.hx * mesh.hy * surf.sqrt_a
    f = layout.local_fields(st)
    basis = Field2D(*(getattr(f, k)[None] for k in ("eta", "deta", "eta3", "deta3", "ddeta3")))
    return QuadData(y, weights, surf, basis)


def _scatter(layout: DofLayout2D, Ke: np.ndarray) -> sps.csr_matrix:
    dofs = layout.element_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    K = sps.coo_matrix((Ke.ravel(), (rows, cols)), shape=(layout.n_dofs,) * 2).tocsr()
    K.sum_duplicates()
    return K


def _bilinear_form(layout, qd: QuadData, T: np.ndarray, strain) -> sps.csr_matrix:
    E = strain(qd.basis, qd.surf.expand(2))  # (n_el, nq, nloc, 2, 2)
    TE = np.einsum("eqabst,eqjst->eqjab", T, E)
    Ke = np.einsum("eq,eqiab,eqjab->eij", qd.weights, E, TE)
    return _scatter(layout, 0.5 * (Ke + Ke.transpose(0, 2, 1)))


def assemble_bending(layout: DofLayout2D, chart: SurfaceChart, tensor: np.ndarray | Callable,
                     order: int = 3, qd: QuadData | None = None) -> sps.csr_matrix:
    """Matrix of the form integral T^{al be si ta} rho_{si ta}(xi) rho_{al be}(eta) sqrt(a) dy.

    ``tensor`` is an array broadcastable to (n_el, nq, 2, 2, 2, 2) or a callable
    of the quadrature geometry returning one.
    """
    qd = qd or quad_data(layout, chart, order)
    T = tensor(qd.surf) if callable(tensor) else np.asarray(tensor)
    T = np.broadcast_to(T, qd.weights.shape + (2, 2, 2, 2))
    return _bilinear_form(layout, qd, T, rho_eval)


def assemble_membrane_penalty(layout: DofLayout2D, chart: SurfaceChart, mat: MaterialParams, kappa: float,
                              order: int = 4, qd: QuadData | None = None) -> sps.csr_matrix:
    """kappa * integral m^{al be si ta} gamma_{si ta} gamma_{al be} sqrt(a) dy with m the bending tensor structure."""
    if kappa <= 0:
        raise ValueError("penalty parameter must be positive")
    qd = qd or quad_data(layout, chart, order)
    c = twod_coefficients(mat)
    T = isotropic_tensor(c["a_trace"], c["a_shear"], qd.surf.a_AB)
    return kappa * _bilinear_form(layout, qd, T, gamma_eval)


def load_vector(layout: DofLayout2D, chart: SurfaceChart, loads: Loads, t: float,
                order: int = 4, qd: QuadData | None = None) -> np.ndarray:
    """Entries integral p^i(t) eta_i sqrt(a) dy for every basis function."""
    qd = qd or quad_data(layout, chart, order)
    p = loads.resultant(t, qd.y)  # (n_el, nq, 3)
    b = qd.basis
    loc = np.einsum("eqa,qla->eql", p[..., :2], b.eta[0]) + p[..., 2, None] * b.eta3
    Fe = np.einsum("eq,eql->el", qd.weights, loc)
    F = np.zeros(layout.n_dofs)
    np.add.at(F, layout.element_dofs, Fe)
    return F


# -- time stepping -----------------------------------------------------------------------

@dataclass
class MemoryState:
    """Trapezoidal approximation of integral_0^t exp(-k (t - s)) K_C xi(s) ds."""

    H: np.ndarray
    t: float = 0.0

    def advance(self, KC_prev: np.ndarray, KC_new: np.ndarray, k: float, dt: float) -> "MemoryState":
        q = math.exp(-k * dt)
        return MemoryState(q * self.H + 0.5 * dt * (q * KC_prev + KC_new), self.t + dt)


def direct_memory(KC_hist: Sequence[np.ndarray], k: float, dt: float) -> np.ndarray:
    """Composite trapezoid of the full convolution at the last time level (test oracle)."""
    n = len(KC_hist) - 1
    if n == 0:
        return np.zeros_like(KC_hist[0])
    w = np.full(n + 1, dt)
    w[0] = w[-1] = dt / 2
    decay = np.exp(-k * dt * (n - np.arange(n + 1)))
    return np.einsum("j,j...->...", w * decay, np.asarray(KC_hist))


@dataclass
class DisplacementHistory:
    dt: float
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    memory_norms: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def append(self, t, xi, rate=None, mem_norm=0.0, residual=0.0):
        self.times.append(float(t))
        self.snapshots.append(np.array(xi, copy=True))
        self.rates.append(np.zeros_like(xi) if rate is None else np.array(rate, copy=True))
        self.memory_norms.append(float(mem_norm))
        self.residuals.append(float(residual))

    @property
    def final(self):
        return self.snapshots[-1]

    def __len__(self):
        return len(self.snapshots)


class SPDFactor:
    """Jacobi-scaled sparse LU with symmetric ordering and no pivoting.

    Without pivoting the pivots of a symmetric matrix are those of its LDL^T
    factorisation, so all-positive pivots certify positive definiteness.
    """

    def __init__(self, S: sps.spmatrix, what: str = "step matrix"):
        S = sps.csc_matrix(S)
        diag = S.diagonal()
        if np.any(diag <= 0):
            raise IndefiniteSystem(f"{what} has a non-positive diagonal entry; reduce dt")
        self.S = S
        self.d = 1.0 / np.sqrt(diag)
        D = sps.diags(self.d)
        try:
            self.lu = splu(sps.csc_matrix(D @ S @ D), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:  # exactly singular
            raise IndefiniteSystem(f"{what} is singular: {exc}") from exc
        piv = self.lu.U.diagonal()
        if not np.all(piv > 0):
            raise IndefiniteSystem(
                f"{what} failed the positive-definiteness probe (min pivot {piv.min():.3e}); reduce dt"
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self.d * self.lu.solve(self.d * b)
        # one sweep of iterative refinement
        return x + self.d * self.lu.solve(self.d * (b - self.S @ x))


def spd_factor(S: sps.spmatrix, what: str = "step matrix") -> SPDFactor:
    return SPDFactor(S, what)


def backward_error(terms, mats_abs, f) -> float:
    """||sum(terms)|| / ||sum(|terms|)|| on the free dofs: a componentwise backward error."""
    r = sum(terms)
    scale = np.linalg.norm(sum(mats_abs)[f])
    return float(np.linalg.norm(r[f]) / max(scale, 1e-300))


@dataclass
class Problem2D:
    chart: SurfaceChart
    mat: MaterialParams
    mesh: Mesh2D
    loads: Loads
    clamped: tuple = ("y1=0",)
    supported: tuple = ()
    dt: float = 0.05
    T: float = 1.0
    mode: str = "scaled"
    epsilon: float | None = None
    kappa: float = 1e6
    plate_mode: bool | None = None
    order_bending: int = 3
    order_penalty: int = 4
    xi0: np.ndarray | None = None
    residual_tol: float = 1e-10

    def __post_init__(self):
        if self.mode not in ("scaled", "descaled"):
            raise ValueError(f"mode must be 'scaled' or 'descaled', got {self.mode!r}")
        if self.mode == "descaled" and not (self.epsilon and self.epsilon > 0):
            raise ValueError("descaled mode needs a positive epsilon")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.plate_mode is None:
            self.plate_mode = self.chart.name == "plate"

    @property
    def lhs_factor(self) -> float:
        return 1 / 3 if self.mode == "scaled" else self.epsilon**3 / 3

    @property
    def load_factor(self) -> float:
        # loads f(eps) = eps^2 f2, h(eps) = eps^3 h3 integrated over the physical thickness
        return 1.0 if self.mode == "scaled" else self.epsilon**3

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-12))


class Flexural2D:
    """Assembled operators of a Problem2D and its time integrator."""

    def __init__(self, prob: Problem2D):
        self.prob = prob
        mat = prob.mat
        self.layout = DofLayout2D(prob.mesh, prob.plate_mode, prob.clamped, prob.supported)
        self.qd_b = quad_data(self.layout, prob.chart, prob.order_bending)
        self.qd_p = quad_data(self.layout, prob.chart, prob.order_penalty)
        tens = tensors_2d(mat, self.qd_b.surf)
        self.k = tens.k_decay
        self.KA = assemble_bending(self.layout, prob.chart, tens.A2, qd=self.qd_b)
        self.KB = assemble_bending(self.layout, prob.chart, tens.B2, qd=self.qd_b)
        self.KC = assemble_bending(self.layout, prob.chart, tens.C2, qd=self.qd_b)
        if prob.plate_mode:
            self.KP = sps.csr_matrix(self.KA.shape)
        else:
            self.KP = assemble_membrane_penalty(self.layout, prob.chart, mat, prob.kappa, qd=self.qd_p)
        self.free = self.layout.free
        self._lu = None
        self._lu_dt = None

    def load(self, t: float) -> np.ndarray:
        return self.prob.load_factor * load_vector(self.layout, self.prob.chart, self.prob.loads, t, qd=self.qd_p)

    def _restrict(self, K):
        f = self.free
        return K[f][:, f]

    def step_matrix(self, dt: float) -> sps.csr_matrix:
        c = self.prob.lhs_factor
        return c * (self.KA + self.KP + self.KB / dt - 0.5 * dt * self.KC)

    def factor(self, dt: float):
        if self._lu is None or self._lu_dt != dt:
            self._lu = spd_factor(self._restrict(self.step_matrix(dt)))
            self._lu_dt = dt
        return self._lu

    def stationary(self, F: np.ndarray) -> np.ndarray:
        """Solution of c (K_A - K_C / k) xi = F: the constant-load long-time limit."""
        c = self.prob.lhs_factor
        K = self._restrict(c * (self.KA + self.KP - self.KC / self.k))
        x = np.zeros(self.layout.n_dofs)
        x[self.free] = spd_factor(K, "stationary matrix").solve(F[self.free])
        return x

    def run(self, xi0: np.ndarray | None = None, dt: float | None = None, T: float | None = None,
            check_residual: bool = True) -> DisplacementHistory:
        prob = self.prob
        dt = dt or prob.dt
        T = T or prob.T
        nsteps = int(math.ceil(T / dt - 1e-12))
        c = prob.lhs_factor
        n = self.layout.n_dofs
        xi = np.zeros(n) if xi0 is None else np.array(xi0, dtype=float)
        if xi0 is not None and np.any(xi[self.layout.constrained] != 0):
            raise ValueError("initial state violates the clamping constraints")
        if xi0 is not None and np.any(xi != 0):
            warnings.warn("nonzero initial state: the zero initial strain assumption does not hold",
                          stacklevel=2)
        lu = self.factor(dt)
        f = self.free
        q = math.exp(-self.k * dt)
        mem = MemoryState(np.zeros(n))
        hist = DisplacementHistory(dt)
        hist.append(0.0, xi)
        KAe = c * (self.KA + self.KP)
        KBe = c * self.KB
        absA, absB = abs(KAe), abs(KBe)
        for step in range(1, nsteps + 1):
            t = step * dt
            F = self.load(t)
            KCprev = self.KC @ xi
            rhs = F + KBe @ xi / dt + c * q * (mem.H + 0.5 * dt * KCprev)
            new = np.zeros(n)
            new[f] = lu.solve(rhs[f])
            mem = mem.advance(KCprev, self.KC @ new, self.k, dt)
            # re-assembled residual of the discrete variational equation
            terms = (KAe @ new, KBe @ (new - xi) / dt, -c * mem.H, -F)
            sizes = (absA @ np.abs(new), absB @ np.abs(new - xi) / dt, c * np.abs(mem.H), np.abs(F))
            res = backward_error(terms, sizes, f)
            if check_residual and res > prob.residual_tol:
                raise SolverFailure(f"step {step}: relative residual {res:.2e} exceeds {prob.residual_tol:.0e}")
            hist.append(t, new, (new - xi) / dt, np.linalg.norm(mem.H), res)
            xi = new
        self.memory = mem
        return hist

    def field(self, coeffs) -> FEField2D:
        return FEField2D(self.layout, coeffs)

    def bending_energy(self, xi) -> float:
        return float(self.prob.lhs_factor * xi @ (self.KA @ xi))


def step(solver: Flexural2D, xi_prev: np.ndarray, mem: MemoryState, t: float, dt: float):
    """One time step from (xi_prev, mem) to time t; returns (xi, mem)."""
    c = solver.prob.lhs_factor
    lu = solver.factor(dt)
    f = solver.free
    q = math.exp(-solver.k * dt)
    KCprev = solver.KC @ xi_prev
    rhs = solver.load(t) + c * solver.KB @ xi_prev / dt + c * q * (mem.H + 0.5 * dt * KCprev)
    xi = np.zeros_like(xi_prev)
    xi[f] = lu.solve(rhs[f])
    return xi, mem.advance(KCprev, solver.KC @ xi, solver.k, dt)


def solve2d(prob: Problem2D) -> DisplacementHistory:
    """Assemble and integrate Problem2D over [0, T]."""
    return Flexural2D(prob).run(prob.xi0)
