"""eps-sweeps comparing the 3D scaled solution with the flexural limit, and identity checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import ElasticCaseUnsupported, MeshMismatch
from .flexural2d import Flexural2D, MemoryState, Mesh2D, Problem2D, direct_memory, gauss_rule
from .geometry import SurfaceChart, surface_eval
from .kinematics import rho_eval
from .loads import Loads
from .material import MaterialParams, lambda_k_residual, reduction_identity_residuals
from .shell3d import Mesh3D, Shell3D, average_jets, extrude, transverse_average


@dataclass
class ConvergenceSetup:
    chart: SurfaceChart
    mat: MaterialParams
    mesh2d: Mesh2D
    loads: Loads
    epsilons: tuple = (0.2, 0.1, 0.05)
    nz: int = 8
    dt: float = 0.05
    T: float = 1.0
    clamped: tuple = ("y1=0",)
    shear_sampling: bool = True
    kappa: float = 1e6
    mesh3d_base: Mesh2D | None = None

    def __post_init__(self):
        eps = [float(e) for e in self.epsilons]
        if len(set(eps)) < 3:
            raise ValueError("need >=3 epsilons")
        self.epsilons = tuple(sorted(eps, reverse=True))


@dataclass
class LimitStrainProbe:
    epsilon: float
    upsilon_norm: float
    shear_norm: float
    volterra_dev: float
    correlation: float
    upsilon_level_gap: float


@dataclass
class ConvergenceReport:
    rows: list
    probes: list
    flags: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)

    COLUMNS = ("epsilon", "err_h1st", "err_shear", "upsilon_norm", "volterra_dev",
               "err_h1st_rel", "x3_dependence", "e1_rho_correlation", "upsilon_level_gap")

    def column(self, name):
        return np.array([r[name] for r in self.rows])


def strictly_decreasing(v) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.diff(v) < 0))


def _slope(eps, v):
    eps, v = np.asarray(eps), np.asarray(v)
    if np.any(v <= 0):
        return float("nan")
    return float(np.polyfit(np.log(eps), np.log(v), 1)[0])


class _Reference2D:
    """The flexural limit solution, sampled once for all eps."""

    def __init__(self, setup: ConvergenceSetup):
        prob = Problem2D(setup.chart, setup.mat, setup.mesh2d, setup.loads, clamped=setup.clamped,
                         dt=setup.dt, T=setup.T, kappa=setup.kappa)
        self.solver = Flexural2D(prob)
        self.hist = self.solver.run()
        st, w = gauss_rule(3)
        m = setup.mesh2d
        self.y = m.element_origins[:, None, :] + st[None] * [m.hx, m.hy]
        surf = surface_eval(setup.chart, self.y)
        self.w = w[None] * m.hx * m.hy * surf.sqrt_a
        self.jets = [self.solver.field(x).jets(self.y) for x in self.hist.snapshots]

    def values(self, n):
        j = self.jets[n]
        val = np.concatenate([j.eta, j.eta3[..., None]], -1)
        grad = np.concatenate([j.deta, j.deta3[..., None, :]], -2)
        return val, grad


def _h1_sq(w, val, grad):
    return float(np.sum(w * (np.sum(val**2, -1) + np.sum(grad**2, (-1, -2)))))


def _layer_mean(a, nz):
    """Average over the two Gauss levels of every element (quadrature index k is fastest)."""
    return a.reshape(a.shape[0], -1, 2).mean(-1)


def run_convergence(setup: ConvergenceSetup, ref: _Reference2D | None = None) -> ConvergenceReport:
    """Solve the 3D problem for each eps, average across the thickness and compare with the 2D limit."""
    base3 = setup.mesh3d_base or setup.mesh2d
    if not base3.compatible(setup.mesh2d):
        raise MeshMismatch("3D footprint and 2D mesh differ")
    ref = ref or _Reference2D(setup)
    mat = setup.mat
    th, rh = mat.theta_v, mat.rho_v
    k, Lam = mat.k_decay, mat.Lambda_c
    q = math.exp(-k * setup.dt)
    rows, probes = [], []
    for eps in setup.epsilons:
        sh = Shell3D(setup.chart, mat, Mesh3D(base3, setup.nz), eps, setup.clamped, setup.shear_sampling)
        times, hist = sh.run(setup.loads, setup.dt, setup.T)
        if len(hist) != len(ref.hist):
            raise MeshMismatch("time grids of the 2D and 3D runs differ")
        # footprint geometry and limit curvature at the 3D quadrature points
        xq = sh.quad.x
        surf_q = surface_eval(setup.chart, xq[..., :2])
        x3 = xq[..., 2]
        wq = sh.quad.weights
        dt = setup.dt

        err_sq = err_ref = shear_sq = ups_sq = vol_sq = e33_sq = 0.0
        prev_d = None
        mem = np.zeros_like(x3)
        m_prev = np.zeros_like(x3)
        e1_last = rho_last = None
        gap_num = gap_den = 0.0
        for n in range(1, len(hist)):
            u = hist[n]
            ubar = transverse_average(sh.mesh, u)
            uval, ugrad = average_jets(base3, ubar, ref.y)
            xval, xgrad = ref.values(n)
            d_val, d_grad = uval - xval, ugrad - xgrad
            pv, pg = (np.zeros_like(d_val), np.zeros_like(d_grad)) if prev_d is None else prev_d
            err_sq += dt * (_h1_sq(ref.w, d_val, d_grad) + _h1_sq(ref.w, (d_val - pv) / dt, (d_grad - pg) / dt))
            # matching norm of the reference itself for a relative column
            if n == 1:
                pxv, pxg = np.zeros_like(xval), np.zeros_like(xgrad)
            err_ref += dt * (_h1_sq(ref.w, xval, xgrad) + _h1_sq(ref.w, (xval - pxv) / dt, (xgrad - pxg) / dt))
            pxv, pxg = xval, xgrad
            prev_d = (d_val, d_grad)

            e = sh.strain_at_quad(u) / eps  # (1/eps) e_{i||j}(eps)
            shear_sq += dt * float(np.sum(wq * (e[..., 0, 2] ** 2 + e[..., 1, 2] ** 2)))
            xi_jets = ref.solver.field(ref.hist.snapshots[n]).jets(xq[..., :2])
            rho = rho_eval(xi_jets, surf_q)
            ups = e[..., :2, :2] + x3[..., None, None] * rho
            ups_sq += dt * float(np.sum(wq * np.sum(ups**2, (-1, -2))))
            # odd-in-x3 part of Upsilon: mirror layer l -> nz-1-l and Gauss level k -> 1-k
            U = ups.reshape(setup.nz, -1, 2, 2, 2, 2, 2)
            mirror = U[::-1, :, :, :, ::-1]
            gap_num += float(np.sum((U - mirror) ** 2))
            gap_den += 4 * float(np.sum(e[..., :2, :2] ** 2))
            # transverse strain predicted from the in-plane trace by the Volterra closed form
            m_now = np.einsum("...ab,...ab->...", surf_q.a_AB, e[..., :2, :2])
            mem = q * mem + 0.5 * dt * (q * m_prev + m_now)
            m_prev = m_now
            e33_pred = -th / (th + rh) * (m_now + Lam * mem)
            # compare layer means: trilinear e_33 is constant across each layer
            dev = _layer_mean(e[..., 2, 2] - e33_pred, setup.nz)
            vol_sq += dt * float(np.sum(dev**2))
            e33_sq += dt * float(np.sum(_layer_mean(e[..., 2, 2], setup.nz) ** 2))
            e1_last, rho_last = e[..., :2, :2], -x3[..., None, None] * rho

        u_fin = hist[-1].reshape(-1, 3)
        ext = extrude(sh.mesh, transverse_average(sh.mesh, u_fin))
        x3dep = float(np.linalg.norm(u_fin - ext) / max(np.linalg.norm(u_fin), 1e-300))
        corr = float(np.corrcoef(e1_last.ravel(), rho_last.ravel())[0, 1])
        row = {
            "epsilon": eps,
            "err_h1st": math.sqrt(err_sq),
            "err_shear": math.sqrt(shear_sq),
            "upsilon_norm": math.sqrt(ups_sq),
            "volterra_dev": math.sqrt(vol_sq / max(e33_sq, 1e-300)),
            "err_h1st_rel": math.sqrt(err_sq / max(err_ref, 1e-300)),
            "x3_dependence": x3dep,
            "e1_rho_correlation": corr,
            "upsilon_level_gap": math.sqrt(gap_num / max(gap_den, 1e-300)),
        }
        rows.append(row)
        probes.append(LimitStrainProbe(eps, row["upsilon_norm"], row["err_shear"], row["volterra_dev"], corr,
                                       row["upsilon_level_gap"]))

    rep = ConvergenceReport(rows, probes)
    eps = rep.column("epsilon")
    for col in ("err_h1st", "err_shear", "upsilon_norm", "volterra_dev", "x3_dependence"):
        rep.flags[f"{col}_decreasing"] = strictly_decreasing(rep.column(col))
        rep.slopes[col] = _slope(eps, rep.column(col))
    e = rep.column("err_h1st")
    rep.flags["err_h1st_ratio"] = float(e[-1] / e[0])
    return rep


def limit_strain_probe(report: ConvergenceReport) -> tuple[list, bool]:
    """Upsilon norm decreasing with eps and e1 strongly correlated with -x3 rho at the smallest eps."""
    ups = [p.upsilon_norm for p in report.probes]
    ok = strictly_decreasing(ups) and report.probes[-1].correlation > 0.99
    return report.probes, ok


# -- scalar identities ------------------------------------------------------------------

def _poly(coeffs):
    c = np.asarray(coeffs, dtype=float)
    return np.polynomial.Polynomial(c)


def rk4_transverse_strain(mat: MaterialParams, coeffs, T: float = 1.0, dt: float = 1e-3):
    """Integrate (theta+rho) e' = -lam m - (lam+2mu) e - theta m' with e(0) = 0 by RK4.

    The nominal step is subdivided so that k*h stays below 0.05.
    Returns the time grid (spacing dt) and e on it.
    """
    mat.require_viscous()
    th, rh, lam, mu = mat.theta_v, mat.rho_v, mat.lam, mat.mu
    s = th + rh
    m = _poly(coeffs)
    dm = m.deriv()

    def rhs(t, e):
        return -(lam * m(t) + (lam + 2 * mu) * e + th * dm(t)) / s

    nsub = max(1, int(math.ceil(mat.k_decay * dt / 0.05)))
    h = dt / nsub
    nt = int(round(T / dt))
    ts = np.linspace(0, T, nt + 1)
    e = 0.0
    out = [e]
    t = 0.0
    for _ in range(nt):
        for _ in range(nsub):
            k1 = rhs(t, e)
            k2 = rhs(t + h / 2, e + h / 2 * k1)
            k3 = rhs(t + h / 2, e + h / 2 * k2)
            k4 = rhs(t + h, e + h * k3)
            e += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        out.append(e)
    return ts, np.array(out)


def closed_form_transverse_strain(mat: MaterialParams, coeffs, t: float) -> float:
    """-theta/(theta+rho) (m(t) + Lambda int_0^t exp(-k(t-s)) m(s) ds)."""
    m = _poly(coeffs)
    k, Lam = mat.k_decay, mat.Lambda_c
    if t == 0:
        conv = 0.0
    else:
        conv = quad(lambda s: math.exp(-k * (t - s)) * m(s), 0.0, t, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return -mat.theta_v / (mat.theta_v + mat.rho_v) * (m(t) + Lam * conv)


@dataclass
class VolterraCheck:
    max_dev: float
    derivative_dev: float


def volterra_ode_check(mat: MaterialParams, coeffs, n_compare: int = 101, dt: float = 1e-3) -> VolterraCheck:
    """Max |RK4 - closed form| on [0, 1] and the derivative identity checked by finite differences."""
    if mat.theta_v <= 0:
        raise ElasticCaseUnsupported("the Volterra closed form needs theta_v > 0")
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs[0] != 0:
        raise ValueError("the trajectory must start from m(0) = 0")
    ts, e_rk = rk4_transverse_strain(mat, coeffs, 1.0, dt)
    idx = np.linspace(0, len(ts) - 1, n_compare).round().astype(int)
    cf = np.array([closed_form_transverse_strain(mat, coeffs, ts[i]) for i in idx])
    dev = float(np.max(np.abs(cf - e_rk[idx])))
    # derivative identity at interior points via central differences of the closed form
    th, rh, lam, mu = mat.theta_v, mat.rho_v, mat.lam, mat.mu
    m = _poly(coeffs)
    dm = m.deriv()
    h = 1e-4
    dd = 0.0
    for t in np.linspace(0.1, 0.9, 9):
        fd = (closed_form_transverse_strain(mat, coeffs, t + h) - closed_form_transverse_strain(mat, coeffs, t - h)) / (2 * h)
        e = closed_form_transverse_strain(mat, coeffs, t)
        ident = -(lam * m(t) + (lam + 2 * mu) * e + th * dm(t)) / (th + rh)
        dd = max(dd, abs(fd - ident))
    return VolterraCheck(dev, dd)


def random_material(rng: np.random.Generator, theta_min: float = 1e-3) -> MaterialParams:
    return MaterialParams(lam=rng.uniform(0, 10), mu=rng.uniform(1e-3, 10),
                          theta_v=rng.uniform(theta_min, 10), rho_v=rng.uniform(0, 10))


def volterra_sweep(n_draws: int = 100, seed: int = 0):
    """Random parameters with m(t) = c1 t + c2 t^2 (+ c3 t^3); returns the max deviation."""
    rng = np.random.default_rng(seed)
    worst = VolterraCheck(0.0, 0.0)
    for _ in range(n_draws):
        mat = random_material(rng, theta_min=0.1)
        coeffs = np.concatenate([[0.0], rng.uniform(-1, 1, rng.integers(1, 4))])
        r = volterra_ode_check(mat, coeffs)
        worst = VolterraCheck(max(worst.max_dev, r.max_dev), max(worst.derivative_dev, r.derivative_dev))
    return worst


def verify_identities(mat: MaterialParams, n_draws: int = 1000, seed: int = 0, tol: float = 1e-10):
    """Residual table (name, residual, pass) for the limit-tensor reductions."""
    rows = []
    ra, rb, rc = reduction_identity_residuals(mat)
    rows += [("r_a", ra, ra < tol), ("r_b", rb, rb < tol), ("r_c", rc, rc < tol)]
    lk = lambda_k_residual(mat)
    rows.append(("theta_Lambda", lk, lk < 1e-15))
    rng = np.random.default_rng(seed)
    worst = np.zeros(4)
    for _ in range(n_draws):
        m = random_material(rng)
        worst = np.maximum(worst, [*reduction_identity_residuals(m), lambda_k_residual(m)])
    rows += [("r_a_random", worst[0], worst[0] < tol), ("r_b_random", worst[1], worst[1] < tol),
             ("r_c_random", worst[2], worst[2] < tol), ("theta_Lambda_random", worst[3], worst[3] < 1e-15)]
    # conditioning as theta_v -> 0+
    cond = 0.0
    for th in 10.0 ** -np.arange(1, 7):
        m = MaterialParams(mat.lam, mat.mu, th, mat.rho_v if mat.rho_v > 0 else 1.0)
        cond = max(cond, *reduction_identity_residuals(m))
    rows.append(("theta_to_zero", cond, cond < 1e-8))
    return rows


def memory_recurrence_check(KC, k: float, dt: float, history) -> float:
    """Relative difference between the recurrence and the direct trapezoid convolution at the last step."""
    KC_hist = [KC @ x for x in history]
    mem = MemoryState(np.zeros_like(KC_hist[0]))
    for n in range(1, len(KC_hist)):
        mem = mem.advance(KC_hist[n - 1], KC_hist[n], k, dt)
    ref = direct_memory(KC_hist, k, dt)
    return float(np.linalg.norm(mem.H - ref) / max(np.linalg.norm(ref), 1e-300))
