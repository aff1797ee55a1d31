"""Independent symbolic oracles built directly from a chart map with sympy."""
import numpy as np
import sympy as sp

Y1, Y2, Z = sp.symbols("y1 y2 z", real=True)
YS = (Y1, Y2)


def _f(expr, syms=(Y1, Y2)):
    return sp.lambdify(syms, expr, "numpy")


class SymbolicSurface:
    """Fundamental forms and Christoffel symbols of theta(y) by exact differentiation."""

    def __init__(self, exprs):
        th = sp.Matrix([sp.sympify(e, locals={"y1": Y1, "y2": Y2}) for e in exprs])
        self.th = th
        a = [th.diff(v) for v in YS]
        n = a[0].cross(a[1])
        a3 = n / sp.sqrt(n.dot(n))
        A = sp.Matrix(2, 2, lambda i, j: a[i].dot(a[j]))
        Ai = A.inv()
        acon = [Ai[s, 0] * a[0] + Ai[s, 1] * a[1] for s in range(2)]
        self.a, self.a3, self.acon, self.A, self.Ai = a, a3, acon, A, Ai
        self.B = sp.Matrix(2, 2, lambda i, j: a3.dot(th.diff(YS[i], YS[j])))
        self.G = [[[acon[s].dot(th.diff(YS[i], YS[j])) for j in range(2)] for i in range(2)] for s in range(2)]

    def at(self, y):
        y1, y2 = float(y[0]), float(y[1])

        def ev(e):
            return float(_f(e)(y1, y2))

        return {
            "a_ab": np.array([[ev(self.A[i, j]) for j in range(2)] for i in range(2)]),
            "b_ab": np.array([[ev(self.B[i, j]) for j in range(2)] for i in range(2)]),
            "a3": np.array([ev(c) for c in self.a3]),
            "Gamma": np.array([[[ev(self.G[s][i][j]) for j in range(2)] for i in range(2)] for s in range(2)]),
        }

    def covariant_field(self, eta):
        """Displacement u = eta_i a^i as a sympy vector."""
        eta = [sp.sympify(e, locals={"y1": Y1, "y2": Y2}) for e in eta]
        return eta[0] * self.acon[0] + eta[1] * self.acon[1] + eta[2] * self.a3

    def _u_jets(self, eta, y, h=1e-3):
        """u and its derivatives by fourth-order central differences of the lambdified u."""
        f = sp.lambdify(YS, self.covariant_field(eta), "numpy", cse=True)

        def u(p):
            return np.array(f(p[0], p[1]), dtype=float).ravel()

        y = np.asarray(y, dtype=float)
        E = np.eye(2) * h
        c = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))
        du = np.array([sum(w * u(y + k * E[a]) for k, w in c) / h for a in range(2)])
        ddu = np.zeros((2, 2, 3))
        for a in range(2):
            for b in range(2):
                ddu[a, b] = sum(wa * wb * u(y + ka * E[a] + kb * E[b]) for ka, wa in c for kb, wb in c) / h**2
        return du, ddu

    def gamma(self, eta, y):
        """Linear part of the metric change: 1/2 (a_al . d_be u + a_be . d_al u)."""
        du, _ = self._u_jets(eta, y)
        a = np.array([[float(_f(c)(*y)) for c in ai] for ai in self.a])
        m = a @ du.T
        return 0.5 * (m + m.T)

    def rho(self, eta, y):
        """First variation of b_{al be}: a3 . d_al d_be u - Gamma^s_{al be} a3 . d_s u."""
        du, ddu = self._u_jets(eta, y)
        at = self.at(y)
        return np.einsum("abi,i->ab", ddu, at["a3"]) - np.einsum("sab,s->ab", at["Gamma"], du @ at["a3"])


class SymbolicVolume:
    """Theta(y, z) = theta(y) + z a3(y) with thin-domain derivatives, evaluated at z = eps x3."""

    def __init__(self, surf: SymbolicSurface):
        Th = surf.th + Z * surf.a3
        xs = (Y1, Y2, Z)
        g = [Th.diff(v) for v in xs]
        M = sp.Matrix.hstack(*g)
        self._g = _f(M, xs)
        self._dg = [_f(sp.Matrix.hstack(*[g[j].diff(xs[i]) for j in range(3)]), xs) for i in range(3)]
        self._Th = _f(Th, xs)

    def at(self, y, z):
        G = np.array(self._g(y[0], y[1], z), dtype=float)  # columns g_i
        Gcon = np.linalg.inv(G).T  # columns g^p
        gij = G.T @ G
        Gamma = np.zeros((3, 3, 3))
        for i in range(3):
            dG = np.array(self._dg[i](y[0], y[1], z), dtype=float)  # columns d_i g_j
            Gamma[:, i, :] = Gcon.T @ dG
        return {"g_cov": G.T, "g_ij": gij, "det": np.linalg.det(gij), "Gamma": Gamma,
                "Theta": lambda y1, y2, zz: np.array(self._Th(y1, y2, zz), dtype=float).ravel()}

    def strain(self, v, dv, y, z, eps):
        """Linear strain of U = v_p g^p in the (y1, y2, z) chart; dv is [p, i] with d_3 taken in x3 = z / eps."""
        G = np.array(self._g(y[0], y[1], z), dtype=float)
        Gc = np.linalg.inv(G).T
        dvz = np.array(dv, dtype=float).copy()
        dvz[:, 2] /= eps
        dU = np.zeros((3, 3))  # columns d_j U
        for j in range(3):
            dG = np.array(self._dg[j](y[0], y[1], z), dtype=float)
            dGc = -Gc @ dG.T @ Gc
            dU[:, j] = Gc @ dvz[:, j] + dGc @ v
        m = G.T @ dU
        return 0.5 * (m + m.T)
