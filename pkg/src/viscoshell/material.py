"""Isotropic Kelvin-Voigt material and the constitutive tensors it generates.

The viscosity coefficients are called ``theta_v`` and ``rho_v`` so they do not
collide with the chart map or with the change-of-curvature tensor.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import ElasticCaseUnsupported
from .geometry import SurfacePointData, VolumePointData


@dataclass(frozen=True)
class MaterialParams:
    lam: float
    mu: float
    theta_v: float
    rho_v: float

    def __post_init__(self):
        for name in ("lam", "mu", "theta_v", "rho_v"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.theta_v < 0 or self.rho_v < 0:
            raise ValueError("viscosity coefficients must be non-negative")

    @property
    def elastic(self) -> bool:
        return self.theta_v == 0

    @property
    def degenerate_viscosity(self) -> bool:
        """True when rho_v = 0: the limit tensors exist but B2 loses its shear part."""
        return self.rho_v == 0

    def require_viscous(self):
        if self.theta_v <= 0:
            raise ElasticCaseUnsupported(
                "theta_v must be strictly positive; the purely elastic limit follows a different reduction"
            )

    @property
    def k_decay(self) -> float:
        self.require_viscous()
        return (self.lam + 2 * self.mu) / (self.theta_v + self.rho_v)

    @property
    def Lambda_c(self) -> float:
        self.require_viscous()
        return self.lam / self.theta_v - (self.lam + 2 * self.mu) / (self.theta_v + self.rho_v)


def isotropic_tensor(c_trace, c_shear, G):
    """c_trace G^ij G^kl + c_shear (G^ik G^jl + G^il G^jk) for a batch of metrics G."""
    G = np.asarray(G)
    return (c_trace * np.einsum("...ij,...kl->...ijkl", G, G)
            + c_shear * (np.einsum("...ik,...jl->...ijkl", G, G) + np.einsum("...il,...jk->...ijkl", G, G)))


@dataclass
class ThreeDTensors:
    A3: np.ndarray
    B3: np.ndarray


def _zero_pattern(T):
    # the mixed components with an odd number of transverse indices vanish
    T[..., :2, :2, :2, 2] = 0.0
    T[..., :2, :2, 2, :2] = 0.0
    T[..., :2, 2, :2, :2] = 0.0
    T[..., 2, :2, :2, :2] = 0.0
    T[..., :2, 2, 2, 2] = 0.0
    T[..., 2, :2, 2, 2] = 0.0
    T[..., 2, 2, :2, 2] = 0.0
    T[..., 2, 2, 2, :2] = 0.0
    return T


def tensors_3d(mat: MaterialParams, vol: VolumePointData) -> ThreeDTensors:
    """Elasticity and viscosity tensors A^{ijkl}(eps), B^{ijkl}(eps) at volume points."""
    G = vol.g_AB.copy()
    # g^{a3} vanishes for the normal-offset chart; clear rounding noise
    G[..., :2, 2] = 0.0
    G[..., 2, :2] = 0.0
    A = _zero_pattern(isotropic_tensor(mat.lam, mat.mu, G))
    B = _zero_pattern(isotropic_tensor(mat.theta_v, mat.rho_v / 2, G))
    return ThreeDTensors(A, B)


def limit_metric(surf: SurfacePointData) -> np.ndarray:
    """g^{ij}(0) = diag(a^{al be}, 1)."""
    G = np.zeros(surf.area_a.shape + (3, 3))
    G[..., :2, :2] = surf.a_AB
    G[..., 2, 2] = 1.0
    return G


def tensors_3d_limit(mat: MaterialParams, surf: SurfacePointData) -> ThreeDTensors:
    """The eps -> 0 limits A^{ijkl}(0), B^{ijkl}(0)."""
    G = limit_metric(surf)
    A = _zero_pattern(isotropic_tensor(mat.lam, mat.mu, G))
    B = _zero_pattern(isotropic_tensor(mat.theta_v, mat.rho_v / 2, G))
    return ThreeDTensors(A, B)


@dataclass
class TwoDTensors:
    A2: np.ndarray
    B2: np.ndarray
    C2: np.ndarray
    k_decay: float
    Lambda_c: float
    coeffs: dict


def twod_coefficients(mat: MaterialParams) -> dict:
    """Scalar coefficients of the limit tensors: trace and shear parts."""
    mat.require_viscous()
    lam, mu, th, rh = mat.lam, mat.mu, mat.theta_v, mat.rho_v
    s = th + rh
    return {
        "a_trace": (2 * lam * rh**2 + 4 * mu * th**2) / s**2,
        "a_shear": 2 * mu,
        "b_trace": 2 * th * rh / s,
        "b_shear": rh,
        "c_trace": 2 * (th * mat.Lambda_c) ** 2 / s,
    }


def tensors_2d(mat: MaterialParams, surf: SurfacePointData) -> TwoDTensors:
    """Limit tensors of the flexural model, gathered in a TwoDTensors record."""
    c = twod_coefficients(mat)
    if mat.degenerate_viscosity:
        warnings.warn("rho_v = 0: B2 has no shear part and may be only semidefinite", stacklevel=2)
    G = surf.a_AB
    A2 = isotropic_tensor(c["a_trace"], c["a_shear"], G)
    B2 = isotropic_tensor(c["b_trace"], c["b_shear"], G)
    C2 = isotropic_tensor(c["c_trace"], 0.0, G)
    return TwoDTensors(A2, B2, C2, mat.k_decay, mat.Lambda_c, c)


def reduction_identity_residuals(mat: MaterialParams) -> tuple[float, float, float]:
    """Compare the limit tensor coefficients with those obtained by eliminating e_33.

    The transverse strain e_33 is eliminated from the 3D limit through its
    Volterra closed form; the resulting trace/shear coefficients, doubled to
    match the x3^2 moment, must equal the ones of ``twod_coefficients``.
    """
    c = twod_coefficients(mat)
    lam, mu, th, rh = mat.lam, mat.mu, mat.theta_v, mat.rho_v
    s = th + rh
    k, Lam = mat.k_decay, mat.Lambda_c
    # A^{ab33}(0) e33 + B^{ab33}(0) de33 with e33 = -th/s (m + Lam * memory)
    # and de33 = -(lam m + (lam + 2 mu) e33 + th dm) / s
    elim_a = lam - th / s * (th * Lam + lam)
    elim_b = th - th * th / s
    elim_c = th * th * k * Lam / s - lam * th * Lam / s  # enters with a minus sign
    r_a = abs(2 * elim_a - c["a_trace"]) + abs(2 * mu - c["a_shear"])
    r_b = abs(2 * elim_b - c["b_trace"]) + abs(2 * (rh / 2) - c["b_shear"])
    r_c = abs(-2 * elim_c - c["c_trace"])
    return float(r_a), float(r_b), float(r_c)


def lambda_k_residual(mat: MaterialParams, relative: bool = True) -> float:
    """|theta Lambda - (lambda - theta k)|, by default divided by max(1, lambda, theta k).

    The scaled form keeps the check meaningful at double precision when the
    terms are O(10), where one ulp already exceeds 1e-15.
    """
    r = abs(mat.theta_v * mat.Lambda_c - (mat.lam - mat.theta_v * mat.k_decay))
    if relative:
        r /= max(1.0, mat.lam, mat.theta_v * mat.k_decay)
    return r


def min_eig_symmetric(T: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """Smallest eigenvalue of a 2x2x2x2 tensor acting on symmetric 2x2 arguments.

    With ``metric`` (covariant a_{al be}) the quadratic form is measured against
    the natural norm |t|^2 = a_{ac} a_{bd} t^{ab} t^{cd}; otherwise the plain Frobenius norm.
    """
    # orthonormal basis of symmetric 2x2 matrices
    E = np.array([[[1, 0], [0, 0]], [[0, 0], [0, 1]], [[0, 1], [1, 0]]], dtype=float)
    E[2] /= np.sqrt(2)
    K = np.einsum("pab,...abcd,qcd->...pq", E, T, E)
    if metric is None:
        return np.linalg.eigvalsh(K)[..., 0]
    M = np.einsum("pab,...ac,...bd,qcd->...pq", E, metric, metric, E)
    K2 = K.reshape(-1, 3, 3)
    M2 = M.reshape(-1, 3, 3)
    out = np.array([eigh(k, m, eigvals_only=True)[0] for k, m in zip(K2, M2)])
    return out.reshape(K.shape[:-2])
