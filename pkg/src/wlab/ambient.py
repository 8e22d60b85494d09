"""Curved ambient space in normal coordinates.

The background metric is modeled as g = delta + eps^2 h where h is the
exact quadratic form determined by a scalar curvature Sc and a symmetric
Ricci tensor R at the origin,

    h_ab(y) = Sc/6 (|y|^2 d_ab - y_a y_b) - 1/3 d_ab R(y,y)
              - 1/3 |y|^2 R_ab + 1/3 (y_a (Ry)_b + y_b (Ry)_a).

Because h is a quadratic polynomial, every derivative tensor used here
(dh, d2h, Christoffel symbols and their gradients, the Ricci tensor of the
perturbed metric) is evaluated in closed form; finite differences appear
only inside test oracles.

All point-valued functions are vectorized: y may carry arbitrary leading
axes, and outputs gain the tensor axes on the right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Operational chart: the quadratic model is only meant to be evaluated on a
# bounded neighborhood of the origin.
CHART_RADIUS = 10.0

_EYE3 = np.eye(3)


# --------------------------------------------------------------------------
# curvature input
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureData:
    """Scalar curvature and Ricci tensor at the base point.

    The trace identity sc = tr(ric) is enforced at construction: in three
    dimensions the scalar curvature is the Ricci trace, so independent
    values would describe no geometry.
    """

    sc: float
    ric: np.ndarray
    # populated only by from_eigenvalues; lets tests confirm the stored
    # form reproduces the eigen-data it came from
    eigen: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        ric = np.asarray(self.ric, dtype=float)
        if ric.shape != (3, 3):
            raise ValueError(f"ric must be 3x3, got {ric.shape}")
        if np.max(np.abs(ric - ric.T)) > 1e-10:
            raise ValueError("ric must be symmetric")
        scale = max(1.0, np.max(np.abs(ric)))
        if abs(np.trace(ric) - self.sc) > 1e-8 * scale:
            raise ValueError(
                f"trace identity violated: tr(ric) = {np.trace(ric)} "
                f"but sc = {self.sc}")
        object.__setattr__(self, "ric", ric)

    @classmethod
    def from_matrix(cls, ric) -> "CurvatureData":
        ric = np.asarray(ric, dtype=float)
        return cls(sc=float(np.trace(ric)), ric=ric)

    @classmethod
    def from_eigenvalues(cls, alphas, frame=None) -> "CurvatureData":
        """Ricci with eigenvalues alphas in the given orthonormal frame.

        frame columns are the eigenvectors; identity by default.
        """
        a = np.asarray(alphas, dtype=float)
        if a.shape != (3,):
            raise ValueError("need exactly three eigenvalues")
        if frame is None:
            frame = _EYE3
        frame = np.asarray(frame, dtype=float)
        if np.max(np.abs(frame.T @ frame - _EYE3)) > 1e-10:
            raise ValueError("eigenframe must be orthonormal")
        ric = frame @ np.diag(a) @ frame.T
        obj = cls(sc=float(np.sum(a)), ric=0.5 * (ric + ric.T),
                  eigen=(tuple(a), frame.copy()))
        return obj

    @classmethod
    def from_json(cls, doc) -> "CurvatureData":
        """Parse {"sc": s, "ric": [[..]]} or {"eigenvalues": [a1,a2,a3]}."""
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        if "eigenvalues" in doc:
            return cls.from_eigenvalues(doc["eigenvalues"])
        if "ric" in doc:
            ric = np.asarray(doc["ric"], dtype=float)
            sc = float(doc["sc"]) if "sc" in doc else float(np.trace(ric))
            return cls(sc=sc, ric=ric)
        raise ValueError("curvature document needs 'ric' or 'eigenvalues'")

    @classmethod
    def flat(cls) -> "CurvatureData":
        return cls(sc=0.0, ric=np.zeros((3, 3)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.ric)


@dataclass(frozen=True)
class AmbientMetric:
    """The perturbed background g = delta + eps^2 h.

    eps = 0 is exactly the flat metric. For eps <= 1/2 the metric stays
    positive definite on the whole operational chart |y| <= CHART_RADIUS.
    """

    eps: float
    curv: CurvatureData

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    @classmethod
    def flat(cls) -> "AmbientMetric":
        return cls(eps=0.0, curv=CurvatureData.flat())

    @property
    def t(self) -> float:
        """Perturbation strength eps^2 multiplying h."""
        return self.eps ** 2


# --------------------------------------------------------------------------
# the quadratic form h and its derivatives
# --------------------------------------------------------------------------

def h_tensor(curv: CurvatureData, y) -> np.ndarray:
    """h_ab(y); shape (..., 3, 3), homogeneous of degree 2 in y."""
    S = curv.ric
    sc = curv.sc
    y = np.asarray(y, dtype=float)
    yy = np.einsum('...a,...b->...ab', y, y)
    r2 = np.einsum('...a,...a->...', y, y)
    Sy = np.einsum('ab,...b->...a', S, y)
    Syy = np.einsum('...a,...a->...', Sy, y)
    out = (sc / 6.0) * (r2[..., None, None] * _EYE3 - yy)
    out = out - (1.0 / 3.0) * Syy[..., None, None] * _EYE3
    out = out - (1.0 / 3.0) * r2[..., None, None] * S
    out = out + (1.0 / 3.0) * (np.einsum('...a,...b->...ab', y, Sy)
                               + np.einsum('...a,...b->...ab', Sy, y))
    return out


def dh_tensor(curv: CurvatureData, y) -> np.ndarray:
    """d_g h_ab(y); shape (..., 3, 3, 3) indexed [g, a, b]. Linear in y."""
    S = curv.ric
    sc = curv.sc
    y = np.asarray(y, dtype=float)
    Sy = np.einsum('ab,...b->...a', S, y)
    sh = y.shape[:-1]
    out = np.zeros(sh + (3, 3, 3))
    out += (sc / 3.0) * np.einsum('...g,ab->...gab', y, _EYE3)
    out -= (sc / 6.0) * np.einsum('ga,...b->...gab', _EYE3, y)
    out -= (sc / 6.0) * np.einsum('...a,gb->...gab', y, _EYE3)
    out -= (2.0 / 3.0) * np.einsum('...g,ab->...gab', Sy, _EYE3)
    out -= (2.0 / 3.0) * np.einsum('...g,ab->...gab', y, S)
    out += (1.0 / 3.0) * np.einsum('ga,...b->...gab', _EYE3, Sy)
    out += (1.0 / 3.0) * np.einsum('...a,bg->...gab', y, S)
    out += (1.0 / 3.0) * np.einsum('gb,...a->...gab', _EYE3, Sy)
    out += (1.0 / 3.0) * np.einsum('...b,ag->...gab', y, S)
    return out


def d2h_tensor(curv: CurvatureData) -> np.ndarray:
    """d_c d_g h_ab; constant (3, 3, 3, 3) array indexed [c, g, a, b].

    dh is linear in y with zero constant term, so the second derivative is
    read off by evaluating dh at the basis vectors.
    """
    return np.stack([dh_tensor(curv, _EYE3[c]) for c in range(3)], axis=0)


# --------------------------------------------------------------------------
# metric, Christoffels, curvature of the perturbed metric
# --------------------------------------------------------------------------

def _check_chart(y):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != 3:
        raise ValueError("points must have a trailing axis of length 3")
    r2 = np.einsum('...a,...a->...', y, y)
    if np.any(r2 > CHART_RADIUS ** 2):
        raise ValueError(
            f"point outside the modeled chart |y| <= {CHART_RADIUS}")
    return y


def metric_at(am: AmbientMetric, y) -> np.ndarray:
    """g_ab(y) = d_ab + eps^2 h_ab(y); shape (..., 3, 3)."""
    y = _check_chart(y)
    if am.t == 0.0:
        return np.broadcast_to(_EYE3, y.shape[:-1] + (3, 3)).copy()
    return _EYE3 + am.t * h_tensor(am.curv, y)


def christoffel_at(am: AmbientMetric, y) -> np.ndarray:
    """Exact Christoffel symbols of metric_at; (..., 3, 3, 3) as [k, l, m]."""
    y = _check_chart(y)
    sh = y.shape[:-1]
    if am.t == 0.0:
        return np.zeros(sh + (3, 3, 3))
    G = metric_at(am, y)
    Ginv = np.linalg.inv(G)
    dG = am.t * dh_tensor(am.curv, y)
    low = 0.5 * (np.einsum('...lkm->...klm', dG)
                 + np.einsum('...mkl->...klm', dG)
                 - dG)
    return np.einsum('...kx,...xlm->...klm', Ginv, low)


def christoffel_grad_at(am: AmbientMetric, y) -> np.ndarray:
    """d_d Gamma^k_lm in closed form; (..., 3, 3, 3, 3) as [d, k, l, m]."""
    y = _check_chart(y)
    sh = y.shape[:-1]
    if am.t == 0.0:
        return np.zeros(sh + (3, 3, 3, 3))
    G = metric_at(am, y)
    Ginv = np.linalg.inv(G)
    dG = am.t * dh_tensor(am.curv, y)
    d2G = am.t * d2h_tensor(am.curv)
    low = 0.5 * (np.einsum('...lkm->...klm', dG)
                 + np.einsum('...mkl->...klm', dG)
                 - dG)
    # d_d of the lowered symbol; d2G[c,g,a,b] = d_c d_g h_ab * t
    dlow = 0.5 * (np.einsum('dlkm->dklm', d2G)
                  + np.einsum('dmkl->dklm', d2G)
                  - d2G)
    dGinv = -np.einsum('...ka,...dab,...bx->...dkx', Ginv, dG, Ginv)
    out = (np.einsum('...dkx,...xlm->...dklm', dGinv, low)
           + np.einsum('...kx,dxlm->...dklm', Ginv, dlow))
    return out


def ricci_of_perturbed(am: AmbientMetric, y) -> np.ndarray:
    """Ricci tensor of the perturbed metric at y; (..., 3, 3).

    Full nonlinear curvature of g = delta + eps^2 h from the closed-form
    Christoffels and their gradients; equals eps^2 R + O(eps^4) uniformly
    on the chart.
    """
    y = _check_chart(y)
    sh = y.shape[:-1]
    if am.t == 0.0:
        return np.zeros(sh + (3, 3))
    Gam = christoffel_at(am, y)
    dGam = christoffel_grad_at(am, y)
    ric = (np.einsum('...iijk->...jk', dGam)
           - np.einsum('...jiik->...jk', dGam)
           + np.einsum('...iip,...pjk->...jk', Gam, Gam)
           - np.einsum('...ijp,...pik->...jk', Gam, Gam))
    return ric


def christoffel_dot_lower(curv: CurvatureData, y) -> np.ndarray:
    """t-derivative of the lowered Christoffels of delta + t h at t = 0.

    Returns (..., 3, 3, 3) indexed [k, l, m]:
    1/2 (d_l h_km + d_m h_kl - d_k h_lm).
    """
    dh = dh_tensor(curv, y)
    return 0.5 * (np.einsum('...lkm->...klm', dh)
                  + np.einsum('...mkl->...klm', dh)
                  - dh)


# --------------------------------------------------------------------------
# frame anisotropy functional on rotations
# --------------------------------------------------------------------------

def check_rotation(R, tol=1e-10) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if np.max(np.abs(R.T @ R - _EYE3)) > tol:
        raise ValueError("matrix is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix is orthogonal but not a rotation (det != 1)")
    return R


def f_function(curv: CurvatureData, R) -> float:
    """Anisotropy seen by a rotated frame: Ric(Re2, Re2) - Ric(Re3, Re3)."""
    R = check_rotation(R)
    v2 = R[:, 1]
    v3 = R[:, 2]
    S = curv.ric
    return float(v2 @ S @ v2 - v3 @ S @ v3)
