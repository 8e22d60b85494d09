"""Closed forms and quadrature on the limit sphere.

The degenerate limit of the constrained family is a round sphere through
the origin; the handle disappears into the origin point.  This module
carries the orthonormal frame on that sphere, the Laplacian of the limit
profile, the first metric variation F of the mean curvature under the
quadratic background perturbation, and the cutoff integrals that pair F
and the profile away from the handle point, together with their closed
form targets.

Coordinates: theta is the colatitude about the +x axis through the
sphere center, so theta = 0 is the antipode of the handle and theta = pi
is the handle point at the origin; phi is the longitude around that
axis.  The integrands are singular at the handle, which is why every
integral here carries the complementary cutoff weight (1 - chi_delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ambient import CurvatureData
from .moebius import A_TILDE, ConvergenceError, psi0

SQRT2 = math.sqrt(2.0)
A_COEF = SQRT2 / 2.0  # axisymmetric amplitude of the limit profile
B_COEF = (2.0 - SQRT2) / 4.0  # cos(2 phi) amplitude of the limit profile


# ---------------------------------------------------------------- frame ---


@dataclass(frozen=True)
class SphereFrame:
    """Orthonormal frame data on the limit sphere at given (theta, phi).

    X is the position (the sphere passes through the origin), n0 the
    outer normal, (e1, e2) the coordinate tangent frame, f1 the
    auxiliary combination entering the mean-curvature variation.
    """

    X: np.ndarray
    n0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    f1: np.ndarray

    A = A_COEF
    B = B_COEF


def frame(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)

    def vec(a, b, c):
        return np.stack(np.broadcast_arrays(a, b, c), axis=-1)

    n0 = vec(ct, st * cp, st * sp)
    return SphereFrame(
        X=A_TILDE * vec(1.0 + ct, st * cp, st * sp),
        n0=n0,
        e1=vec(-st, ct * cp, ct * sp),
        e2=vec(np.zeros_like(ct), -sp, cp),
        f1=vec(st, -(1.0 + ct) * cp, -(1.0 + ct) * sp),
    )


# --------------------------------------------------------------- cutoff ---


@dataclass(frozen=True)
class CutoffSpec:
    """Radial C^2 cutoff: 1 inside radius delta, 0 outside 2*delta.

    The transition is the fixed quintic 1 - 10s^3 + 15s^4 - 6s^5, which
    matches value and two derivatives at both ends; its derivative
    bounds are |chi'| <= 1.875/delta and |chi''| <= (10/sqrt3)/delta^2,
    uniform in delta.
    """

    delta: float

    DPRIME_BOUND = 1.875
    DSECOND_BOUND = 10.0 / math.sqrt(3.0)

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.5:
            raise ValueError("cutoff radius must lie in (0, 1/2]")

    def _s(self, r):
        return np.clip((np.asarray(r, dtype=float) - self.delta) / self.delta, 0.0, 1.0)

    def chi(self, r):
        s = self._s(r)
        return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)

    def chi_prime(self, r):
        s = self._s(r)
        return -30.0 * s ** 2 * (1.0 - s) ** 2 / self.delta

    def chi_second(self, r):
        s = self._s(r)
        inside = (0.0 < s) & (s < 1.0)
        return np.where(inside, -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s), 0.0) / self.delta ** 2

    def kink_thetas(self):
        """Colatitudes where the spherical distance |X| crosses 2*delta
        and delta; the weight 1 - chi is 1 below the first, 0 above the
        second."""
        return (
            2.0 * math.acos(self.delta / A_TILDE),
            2.0 * math.acos(self.delta / (2.0 * A_TILDE)),
        )


# ------------------------------------------------------ profile Laplacian ---


def laplacian_psi0(theta, phi):
    """Intrinsic Laplacian of the limit profile on the sphere.

    Finite as theta -> 0, singular like 1/(1+cos theta) at the handle.
    Exact poles are rejected: the closed form divides by sin theta.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any((theta <= 0.0) | (theta >= math.pi)):
        raise ValueError("colatitude poles are outside the chart domain")
    ct = np.cos(theta)
    # (1-cos)/sin^2 = 1/(1+cos) exactly; the right side stays exact at
    # the axis and blows up at the handle, as the function itself does
    brace = ct - 2.0 / (1.0 + ct)
    return (-2.0 * A_COEF * ct + 2.0 * B_COEF * np.cos(2.0 * phi) * brace) / A_TILDE ** 2


# ------------------------------------------- mean-curvature variation F ---

_F_LAMBDA = None


def _build_f_lambda():
    import sympy as sp

    th, ph = sp.symbols("th ph", real=True)
    sc, r11, r12, r13, r22, r23, r33 = sp.symbols(
        "sc r11 r12 r13 r22 r23 r33", real=True
    )
    R = sp.Matrix([[r11, r12, r13], [r12, r22, r23], [r13, r23, r33]])

    n0 = sp.Matrix([sp.cos(th), sp.sin(th) * sp.cos(ph), sp.sin(th) * sp.sin(ph)])
    e1 = sp.Matrix([-sp.sin(th), sp.cos(th) * sp.cos(ph), sp.cos(th) * sp.sin(ph)])
    e2 = sp.Matrix([0, -sp.sin(ph), sp.cos(ph)])
    ex = sp.Matrix([1, 0, 0])
    f1 = sp.Matrix(
        [sp.sin(th), -(1 + sp.cos(th)) * sp.cos(ph), -(1 + sp.cos(th)) * sp.sin(ph)]
    )

    def ric(a, b):
        return (a.T * R * b)[0, 0]

    def h_ni(ei):
        one = 1 + (n0.T * ex)[0, 0]
        return (
            -sc / 6 * one * (ex.T * ei)[0, 0]
            + sp.Rational(1, 3) * one * ric(ex - n0, ei)
            + sp.Rational(1, 3) * (ex.T * ei)[0, 0] * ric(n0 + ex, n0)
        )

    # the closed h_ni carries a factor A^2; e_i differentiation divides by
    # A once, leaving a net factor A on both groups of terms
    div = sp.diff(h_ni(e1), th) + sp.diff(h_ni(e2), ph) / sp.sin(th)
    bracket = (
        -sc / 6 * (1 + sp.cos(th))
        - sp.Rational(1, 3) * ric(f1, e1) * sp.cos(th)
        - sp.Rational(1, 3) * (1 + sp.cos(th)) * ric(n0, ex)
        + sp.Rational(1, 3) * ric(n0, n0) * sp.cos(th)
        + sp.Rational(1, 3) * ric(ex, ex)
    )
    expr = sp.simplify(-div + bracket)
    return sp.lambdify((th, ph, sc, r11, r12, r13, r22, r23, r33), expr, modules="numpy")


def metric_derivative_H(theta, phi, curv: CurvatureData):
    """t-derivative at t = 0 of the mean curvature of the limit sphere
    under the background perturbation delta + t*h.

    Symbolic closed form; the frame derivative of the mixed components
    h_ni is differentiated exactly, not by finite differences.
    """
    global _F_LAMBDA
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any((theta <= 0.0) | (theta >= math.pi)):
        raise ValueError("colatitude poles are outside the chart domain")
    if _F_LAMBDA is None:
        _F_LAMBDA = _build_f_lambda()
    S = curv.ric
    out = _F_LAMBDA(
        theta, phi, curv.sc, S[0, 0], S[0, 1], S[0, 2], S[1, 1], S[1, 2], S[2, 2]
    )
    return A_TILDE * np.asarray(out, dtype=float)


# ----------------------------------------------------- cutoff integrals ---


def closed_form_targets(curv: CurvatureData):
    """Limit values of the cutoff integrals: the Ricci pairing, the F
    pairing, and their sum, each proportional to R22 - R33."""
    diff = curv.ric[1, 1] - curv.ric[2, 2]
    base = math.pi * A_TILDE * B_COEF * diff
    return {
        "I_ric": (4.0 / 3.0) * base,
        "I_F": 4.0 * base,
        "I_total": (16.0 / 3.0) * base,
    }


def _theta_panels(cut: CutoffSpec, n_band):
    lo, hi = cut.kink_thetas()
    breaks = [0.0, 0.5 * math.pi]
    w = 0.5 * math.pi
    while True:
        w *= 0.5
        nxt = math.pi - w
        if nxt >= lo:
            break
        breaks.append(nxt)
    breaks.append(lo)
    breaks.extend(np.linspace(lo, hi, n_band + 1)[1:])
    return breaks


def _quad(delta, curv, n_nodes, n_phi, n_band):
    cut = CutoffSpec(delta=delta)
    breaks = _theta_panels(cut, n_band)
    gx, gw = np.polynomial.legendre.leggauss(n_nodes)
    th = np.concatenate(
        [0.5 * (a + b) + 0.5 * (b - a) * gx for a, b in zip(breaks[:-1], breaks[1:])]
    )
    wt = np.concatenate(
        [0.5 * (b - a) * gw for a, b in zip(breaks[:-1], breaks[1:])]
    )
    ph = (np.arange(n_phi) + 0.5) * 2.0 * math.pi / n_phi
    wp = 2.0 * math.pi / n_phi

    TH = th[:, None]
    PH = ph[None, :]
    weight = 1.0 - cut.chi(2.0 * A_TILDE * np.cos(TH / 2.0))
    dsig = A_TILDE ** 2 * np.sin(TH)
    psi = psi0(TH, PH)
    n0 = frame(TH, PH).n0
    ric_nn = np.einsum("...a,ab,...b->...", n0, curv.ric, n0)

    h_sphere = 2.0 / A_TILDE
    f_ric = h_sphere * ric_nn * psi
    f_f = metric_derivative_H(TH, PH, curv) * laplacian_psi0(TH, PH)

    def total(fld):
        return float(np.sum(fld * weight * dsig * wt[:, None]) * wp)

    i_ric = total(f_ric)
    i_f = total(f_f)
    return {"I_ric": i_ric, "I_F": i_f, "I_total": i_ric + i_f}


def appendix_integrals(delta, curv: CurvatureData, check=True):
    """Cutoff pairings of the profile with the curvature terms.

    I_ric pairs the sphere mean curvature and the normal-normal Ricci
    component against the profile; I_F pairs the metric variation of the
    mean curvature against the profile Laplacian; I_total is their sum.
    The quadrature splits its colatitude panels at both cutoff kinks and
    refines dyadically toward the handle.  With check on, a doubled rule
    must reproduce every value to nine digits.
    """
    if not 0.02 <= delta <= 0.3:
        raise ValueError("cutoff radius outside the operating window [0.02, 0.3]")
    vals = _quad(delta, curv, n_nodes=16, n_phi=32, n_band=4)
    if check:
        fine = _quad(delta, curv, n_nodes=32, n_phi=64, n_band=8)
        scale = 1.0 + max(abs(v) for v in fine.values())
        for k in vals:
            if abs(vals[k] - fine[k]) > 1e-9 * scale:
                raise ConvergenceError(
                    f"cutoff integral {k} moved by {abs(vals[k] - fine[k]):.2e} "
                    f"under refinement at delta={delta:g}"
                )
    return vals


def richardson(deltas, values, order=2):
    """One Richardson stage for a halving sequence: eliminates the
    leading delta^order error term pairwise."""
    deltas = list(deltas)
    values = list(values)
    if len(deltas) < 2:
        raise ValueError("need at least two points to extrapolate")
    for a, b in zip(deltas[:-1], deltas[1:]):
        if not math.isclose(a, 2.0 * b, rel_tol=1e-12):
            raise ValueError("extrapolation expects successive halvings")
    fac = 2.0 ** order
    return [
        (fac * fine - coarse) / (fac - 1.0)
        for coarse, fine in zip(values[:-1], values[1:])
    ]


def sweep_rows(deltas, curv: CurvatureData):
    """CSV rows (delta, I_ric, I_F, I_total, three targets, three
    absolute errors) for a cutoff sweep at fixed curvature."""
    targ = closed_form_targets(curv)
    rows = []
    for d in deltas:
        vals = appendix_integrals(d, curv)
        rows.append(
            (
                d,
                vals["I_ric"],
                vals["I_F"],
                vals["I_total"],
                targ["I_ric"],
                targ["I_F"],
                targ["I_total"],
                abs(vals["I_ric"] - targ["I_ric"]),
                abs(vals["I_F"] - targ["I_F"]),
                abs(vals["I_total"] - targ["I_total"]),
            )
        )
    return rows


# ------------------------------------------------------ basic integrals ---


def basic_integrals():
    """Scalar quadratures against their exact values; the building
    blocks every closed-form target above reduces to."""
    gx, gw = np.polynomial.legendre.leggauss(64)
    tt = 0.5 * math.pi * (gx + 1.0)
    tw = 0.5 * math.pi * gw
    pp = (np.arange(256) + 0.5) * 2.0 * math.pi / 256
    pw = 2.0 * math.pi / 256

    def qt(f):
        return float(np.sum(f(tt) * tw))

    def qp(f):
        return float(np.sum(f(pp)) * pw)

    return [
        ("sin^3", qt(lambda t: np.sin(t) ** 3), 4.0 / 3.0),
        ("cos^3 sin", qt(lambda t: np.cos(t) ** 3 * np.sin(t)), 0.0),
        ("cos^2phi cos2phi", qp(lambda p: np.cos(p) ** 2 * np.cos(2 * p)), math.pi / 2.0),
        ("cos^4 sin", qt(lambda t: np.cos(t) ** 4 * np.sin(t)), 2.0 / 5.0),
        ("sin^3 cos^2", qt(lambda t: np.sin(t) ** 3 * np.cos(t) ** 2), 4.0 / 15.0),
        ("sin cos^2", qt(lambda t: np.sin(t) * np.cos(t) ** 2), 2.0 / 3.0),
        ("cos2phi sinphi cosphi", qp(lambda p: np.cos(2 * p) * np.sin(p) * np.cos(p)), 0.0),
    ]
