"""Moebius degeneration machinery for area-constrained torus families.

A one-parameter family of area-preserving Moebius images of the Clifford
torus degenerates, as the parameter approaches the unit circle, to a
round sphere of radius (2 pi^2)^(1/4) with a small handle.  This module
solves the area constraint for the inversion offset xi_eta, builds the
image charts with exact derivatives, provides the blown-up handle map
and its limit, and carries the normal variation field of the family
together with its spherical limit profile.

The constraint integrals concentrate on a window of width ~xi around
the point of the torus closest to the inversion center, anisotropic by
the factor sqrt2 + 1 between the two angles; all quadrature here uses
an elliptic polar substitution aligned with that window.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .ambient import AmbientMetric
from .surface import clifford_torus, geometry

SQRT2 = math.sqrt(2.0)
A_TILDE = (2.0 * math.pi ** 2) ** 0.25
C0 = -SQRT2 / (8.0 * A_TILDE ** 2)  # equals -1/(8 pi)
AREA_TARGET = 4.0 * SQRT2 * math.pi ** 2
ANISO = SQRT2 + 1.0  # anisotropy ratio of the handle window
_CENTER_OFFSET = SQRT2 + 1.0


class ConvergenceError(RuntimeError):
    """A quadrature or root solve failed to reach its stated accuracy."""


# --------------------------------------------------------------- types ---


@dataclass(frozen=True)
class DegenerationState:
    """Solved area constraint at one value of the degeneration parameter."""

    eta: float
    xi: float
    xi_prime: float
    a_tilde: float = A_TILDE
    c0: float = C0


@dataclass(frozen=True)
class MoebiusParam:
    """Family parameter: a point of the open unit disk."""

    omega: complex

    def __post_init__(self):
        if abs(self.omega) >= 1.0:
            raise ValueError("family parameter must lie in the open unit disk")

    @property
    def r(self):
        return abs(self.omega)

    @property
    def eta(self):
        return 1.0 - abs(self.omega)


def _as_param(omega):
    if isinstance(omega, MoebiusParam):
        return omega
    return MoebiusParam(omega=complex(omega))


# ----------------------------------------------------------- inversion ---


def inversion(x0, eta, x):
    """Spherical inversion across the sphere of radius eta about x0."""
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    d = x - x0
    r2 = np.einsum("...a,...a->...", d, d)
    if np.any(r2 == 0.0):
        raise ValueError("inversion is undefined at its own center")
    return x0 + eta ** 2 * d / r2[..., None]


def inversion_differential(x0, eta, x):
    """Jacobian of the inversion, (eta^2/|x-x0|^2)(Id - 2 d w d-hat)."""
    x = np.asarray(x, dtype=float)
    d = x - np.asarray(x0, dtype=float)
    r2 = np.einsum("...a,...a->...", d, d)
    if np.any(r2 == 0.0):
        raise ValueError("inversion is undefined at its own center")
    hat = d / np.sqrt(r2)[..., None]
    eye = np.broadcast_to(np.eye(3), x.shape + (3,))
    return (eta ** 2 / r2)[..., None, None] * (
        eye - 2.0 * hat[..., :, None] * hat[..., None, :]
    )


# ------------------------------------------------- constraint integrals ---


def _panel_nodes(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _radial_nodes_inner(xi, r0, n_per):
    # sinh grading r = xi sinh(s) spends nodes evenly per decade between
    # the core scale xi and the matching radius r0
    smax = math.asinh(r0 / xi)
    n_pan = max(4, int(math.ceil(smax)))
    edges = np.linspace(0.0, smax, n_pan + 1)
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        s, w = _panel_nodes(a, b, n_per)
        rs.append(xi * np.sinh(s))
        ws.append(w * xi * np.cosh(s))
    return np.concatenate(rs), np.concatenate(ws)


def constraint_integrals(xi, r0=1.2, n_rad=14, n_ang=80, n_out=12):
    """The three window integrals of the area constraint at offset xi.

    Returns (J, K, JmXK) where J is the area integrand |Y|^-4 moment, K
    its xi-derivative moment with f = -2 Y_1 (so dJ/dxi = -2K), and JmXK
    the fused combination J - xi*K evaluated without cancellation.  The
    chart square is covered by an elliptic polar inner disk plus corner-
    split outer panels.
    """

    def core(ph, th):
        rho = SQRT2 + np.cos(ph)
        y1 = rho * np.cos(th) - (_CENTER_OFFSET + xi)
        y2_ = rho * np.sin(th)
        y3 = np.sin(ph)
        y2 = y1 * y1 + y2_ * y2_ + y3 * y3
        f = -2.0 * y1
        # |Y at xi=0|^2 - xi^2 equals |Y|^2 - xi*f exactly; the fused form
        # avoids the cancellation that kills J - xi*K near the solution
        y0sq_m = y2 - xi * f
        base = rho / y2 ** 2
        return base, base / y2 * f, base / y2 * y0sq_m

    acc = np.zeros(3)

    r, wr = _radial_nodes_inner(xi, r0, n_rad)
    T = (np.arange(n_ang) + 0.5) * 2.0 * np.pi / n_ang
    wT = 2.0 * np.pi / n_ang
    R = r[:, None]
    WR = wr[:, None]
    ph = R * np.cos(T)[None, :]
    th = R * np.sin(T)[None, :] / ANISO
    vals = core(ph, th)
    for i in range(3):
        acc[i] += np.sum(vals[i] * R * WR) * wT / ANISO

    # outer region: the chart square minus the inner disk, angular panels
    # split at the corner directions of the anisotropically scaled square
    tc = math.atan(ANISO)
    edges = [tc, math.pi - tc, math.pi + tc, 2.0 * math.pi - tc, 2.0 * math.pi + tc]

    def rbound(t):
        return np.minimum(
            np.pi / np.abs(np.cos(t)), ANISO * np.pi / np.abs(np.sin(t))
        )

    for a, b in zip(edges[:-1], edges[1:]):
        tn, tw = _panel_nodes(a, b, n_ang // 2)
        rb = rbound(tn)
        for t, twj, rbj in zip(tn, tw, rb):
            rn, rw = _panel_nodes(r0, min(2.5 * r0, rbj), n_out)
            if rbj > 2.5 * r0:
                rn2, rw2 = _panel_nodes(2.5 * r0, rbj, n_out)
                rn = np.concatenate([rn, rn2])
                rw = np.concatenate([rw, rw2])
            ph = rn * math.cos(t)
            th = rn * math.sin(t) / ANISO
            vals = core(ph, th)
            for i in range(3):
                acc[i] += np.sum(vals[i] * rn * rw) * twj / ANISO
    return tuple(float(v) for v in acc)


def area_of_inverted(eta, xi, check=True):
    """Area of the inverted torus at offset xi, eta^4 times the J moment.

    With check on, the quadrature is repeated at 1.5x density in every
    direction; failure to stabilize eight digits raises ConvergenceError.
    """
    if eta <= 0.0 or xi <= 0.0:
        raise ValueError("eta and xi must be positive")
    j = constraint_integrals(xi)[0]
    if check:
        j2 = constraint_integrals(xi, n_rad=21, n_ang=120, n_out=18)[0]
        if abs(j2 / j - 1.0) > 1e-8:
            raise ConvergenceError(
                f"area quadrature not converged at xi={xi:.3e}: "
                f"refinement moves the value by {abs(j2 / j - 1.0):.2e}"
            )
    return eta ** 4 * j


# ------------------------------------------------------------ solve_xi ---


def _check_eta_window(eta):
    if not 0.0 < eta < 1.0:
        raise ValueError("degeneration parameter must lie in (0, 1)")
    if eta > 0.5:
        warnings.warn(
            f"eta = {eta:g} is beyond the degeneration window (0, 1/2]; "
            "the constraint is still monotone and is solved as stated",
            stacklevel=3,
        )
    elif eta < 0.02:
        warnings.warn(
            f"eta = {eta:g} puts the handle scale near the double-precision "
            "floor of the window integrands; results lose digits",
            stacklevel=3,
        )


def solve_xi(eta):
    """Solve the area constraint for the inversion offset at parameter eta.

    Bisection from a bracket around the leading-order guess eta^2 times
    half the inverse limit radius, then Newton polish using the exact
    derivative identity dJ/dxi = -2K.  The derivative xi' of the solved
    offset with respect to eta comes from the implicit-function formula
    2J/(eta K), not finite differences: the downstream combination
    xi'*eta - 2*xi sits four orders below xi itself.
    """
    _check_eta_window(eta)
    guess = eta ** 2 / (2.0 * A_TILDE)

    def g(xi):
        return eta ** 4 * constraint_integrals(xi)[0] - AREA_TARGET

    # g decreases in xi; widen until the bracket straddles zero
    lo, hi = guess / 3.0, guess * 3.0
    for _ in range(80):
        if g(lo) > 0.0:
            break
        lo /= 2.0
    else:
        scan = ", ".join(f"({x:.3e}, {g(x):+.3e})" for x in np.geomspace(guess / 64, guess * 64, 8))
        raise ConvergenceError(f"no lower bracket for the area constraint; scan: {scan}")
    for _ in range(80):
        if g(hi) < 0.0:
            break
        hi *= 2.0
    else:
        scan = ", ".join(f"({x:.3e}, {g(x):+.3e})" for x in np.geomspace(guess / 64, guess * 64, 8))
        raise ConvergenceError(f"no upper bracket for the area constraint; scan: {scan}")

    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    xi = 0.5 * (lo + hi)

    for _ in range(3):
        j, k, _ = constraint_integrals(xi)
        step = (eta ** 4 * j - AREA_TARGET) / (eta ** 4 * 2.0 * k)
        xi = xi + step  # dJ/dxi = -2K, so Newton moves by +residual/(2K)
        if abs(step) < 1e-18 * xi:
            break

    j, k, _ = constraint_integrals(xi)
    resid = abs(eta ** 4 * j - AREA_TARGET)
    if resid > 1e-8 * AREA_TARGET:
        raise ConvergenceError(
            f"area constraint residual {resid:.3e} at eta={eta:g} "
            "exceeds the 1e-8 relative budget"
        )
    return DegenerationState(eta=float(eta), xi=float(xi), xi_prime=2.0 * j / (eta * k))


def stable_combination(state):
    """xi'*eta - 2*xi through the fused integral, cancellation free."""
    j, k, jmxk = constraint_integrals(state.xi)
    return 2.0 * jmxk / k


def sweep_rows(etas):
    """Constraint sweep rows (eta, xi, xi', eta^4/xi^2, scaled combination).

    The last column is eta^-4 (xi'*eta - 2*xi), whose limit is c0.
    Checks that the solved offsets increase strictly with eta.
    """
    rows = []
    for eta in etas:
        st = solve_xi(eta)
        rows.append(
            (
                st.eta,
                st.xi,
                st.xi_prime,
                st.eta ** 4 / st.xi ** 2,
                stable_combination(st) / st.eta ** 4,
            )
        )
    xis = [r[1] for r in sorted(rows)]
    if any(b <= a for a, b in zip(xis, xis[1:])):
        raise ConvergenceError("solved offsets are not strictly increasing in eta")
    return rows


# ------------------------------------------------------- family of maps ---


def _rot_z(alpha):
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def t_omega(omega, x, state=None):
    """The area-preserving family map applied to points.

    At omega = 0 this is the identity branch.  Otherwise the point is
    rotated so the parameter direction aligns with the x-axis,
    translated by the solved inversion center, inverted across the
    origin sphere of radius eta, reflected in the x-component, and
    rotated back.  Images for rotated parameters are rigid rotations of
    each other by construction.
    """
    par = _as_param(omega)
    x = np.asarray(x, dtype=float)
    if par.r == 0.0:
        return x.copy()
    if state is None:
        state = solve_xi(par.eta)
    alpha = math.atan2(par.omega.imag, par.omega.real)
    rot = _rot_z(alpha)
    y = x @ rot  # rows times R equals R^-1 applied to points
    y = y - np.array([_CENTER_OFFSET + state.xi, 0.0, 0.0])
    z = inversion((0.0, 0.0, 0.0), par.eta, y)
    z[..., 0] = -z[..., 0]
    return z @ rot.T


def t_omega_torus(omega, n_u, n_v, state=None):
    """Image of the Clifford torus under the family map, as a chart.

    The base chart is graded toward the handle preimage at chart point
    (0, 0) with the solved offset as feature scale; derivatives are
    pushed forward through the inversion by exact chain rules.
    """
    par = _as_param(omega)
    if par.r == 0.0:
        return clifford_torus(n_u, n_v)
    if state is None:
        state = solve_xi(par.eta)
    base = clifford_torus(n_u, n_v, handle_scale=state.xi)

    alpha = math.atan2(par.omega.imag, par.omega.real)
    rot = _rot_z(alpha)
    refl = np.diag([-1.0, 1.0, 1.0])
    post = rot @ refl  # applied after the inversion

    Y = base.X - np.array([_CENTER_OFFSET + state.xi, 0.0, 0.0])
    r2 = np.einsum("...a,...a->...", Y, Y)
    e2 = par.eta ** 2

    def dphi(V):
        yv = np.einsum("...a,...a->...", Y, V)
        return (e2 / r2)[..., None] * (V - 2.0 * (yv / r2)[..., None] * Y)

    def d2phi(U, V):
        yu = np.einsum("...a,...a->...", Y, U)
        yv = np.einsum("...a,...a->...", Y, V)
        uv = np.einsum("...a,...a->...", U, V)
        out = (-2.0 * uv / r2 ** 2)[..., None] * Y
        out = out - 2.0 * (
            (yv / r2 ** 2)[..., None] * U + (yu / r2 ** 2)[..., None] * V
        )
        out = out + (8.0 * yu * yv / r2 ** 3)[..., None] * Y
        return e2 * out

    def push(V):
        return V @ post.T

    Z = push((e2 / r2)[..., None] * Y)
    Zu = push(dphi(base.Xu))
    Zv = push(dphi(base.Xv))
    Zuu = push(d2phi(base.Xu, base.Xu) + dphi(base.Xuu))
    Zuv = push(d2phi(base.Xu, base.Xv) + dphi(base.Xuv))
    Zvv = push(d2phi(base.Xv, base.Xv) + dphi(base.Xvv))

    ps = replace(base, X=Z, Xu=Zu, Xv=Zv, Xuu=Zuu, Xuv=Zuv, Xvv=Zvv)
    gm = geometry(ps, AmbientMetric.flat())
    if float(np.sum(ps.w * gm.dsigma * gm.H)) < 0.0:
        ps = replace(ps, orient=-ps.orient)
    return ps


# ------------------------------------------------------ blown-up handle ---


def _y_scaled(phibar, thetabar, eta, xi):
    """eta^-2 Y(eta^2 phibar, eta^2 thetabar), evaluated cancellation free."""
    phibar = np.asarray(phibar, dtype=float)
    thetabar = np.asarray(thetabar, dtype=float)
    ph = eta ** 2 * phibar
    th = eta ** 2 * thetabar
    rho = SQRT2 + np.cos(ph)
    # cos(x) - 1 written as -2 sin^2(x/2) keeps the eta^-2 division exact
    q1 = (
        rho * (-2.0 * np.sin(0.5 * th) ** 2) / eta ** 2
        - 2.0 * np.sin(0.5 * ph) ** 2 / eta ** 2
        - xi / eta ** 2
    )
    q2 = rho * np.sin(th) / eta ** 2
    q3 = np.sin(ph) / eta ** 2
    return np.stack(np.broadcast_arrays(q1, q2, q3), axis=-1)


def z_map(phibar, thetabar, state):
    """Blown-up handle chart: the inverted torus near its closest point,
    rescaled to unit scale.  Accepts a solved state or a bare eta."""
    if not isinstance(state, DegenerationState):
        state = solve_xi(float(state))
    q = _y_scaled(phibar, thetabar, state.eta, state.xi)
    q2 = np.einsum("...a,...a->...", q, q)
    return q / q2[..., None]


def z_map_limit(phibar, thetabar):
    """Limit of the blown-up handle chart: inversion of the tangent plane
    at offset 1/(2 A) onto the sphere |z + A e_x| = A, A the limit radius."""
    phibar, thetabar = np.broadcast_arrays(
        np.asarray(phibar, dtype=float), np.asarray(thetabar, dtype=float)
    )
    q = np.stack(
        [np.full_like(phibar, -1.0 / (2.0 * A_TILDE)), ANISO * thetabar, phibar],
        axis=-1,
    )
    q2 = np.einsum("...a,...a->...", q, q)
    return q / q2[..., None]


# ------------------------------------------------------ variation field ---


def phi_eta(phit, thetat, state):
    """Normal speed of the degenerating family on the inverted torus,
    expressed over the base chart angles."""
    phit = np.asarray(phit, dtype=float)
    thetat = np.asarray(thetat, dtype=float)
    rho = SQRT2 + np.cos(phit)
    y1 = rho * np.cos(thetat) - (_CENTER_OFFSET + state.xi)
    y2 = rho * np.sin(thetat)
    y3 = np.sin(phit)
    ysq = y1 * y1 + y2 * y2 + y3 * y3
    comb = state.xi_prime * state.eta - 2.0 * state.xi
    h = 2.0 * (SQRT2 * np.cos(phit) + 1.0 - ANISO * np.cos(phit) * np.cos(thetat))
    return -(state.eta / ysq) * (h + comb * np.cos(phit) * np.cos(thetat))


def psi_eta(phibar, thetabar, state):
    """Rescaled variation field on the blown-up handle window."""
    e2 = state.eta ** 2
    return phi_eta(e2 * np.asarray(phibar), e2 * np.asarray(thetabar), state) / state.eta


def psi0(theta, phi):
    """Limit profile of the rescaled variation field on the limit sphere.

    theta is the colatitude about the symmetry axis through the handle
    point, phi the longitude around it.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return (SQRT2 / 2.0) * np.cos(theta) + (2.0 - SQRT2) / 4.0 * (
        1.0 - np.cos(theta)
    ) * np.cos(2.0 * phi)


def psi0_plane(phibar, thetabar):
    """The same limit profile over the tangent-plane chart.

    The two quadratic forms differ: the numerator carries the anisotropy
    factor linearly, the denominator squared.  That asymmetry is exact;
    both forms agree under the stereographic identification of the
    plane with the limit sphere.
    """
    phibar = np.asarray(phibar, dtype=float)
    thetabar = np.asarray(thetabar, dtype=float)
    num = phibar ** 2 + ANISO * thetabar ** 2 - SQRT2 / (8.0 * A_TILDE ** 2)
    den = phibar ** 2 + ANISO ** 2 * thetabar ** 2 + 1.0 / (4.0 * A_TILDE ** 2)
    return -num / den
