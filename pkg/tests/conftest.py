"""Shared helpers for the test suite."""

from dataclasses import replace

import numpy as np

import wlab.surface as sf


def fit_order(scales, errors):
    """Least-squares slope of log(error) against log(scale)."""
    x = np.log(np.asarray(scales, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def perturb_chart(ps, disp, t):
    """Chart moved by t*disp, displacement derivatives taken spectrally.

    disp is a (n_u, n_v, 3) node field sampled from a smooth surface
    field, so Fourier collocation gives its chart derivatives to
    collocation accuracy; good enough for finite-difference energy
    oracles at steps well above 1e-12.
    """
    comp = [sf.chart_derivatives(ps, disp[..., c]) for c in range(3)]

    def stack(k):
        return np.stack([comp[c][k] for c in range(3)], axis=-1)

    return replace(
        ps,
        X=ps.X + t * disp,
        Xu=ps.Xu + t * stack(0),
        Xv=ps.Xv + t * stack(1),
        Xuu=ps.Xuu + t * stack(2),
        Xuv=ps.Xuv + t * stack(3),
        Xvv=ps.Xvv + t * stack(4),
    )
