"""Numerical laboratory for bending energies of degenerating tori.

The package models a weakly curved three dimensional background through a
quadratic metric perturbation with prescribed curvature at the origin, and
measures Willmore-type energies of immersed tori and spheres in it:

  ambient             the perturbed metric, its exact derivatives, curvature
  surface             discrete geometry of parametric surfaces, energies,
                      Euler-Lagrange residuals, first variation
  moebius             inversion families of the square torus, the
                      area-preserving offset xi and its degenerate limit
  sphere_asymptotics  closed forms and cutoff integrals on the limit sphere
  morse               critical points of anisotropy on the rotation group,
                      crossing counts and multiplicity bounds
  experiments         end-to-end sweeps with CSV/JSON reports
  cli                 command line entry point

All heavy numerics are pure functions of immutable inputs; fixed seeds and
fixed summation orders make every report reproducible bitwise.
"""

__version__ = "0.1.0"
