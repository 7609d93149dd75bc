"""Axisymmetric cones and their stability verdicts.

Shoots profiles from the edge angle, keeps the certified ones, and compares
the bottom of the weighted spherical quotient with the threshold.

Run: python3 demos/cone_stability.py
"""

import math

from altphillips import make_exponents
from altphillips.cones import find_axisymmetric_cone, shoot_from_edge
from altphillips.spectrum import jacobi_lambda_latitude, lambda_s, spherical_section

for d in (3, 4, 5):
    for gamma in (-1.5, -1.0, -0.5):
        pack = make_exponents(gamma)
        for prof in find_axisymmetric_cone(d, pack):
            rep = lambda_s(spherical_section(prof))
            kind = "half-space" if prof.is_half_space else f"theta0={prof.theta0:.4f}"
            print(f"d={d} gamma={gamma:+.1f} {kind:>12}: lambda={rep.lam:+.2e} threshold={rep.threshold:+.4f}"
                  f" -> {'stable' if rep.stable else 'unstable'}")

# a profile shot from a non-equatorial edge angle does not reach the axis regularly
prof = shoot_from_edge(math.pi / 3, 3, make_exponents(-0.5))
print(f"\nshot from pi/3: axis defect {prof.axis_defect:+.3e}, collapsed={prof.collapsed}")

# the minimal-cone side: latitude spheres
for d, theta0 in ((4, math.pi / 3), (8, 1.4), (8, math.pi / 2)):
    rep = jacobi_lambda_latitude(d, theta0)
    print(f"latitude d={d} theta0={theta0:.3f}: Lambda={rep.lam:+.4f} (closed form {rep.meta['closed_form']:+.4f}),"
          f" threshold {rep.threshold:+.4f} -> {'stable' if rep.stable else 'unstable'}")
