"""Hardy constants and the sweep toward gamma = -2.

Run: python3 demos/hardy_and_sweep.py
"""

import math

from altphillips import d7_gamma_threshold, make_exponents
from altphillips.spectrum import asymptotic_sweep, hardy_constant_numeric, jacobi_threshold
from altphillips.stability import theta_window

for d, s in ((3, 0.0), (5, -0.5), (7, 2 * math.sqrt(5) - 5)):
    sharp = ((d + s - 2) / 2) ** 2
    print(f"d={d} s={s:+.4f}: numeric {hardy_constant_numeric(d, s):.5f}, sharp {sharp:.5f}")

# widening the log-domain lowers the discrete value toward the sharp constant
for L in (10, 20, 40, 80):
    print(f"  d=3 s=0 on log-length {L:>2}: {hardy_constant_numeric(3, 0.0, math.exp(-L / 2), math.exp(L / 2)):.6f}")

g7 = d7_gamma_threshold()
print(f"\nd=7 gamma threshold {g7:.6f}")
for g in (g7 - 0.01, g7 + 0.01):
    win = theta_window(7, make_exponents(g).s)
    print(f"  gamma={g:+.4f}: theta window {'feasible' if win.feasible else 'empty'}")

print(f"\nsweep on the half-space in d=4 (limit threshold {jacobi_threshold(4):+.4f})")
for row in asymptotic_sweep([-1.0, -1.5, -1.9, -1.99], 4):
    print(f"  gamma={row.gamma:+.2f} s={row.s:+.4f} lambda={row.lam:+.1e} threshold={row.threshold:+.4f}"
          f" concentration={row.concentration:.4f}")
