"""
Extremal coefficient against distance
=====================================

How strongly do extremes at two sites move together?  The extremal
coefficient runs from 1 (complete dependence) to 2 (independence).  Here it
is computed for two sites a distance ``h`` apart, with knots on a regular
lattice of varying spacing, and compared with the limit of a dense lattice.
"""
import numpy as np

from hmaxstable.process import extremal_curve, gevp_extremal_coeff

tau = 1.0
h = np.linspace(0.0, 6.0, 13)

# With no nugget a dense lattice tends to the Gaussian-kernel Smith process.
limit = np.array([gevp_extremal_coeff([0.0, 0.0], [0.0, x], tau) for x in h])

for alpha in (0.2, 0.5, 0.8):
    print(f"\nalpha = {alpha}")
    print("   h   " + "  ".join(f"d={d:<4}" for d in (0.5, 1.0, 2.0)) + "  smith")
    curves = {d: extremal_curve(h, d, alpha, tau=tau) for d in (0.5, 1.0, 2.0)}
    for i, x in enumerate(h):
        row = "  ".join(f"{curves[d][i]:.3f} " for d in (0.5, 1.0, 2.0))
        print(f"{x:5.1f}  {row}  {limit[i]:.3f}")

# A coarse lattice makes the curve bumpy: dependence depends on where the
# sites sit relative to the knots, not only on their distance.  Once the
# spacing is at most the bandwidth the curve is smooth, and the nugget
# (alpha < 1) caps the dependence at 2**alpha even for h = 0.
