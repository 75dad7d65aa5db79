"""
Single-year fields for several nugget levels
============================================

One year of the max-stable process on a 30 x 30 grid, with a knot at every
grid point.  Small ``alpha`` gives smooth fields dominated by a few large
random effects; ``alpha`` near 1 approaches independent noise.
"""
import numpy as np

from hmaxstable.process import gallery

rng = np.random.default_rng(2024)
coords, fields = gallery(rng, m=30, alphas=(0.1, 0.4, 0.7, 0.9))

# Roughness: mean absolute difference between horizontal neighbours,
# relative to the field's own spread.
for alpha, z in fields.items():
    img = z.reshape(30, 30)
    rough = np.mean(np.abs(np.diff(img, axis=1))) / img.std()
    print(f"alpha={alpha:.1f}  sd={img.std():6.3f}  neighbour roughness={rough:.3f}")

# ``hmaxstable simulate --gallery --out DIR`` writes the same fields to CSV
# for plotting.
