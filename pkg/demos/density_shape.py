"""Coarse text picture of the copula density for a few parameter values.

Each cell shows the count of 10^5 sampled pairs in a 10 x 10 grid over the
unit square, scaled to the mean count.  Run with ``python3 demos/density_shape.py``.
"""

import numpy as np

from evspectral.basis import trig_basis
from evspectral.sampler import sample_n

fam = trig_basis()
shades = " .:-=+*#%@"
for theta in [(0.0, 0.0), (0.5, 0.5), (1.0, 0.0)]:
    x = sample_n(fam, theta, 100_000, seed=1)
    counts, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=10, range=[[0, 1], [0, 1]])
    rel = counts / counts.mean()
    print(f"theta = {theta}   (x2 upward, x1 rightward; max/mean = {rel.max():.1f})")
    # transpose so that x2 increases upward on screen
    for row in rel.T[::-1]:
        print("   " + "".join(shades[min(int(v * 3), 9)] * 2 for v in row))
    print()
