"""Zero-noise limits of the intermittent circle map.

For alpha >= 1 the neutral fixed point at 0 swallows all the mass as the noise
vanishes.  For alpha < 1 the noisy stationary measures instead settle on an
absolutely continuous limit, approximated here by a fine noiseless Ulam proxy.

    python demos/intermittent_zero_noise.py
"""

from zeronoise import build_catalog_map, build_ulam, make_kernel, measure_distance, stationary_measure
from zeronoise.grid import GridMeasure, circle_grid
from zeronoise.sweep import noiseless_proxy

CELLS = 4096
EPSILONS = (0.1, 0.0215443, 0.00464159, 0.001)

grid = circle_grid(CELLS)
for alpha in (1.5, 0.5):
    fmap = build_catalog_map("g_alpha", alpha=alpha)
    if alpha >= 1:
        ref, label = GridMeasure.point_mass(grid, [0.0]), "point mass at 0"
    else:
        ref, label = noiseless_proxy(fmap, CELLS), "noiseless proxy"
    print(f"\ng_alpha, alpha={alpha}: W1 distance to the {label}")
    previous = None
    for eps in EPSILONS:
        mu = stationary_measure(build_ulam(fmap, make_kernel(fmap, eps), grid, 64, seed=0))
        step = "" if previous is None else f"   L1 to previous level {measure_distance(mu, previous):.4f}"
        print(f"  eps={eps:<10g} W1={measure_distance(mu, ref, 'W1_circle'):.4f}{step}")
        previous = mu
    near_zero = mu.weights[:CELLS // 100].sum() + mu.weights[-CELLS // 100:].sum()
    print(f"  mass within 0.01 of the fixed point at eps={EPSILONS[-1]}: {near_zero:.3f}")
