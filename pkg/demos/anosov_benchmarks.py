"""Uniformly hyperbolic benchmarks where every number is known in closed form.

    python demos/anosov_benchmarks.py
"""

import numpy as np

from zeronoise import (build_catalog_map, build_ulam, entropy_formula_rhs, jacobian,
                       lyapunov_spectrum, make_kernel, measure_distance, stationary_measure)
from zeronoise.grid import GridMeasure, circle_grid, torus_grid
from zeronoise.maps import GOLDEN

doubling = build_catalog_map("doubling_d", d=2)
grid = circle_grid(4096)
mu = stationary_measure(build_ulam(doubling, make_kernel(doubling, 0.05), grid, 64))
print(f"doubling map: L1 from Lebesgue {measure_distance(mu, GridMeasure.uniform(grid)):.2e}")

cat = build_catalog_map("cat")
est = lyapunov_spectrum(cat, make_kernel(cat, 1e-3), [0.1, 0.2], 200_000)
print(f"cat map exponents {est.exponents.round(6)} vs +-log((3 + sqrt 5)/2) = {np.log(GOLDEN):.6f}")
print(f"entropy formula with Lebesgue: {entropy_formula_rhs(cat, GridMeasure.uniform(torus_grid(64))):.6f}")

da = build_catalog_map("da_torus")
eig = np.sort(np.linalg.eigvals(jacobian(da, [[0.0, 0.0]])[0]).real)
print(f"DA deformation: eigenvalues at the fixed point {eig.round(6)} (neutral unstable direction)")
