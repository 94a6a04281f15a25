"""Ulam sweeps against the frozen direct-simulation pilot.

``oracles/pilot_g_alpha.json`` holds W1 distances of 10^8-step orbit
histograms (``oracles/generate_pilot.py``).  The sweep thresholds were
checked against these numbers before they were frozen.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from zeronoise import build_catalog_map, build_ulam, make_kernel, stationary_measure
from zeronoise.grid import GridMeasure, circle_grid
from zeronoise.sweep import noiseless_proxy
from zeronoise.transfer import measure_distance

PILOT = json.loads((Path(__file__).parent / "oracles" / "pilot_g_alpha.json").read_text())
CELLS = PILOT["cells"]


@pytest.mark.parametrize("key", ["alpha_1.5_W1_to_delta0", "alpha_0.5_W1_to_proxy"])
def test_pilot_meets_the_sweep_thresholds(key):
    w1 = np.array(list(PILOT[key].values()))
    assert np.all(w1[1:] <= 1.1 * w1[:-1])
    assert w1[0] / w1[-1] >= 2


@pytest.fixture(scope="module")
def proxy():
    return noiseless_proxy(build_catalog_map("g_alpha", alpha=0.5), CELLS, 8)


@pytest.mark.parametrize("alpha,eps", [(1.5, "0.1"), (1.5, "0.01"), (0.5, "0.1"),
                                       (0.5, "0.01")])
def test_ulam_agrees_with_simulation(alpha, eps, proxy):
    fmap = build_catalog_map("g_alpha", alpha=alpha)
    grid = circle_grid(CELLS)
    mu = stationary_measure(build_ulam(fmap, make_kernel(fmap, float(eps)), grid, 64, seed=0))
    if alpha >= 1:
        ref, key = GridMeasure.point_mass(grid, [0.0]), "alpha_1.5_W1_to_delta0"
    else:
        ref, key = proxy, "alpha_0.5_W1_to_proxy"
    assert measure_distance(mu, ref, "W1_circle") == pytest.approx(PILOT[key][eps], rel=0.1)
