"""Acceptance suite: the ten headline checks at their stated tolerances.

Each test records a one-line verdict that ``conftest.py`` prints in an
"acceptance criteria" section at the end of the run.  Run directly with
``python tests/test_acceptance.py``.
"""

import json
import sys
import time
from pathlib import Path
from textwrap import dedent

import numpy as np
import pytest

from zeronoise import (basin_fraction, build_catalog_map, build_ulam, degenerate_sets,
                       domination_check, entropy_formula_rhs, lyapunov_spectrum, make_kernel,
                       measure_distance, parse_config, run_zero_noise_sweep, stationary_measure)
from zeronoise.cli import SUBCOMMANDS, main
from zeronoise.grid import GridMeasure, circle_grid, solid_torus_grid, torus_grid
from zeronoise.maps import GOLDEN
from zeronoise.transfer import duality_check, fourier_observables

LOG_LAMBDA = 0.962424          # log((3 + sqrt 5) / 2), rounded
PILOT = json.loads((Path(__file__).parent / "oracles" / "pilot_g_alpha.json").read_text())


@pytest.fixture
def verdict(request):
    """Record ``criterion N: PASS|FAIL detail`` and return the flag."""
    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
        request.node.user_properties.append(("acceptance", line))
        return ok
    return record


def sweep_config(text):
    return parse_config(dedent(text))


def monotone_with_slack(values, slack=0.10):
    return all(b <= (1 + slack) * a for a, b in zip(values, values[1:]))


def test_stationarity_of_doubling_map(verdict):
    fmap = build_catalog_map("doubling_d", d=2)
    kernel = make_kernel(fmap, 0.05)
    grid = circle_grid(4096)
    t0 = time.perf_counter()
    mu = stationary_measure(build_ulam(fmap, kernel, grid, 64, seed=0))
    elapsed = time.perf_counter() - t0
    l1 = measure_distance(mu, GridMeasure.uniform(grid))
    z = [c.z_score for c in duality_check(mu, fmap, kernel, fourier_observables(1), seed=0)]
    ok = l1 <= 5e-3 and max(z) < 3 and elapsed < 30
    assert verdict(1, ok, f"L1={l1:.3g} duality z={max(z):.2f} time={elapsed:.1f}s")


def test_cat_lyapunov_exponents(verdict):
    cat = build_catalog_map("cat")
    est = lyapunov_spectrum(cat, make_kernel(cat, 1e-3), [0.1, 0.2], 1_000_000, seed=0)
    err = np.abs(est.exponents - np.array([LOG_LAMBDA, -LOG_LAMBDA])).max()
    z = est.sum_identity_z()
    assert verdict(2, err <= 1e-3 and z <= 5,
                   f"exponents={est.exponents.round(6).tolist()} err={err:.2g} sum z={z:.2f}")


def test_cat_entropy_rhs(verdict):
    cat = build_catalog_map("cat")
    grid = torus_grid(64)
    rhs = entropy_formula_rhs(cat, GridMeasure.uniform(grid))
    rng = np.random.default_rng(0)
    gaps = []
    for _ in range(20):
        m1, m2 = (GridMeasure(grid, rng.random(grid.total_cells)) for _ in range(2))
        a = rng.random()
        mix = GridMeasure(grid, a * m1.weights + (1 - a) * m2.weights)
        gaps.append(abs(entropy_formula_rhs(cat, mix) - a * entropy_formula_rhs(cat, m1)
                        - (1 - a) * entropy_formula_rhs(cat, m2)))
    ok = abs(rhs - LOG_LAMBDA) <= 1e-6 and max(gaps) <= 1e-12
    assert verdict(3, ok, f"rhs={rhs:.9f} linearity gap={max(gaps):.1e}")


def test_domination(verdict):
    sol = domination_check(build_catalog_map("solenoid_alpha", alpha=0.5), n_samples=100_000)
    cat = domination_check(build_catalog_map("cat"), n_samples=100_000)
    exact = GOLDEN ** -2
    ok = (sol.lambda0_estimate <= 0.1 + 1e-6 and sol.cone_invariance_failures == 0
          and abs(cat.lambda0_estimate - exact) <= 1e-6
          and abs(cat.lambda0_estimate - 0.1459) <= 5e-5)
    assert verdict(4, ok, f"solenoid lambda0={sol.lambda0_estimate:.6f} "
                          f"cone failures={sol.cone_invariance_failures} "
                          f"cat lambda0={cat.lambda0_estimate:.7f}")


def test_degenerate_sets(verdict):
    grid = circle_grid(4096)
    f1 = {a: degenerate_sets(build_catalog_map("g_alpha", alpha=a), grid, 1e-6).F1_cells
          for a in (0.5, 1.5)}
    zero_cell = int(grid.cell_of([[0.0]])[0])
    sol = degenerate_sets(build_catalog_map("solenoid_alpha", alpha=0.5), solid_torus_grid(32, 8))
    ok = all(list(c) == [zero_cell] for c in f1.values()) and len(sol.E1_cells) == 0
    assert verdict(5, ok, f"g_alpha F1={ {a: list(map(int, c)) for a, c in f1.items()} } "
                          f"solenoid |E1|={len(sol.E1_cells)}")


@pytest.mark.slow
def test_stochastic_stability_alpha_above_one(verdict):
    cfg = sweep_config("""\
        [map]
        name = g_alpha
        alpha = 1.5
        [grid]
        cells = [8192]
        [sweep]
        lyapunov_steps = 0
        """)
    t0 = time.perf_counter()
    rep = run_zero_noise_sweep(cfg, threads=8, write=False)
    elapsed = time.perf_counter() - t0
    w1 = rep.column("W1_to_reference")
    pilot = np.array(list(PILOT["alpha_1.5_W1_to_delta0"].values()))
    ok = (rep.ok and monotone_with_slack(w1) and w1[0] >= 2 * w1[-1] and elapsed < 600
          and monotone_with_slack(pilot) and pilot[0] >= 2 * pilot[-1])
    assert verdict(6, ok, f"W1 {w1[0]:.4f} -> {w1[-1]:.4f} (factor {w1[0] / w1[-1]:.2f}, "
                          f"pilot {pilot[0] / pilot[-1]:.2f}) time={elapsed:.0f}s")


@pytest.mark.slow
def test_stochastic_stability_alpha_below_one(verdict):
    cfg = sweep_config("""\
        [map]
        name = g_alpha
        alpha = 0.5
        [grid]
        cells = [8192]
        [sweep]
        lyapunov_steps = 0
        """)
    rep = run_zero_noise_sweep(cfg, threads=8, write=False)
    cauchy = rep.column("L1_to_previous_eps")[1:]
    w1 = rep.column("W1_to_reference")
    pilot = np.array(list(PILOT["alpha_0.5_W1_to_proxy"].values()))
    ok = (rep.ok and bool(np.all(np.diff(cauchy) < 0)) and w1[0] >= 2 * w1[-1]
          and pilot[0] >= 2 * pilot[-1])
    assert verdict(7, ok, f"consecutive L1={cauchy.round(4).tolist()} "
                          f"W1 to proxy {w1[0]:.4f} -> {w1[-1]:.4f}")


@pytest.mark.slow
def test_uniform_entropy_positivity(verdict):
    cfg = sweep_config("""\
        [map]
        name = solenoid_alpha
        alpha = 1.5
        [grid]
        cells = [512, 16, 16]
        [sweep]
        lyapunov_steps = 0
        """)
    rep = run_zero_noise_sweep(cfg, write=False)
    rhs = rep.column("entropy_rhs")
    ok = rep.ok and bool(np.all(rhs > 0)) and rep.entropy_lower_bound == rhs.min()
    assert verdict(8, ok, f"entropy RHS over {len(rhs)} levels, lower bound "
                          f"c0={rep.entropy_lower_bound:.4f}")


@pytest.mark.slow
def test_basin_of_solenoid_measure(verdict):
    fmap = build_catalog_map("solenoid_alpha", alpha=0.5)
    kernel = make_kernel(fmap, 1e-2)
    mu = stationary_measure(build_ulam(fmap, kernel, solid_torus_grid(512, 64), seed=0))
    res = basin_fraction(fmap, kernel, mu, n_init=500, n_iter=100_000, tol=0.02,
                         return_details=True)
    assert verdict(9, res.fraction >= 0.95, f"basin fraction={res.fraction:.3f} "
                                            f"worst deviation={res.max_deviation.max():.4f}")


SMALL = """\
    [map]
    name = doubling_d
    [grid]
    cells = [256]
    [solver]
    n_steps = 10000
    n_samples = 1000
    n_init = 10
    n_iter = 2000
    orbit_steps = 50
    [sweep]
    epsilon_list = [0.1, 0.05]
    seeds = [0, 1]
    lyapunov_steps = 10000
    """


def csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_reproducibility(verdict, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(dedent(SMALL))
    differing = []
    for sub in SUBCOMMANDS:
        runs = []
        for k, threads in enumerate((1, 1, 4)):
            out = tmp_path / f"{sub}_{k}"
            assert main([sub, "--config", str(cfg), "--out", str(out),
                         "--threads", str(threads)]) == 0
            runs.append(csv_bytes(out))
        if not runs[0] or any(r != runs[0] for r in runs[1:]):
            differing.append(sub)
    assert verdict(10, not differing, f"{len(SUBCOMMANDS)} subcommands, byte-identical "
                                      f"across reruns and thread counts; differing={differing}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-rA"]))
