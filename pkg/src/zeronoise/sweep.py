"""Zero-noise sweeps: stationary measures for decreasing noise levels.

Each ``(epsilon, seed)`` row is computed independently (own Ulam matrix, own
random streams), so a failing row never changes the others.  Distances
between consecutive noise levels are filled in afterwards, in order.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ergodic, report, transfer
from .errors import ZeroNoiseError
from .grid import GridMeasure, circle_grid, grid_for
from .maps import build_catalog_map, sample_domain
from .noise import make_kernel

log = logging.getLogger(__name__)

DEFAULT_CELLS = {"circle": (4096,), "torus2": (256, 256), "solid_torus": (512, 64, 64),
                 "skew_solid_torus": (64, 64, 16, 16)}

# noiseless maps whose first coordinate evolves on its own, by catalog name
_CIRCLE_FACTOR = {"solenoid_alpha": "g_alpha", "skew_torus": None}

SWEEP_COLUMNS = ("map", "parameters", "epsilon", "seed", "status", "W1_to_reference",
                 "L1_to_previous_eps", "chi_plus", "entropy_rhs", "residual", "iterations")


def make_grid(fmap, cells=None):
    return grid_for(fmap.domain, cells if cells is not None else DEFAULT_CELLS[fmap.domain.kind])


def default_metric(grid):
    return "W1_circle" if grid.dimension == 1 else "W1_projected"


def noiseless_proxy(fmap, n_circle, factor=8):
    """Stationary measure of the exact noiseless Ulam chain on a finer circle grid.

    The fine measure is coarsened back to ``n_circle`` cells.
    """
    fine = transfer.exact_ulam_1d(fmap, circle_grid(n_circle * factor))
    return transfer.stationary_measure(fine).coarsen(factor)


def reference_measure(fmap, grid, factor=8):
    """Declared physical-measure reference on ``grid`` (or its circle factor), or None."""
    kind = fmap.physical_reference[0]
    if kind == "point_mass":
        return GridMeasure.point_mass(grid, fmap.physical_reference[1])
    if kind == "lebesgue":
        return GridMeasure.uniform(grid)
    if kind == "noiseless_ulam":
        if grid.dimension == 1:
            return noiseless_proxy(fmap, grid.cells_per_dim[0], factor)
        base = _CIRCLE_FACTOR.get(fmap.name)
        if base:
            circle_map = build_catalog_map(base, **dict(fmap.parameters))
            return noiseless_proxy(circle_map, grid.cells_per_dim[0], factor)
    return None


@dataclass
class SweepRow:
    epsilon: float
    seed: int
    status: str = "ok"
    error: str = ""
    W1_to_reference: float = np.nan
    L1_to_previous_eps: float = np.nan
    chi_plus: float = np.nan
    entropy_rhs: float = np.nan
    residual: float = np.nan
    iterations: int = 0
    wall_time: float = 0.0
    measure: GridMeasure = field(default=None, repr=False)


@dataclass
class SweepReport:
    map_name: str
    parameters: dict
    rows: list
    files: list = field(default_factory=list)
    entropy_lower_bound: float = np.nan

    @property
    def ok(self):
        return all(r.status == "ok" for r in self.rows)

    def column(self, name, seed=None):
        rows = [r for r in self.rows if seed is None or r.seed == seed]
        return np.array([getattr(r, name) for r in rows], dtype=float)


def default_x0(fmap, seed, x0=None):
    if x0 is not None:
        return np.asarray(x0, dtype=float)
    return sample_domain(fmap.domain, 1, seed, stream=13)[0]


def compute_row(fmap, grid, kernel_spec, solver, eps, seed, lyapunov_steps):
    """Ulam matrix, stationary measure, chi+ and entropy RHS for one noise level."""
    row = SweepRow(eps, seed)
    t0 = time.perf_counter()
    try:
        kernel = make_kernel(fmap, eps, kernel_spec.get("shape") or "ball",
                             kernel_spec.get("mask"), kernel_spec.get("policy"))
        op = transfer.build_ulam(fmap, kernel, grid, solver.get("samples_per_cell"), seed)
        res = transfer.stationary_measure(op, solver.get("tol", transfer.DEFAULT_TOL),
                                          solver.get("max_iters", transfer.DEFAULT_MAX_ITERS),
                                          return_info=True, method=solver.get("method", "power"))
        row.measure, row.residual, row.iterations = res.measure, res.residual, res.iterations
        if fmap.splitting_hint is not None:
            row.entropy_rhs = ergodic.entropy_formula_rhs(fmap, res.measure)
        if lyapunov_steps:
            est = ergodic.lyapunov_spectrum(
                fmap, kernel, default_x0(fmap, seed, solver.get("x0")), lyapunov_steps,
                solver.get("renorm_period", 1), seed, solver.get("lanes", ergodic.DEFAULT_LANES))
            row.chi_plus = est.chi_plus
    except (ZeroNoiseError, ValueError, FloatingPointError, MemoryError) as exc:
        row.status = type(exc).__name__
        row.error = str(exc)
        row.measure = None
        log.error("row eps=%g seed=%d failed: %s", eps, seed, exc)
    row.wall_time = time.perf_counter() - t0
    log.info("eps=%g seed=%d %s (%.1fs)", eps, seed, row.status, row.wall_time)
    return row


def run_zero_noise_sweep(config, out_dir=None, threads=1, write=True):
    """Run every ``(epsilon, seed)`` row of a config and write the sweep outputs.

    Writes ``sweep.csv``, ``measure_eps_<eps>.csv`` per row (with a seed
    suffix when several seeds are configured) and ``manifest.json``.
    """
    t_start = time.perf_counter()
    fmap = config.build_map()
    grid = make_grid(fmap, config.grid_cells)
    metric = config.sweep.get("metric", "auto")
    metric = default_metric(grid) if metric == "auto" else metric
    reference = reference_measure(fmap, grid, config.sweep.get("reference_factor", 8))
    jobs = [(eps, seed) for eps in config.epsilon_list for seed in config.seeds]
    lyap = config.sweep.get("lyapunov_steps", 0)

    def work(job):
        return compute_row(fmap, grid, config.kernel, config.solver, job[0], job[1], lyap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]

    prev = {}
    for row in rows:                     # rows are ordered by decreasing epsilon
        if row.measure is None:
            prev[row.seed] = None
            continue
        if reference is not None:
            row.W1_to_reference = transfer.measure_distance(row.measure, reference, metric)
        before = prev.get(row.seed)
        if before is not None:
            row.L1_to_previous_eps = transfer.measure_distance(row.measure, before, "L1")
        prev[row.seed] = row.measure

    rhs = [r.entropy_rhs for r in rows if r.status == "ok" and np.isfinite(r.entropy_rhs)]
    result = SweepReport(fmap.name, dict(fmap.parameters), rows,
                         entropy_lower_bound=min(rhs) if rhs else np.nan)
    if write:
        out = Path(out_dir or config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.files = write_sweep(result, config, out)
        timings = {f"eps={report.eps_tag(r.epsilon)},seed={r.seed}": r.wall_time for r in rows}
        timings["total"] = time.perf_counter() - t_start
        errors = {f"eps={report.eps_tag(r.epsilon)},seed={r.seed}": f"{r.status}: {r.error}"
                  for r in rows if r.status != "ok"}
        report.write_manifest(out, config, "sweep", result.files, timings,
                              {"errors": errors, "metric": metric,
                               "entropy_lower_bound": result.entropy_lower_bound})
    return result


def measure_filename(eps, seed, n_seeds):
    tag = report.eps_tag(eps)
    return f"measure_eps_{tag}.csv" if n_seeds == 1 else f"measure_eps_{tag}_seed_{seed}.csv"


def write_sweep(result, config, out):
    h = config.config_hash
    params = report.parameter_text(result.parameters)
    files = [report.write_csv(out / "sweep.csv", SWEEP_COLUMNS, [
        {"map": result.map_name, "parameters": params, "epsilon": r.epsilon, "seed": r.seed,
         "status": r.status, "W1_to_reference": r.W1_to_reference,
         "L1_to_previous_eps": r.L1_to_previous_eps, "chi_plus": r.chi_plus,
         "entropy_rhs": r.entropy_rhs, "residual": r.residual, "iterations": r.iterations}
        for r in result.rows], h)]
    for r in result.rows:
        if r.measure is not None:
            path = out / measure_filename(r.epsilon, r.seed, len(config.seeds))
            r.measure.to_csv(path, nonzero_only=True, preamble=[report.manifest_line(h)])
            files.append(path)
    return files
