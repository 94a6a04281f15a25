"""Command-line driver: ``zeronoise <subcommand> --config <path> [--out DIR] [--threads N]``.

Data goes to files in the output directory, progress to standard error.
The exit status is 0 only when every row of the run succeeded.
"""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import ergodic, report, sweep, transfer
from .config import parse_config
from .errors import ZeroNoiseError
from .grid import GridMeasure
from .noise import make_kernel, random_orbit

log = logging.getLogger("zeronoise")

SUBCOMMANDS = ("orbit", "ulam", "stationary", "lyapunov", "sweep", "domination", "basin",
               "degenerate-sets")


class _Run:
    """Shared plumbing for one subcommand invocation."""

    def __init__(self, config, out_dir, threads):
        self.config = config
        self.fmap = config.build_map()
        self.out = Path(out_dir or config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.threads = threads
        self.files, self.timings, self.errors = [], {}, {}
        self.params = report.parameter_text(dict(self.fmap.parameters))

    @property
    def epsilons(self):
        eps = self.config.kernel.get("epsilon")
        return (eps,) if eps is not None else self.config.epsilon_list

    def kernel(self, eps):
        k = self.config.kernel
        return make_kernel(self.fmap, eps, k.get("shape") or "ball", k.get("mask"), k.get("policy"))

    def grid(self):
        return sweep.make_grid(self.fmap, self.config.grid_cells)

    def rows(self, fn):
        """Apply ``fn(eps, seed)`` to every row; failures become status entries."""
        jobs = [(e, s) for e in self.epsilons for s in self.config.seeds]

        def guarded(job):
            t0 = time.perf_counter()
            try:
                row = dict(fn(*job), status="ok")
            except (ZeroNoiseError, ValueError, FloatingPointError) as exc:
                row = {"status": type(exc).__name__}
                self.errors[self._key(*job)] = f"{type(exc).__name__}: {exc}"
                log.error("eps=%g seed=%d failed: %s", job[0], job[1], exc)
            self.timings[self._key(*job)] = time.perf_counter() - t0
            row.update(map=self.fmap.name, parameters=self.params, epsilon=job[0], seed=job[1])
            return row

        if self.threads > 1 and len(jobs) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(guarded, jobs))
        return [guarded(j) for j in jobs]

    @staticmethod
    def _key(eps, seed):
        return f"eps={report.eps_tag(eps)},seed={seed}"

    def csv(self, name, columns, rows):
        self.files.append(report.write_csv(self.out / name, columns, rows, self.config.config_hash))

    def finish(self, command, t0, extra=None):
        self.timings["total"] = time.perf_counter() - t0
        report.write_manifest(self.out, self.config, command, self.files, self.timings,
                              dict(extra or {}, errors=self.errors))
        return self.files, not self.errors


KEY = ("map", "parameters", "epsilon", "seed", "status")


def _orbit(run):
    solver = run.config.solver
    summary = []

    def one(eps, seed):
        x0 = sweep.default_x0(run.fmap, seed, solver["x0"])
        orb = random_orbit(run.fmap, run.kernel(eps), x0, solver["orbit_steps"], seed)
        d = run.fmap.dimension
        noise = np.vstack([np.full((1, d), np.nan), orb.noise_draws])
        table = np.column_stack([np.arange(len(orb.points)), orb.points, noise])
        cols = ["step"] + [f"x{i}" for i in range(d)] + [f"v{i}" for i in range(d)]
        name = f"orbit_eps_{report.eps_tag(eps)}_seed_{seed}.csv"
        run.csv(name, cols, [[int(r[0]), *r[1:]] for r in table])
        return {"n_steps": solver["orbit_steps"], "rejected": orb.rejected_count, "file": name}

    summary = run.rows(one)
    run.csv("orbits.csv", KEY + ("n_steps", "rejected", "file"), summary)


def _ulam(run):
    grid = run.grid()
    solver = run.config.solver

    def one(eps, seed):
        op = transfer.build_ulam(run.fmap, run.kernel(eps), grid, solver["samples_per_cell"], seed)
        name = f"ulam_eps_{report.eps_tag(eps)}_seed_{seed}.bin"
        op.save(run.out / name)
        run.files.append(run.out / name)
        return {"n_active": grid.n_active, "nnz": op.matrix.nnz,
                "samples_per_cell": op.samples_per_cell,
                "max_column_sum_error": float(np.abs(op.column_sums() - 1).max()),
                "file": name}

    rows = run.rows(one)
    run.csv("ulam.csv", KEY + ("n_active", "nnz", "samples_per_cell", "max_column_sum_error",
                               "file"), rows)


def _stationary(run):
    grid = run.grid()
    solver = run.config.solver
    reference = sweep.reference_measure(run.fmap, grid, run.config.sweep["reference_factor"])
    metric = sweep.default_metric(grid)
    uniform = GridMeasure.uniform(grid)
    n_seeds = len(run.config.seeds)

    def one(eps, seed):
        op = transfer.build_ulam(run.fmap, run.kernel(eps), grid, solver["samples_per_cell"], seed)
        res = transfer.stationary_measure(op, solver["tol"], solver["max_iters"],
                                          return_info=True, method=solver["method"])
        name = sweep.measure_filename(eps, seed, n_seeds)
        res.measure.to_csv(run.out / name, nonzero_only=True,
                           preamble=[report.manifest_line(run.config.config_hash)])
        run.files.append(run.out / name)
        w1 = (transfer.measure_distance(res.measure, reference, metric)
              if reference is not None else np.nan)
        return {"iterations": res.iterations, "residual": res.residual,
                "L1_to_uniform": transfer.measure_distance(res.measure, uniform),
                "W1_to_reference": w1, "file": name}

    rows = run.rows(one)
    run.csv("stationary.csv", KEY + ("iterations", "residual", "L1_to_uniform",
                                     "W1_to_reference", "file"), rows)


def _lyapunov(run):
    solver = run.config.solver
    d = run.fmap.dimension

    def one(eps, seed):
        est = ergodic.lyapunov_spectrum(run.fmap, run.kernel(eps),
                                        sweep.default_x0(run.fmap, seed, solver["x0"]),
                                        solver["n_steps"], solver["renorm_period"], seed,
                                        solver["lanes"])
        row = {"n_steps": est.n_steps, "renorm_period": est.renorm_period, "lanes": est.lanes,
               "frame_source": est.frame_source, "chi_plus": est.chi_plus,
               "exponent_sum": est.exponent_sum, "logdet_mean": est.logdet_mean,
               "sum_identity_z": est.sum_identity_z()}
        for i in range(d):
            row[f"lambda_{i + 1}"] = est.exponents[i]
            row[f"se_{i + 1}"] = est.standard_error[i]
        return row

    cols = KEY + ("n_steps", "renorm_period", "lanes", "frame_source", "chi_plus",
                  "exponent_sum", "logdet_mean", "sum_identity_z")
    cols += tuple(f"{p}_{i + 1}" for i in range(d) for p in ("lambda", "se"))
    run.csv("lyapunov.csv", cols, run.rows(one))


def _domination(run):
    solver = run.config.solver
    rows = []
    for seed in run.config.seeds:
        t0 = time.perf_counter()
        rep = ergodic.domination_check(run.fmap, n_samples=solver["n_samples"], seed=seed)
        run.timings[f"seed={seed}"] = time.perf_counter() - t0
        rows.append({"map": run.fmap.name, "parameters": run.params, "seed": seed,
                     "samples": rep.samples, "lambda0_estimate": rep.lambda0_estimate,
                     "violations": len(rep.violations),
                     "cone_invariance_failures": rep.cone_invariance_failures,
                     "max_cone_ratio": rep.max_cone_ratio})
    run.csv("domination.csv", ("map", "parameters", "seed", "samples", "lambda0_estimate",
                               "violations", "cone_invariance_failures", "max_cone_ratio"), rows)


def _basin(run):
    grid = run.grid()
    solver = run.config.solver

    def one(eps, seed):
        kernel = run.kernel(eps)
        op = transfer.build_ulam(run.fmap, kernel, grid, solver["samples_per_cell"], seed)
        ref = transfer.stationary_measure(op, solver["tol"], solver["max_iters"],
                                          method=solver["method"])
        frac = ergodic.basin_fraction(run.fmap, kernel, ref, n_init=solver["n_init"],
                                      n_iter=solver["n_iter"], tol=solver["basin_tol"], seed=seed)
        return {"n_init": solver["n_init"], "n_iter": solver["n_iter"],
                "tol": solver["basin_tol"], "basin_fraction": frac}

    run.csv("basin.csv", KEY + ("n_init", "n_iter", "tol", "basin_fraction"), run.rows(one))


def _degenerate(run):
    grid = run.grid()
    tol = run.config.solver["degenerate_tol"]
    rep = ergodic.degenerate_sets(run.fmap, grid, tol)
    d = grid.dimension
    rows = []
    for name, cells in (("E1", rep.E1_cells), ("F1", rep.F1_cells)):
        for c, low in zip(cells, grid.lower_corners(cells)):
            rows.append([run.fmap.name, run.params, tol, name, int(c), *low])
    run.csv("degenerate_sets.csv", ("map", "parameters", "tolerance", "set", "cell_index")
            + tuple(f"low_x{i}" for i in range(d)), rows)
    return {"E1_count": len(rep.E1_cells), "F1_count": len(rep.F1_cells),
            "disjoint": rep.disjoint}


_DISPATCH = {"orbit": _orbit, "ulam": _ulam, "stationary": _stationary, "lyapunov": _lyapunov,
             "domination": _domination, "basin": _basin, "degenerate-sets": _degenerate}


def run_subcommand(name, config, out_dir=None, threads=1):
    """Run one subcommand; returns (written files, all rows succeeded)."""
    if name not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {name!r}; choose from {', '.join(SUBCOMMANDS)}")
    if name == "sweep":
        res = sweep.run_zero_noise_sweep(config, out_dir, threads)
        return res.files, res.ok
    t0 = time.perf_counter()
    run = _Run(config, out_dir, threads)
    extra = _DISPATCH[name](run)
    return run.finish(name, t0, extra)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="zeronoise", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="experiment config file")
    parser.add_argument("--out", type=Path, help="output directory (overrides [output])")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for rows")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = parse_config(args.config.read_text())
        files, ok = run_subcommand(args.subcommand, config, args.out, max(1, args.threads))
    except (ZeroNoiseError, OSError) as exc:
        log.error("%s", exc)
        return 2
    for f in files:
        log.info("wrote %s", f)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
