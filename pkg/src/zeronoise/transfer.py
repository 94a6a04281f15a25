"""Ulam discretization of the averaged transfer operator and its fixed point.

Column ``j`` of the matrix is the law of the cell containing ``f0(x) + v``
when ``x`` is uniform in cell ``j`` and ``v`` follows the noise kernel.  The
stationary measure of the noisy system is approximated by the right fixed
vector of this column-stochastic matrix.

On the circle with a uniform one-dimensional kernel, the noise integral is
done exactly: each sample ``y = f0(x)`` contributes the overlap of
``[y - eps, y + eps]`` with every cell, so only the within-cell positions are
sampled.  Other geometries sample the noise as well.
"""

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, DiscretizationError, MetricError
from .grid import Grid, GridMeasure
from .noise import MAX_TRIES, NoiseKernel, validate_kernel
from .rng import ULAM, SAMPLER, CounterStream, stream_id

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000
MAGIC = b"ZNULAM01"


def default_samples_per_cell(dimension):
    return 32 if dimension >= 3 else 64


@dataclass
class UlamOperator:
    """Column-stochastic matrix over the active cells of ``grid``."""

    grid: Grid
    matrix: sp.csr_matrix
    samples_per_cell: int
    kernel: NoiseKernel = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.matrix.shape[0]

    def column_sums(self):
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def apply(self, measure):
        """Push a measure forward by one noisy step."""
        w = self.matrix @ measure.active_weights
        return GridMeasure(self.grid, w)

    def header(self):
        return {"grid": self.grid.describe(),
                "kernel": None if self.kernel is None else self.kernel.describe(),
                "seed": self.seed, "samples_per_cell": self.samples_per_cell,
                "meta": self.meta}

    def save(self, path):
        """Binary file: magic, JSON header, then CSR arrays (little endian)."""
        m = self.matrix
        head = json.dumps(self.header(), sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQQ", len(head), m.shape[0], m.nnz))
            fh.write(head)
            fh.write(m.indptr.astype("<i8").tobytes())
            fh.write(m.indices.astype("<i8").tobytes())
            fh.write(m.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        from .domain import DomainDescriptor

        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"{path}: not a Ulam operator file")
            hlen, n, nnz = struct.unpack("<QQQ", fh.read(24))
            head = json.loads(fh.read(hlen))
            indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8")
            indices = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
            data = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
        g, d = head["grid"], head["grid"]["domain"]
        domain = DomainDescriptor(d["kind"], tuple(d["periodic"]),
                                  tuple(tuple(b) for b in d["bounds"]),
                                  tuple(tuple(p) for p in d["discs"]), d["disc_radius"])
        grid = Grid(domain, tuple(g["cells_per_dim"]))
        k = head["kernel"]
        kernel = None if k is None else NoiseKernel(
            k["epsilon"], k["dimension"], k["support_shape"], tuple(k["mask"]),
            k["boundary_policy"])
        matrix = sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(n, n))
        return cls(grid, matrix, head["samples_per_cell"], kernel, head["seed"], head["meta"])


def _per_cell_uniforms(stream, cols, words):
    """Uniforms at stream position ``c`` for every (sorted) cell index ``c``."""
    cols = np.asarray(cols)
    first = int(cols[0])
    return stream.uniforms(first, int(cols[-1]) - first + 1, words)[cols - first]


def _stratify(u, keys):
    """Latin-hypercube jitter: sample ``i`` of a cell lands in stratum ``rank(keys[i])``.

    Every sample stays uniform on [0, 1); each cell's ``spc`` samples hit
    each of ``spc`` equal strata exactly once.
    """
    ranks = np.argsort(np.argsort(keys, axis=-1), axis=-1)
    return (ranks + u) / u.shape[-1]


def _cell_samples(grid, cols, spc, seed):
    """``spc`` uniform points inside each listed cell, shape (len(cols), spc, d).

    The first coordinate is stratified within each cell.
    """
    d = grid.dimension
    u = _per_cell_uniforms(CounterStream(seed, stream_id(ULAM, 0)), cols, spc * d)
    u = u.reshape(len(cols), spc, d)
    keys = _per_cell_uniforms(CounterStream(seed, stream_id(ULAM, 2)), cols, spc)
    u[..., 0] = _stratify(u[..., 0], keys)
    return grid.lower_corners(cols)[:, None, :] + u * grid.widths


def _sampled_noise(kernel, cols, spc, seed, attempt=0):
    """Offsets per cell; word 0 (hence the first noised coordinate) is stratified."""
    w = kernel.words_per_draw
    u = _per_cell_uniforms(CounterStream(seed, stream_id(ULAM, 1, attempt)), cols, spc * w)
    u = u.reshape(len(cols), spc, w)
    keys = _per_cell_uniforms(CounterStream(seed, stream_id(ULAM, 3, attempt)), cols, spc)
    u[..., 0] = _stratify(u[..., 0], keys)
    return kernel.offsets(u)


def _exact_1d_block(fmap, kernel, grid, cols, spc, seed):
    """Exact uniform-noise columns on a circle grid: returns (rows, cols, values)."""
    n = grid.cells_per_dim[0]
    x = _cell_samples(grid, cols, spc, seed)[..., 0]
    y = fmap.evaluate(x.reshape(-1, 1)).reshape(len(cols), spc)
    # unwrap each column's images around its first sample
    y = y[:, :1] + ((y - y[:, :1] + 0.5) % 1.0 - 0.5)
    eps = 0.0 if kernel is None else kernel.epsilon
    ymin, ymax = y.min(axis=1), y.max(axis=1)
    ybar = y.mean(axis=1)
    c_lo = np.floor((ymin - eps) * n).astype(np.int64)
    c_hi = np.floor((ymax + eps) * n).astype(np.int64)
    nb = c_hi - c_lo + 2                       # boundaries per column
    owner = np.repeat(np.arange(len(cols)), nb)
    start = np.cumsum(nb) - nb
    b = c_lo[owner] + (np.arange(owner.size) - start[owner])
    t = b / n
    if eps > 0:
        # H(t) = mean_k clip((t - y_k + eps) / 2eps, 0, 1), linear in the overlap zone
        H = (t - ybar[owner] + eps) / (2 * eps)
        explicit = (t < ymax[owner] - eps) | (t > ymin[owner] + eps)
        idx = np.flatnonzero(explicit)
        for chunk in np.array_split(idx, max(1, idx.size // 200_000 + 1)):
            z = (t[chunk, None] - y[owner[chunk]] + eps) / (2 * eps)
            H[chunk] = np.clip(z, 0.0, 1.0).mean(axis=1)
    else:
        # empirical CDF of the images
        H = np.empty(t.size)
        for chunk in np.array_split(np.arange(t.size), max(1, t.size // 200_000 + 1)):
            H[chunk] = (y[owner[chunk]] < t[chunk, None]).mean(axis=1)
    mass = np.diff(H)
    keep = np.ones(mass.size, dtype=bool)
    keep[(start + nb - 1)[:-1]] = False        # differences across column boundaries
    mass, cell, own = mass[keep], (b[:-1][keep]) % n, owner[:-1][keep]
    nz = mass > 0
    return cell[nz], np.asarray(cols)[own[nz]], mass[nz]


def _sampled_block(fmap, kernel, grid, cols, spc, seed):
    """Monte Carlo columns: (rows, cols, values) in flat cell numbering."""
    x = _cell_samples(grid, cols, spc, seed).reshape(-1, grid.dimension)
    image = fmap.evaluate(x)
    if kernel is None:
        y = image
    else:
        v = _sampled_noise(kernel, cols, spc, seed).reshape(-1, grid.dimension)
        y = image + v
        if kernel.boundary_policy == "reject":
            bad = ~grid.domain.contains(y)
            attempt = 0
            while np.any(bad):
                attempt += 1
                if attempt >= MAX_TRIES:
                    raise DiscretizationError(
                        f"{fmap.name}: rejection exhausted while building column "
                        f"{int(np.asarray(cols)[np.flatnonzero(bad)[0] // spc])}")
                redraw = _sampled_noise(kernel, cols, spc, seed, attempt).reshape(-1, grid.dimension)
                y[bad] = image[bad] + redraw[bad]
                bad = ~grid.domain.contains(y)
    y = grid.domain.reduce(y)
    try:
        rows = grid.cell_of(y)
    except DiscretizationError as exc:
        raise DiscretizationError(f"{fmap.name}: {exc}") from None
    src = np.repeat(np.asarray(cols), spc)
    key, counts = np.unique(src * grid.total_cells + rows, return_counts=True)
    return key % grid.total_cells, key // grid.total_cells, counts / spc


def build_ulam(fmap, kernel, grid, samples_per_cell=None, seed=0, exact_noise=None, block=None):
    """Ulam matrix of the noisy system (``kernel=None`` gives the noiseless map).

    ``exact_noise`` selects the exact 1D noise integration; by default it is
    used whenever the grid is a circle grid and the kernel is uniform.
    """
    spc = default_samples_per_cell(grid.dimension) if samples_per_cell is None else int(samples_per_cell)
    if spc < 1:
        raise ValueError("samples_per_cell must be >= 1")
    if grid.domain != fmap.domain:
        raise DiscretizationError("grid and map live on different domains")
    if kernel is not None:
        validate_kernel(fmap, kernel)
    one_d = grid.dimension == 1 and grid.domain.fully_periodic
    if exact_noise is None:
        exact_noise = one_d and (kernel is None or kernel.uniform_marginal)
    if exact_noise and not one_d:
        raise DiscretizationError("exact noise integration needs a circle grid")
    builder = _exact_1d_block if exact_noise else _sampled_block
    cols = grid.active_cells
    if block is None:
        block = max(1, 2_000_000 // (spc * grid.dimension * 4))
    parts = [builder(fmap, kernel, grid, cols[i:i + block], spc, seed)
             for i in range(0, len(cols), block)]
    pos = grid.active_position
    rows = np.concatenate([p[0] for p in parts])
    srcs = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    if np.any(pos[rows] < 0):
        raise DiscretizationError(f"{fmap.name}: images fall in inactive cells")
    m = sp.csc_matrix((vals, (pos[rows], pos[srcs])), shape=(grid.n_active,) * 2)
    m.sum_duplicates()
    # normalise each column so it sums to 1 to rounding
    sums = np.add.reduceat(m.data, m.indptr[:-1]) if m.nnz else np.zeros(0)
    m.data /= np.repeat(sums, np.diff(m.indptr))
    meta = {"map": fmap.name, "parameters": dict(fmap.parameters),
            "exact_noise": bool(exact_noise)}
    return UlamOperator(grid, m.tocsr(), spc, kernel, int(seed), meta)


def exact_ulam_1d(fmap, grid, bisection_steps=60):
    """Noiseless Ulam matrix with exact transition fractions.

    For a circle map that is continuous and increasing on every cell, the
    fraction of cell ``j`` sent into cell ``i`` is the length of a preimage
    interval, found by bisection.  Unlike sampling, this resolves the tiny
    escape probability from a cell next to a neutral fixed point.
    """
    if grid.dimension != 1 or not grid.domain.fully_periodic:
        raise DiscretizationError("exact noiseless Ulam needs a circle grid")
    n = grid.cells_per_dim[0]
    h = grid.widths[0]
    a = np.arange(n) * h
    ga = fmap.evaluate(a[:, None])[:, 0]

    def unwrapped(x, owner):
        return ga[owner] + (fmap.evaluate(x[:, None])[:, 0] - ga[owner]) % 1.0

    # right end as a left limit
    gb = unwrapped(a + h * (1 - 1e-12), np.arange(n))
    k_lo = np.floor(ga * n).astype(np.int64) + 1
    k_hi = np.ceil(gb * n).astype(np.int64) - 1
    nk = np.maximum(k_hi - k_lo + 1, 0)
    owner = np.repeat(np.arange(n), nk)
    start = np.cumsum(nk) - nk
    k = k_lo[owner] + (np.arange(owner.size) - start[owner])
    target = k / n
    lo, hi = a[owner].copy(), a[owner] + h
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        below = unwrapped(mid, owner) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    cuts = 0.5 * (lo + hi)
    # pieces [a, c_1], [c_1, c_2], ..., [c_m, a + h]; piece i of a column lands in cell first + i
    piece_owner = np.concatenate([np.arange(n), owner])
    piece_cell = np.concatenate([np.floor(ga * n).astype(np.int64), k])
    piece_lo = np.concatenate([a, cuts])
    order = np.lexsort((piece_cell, piece_owner))
    piece_owner, piece_cell, piece_lo = piece_owner[order], piece_cell[order], piece_lo[order]
    piece_hi = np.empty_like(piece_lo)
    piece_hi[:-1] = piece_lo[1:]
    last = np.r_[piece_owner[1:] != piece_owner[:-1], True]
    piece_hi[last] = a[piece_owner[last]] + h
    mass = np.clip(piece_hi - piece_lo, 0.0, None) / h
    keep = mass > 0
    pos = grid.active_position
    m = sp.csc_matrix((mass[keep], (pos[piece_cell[keep] % n], pos[piece_owner[keep]])),
                      shape=(n, n))
    m.sum_duplicates()
    sums = np.add.reduceat(m.data, m.indptr[:-1])
    m.data /= np.repeat(sums, np.diff(m.indptr))
    meta = {"map": fmap.name, "parameters": dict(fmap.parameters), "exact_transitions": True}
    return UlamOperator(grid, m.tocsr(), 0, None, 0, meta)


@dataclass
class StationaryResult:
    measure: GridMeasure
    iterations: int
    residual: float
    residuals: np.ndarray


def _direct_solve(op, tol):
    """Solve ``(P - I) v = 0`` with one component pinned, by sparse LU."""
    from scipy.sparse.linalg import splu

    n = op.n
    A = (op.matrix - sp.identity(n, format="csr")).tocsc()
    v = np.full(n, 1.0 / n)
    for _ in range(50):             # pin a recurrent cell; transient ones carry no mass
        v = op.matrix @ v
    k = int(np.argmax(v))
    keep = np.r_[0:k, k + 1:n]
    reduced = A[keep][:, keep].tocsc()
    rhs = -A[keep][:, [k]].toarray().ravel()
    try:
        sol = splu(reduced).solve(rhs)
    except RuntimeError as exc:
        raise ConvergenceError(f"direct solve failed: {exc}", residuals=np.array([np.inf])) from None
    v = np.insert(sol, k, 1.0)
    if not np.all(np.isfinite(v)):
        raise ConvergenceError("direct solve produced non-finite weights",
                               residuals=np.array([np.inf]))
    v = np.clip(v, 0.0, None)
    v /= v.sum()
    r = float(np.abs(op.matrix @ v - v).sum())
    if not r < tol:
        raise ConvergenceError(f"direct solve residual {r:.3e} above {tol:g}",
                               residuals=np.array([r]))
    return v, r


def stationary_measure(op, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS, initial=None,
                       return_info=False, method="power"):
    """Fixed vector of the Ulam matrix with ``|Pv - v|_1 < tol``.

    ``method="power"`` iterates ``v <- P v`` from the uniform vector (or
    ``initial``).  ``method="direct"`` solves the linear system instead, which
    suits small, slowly mixing chains such as noiseless intermittent maps.
    """
    if method == "direct":
        v, r = _direct_solve(op, tol)
        measure = GridMeasure(op.grid, v, meta={"iterations": 0, "residual": r})
        return StationaryResult(measure, 0, r, np.array([r])) if return_info else measure
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    P = op.matrix
    if initial is None:
        v = np.full(op.n, 1.0 / op.n)
    else:
        v = np.array(initial.active_weights if isinstance(initial, GridMeasure) else initial,
                     dtype=float)
        v /= v.sum()
    history = []
    r = np.inf
    for it in range(1, max_iters + 1):
        w = P @ v
        r = float(np.abs(w - v).sum())
        history.append(r)
        v = w / w.sum()
        if r < tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not reach {tol:g} in {max_iters} iterations "
            f"(last residual {r:.3e})", residuals=np.array(history))
    hist = np.array(history)
    if len(hist) > 11 and np.any(np.diff(hist[10:]) > 1e-3 * hist[10:-1] + 1e-15):
        log.warning("power-iteration residual increased after iteration 10")
    measure = GridMeasure(op.grid, v, meta={"iterations": it, "residual": r})
    if return_info:
        return StationaryResult(measure, it, r, hist)
    return measure


def empirical_measure(orbits, grid, burn_in=0):
    """Normalised histogram of orbit points after ``burn_in``.

    ``orbits`` may hold :class:`~zeronoise.noise.RandomOrbit` objects or raw
    arrays of shape (n, d).
    """
    counts = np.zeros(grid.total_cells)
    total = 0
    for orb in orbits:
        pts = getattr(orb, "points", orb)
        pts = np.asarray(pts, dtype=float).reshape(-1, grid.dimension)[burn_in:]
        counts += np.bincount(grid.cell_of(pts), minlength=grid.total_cells)
        total += len(pts)
    if total < 10_000:
        log.warning("empirical measure from only %d points", total)
    return GridMeasure(grid, counts)


def _circular_w1(pa, pb, width):
    """Circular W1 between two weight vectors on a uniform circle grid."""
    D = np.cumsum(pa - pb)
    return float(width * np.abs(D - np.median(D)).sum())


def measure_distance(a, b, metric="L1"):
    """Distance between measures on the same grid: L1, W1_circle or W1_projected.

    For ``W1_projected`` the second measure may also live on a circle grid
    with as many cells as the first coordinate of ``a``; it is then taken to
    be the circle marginal already.
    """
    g = a.grid
    if metric == "W1_projected":
        if not g.domain.periodic[0]:
            raise MetricError("W1_projected needs a periodic first coordinate")
        if b.grid.dimension == 1 and b.grid.cells_per_dim[0] == g.cells_per_dim[0]:
            pb = b.weights
        elif b.grid == g:
            pb = b.marginal(0)
        else:
            raise MetricError("measures live on incompatible grids")
        return _circular_w1(a.marginal(0), pb, g.widths[0])
    if a.grid != b.grid:
        raise MetricError("measures live on different grids")
    if metric == "L1":
        return float(np.abs(a.weights - b.weights).sum())
    if metric == "W1_circle":
        if g.dimension != 1 or not g.domain.fully_periodic:
            raise MetricError("W1_circle needs a circle grid; use W1_projected")
        return _circular_w1(a.weights, b.weights, g.widths[0])
    raise MetricError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class DualityCheck:
    observable: str
    lhs: float
    rhs: float
    standard_error: float

    @property
    def z_score(self):
        return abs(self.lhs - self.rhs) / self.standard_error if self.standard_error > 0 else np.inf


def _sample_measure(measure, n, seed):
    g = measure.grid
    stream = CounterStream(seed, stream_id(SAMPLER, 7))
    u = stream.uniforms(0, n, 1 + g.dimension)
    cdf = np.cumsum(measure.weights)
    cells = np.minimum(np.searchsorted(cdf, u[:, 0] * cdf[-1], side="right"), g.total_cells - 1)
    return g.lower_corners(cells) + u[:, 1:] * g.widths


def duality_check(measure, fmap, kernel, observables, n_samples=200_000, seed=0):
    """Compare the two sides of the stationarity equation for each observable.

    Left: the cell-averaged integral of ``phi`` against ``measure``.  Right: a
    Monte Carlo mean of ``phi(f0(x) + v)`` with ``x`` drawn from the measure
    (uniform within cells) and ``v`` from the kernel.
    """
    x = _sample_measure(measure, n_samples, seed)
    stream = CounterStream(seed, stream_id(SAMPLER, 8))
    v = kernel.offsets(stream.uniforms(0, n_samples, kernel.words_per_draw))
    y = fmap.domain.reduce(fmap.evaluate(x) + v)
    out = []
    for name, phi in observables.items():
        vals = phi(y)
        out.append(DualityCheck(name, measure.integrate(phi, nodes=4), float(vals.mean()),
                                float(vals.std(ddof=1) / np.sqrt(n_samples))))
    return out


def fourier_observables(dimension, coords=None):
    """``sin 2 pi x_i`` and ``cos 2 pi x_i`` for the chosen coordinates."""
    coords = range(dimension) if coords is None else coords
    obs = {}
    for i in coords:
        obs[f"sin2pi_x{i}"] = lambda p, i=i: np.sin(2 * np.pi * p[:, i])
        obs[f"cos2pi_x{i}"] = lambda p, i=i: np.cos(2 * np.pi * p[:, i])
    return obs
