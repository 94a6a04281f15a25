"""Lyapunov exponents, the entropy-formula integrand, domination and basins.

Restricted derivatives use the oblique decomposition given by a splitting
hint: with ``B(x) = [E(x) | F(x)]`` the matrix ``C = B(f(x))^-1 Df(x) B(x)``
expresses ``Df`` in adapted frames.  Its diagonal blocks give
``|Df|E| = sigma_max(C_EE)``, ``|(Df|F)^-1| = 1 / sigma_min(C_FF)`` and
``det(Df|F) = det C_FF``.  For an invariant splitting the off-diagonal
blocks vanish; for a cone-field hint they are small and ignored.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, UnsupportedMapError
from .grid import GridMeasure
from .maps import jacobian, sample_domain
from .noise import iterate_orbits, validate_kernel
from .rng import FRAME, CounterStream, stream_id

log = logging.getLogger(__name__)

DEFAULT_LANES = 20
WARMUP_STEPS = 1000
DEGENERATE_TOL = 1e-6
ROUNDING_SLACK = 1e-12  # norms computed as 1 + O(eps) still count as 1
BASIN_TOL = 0.02


# ------------------------------------------------------------ restricted derivatives

def adapted_blocks(fmap, x, hint=None, jac=None):
    """Blocks ``(C_EE, C_FF, C_EF, C_FE)`` of ``Df`` in the hint's adapted frames."""
    hint = fmap.splitting_hint if hint is None else hint
    if hint is None:
        raise UnsupportedMapError(f"{fmap.name} has no splitting hint")
    x = np.atleast_2d(x)
    if jac is None:
        jac = jacobian(fmap, x, check_domain=False)
    fx = fmap.domain.reduce(fmap.evaluate(x))
    e0, f0 = hint.frames(x)
    e1, f1 = hint.frames(fx)
    B0 = np.concatenate([e0, f0], axis=2)
    B1 = np.concatenate([e1, f1], axis=2)
    C = np.linalg.solve(B1, jac @ B0)
    k = hint.dim_E
    return C[:, :k, :k], C[:, k:, k:], C[:, :k, k:], C[:, k:, :k]


def restricted_norms(fmap, x, hint=None):
    """``|Df|E|``, ``|(Df|F)^-1|`` and ``log|det(Df|F)|`` at each point."""
    cee, cff, _, _ = adapted_blocks(fmap, x, hint)
    n = len(cff)
    e_norm = (np.linalg.svd(cee, compute_uv=False)[:, 0] if cee.shape[1] else np.zeros(n))
    with np.errstate(divide="ignore"):
        f_inv = 1.0 / np.linalg.svd(cff, compute_uv=False)[:, -1]
    logdet = np.linalg.slogdet(cff)[1]
    return e_norm, f_inv, logdet


# ------------------------------------------------------------ Lyapunov spectrum

@dataclass
class LyapunovEstimate:
    """Exponents in nats per iterate, sorted in decreasing order."""

    exponents: np.ndarray
    chi_plus: float
    n_steps: int
    renorm_period: int
    standard_error: np.ndarray
    logdet_mean: float = np.nan
    logdet_se: float = np.nan
    f_logdet_mean: float = np.nan
    lanes: int = DEFAULT_LANES
    frame_source: str = "hint"
    lane_exponents: np.ndarray = field(default=None, repr=False)

    @property
    def exponent_sum(self):
        return float(np.sum(self.exponents))

    def sum_identity_z(self):
        """Gap between the exponent sum and the mean log-determinant, in standard errors."""
        se = max(float(np.sqrt(np.sum(self.standard_error ** 2))), self.logdet_se, 1e-300)
        return abs(self.exponent_sum - self.logdet_mean) / se


def _initial_frame(fmap, x0s, seed):
    """Orthonormalised hint frame, or a random frame when there is no hint.

    QR keeps the span of the leading columns, so the exactly invariant E of a
    triangular map goes first; the remaining diagonal of R is then exactly the
    growth along F.  Otherwise F goes first, the order in which the QR flow
    is stable.
    """
    hint = fmap.splitting_hint
    d = fmap.dimension
    if hint is not None and hint.dim_E + hint.dim_F == d:
        e, f = hint.frames(x0s)
        cols = [e, f] if hint.triangular else [f, e]
        q, _ = np.linalg.qr(np.concatenate(cols, axis=2))
        return q, "hint"
    u = CounterStream(seed, stream_id(FRAME, 0)).uniforms(0, len(x0s), d * d)
    q, _ = np.linalg.qr(u.reshape(-1, d, d) - 0.5)
    return q, "warmup"


def _lane_jacobians(fmap, points):
    jac = fmap.jacobian_fn(points.reshape(-1, fmap.dimension))
    return jac.reshape(points.shape + (fmap.dimension,))


def lyapunov_spectrum(fmap, kernel, x0, n, renorm_period=1, seed=0, lanes=DEFAULT_LANES,
                      warmup=None):
    """QR estimate of the Lyapunov spectrum along random orbits.

    ``n`` steps in total are split across ``lanes`` independent orbits started
    at ``x0``; lane means serve as the batch means of the standard error.
    Without a splitting hint the frame is first aligned for ``warmup`` steps
    (default 1000).
    """
    if n < 10_000:
        raise ValueError("need at least 1e4 steps")
    if renorm_period < 1:
        raise ValueError("renorm_period must be >= 1")
    validate_kernel(fmap, kernel)
    d = fmap.dimension
    steps = n // lanes
    x0s = fmap.domain.check(np.repeat(np.atleast_2d(np.asarray(x0, dtype=float)), lanes, axis=0))
    Q, source = _initial_frame(fmap, x0s, seed)
    if warmup is None:
        warmup = 0 if source == "hint" else WARMUP_STEPS
    hint = fmap.splitting_hint if source == "hint" else None

    log_r = np.zeros((lanes, d))
    log_det = np.zeros(lanes)
    f_logdet = np.zeros(lanes)
    since_qr = 0
    x = x0s
    for start, block, _, _ in iterate_orbits(fmap, kernel, x0s, warmup + steps, seed,
                                             lanes=np.arange(lanes)):
        # Jacobians at the states preceding each step of the block
        prev = np.concatenate([x[None], block[:-1]])
        J = _lane_jacobians(fmap, prev)
        measured = np.arange(start, start + len(block)) >= warmup
        if measured.any():
            sl = slice(int(np.argmax(measured)), None)
            sign, ld = np.linalg.slogdet(J[sl])
            if np.any(sign == 0) or not np.all(np.isfinite(ld)):
                b, lane = np.argwhere((sign == 0) | ~np.isfinite(ld))[0]
                raise NumericalError(f"{fmap.name}: singular Jacobian along the orbit",
                                     location=prev[sl][b, lane].tolist())
            log_det += ld.sum(axis=0)
            if hint is not None:
                pts = prev[sl].reshape(-1, d)
                f_logdet += restricted_norms(fmap, pts, hint)[2].reshape(-1, lanes).sum(axis=0)
        for i in range(len(block)):
            Q = J[i] @ Q
            since_qr += 1
            k = start + i
            if since_qr == renorm_period or k == warmup - 1 or k == warmup + steps - 1:
                Q, R = np.linalg.qr(Q)
                diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
                if np.any(diag == 0) or not np.all(np.isfinite(diag)):
                    raise NumericalError(f"{fmap.name}: frame collapsed at step {k}",
                                         location=block[i][np.argmin(diag.min(axis=1))].tolist())
                if k >= warmup:
                    log_r += np.log(diag)
                since_qr = 0
        x = block[-1]

    lane_exp = log_r / steps
    order = np.argsort(-lane_exp.mean(axis=0))
    lane_exp = lane_exp[:, order]
    mean = lane_exp.mean(axis=0)
    se = lane_exp.std(axis=0, ddof=1) / np.sqrt(lanes)
    lane_det = log_det / steps
    return LyapunovEstimate(
        exponents=mean, chi_plus=float(mean[mean > 0].sum()), n_steps=steps * lanes,
        renorm_period=renorm_period, standard_error=se,
        logdet_mean=float(lane_det.mean()),
        logdet_se=float(lane_det.std(ddof=1) / np.sqrt(lanes)),
        f_logdet_mean=float(f_logdet.mean() / steps) if hint is not None else np.nan,
        lanes=lanes, frame_source=source, lane_exponents=lane_exp)


# ------------------------------------------------------------ entropy formula

def _aligned_f_growth(fmap, points, dim_F, warmup, seed):
    """One-step ``log|det Df|F|`` at ``f^warmup(x)``, F aligned by the noiseless cocycle."""
    d = fmap.dimension
    u = CounterStream(seed, stream_id(FRAME, 1)).uniforms(0, len(points), d * dim_F)
    Q, _ = np.linalg.qr(u.reshape(-1, d, dim_F) - 0.5)
    x = points
    for _ in range(warmup):
        Q, _ = np.linalg.qr(fmap.jacobian_fn(x) @ Q)
        x = fmap.domain.reduce(fmap.evaluate(x))
    _, R = np.linalg.qr(fmap.jacobian_fn(x) @ Q)
    return np.sum(np.log(np.abs(np.diagonal(R, axis1=1, axis2=2))), axis=1)


def entropy_integrand(fmap, points, F_dim_selector=None, warmup=WARMUP_STEPS, seed=0):
    """``log|det(Df0|F(x))|`` at each point.

    ``F_dim_selector`` forces the Oseledets fallback with that many top
    directions; by default the splitting hint is used when the map has one.
    """
    hint = fmap.splitting_hint
    if F_dim_selector is None and hint is not None:
        return restricted_norms(fmap, points, hint)[2]
    dim_F = F_dim_selector if F_dim_selector is not None else None
    if dim_F is None:
        raise UnsupportedMapError(f"{fmap.name}: no splitting hint and no F dimension given")
    return _aligned_f_growth(fmap, points, int(dim_F), warmup, seed)


def entropy_formula_rhs(fmap, measure, F_dim_selector=None, warmup=WARMUP_STEPS, seed=0):
    """Integral of ``log|det(Df0|F)|`` against a grid measure (cell centres).

    Without a hint the integrand at ``x`` is the aligned growth at
    ``f^warmup(x)``; the two integrals agree whenever the measure is
    invariant under the noiseless map.
    """
    if measure.grid.domain != fmap.domain:
        raise ValueError("measure and map live on different domains")
    cells = np.flatnonzero(measure.weights)
    pts = measure.grid.centers(cells)
    vals = np.concatenate([
        entropy_integrand(fmap, pts[i:i + 200_000], F_dim_selector, warmup, seed)
        for i in range(0, len(pts), 200_000)])
    return float(np.dot(measure.weights[cells], vals))


# ------------------------------------------------------------ domination and cones

@dataclass
class DominationReport:
    lambda0_estimate: float
    samples: int
    violations: list
    cone_invariance_failures: int
    max_cone_ratio: float = 0.0


def _unit_rows(u, k):
    """Unit vectors of dimension ``k`` from uniforms (Gaussian directions)."""
    if k == 0:
        return np.zeros((len(u), 0))
    g = np.sqrt(-2 * np.log1p(-u[:, :k])) * np.cos(2 * np.pi * u[:, k:2 * k])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def cone_failures(fmap, x, hint=None, width=None, n_vectors=8, seed=0, rel_tol=1e-12):
    """Count points where some boundary vector of the F-cone leaves the cone.

    The F-cone of width ``b`` holds ``u + v`` with ``u`` in E, ``v`` in F and
    ``|u| <= b |v|`` (coefficients in the adapted frames).  Returns the
    failure mask and the largest ratio ``|u'| / (b |v'|)`` seen per point.
    """
    hint = fmap.splitting_hint if hint is None else hint
    b = hint.cone_width_b if width is None else width
    cee, cff, cef, cfe = adapted_blocks(fmap, x, hint)
    n, kE, kF = len(x), hint.dim_E, hint.dim_F
    if kE == 0:
        return np.zeros(n, dtype=bool), np.zeros(n)
    stream = CounterStream(seed, stream_id(FRAME, 2))
    worst = np.zeros(n)
    for j in range(n_vectors):
        u = stream.uniforms(j * n, n, 2 * (kE + kF))
        ue = b * _unit_rows(u[:, :2 * kE], kE)
        vf = _unit_rows(u[:, 2 * kE:], kF)
        new_e = np.einsum("nij,nj->ni", cee, ue) + np.einsum("nij,nj->ni", cef, vf)
        new_f = np.einsum("nij,nj->ni", cfe, ue) + np.einsum("nij,nj->ni", cff, vf)
        ratio = np.linalg.norm(new_e, axis=1) / (b * np.linalg.norm(new_f, axis=1))
        worst = np.maximum(worst, ratio)
    return worst > 1.0 + rel_tol, worst


def domination_check(fmap, region_sampler=None, n_samples=100_000, seed=0, hint=None,
                     max_violations=100, chunk=50_000):
    """Sampled ``|Df|E| |(Df|F)^-1|`` and cone invariance (violations are reported)."""
    hint = fmap.splitting_hint if hint is None else hint
    if hint is None:
        raise UnsupportedMapError(f"{fmap.name} has no splitting hint")
    sampler = region_sampler or (lambda n, s: sample_domain(fmap.domain, n, s, stream=11))
    pts = np.atleast_2d(sampler(n_samples, seed))
    lam = 0.0
    violations = []
    failures = 0
    worst_ratio = 0.0
    for i in range(0, len(pts), chunk):
        x = pts[i:i + chunk]
        e_norm, f_inv, _ = restricted_norms(fmap, x, hint)
        prod = e_norm * f_inv if hint.dim_E else f_inv * 0.0
        lam = max(lam, float(np.max(prod)))
        bad = np.flatnonzero(prod >= 1.0)
        violations += [x[j].tolist() for j in bad[:max(0, max_violations - len(violations))]]
        fail, ratio = cone_failures(fmap, x, hint, seed=seed + i)
        failures += int(fail.sum())
        worst_ratio = max(worst_ratio, float(ratio.max()))
    return DominationReport(lam, len(pts), violations, failures, worst_ratio)


# ------------------------------------------------------------ degenerate sets

@dataclass
class DegenerateSetReport:
    tolerance: float
    E1_cells: np.ndarray
    F1_cells: np.ndarray

    @property
    def disjoint(self):
        return np.intersect1d(self.E1_cells, self.F1_cells).size == 0


def degenerate_sets(fmap, grid, tolerance=DEGENERATE_TOL, probes=(0.0, 0.5), chunk=100_000):
    """Cells where ``|Df|E|`` or ``|(Df|F)^-1|`` lies in ``[1 - tol, 1]``.

    Each cell is probed at the tensor product of the fractional offsets
    ``probes`` (default: lower corner and centre), so that a degenerate point
    on a cell's lower boundary, such as a neutral fixed point at 0, is caught.
    Upper boundaries belong to the next cell.
    """
    hint = fmap.splitting_hint
    if hint is None:
        raise UnsupportedMapError(f"{fmap.name} has no splitting hint")
    d = grid.dimension
    offs = np.stack(np.meshgrid(*([np.asarray(probes, dtype=float)] * d), indexing="ij"),
                    axis=-1).reshape(-1, d)
    cells = grid.active_cells
    e_hit, f_hit = [], []
    per_chunk = max(1, chunk // len(offs))
    for i in range(0, len(cells), per_chunk):
        c = cells[i:i + per_chunk]
        pts = (grid.lower_corners(c)[:, None, :] + offs[None] * grid.widths).reshape(-1, d)
        e_norm, f_inv, _ = restricted_norms(fmap, pts, hint)
        e_in = (e_norm >= 1 - tolerance) & (e_norm <= 1 + ROUNDING_SLACK)
        f_in = (f_inv >= 1 - tolerance) & (f_inv <= 1 + ROUNDING_SLACK)
        if hint.dim_E:
            e_hit.append(c[e_in.reshape(len(c), -1).any(axis=1)])
        f_hit.append(c[f_in.reshape(len(c), -1).any(axis=1)])
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return DegenerateSetReport(tolerance, cat(e_hit), cat(f_hit))


# ------------------------------------------------------------ basins

def default_observables(dimension):
    """``sin 2 pi x_i`` and ``cos 2 pi x_i`` for every coordinate."""
    from .transfer import fourier_observables

    return fourier_observables(dimension)


@dataclass
class BasinResult:
    fraction: float
    n_init: int
    n_iter: int
    tol: float
    targets: dict
    max_deviation: np.ndarray = field(repr=False)


def basin_fraction(fmap, kernel, reference, observables=None, n_init=500, n_iter=100_000,
                   tol=BASIN_TOL, seed=0, return_details=False):
    """Fraction of uniform starts whose Birkhoff averages match the reference.

    A start counts when, for every observable, the average over the ``n_iter``
    states after the start is within ``tol`` of its integral against
    ``reference`` (a :class:`GridMeasure`).
    """
    obs = default_observables(fmap.dimension) if observables is None else observables
    if isinstance(reference, GridMeasure):
        targets = {k: reference.integrate(phi) for k, phi in obs.items()}
    else:
        targets = dict(reference)
    starts = sample_domain(fmap.domain, n_init, seed, stream=12)
    sums = {k: np.zeros(n_init) for k in obs}
    for _, block, _, _ in iterate_orbits(fmap, kernel, starts, n_iter, seed,
                                         lanes=np.arange(n_init)):
        flat = block.reshape(-1, fmap.dimension)
        for k, phi in obs.items():
            sums[k] += phi(flat).reshape(len(block), n_init).sum(axis=0)
    dev = np.max(np.stack([np.abs(sums[k] / n_iter - targets[k]) for k in obs]), axis=0)
    frac = float(np.mean(dev <= tol))
    if return_details:
        return BasinResult(frac, n_init, n_iter, tol, targets, dev)
    return frac
