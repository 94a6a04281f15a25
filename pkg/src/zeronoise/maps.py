"""Example maps with closed-form evaluation, Jacobians and splitting data.

Points are float arrays of shape ``(d,)`` or ``(n, d)``; scalars are
accepted for one-dimensional maps.  Periodic coordinates are taken modulo 1.

Catalog
-------
``g_alpha``         intermittent circle map with a neutral fixed point at 0
``solenoid_alpha``  solid-torus solenoid driven by ``g_alpha``
``doubling_d``      ``x -> d x mod 1``
``cat``             linear automorphism ``[[2, 1], [1, 1]]`` of the 2-torus
``skew_torus``      ``(t, x, z) -> (d t, g(d t, x), z/10 + exp(2 pi i g)/2)``
``cantor_circle``   circle map whose derivative equals 1 on a Cantor set
``da_torus``        cat map with the unstable rate at the origin weakened to 1
"""

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Optional

import numpy as np

from . import domain as dom
from .errors import BoundaryAmbiguousError, CatalogError, ConfigError, ConstructionError
from .rng import SAMPLER, CounterStream, stream_id

BRANCH_TOL = 1e-12
_SIDE_PROBE = 1e-9

GOLDEN = (3.0 + np.sqrt(5.0)) / 2.0  # unstable eigenvalue of the cat map


@dataclass(frozen=True)
class SplittingHint:
    """Known dominated splitting E + F.

    ``e_frame`` and ``f_frame`` map points of shape (n, d) to orthonormal
    column frames of shape (n, d, dim_E) and (n, d, dim_F).  The two
    subspaces need not be orthogonal to each other.
    """

    dim_E: int
    dim_F: int
    e_frame: Callable
    f_frame: Callable
    cone_width_a: float = 0.5
    cone_width_b: float = 0.5
    note: str = ""
    triangular: bool = False  # E is exactly invariant (Df maps E(x) into E(f(x)))

    def frames(self, x):
        x = np.atleast_2d(x)
        return self.e_frame(x), self.f_frame(x)

    def swapped(self):
        """Same frames with the roles of E and F exchanged (misuse detection)."""
        return SplittingHint(self.dim_F, self.dim_E, self.f_frame, self.e_frame,
                             self.cone_width_b, self.cone_width_a, "swapped", False)


@dataclass(frozen=True)
class MapSystem:
    """A concrete map ``f0`` on a flat domain.

    ``evaluate`` and ``jacobian_fn`` work on arrays of shape (n, d);
    ``evaluate`` does not wrap, :func:`eval_map` does.
    """

    name: str
    domain: dom.DomainDescriptor
    parameters: MappingProxyType
    evaluate: Callable = field(repr=False, compare=False)
    jacobian_fn: Callable = field(repr=False, compare=False)
    has_analytic_jacobian: bool = True
    splitting_hint: Optional[SplittingHint] = field(default=None, compare=False)
    invariance_margin: float = np.inf
    branch_points: tuple = ()
    physical_reference: tuple = ("none",)
    fixed_point: Optional[tuple] = None

    @property
    def dimension(self):
        return self.domain.dimension

    def parameter_record(self):
        """Canonical bytes of name and parameters, for hashing and determinism checks."""
        items = ";".join(f"{k}={self.parameters[k]!r}" for k in sorted(self.parameters))
        return f"{self.name}({items})".encode()

    def with_hint(self, hint):
        return MapSystem(self.name, self.domain, self.parameters, self.evaluate,
                         self.jacobian_fn, self.has_analytic_jacobian, hint,
                         self.invariance_margin, self.branch_points,
                         self.physical_reference, self.fixed_point)


def _as_points(fmap, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    if x.ndim == 0:
        x = x.reshape(1)
    return np.atleast_2d(x).reshape(-1, fmap.dimension), single


def eval_map(fmap, x):
    """Image ``f0(x)``, with periodic coordinates reduced to [0, 1)."""
    pts, single = _as_points(fmap, x)
    pts = fmap.domain.check(pts)
    out = fmap.domain.reduce(fmap.evaluate(pts))
    return out[0] if single else out


def _near_branch(fmap, pts):
    """Index of the first coordinate lying within BRANCH_TOL of a branch point, or -1."""
    hits = np.full(len(pts), -1)
    for coord, bps in fmap.branch_points:
        for bp in bps:
            d = np.abs(pts[:, coord] - bp)
            if fmap.domain.periodic[coord]:
                d = np.minimum(d, 1.0 - d)
            hits = np.where((hits < 0) & (d < BRANCH_TOL), coord, hits)
    return hits


def jacobian(fmap, x, check_domain=True):
    """Derivative matrix ``Df0(x)`` in the domain's flat coordinates.

    At a branch boundary the one-sided Jacobians are compared; if they differ
    the point is reported through :class:`BoundaryAmbiguousError`.  Grid scans
    pass ``check_domain=False`` since centres of boundary cells may sit just
    outside a disc.
    """
    pts, single = _as_points(fmap, x)
    pts = fmap.domain.check(pts) if check_domain else fmap.domain.reduce(pts)
    jac = fmap.jacobian_fn(pts)
    near = _near_branch(fmap, pts)
    for i in np.flatnonzero(near >= 0):
        left, right = pts[i].copy(), pts[i].copy()
        left[near[i]] -= _SIDE_PROBE
        right[near[i]] += _SIDE_PROBE
        jl, jr = fmap.jacobian_fn(fmap.domain.reduce(np.stack([left, right])))
        if not np.allclose(jl, jr, rtol=1e-6, atol=1e-6):
            raise BoundaryAmbiguousError(
                f"{fmap.name}: Jacobian differs across the branch boundary at {pts[i].tolist()}",
                point=pts[i])
    return jac[0] if single else jac


# ---------------------------------------------------------------- g_alpha

def g_alpha(x, alpha):
    """Intermittent map on [0, 1), vectorised; result reduced mod 1."""
    x = np.asarray(x, dtype=float)
    c = 2.0 ** alpha
    with np.errstate(invalid="ignore"):
        left = x + c * np.abs(x) ** (1.0 + alpha)
        right = x - c * np.abs(1.0 - x) ** (1.0 + alpha)
    return dom.wrap_unit(np.where(x < 0.5, left, right))


def g_alpha_prime(x, alpha):
    x = np.asarray(x, dtype=float)
    c = 2.0 ** alpha * (1.0 + alpha)
    return np.where(x < 0.5, 1.0 + c * np.abs(x) ** alpha, 1.0 + c * np.abs(1.0 - x) ** alpha)


def _positive(name, value):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ConfigError(f"parameter {name} must be > 0, got {value}")
    return value


def _integer(name, value, lo, hi=None):
    if float(value) != int(value):
        raise ConfigError(f"parameter {name} must be an integer, got {value}")
    value = int(value)
    if value < lo or (hi is not None and value > hi):
        raise ConfigError(f"parameter {name}={value} outside [{lo}, {hi if hi else 'inf'}]")
    return value


def _one_dim_hint():
    return SplittingHint(0, 1, lambda x: np.zeros((len(x), 1, 0)),
                         lambda x: np.ones((len(x), 1, 1)), note="whole line is F")


def _build_g_alpha(alpha=0.5):
    alpha = _positive("alpha", alpha)

    def evaluate(x):
        return g_alpha(x[:, :1], alpha)

    def jac(x):
        return g_alpha_prime(x[:, 0], alpha).reshape(-1, 1, 1)

    ref = ("point_mass", (0.0,)) if alpha >= 1 else ("noiseless_ulam",)
    return MapSystem("g_alpha", dom.circle(), MappingProxyType({"alpha": alpha}),
                     evaluate, jac, True, _one_dim_hint(),
                     branch_points=((0, (0.0, 0.5)),), physical_reference=ref,
                     fixed_point=(0.0,))


# ---------------------------------------------------------------- solenoid

_SHEAR = np.pi  # |d(exp(2 pi i g)/2)/dg|


def _tilted_circle_direction(x_coord, d, circle, disc):
    """Unit vector along the circle coordinate tilted by the disc shear.

    The disc image ``z/10 + exp(2 pi i x')/2`` moves by ``pi i exp(2 pi i x')``
    per unit of the new circle coordinate, so tilting by that vector leaves
    only the contracted ``1/10`` remainder outside the frame.
    """
    vec = np.zeros((len(x_coord), d))
    vec[:, circle] = 1.0
    vec[:, disc] = -_SHEAR * np.sin(2 * np.pi * x_coord)
    vec[:, disc + 1] = _SHEAR * np.cos(2 * np.pi * x_coord)
    return vec / np.sqrt(1.0 + _SHEAR ** 2)


def _solenoid(name, circle_map, circle_prime, params, reference, hint_note):
    def evaluate(p):
        gx = circle_map(p[:, 0])
        ang = 2 * np.pi * gx
        return np.column_stack([gx, p[:, 1] / 10 + 0.5 * np.cos(ang),
                                p[:, 2] / 10 + 0.5 * np.sin(ang)])

    def jac(p):
        gx = circle_map(p[:, 0])
        gp = circle_prime(p[:, 0])
        ang = 2 * np.pi * gx
        out = np.zeros((len(p), 3, 3))
        out[:, 0, 0] = gp
        out[:, 1, 0] = -np.pi * gp * np.sin(ang)
        out[:, 2, 0] = np.pi * gp * np.cos(ang)
        out[:, 1, 1] = out[:, 2, 2] = 0.1
        return out

    def e_frame(p):
        frame = np.zeros((len(p), 3, 2))
        frame[:, 1, 0] = frame[:, 2, 1] = 1.0
        return frame

    def f_frame(p):
        return _tilted_circle_direction(p[:, 0], 3, 0, 1)[:, :, None]

    hint = SplittingHint(2, 1, e_frame, f_frame, 0.5, 0.5, hint_note, triangular=True)
    return MapSystem(name, dom.solid_torus(), MappingProxyType(params), evaluate, jac,
                     True, hint, invariance_margin=0.4, branch_points=((0, (0.0, 0.5)),),
                     physical_reference=reference, fixed_point=(0.0, 5.0 / 9.0, 0.0))


def _build_solenoid(alpha=0.5):
    alpha = _positive("alpha", alpha)
    ref = ("point_mass", (0.0, 5.0 / 9.0, 0.0)) if alpha >= 1 else ("noiseless_ulam",)
    return _solenoid("solenoid_alpha", lambda x: g_alpha(x, alpha),
                     lambda x: g_alpha_prime(x, alpha), {"alpha": alpha}, ref,
                     "E = disc plane, F = circle direction tilted by the disc shear")


# ---------------------------------------------------------------- doubling

def _build_doubling(d=2):
    d = _integer("d", d, 2)

    def evaluate(x):
        return d * x[:, :1]

    def jac(x):
        return np.full((len(x), 1, 1), float(d))

    return MapSystem("doubling_d", dom.circle(), MappingProxyType({"d": d}), evaluate,
                     jac, True, _one_dim_hint(), physical_reference=("lebesgue",),
                     fixed_point=(0.0,))


# ---------------------------------------------------------------- cat and DA

CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
_U = np.array([1.0, GOLDEN - 2.0]) / np.hypot(1.0, GOLDEN - 2.0)   # unstable, eigenvalue GOLDEN
_S = np.array([-(GOLDEN - 2.0), 1.0]) / np.hypot(1.0, GOLDEN - 2.0)  # stable, eigenvalue 1/GOLDEN


def _linear_hint():
    return SplittingHint(1, 1, lambda x: np.broadcast_to(_S[:, None], (len(x), 2, 1)).copy(),
                         lambda x: np.broadcast_to(_U[:, None], (len(x), 2, 1)).copy(),
                         0.5, 0.5, "eigen-directions of [[2, 1], [1, 1]]")


def _build_cat():
    def evaluate(x):
        return x @ CAT_MATRIX.T

    def jac(x):
        return np.broadcast_to(CAT_MATRIX, (len(x), 2, 2)).copy()

    return MapSystem("cat", dom.torus2(), MappingProxyType({}), evaluate, jac, True,
                     _linear_hint(), physical_reference=("lebesgue",), fixed_point=(0.0, 0.0))


def bump(q):
    """C^2 bump (1 - q^2)^3 on [0, 1), zero beyond."""
    q = np.asarray(q, dtype=float)
    return np.where(q < 1.0, (1.0 - np.minimum(q, 1.0) ** 2) ** 3, 0.0)


def bump_prime(q):
    q = np.asarray(q, dtype=float)
    return np.where(q < 1.0, -6.0 * q * (1.0 - np.minimum(q, 1.0) ** 2) ** 2, 0.0)


def da_invertibility_constant(delta):
    """sup over q in [0, 1], c in [0, 1] of delta * (rho(q) + c q rho'(q)).

    The deformation only moves points along the unstable line through them,
    and along such a line its derivative is ``1 - delta * (rho + c q rho')``
    with ``c = cos^2`` of the angle to that line.  The map is a diffeomorphism
    iff this constant is < 1.
    """
    q = np.linspace(0.0, 1.0, 20001)
    c = np.linspace(0.0, 1.0, 101)[:, None]
    return float(np.max(delta * (bump(q) + c * q * bump_prime(q))))


def _build_da(r0=0.2, delta=None):
    r0 = _positive("r0", r0)
    if r0 >= 0.5:
        raise ConfigError(f"parameter r0 must be < 0.5 so the bump fits one chart, got {r0}")
    delta = 1.0 - 1.0 / GOLDEN if delta is None else float(delta)
    if not np.isfinite(delta) or delta < 0:
        raise ConfigError(f"parameter delta must be >= 0, got {delta}")
    if da_invertibility_constant(delta) >= 1.0:
        raise ConstructionError(
            f"da_torus: delta={delta} breaks invertibility (needs delta * sup(rho + q rho') < 1)")

    def lift(x):
        return x - np.round(x)

    def evaluate(x):
        y = lift(x)
        q = np.hypot(y[:, 0], y[:, 1]) / r0
        s = y @ _U
        z = x - (delta * bump(q) * s)[:, None] * _U
        return z @ CAT_MATRIX.T

    def jac(x):
        y = lift(x)
        q = np.hypot(y[:, 0], y[:, 1]) / r0
        s = y @ _U
        grad = (-6.0 * (1.0 - np.minimum(q, 1.0) ** 2) ** 2 * (q < 1.0))[:, None] * y / r0 ** 2
        uu = np.outer(_U, _U)
        dphi = np.eye(2) - delta * (bump(q)[:, None, None] * uu
                                    + s[:, None, None] * _U[None, :, None] * grad[:, None, :])
        return CAT_MATRIX @ dphi

    return MapSystem("da_torus", dom.torus2(), MappingProxyType({"delta": delta, "r0": r0}),
                     evaluate, jac, True, _linear_hint(), physical_reference=("none",),
                     fixed_point=(0.0, 0.0))


# ---------------------------------------------------------------- skew torus

def _build_skew(alpha=0.5, d=2):
    alpha = _positive("alpha", alpha)
    d = _integer("d", d, 2)
    c2 = 2.0 ** alpha

    def fiber(t, x):
        s = 0.1 * np.sin(np.pi * t) ** 2
        sp = 0.1 * np.pi * np.sin(2 * np.pi * t)
        xl, xr = np.abs(x), np.abs(1.0 - x)
        left = x * (1 + s) + c2 * (1 - s) * xl ** (1 + alpha)
        right = 1 - (1 - x) * (1 + s) - c2 * (1 - s) * xr ** (1 + alpha)
        dx_left = (1 + s) + c2 * (1 - s) * (1 + alpha) * xl ** alpha
        dx_right = (1 + s) + c2 * (1 - s) * (1 + alpha) * xr ** alpha
        dt_left = sp * (x - c2 * xl ** (1 + alpha))
        dt_right = -sp * ((1 - x) - c2 * xr ** (1 + alpha))
        b = x < 0.5
        return (dom.wrap_unit(np.where(b, left, right)), np.where(b, dt_left, dt_right),
                np.where(b, dx_left, dx_right))

    def evaluate(p):
        t1 = dom.wrap_unit(d * p[:, 0])
        gx, _, _ = fiber(t1, p[:, 1])
        ang = 2 * np.pi * gx
        return np.column_stack([t1, gx, p[:, 2] / 10 + 0.5 * np.cos(ang),
                                p[:, 3] / 10 + 0.5 * np.sin(ang)])

    def jac(p):
        t1 = dom.wrap_unit(d * p[:, 0])
        gx, gt, gxx = fiber(t1, p[:, 1])
        ang = 2 * np.pi * gx
        out = np.zeros((len(p), 4, 4))
        out[:, 0, 0] = d
        out[:, 1, 0] = d * gt
        out[:, 1, 1] = gxx
        for col in (0, 1):
            out[:, 2, col] = -np.pi * np.sin(ang) * out[:, 1, col]
            out[:, 3, col] = np.pi * np.cos(ang) * out[:, 1, col]
        out[:, 2, 2] = out[:, 3, 3] = 0.1
        return out

    def e_frame(p):
        frame = np.zeros((len(p), 4, 2))
        frame[:, 2, 0] = frame[:, 3, 1] = 1.0
        return frame

    def f_frame(p):
        frame = np.zeros((len(p), 4, 2))
        frame[:, 0, 0] = 1.0
        frame[:, :, 1] = _tilted_circle_direction(p[:, 1], 4, 1, 2)
        return frame

    hint = SplittingHint(2, 2, e_frame, f_frame, 0.5, 0.5,
                         "E = disc plane, F = (t, x) plane tilted by the disc shear",
                         triangular=True)
    return MapSystem("skew_torus", dom.skew_solid_torus(),
                     MappingProxyType({"alpha": alpha, "d": d}), evaluate, jac, True, hint,
                     invariance_margin=0.4, branch_points=((1, (0.0, 0.5)),),
                     physical_reference=("none",), fixed_point=(0.0, 0.0, 5.0 / 9.0, 0.0))


# ---------------------------------------------------------------- Cantor map

def cantor_gaps(generation):
    """Gaps (a, b) of the middle-third construction up to ``generation``, sorted by a."""
    starts = np.array([0.0])
    gaps = []
    for n in range(1, generation + 1):
        w = 3.0 ** -n
        gaps.append(np.column_stack([starts + w, starts + 2 * w]))
        starts = np.concatenate([starts, starts + 2 * w])
    gaps = np.concatenate(gaps)
    return gaps[np.argsort(gaps[:, 0])]


def cantor_beta_integral(generation=None):
    """Integral of the tent function over the gaps; exact value 1/28 when generation is None."""
    if generation is None:
        return 1.0 / 28.0
    n = np.arange(1, generation + 1)
    return float(np.sum(2.0 ** (n - 1) * 9.0 ** (-n.astype(float)) / 4.0))


def _build_cantor(generation=12):
    generation = _integer("generation", generation, 1, 24)
    gaps = cantor_gaps(generation)
    a, b = gaps[:, 0], gaps[:, 1]
    length = b - a
    cum = np.concatenate([[0.0], np.cumsum(length ** 2 / 4.0)])
    total = cum[-1]

    def locate(x):
        i = np.searchsorted(a, x, side="right") - 1
        ic = np.maximum(i, 0)
        t = x - a[ic]
        inside = (i >= 0) & (t < length[ic])
        return i, ic, np.where(inside, t, 0.0), inside

    def beta(x):
        _, ic, t, inside = locate(x)
        return np.where(inside, np.minimum(t, length[ic] - t), 0.0)

    def primitive(x):
        i, ic, t, inside = locate(x)
        ell = length[ic]
        partial = np.where(t <= ell / 2, t ** 2 / 2, ell ** 2 / 4 - (ell - t) ** 2 / 2)
        return np.where(inside, cum[ic] + partial, cum[i + 1])

    def evaluate(x):
        return (x[:, 0] + primitive(x[:, 0]) / total)[:, None]

    def jac(x):
        return (1.0 + beta(x[:, 0]) / total).reshape(-1, 1, 1)

    return MapSystem("cantor_circle", dom.circle(),
                     MappingProxyType({"beta_integral": float(total), "generation": generation}),
                     evaluate, jac, True, _one_dim_hint(), physical_reference=("noiseless_ulam",),
                     fixed_point=(0.0,))


# ---------------------------------------------------------------- catalog

_BUILDERS = {
    "g_alpha": _build_g_alpha,
    "solenoid_alpha": _build_solenoid,
    "doubling_d": _build_doubling,
    "cat": _build_cat,
    "skew_torus": _build_skew,
    "cantor_circle": _build_cantor,
    "da_torus": _build_da,
}

CATALOG = tuple(_BUILDERS)

_PARAM_NAMES = {
    "g_alpha": ("alpha",),
    "solenoid_alpha": ("alpha",),
    "doubling_d": ("d",),
    "cat": (),
    "skew_torus": ("alpha", "d"),
    "cantor_circle": ("generation",),
    "da_torus": ("r0", "delta"),
}


def check_invariance(fmap, n_points=2000, seed=0):
    """Smallest distance to the domain boundary of images of random domain points.

    Raises :class:`ConstructionError` if it falls below the declared margin.
    """
    if not np.isfinite(fmap.invariance_margin):
        return np.inf
    pts = sample_domain(fmap.domain, n_points, seed)
    img = fmap.domain.reduce(fmap.evaluate(pts))
    margin = float(np.min(fmap.domain.boundary_distance(img)))
    if margin < fmap.invariance_margin - 1e-12:
        raise ConstructionError(
            f"{fmap.name}: image margin {margin:.3g} below declared {fmap.invariance_margin}")
    return margin


def sample_domain(domain, n, seed, stream=0):
    """Uniform points of a domain (discs sampled exactly), deterministic in ``seed``."""
    d = domain.dimension
    u = CounterStream(seed, stream_id(SAMPLER, stream)).uniforms(0, n, d)
    pts = np.empty((n, d))
    for i, (per, (lo, hi)) in enumerate(zip(domain.periodic, domain.bounds)):
        pts[:, i] = u[:, i] if per else lo + (hi - lo) * u[:, i]
    for i, j in domain.discs:
        r = domain.disc_radius * np.sqrt(u[:, i])
        pts[:, i] = r * np.cos(2 * np.pi * u[:, j])
        pts[:, j] = r * np.sin(2 * np.pi * u[:, j])
    return pts


def build_catalog_map(name, **parameters):
    """Build a catalog map by name; unknown names or parameters raise config errors."""
    if name not in _BUILDERS:
        raise CatalogError(f"unknown map {name!r}; valid names: {', '.join(CATALOG)}")
    unknown = set(parameters) - set(_PARAM_NAMES[name])
    if unknown:
        raise ConfigError(f"{name}: unknown parameter(s) {sorted(unknown)}; "
                          f"accepted: {list(_PARAM_NAMES[name])}")
    fmap = _BUILDERS[name](**parameters)
    if fmap.name in ("solenoid_alpha", "da_torus", "skew_torus"):
        check_invariance(fmap)
    return fmap


def circle_rotation(shift):
    """Rigid rotation ``x -> x + shift`` of the circle (identity for shift 0)."""
    shift = float(shift)
    return MapSystem("rotation", dom.circle(), MappingProxyType({"shift": shift}),
                     lambda x: x[:, :1] + shift, lambda x: np.ones((len(x), 1, 1)), True,
                     _one_dim_hint())
