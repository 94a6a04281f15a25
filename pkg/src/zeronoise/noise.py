"""Additive noise kernels and random orbits of the perturbed system.

The perturbed step is ``x -> f0(x) + v`` with ``v`` drawn i.i.d. from a
uniform law on a ball or cube of radius ``epsilon``.  Periodic coordinates
wrap; on bounded coordinates an image leaving the domain is redrawn
(rejection), which keeps the density uniform on the admissible offsets.

Noise for lane ``l`` at step ``k`` is drawn from the counter stream
``(seed, stream_id(ORBIT, l, attempt))`` at position ``k``; orbits are
therefore pure functions of ``(map, kernel, x0, n, seed)`` and can be
resumed from any step.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaincinv

from .domain import wrap_unit
from .errors import ConfigError, ConstructionError, KernelError
from .rng import ORBIT, CounterStream, stream_id

MAX_TRIES = 1000

SHAPES = ("ball", "cube")
POLICIES = ("wrap", "reject")

# seven levels, equally spaced in log from 1e-1 to 1e-3 (ratio 10**(1/3))
DEFAULT_EPSILONS = tuple(float(f"{10.0 ** (-1 - k / 3):.6g}") for k in range(7))


def _ball_first_coordinate(u, k):
    """Quantile of one coordinate of the uniform unit k-ball (k >= 2)."""
    t = 2.0 * u - 1.0
    if k == 3:      # CDF (2 + 3s - s^3) / 4 inverts in closed form
        return 2.0 * np.sin(np.arcsin(t) / 3.0)
    return np.sign(t) * np.sqrt(betaincinv(0.5, (k + 1) / 2.0, np.abs(t)))


def _unit_ball(u, k):
    """Uniform points of the unit k-ball from 1 word (k = 1) or Gaussian pairs plus a radius word."""
    if k == 1:
        return 2.0 * u[..., :1] - 1.0
    pairs = u[..., :-1].reshape(u.shape[:-1] + (-1, 2))
    r = np.sqrt(-2.0 * np.log1p(-pairs[..., 0]))
    ang = 2 * np.pi * pairs[..., 1]
    gauss = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)
    gauss = gauss.reshape(u.shape[:-1] + (-1,))[..., :k]
    norm = np.linalg.norm(gauss, axis=-1, keepdims=True)
    return u[..., -1:] ** (1.0 / k) * gauss / np.where(norm > 0, norm, 1.0)


@dataclass(frozen=True)
class NoiseKernel:
    """Uniform law on the ball or cube of radius ``epsilon`` in the unmasked coordinates."""

    epsilon: float
    dimension: int
    support_shape: str = "ball"
    per_coordinate_mask: tuple = None
    boundary_policy: str = "wrap"

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError(f"noise level must be > 0, got {self.epsilon}")
        if self.support_shape not in SHAPES:
            raise ConfigError(f"support_shape must be one of {SHAPES}")
        if self.boundary_policy not in POLICIES:
            raise ConfigError(f"boundary_policy must be one of {POLICIES}")
        mask = self.per_coordinate_mask
        if mask is None:
            object.__setattr__(self, "per_coordinate_mask", (True,) * self.dimension)
        elif len(mask) != self.dimension:
            raise ConfigError("noise mask length differs from the dimension")
        else:
            object.__setattr__(self, "per_coordinate_mask", tuple(bool(m) for m in mask))
        if self.noise_dim == 0:
            raise ConfigError("noise mask selects no coordinate")

    @property
    def noise_dim(self):
        return sum(self.per_coordinate_mask)

    @property
    def words_per_draw(self):
        k = self.noise_dim
        if self.support_shape == "cube" or k <= 2:
            return k
        return 2 * (-(-(k - 1) // 2)) + 2

    @property
    def uniform_marginal(self):
        """True when the single noised coordinate is uniform on [-eps, eps]."""
        return self.noise_dim == 1 or self.support_shape == "cube"

    @property
    def inradius(self):
        """Radius of the largest ball around 0 inside the support (0 if degenerate)."""
        return self.epsilon if self.noise_dim == self.dimension else 0.0

    def offsets(self, u):
        """Map uniforms of shape (..., words_per_draw) to offsets of shape (..., dimension).

        The first noised coordinate is an increasing function of word 0 alone
        (its exact marginal quantile), so stratifying word 0 stratifies that
        coordinate.  For the ball the other coordinates are then uniform on
        the slice of radius ``sqrt(1 - s^2)``.
        """
        u = np.asarray(u, dtype=float)
        k = self.noise_dim
        if self.support_shape == "cube" or k == 1:
            core = 2.0 * u[..., :k] - 1.0
        else:
            first = _ball_first_coordinate(u[..., 0], k)
            rest = np.sqrt(np.maximum(1.0 - first ** 2, 0.0))[..., None] * _unit_ball(u[..., 1:], k - 1)
            core = np.concatenate([first[..., None], rest], axis=-1)
        core = self.epsilon * core
        out = np.zeros(u.shape[:-1] + (self.dimension,))
        out[..., np.array(self.per_coordinate_mask)] = core
        return out

    def with_epsilon(self, epsilon):
        return NoiseKernel(epsilon, self.dimension, self.support_shape,
                           self.per_coordinate_mask, self.boundary_policy)

    def describe(self):
        return {"epsilon": self.epsilon, "dimension": self.dimension,
                "support_shape": self.support_shape,
                "mask": list(self.per_coordinate_mask),
                "boundary_policy": self.boundary_policy}


def make_kernel(fmap, epsilon, shape="ball", mask=None, policy=None):
    """Kernel sized for ``fmap``; policy defaults to wrap on tori and reject otherwise."""
    if policy is None:
        policy = "wrap" if fmap.domain.fully_periodic else "reject"
    if policy == "wrap" and not fmap.domain.fully_periodic:
        raise ConfigError(f"wrap policy needs a fully periodic domain, {fmap.domain.kind} is not")
    return NoiseKernel(float(epsilon), fmap.dimension, shape,
                       None if mask is None else tuple(mask), policy)


def sample_noise(kernel, stream, step=0, count=None):
    """Offsets drawn from ``stream`` at ``step`` (shape (d,)) or at ``count`` steps."""
    n = 1 if count is None else int(count)
    out = kernel.offsets(stream.uniforms(step, n, kernel.words_per_draw))
    return out[0] if count is None else out


@dataclass
class RandomOrbit:
    """One random orbit; ``points[k+1] = wrap(f0(points[k]) + noise_draws[k])``."""

    seed: int
    points: np.ndarray
    noise_draws: np.ndarray
    rejected_count: int = 0
    lane: int = 0
    start_step: int = 0
    meta: dict = field(default_factory=dict)

    def resume_state(self, step):
        """Stream coordinates reproducing the orbit from ``points[step]`` on."""
        return {"seed": self.seed, "lane": self.lane, "step": self.start_step + int(step),
                "point": self.points[step].tolist()}


def validate_kernel(fmap, kernel):
    if kernel.dimension != fmap.dimension:
        raise ConfigError(f"kernel dimension {kernel.dimension} != map dimension {fmap.dimension}")
    if kernel.boundary_policy == "reject" and kernel.epsilon >= fmap.invariance_margin:
        raise ConstructionError(
            f"{fmap.name}: epsilon={kernel.epsilon} exceeds the invariance margin "
            f"{fmap.invariance_margin}")


class _Lanes:
    """Noise streams for a set of lanes plus the rejection machinery."""

    def __init__(self, fmap, kernel, seed, lanes):
        self.fmap, self.kernel, self.seed = fmap, kernel, seed
        self.lanes = np.asarray(lanes, dtype=np.int64)
        self.streams = [CounterStream(seed, stream_id(ORBIT, int(l))) for l in self.lanes]
        self.periodic = fmap.domain.periodic_mask
        self.reject = kernel.boundary_policy == "reject"

    def noise(self, start, count):
        w = self.kernel.words_per_draw
        u = np.stack([s.uniforms(start, count, w) for s in self.streams], axis=1)
        return self.kernel.offsets(u)

    def redraw(self, image, v, step):
        """Replace offsets whose image leaves the domain; returns (y, v, n_rejected)."""
        domain = self.fmap.domain
        y = image + v
        bad = ~domain.contains(y)
        rejected = 0
        attempt = 0
        while np.any(bad):
            attempt += 1
            if attempt >= MAX_TRIES:
                raise KernelError(f"{self.fmap.name}: {MAX_TRIES} rejected draws at step {step}; "
                                  f"epsilon={self.kernel.epsilon} is mis-sized")
            rejected += int(np.sum(bad))
            for i in np.flatnonzero(bad):
                s = CounterStream(self.seed, stream_id(ORBIT, int(self.lanes[i]), attempt))
                v[i] = sample_noise(self.kernel, s, step)
            y[bad] = image[bad] + v[bad]
            bad = ~domain.contains(y)
        return y, v, rejected

    def step(self, x, v, step):
        image = self.fmap.evaluate(x)
        rejected = 0
        if self.reject:
            y, v, rejected = self.redraw(image, v, step)
        else:
            y = image + v
        y[:, self.periodic] = wrap_unit(y[:, self.periodic])
        return y, v, rejected


def iterate_orbits(fmap, kernel, x0s, n, seed, lanes=None, start_step=0, block=2048):
    """Advance several independent random orbits together.

    Yields ``(step, points, noise, rejected)`` per block, where ``points`` has
    shape (B, L, d) and holds the states after steps ``step .. step + B - 1``.
    """
    validate_kernel(fmap, kernel)
    x = fmap.domain.check(np.atleast_2d(np.asarray(x0s, dtype=float)))
    lanes = np.arange(len(x)) if lanes is None else lanes
    engine = _Lanes(fmap, kernel, seed, lanes)
    k = start_step
    end = start_step + n
    while k < end:
        b = min(block, end - k)
        v = engine.noise(k, b)
        out = np.empty((b,) + x.shape)
        rejected = np.zeros(len(x), dtype=np.int64)
        for i in range(b):
            x, v[i], rej = engine.step(x, v[i], k + i)
            rejected += rej
            out[i] = x
        yield k, out, v, rejected
        k += b


def random_orbit(fmap, kernel, x0, n, seed, lane=0, start_step=0):
    """Random orbit of length ``n + 1`` starting at ``x0``."""
    x0 = fmap.domain.check(np.atleast_1d(np.asarray(x0, dtype=float)))
    points = [x0[None, :]]
    draws = []
    rejected = 0
    for _, pts, v, rej in iterate_orbits(fmap, kernel, x0[None, :], n, seed,
                                         lanes=[lane], start_step=start_step):
        points.append(pts[:, 0])
        draws.append(v[:, 0])
        rejected += int(rej[0])
    draws = np.concatenate(draws) if draws else np.empty((0, fmap.dimension))
    return RandomOrbit(int(seed), np.concatenate(points), draws, rejected, lane, start_step)


@dataclass(frozen=True)
class ND1Report:
    delta1: float
    nd1_satisfied: bool
    nd2_satisfied: bool
    samples: int


def check_nd1(fmap, kernel, sample_points=1000, seed=0):
    """Inner radius of the set of perturbed images around ``f0(x)``, minimised over samples.

    For additive noise this is the inradius of the support, reduced near the
    boundary of a bounded domain under the reject policy.
    """
    from .maps import sample_domain

    delta = kernel.inradius
    if delta > 0 and kernel.boundary_policy == "reject":
        pts = sample_domain(fmap.domain, sample_points, seed)
        img = fmap.domain.reduce(fmap.evaluate(pts))
        delta = min(delta, float(np.min(fmap.domain.boundary_distance(img))))
    delta = max(delta, 0.0)
    return ND1Report(delta, delta > 0, kernel.noise_dim == kernel.dimension, sample_points)
