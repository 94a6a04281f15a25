"""Phase-space descriptors: which coordinates are periodic and which are bounded."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

KINDS = ("circle", "torus2", "solid_torus", "skew_solid_torus", "box")

_TOL = 1e-12


def wrap_unit(x):
    """Reduce to [0, 1) by removing the integer part (floor), never returning 1.0."""
    y = x - np.floor(x)
    return np.where(y >= 1.0, 0.0, y)


@dataclass(frozen=True)
class DomainDescriptor:
    """Flat coordinates of a phase space.

    Periodic coordinates live in [0, 1).  Every other coordinate has finite
    ``bounds``; pairs listed in ``discs`` are further constrained to the
    closed disc of radius ``disc_radius`` centred at the origin.
    """

    kind: str
    periodic: tuple
    bounds: tuple
    discs: tuple = ()
    disc_radius: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if len(self.periodic) != len(self.bounds):
            raise ValueError("periodic mask and bounds differ in length")
        for per, b in zip(self.periodic, self.bounds):
            if per:
                if tuple(b) != (0.0, 1.0):
                    raise ValueError("periodic coordinates must have bounds (0, 1)")
            elif not (np.isfinite(b[0]) and np.isfinite(b[1]) and b[0] < b[1]):
                raise ValueError("non-periodic coordinate needs finite bounds")

    @property
    def dimension(self):
        return len(self.periodic)

    @property
    def periodic_mask(self):
        return np.array(self.periodic, dtype=bool)

    @property
    def fully_periodic(self):
        return all(self.periodic)

    def reduce(self, x):
        """Wrap periodic coordinates into [0, 1); other coordinates untouched."""
        x = np.array(x, dtype=float, copy=True)
        if x.shape[-1] != self.dimension:
            raise DomainError(f"expected {self.dimension} coordinates, got {x.shape[-1]}")
        mask = self.periodic_mask
        x[..., mask] = wrap_unit(x[..., mask])
        return x

    def contains(self, x, tol=_TOL):
        """Boolean per point: inside bounds and discs (periodic coords ignored)."""
        x = np.asarray(x, dtype=float)
        ok = np.all(np.isfinite(x), axis=-1)
        for i, (per, (lo, hi)) in enumerate(zip(self.periodic, self.bounds)):
            if not per:
                ok &= (x[..., i] >= lo - tol) & (x[..., i] <= hi + tol)
        for i, j in self.discs:
            ok &= np.hypot(x[..., i], x[..., j]) <= self.disc_radius + tol
        return ok

    def boundary_distance(self, x):
        """Distance from each point to the boundary of the bounded factor (inf if none)."""
        x = np.asarray(x, dtype=float)
        dist = np.full(x.shape[:-1], np.inf)
        in_disc = {i for pair in self.discs for i in pair}
        for i, (per, (lo, hi)) in enumerate(zip(self.periodic, self.bounds)):
            if not per and i not in in_disc:
                dist = np.minimum(dist, np.minimum(x[..., i] - lo, hi - x[..., i]))
        for i, j in self.discs:
            dist = np.minimum(dist, self.disc_radius - np.hypot(x[..., i], x[..., j]))
        return dist

    def check(self, x):
        """Reduce periodic coordinates and raise :class:`DomainError` for outside points."""
        x = self.reduce(x)
        inside = self.contains(x)
        if not np.all(inside):
            bad = np.asarray(x).reshape(-1, self.dimension)[~np.ravel(inside)][0]
            raise DomainError(f"point {bad.tolist()} outside {self.kind} domain")
        return x

    def describe(self):
        return {"kind": self.kind, "dimension": self.dimension,
                "periodic": list(self.periodic),
                "bounds": [list(b) for b in self.bounds],
                "discs": [list(p) for p in self.discs],
                "disc_radius": self.disc_radius}


def circle():
    return DomainDescriptor("circle", (True,), ((0.0, 1.0),))


def torus2():
    return DomainDescriptor("torus2", (True, True), ((0.0, 1.0), (0.0, 1.0)))


def solid_torus():
    """S^1 x closed unit disc, coordinates (x, u, v)."""
    return DomainDescriptor("solid_torus", (True, False, False),
                            ((0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)), discs=((1, 2),))


def skew_solid_torus():
    """T^2 x closed unit disc, coordinates (t, x, u, v)."""
    return DomainDescriptor("skew_solid_torus", (True, True, False, False),
                            ((0.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
                            discs=((2, 3),))
