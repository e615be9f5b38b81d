"""Radial grid, field snapshots and the finite-difference stencils shared by the solver
and the data-construction code.

The grid is vertex centred, ``r_j = j*h`` for ``j = 0..n``, so the origin is a grid
point.  Ghost values are produced on demand: even parity at the origin, polynomial
extrapolation at the outer edge (the fields vanish there anyway, and extrapolation
keeps the stencils exact for low-degree polynomials).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError

# Central difference weights, keyed by order: (first derivative, second derivative).
_D1 = {
    2: np.array([-0.5, 0.0, 0.5]),
    4: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
}
_D2 = {
    2: np.array([1.0, -2.0, 1.0]),
    4: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
}
# Extrapolation weights for the outer ghost cells (polynomial of degree ``order``).
_EXTRAP = {
    2: np.array([3.0, -3.0, 1.0]),
    4: np.array([5.0, -10.0, 10.0, -5.0, 1.0]),
}

MIN_CELLS_PER_DELTA = 32


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int
    order: int = 4

    def __post_init__(self):
        if self.order not in _D1:
            raise ValueError(f"unsupported stencil order {self.order}")
        if self.n < 2 * self.order or self.r_max <= 0:
            raise ValueError("grid too small")

    @property
    def h(self):
        return self.r_max / self.n

    @property
    def ghost(self):
        return self.order // 2

    @property
    def r(self):
        return np.arange(self.n + 1) * self.h

    def cells_per(self, length):
        return length / self.h

    def require_resolution(self, delta):
        cells = self.cells_per(delta)
        if cells < MIN_CELLS_PER_DELTA * (1.0 - 1e-12):
            raise ResolutionError(
                f"grid has {cells:.1f} cells across delta={delta}; need >= {MIN_CELLS_PER_DELTA}"
            )

    def refined(self, factor=2):
        return RadialGrid(self.r_max, self.n * factor, self.order)

    @classmethod
    def for_run(cls, delta, t_max, cells_per_delta=MIN_CELLS_PER_DELTA, order=4, margin=1.05):
        """Smallest grid whose domain outruns the pulse until ``t_max`` and that puts
        ``cells_per_delta`` cells across the pulse width."""
        r_max = 1.0 + margin * t_max
        r_max = max(r_max, 1.0 + 4.0 * delta + 0.5)
        n = int(np.ceil(cells_per_delta * r_max / delta))
        return cls(r_max, n, order)


def pad(f, ghost, order):
    """Return ``f`` with ``ghost`` cells added on both ends (even parity at r=0)."""
    n = f.shape[-1]
    out = np.empty(n + 2 * ghost)
    out[ghost:ghost + n] = f
    out[:ghost] = f[ghost:0:-1]
    w = _EXTRAP[order]
    m = len(w)
    for k in range(ghost):
        j = ghost + n + k
        out[j] = w @ out[j - 1:j - 1 - m:-1]
    return out


def d1(f, h, order=4, padded=None):
    g = order // 2
    fp = pad(f, g, order) if padded is None else padded
    w = _D1[order]
    n = f.shape[-1]
    out = np.zeros(n)
    for k, wk in enumerate(w):
        if wk != 0.0:
            out += wk * fp[k:k + n]
    return out / h


def d2(f, h, order=4, padded=None):
    g = order // 2
    fp = pad(f, g, order) if padded is None else padded
    w = _D2[order]
    n = f.shape[-1]
    out = np.zeros(n)
    for k, wk in enumerate(w):
        out += wk * fp[k:k + n]
    return out / (h * h)


def laplacian(f, grid):
    """Radial Laplacian ``f'' + 2 f'/r`` with the regular limit ``3 f''`` at the origin."""
    g = grid.ghost
    fp = pad(f, g, grid.order)
    first = d1(f, grid.h, grid.order, padded=fp)
    second = d2(f, grid.h, grid.order, padded=fp)
    r = grid.r
    out = np.empty_like(second)
    out[1:] = second[1:] + 2.0 * first[1:] / r[1:]
    out[0] = 3.0 * second[0]
    return out


def wave_speed(phit, p):
    return (1.0 + phit**p) ** -0.5


@dataclass(frozen=True)
class FieldState:
    t: float
    grid: RadialGrid
    phi: np.ndarray
    phit: np.ndarray
    p: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def r(self):
        return self.grid.r

    @property
    def phir(self):
        return d1(self.phi, self.grid.h, self.grid.order)

    @property
    def phitr(self):
        return d1(self.phit, self.grid.h, self.grid.order)

    @property
    def c(self):
        return wave_speed(self.phit, self.p)

    def with_fields(self, t, phi, phit):
        return FieldState(t, self.grid, phi, phit, self.p, self.meta)
