"""Short-pulse initial data.

The pulse lives in the rescaled variable ``s = (r - 1)/delta`` on ``(-1, 0)``.  The
position profile ``phi0`` is a free smooth bump; the velocity profile ``phi1`` is then
fixed pointwise by the implicit relation

    F(phi1, delta) = phi0' + delta*phi0 + phi1 + delta**a / (2(p+1)) * phi1**(p+1) = 0,
    a = (1 - eps0)*p,

which is what makes the data propagate outward: ``(d_t + d_r)^k phi`` is then
``O(delta**(2 - eps0))`` at ``t = 1`` for ``k = 1, 2``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateJacobian, InvalidSupport, RootSolveFailure
from .state import FieldState, RadialGrid, d1, d2, wave_speed

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class DataParams:
    delta: float
    eps0: float
    p: int

    def __post_init__(self):
        if not 0.0 < self.eps0 < 1.0:
            raise ValueError(f"eps0 must lie in (0, 1), got {self.eps0}")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")

    @property
    def p_c(self):
        return 1.0 / (1.0 - self.eps0)

    @property
    def nonlinear_power(self):
        """Exponent ``(1 - eps0) p`` of delta in front of the nonlinearity."""
        return (1.0 - self.eps0) * self.p

    @property
    def phi_scale(self):
        return self.delta ** (2.0 - self.eps0)

    @property
    def phit_scale(self):
        return self.delta ** (1.0 - self.eps0)


@dataclass(frozen=True)
class Bump:
    """``amplitude * exp(-1/(1 - x^2))`` with ``x = (s - center)/width``."""

    center: float = -0.5
    width: float = 0.4
    amplitude: float = 1.0

    def _parts(self, s):
        x = (np.asarray(s, dtype=float) - self.center) / self.width
        q = 1.0 - x * x
        # exp(-1/q) underflows long before q**-4 overflows; cut at 1/q = 700.
        inside = q > 1.0 / 700.0
        qs = np.where(inside, q, 1.0)
        g = np.where(inside, self.amplitude * np.exp(-1.0 / qs), 0.0)
        return x, qs, g

    def value(self, s):
        return self._parts(s)[2]

    def d1(self, s):
        x, q, g = self._parts(s)
        return g * (-2.0 * x / q**2) / self.width

    def d2(self, s):
        x, q, g = self._parts(s)
        return g * (4.0 * x**2 / q**4 - 2.0 / q**2 - 8.0 * x**2 / q**3) / self.width**2


@dataclass(frozen=True)
class PulseProfile:
    phi0: Callable
    dphi0: Callable
    d2phi0: Callable
    amplitude: float
    support: tuple
    phi1: Optional[Callable] = None
    dphi1: Optional[Callable] = None
    params: Optional[DataParams] = None


def bump_profile(center=-0.5, width=0.4, amplitude=1.0):
    lo, hi = center - width, center + width
    if not (width > 0.0 and lo > -1.0 and hi < 0.0):
        raise InvalidSupport(f"bump support [{lo}, {hi}] is not strictly inside (-1, 0)")
    b = Bump(center, width, amplitude)
    return PulseProfile(b.value, b.d1, b.d2, amplitude, (lo, hi))


def implicit_residual(phi1, phi0, dphi0, delta, eps0, p):
    k = delta ** ((1.0 - eps0) * p) / (2.0 * (p + 1))
    return dphi0 + delta * phi0 + phi1 + k * phi1 ** (p + 1)


def solve_phi1_pointwise(phi0, dphi0, delta, eps0, p, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, s=None):
    """Solve ``F(phi1) = 0`` independently at every sample.

    Newton from ``-phi0'``; a sample whose Newton step leaves the bracket
    ``[-2|phi0'| - 1, 2|phi0'| + 1]`` is finished by bisection instead.
    ``delta = 0`` is allowed and returns ``-phi0'`` exactly.
    """
    phi0 = np.atleast_1d(np.asarray(phi0, dtype=float))
    dphi0 = np.atleast_1d(np.asarray(dphi0, dtype=float))
    s = np.arange(phi0.size, dtype=float) if s is None else np.atleast_1d(s)
    k = delta ** ((1.0 - eps0) * p) / (2.0 * (p + 1)) if delta > 0 else 0.0
    half = k * (p + 1)

    def F(x):
        return dphi0 + delta * phi0 + x + k * x ** (p + 1)

    lo = -2.0 * np.abs(dphi0) - 1.0
    hi = 2.0 * np.abs(dphi0) + 1.0
    x = -dphi0.copy()
    bisect = np.zeros(x.shape, dtype=bool)
    for _ in range(max_iter):
        fx = F(x)
        active = (np.abs(fx) > tol) & ~bisect
        if not active.any():
            break
        jac = 1.0 + half * x ** p
        bad = active & (jac <= 0.0)
        if bad.any():
            raise DegenerateJacobian(s[np.argmax(bad)])
        step = np.where(active, fx / np.where(active, jac, 1.0), 0.0)
        trial = x - step
        leave = active & ((trial < lo) | (trial > hi))
        bisect |= leave
        x = np.where(active & ~leave, trial, x)

    if bisect.any():
        x[bisect] = _bisect(F, lo, hi, bisect, tol, s)

    res = np.abs(F(x))
    if np.any(res > tol):
        j = int(np.argmax(res))
        raise RootSolveFailure(s[j], res[j])
    jac = 1.0 + half * x ** p
    if np.any(jac <= 0.0):
        raise DegenerateJacobian(s[int(np.argmax(jac <= 0.0))])
    return x


def _bisect(F, lo, hi, mask, tol, s):
    idx = np.flatnonzero(mask)
    a, b = lo[idx].copy(), hi[idx].copy()

    def Fm(v):
        full = np.zeros(mask.shape)
        full[idx] = v
        return F(full)[idx]

    fa, fb = Fm(a), Fm(b)
    if np.any(np.sign(fa) == np.sign(fb)):
        j = idx[np.argmax(np.sign(fa) == np.sign(fb))]
        raise RootSolveFailure(s[j], float("nan"))
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = Fm(m)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
        if np.all(np.abs(fm) <= tol) or np.all(b - a <= 4e-16 * np.maximum(1.0, np.abs(m))):
            break
    return 0.5 * (a + b)


def implicit_dphi1(phi1, dphi0, d2phi0, delta, eps0, p):
    """``d phi1/ds`` from differentiating ``F(phi1(s), delta) = 0`` in ``s``."""
    k = delta ** ((1.0 - eps0) * p) / 2.0
    return -(d2phi0 + delta * dphi0) / (1.0 + k * phi1 ** p)


def solve_phi1(profile, params, tol=NEWTON_TOL):
    """Attach the constrained velocity profile ``phi1`` (and its derivative) to ``profile``."""
    delta, eps0, p = params.delta, params.eps0, params.p

    def phi1(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return solve_phi1_pointwise(profile.phi0(s), profile.dphi0(s), delta, eps0, p, tol=tol, s=s)

    def dphi1(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return implicit_dphi1(phi1(s), profile.dphi0(s), profile.d2phi0(s), delta, eps0, p)

    return PulseProfile(
        profile.phi0, profile.dphi0, profile.d2phi0, profile.amplitude, profile.support,
        phi1=phi1, dphi1=dphi1, params=params,
    )


def naive_profile(profile, factor=-2.0):
    """Velocity profile ``phi1 = factor * phi0'`` that ignores the outgoing constraint."""

    def phi1(s):
        return factor * profile.dphi0(np.atleast_1d(s))

    def dphi1(s):
        return factor * profile.d2phi0(np.atleast_1d(s))

    return PulseProfile(
        profile.phi0, profile.dphi0, profile.d2phi0, profile.amplitude, profile.support,
        phi1=phi1, dphi1=dphi1, params=profile.params,
    )


def build_initial_data(profile, params, grid):
    """Sample the scaled data at ``t = 1`` on ``grid``."""
    if profile.phi1 is None:
        raise ValueError("profile has no phi1; call solve_phi1 first")
    if grid.r_max <= 1.0:
        raise ValueError("grid must extend beyond r = 1")
    grid.require_resolution(params.delta)
    r = grid.r
    s = (r - 1.0) / params.delta
    inside = (s > -1.0) & (s < 0.0)
    phi = np.zeros_like(r)
    phit = np.zeros_like(r)
    phi[inside] = params.phi_scale * profile.phi0(s[inside])
    phit[inside] = params.phit_scale * profile.phi1(s[inside])
    meta = {"delta": params.delta, "eps0": params.eps0, "amplitude": profile.amplitude}
    return FieldState(1.0, grid, phi, phit, params.p, meta)


def outgoing_derivatives(state):
    """``(d_t + d_r) phi`` and ``(d_t + d_r)^2 phi`` with ``d_t^2 phi`` taken from the equation."""
    g = state.grid
    phir = d1(state.phi, g.h, g.order)
    phirr = d2(state.phi, g.h, g.order)
    phitr = d1(state.phit, g.h, g.order)
    with np.errstate(invalid="ignore"):  # c is undefined where 1 + phit^p < 0
        c2 = wave_speed(state.phit, state.p) ** 2
    r = g.r
    lap = np.empty_like(phirr)
    lap[1:] = phirr[1:] + 2.0 * phir[1:] / r[1:]
    lap[0] = 3.0 * phirr[0]
    first = state.phit + phir
    second = c2 * lap + 2.0 * phitr + phirr
    return first, second


def check_outgoing_constraint(state, params):
    first, second = outgoing_derivatives(state)
    scale = params.phi_scale
    return {
        "res1": float(np.max(np.abs(first)) / scale),
        "res2": float(np.max(np.abs(second)) / scale),
    }


def profile_constraint_residuals(profile, params, samples=20001):
    """``res1``, ``res2`` evaluated from the exact profile derivatives instead of grid
    differences.

    At ``t = 1`` with ``r = 1 + delta s``: ``phi_r = delta^(1-eps0) phi0'``,
    ``phi_rr = delta^(-eps0) phi0''``, ``phi_tr = delta^(-eps0) phi1'`` and
    ``phi_tt = c^2 (phi_rr + 2 phi_r / r)``.  Grid residuals at a fixed number of cells
    per delta carry a differencing error that, after division by ``delta^(2-eps0)``,
    grows like ``1/delta`` (res1) and ``1/delta^2`` (res2); this evaluation does not.
    """
    if profile.phi1 is None:
        raise ValueError("profile has no phi1")
    lo, hi = profile.support
    s = np.linspace(lo, hi, samples)
    d, e, p = params.delta, params.eps0, params.p
    phi1 = profile.phi1(s)
    r = 1.0 + d * s
    phit = d ** (1.0 - e) * phi1
    phir = d ** (1.0 - e) * profile.dphi0(s)
    phirr = d ** (-e) * profile.d2phi0(s)
    phitr = d ** (-e) * profile.dphi1(s)
    c2 = 1.0 / (1.0 + phit**p)
    first = phit + phir
    second = c2 * (phirr + 2.0 * phir / r) + 2.0 * phitr + phirr
    scale = params.phi_scale
    return {"res1": float(np.max(np.abs(first)) / scale), "res2": float(np.max(np.abs(second)) / scale)}


def profile_extremes(profile, samples=4001):
    """Dense-sample maxima used by the amplitude guard and the blow-up predicate."""
    lo, hi = profile.support
    s = np.linspace(lo, hi, samples)
    out = {"max_abs_phi0": float(np.max(np.abs(profile.phi0(s))))}
    if profile.phi1 is not None:
        out["max_abs_phi1"] = float(np.max(np.abs(profile.phi1(s))))
        out["max_abs_dphi1"] = float(np.max(np.abs(profile.dphi1(s))))
    return out
