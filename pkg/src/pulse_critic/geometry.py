"""Outgoing characteristics, the optical function and the inverse foliation density.

In radial symmetry the outgoing null generator is ``L = d_t + c d_r`` and the optical
function solves ``u_t + c u_r = 0`` with ``u(t0, r) = t0 - r``, ``t0 = 1 + 2 delta``.
The inverse foliation density is ``mu = -c / u_r`` and obeys

    L mu = mu * (d_r c + c^{-1} L c),

so ``mu`` can be obtained two ways: by integrating this ODE along each characteristic
(:class:`CharacteristicBundle`) and by evolving ``u`` itself on a moving band of grid
cells (:class:`EikonalBand`).  The two pipelines share nothing but the sampled wave speed.
"""

from dataclasses import dataclass, field
import copy

import numpy as np

from . import _kernels
from .errors import FoliationDegenerate, HistoryGap

DEFAULT_CURVES = 65


def lagrange4(values, i0, h, r):
    """Cubic (4-point) Lagrange interpolation of uniform samples and its r-derivative.

    ``values[k]`` sits at ``(i0 + k) * h``.  Raises :class:`HistoryGap` when ``r`` is not
    surrounded by two samples on either side.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    f = np.empty_like(r)
    df = np.empty_like(r)
    if not _kernels.lagrange4(np.ascontiguousarray(values, dtype=float), float(i0), float(h), r, f, df):
        m = len(values)
        raise HistoryGap(f"r outside the stored radial window [{(i0 + 1) * h}, {(i0 + m - 2) * h}]")
    return f, df


@dataclass
class _Snapshot:
    t: float
    i0: int
    phit: np.ndarray


class SolutionHistory:
    """Stored ``phit`` windows at increasing times; samples ``c``, ``d_r c``, ``d_t c``.

    Interpolation is cubic in ``r`` and linear in ``t``.  ``d_r c`` is evaluated from the
    interpolated ``phit`` as ``-(p/2) c^3 phit^(p-1) d_r phit`` rather than by
    differencing ``c``.
    """

    def __init__(self, h, p, maxlen=None):
        self.h = float(h)
        self.p = int(p)
        self.maxlen = maxlen
        self._snaps = []

    def __len__(self):
        return len(self._snaps)

    @property
    def times(self):
        return np.array([s.t for s in self._snaps])

    @property
    def t_range(self):
        if not self._snaps:
            return (np.nan, np.nan)
        return self._snaps[0].t, self._snaps[-1].t

    def add(self, t, phit, i0=0):
        if self._snaps and t <= self._snaps[-1].t:
            raise ValueError("history times must increase")
        self._snaps.append(_Snapshot(float(t), int(i0), np.array(phit, dtype=float)))
        if self.maxlen is not None and len(self._snaps) > self.maxlen:
            del self._snaps[0]

    def add_state(self, state, r_lo=None, r_hi=None):
        i0, i1 = 0, state.grid.n + 1
        if r_lo is not None:
            i0 = max(0, int(np.floor(r_lo / self.h)))
        if r_hi is not None:
            i1 = min(i1, int(np.ceil(r_hi / self.h)) + 1)
        self.add(state.t, state.phit[i0:i1], i0)

    def _speed(self, snap, r):
        phit, dphit = lagrange4(snap.phit, snap.i0, self.h, r)
        p = self.p
        c = (1.0 + phit**p) ** -0.5
        cr = -0.5 * p * c**3 * phit ** (p - 1) * dphit
        return c, cr

    def sample(self, t, r):
        """Return ``(c, d_r c, d_t c)`` at time ``t`` and radii ``r``."""
        if not self._snaps:
            raise HistoryGap("empty history")
        t0, t1 = self.t_range
        tol = 1e-12 * max(1.0, abs(t1))
        if t < t0 - tol or t > t1 + tol:
            raise HistoryGap(f"t={t} outside stored history [{t0}, {t1}]")
        if len(self._snaps) == 1:
            c, cr = self._speed(self._snaps[0], r)
            return c, cr, np.zeros_like(c)
        times = self.times
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        a, b = self._snaps[k], self._snaps[k + 1]
        theta = (t - a.t) / (b.t - a.t)
        ca, cra = self._speed(a, r)
        cb, crb = self._speed(b, r)
        c = (1.0 - theta) * ca + theta * cb
        cr = (1.0 - theta) * cra + theta * crb
        ct = (cb - ca) / (b.t - a.t)
        return c, cr, ct


@dataclass
class Characteristic:
    u_label: float
    path: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    alive: bool = True
    t_collapse: float = None

    @property
    def t(self):
        return np.array([q[0] for q in self.path])

    @property
    def r(self):
        return np.array([q[1] for q in self.path])


def _rk4_curves(sampler, t, dt, r, mu):
    def f(tt, rr, mm):
        c, cr, ct = sampler.sample(tt, rr)
        return c, mm * (2.0 * cr + ct / c)

    k1r, k1m = f(t, r, mu)
    k2r, k2m = f(t + 0.5 * dt, r + 0.5 * dt * k1r, mu + 0.5 * dt * k1m)
    k3r, k3m = f(t + 0.5 * dt, r + 0.5 * dt * k2r, mu + 0.5 * dt * k2m)
    k4r, k4m = f(t + dt, r + dt * k3r, mu + dt * k3m)
    r_new = r + dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    mu_new = mu + dt / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
    return r_new, mu_new


class CharacteristicBundle:
    """A family of outgoing characteristics advanced together."""

    def __init__(self, u_labels, t0, r, mu):
        self.u = np.asarray(u_labels, dtype=float)
        self.t0 = float(t0)
        self.t = float(t0)
        self.r = np.asarray(r, dtype=float).copy()
        self.mu = np.asarray(mu, dtype=float).copy()
        self.alive = np.ones(self.u.shape, dtype=bool)
        self.t_collapse = np.full(self.u.shape, np.nan)
        self.mu_min = float(np.min(self.mu))
        self.mu_min_t = self.t0
        self.mu_min_u = float(self.u[int(np.argmin(self.mu))])
        self.mu_dev_max = float(np.max(np.abs(self.mu - 1.0)))
        self.records = []
        self.record()

    def record(self, **extra):
        row = {"t": self.t, "r": self.r.copy(), "mu": self.mu.copy(), "alive": self.alive.copy()}
        row.update(extra)
        self.records.append(row)

    def advance(self, sampler, dt):
        live = self.alive
        if live.any():
            r_new, mu_new = _rk4_curves(sampler, self.t, dt, self.r[live], self.mu[live])
            self.r[live] = r_new
            self.mu[live] = mu_new
        self.t += dt
        dead = live & ~(self.mu > 0.0)
        if dead.any():
            self.alive &= ~dead
            self.t_collapse[dead] = self.t
        m = self.mu[live]
        if m.size:
            j = int(np.argmin(m))
            if m[j] < self.mu_min:
                self.mu_min = float(m[j])
                self.mu_min_t = self.t
                self.mu_min_u = float(self.u[live][j])
            self.mu_dev_max = max(self.mu_dev_max, float(np.max(np.abs(m - 1.0))))

    def characteristics(self):
        out = []
        for k, u in enumerate(self.u):
            ch = Characteristic(float(u))
            for row in self.records:
                ch.path.append((row["t"], float(row["r"][k])))
                ch.mu.append(float(row["mu"][k]))
            ch.alive = bool(self.alive[k])
            ch.t_collapse = None if np.isnan(self.t_collapse[k]) else float(self.t_collapse[k])
            out.append(ch)
        return out


def seed_characteristics(delta, count=DEFAULT_CURVES, history=None):
    """Seed ``count`` curves with ``u`` uniform on ``[0, 4 delta]`` at ``t0 = 1 + 2 delta``."""
    if count < 2:
        raise ValueError("need at least two characteristics")
    if history is None:
        raise HistoryGap("no solution history to seed from")
    t0 = 1.0 + 2.0 * delta
    u = np.linspace(0.0, 4.0 * delta, count)
    r = t0 - u
    c, _, _ = history.sample(t0, r)
    return CharacteristicBundle(u, t0, r, c)


def advance_characteristic(ch, history, dt):
    """Advance one :class:`Characteristic` by ``dt`` (single-curve convenience API)."""
    if not ch.alive:
        return ch
    t, r = ch.path[-1]
    mu = ch.mu[-1]
    r_new, mu_new = _rk4_curves(history, t, dt, np.array([r]), np.array([mu]))
    ch.path.append((t + dt, float(r_new[0])))
    ch.mu.append(float(mu_new[0]))
    if not mu_new[0] > 0.0:
        ch.alive = False
        ch.t_collapse = t + dt
    return ch


class EikonalBand:
    """First-order upwind evolution of ``u`` on a band of grid cells moving with the pulse.

    The band keeps a fixed number of cells and is shifted outward by whole cells as
    ``t`` grows; the cell entering at the outer edge is filled by linear extension
    (exact ahead of the pulse where ``c = 1``), and the inflow ghost at the inner edge
    extends ``u`` linearly.
    """

    def __init__(self, delta, h, margin_cells=16):
        self.h = float(h)
        self.t0 = 1.0 + 2.0 * delta
        self.t = self.t0
        lo = 1.0 - 2.0 * delta
        hi = 1.0 + 2.0 * delta
        self.i0 = max(0, int(np.floor(lo / h)) - margin_cells)
        i1 = int(np.ceil(hi / h)) + margin_cells
        self._base = self.i0
        self.u = self.t0 - (self.i0 + np.arange(i1 - self.i0 + 1)) * h
        self.degenerate = []

    @property
    def r(self):
        return (self.i0 + np.arange(self.u.size)) * self.h

    @property
    def window(self):
        return self.i0, self.i0 + self.u.size

    def advance(self, c_band, dt):
        """One upwind step; ``c_band`` holds ``c`` on the current window at the old time."""
        u = self.u
        nu = c_band * dt / self.h
        left = np.empty_like(u)
        left[1:] = u[:-1]
        left[0] = 2.0 * u[0] - u[1]
        self.u = u - nu * (u - left)
        self.t += dt
        target = self._base + int(np.floor((self.t - self.t0) / self.h + 1e-9))
        shift = target - self.i0
        if shift > 0:
            ext = self.u[-1] + (self.u[-1] - self.u[-2]) * np.arange(1, shift + 1)
            self.u = np.concatenate([self.u[shift:], ext])
            self.i0 = target

    def mu_field(self, c_band):
        """``mu = -c / u_r`` at cell midpoints from one-sided differences.

        Returns ``(r_mid, mu)``; records a :class:`FoliationDegenerate` event (not
        raised) at the first midpoint where ``u_r >= 0``.
        """
        ur = np.diff(self.u) / self.h
        c_mid = 0.5 * (c_band[1:] + c_band[:-1])
        r_mid = self.r[:-1] + 0.5 * self.h
        bad = ur >= 0.0
        if bad.any():
            k = int(np.argmax(bad))
            self.degenerate.append(FoliationDegenerate(self.t, r_mid[k]))
        with np.errstate(divide="ignore"):
            mu = np.where(bad, 0.0, -c_mid / np.where(bad, -1.0, ur))
        return r_mid, mu

    def u_at(self, r):
        return np.interp(r, self.r, self.u)

    def copy(self):
        other = copy.copy(self)
        other.u = self.u.copy()
        other.degenerate = list(self.degenerate)
        return other


def evolve_eikonal(history, delta, h, t_end=None, margin_cells=16, record_every=None, courant=1.0):
    """Run :class:`EikonalBand` through a stored history.

    The band steps at ``dt = courant * h / max c``.  Upwind diffusion scales with
    ``1 - c dt / h``, so a Courant number near one keeps ``u`` almost a pure shift where
    ``c`` is close to 1.  Returns the band and a list of ``(t, r_mid, mu, u, r)`` frames.
    """
    if not 0.0 < courant <= 1.0:
        raise ValueError("courant must lie in (0, 1]")
    t_first, t_last = history.t_range
    band = EikonalBand(delta, h, margin_cells)
    if band.t0 < t_first - 1e-12:
        raise HistoryGap("history starts after t0")
    t_end = t_last if t_end is None else min(t_end, t_last)
    frames = []
    while band.t < t_end - 1e-12:
        c, _, _ = history.sample(band.t, band.r)
        dt = min(courant * h / float(np.max(c)), t_end - band.t)
        if record_every is not None and (not frames or band.t - frames[-1][0] >= record_every - 1e-12):
            r_mid, mu = band.mu_field(c)
            frames.append((band.t, r_mid, mu, band.u.copy(), band.r.copy()))
        band.advance(c, dt)
    c, _, _ = history.sample(band.t, band.r)
    r_mid, mu = band.mu_field(c)
    frames.append((band.t, r_mid, mu, band.u.copy(), band.r.copy()))
    return band, frames


def min_mu(source):
    """Running minimum of ``mu`` with its argmin ``(mu_min, t_at, u_at)``.

    Accepts a :class:`CharacteristicBundle`, a list of :class:`Characteristic`, or a list
    of eikonal frames ``(t, r_mid, mu, ...)`` (``u_at`` is then ``nan``).
    """
    if isinstance(source, CharacteristicBundle):
        return source.mu_min, source.mu_min_t, source.mu_min_u
    best = (np.inf, np.nan, np.nan)
    for item in source:
        if isinstance(item, Characteristic):
            m = np.asarray(item.mu)
            if m.size:
                k = int(np.argmin(m))
                if m[k] < best[0]:
                    best = (float(m[k]), float(item.path[k][0]), item.u_label)
        else:
            t, _, mu = item[0], item[1], item[2]
            if len(mu):
                k = int(np.argmin(mu))
                if mu[k] < best[0]:
                    best = (float(mu[k]), float(t), np.nan)
    if not np.isfinite(best[0]):
        raise ValueError("no tracked data")
    return best


def trchi(c, r):
    """Radial trace of the null second fundamental form, ``2 c / r``."""
    return 2.0 * c / r


def gaussian_curvature(tr_chi, chi_sq, c):
    """``(1/2) c^-2 ((tr chi)^2 - |chi|^2)`` for the spheres of the foliation."""
    return 0.5 * (tr_chi**2 - chi_sq) / c**2


def radial_trchi(ch, history):
    """Evaluate ``tr chi`` along a traced curve and the residual of its transport law.

    In radial symmetry ``|chi|^2 = (tr chi)^2 / 2`` and the curvature term drops out, so
    the traced law reads ``L tr chi = c^-1 (L c) tr chi - (tr chi)^2 / 2``.  Time
    derivatives along the curve are central differences of the stored samples.
    Returns a dict of arrays keyed by ``t, trchi, trchi_check, residual, curvature, r``.
    """
    t = ch.t
    r = ch.r
    c = np.array([history.sample(tt, np.array([rr]))[0][0] for tt, rr in zip(t, r)])
    tc = trchi(c, r)
    check = tc - 2.0 / (t - ch.u_label)
    curv = gaussian_curvature(tc, 0.5 * tc**2, c)
    resid = np.full(t.shape, np.nan)
    if t.size >= 3:
        dtr = np.gradient(tc, t)
        dc = np.gradient(c, t)
        resid = dtr - (dc / c * tc - 0.5 * tc**2)
        resid[0] = resid[-1] = np.nan
    return {"t": t, "r": r, "c": c, "trchi": tc, "trchi_check": check, "residual": resid, "curvature": curv}
