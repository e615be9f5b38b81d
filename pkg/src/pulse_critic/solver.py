"""Method-of-lines solver for the radially reduced equation

    (1 + phit^p) phi_tt = phi_rr + (2/r) phi_r,

with classical RK4 in time and centred differences (order 2 or 4) in space.  The solver
does not continue past breakdown; :func:`run` watches several guards and classifies the
run as ``Global``, ``Blowup`` or ``Inconclusive``.
"""

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from . import _kernels
from .errors import HyperbolicityLoss, NumericalBreakdown
from .geometry import DEFAULT_CURVES, EikonalBand, SolutionHistory, seed_characteristics
from .state import FieldState, RadialGrid, d1, laplacian, wave_speed

log = logging.getLogger(__name__)

GLOBAL = "Global"
BLOWUP = "Blowup"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.4
    order: int = 4
    t_max: float = 50.0
    blowup_grad_cap: float = 1e6
    grad_cap_cells: float = 1.0
    hyp_floor: float = 0.1
    dt_floor: float = 1e-10
    mu_floor: float = 1e-3
    corroboration_window: float = 0.1
    snapshot_stride: int = 0
    diag_stride: int = 10
    track_geometry: bool = True
    curves: int = DEFAULT_CURVES
    eikonal: bool = True
    record_stride: int = 0
    fit_window: tuple = None

    def __post_init__(self):
        if not 0.0 < self.cfl <= 0.9:
            raise ValueError(f"cfl must lie in (0, 0.9], got {self.cfl}")
        if self.order not in (2, 4):
            raise ValueError(f"order must be 2 or 4, got {self.order}")
        if not self.blowup_grad_cap > 0.0:
            raise ValueError("blowup_grad_cap must be positive")
        if not self.grad_cap_cells >= 0.0:
            raise ValueError("grad_cap_cells must be >= 0")
        if not 0.0 < self.hyp_floor < 1.0:
            raise ValueError("hyp_floor must lie in (0, 1)")
        if not self.corroboration_window >= 0.0:
            raise ValueError("corroboration_window must be >= 0")
        if not self.t_max > 1.0:
            raise ValueError("t_max must exceed the initial time 1")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class RunOutcome:
    label: str
    termination_reason: str
    t_end: float
    t_star: float = None
    blowup_radius: float = None
    signals: dict = field(default_factory=dict)
    series: list = field(default_factory=list)
    mu_min: float = None
    mu_min_t: float = None
    mu_dev_max: float = None
    fits: dict = field(default_factory=dict)
    error: str = None
    final_state: FieldState = field(default=None, repr=False)
    bundle: object = field(default=None, repr=False)
    band: object = field(default=None, repr=False)
    eikonal_frames: list = field(default_factory=list, repr=False)
    steps: int = 0
    grad_cap: float = None

    def summary(self):
        return {
            "label": self.label,
            "termination_reason": self.termination_reason,
            "t_end": self.t_end,
            "t_star": self.t_star,
            "blowup_radius": self.blowup_radius,
            "signals": self.signals,
            "mu_min": self.mu_min,
            "mu_min_t": self.mu_min_t,
            "mu_dev_max": self.mu_dev_max,
            "fits": self.fits,
            "error": self.error,
            "steps": self.steps,
            "grad_cap": self.grad_cap,
        }


def check_hyperbolic(state, floor):
    a = 1.0 + state.phit**state.p
    bad = ~(a >= floor)
    if bad.any():
        j = int(np.argmax(bad))
        raise HyperbolicityLoss(state.t, state.r[j], float(a[j]))


def _accel(t, phi, phit, grid, p, floor):
    out = np.empty_like(phi)
    bad = _kernels.wave_rhs(phi, phit, p, grid.h, grid.order, floor, out)
    if bad >= 0:
        if not np.isfinite(phit[bad]):
            raise NumericalBreakdown(t)
        raise HyperbolicityLoss(t, bad * grid.h, float(1.0 + phit[bad] ** p))
    return out


def rhs(state, floor=0.1):
    """Time derivatives ``(phit, c^2 * Laplacian(phi))``."""
    return state.phit, _accel(state.t, state.phi, state.phit, state.grid, state.p, floor)


def max_dt(state, cfl):
    cmax = _kernels.max_speed(state.phit, state.p)
    if not np.isfinite(cmax):
        raise FloatingPointError("wave speed undefined: 1 + phit^p <= 0")
    return cfl * state.grid.h / cmax


def step(state, dt, floor=0.1, cfl=None):
    """One classical RK4 step of size ``dt``."""
    if cfl is not None and dt > max_dt(state, cfl) * (1.0 + 1e-12):
        raise ValueError("dt violates the CFL bound")
    grid = state.grid
    new_phi = np.zeros_like(state.phi)
    new_phit = np.zeros_like(state.phit)
    status, j = _kernels.rk4_step(state.phi, state.phit, state.p, grid.h, grid.order, floor, dt,
                                  new_phi, new_phit)
    if status == 1:
        raise HyperbolicityLoss(state.t, j * grid.h, float(1.0 + state.phit[j] ** state.p))
    if status == 2:
        raise NumericalBreakdown(state.t + dt)
    return state.with_fields(state.t + dt, new_phi, new_phit)


def evolve(state, t_end, cfl=0.4, floor=0.1):
    """Plain evolution to ``t_end`` without guards or diagnostics (used by tests)."""
    while state.t < t_end - 1e-13:
        dt = min(max_dt(state, cfl), t_end - state.t)
        state = step(state, dt, floor)
    return state


class _Tracker:
    """Interleaves both mu pipelines with the solver clock.

    A short rolling history of ``phit`` windows feeds the characteristic ODE (advanced
    every solver step) and the eikonal band, which runs on its own clock at Courant
    number ``EIKONAL_COURANT`` and is sampled at solver times through a throwaway copy.
    """

    EIKONAL_COURANT = 1.0
    HALO = 24

    def __init__(self, config, delta, grid, p):
        self.config = config
        self.delta = delta
        self.t0 = 1.0 + 2.0 * delta
        self.h = grid.h
        self.p = p
        self.bundle = None
        self.band = None
        self.frames = []
        self.hist = SolutionHistory(self.h, p, maxlen=8)

    def _window(self, t):
        shift = max(0.0, t - self.t0)
        pad = self.HALO * self.h
        lo = 1.0 - 2.25 * self.delta + 0.95 * shift - pad
        hi = 1.0 + 2.25 * self.delta + 1.05 * shift + pad
        return lo, hi

    def start(self, state):
        self.hist.add_state(state, *self._window(state.t))
        self.bundle = seed_characteristics(self.delta, self.config.curves, self.hist)
        if self.config.eikonal:
            self.band = EikonalBand(self.delta, self.h)

    def advance(self, state):
        dt = state.t - self.bundle.t
        self.hist.add_state(state, *self._window(state.t))
        self.bundle.advance(self.hist, dt)
        band = self.band
        if band is not None:
            while True:
                c, _, _ = self.hist.sample(band.t, band.r)
                dtb = self.EIKONAL_COURANT * self.h / float(np.max(c))
                if band.t + dtb > state.t + 1e-12:
                    break
                band.advance(c, dtb)

    def _band_now(self, t):
        band = self.band
        if band.t < t - 1e-12:
            band = band.copy()
            c, _, _ = self.hist.sample(band.t, band.r)
            band.advance(c, t - band.t)
        return band

    def record(self, state):
        extra = {}
        if self.band is not None:
            band = self._band_now(state.t)
            i0, i1 = band.window
            r_mid, mu = band.mu_field(wave_speed(state.phit[i0:i1], self.p))
            if band is not self.band:
                self.band.degenerate.extend(band.degenerate[len(self.band.degenerate):])
            extra["mu_eik"] = np.interp(self.bundle.r, r_mid, mu)
            extra["u_eik"] = band.u_at(self.bundle.r)
            extra["live"] = self.bundle.alive.copy()
            self.frames.append((state.t, r_mid, mu))
        lo, hi = self._window(state.t)
        i0, i1 = max(0, int(lo / self.h)), min(state.grid.n + 1, int(hi / self.h) + 2)
        extra["c"] = np.interp(self.bundle.r, state.r[i0:i1], wave_speed(state.phit[i0:i1], self.p))
        self.bundle.record(**extra)


def shock_grad_cap(state, cells):
    """Gradient of a jump of height ``sup |phit|`` spread over ``cells`` grid cells.

    A fixed cap cannot fire on a finite grid, where a forming shock saturates at
    ``|d_r phit| ~ jump / h``.  This is the resolution-aware alternative.
    """
    return float(np.max(np.abs(state.phit))) / (cells * state.grid.h)


def effective_grad_cap(config, initial):
    """``blowup_grad_cap``, lowered to :func:`shock_grad_cap` of the initial data when
    ``config.grad_cap_cells > 0``."""
    cap = config.blowup_grad_cap
    if config.grad_cap_cells > 0.0:
        rel = shock_grad_cap(initial, config.grad_cap_cells)
        if rel > 0.0:
            cap = min(cap, rel)
    return cap


def grad_sup(state):
    """``sup |d_r d_t phi|`` and where it is attained."""
    g, j = _kernels.grad_max(state.phit, state.grid.h, state.grid.order)
    return float(g), float(j * state.grid.h)


def run(config, initial, delta=None, on_snapshot=None, on_diag=None):
    """Integrate from ``initial`` (at ``t = 1``) until ``config.t_max`` or a guard fires.

    Errors raised inside the integration are recorded in the returned
    :class:`RunOutcome` rather than propagated.
    """
    from . import diagnostics

    if abs(initial.t - 1.0) > 1e-12:
        raise ValueError("initial state must sit at t = 1")
    if initial.grid.order != config.order:
        initial = FieldState(initial.t, replace(initial.grid, order=config.order), initial.phi,
                             initial.phit, initial.p, initial.meta)
    if delta is None:
        delta = initial.meta.get("delta")
    tracking = config.track_geometry and delta is not None
    tracker = _Tracker(config, delta, initial.grid, initial.p) if tracking else None
    t0 = 1.0 + 2.0 * delta if tracking else None

    grad_cap = effective_grad_cap(config, initial)
    state = initial
    series = []
    signals = {}
    reason = "t_max"
    error = None
    nstep = 0
    band_t = {"t": None}

    def diag(s, dt):
        row = diagnostics.diag_row(s, dt, delta)
        if tracker is not None and tracker.bundle is not None:
            row["mu_min"] = tracker.bundle.mu_min
        else:
            row["mu_min"] = None
        series.append(row)
        if on_diag is not None:
            on_diag(row)

    diag(state, max_dt(state, config.cfl))
    if on_snapshot is not None and config.snapshot_stride:
        on_snapshot(state)
    if tracking and t0 <= state.t:
        tracker.start(state)
        tracker.record(state)

    while state.t < config.t_max - 1e-12:
        try:
            dt = max_dt(state, config.cfl)
        except FloatingPointError:
            dt = 0.0
        if not dt >= config.dt_floor:
            signals.setdefault("dt_collapse", state.t)
            reason = "dt_collapse"
            break
        if tracking and tracker.bundle is None and state.t < t0 < state.t + dt:
            dt = t0 - state.t
        dt = min(dt, config.t_max - state.t)
        try:
            new = step(state, dt, config.hyp_floor)
        except (HyperbolicityLoss, NumericalBreakdown) as exc:
            error = f"{type(exc).__name__}: {exc}"
            reason = "hyperbolicity_loss" if isinstance(exc, HyperbolicityLoss) else "numerical_breakdown"
            signals.setdefault(reason, state.t)
            if isinstance(exc, HyperbolicityLoss):
                signals.setdefault("breakdown_radius", exc.r)
            break
        nstep += 1
        fresh = False
        if tracking:
            if tracker.bundle is None and abs(new.t - t0) <= 1e-12:
                new = new.with_fields(t0, new.phi, new.phit)
                tracker.start(new)
                tracker.record(new)
            elif tracker.bundle is not None:
                try:
                    tracker.advance(new)
                except Exception as exc:  # HistoryGap and friends end tracking, not the run
                    log.warning("geometry tracking stopped at t=%g: %s", new.t, exc)
                    signals.setdefault("tracking_stopped", new.t)
                    tracking = False
                if tracking and tracker.bundle.mu_min < config.mu_floor:
                    if "mu_collapse" not in signals:
                        signals["mu_collapse"] = new.t
                        k = int(np.argmin(tracker.bundle.mu))
                        signals["mu_collapse_radius"] = float(tracker.bundle.r[k])
                        fresh = True
        state = new
        gmax, gpos = grad_sup(state)
        if gmax > grad_cap and "grad_cap" not in signals:
            signals["grad_cap"] = state.t
            signals["grad_cap_radius"] = gpos
            fresh = True
        if fresh and reason == "t_max":
            reason = "grad_cap" if "grad_cap" in signals else "mu_collapse"
        last = state.t >= config.t_max - 1e-12
        stride_hit = config.diag_stride and nstep % config.diag_stride == 0
        if stride_hit or fresh or last:
            diag(state, dt)
            if tracking and tracker.bundle is not None:
                rs = config.record_stride or config.diag_stride
                if not rs or nstep % rs == 0 or fresh or last:
                    tracker.record(state)
        if on_snapshot is not None and config.snapshot_stride and nstep % config.snapshot_stride == 0:
            on_snapshot(state)
        if "grad_cap" in signals and ("mu_collapse" in signals or "dt_collapse" in signals):
            break
        if "grad_cap" in signals:
            signals["grad_cap_peak"] = max(signals.get("grad_cap_peak", 0.0), gmax)
        first = _first_signal(signals)
        if first is not None and state.t >= first + config.corroboration_window - 1e-12:
            if list(_pending(signals)) == ["grad_cap"] and gmax <= grad_cap:
                # uncorroborated excursion that has already subsided (e.g. focusing at r = 0)
                _release_grad_cap(signals)
                reason = "t_max"
                continue
            break

    if on_snapshot is not None and config.snapshot_stride and nstep % config.snapshot_stride != 0:
        on_snapshot(state)

    out = classify(config, state, signals, reason)
    out.series = series
    out.error = error
    out.final_state = state
    out.steps = nstep
    out.grad_cap = grad_cap
    if tracker is not None and tracker.bundle is not None:
        out.bundle = tracker.bundle
        out.band = tracker.band
        out.eikonal_frames = tracker.frames
        out.mu_min = tracker.bundle.mu_min
        out.mu_min_t = tracker.bundle.mu_min_t
        out.mu_dev_max = tracker.bundle.mu_dev_max
    if out.label == GLOBAL:
        out.fits = diagnostics.outcome_fits(series, config)
    return out


_GUARDS = ("grad_cap", "mu_collapse", "dt_collapse")
_TRANSIENT = ("grad_cap_transient", "grad_cap_transient_radius", "grad_cap_transient_peak")


def _pending(signals):
    return [k for k in _GUARDS if k in signals]


def _first_signal(signals):
    fired = [signals[k] for k in _pending(signals)]
    return min(fired) if fired else None


def _release_grad_cap(signals):
    """Move a subsided, uncorroborated gradient-cap hit to the ``grad_cap_transient*``
    keys (the first excursion and the largest peak are kept)."""
    t, radius, peak = signals.pop("grad_cap"), signals.pop("grad_cap_radius"), signals.pop("grad_cap_peak")
    signals.setdefault("grad_cap_transient", t)
    signals.setdefault("grad_cap_transient_radius", radius)
    signals["grad_cap_transient_peak"] = max(signals.get("grad_cap_transient_peak", 0.0), peak)


def classify(config, state, signals, reason):
    """Certification policy: ``Blowup`` needs the gradient signal together with either
    mu collapse or dt collapse; a lone signal (or a breakdown without corroboration)
    is ``Inconclusive``."""
    grad = signals.get("grad_cap")
    corroborating = [signals[k] for k in ("mu_collapse", "dt_collapse") if k in signals]
    if grad is not None and corroborating:
        t_star = min([grad] + corroborating)
        radius = signals.get("mu_collapse_radius", signals.get("grad_cap_radius"))
        return RunOutcome(BLOWUP, reason, state.t, t_star=t_star, blowup_radius=radius, signals=signals)
    quiet = ("tracking_stopped",) + _TRANSIENT
    if reason == "t_max" and not [k for k in signals if k not in quiet]:
        return RunOutcome(GLOBAL, reason, state.t, signals=signals)
    fired = [v for k, v in signals.items()
             if not k.endswith("_radius") and not k.endswith("_peak") and k not in quiet]
    t_first = min(fired) if fired else None
    return RunOutcome(INCONCLUSIVE, reason, state.t, t_star=t_first, signals=signals)
