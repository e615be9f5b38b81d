"""Reductions of runs to the quantities that are compared with the theory: sup norms,
power-law decay fits, delta-scaling exponents, energies and convergence orders."""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import FitDomainError, MixedSweepError, NotSmoothError
from .state import FieldState, d1, laplacian, wave_speed

DECAY_QUANTITIES = ("dphi", "phit", "phir", "Lphi", "Lphit")


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    amplitude: float
    window: tuple
    r2: float
    samples: int

    def as_dict(self):
        return {"alpha": self.exponent, "C": self.amplitude, "window": list(self.window),
                "r2": self.r2, "samples": self.samples}


@dataclass(frozen=True)
class ScalingFit:
    quantity: str
    exponent: float
    amplitude: float
    samples: list = field(default_factory=list)
    residual: float = 0.0

    def as_dict(self):
        return {"quantity": self.quantity, "exponent": self.exponent, "amplitude": self.amplitude,
                "samples": [list(s) for s in self.samples], "residual": self.residual}


def sup_norms(state):
    """Radial sup norms of phi, its first derivatives and the outgoing derivatives
    ``Lt = d_t + d_r`` applied to ``phi`` and ``phit``."""
    g = state.grid
    phir = d1(state.phi, g.h, g.order)
    phitr = d1(state.phit, g.h, g.order)
    c2 = wave_speed(state.phit, state.p) ** 2
    Lphi = state.phit + phir
    Lphit = c2 * laplacian(state.phi, g) + phitr
    return {
        "phi": float(np.max(np.abs(state.phi))),
        "phit": float(np.max(np.abs(state.phit))),
        "phir": float(np.max(np.abs(phir))),
        "dphi": float(np.max(np.hypot(state.phit, phir))),
        "Lphi": float(np.max(np.abs(Lphi))),
        "Lphit": float(np.max(np.abs(Lphit))),
        "grad": float(np.max(np.abs(phitr))),
    }


def energy(state):
    """``int (c^-2 phit^2 + phir^2) r^2 dr`` by the trapezoidal rule."""
    g = state.grid
    phir = d1(state.phi, g.h, g.order)
    dens = (1.0 + state.phit**state.p) * state.phit**2 + phir**2
    return float(np.trapezoid(dens * g.r**2, dx=g.h))


def diag_row(state, dt, delta=None):
    row = {"t": float(state.t), "dt": float(dt)}
    row.update(sup_norms(state))
    row["energy"] = energy(state)
    return row


def _series_arrays(series, quantity):
    if isinstance(series, dict):
        return np.asarray(series["t"], dtype=float), np.asarray(series[quantity], dtype=float)
    t = np.array([row["t"] for row in series], dtype=float)
    v = np.array([row[quantity] for row in series], dtype=float)
    return t, v


def fit_decay(series, quantity="dphi", window=None, min_samples=10):
    """Least-squares fit ``v ~ C t^-alpha`` in log-log coordinates over ``window``.

    ``series`` is a list of diagnostic rows (dicts with ``t``) or a dict of arrays.
    The default window is ``[t_max/4, t_max]``.
    """
    t, v = _series_arrays(series, quantity)
    if window is None:
        window = (t.max() / 4.0, t.max())
    lo, hi = window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < min_samples:
        raise ValueError(f"only {int(sel.sum())} samples in window {window}; need {min_samples}")
    tw, vw = t[sel], v[sel]
    if np.any(~(vw > 0.0)):
        raise FitDomainError(f"nonpositive {quantity} values inside the fit window")
    x, y = np.log(tw), np.log(vw)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-coef[1]), float(math.exp(coef[0])), (float(lo), float(hi)), r2, int(sel.sum()))


def outcome_fits(series, config):
    window = config.fit_window
    if window is None:
        window = (config.t_max / 4.0, config.t_max)
    out = {}
    for q in DECAY_QUANTITIES:
        try:
            out[q] = fit_decay(series, q, window).as_dict()
        except KeyError:
            out[q] = {"error": f"{q} not recorded"}
        except (ValueError, FitDomainError) as exc:
            out[q] = {"error": str(exc)}
    return out


def loglog_slope(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    A = np.column_stack([np.ones_like(x), x])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[1]), float(math.exp(coef[0])), resid


def delta_scaling(runs, quantity="C"):
    """Log-log slope in delta of a per-run scalar.

    ``runs`` is a list of ``(delta, summary)`` where ``summary`` maps ``quantity`` to a
    positive number and may carry ``p``, ``eps0`` and ``profile`` for consistency checks.
    """
    if len(runs) < 3:
        raise ValueError("delta_scaling needs at least three runs")
    keys = ("p", "eps0", "profile")
    ref = {k: runs[0][1].get(k) for k in keys}
    for _, summ in runs[1:]:
        for k in keys:
            if summ.get(k) != ref[k]:
                raise MixedSweepError(f"runs disagree on {k}: {summ.get(k)!r} vs {ref[k]!r}")
    deltas = [float(d) for d, _ in runs]
    if len(set(deltas)) != len(deltas):
        raise MixedSweepError("duplicate delta values")
    vals = [float(s[quantity]) for _, s in runs]
    if any(not v > 0 for v in vals):
        raise FitDomainError(f"nonpositive {quantity} in delta sweep")
    slope, amp, resid = loglog_slope(deltas, vals)
    return ScalingFit(quantity, slope, amp, sorted(zip(deltas, vals)), resid)


def _probe_fields(item, probe_t):
    if isinstance(item, FieldState):
        state = item
    else:
        state = item.final_state
        if item.label != "Global" and item.t_end < probe_t - 1e-12:
            raise NotSmoothError(f"run stopped at t={item.t_end} ({item.termination_reason}) before the probe")
        if any(k in item.signals for k in ("grad_cap", "dt_collapse", "mu_collapse",
                                            "hyperbolicity_loss", "numerical_breakdown")):
            raise NotSmoothError("a guard fired before the probe time")
    if abs(state.t - probe_t) > 1e-9:
        raise NotSmoothError(f"state at t={state.t} does not sit at the probe time {probe_t}")
    return state


def convergence_order(coarse, medium, fine, probe_t, field="phi"):
    """Observed order ``log2(|f_h - f_h/2| / |f_h/2 - f_h/4|)`` on the coarse grid points.

    Each argument is a :class:`FieldState` or a run outcome carrying ``final_state``.
    """
    states = [_probe_fields(x, probe_t) for x in (coarse, medium, fine)]
    n0 = states[0].grid.n
    if states[1].grid.n != 2 * n0 or states[2].grid.n != 4 * n0:
        raise ValueError("grids must be h, h/2, h/4")
    a = getattr(states[0], field)
    b = getattr(states[1], field)[::2]
    c = getattr(states[2], field)[::4]
    e1 = float(np.max(np.abs(a - b)))
    e2 = float(np.max(np.abs(b - c)))
    if e2 == 0.0:
        raise NotSmoothError("finest differences vanish; order undefined")
    return math.log2(e1 / e2)


def blowup_predicate(profile, params, samples=20001):
    """Evaluate ``max_s phi1^(p-1) d_s phi1`` against the shock-formation threshold."""
    p = params.p
    pc = params.p_c
    lo, hi = profile.support
    s = np.linspace(lo, hi, samples)
    if profile.phi1 is None:
        raise ValueError("profile has no phi1")
    lhs = profile.phi1(s) ** (p - 1) * profile.dphi1(s)
    lhs_max = float(np.max(lhs))
    k = int(np.argmax(lhs))
    if math.isclose(p, pc, rel_tol=1e-12):
        regime = "critical"
        threshold = (p - 1) * 2.0**p / (p * (2.0 ** (p - 1) - 1.0))
    elif p < pc:
        regime = "sub-critical"
        threshold = 2.0 / p
    else:
        return {"lhs_max": lhs_max, "s_at": float(s[k]), "threshold": None,
                "satisfied": None, "regime": "super-critical"}
    return {"lhs_max": lhs_max, "s_at": float(s[k]), "threshold": threshold,
            "satisfied": bool(lhs_max > threshold), "regime": regime}
