"""``pulse-critic`` command line: gen-data, run, eikonal, sweep, fit-decay, report.

Exit codes: 0 success, 1 usage error, 2 run failure.
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__, diagnostics, geometry, profiles, sweep
from .config import load_config
from .errors import ConfigError, PulseCriticError
from .solver import run
from .state import FieldState, RadialGrid, wave_speed

log = logging.getLogger("pulse_critic")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
FLOAT_FMT = "%.17g"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def write_csv(path, header, columns):
    np.savetxt(path, np.column_stack(columns), fmt=FLOAT_FMT, delimiter=",", header=",".join(header),
               comments="")


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k].copy() for k, name in enumerate(header)}


def _grid_from_r(r, order=4):
    n = r.size - 1
    h = r[-1] / n
    if abs(r[0]) > 1e-12 * h or np.max(np.abs(np.diff(r) - h)) > 1e-9 * h:
        raise ValueError("data grid must be uniform and start at r = 0")
    return RadialGrid(float(r[-1]), n, order)


# gen-data ------------------------------------------------------------------------------


def cmd_gen_data(args):
    params = profiles.DataParams(args.delta, args.eps0, args.p)
    base = profiles.bump_profile(args.center, args.width, args.amplitude)
    prof = profiles.solve_phi1(base, params)
    if args.grid_n:
        grid = RadialGrid(1.0 + 1.05 * args.t_max, args.grid_n)
    else:
        grid = RadialGrid.for_run(args.delta, args.t_max)
    state = profiles.build_initial_data(prof, params, grid)
    res = profiles.check_outgoing_constraint(state, params)
    exact = profiles.profile_constraint_residuals(prof, params)
    write_csv(args.out, ["r", "phi", "phit"], [state.r, state.phi, state.phit])
    side = {
        "p": params.p, "eps0": params.eps0, "delta": params.delta, "p_c": params.p_c,
        "center": args.center, "width": args.width, "amplitude": args.amplitude,
        "grid_n": grid.n, "r_max": grid.r_max, "t_max": args.t_max,
        "res1": res["res1"], "res2": res["res2"],
        "res1_profile": exact["res1"], "res2_profile": exact["res2"],
        "predicate": diagnostics.blowup_predicate(prof, params),
    }
    _dump_json(side, args.out + ".json")
    print(f"wrote {args.out} ({grid.n + 1} points); res1={res['res1']:.6g} res2={res['res2']:.6g}")
    return EXIT_OK


# run -----------------------------------------------------------------------------------


def snapshot_name(t):
    return f"snap_t{t:.9f}.csv"


def cmd_run(args):
    cfg = load_config(args.config)
    if not os.path.exists(args.data):
        raise FileNotFoundError(f"data file not found: {args.data}")
    d = cfg.data
    side_path = args.data + ".json"
    if os.path.exists(side_path):
        with open(side_path, encoding="utf-8") as fh:
            side = json.load(fh)
        for k in ("p", "eps0", "delta"):
            if k in side and not math.isclose(float(side[k]), float(d[k]), rel_tol=1e-12):
                raise ValueError(f"config {k}={d[k]} disagrees with data sidecar {k}={side[k]}")
    solver_cfg = cfg.solver_config()
    cols = read_csv(args.data)
    grid = _grid_from_r(cols["r"], solver_cfg.order)
    grid.require_resolution(d["delta"])
    if grid.r_max < 1.0 + 1.05 * solver_cfg.t_max - 1e-9:
        log.warning("domain r_max=%g is shorter than 1 + 1.05 t_max", grid.r_max)
    state = FieldState(1.0, grid, cols["phi"], cols["phit"], d["p"], {"delta": d["delta"]})
    os.makedirs(args.out_dir, exist_ok=True)
    index = []
    series_path = os.path.join(args.out_dir, "series.jsonl")
    sfh = open(series_path, "w", encoding="utf-8")

    def on_snapshot(s):
        name = snapshot_name(s.t)
        write_csv(os.path.join(args.out_dir, name), ["r", "phi", "phit", "c"],
                  [s.r, s.phi, s.phit, wave_speed(s.phit, s.p)])
        index.append({"file": name, "t": s.t})

    def on_diag(row):
        sfh.write(json.dumps(row, sort_keys=True) + "\n")

    try:
        out = run(solver_cfg, state, delta=d["delta"],
                  on_snapshot=on_snapshot if solver_cfg.snapshot_stride else None, on_diag=on_diag)
    finally:
        sfh.close()
    _dump_json({"p": d["p"], "eps0": d["eps0"], "delta": d["delta"], "h": grid.h, "n": grid.n,
                "snapshots": index}, os.path.join(args.out_dir, "snapshots.json"))
    summary = out.summary()
    summary.update({"p": d["p"], "eps0": d["eps0"], "delta": d["delta"], "grid_n": grid.n})
    _dump_json(summary, os.path.join(args.out_dir, "outcome.json"))
    print(f"{out.label}: {out.termination_reason} at t={out.t_end:.6g}"
          + (f", t*={out.t_star:.6g}" if out.t_star is not None else ""))
    return EXIT_OK


# eikonal -------------------------------------------------------------------------------


def load_history(run_dir):
    """Rebuild a :class:`SolutionHistory` from the snapshots of a run directory."""
    with open(os.path.join(run_dir, "snapshots.json"), encoding="utf-8") as fh:
        index = json.load(fh)
    snaps = sorted(index["snapshots"], key=lambda e: e["t"])
    if len(snaps) < 2:
        raise ValueError("run directory holds fewer than two snapshots; rerun with snapshot_stride >= 1")
    hist = geometry.SolutionHistory(index["h"], index["p"])
    for e in snaps:
        cols = read_csv(os.path.join(run_dir, e["file"]))
        hist.add(e["t"], cols["phit"])
    return hist, index


def trace(hist, delta, curves, dt=None):
    """Trace ``curves`` characteristics through ``hist`` from ``t0 = 1 + 2 delta``.

    Steps are aligned with the stored snapshot times (sub-stepped to ``dt`` if given).
    """
    t0 = 1.0 + 2.0 * delta
    bundle = geometry.seed_characteristics(delta, curves, hist)
    times = hist.times
    stops = times[times > t0 + 1e-12]
    for t_next in stops:
        while bundle.t < t_next - 1e-12:
            step = t_next - bundle.t if dt is None else min(dt, t_next - bundle.t)
            bundle.advance(hist, step)
        bundle.record()
    return bundle


def cmd_eikonal(args):
    hist, index = load_history(args.run_dir)
    delta = index["delta"]
    bundle = trace(hist, delta, args.curves)
    band, frames = geometry.evolve_eikonal(hist, delta, hist.h)
    rows = []
    for ch in bundle.characteristics():
        tr = geometry.radial_trchi(ch, hist)
        for k, (t, r) in enumerate(ch.path):
            rows.append((ch.u_label, t, r, ch.mu[k], tr["trchi"][k]))
    rows = np.array(rows)
    write_csv(args.out_csv, ["u", "t", "r", "mu", "trchi"], [rows[:, k] for k in range(5)])
    t_last, r_mid, mu_eik, _, _ = frames[-1]
    live = bundle.alive
    mu_e = np.interp(bundle.r, r_mid, mu_eik)
    disc = float(np.max(np.abs(mu_e[live] - bundle.mu[live]) / np.abs(bundle.mu[live]))) if live.any() else None
    m, t_at, u_at = geometry.min_mu(bundle)
    me, te, _ = geometry.min_mu([f[:3] for f in frames])
    summary = {
        "curves": args.curves, "delta": delta, "t0": bundle.t0, "t_end": bundle.t,
        "mu_min": m, "mu_min_t": t_at, "mu_min_u": u_at, "mu_dev_max": bundle.mu_dev_max,
        "eikonal_mu_min": me, "eikonal_mu_min_t": te, "final_rel_discrepancy": disc,
        "foliation_degenerate": [{"t": e.t, "r": e.r} for e in band.degenerate[:1]],
        "collapsed": int((~bundle.alive).sum()),
    }
    _dump_json(summary, args.out_json)
    print(f"mu_min={m:.6g} at t={t_at:.6g} (eikonal {me:.6g}); {args.curves} curves")
    return EXIT_OK


# sweep ---------------------------------------------------------------------------------


def cmd_sweep(args):
    cfg = load_config(args.config, mode="sweep")
    workers = args.workers if args.workers is not None else cfg.sweep["workers"]
    env = os.environ.get("PULSE_CRITIC_THREADS")
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise UsageError(f"PULSE_CRITIC_THREADS must be an integer, got {env!r}") from None
    if workers < 1:
        raise UsageError("worker count must be >= 1")
    jobs = sweep.plan(cfg)
    store = sweep.execute(jobs, workers, args.store, resume=args.resume)
    rows = store.merged()
    failed = [r for r in rows if r.get("status") != sweep.DONE]
    done = [r for r in rows if r.get("status") == sweep.DONE]
    if done:
        _, csv_text, md = sweep.phase_report(store)
        with open(os.path.join(store.path, "phase.csv"), "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        with open(os.path.join(store.path, "phase.md"), "w", encoding="utf-8") as fh:
            fh.write(md)
    print(f"{len(jobs)} jobs: {len(done)} done, {len(failed)} failed")
    return EXIT_OK if not failed else EXIT_FAIL


# fit-decay / report --------------------------------------------------------------------


def read_series(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def cmd_fit_decay(args):
    series = read_series(args.series)
    window = tuple(args.window) if args.window else None
    fits = {}
    for q in args.quantity or diagnostics.DECAY_QUANTITIES:
        try:
            fits[q] = diagnostics.fit_decay(series, q, window).as_dict()
        except (ValueError, PulseCriticError) as exc:
            fits[q] = {"error": str(exc)}
    _dump_json(fits, args.out)
    for q, f in fits.items():
        if "alpha" in f:
            print(f"{q}: alpha={f['alpha']:.4f} C={f['C']:.4g} r2={f['r2']:.4f}")
        else:
            print(f"{q}: {f['error']}")
    return EXIT_OK


def _fmt(x):
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def run_report(run_dir):
    with open(os.path.join(run_dir, "outcome.json"), encoding="utf-8") as fh:
        out = json.load(fh)
    lines = ["# Run report", "", f"- verdict: **{out['label']}** ({out['termination_reason']})",
             f"- p = {out.get('p')}, eps0 = {out.get('eps0')}, delta = {out.get('delta')}, n = {out.get('grid_n')}",
             f"- t_end = {_fmt(out['t_end'])}, t* = {_fmt(out.get('t_star'))}",
             f"- mu_min = {_fmt(out.get('mu_min'))} at t = {_fmt(out.get('mu_min_t'))}",
             f"- max |mu - 1| = {_fmt(out.get('mu_dev_max'))}"]
    if out.get("signals"):
        lines.append("- signals: " + ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(out["signals"].items())))
    if out.get("error"):
        lines.append(f"- error: {out['error']}")
    fits = out.get("fits") or {}
    fit_path = os.path.join(run_dir, "fits.json")
    if os.path.exists(fit_path):
        with open(fit_path, encoding="utf-8") as fh:
            fits = json.load(fh)
    if fits:
        lines += ["", "## Decay fits", "", "| quantity | alpha | C | r2 | window |", "|---|---|---|---|---|"]
        for q in sorted(fits):
            f = fits[q]
            if "alpha" in f:
                lines.append(f"| {q} | {f['alpha']:.4f} | {f['C']:.4g} | {f['r2']:.4f} | "
                             f"[{f['window'][0]:g}, {f['window'][1]:g}] |")
            else:
                lines.append(f"| {q} | - | - | - | {f['error']} |")
    eik = os.path.join(run_dir, "mu_summary.json")
    if os.path.exists(eik):
        with open(eik, encoding="utf-8") as fh:
            ms = json.load(fh)
        lines += ["", "## Characteristics", "",
                  f"- traced mu_min = {_fmt(ms['mu_min'])} at t = {_fmt(ms['mu_min_t'])}",
                  f"- eikonal mu_min = {_fmt(ms['eikonal_mu_min'])}",
                  f"- final ODE/eikonal relative discrepancy = {_fmt(ms['final_rel_discrepancy'])}"]
    return "\n".join(lines) + "\n"


def cmd_report(args):
    if args.store:
        _, csv_text, md = sweep.phase_report(args.store)
        body = "# Phase diagram\n\n" + md
        if args.csv:
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write(csv_text)
    else:
        body = run_report(args.run_dir)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    return EXIT_OK


# entry point ---------------------------------------------------------------------------


def build_parser():
    ap = _Parser(prog="pulse-critic", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"pulse-critic {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="construct constrained short-pulse data at t = 1")
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--eps0", type=float, required=True)
    g.add_argument("--delta", type=float, required=True)
    g.add_argument("--center", type=float, default=-0.5)
    g.add_argument("--width", type=float, default=0.4)
    g.add_argument("--amplitude", type=float, default=1.0)
    g.add_argument("--grid-n", type=int, default=0, help="cells; 0 picks 32 cells per delta")
    g.add_argument("--t-max", type=float, default=50.0, help="horizon the domain must cover")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="evolve data and classify the run")
    r.add_argument("--config", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eikonal", help="trace characteristics through a run's snapshots")
    e.add_argument("--run-dir", required=True)
    e.add_argument("--curves", type=int, default=geometry.DEFAULT_CURVES)
    e.add_argument("--out", dest="out_dir", default=None, help="output directory (default: run dir)")
    e.set_defaults(func=cmd_eikonal)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--store", required=True)
    s.add_argument("--resume", action="store_true", help="keep finished jobs already in the store")
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit-decay", help="power-law fits of a series.jsonl")
    f.add_argument("--series", required=True)
    f.add_argument("--quantity", action="append", choices=diagnostics.DECAY_QUANTITIES)
    f.add_argument("--window", type=float, nargs=2, metavar=("T_LO", "T_HI"))
    f.add_argument("--out", default="fits.json")
    f.set_defaults(func=cmd_fit_decay)

    p = sub.add_parser("report", help="markdown report of a run directory or sweep store")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--run-dir")
    src.add_argument("--store")
    p.add_argument("--out")
    p.add_argument("--csv", help="also write the phase table CSV (with --store)")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        ap.print_help()
        return EXIT_USAGE
    if args.command == "eikonal":
        out_dir = args.out_dir or args.run_dir
        os.makedirs(out_dir, exist_ok=True)
        args.out_csv = os.path.join(out_dir, "characteristics.csv")
        args.out_json = os.path.join(out_dir, "mu_summary.json")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pulse-critic: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"pulse-critic: config error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (PulseCriticError, OSError, ValueError) as exc:
        print(f"pulse-critic: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
