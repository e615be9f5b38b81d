"""Parameter sweeps: plan a job grid, run it on a process pool, persist results to an
append-only JSONL store, resume after interruption and assemble the phase diagram.

Store layout (a directory)::

    manifest.json   plan: job ids and parameters, written once per plan
    results.jsonl   one record per finished job, appended by the parent process only
    merged.jsonl    canonical view (last record per id, sorted by id)
"""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os

from . import diagnostics, profiles
from .config import SECTIONS, Config
from .errors import ConfigError, PulseCriticError
from .solver import run
from .state import RadialGrid

log = logging.getLogger(__name__)

PENDING, DONE, FAILED = "pending", "done", "failed"
JOB_AXES = ("p", "eps0", "delta", "amplitude", "grid_n", "t_max")

RESULTS = "results.jsonl"
MANIFEST = "manifest.json"
MERGED = "merged.jsonl"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def job_id(params, settings):
    blob = canonical_json({"params": params, "settings": settings})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class Job:
    id: str
    params: dict
    settings: dict = field(default_factory=dict)
    status: str = PENDING

    def as_dict(self):
        return {"id": self.id, "params": self.params, "settings": self.settings}


def _excluded(params, rules):
    for rule in rules:
        if all(math.isclose(float(params[k]), v, rel_tol=1e-12, abs_tol=0.0) for k, v in rule.items()):
            return True
    return False


def plan(config):
    """Expand a sweep config into jobs (Cartesian product minus exclusions), sorted by id.

    ``config`` is a :class:`~pulse_critic.config.Config` parsed in sweep mode, or a dict
    with the axis lists plus optional ``exclude``, ``data``, ``solver`` and ``geometry``.
    """
    if isinstance(config, dict):
        axes = config
        settings = {k: dict(config.get(k, {})) for k in ("data", "solver", "geometry")}
    else:
        axes = config.sweep
        settings = {"data": dict(config.data), "solver": dict(config.solver), "geometry": dict(config.geometry)}
    defaults = {"amplitude": [1.0], "grid_n": [0], "t_max": [50.0]}
    lists = {}
    for k in JOB_AXES:
        v = axes.get(k, defaults.get(k))
        if v is None:
            raise ConfigError(f"sweep axis {k!r} is missing")
        v = list(v) if isinstance(v, (list, tuple)) else [v]
        if not v:
            raise ConfigError(f"sweep axis {k!r} is empty")
        lists[k] = v
    for p in lists["p"]:
        if int(p) != p or p < 1:
            raise ConfigError(f"p must be a positive integer, got {p}")
    for e in lists["eps0"]:
        if not 0.0 < e < 1.0:
            raise ConfigError(f"eps0 must lie in (0, 1), got {e}")
    for d in lists["delta"]:
        if not d > 0.0:
            raise ConfigError(f"delta must be positive, got {d}")
    # Per-job values live in params; strip them from the shared settings.
    data = settings["data"]
    for k in ("p", "eps0", "delta", "amplitude", "grid_n"):
        data.pop(k, None)
    settings["solver"].pop("t_max", None)
    rules = axes.get("exclude") or []

    jobs = {}
    for combo in itertools.product(*(lists[k] for k in JOB_AXES)):
        params = dict(zip(JOB_AXES, combo))
        params["p"] = int(params["p"])
        params["grid_n"] = int(params["grid_n"])
        for k in ("eps0", "delta", "amplitude", "t_max"):
            params[k] = float(params[k])
        if _excluded(params, rules):
            continue
        jid = job_id(params, settings)
        jobs[jid] = Job(jid, params, settings)
    return [jobs[k] for k in sorted(jobs)]


def _none_if_nan(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def run_job(job):
    """Run one job end to end; always returns a JSON-ready record (never raises)."""
    if isinstance(job, Job):
        job = job.as_dict()
    params, settings = job["params"], job.get("settings", {})
    rec = {"id": job["id"], "params": params}
    try:
        data = {k: d for k, (_, d, _, _) in SECTIONS["data"].items()}
        data.update(settings.get("data", {}))
        solver = {k: d for k, (_, d, _, _) in SECTIONS["solver"].items()}
        solver.update(settings.get("solver", {}))
        geometry = {k: d for k, (_, d, _, _) in SECTIONS["geometry"].items()}
        geometry.update(settings.get("geometry", {}))
        dp = profiles.DataParams(params["delta"], params["eps0"], params["p"])
        base = profiles.bump_profile(data["center"], data["width"], params["amplitude"])
        prof = profiles.solve_phi1(base, dp)
        t_max = params["t_max"]
        if params["grid_n"]:
            r_max = RadialGrid.for_run(params["delta"], t_max).r_max
            grid = RadialGrid(r_max, params["grid_n"], solver["order"])
        else:
            grid = RadialGrid.for_run(params["delta"], t_max, cells_per_delta=data["cells_per_delta"],
                                      order=solver["order"])
        state = profiles.build_initial_data(prof, dp, grid)
        cfg = Config(data=data, solver=dict(solver, t_max=t_max), geometry=geometry).solver_config()
        out = run(cfg, state, delta=params["delta"])
        pred = diagnostics.blowup_predicate(prof, dp)
        dphi_fit = out.fits.get("dphi", {})
        rec.update({
            "status": DONE,
            "verdict": out.label,
            "termination_reason": out.termination_reason,
            "t_end": out.t_end,
            "t_star": out.t_star,
            "blowup_radius": out.blowup_radius,
            "mu_min": _none_if_nan(out.mu_min),
            "mu_dev_max": _none_if_nan(out.mu_dev_max),
            "alpha": dphi_fit.get("alpha"),
            "C": dphi_fit.get("C"),
            "fits": out.fits,
            "signals": out.signals,
            "grid_n": grid.n,
            "steps": out.steps,
            "grad_cap": out.grad_cap,
            "predicate": pred,
            "error": out.error,
        })
    except (PulseCriticError, ValueError, ArithmeticError) as exc:
        rec.update({"status": FAILED, "error": f"{type(exc).__name__}: {exc}"})
    return rec


class Store:
    """Append-only JSONL result store in a directory."""

    def __init__(self, path):
        self.path = str(path)
        os.makedirs(self.path, exist_ok=True)

    @property
    def results_path(self):
        return os.path.join(self.path, RESULTS)

    def write_manifest(self, jobs):
        body = {"jobs": [j.as_dict() for j in jobs]}
        tmp = os.path.join(self.path, MANIFEST + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(body, sort_keys=True, indent=1) + "\n")
        os.replace(tmp, os.path.join(self.path, MANIFEST))

    def read_manifest(self):
        path = os.path.join(self.path, MANIFEST)
        if not os.path.exists(path):
            return []
        with open(path, encoding="utf-8") as fh:
            body = json.load(fh)
        return [Job(j["id"], j["params"], j.get("settings", {})) for j in body["jobs"]]

    def records(self):
        """All complete records in append order; a torn trailing line (from a kill
        mid-write) is dropped and truncated away."""
        path = self.results_path
        if not os.path.exists(path):
            return []
        out = []
        good = 0
        with open(path, "rb") as fh:
            raw = fh.read()
        for line in raw.splitlines(keepends=True):
            if not line.endswith(b"\n"):
                break
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                break
            good += len(line)
        if good != len(raw):
            with open(path, "r+b") as fh:
                fh.truncate(good)
        return out

    def append(self, record):
        line = canonical_json(record) + "\n"
        with open(self.results_path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def latest(self):
        last = {}
        for rec in self.records():
            last[rec["id"]] = rec
        return last

    def merged(self):
        last = self.latest()
        return [last[k] for k in sorted(last)]

    def write_merged(self):
        body = "".join(canonical_json(r) + "\n" for r in self.merged())
        tmp = os.path.join(self.path, MERGED + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(body)
        os.replace(tmp, os.path.join(self.path, MERGED))
        return body


def execute(jobs, worker_count, store, resume=True):
    """Run every job that has no ``done`` record in ``store``.

    Records are appended by this (parent) process only, in completion order; the
    canonical ``merged.jsonl`` is rewritten at the end.  Returns the store.
    """
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    if not isinstance(store, Store):
        store = Store(store)
    if not resume and os.path.exists(store.results_path):
        os.remove(store.results_path)
    store.write_manifest(jobs)
    finished = {k for k, r in store.latest().items() if r.get("status") == DONE}
    todo = [j for j in jobs if j.id not in finished]
    for j in jobs:
        j.status = DONE if j.id in finished else PENDING
    by_id = {j.id: j for j in jobs}
    if todo:
        if worker_count == 1:
            for j in todo:
                rec = run_job(j)
                store.append(rec)
                j.status = rec["status"]
        else:
            with ProcessPoolExecutor(max_workers=worker_count) as pool:
                futs = {pool.submit(run_job, j.as_dict()): j.id for j in todo}
                for fut in as_completed(futs):
                    jid = futs[fut]
                    try:
                        rec = fut.result()
                    except Exception as exc:  # worker died; record and keep going
                        rec = {"id": jid, "params": by_id[jid].params, "status": FAILED,
                               "error": f"{type(exc).__name__}: {exc}"}
                    store.append(rec)
                    by_id[jid].status = rec["status"]
    store.write_merged()
    return store


def predicted_side(p, eps0):
    pc = 1.0 / (1.0 - eps0)
    if math.isclose(p, pc, rel_tol=1e-12):
        return "critical"
    return "global" if p > pc else "blowup-capable"


def _assess(predicted, verdicts, predicates):
    if predicted == "critical":
        return "borderline (not adjudicated)"
    if any(v not in ("Global", "Blowup") for v in verdicts):
        return "needs refinement"
    if predicted == "global":
        return "agrees" if all(v == "Global" for v in verdicts) else "needs refinement"
    ok = True
    for v, sat in zip(verdicts, predicates):
        if v == "Global" and sat:
            ok = False
    return "agrees" if ok else "needs refinement"


def phase_report(store):
    """Phase table per ``(p, eps0)``: returns ``(rows, csv_text, markdown)``."""
    if not isinstance(store, Store):
        store = Store(store)
    recs = [r for r in store.merged() if r.get("status") == DONE]
    if not recs:
        raise ValueError("store holds no finished jobs")
    rows = []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "eps0", "delta", "verdict", "t_star", "mu_min", "alpha"])

    def num(x):
        return "" if x is None else format(float(x), ".17g")

    recs.sort(key=lambda r: (r["params"]["p"], r["params"]["eps0"], -r["params"]["delta"],
                             r["params"]["amplitude"], r["id"]))
    for r in recs:
        q = r["params"]
        w.writerow([q["p"], num(q["eps0"]), num(q["delta"]), r["verdict"], num(r.get("t_star")),
                    num(r.get("mu_min")), num(r.get("alpha"))])
    cells = {}
    for r in recs:
        key = (r["params"]["p"], r["params"]["eps0"])
        cells.setdefault(key, []).append(r)
    md = ["| p | eps0 | p_c | predicted | verdicts by delta | assessment |", "|---|---|---|---|---|---|"]
    for (p, e), group in sorted(cells.items()):
        pred = predicted_side(p, e)
        verdicts = [g["verdict"] for g in group]
        sats = [bool((g.get("predicate") or {}).get("satisfied")) for g in group]
        assessment = _assess(pred, verdicts, sats)
        by_delta = ", ".join(f"{g['params']['delta']:g}: {g['verdict']}" for g in group)
        rows.append({"p": p, "eps0": e, "p_c": 1.0 / (1.0 - e), "predicted": pred,
                     "verdicts": verdicts, "assessment": assessment})
        md.append(f"| {p} | {e:g} | {1.0 / (1.0 - e):.4g} | {pred} | {by_delta} | {assessment} |")
    failed = [r for r in store.merged() if r.get("status") == FAILED]
    if failed:
        md.append("")
        md.append(f"{len(failed)} job(s) failed:")
        md.extend(f"- `{r['id']}` {r['params']}: {r.get('error')}" for r in failed)
    return rows, buf.getvalue(), "\n".join(md) + "\n"
