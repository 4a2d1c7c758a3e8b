"""Experiment orchestration behind the command-line interface.

Each experiment kind writes its report under ``out/reports`` and returns an
exit code: 0 when every requested verdict or convergence flag holds, 1
otherwise.  Blow-ups propagate to the caller.
"""
from __future__ import annotations

from pathlib import Path

from . import __version__
from .config import build_field, build_universe
from .dimension import BaseFlow, dimension_bound_report, propagate_bundle, uniform_differentiability_check
from .errors import ConvergenceError, InsufficientDataError
from .estimates import (absorbing_radius_sq, verify_absorbing_radius, verify_decay_bound,
                        verify_energy_inequality, verify_tail_smallness, verify_time_avg_bounds)
from .integrator import energy_budget, integrate, trajectory_rows
from .jsonio import write_json, write_jsonl
from .model import grashof, tempered_integral_expression
from .pullback import (attractor_estimate, compare_universes, nontriviality_check,
                       nontriviality_threshold, semicontinuity_experiment, vw_decomposition)
from .snapshot import write_snapshot

DEFAULT_CHECKS = ("energy", "decay", "absorbing", "time_avg")


def params_dict(run):
    p = run.params
    return {
        "nu": p.nu,
        "nu0": p.nu0,
        "n": p.lattice.n,
        "dealias_cut": p.lattice.dealias_cut,
        "dt": run.step.dt,
        "scheme": run.step.scheme,
        "nonlinear_viscosity_mode": run.step.nonlinear_viscosity_mode,
        "seed": run.seed,
        "forcing": run.forcing.describe(),
    }


class Artifacts:
    def __init__(self, out):
        self.out = Path(out)
        self.paths = []

    def _rel(self, path):
        self.paths.append(str(Path(path).relative_to(self.out)))
        return self.paths[-1]

    def report(self, name, obj):
        return self._rel(write_json(self.out / "reports" / f"{name}.json", obj))

    def trajectory(self, record):
        return self._rel(write_jsonl(self.out / "trajectory.jsonl", trajectory_rows(record)))

    def snapshot(self, name, lat, uh):
        return self._rel(write_snapshot(self.out / "snapshots" / f"{name}.pblb", lat, uh))

    def snapshot_writer(self, lat):
        def write(t, uh):
            return self.snapshot(f"t_{t:+.6f}", lat, uh)
        return write

    def manifest(self, config_hash, kind, exit_code):
        return write_json(self.out / "manifest.json", {
            "config_sha256": config_hash,
            "version": __version__,
            "experiment": kind,
            "exit_code": exit_code,
            "artifacts": sorted(self.paths),
        })


def _simulate(run, art, keep_states=False):
    ex = run.experiment
    lat = run.params.lattice
    writer = art.snapshot_writer(lat) if run.snapshot_every else None
    rec = integrate(run.u0, ex["tau"], ex["t_end"], run.step, run.params, run.forcing,
                    sample_every=run.sample_every, snapshot_every=run.snapshot_every,
                    snapshot_writer=writer, keep_states=keep_states)
    art.trajectory(rec)
    return rec


def run_simulate(run, art, threads):
    rec = _simulate(run, art)
    budget = energy_budget(rec) if len(rec.times) > 1 else None
    art.report("simulate", {
        "experiment": "simulate",
        "params": params_dict(run),
        "tau": rec.tau,
        "t_end": rec.t_end,
        "samples": len(rec.times),
        "E_final": rec.E[-1],
        "Ens_final": rec.Ens[-1],
        "l4v_integral": rec.l4v_sum,
        "energy_budget_max_abs": budget.max_abs if budget else None,
        "snapshots": rec.snapshot_paths,
    })
    return 0


def run_verify(run, art, threads):
    ex = run.experiment
    checks = ex.get("checks", list(DEFAULT_CHECKS))
    rec = _simulate(run, art, keep_states="tail" in checks)
    mu = ex.get("mu", run.params.nu * run.params.lambda1)
    verdicts = {}
    errors = {}
    jobs = {
        "energy": lambda: verify_energy_inequality(rec),
        "decay": lambda: verify_decay_bound(rec, mu),
        "absorbing": lambda: verify_absorbing_radius(rec, mu),
        "time_avg": lambda: verify_time_avg_bounds(rec, ex.get("windows")),
        "tail": lambda: verify_tail_smallness(rec, ex.get("tail_m", 0), ex.get("tail_eps"),
                                              t_from=ex.get("tail_from")),
    }
    for name in checks:
        try:
            v = jobs[name]()
            verdicts[v.name] = v.to_dict()
        except (InsufficientDataError, ValueError) as e:
            errors[name] = str(e)
    holds = not errors and all(v["holds"] for v in verdicts.values())
    art.report("verify", {
        "experiment": "verify",
        "params": params_dict(run),
        "mu": mu,
        "verdicts": verdicts,
        "errors": errors,
        "holds": holds,
    })
    return 0 if holds else 1


def run_pullback(run, art, threads):
    ex = run.experiment
    universe = build_universe(ex["universe"])
    est = attractor_estimate(ex["t"], ex["tau_schedule"], universe, ex.get("n_members", 4),
                             ex.get("tol", 1e-6), run.params, run.forcing, run.step, run.seed,
                             threads, ex.get("norm", "H"), ex.get("direction_kmax", 3))
    report = {"experiment": "pullback", "params": params_dict(run), **est.to_dict(),
              "verdicts": {"converged": est.converged}}
    if run.params.nu0 > 0:
        report["nontriviality"] = nontriviality_check(ex["t"], run.params, run.forcing, est,
                                                      ex.get("threshold_c", 1.0),
                                                      ex.get("grashof_window", 10.0))
    if ex.get("persist_cloud"):
        report["cloud"] = [art.snapshot(f"cloud_{j:03d}", run.params.lattice, u)
                           for j, u in enumerate(est.cloud.members)]
    art.report("pullback", report)
    return 0 if est.converged else 1


def run_dimension(run, art, threads):
    ex = run.experiment
    p = run.params
    flow = BaseFlow(run.u0, ex["tau"], ex["horizon"], p, run.forcing, run.step,
                    ex.get("burn_in", 0.0))
    variant = ex.get("variant", "full_gateaux")
    res = propagate_bundle(flow, ex["n"], variant, ex.get("reorth_interval", 10),
                           init=ex.get("init", "stokes"), seed=run.seed)
    window = ex.get("window", ex["horizon"])
    M = run.forcing.window_mean(res.t_end, window, p.lattice, "V'")
    g = grashof(run.forcing, p, res.t_end, window)
    rtol = ex.get("rtol", 0.05)
    bound = dimension_bound_report(res, p, g, M, ex.get("C", 1.0), ex.get("C_F", 1.0),
                                   ex.get("n_max", 100), rtol, allow_unconverged=True)
    verdicts = {"converged": res.converged(rtol)}
    if bound["crossing_consistent"] is not None:
        verdicts["crossing_consistent"] = bound["crossing_consistent"]
    report = {"experiment": "dimension", "params": params_dict(run), "bundle": res.to_dict(),
              "bound": bound}
    if "differentiability" in ex:
        d = ex["differentiability"]
        xi = build_field({"kind": "random", "energy": 1.0, "kmax": 3}, p.lattice, run.seed, 7)
        table = uniform_differentiability_check(run.u0, xi, ex["tau"], d["t"], d["deltas"], p,
                                                run.forcing, run.step, variant)
        report["differentiability"] = table
        if variant == "full_gateaux" and table["slope"] is not None:
            verdicts["differentiability_rate"] = abs(table["slope"] - 1.0) <= 0.15
    report["verdicts"] = verdicts
    art.report("dimension", report)
    return 0 if all(verdicts.values()) else 1


def run_semicontinuity(run, art, threads):
    ex = run.experiment
    universe = build_universe(ex["universe"]) if "universe" in ex else None
    verdicts = {}
    report = {"experiment": "semicontinuity", "params": params_dict(run),
              "tau_schedule": ex["tau_schedule"]}
    try:
        sc = semicontinuity_experiment(ex["t"], ex["eps_list"], run.forcing, ex["tau_schedule"],
                                       run.params, run.step, ex.get("n_members", 2), run.seed,
                                       ex.get("tol", 1e-6), universe, threads)
        report.update(sc)
        verdicts["monotone"] = sc["monotone"]
    except ConvergenceError as e:
        report["error"] = str(e)
        verdicts["converged"] = False
    if "vw" in ex:
        vw = ex["vw"]
        eps = vw.get("eps", ex["eps_list"][-1])
        r = vw_decomposition(run.u0, vw["tau"], ex["t"], eps, run.forcing, run.params, run.step)
        report["vw"] = r.to_dict()
        verdicts["vw_residual"] = r.max_rel_residual < 1e-8
        verdicts["v_decay"] = r.decay_holds
    report["verdicts"] = verdicts
    art.report("semicontinuity", report)
    return 0 if all(verdicts.values()) else 1


def run_compare(run, art, threads):
    ex = run.experiment
    universes = [build_universe(u) for u in ex["universes"]]
    report = {"experiment": "compare-universes", "params": params_dict(run),
              "tau_schedule": ex["tau_schedule"]}
    try:
        cmp = compare_universes(ex["t"], ex["tau_schedule"], run.params, run.forcing, run.step,
                                universes, ex.get("n_members", 4), run.seed, ex.get("tol", 1e-6),
                                threads)
        report.update(cmp)
        report["verdicts"] = {"inclusion": cmp["inclusion_holds"],
                              "equality": cmp["equality_holds"]}
        ok = cmp["holds"]
    except ConvergenceError as e:
        report["error"] = str(e)
        report["verdicts"] = {"converged": False}
        ok = False
    art.report("compare-universes", report)
    return 0 if ok else 1


RUNNERS = {
    "simulate": run_simulate,
    "verify": run_verify,
    "pullback": run_pullback,
    "dimension": run_dimension,
    "semicontinuity": run_semicontinuity,
    "compare-universes": run_compare,
}


def execute(run, out, config_hash, threads=1):
    art = Artifacts(out)
    kind = run.experiment["kind"]
    code = RUNNERS[kind](run, art, threads)
    art.manifest(config_hash, kind, code)
    return code


# ------------------------------------------------------------- describe

def _steps(span, dt):
    return int(round(span / dt))


def work_units(run):
    """Number of base-flow steps (one unit = one ETD2 step of one field)."""
    ex = run.experiment
    dt = run.step.dt
    k = ex["kind"]
    if k in ("simulate", "verify"):
        return _steps(ex["t_end"] - ex["tau"], dt)
    if k == "pullback":
        return ex.get("n_members", 4) * sum(_steps(ex["t"] - tau, dt) for tau in ex["tau_schedule"])
    if k == "compare-universes":
        return 3 * ex.get("n_members", 4) * sum(_steps(ex["t"] - tau, dt) for tau in ex["tau_schedule"])
    if k == "semicontinuity":
        per = ex.get("n_members", 2) * sum(_steps(ex["t"] - tau, dt) for tau in ex["tau_schedule"])
        return per * (len(ex["eps_list"]) + 1)
    if k == "dimension":
        steps = _steps(ex.get("burn_in", 0.0) + ex["horizon"], dt)
        return steps * (1 + 2 * ex["n"])
    return 0


def describe(run):
    """Human-readable plan; performs no time stepping."""
    p = run.params
    lat = p.lattice
    f = run.forcing
    mu0 = p.nu * p.lambda1
    lines = [
        f"experiment: {run.experiment['kind']}",
        f"model: nu = {p.nu:g}, nu0 = {p.nu0:g}, lambda1 = {p.lambda1:g}",
        f"lattice: N = {lat.n}, dealias_cut = {lat.dealias_cut:g}, "
        f"retained modes = {int(lat.mask.sum())} (half spectrum), k_max = {lat.kmax_retained}",
        f"integrator: dt = {run.step.dt:g}, scheme = {run.step.scheme}, "
        f"viscosity = {run.step.nonlinear_viscosity_mode}, cfl_safety = {run.step.cfl_safety:g}",
        f"seed: {run.seed}",
        f"mu0 = nu lambda1 = {mu0:g}",
        f"forcing: {f.describe()}",
        f"tempered integral int_-inf^t e^(mu0 s) ||f||_V'^2 ds = {tempered_integral_expression(f, mu0)}",
        f"rho0^2(t) = 1 + (4/(nu lambda1)) e^(-mu t) * [tempered integral], "
        f"4/(nu lambda1) = {4 / (p.nu * p.lambda1):g}",
    ]
    if f.kind in ("steady", "tempered_exp") or (f.kind == "eps_scaled" and f.inner.kind in ("steady", "tempered_exp")):
        lines.append(f"rho0^2(0) with mu = mu0: {absorbing_radius_sq(f, p, mu0, 0.0):.17g}")
    if p.nu0 > 0:
        lines.append(f"Grashof inputs: nu0^2 lambda1 = {p.nu0 ** 2 * p.lambda1:g}, "
                     f"|f(0)|^2 = {f.norm_sq(0.0, lat, 'H'):.17g}")
        lines.append(f"nontriviality threshold (c = 1): {nontriviality_threshold(p):.6g}")
    else:
        lines.append("Grashof numbers: undefined for nu0 = 0")
    lines.append(f"work units (field steps): {work_units(run)}")
    return "\n".join(lines)
