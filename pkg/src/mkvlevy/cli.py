"""Configuration-driven experiment runner.

One experiment per invocation: ``mkvlevy run --config c.json --out dir``
executes the configured verification suite and writes ``results.json``
plus CSV artifacts.  Exit codes: 0 all checks passed, 1 a check failed,
2 inconclusive, 3 configuration error.

Results are byte-identical for identical (config, seed): all randomness
flows through counter-based streams keyed by the seed, and the solvers
run single-threaded reductions regardless of ``--threads``, which only
caps auxiliary workers.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .drifts import DRIFTS, TEST_FUNCTIONS, drift_by_name, test_function_by_name
from .errors import ConfigError
from .ergodicity import contraction_experiment, invariant_measure
from .fpke import (DensityField, Grid1D, correspondence_check, fpke_stability_check,
                   gaussian_density)
from .harnack import (HarnackConfig, bracket_bound_violations, coupling_batch,
                      entropy_cost_check, girsanov_mean_check, log_harnack_check,
                      power_harnack_check)
from .levy_noise import LevyTriplet
from .metrics import bootstrap_se, distance
from .mkv import MkvDrift, ParticleEnsemble, check_H3, check_H4, picard_solve
from .sde_core import DriftField, sup_moment_mc
from .streams import stream
from .subordinator import BernsteinSpec, check_H1prime, laplace_exponent, \
    sample_increment_matrix

KINDS = ("subcheck", "moments", "picard", "contraction", "invariant",
         "harnack_log", "harnack_power", "entropy", "fpke_correspond",
         "fpke_stability")


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _get(params: dict, key: str, typ, path: str, default=None, required=False):
    if key not in params:
        if required:
            _fail(f"{path}.{key}", "missing required field")
        return default
    val = params[key]
    if typ is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, typ):
        _fail(f"{path}.{key}", f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}")
    return val


def _bernstein(spec: dict, path: str) -> BernsteinSpec:
    if not isinstance(spec, dict) or "kind" not in spec:
        _fail(path, "bernstein spec must be an object with a 'kind'")
    try:
        return BernsteinSpec.from_json(json.dumps(spec))
    except Exception as exc:
        _fail(path, str(exc))


def _drift(spec: dict, path: str, theta: float) -> MkvDrift:
    if not isinstance(spec, dict) or "name" not in spec:
        _fail(path, "drift spec must be an object with a 'name'")
    try:
        return drift_by_name(spec["name"], spec.get("params", {}), theta=theta)
    except Exception as exc:
        _fail(path, str(exc))


def _law(spec: dict, n: int, rng, path: str) -> ParticleEnsemble:
    if not isinstance(spec, dict) or "type" not in spec:
        _fail(path, "law spec must be an object with a 'type'")
    t = spec["type"]
    if t == "point":
        return ParticleEnsemble.point_mass(spec.get("x", 0.0), n)
    if t == "gaussian":
        return ParticleEnsemble.gaussian(spec.get("mean", 0.0), spec.get("std", 1.0), n, rng)
    if t == "uniform":
        return ParticleEnsemble.uniform_box(spec.get("lo", -1.0), spec.get("hi", 1.0), n, rng)
    if t == "file":
        pts = np.loadtxt(spec["path"], delimiter=",", ndmin=2)
        return ParticleEnsemble(pts[:n] if pts.shape[0] >= n else pts)
    _fail(path, f"unknown law type {t!r}")


def _noise(spec: dict, path: str, d: int = 1) -> LevyTriplet:
    if not isinstance(spec, dict) or "type" not in spec:
        _fail(path, "noise spec must be an object with a 'type'")
    t = spec["type"]
    if t == "brownian":
        return LevyTriplet.brownian(d)
    if t == "subordinate":
        return LevyTriplet.subordinate_bm(_bernstein(spec.get("bernstein"), path), d)
    _fail(path, f"unknown noise type {t!r}")


def _check_metadata(params: dict, drift: MkvDrift, bern, theta: float, seed: int):
    """(H1') plus drift contract spot checks; raise ConfigError on failure."""
    if bern is not None:
        ok, diag = check_H1prime(bern, theta)
        if not ok:
            raise ConfigError(
                f"(H1') fails for {bern.kind} at theta={theta}: tail exponent {diag:.3g}")
    rng = stream(seed, "metadata")
    ens = [ParticleEnsemble.gaussian(0.0, 1.0, 64, rng),
           ParticleEnsemble.gaussian(1.0, 0.5, 64, rng)]
    if not check_H3(drift, ens, rng, n_trials=100):
        raise ConfigError("(H3) spot-check failed for the configured drift")
    if not check_H4(drift, ens, rng, n_trials=25):
        raise ConfigError("(H4) spot-check failed for the configured drift")


# --------------------------------------------------------------------------
# runners: each returns (passed, inconclusive, summary, artifacts)


def _run_subcheck(params, seed, outdir):
    bern = _bernstein(_get(params, "bernstein", dict, "parameters", required=True),
                      "parameters.bernstein")
    t = _get(params, "t", float, "parameters", default=1.0)
    rs = params.get("r_values", [0.5, 1.0, 2.0])
    n = _get(params, "n_paths", int, "parameters", default=100_000)
    rng = stream(seed, "subcheck")
    inc = sample_increment_matrix(bern, np.array([t]), rng, n)[:, 0]
    rows, ok = [], True
    for r in rs:
        vals = np.exp(-float(r) * inc)
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n))
        target = math.exp(-t * laplace_exponent(bern, float(r)))
        passed = abs(est - target) <= 4.0 * max(se, 1e-15)
        ok &= passed
        rows.append({"r": float(r), "estimate": est, "se": se,
                     "target": target, "pass": passed})
    art = os.path.join(outdir, "subcheck.csv")
    np.savetxt(art, [[w["r"], w["estimate"], w["se"], w["target"]] for w in rows],
               delimiter=",", header="r,estimate,se,target", comments="")
    return ok, False, {"rows": rows, "kind": bern.kind, "t": t, "n_paths": n}, [art]


def _run_moments(params, seed, outdir):
    theta = _get(params, "theta", float, "parameters", default=1.0)
    bern = _bernstein(_get(params, "bernstein", dict, "parameters", required=True),
                      "parameters.bernstein")
    drift = _drift(_get(params, "drift", dict, "parameters", required=True),
                   "parameters.drift", theta)
    _check_metadata(params, drift, bern, theta, seed)
    T = _get(params, "T", float, "parameters", default=1.0)
    dt = _get(params, "dt", float, "parameters", default=1e-3)
    n = _get(params, "n_paths", int, "parameters", default=100_000)
    x0 = float(params.get("x0", 1.0))
    grid = np.linspace(0.0, T, int(round(T / dt)) + 1)
    triplet = LevyTriplet.subordinate_bm(bern)
    field = DriftField(b=lambda t, x: drift.b(t, x, ParticleEnsemble.point_mass(0.0, 1)),
                       kappa=drift.kappa1, b0_bound=drift.Theta)
    rng = stream(seed, "moments")
    half = sup_moment_mc(field, 1.0, triplet, [x0], grid, stream(seed, "m-half"),
                         n // 2, theta)
    full = sup_moment_mc(field, 1.0, triplet, [x0], grid, stream(seed, "m-full"),
                         n, theta)
    rel = abs(full - half) / max(abs(full), 1e-300)
    ok = np.isfinite(full) and rel < 0.05
    return bool(ok), False, {"estimate_half": half, "estimate_full": full,
                             "relative_change": rel, "theta": theta}, []


def _run_picard(params, seed, outdir):
    theta = _get(params, "theta", float, "parameters", default=1.0)
    drift = _drift(_get(params, "drift", dict, "parameters", required=True),
                   "parameters.drift", theta)
    noise = _noise(_get(params, "noise", dict, "parameters", required=True),
                   "parameters.noise")
    if hasattr(noise.jump_spec, "bernstein"):
        _check_metadata(params, drift, noise.jump_spec.bernstein, theta, seed)
    else:
        _check_metadata(params, drift, None, theta, seed)
    T = _get(params, "T", float, "parameters", default=1.0)
    dt = _get(params, "dt", float, "parameters", default=2e-3)
    n = _get(params, "N", int, "parameters", default=2000)
    tol = _get(params, "tol", float, "parameters", default=1e-4)
    max_iter = _get(params, "max_iter", int, "parameters", default=10)
    rng = stream(seed, "picard")
    mu0 = _law(_get(params, "mu0", dict, "parameters", required=True), n,
               stream(seed, "picard-mu0"), "parameters.mu0")
    grid = np.linspace(0.0, T, int(round(T / dt)) + 1)
    flow, log = picard_solve(drift, 1.0, noise, mu0, grid, rng, tol=tol,
                             max_iter=max_iter)
    d = np.array(log.distances)
    strict = bool(np.all(np.diff(d[: min(5, d.size)]) < 0)) if d.size >= 5 else False
    slope, r2 = float("nan"), float("nan")
    pos = d > 0
    if pos.sum() >= 3:
        xs = np.arange(d.size)[pos]
        ys = np.log(d[pos])
        coef = np.polyfit(xs, ys, 1)
        slope = float(coef[0])
        resid = ys - np.polyval(coef, xs)
        r2 = float(1.0 - resid.var() / max(ys.var(), 1e-300))
    ok = strict and slope < 0 and r2 >= 0.8
    art = os.path.join(outdir, "picard_decay.csv")
    np.savetxt(art, np.column_stack([np.arange(1, d.size + 1), d]),
               delimiter=",", header="iteration,distance", comments="")
    return ok, False, {"distances": d.tolist(), "slope": slope, "r2": r2,
                       "converged": log.converged}, [art]


def _run_contraction(params, seed, outdir):
    theta = _get(params, "theta", float, "parameters", default=1.0)
    drift = _drift(_get(params, "drift", dict, "parameters", required=True),
                   "parameters.drift", theta)
    noise = _noise(_get(params, "noise", dict, "parameters", required=True),
                   "parameters.noise")
    bern = noise.jump_spec.bernstein if hasattr(noise.jump_spec, "bernstein") else None
    _check_metadata(params, drift, bern, theta, seed)
    T = _get(params, "T", float, "parameters", default=4.0)
    dt = _get(params, "dt", float, "parameters", default=2e-3)
    n = _get(params, "N", int, "parameters", default=5000)
    mu0 = _law(_get(params, "mu0", dict, "parameters", required=True), n,
               stream(seed, "c-mu0"), "parameters.mu0")
    nu0 = _law(_get(params, "nu0", dict, "parameters", required=True), n,
               stream(seed, "c-nu0"), "parameters.nu0")
    grid = np.linspace(0.0, T, int(round(T / dt)) + 1)
    rep = contraction_experiment(drift, 1.0, noise, mu0, nu0, grid,
                                 stream(seed, "contraction"))
    tol = _get(params, "rate_tolerance", float, "parameters", default=0.15)
    rate_ok = (np.isfinite(rep.fitted_rate)
               and abs(rep.fitted_rate - rep.theory_rate) <= tol * abs(rep.theory_rate))
    ok = rep.bound_violations == 0 and rate_ok
    art = os.path.join(outdir, "contraction.csv")
    rep.to_csv(art)
    return bool(ok), False, rep.to_json(), [art]


def _run_invariant(params, seed, outdir):
    theta = _get(params, "theta", float, "parameters", default=1.0)
    drift = _drift(_get(params, "drift", dict, "parameters", required=True),
                   "parameters.drift", theta)
    noise = _noise(_get(params, "noise", dict, "parameters", required=True),
                   "parameters.noise")
    bern = noise.jump_spec.bernstein if hasattr(noise.jump_spec, "bernstein") else None
    _check_metadata(params, drift, bern, theta, seed)
    burn = _get(params, "burn_in", float, "parameters", default=10.0)
    n = _get(params, "N", int, "parameters", default=10_000)
    dt = _get(params, "dt", float, "parameters", default=2e-3)
    mu0 = _law(_get(params, "mu0", dict, "parameters", required=True), n,
               stream(seed, "i-mu0"), "parameters.mu0")
    ens, log = invariant_measure(drift, 1.0, noise, mu0, burn,
                                 stream(seed, "invariant"), dt=dt)
    var = float(ens.points.var())
    summary = {"terminal_variance": var, "pairs": log.pairs,
               "distances": log.distances, "ses": log.ses,
               "converged": log.converged}
    art = os.path.join(outdir, "invariant_ensemble.csv")
    ens.to_csv(art)
    window = params.get("variance_window")
    ok = log.converged
    if window is not None:
        ok = ok and (window[0] <= var <= window[1])
        summary["variance_window"] = window
    return bool(ok), False, summary, [art]


def _harnack_config(params, seed) -> tuple:
    theta = _get(params, "theta", float, "parameters", default=1.0)
    drift = _drift(_get(params, "drift", dict, "parameters", required=True),
                   "parameters.drift", theta)
    bern = _bernstein(_get(params, "bernstein", dict, "parameters", required=True),
                      "parameters.bernstein")
    _check_metadata(params, drift, bern, theta, seed)
    fname = params.get("f", "gauss_plus_one")
    cfg = HarnackConfig(
        T=_get(params, "T", float, "parameters", default=1.0),
        theta=theta,
        p=_get(params, "p", float, "parameters", default=2.0),
        eps=_get(params, "eps", float, "parameters", default=0.1),
        f=test_function_by_name(fname),
        bernstein=bern,
        n_steps=_get(params, "n_steps", int, "parameters", default=400),
        K_variant=params.get("K_variant", "printed"),
    )
    n_pairs = _get(params, "N_ensemble", int, "parameters", default=512)
    mu0 = _law(_get(params, "mu0", dict, "parameters", required=True), n_pairs,
               stream(seed, "h-mu0"), "parameters.mu0")
    nu0 = _law(_get(params, "nu0", dict, "parameters", required=True), n_pairs,
               stream(seed, "h-nu0"), "parameters.nu0")
    n_runs = _get(params, "n_runs", int, "parameters", default=20_000)
    return cfg, drift, mu0, nu0, n_runs


def _run_harnack_log(params, seed, outdir):
    cfg, drift, mu0, nu0, n_runs = _harnack_config(params, seed)
    rep = log_harnack_check(cfg, drift, mu0, nu0, n_runs, stream(seed, "hlog"))
    return rep.passed, rep.inconclusive, rep.to_json(), []


def _run_harnack_power(params, seed, outdir):
    cfg, drift, mu0, nu0, n_runs = _harnack_config(params, seed)
    rep = power_harnack_check(cfg, drift, mu0, nu0, n_runs, stream(seed, "hpow"))
    return rep.passed, rep.inconclusive, rep.to_json(), []


def _run_entropy(params, seed, outdir):
    cfg, drift, mu0, nu0, n_runs = _harnack_config(params, seed)
    batch = coupling_batch(cfg, drift, mu0, nu0, stream(seed, "entropy-runs"), n_runs)
    rep = entropy_cost_check(cfg, drift, mu0, nu0, n_runs,
                             stream(seed, "entropy"), batch=batch)
    gstat = girsanov_mean_check(batch)
    viol = bracket_bound_violations(batch, cfg)
    summary = rep.to_json()
    summary["girsanov"] = gstat.to_json()
    summary["bracket_violations"] = viol
    summary["coupling_success"] = float(batch.coupled.mean())
    ok = rep.passed and gstat.passed and viol == 0
    return bool(ok), rep.inconclusive, summary, []


def _run_fpke_correspond(params, seed, outdir):
    theta = _get(params, "theta", float, "parameters", default=1.0)
    drift = _drift(_get(params, "drift", dict, "parameters", required=True),
                   "parameters.drift", theta)
    alpha = _get(params, "alpha", float, "parameters", default=0.75)
    bern = BernsteinSpec.stable(alpha)
    _check_metadata(params, drift, bern, theta, seed)
    grid = Grid1D.make(L=_get(params, "L", float, "parameters", default=20.0),
                       n=_get(params, "n", int, "parameters", default=1601),
                       alpha=alpha)
    mu0_spec = _get(params, "mu0", dict, "parameters", required=True)
    mu0 = gaussian_density(grid, mu0_spec.get("mean", 0.0),
                           mu0_spec.get("std", max(3 * grid.dx, 1e-3)))
    T = _get(params, "T", float, "parameters", default=1.0)
    n_particles = params.get("n_particles", [1000, 4000, 16000])
    rep = correspondence_check(grid, drift, mu0, T, n_particles,
                               stream(seed, "fpke-c"))
    return rep.passed, False, rep.to_json(), []


def _run_fpke_stability(params, seed, outdir):
    theta = _get(params, "theta", float, "parameters", default=1.0)
    drift = _drift(_get(params, "drift", dict, "parameters", required=True),
                   "parameters.drift", theta)
    alpha = _get(params, "alpha", float, "parameters", default=0.75)
    _check_metadata(params, drift, BernsteinSpec.stable(alpha), theta, seed)
    grid = Grid1D.make(L=_get(params, "L", float, "parameters", default=20.0),
                       n=_get(params, "n", int, "parameters", default=1601),
                       alpha=alpha)
    a = _get(params, "mu0", dict, "parameters", required=True)
    b = _get(params, "nu0", dict, "parameters", required=True)
    mu0 = gaussian_density(grid, a.get("mean", 0.0), a.get("std", 0.5))
    nu0 = gaussian_density(grid, b.get("mean", 1.0), b.get("std", 0.5))
    T = _get(params, "T", float, "parameters", default=0.3)
    rep = fpke_stability_check(grid, drift, mu0, nu0, T)
    return rep.passed, False, rep.to_json(), []


RUNNERS = {
    "subcheck": _run_subcheck,
    "moments": _run_moments,
    "picard": _run_picard,
    "contraction": _run_contraction,
    "invariant": _run_invariant,
    "harnack_log": _run_harnack_log,
    "harnack_power": _run_harnack_power,
    "entropy": _run_entropy,
    "fpke_correspond": _run_fpke_correspond,
    "fpke_stability": _run_fpke_stability,
}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
        cfg = json.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    if not isinstance(cfg.get("seed", 0), int):
        raise ConfigError("seed must be an integer")
    if not isinstance(cfg.get("parameters"), dict) or not cfg["parameters"]:
        raise ConfigError("parameters must be a non-empty object")
    return cfg


def config_digest(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(canon).hexdigest()


def run(config_path: str, out_dir: str, seed: int | None = None,
        threads: int | None = None) -> int:
    """Execute one experiment; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg["seed"] = int(seed)
        os.makedirs(out_dir, exist_ok=True)
        runner = RUNNERS[cfg["kind"]]
        passed, inconclusive, summary, artifacts = runner(
            cfg["parameters"], int(cfg.get("seed", 0)), out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    results = {
        "kind": cfg["kind"],
        "seed": int(cfg.get("seed", 0)),
        "pass": bool(passed),
        "inconclusive": bool(inconclusive),
        "summary": summary,
        "config_digest": config_digest(cfg),
        "version": __version__,
        "artifacts": [os.path.basename(a) for a in artifacts],
    }
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(results, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if inconclusive:
        return 2
    return 0 if passed else 1


def list_builtins() -> str:
    lines = ["drifts:"]
    lines += [f"  {name}" for name in sorted(DRIFTS)]
    lines.append("bernstein kinds:")
    lines += [f"  {k}" for k in ("stable", "relativistic_stable", "gamma",
                                 "log_type", "pure_drift", "custom")]
    lines.append("test functions:")
    lines += [f"  {name}" for name in sorted(TEST_FUNCTIONS)]
    lines.append("experiment kinds:")
    lines += [f"  {k}" for k in KINDS]
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mkvlevy",
                                     description="mean-field Levy SDE verification lab")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None,
                       help="cap auxiliary workers; results do not depend on it")
    sub.add_parser("list", help="print builtin drifts, noise kinds, test functions")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True)
    args = parser.parse_args(argv)
    if args.command == "list":
        print(list_builtins())
        return 0
    if args.command == "validate":
        try:
            load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 3
        print("ok")
        return 0
    return run(args.config, args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
