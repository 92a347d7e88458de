"""Command-line front end.

    rg certify --config <file> --out <dir>
    rg run     --config <file> --out <dir> [--seeds a,b,..] [--kinds K1,K2]
    rg compare --config <file> --out <dir> [--seeds s]
    rg audit   --config <file> --trace <csv> --out <dir>

Configs are versioned JSON scenario files; names of bundled scenarios
(example1_nodist, example1_dist, spacecraft) resolve without a path. The
run and compare paths write CSV traces, audit JSON, and PNG figures into
the output directory. Exit codes: 0 success, 2 certification failure,
3 configuration error, 4 runtime fault.

RG_THREADS caps worker threads for seed sweeps.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .bounds import certify, load_certificates, save_certificates
from .errors import CertificationError, RgError
from .governor import GovernorConfig
from .model import DisturbanceSpec
from .sim import (
    Scenario,
    audit,
    build_scenario_objects,
    read_csv,
    reference_signal,
    run_closed_loop,
    write_csv,
)

__all__ = [
    "main",
    "parse_scenario",
    "scenario_to_dict",
    "load_config",
    "builtin_scenario_path",
]

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_CERTIFICATION = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4


def builtin_scenario_path(name: str) -> Path:
    ref = resources.files("rgov") / "scenarios" / f"{name}.json"
    with resources.as_file(ref) as p:
        return Path(p)


def load_config(path_or_name: str) -> dict:
    p = Path(path_or_name)
    if not p.exists():
        candidate = builtin_scenario_path(path_or_name)
        if candidate.exists():
            p = candidate
        else:
            raise FileNotFoundError(f"config {path_or_name!r} not found")
    doc = json.loads(p.read_text())
    if doc.get("version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported config version {doc.get('version')!r}")
    return doc


def parse_scenario(doc: dict) -> tuple[Scenario, dict]:
    """Scenario plus harness-level options (kinds, seeds, grid density)."""
    model = doc.get("model", {})
    sc = Scenario(
        model_name=model["name"],
        model_params=dict(model.get("params", {})),
        config=GovernorConfig.from_dict(doc.get("governor", {})),
        disturbance=DisturbanceSpec.from_dict(doc.get("disturbance", {"w_max": 0.0})),
        seed=int(doc.get("seed", 0)),
        reference=[(float(e["t"]), np.asarray(e["value"], dtype=float))
                   for e in doc.get("reference", [])],
        v0=np.asarray(doc["v0"], dtype=float) if doc.get("v0") is not None else None,
        x0=np.asarray(doc["x0"], dtype=float) if doc.get("x0") is not None else None,
        duration=float(doc.get("duration", 60.0)),
        h=float(doc["h"]) if doc.get("h") is not None else None,
        norm=doc.get("norm"),
    )
    opts = {
        "kinds": list(doc.get("kinds", ["RG_NL"])),
        "seeds": list(doc.get("seeds", [sc.seed])),
        "grid_density": int(doc.get("grid_density", 5 if model["name"] == "example1" else 3)),
        "name": doc.get("name", model["name"]),
    }
    return sc, opts


def scenario_to_dict(sc: Scenario, opts: dict | None = None) -> dict:
    doc = {
        "version": SCHEMA_VERSION,
        "model": {"name": sc.model_name, "params": sc.model_params},
        "governor": sc.config.to_dict(),
        "disturbance": sc.disturbance.to_dict(),
        "seed": sc.seed,
        "reference": [{"t": float(t), "value": np.asarray(v).tolist()}
                      for t, v in sc.reference],
        "v0": None if sc.v0 is None else np.asarray(sc.v0).tolist(),
        "x0": None if sc.x0 is None else np.asarray(sc.x0).tolist(),
        "duration": sc.duration,
        "h": sc.h,
        "norm": sc.norm,
    }
    if opts:
        doc.update({k: opts[k] for k in ("kinds", "seeds", "grid_density", "name")
                    if k in opts})
    return doc


def _ensure_certs(sc: Scenario, opts: dict, out: Path, model, spec, density=None):
    density = density or opts["grid_density"]
    cert_path = out / f"{opts['name']}_certificate.json"
    if cert_path.exists():
        return load_certificates(cert_path), cert_path
    certs = certify(model, spec, grid_density=density)
    save_certificates(cert_path, certs, metadata={
        "model": sc.model_name, "norm": spec.kind, "grid_density": density})
    return certs, cert_path


def cmd_certify(args) -> int:
    doc = load_config(args.config)
    sc, opts = parse_scenario(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, spec = build_scenario_objects(sc)
    t0 = time.perf_counter()
    certs = certify(model, spec, grid_density=opts["grid_density"])
    elapsed = time.perf_counter() - t0
    path = out / f"{opts['name']}_certificate.json"
    save_certificates(path, certs, metadata={
        "model": sc.model_name, "norm": spec.kind,
        "grid_density": opts["grid_density"], "elapsed_s": elapsed})
    for i, c in enumerate(certs):
        print(f"cell {i}: mu_e = {c.mu_e:.6f}, eta_x = {c.eta_x:.6f}, "
              f"eta_v = {c.eta_v:.6g}")
    print(f"wrote {path} ({elapsed:.2f} s)")
    return EXIT_OK


def _single_run(sc: Scenario, kind: str, seed: int, certs, model, spec):
    import dataclasses
    sc_run = dataclasses.replace(sc, seed=seed)
    t0 = time.perf_counter()
    traj, diags = run_closed_loop(sc_run, kind, certs=certs, model=model, spec=spec)
    wall = time.perf_counter() - t0
    rep = audit(traj, model.X)
    step_times = [d.wall_time for d in diags]
    stats = {
        "kind": kind,
        "seed": seed,
        "violations": rep.total_count,
        "max_violation": rep.max_violation,
        "final_command": traj.commands[-1].tolist(),
        "wall_s": wall,
        "governor_steps": len(diags),
        "mean_step_ms": 1e3 * float(np.mean(step_times)) if step_times else 0.0,
        "max_step_ms": 1e3 * float(np.max(step_times)) if step_times else 0.0,
        "qp_fallbacks": sum(1 for d in diags if not d.accepted),
    }
    return traj, rep, stats


def cmd_run(args) -> int:
    doc = load_config(args.config)
    sc, opts = parse_scenario(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, spec = build_scenario_objects(sc)
    kinds = args.kinds.split(",") if args.kinds else opts["kinds"]
    seeds = _parse_seeds(args.seeds) if args.seeds else [int(s) for s in opts["seeds"]]
    need_gov = any(k != "NONE" for k in kinds)
    certs = None
    if need_gov:
        certs, _ = _ensure_certs(sc, opts, out, model, spec)
    r_of_t = reference_signal(sc.reference, model.n_v)
    summary = []
    workers = int(os.environ.get("RG_THREADS", "1"))

    jobs = [(kind, seed) for kind in kinds for seed in seeds]

    def run_job(job):
        kind, seed = job
        return job, _single_run(sc, kind, seed, certs, model, spec)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(j) for j in jobs]
    for (kind, seed), (traj, rep, stats) in results:
        stem = f"{opts['name']}_{kind}_seed{seed}"
        write_csv(out / f"{stem}.csv", traj)
        (out / f"{stem}_audit.json").write_text(json.dumps(rep.to_dict(), indent=2))
        if not args.no_figures:
            from .report import render_run
            render_run(traj, model, r_of_t, out / f"{stem}.png")
        summary.append(stats)
        print(f"{kind} seed {seed}: violations = {stats['violations']}, "
              f"mean step {stats['mean_step_ms']:.2f} ms, wall {stats['wall_s']:.2f} s")
    (out / f"{opts['name']}_summary.json").write_text(json.dumps(
        {"scenario": opts["name"], "runs": summary}, indent=2))
    return EXIT_OK


def _convergence_time(traj, r_of_t, tol=1e-3):
    """First time after which the command stays within tol of the reference."""
    t = traj.times
    r_vals = np.array([np.atleast_1d(r_of_t(tk)) for tk in t])
    err = np.linalg.norm(traj.commands - r_vals, axis=1)
    beyond = np.nonzero(err > tol)[0]
    if beyond.size == 0:
        return float(t[0])
    if beyond[-1] == len(t) - 1:
        return None
    return float(t[beyond[-1] + 1])


def cmd_compare(args) -> int:
    doc = load_config(args.config)
    sc, opts = parse_scenario(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, spec = build_scenario_objects(sc)
    seeds = _parse_seeds(args.seeds) if args.seeds else [sc.seed]
    seed = seeds[0]
    certs, _ = _ensure_certs(sc, opts, out, model, spec)
    r_of_t = reference_signal(sc.reference, model.n_v)
    kinds = ("RG_NL", "RG_L", "NONE")
    table = []
    trajs = {}
    for kind in kinds:
        try:
            traj, rep, stats = _single_run(sc, kind, seed, certs, model, spec)
            trajs[kind] = traj
            stats["convergence_time"] = _convergence_time(traj, r_of_t)
            table.append(stats)
        except RgError as exc:
            table.append({"kind": kind, "seed": seed, "error": str(exc)})
    header = f"{'kind':8} {'violations':>10} {'max viol':>12} {'conv t [s]':>10} {'step ms':>9}"
    print(header)
    print("-" * len(header))
    for row in table:
        if "error" in row:
            print(f"{row['kind']:8} failed: {row['error']}")
            continue
        conv = row["convergence_time"]
        conv_s = f"{conv:.2f}" if conv is not None else "-"
        print(f"{row['kind']:8} {row['violations']:>10d} {row['max_violation']:>12.3e} "
              f"{conv_s:>10} {row['mean_step_ms']:>9.2f}")
    (out / f"{opts['name']}_compare.json").write_text(json.dumps(
        {"scenario": opts["name"], "seed": seed, "table": table}, indent=2))
    if not args.no_figures and trajs:
        from .report import render_comparison
        render_comparison(trajs, model, r_of_t, out / f"{opts['name']}_compare.png")
    return EXIT_OK


def cmd_audit(args) -> int:
    doc = load_config(args.config)
    sc, opts = parse_scenario(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, _ = build_scenario_objects(sc)
    traj = read_csv(args.trace)
    rep = audit(traj, model.X)
    path = out / (Path(args.trace).stem + "_audit.json")
    path.write_text(json.dumps(rep.to_dict(), indent=2))
    print(f"violations = {rep.total_count}, max = {rep.max_violation:.3e}; wrote {path}")
    return EXIT_OK


def _parse_seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip() != ""]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rg", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("certify", cmd_certify), ("run", cmd_run),
                     ("compare", cmd_compare), ("audit", cmd_audit)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario JSON path or builtin name")
        p.add_argument("--out", default="out", help="output directory")
        p.set_defaults(func=fn)
        if name in ("run", "compare"):
            p.add_argument("--seeds", help="comma-separated seed list")
            p.add_argument("--no-figures", action="store_true")
        if name == "run":
            p.add_argument("--kinds", help="comma-separated governor kinds")
        if name == "audit":
            p.add_argument("--trace", required=True, help="CSV trace to audit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CertificationError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RgError as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
