"""Command-line experiment driver.

Subcommands: ``verify``, ``sweep``, ``constants``, ``simulate``, ``probe``
and ``report``.  Every run writes its CSV files plus ``manifest.json`` to
``--out``.  Hard invariants (detailed balance, stationarity, entropy
decomposition, change of variables, normalisation, the square-root
inequality) decide the exit status; fitted constants are reported only.

Exit codes: 0 ok, 1 hard-invariant failure, 2 usage or config error.

Sweeps can be driven by an INI file (``--config``)::

    [experiment]
    rate = staircase:2
    L = 2-8
    N = 1-12
    probes = constants, onedim
    seed = 0
    restarts = 24
    cap = 20000

    [thresholds]
    gamma_spread = 3
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .constants import (DEFAULT_RESTARTS, logsob_constant, mlsi_constant,
                        recursion_probe, spectral_gap, write_sweep_csv)
from .functionals import (CoarseGrainScheme, FunctionalReport, covariance_probe,
                          dissipation, entropy_decomposition, exp_moment_probe,
                          fitted_exp_constant, phi_observable, psi_observable,
                          random_positive_functions, sqrt_dirichlet, write_reports_csv)
from .kmc import relaxation_estimate, simulate, write_summary_csv, write_trace
from .measures import build_potential
from .onedim import one_vertex_constant
from .rates import certify, from_spec
from .statespace import StateSpace, build_generator, change_of_variable_check

PROBES = ("certify", "constants", "recursion", "covariance", "expmoment", "potential",
          "onedim", "kmc")
HARD_TOL = 1e-9


class ConfigError(Exception):
    """Bad configuration or arguments (exit status 2)."""


# --------------------------------------------------------------------------
# helpers


def parse_range(text: str) -> list[int]:
    """``"2-8"``, ``"1,2,5"`` or ``"4"`` -> list of ints."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise ConfigError(f"bad integer range {text!r}") from exc
    if not out:
        raise ConfigError(f"empty range {text!r}")
    return out


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _clean(value):
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def write_manifest(out: Path, command: str, config: dict, hard: dict, soft: dict,
                   files: list[str]) -> dict:
    manifest = {
        "tool": "zrplab",
        "version": __version__,
        "command": command,
        "config": _clean(config),
        "config_hash": config_hash(config),
        "hard": _clean(hard),
        "passed": all(v["pass"] for v in hard.values()),
        "soft": _clean(soft),
        "files": sorted(files),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _rate(spec: str):
    try:
        return from_spec(spec)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _hard(value: float, tol: float = HARD_TOL) -> dict:
    return {"value": float(value), "tol": tol, "pass": bool(value <= tol)}


def _merge_hard(into: dict, key: str, entry: dict) -> None:
    old = into.get(key)
    if old is None or entry["value"] > old["value"]:
        into[key] = entry


# --------------------------------------------------------------------------
# per-instance work


def instance_invariants(gen, n_functions: int = 20, seed: int = 0) -> dict:
    """Exact identities on one generator: detailed balance, stationarity,
    normalisation, entropy decomposition, change of variables and the
    square-root inequality ``E(f, log f) >= 4 E(sqrt f, sqrt f)``."""
    fs = random_positive_functions(gen, n_functions, seed=seed)
    i4 = max(entropy_decomposition(f, gen)["residual"] for f in fs)
    m2 = change_of_variable_check(gen.space, gen.rate, gen.stationary, fs[:5])
    decos = 0.0
    for f in fs:
        d = dissipation(f, gen)
        excess = 4.0 * sqrt_dirichlet(f, gen) - d
        decos = max(decos, excess / max(d, 1e-300) if excess > 0 else 0.0)
    return {
        "detailed_balance": _hard(gen.detailed_balance_residual()),
        "stationarity": _hard(gen.stationarity_residual()),
        "normalization": _hard(abs(float(gen.stationary.sum()) - 1.0)),
        "entropy_decomposition": _hard(i4),
        "change_of_variable": _hard(m2),
        "sqrt_inequality": _hard(decos),
    }


def run_instance(task: dict) -> dict:
    """All requested probes on one ``(L, N)``; picklable in and out."""
    c = from_spec(task["rate"])
    L, N, seed = task["L"], task["N"], task["seed"]
    probes = task["probes"]
    restarts, maxiter = task["restarts"], task["maxiter"]
    inputs = {"L": L, "N": N, "rate": c.name, "seed": seed}
    reports, hard, sweep_row, notes = [], {}, None, []
    gen = None
    needs_gen = {"constants", "recursion", "covariance", "expmoment"} & set(probes)
    if needs_gen and L >= 2 and N >= 1:
        if math.comb(N + L - 1, L - 1) > task["cap"]:
            notes.append(f"skipped exact probes at L={L}, N={N}: state space above cap")
        else:
            gen = build_generator(StateSpace(L, N), c, task["flavor"])
            hard.update(instance_invariants(gen, seed=seed))
    if gen is not None and "constants" in probes:
        gap = spectral_gap(gen).value
        s = logsob_constant(gen, restarts=restarts, seed=seed, maxiter=maxiter)
        g = mlsi_constant(gen, restarts=restarts, seed=seed, maxiter=maxiter)
        sweep_row = {"L": L, "N": N, "rate": c.name, "gap": gap, "s_lo": s.value,
                     "s_up": s.upper, "gamma_lo": g.value, "gamma_up": g.upper,
                     "seed": seed, "restarts": restarts}
        hard["gamma_interval"] = {"value": float(g.value - g.upper), "tol": 1e-9,
                                  "pass": bool(g.value <= g.upper * (1 + 1e-9))}
    if gen is not None and "recursion" in probes:
        fs = random_positive_functions(gen, 30, seed=seed)
        rec = recursion_probe(gen, fs)
        reports.append(FunctionalReport("identification_tv", rec["identification_tv"], inputs))
        for eps, cst in rec["pareto"]:
            reports.append(FunctionalReport("recursion_pareto", cst, inputs,
                                            {"param": eps, "fitted_constant": cst}))
    if gen is not None and "covariance" in probes:
        fs = random_positive_functions(gen, 60, seed=seed)
        cov = covariance_probe(fs, gen, task["eps"])
        reports.append(FunctionalReport("covariance", cov["constant"], inputs,
                                        {"param": task["eps"], "fitted_constant": cov["constant"]}))
    if gen is not None and "expmoment" in probes:
        rho = N / L
        ts = np.linspace(0.05, 1.0, 20) / (2 * math.sqrt(rho))
        phi = exp_moment_probe(phi_observable(gen), gen.stationary, ts)
        cphi = fitted_exp_constant(phi, N * math.sqrt(rho))
        reports.append(FunctionalReport("expmoment_phi", cphi, inputs,
                                        {"param": "signed", "fitted_constant": cphi}))
        if L % 2 == 0:
            scheme = CoarseGrainScheme(L, 2)
            psi = exp_moment_probe(psi_observable(gen, scheme), gen.stationary, ts)
            cpsi = fitted_exp_constant(psi, N / math.sqrt(2))
            reports.append(FunctionalReport("expmoment_psi", cpsi, inputs,
                                            {"param": "signed", "fitted_constant": cpsi}))
    if "potential" in probes and N >= 2:
        try:
            pot = build_potential(c, L, N)
            d2 = pot.second_differences()
            reports.append(FunctionalReport("potential_min_d2", float(d2.min()) if d2.size else 0.0,
                                            inputs, {"param": pot.K_tail}))
        except RuntimeError as exc:
            notes.append(f"potential at L={L}, N={N}: {exc}")
    if "onedim" in probes and L >= 2 and N >= 1:
        est = one_vertex_constant(c, L, N, restarts=task["bd_restarts"], seed=seed)
        reports.append(FunctionalReport("onevertex", est.value, inputs,
                                        {"fitted_constant": est.value}))
    if "kmc" in probes and L >= 2:
        traj = simulate(L, N, c, task["flavor"], T=task["T"], seed=seed)
        for ob in ("sum_c", "eta0", "sum_sq"):
            r = relaxation_estimate(traj, ob)
            if math.isfinite(r["tau"]):
                reports.append(FunctionalReport("kmc_tau", r["tau"], inputs, {"param": ob}))
    return {"L": L, "N": N, "reports": [(r.name, r.value, r.inputs, r.metadata) for r in reports],
            "hard": hard, "sweep_row": sweep_row, "notes": notes}


def _spread(values) -> float | None:
    v = [x for x in values if x is not None and math.isfinite(x) and x > 0]
    return max(v) / min(v) if len(v) >= 2 else None


def run_grid(config: dict, out: Path, threads: int = 1) -> tuple[int, dict]:
    """Dispatch the grid, merge per-instance parts, write CSVs and the manifest."""
    probes = config["probes"]
    bad = [p for p in probes if p not in PROBES]
    if bad:
        raise ConfigError(f"unknown probe(s): {', '.join(bad)}")
    if not config["L"] or not config["N"]:
        raise ConfigError("grid is empty")
    c = _rate(config["rate"])
    out.mkdir(parents=True, exist_ok=True)
    tasks = [dict(config, L=L, N=N, probes=probes) for L in config["L"] for N in config["N"]]
    parts = out / "parts"
    parts.mkdir(exist_ok=True)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_instance, tasks))
    else:
        results = [run_instance(t) for t in tasks]
    for r in results:
        _atomic_write(parts / f"L{r['L']}_N{r['N']}.json",
                      json.dumps(_clean(r), sort_keys=True, default=str))
    hard, soft, files, notes = {}, {}, [], []
    reports, rows = [], []
    for r in sorted(results, key=lambda r: (r["L"], r["N"])):
        for key, entry in r["hard"].items():
            _merge_hard(hard, key, entry)
        reports.extend(FunctionalReport(n, v, i, m) for n, v, i, m in r["reports"])
        if r["sweep_row"] is not None:
            rows.append(r["sweep_row"])
        notes.extend(r["notes"])
    if "certify" in probes:
        cert = certify(c)
        soft["certificate"] = {"delta": cert.delta, "n0": cert.n0, "lipschitz": cert.lip}
    if rows:
        write_sweep_csv(rows, out / "sweep.csv")
        files.append("sweep.csv")
        spread = _spread([r["gamma_lo"] for r in rows])
        soft["gamma_spread"] = {"value": spread, "threshold": config["thresholds"]["gamma_spread"],
                                "within": spread is None
                                or spread <= config["thresholds"]["gamma_spread"]}
        soft["gap_range"] = [min(r["gap"] for r in rows), max(r["gap"] for r in rows)]
    if reports:
        write_reports_csv(reports, out / "probes.csv")
        files.append("probes.csv")
        for name in sorted({r.name for r in reports}):
            vals = [r.value for r in reports if r.name == name]
            soft[f"{name}_range"] = [min(vals), max(vals)]
    if notes:
        soft["notes"] = notes
    manifest = write_manifest(out, "sweep", config, hard, soft, files)
    return (0 if manifest["passed"] else 1), manifest


# --------------------------------------------------------------------------
# subcommands


def _grid_config(args) -> dict:
    config = {
        "rate": args.rate, "L": list(range(args.Lmin, args.Lmax + 1)),
        "N": list(range(args.Nmin, args.Nmax + 1)), "probes": list(args.probe or ["constants"]),
        "seed": args.seed, "restarts": args.restarts, "maxiter": args.maxiter,
        "bd_restarts": args.bd_restarts, "cap": args.cap, "flavor": args.flavor,
        "eps": args.eps, "T": args.T, "thresholds": {"gamma_spread": 3.0},
    }
    if args.config:
        config.update(load_config(args.config, config))
    return config


def load_config(path, defaults: dict) -> dict:
    """Read an INI experiment file; unknown keys are config errors."""
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if "experiment" not in cp:
        raise ConfigError("config needs an [experiment] section")
    sec = cp["experiment"]
    out = {}
    casts = {"rate": str, "seed": int, "restarts": int, "maxiter": int, "bd_restarts": int,
             "cap": int, "flavor": str, "eps": float, "T": float}
    for key, value in sec.items():
        if key in ("l", "n"):
            out[key.upper()] = parse_range(value)
        elif key == "probes":
            out["probes"] = [p.strip() for p in value.split(",") if p.strip()]
        elif key.lower() in {k.lower() for k in casts}:
            name = next(k for k in casts if k.lower() == key.lower())
            try:
                out[name] = casts[name](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "thresholds" in cp:
        th = dict(defaults["thresholds"])
        for key, value in cp["thresholds"].items():
            th[key] = float(value)
        out["thresholds"] = th
    return out


def cmd_verify(args) -> int:
    c = _rate(args.rate)
    gen = build_generator(StateSpace(args.L, args.N), c, args.flavor, check=False)
    hard = instance_invariants(gen, n_functions=args.functions, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["check,value,tol,pass"]
    for key, entry in hard.items():
        lines.append(f"{key},{entry['value']!r},{entry['tol']!r},{int(entry['pass'])}")
        print(f"{key:24s} {entry['value']:.3e}  {'pass' if entry['pass'] else 'FAIL'}")
    _atomic_write(out / "verify.csv", "\n".join(lines) + "\n")
    config = {"rate": args.rate, "L": args.L, "N": args.N, "flavor": args.flavor,
              "seed": args.seed, "functions": args.functions}
    manifest = write_manifest(out, "verify", config, hard, {}, ["verify.csv"])
    return 0 if manifest["passed"] else 1


def cmd_sweep(args) -> int:
    config = _grid_config(args)
    code, manifest = run_grid(config, Path(args.out), threads=args.threads)
    soft = manifest["soft"]
    if "gamma_spread" in soft:
        print(f"gamma spread {soft['gamma_spread']['value']}")
    print("hard invariants:", "pass" if manifest["passed"] else "FAIL")
    return code


def cmd_constants(args) -> int:
    args.Lmin = args.Lmax = args.L
    args.Nmin = args.Nmax = args.N
    args.probe = ["constants"]
    args.config = None
    config = _grid_config(args)
    code, manifest = run_grid(config, Path(args.out), threads=1)
    with open(Path(args.out) / "sweep.csv") as fh:
        print(fh.read(), end="")
    return code


def cmd_probe(args) -> int:
    args.Lmin = args.Lmax = args.L
    args.Nmin = args.Nmax = args.N
    args.probe = [args.name]
    args.config = None
    config = _grid_config(args)
    code, manifest = run_grid(config, Path(args.out), threads=1)
    for k, v in sorted(manifest["soft"].items()):
        print(k, v)
    return code


def cmd_simulate(args) -> int:
    c = _rate(args.rate)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files, soft = [], {}
    hard = {}
    for rep in range(args.replicas):
        traj = simulate(args.L, args.N, c, args.flavor, T=args.T, seed=args.seed, replica=rep,
                        sample_dt=args.dt, trace_cap=args.trace)
        name = f"trajectory_r{rep}.csv"
        write_summary_csv(traj, out / name)
        files.append(name)
        if args.trace:
            write_trace(traj, out / f"trace_r{rep}.bin")
            files.append(f"trace_r{rep}.bin")
        hard[f"conservation_r{rep}"] = _hard(abs(int(traj.final_eta.sum()) - args.N), 0)
        soft[f"replica{rep}"] = {"events": traj.events, **{
            ob: {k: v for k, v in relaxation_estimate(traj, ob).items() if k != "batch_taus"}
            for ob in ("sum_c", "eta0", "sum_sq")}}
    config = {"rate": args.rate, "L": args.L, "N": args.N, "flavor": args.flavor, "T": args.T,
              "seed": args.seed, "replicas": args.replicas, "dt": args.dt}
    manifest = write_manifest(out, "simulate", config, hard, soft, files)
    for rep in range(args.replicas):
        s = soft[f"replica{rep}"]
        print(f"replica {rep}: {s['events']} events, tau(sum_c) = {s['sum_c']['tau']}")
    return 0 if manifest["passed"] else 1


def cmd_report(args) -> int:
    if not args.manifests:
        raise ConfigError("report needs at least one manifest")
    manifests = []
    for p in args.manifests:
        try:
            manifests.append((Path(p), json.loads(Path(p).read_text())))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {p}: {exc}") from exc
    versions = {m.get("version") for _, m in manifests}
    lines = []
    if len(versions) > 1:
        lines.append(f"WARNING: mismatched tool versions {sorted(map(str, versions))}")
    # join sweep tables on (L, N)
    tables = []
    for path, m in manifests:
        sweep = path.parent / "sweep.csv"
        label = m["config"].get("rate", path.parent.name)
        if sweep.exists():
            with open(sweep) as fh:
                tables.append((label, {(int(r["L"]), int(r["N"])): r for r in csv.DictReader(fh)}))
    header = ["L", "N"] + [f"{lab}:{col}" for lab, _ in tables for col in ("gap", "gamma_lo")]
    keys = sorted(set().union(*[t.keys() for _, t in tables])) if tables else []
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for key in keys:
        cells = [str(key[0]), str(key[1])]
        for _, t in tables:
            r = t.get(key)
            cells += ["" if r is None else f"{float(r['gap']):.6g}",
                      "" if r is None else f"{float(r['gamma_lo']):.6g}"]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    for path, m in manifests:
        lines.append(f"- {path}: command={m.get('command')} passed={m.get('passed')} "
                     f"hash={m.get('config_hash', '')[:12]}")
    text = "\n".join(lines) + "\n"
    _atomic_write(Path(args.out) / "report.md", text)
    print(text, end="")
    return 0


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="zrplab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"zrplab {__version__}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="zrplab-out")
    sub = p.add_subparsers(dest="command", required=True)

    def instance(q):
        q.add_argument("--rate", default="linear")
        q.add_argument("--L", type=int, required=True)
        q.add_argument("--N", type=int, required=True)
        q.add_argument("--flavor", choices=("complete", "local"), default="complete")

    def budgets(q):
        q.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
        q.add_argument("--maxiter", type=int, default=300)
        q.add_argument("--bd-restarts", dest="bd_restarts", type=int, default=32)
        q.add_argument("--cap", type=int, default=20_000)
        q.add_argument("--eps", type=float, default=0.1)
        q.add_argument("-T", dest="T", type=float, default=1000.0)

    q = sub.add_parser("verify", parents=[common], help="exact identities on one instance")
    instance(q)
    q.add_argument("--functions", type=int, default=20)
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("sweep", parents=[common], help="probes over an (L, N) grid")
    q.add_argument("--rate", default="linear")
    q.add_argument("--Lmin", type=int, default=2)
    q.add_argument("--Lmax", type=int, default=6)
    q.add_argument("--Nmin", type=int, default=1)
    q.add_argument("--Nmax", type=int, default=8)
    q.add_argument("--probe", action="append", choices=PROBES)
    q.add_argument("--flavor", choices=("complete", "local"), default="complete")
    q.add_argument("--config")
    budgets(q)
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("constants", parents=[common], help="gap, s and gamma on one instance")
    instance(q)
    budgets(q)
    q.set_defaults(func=cmd_constants)

    q = sub.add_parser("probe", parents=[common], help="run one probe on one instance")
    q.add_argument("name", choices=PROBES)
    instance(q)
    budgets(q)
    q.set_defaults(func=cmd_probe)

    q = sub.add_parser("simulate", parents=[common], help="kinetic Monte Carlo run")
    instance(q)
    q.add_argument("-T", dest="T", type=float, default=100.0)
    q.add_argument("--dt", type=float, default=None)
    q.add_argument("--replicas", type=int, default=1)
    q.add_argument("--trace", type=int, default=0, help="record up to this many events")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("report", parents=[common], help="merge manifests into one table")
    q.add_argument("manifests", nargs="*")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"zrplab: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, AssertionError) as exc:
        print(f"zrplab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
