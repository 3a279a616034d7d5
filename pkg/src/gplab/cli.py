"""Command-line entry point ``gplab <subcommand> --config <path>``.

Each subcommand runs one pipeline, writes CSV/binary artifacts and a JSON
report into the output directory, and exits with status 0 exactly when all
of its checks pass.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import io
from .config import COMMANDS, ConfigError, RunConfig, default_config, parse_config, serialize_config
from .fock import (FockBasis, ccr_defect, fock_bounds, op_annihilate, op_create,
                   op_excitation_number)
from .gp import (GpParams, harmonic_trap, evolve_split_step,
                 minimize_imaginary_time)
from .lattice import Field, Grid
from .manybody import (DepletionRecord, ManyBodyConfig, build_H, correlated_product_state, depletion_two_routes,
                       evolve, gronwall_monitor, trapped_depletion_experiment)
from .renorm import (RenormSystem, gronwall_constant, min_eig, q_ren_constant,
                     sandwich_constants)
from .scattering import (RadialPotential, asymptote_residual, integral_identity,
                         scattering_length_variational, solve_zero_energy, square_well_length)

log = logging.getLogger("gplab")

__all__ = ["main", "run", "package_version"]


def package_version() -> str:
    try:
        return version("gplab")
    except PackageNotFoundError:
        return "0+unknown"


def _check(name: str, anchor: str, value: float, tol: float, passed: bool | None = None,
           relation: str = "<=") -> dict:
    value = float(value)
    if passed is None:
        passed = bool(np.isfinite(value) and value <= tol) if relation == "<=" else \
            bool(np.isfinite(value) and value >= tol)
    return {"name": name, "anchor": anchor, "value": value, "tolerance": float(tol),
            "relation": relation, "passed": bool(passed)}


# builders ------------------------------------------------------------------

def _potential(cfg: RunConfig) -> RadialPotential:
    p = cfg["potential"]
    if p["kind"] == "table":
        path = Path(p["file"])
        if not path.is_absolute():
            path = Path(cfg.base_dir) / path
        return RadialPotential.from_table(path)
    return RadialPotential.square_well(p["depth"], p["radius"], dr=p["dr"])


def _grid(cfg: RunConfig) -> Grid:
    g = cfg["grid"]
    return Grid.cube(g["dim"], g["points"], g["h"])


def _trap(grid: Grid, omega: float):
    return harmonic_trap(grid, omega) if omega > 0 else None


def _initial_field(cfg: RunConfig, grid: Grid) -> Field:
    gp = cfg["gp"]
    if gp["initial"] == "plane_wave":
        mode = list(gp["mode"]) + [0] * grid.dim
        return Field.plane_wave(grid, mode[: grid.dim])
    if gp["initial"] == "constant":
        return Field.constant(grid)
    return Field.gaussian(grid, gp["width"])


# pipelines -----------------------------------------------------------------

def _run_scatter(cfg: RunConfig, out: Path):
    p = cfg["potential"]
    V = _potential(cfg)
    sol = solve_zero_energy(V, r_max=p.get("r_max"))
    a_var = scattering_length_variational(V)
    a_int = integral_identity(sol)
    res = asymptote_residual(sol)
    results = {"a_ode": sol.a, "a_variational": a_var, "a_integral_identity": a_int,
               "asymptote_residual": res}
    rel = abs(a_int - sol.a) / max(abs(sol.a), 1e-300)
    checks = [_check("integral identity vs ODE", "integral-identity", rel if sol.a else abs(a_int), 1e-6),
              _check("asymptote residual", "asymptote", res, 1e-6),
              _check("variational vs ODE", "variational-characterization",
                     abs(a_var - sol.a) / max(abs(sol.a), 1e-300) if sol.a else abs(a_var), 1e-4)]
    if p["kind"] == "square_well":
        exact = square_well_length(p["depth"], p["radius"])
        results["a_exact"] = exact
        checks.append(_check("ODE vs analytic square well", "square-well-matching",
                             abs(sol.a - exact) / max(exact, 1e-300) if exact else abs(sol.a), 1e-4))
    io.write_csv(out / "scattering.csv", {"r": sol.r, "f": sol.f_samples, "u": sol.u_samples})
    return results, checks


def _run_groundstate(cfg: RunConfig, out: Path):
    gp = cfg["gp"]
    grid = _grid(cfg)
    trap = _trap(grid, gp["trap_omega"])
    params = GpParams(gp["g"], trap, confining=trap is not None)
    gs = minimize_imaginary_time(params, grid, tol=gp["tol"], max_iter=gp["max_iter"])
    E = gs.energy.total
    results = {"energy": E, "mu": gs.mu, "residual": gs.residual,
               "iterations": gs.iterations, "boundary_density": gs.boundary_density,
               "energy_parts": gs.energy.as_dict()}
    rises = float(np.max(np.diff(gs.energies), initial=0.0))
    checks = [_check("Euler-Lagrange residual", "euler-lagrange", gs.residual, gp["tol"]),
              _check("energy non-increasing along iteration", "gradient-flow-descent",
                     rises, 1e-12 * max(1.0, abs(E)))]
    if gp["g"] == 0 and trap is not None:
        target = grid.dim * gp["trap_omega"]
        checks.append(_check("harmonic energy", "harmonic-oscillator", abs(E - target), 1e-4))
        checks.append(_check("harmonic chemical potential", "harmonic-oscillator",
                             abs(gs.mu - target), 1e-4))
    io.write_field(gs.field, out / "groundstate.gpf")
    io.write_csv(out / "energies.csv", {"iteration": np.arange(len(gs.energies)),
                                        "energy": gs.energies})
    return results, checks


def _run_evolve_gp(cfg: RunConfig, out: Path):
    gp = cfg["gp"]
    grid = _grid(cfg)
    trap = _trap(grid, gp["trap_omega"])
    params = GpParams(gp["g"], trap)
    phi0 = _initial_field(cfg, grid)
    n_steps = int(round(gp["t_final"] / gp["dt"]))
    traj = evolve_split_step(phi0, params, gp["dt"], n_steps, gp["sample_every"], gp["order"])
    obs = traj.observables()
    T = max(traj.times[-1] - traj.times[0], 1e-300)
    span = max(T, 1.0)
    mass_drift = float(np.max(np.abs(obs["mass"] - obs["mass"][0]))) / span
    e0 = obs["e_total"][0]
    energy_drift = float(np.max(np.abs(obs["e_total"] - e0))) / max(abs(e0), 1e-300) / span
    checks = [_check("mass drift per unit time", "mass-conservation", mass_drift, gp["mass_tol"]),
              _check("relative energy drift per unit time", "energy-conservation",
                     energy_drift, gp["energy_tol"])]
    results = {"mass_drift": mass_drift, "energy_drift": energy_drift, "n_steps": n_steps,
               "t_final": float(traj.times[-1])}
    if gp["initial"] == "plane_wave" and gp["g"] == 0 and trap is None:
        k2 = float(sum((2 * np.pi * m / L) ** 2 for m, L in
                       zip(list(gp["mode"]) + [0] * grid.dim, grid.lengths)))
        err = max(float(np.max(np.abs(traj.states[i] - np.exp(-1j * k2 * t) * phi0.values)))
                  for i, t in enumerate(traj.times))
        results["phase_error"] = err
        checks.append(_check("plane-wave phase evolution", "free-phase", err, 1e-12))
    io.write_csv(out / "observables.csv", obs)
    io.write_field(traj.field(len(traj) - 1), out / "final.gpf")
    return results, checks


def _run_evolve_manybody(cfg: RunConfig, out: Path):
    gp, mb = cfg["gp"], cfg["manybody"]
    grid = _grid(cfg)
    V = _potential(cfg)
    sol = solve_zero_energy(V)
    trap = _trap(grid, gp["trap_omega"])
    H = build_H(ManyBodyConfig(grid, mb["N"], V, trap, sampling=mb["sampling"],
                               scaling=mb["scaling"]))
    phi0 = _initial_field(cfg, grid)
    if mb["initial"] == "correlated":
        psi0 = correlated_product_state(phi0, sol, mb["N"], H.basis)
    else:
        psi0 = H.basis.product_state(phi0)
    n_steps = int(round(mb["t_final"] / mb["dt"]))
    traj = evolve(H, psi0, mb["dt"], n_steps, krylov_dim=mb["krylov_dim"], tol=mb["krylov_tol"],
                  sample_every=mb["sample_every"])
    params = GpParams(8 * np.pi * sol.a, trap)
    gtraj = evolve_split_step(phi0, params, mb["dt"], n_steps, mb["sample_every"], order=4)
    N = mb["N"]
    if "r" in mb:
        rep = gronwall_monitor(traj, H, gtraj, sol, mb["r"])
        rows = rep.records
        identity = rep.identity_defect
        extra = {"gronwall_C": rep.C, "growth_rate": rep.growth_rate, "envelope_rate": rep.envelope_rate,
                 "within_envelope": rep.within_gronwall_envelope}
    else:
        rep, rows, identity, extra = None, [], 0.0, {}
        for i, t in enumerate(traj.times):
            phi = gtraj.at(t)
            psi = traj.states[i]
            d1, d2 = depletion_two_routes(psi, H.basis, phi)
            identity = max(identity, abs(d1 - d2))
            fid = abs(np.vdot(H.basis.product_state(phi), psi)) ** 2
            rows.append(dict(t=t, depletion=d1, N_perp_expect=N * d2, gronwall_value=np.nan,
                             energy=H.expectation(psi), fidelity=fid))
        rows = [DepletionRecord(**r) for r in rows]
    span = max(float(traj.times[-1] - traj.times[0]), 1.0)
    norm_drift = float(np.max(np.abs(traj.norms() - 1.0))) / span
    en = np.array([r.energy for r in rows])
    e_drift = float(np.max(np.abs(en - en[0]))) / max(abs(en[0]), 1e-300) / span
    checks = [_check("norm drift per unit time", "unitarity", norm_drift, 1e-10),
              _check("relative energy drift per unit time", "energy-conservation", e_drift, 1e-8),
              _check("depletion two-route identity", "depletion-identity", identity, 1e-10)]
    if rep is not None:
        gap = float(max(r.N_perp_expect - r.gronwall_value for r in rows))
        checks.append(_check("Gronwall functional dominates excitation number",
                             "gronwall-first-bound", gap, 1e-8))
    io.write_csv(out / "manybody.csv", {
        "t": [r.t for r in rows], "depletion": [r.depletion for r in rows],
        "n_perp": [r.N_perp_expect for r in rows], "gronwall": [r.gronwall_value for r in rows],
        "energy": [r.energy for r in rows], "fidelity_to_condensate": [r.fidelity for r in rows]})
    io.write_state(traj.states[-1], H.basis.M, N, out / "final.mbf")
    results = {"dim": H.dim, "norm_drift": norm_drift, "energy_drift": e_drift,
               "identity_defect": identity, "scattering_length": sol.a,
               "krylov": traj.meta, **extra}
    return results, checks


def _random_system(rng, M: int, N: int, kernel_scale: float):
    def c(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)
    v = c(M)
    v /= np.linalg.norm(v)
    k = c(M, M)
    k = k + k.T
    k *= kernel_scale / np.linalg.norm(k)
    kd = c(M, M)
    kd = kd + kd.T
    kd *= kernel_scale / np.linalg.norm(kd)
    B = rng.normal(size=(M, M))
    L = B @ B.T
    W = np.abs(rng.normal(size=(M, M)))
    W = W + W.T
    return v, k, kd, L, W


def _run_verify_ops(cfg: RunConfig, out: Path):
    vc = cfg["verify"]
    M, N, tol = vc["M"], vc["N"], vc["tol"]
    rng = np.random.default_rng(cfg.seed)
    v, k, kd, L, W = _random_system(rng, M, N, vc["kernel_scale"])
    g = float(rng.uniform(0.5, 2.0))
    e_gp = float(rng.normal())
    # on-shell time derivative: i∂_tφ = -Δφ + g|φ|²φ (unit cell volume)
    dv = -1j * (L @ v + g * np.abs(v) ** 2 * v)
    S = RenormSystem(v, N, laplacian=L, W=W)
    ops = S.build(k, kd, dv=dv, e_gp=e_gp, g=g, cell_volume=1.0)
    checks = []
    T = FockBasis(M, n_max=N)
    f, h = rng.normal(size=M) + 1j * rng.normal(size=M), rng.normal(size=M) + 1j * rng.normal(size=M)
    checks.append(_check("CCR defect below the top sector", "ccr", ccr_defect(f, h, T)["defect"], 1e-12))
    basis = FockBasis(M, n=N)
    Np = op_excitation_number(v, basis).toarray()
    lower = FockBasis(M, n=N - 1)
    Qc = sum((op_create(S.Q[:, x], lower) @ op_annihilate(S.Q[:, x], basis)).toarray()
             for x in range(M))
    checks.append(_check("excitation number two routes", "excitation-number-identity",
                         np.max(np.abs(Np - Qc)), tol))
    lad = S.ladder_identities()
    checks.append(_check("number ladder identities", "number-ladder", max(lad.values()), tol))
    comm = max(S.commutator_b_nren(i, k)["max_defect"] for i in range(M))
    checks.append(_check("[b, N_ren] closed form", "b-nren-commutator", comm, tol))
    dec = float(np.max(np.abs((sum(ops.parts) - ops.cH_N).toarray())))
    checks.append(_check("five-part decomposition", "decomposition-identity", dec, 1e-8))
    herm = max(float(np.max(np.abs((X - X.conj().T).toarray())))
               for X in (ops.N_ren, ops.Q_ren, ops.cH_N, ops.K_ren, ops.V_ren))
    checks.append(_check("hermiticity", "hermiticity", herm, tol))
    kmin = min_eig(ops.K_ren.toarray())
    vmin = min_eig(ops.V_ren.toarray())
    checks.append(_check("K_ren spectrum", "kinetic-positivity", kmin, -1e-8, relation=">="))
    checks.append(_check("V_ren spectrum", "potential-positivity", vmin, -1e-8, relation=">="))
    zero = S.build(np.zeros((M, M)), np.zeros((M, M)), with_ren=False)
    collapse = max(float(np.max(np.abs((zero.N_ren - zero.N_perp).toarray()), initial=0.0)),
                   float(np.max(np.abs(zero.Q_ren.toarray()), initial=0.0)))
    checks.append(_check("zero-kernel collapse", "bare-limit", collapse, 0.0))
    Nr, Qr, cH, Npd = (X.toarray() for X in (ops.N_ren, ops.Q_ren, ops.cH_N, ops.N_perp))
    cm, cp = sandwich_constants(Nr, Npd)
    checks.append(_check("sandwich constants finite", "sandwich", max(cm, cp), np.inf,
                         passed=bool(np.isfinite(cm) and np.isfinite(cp))))
    cq = q_ren_constant(Qr, Nr)
    I = np.eye(Nr.shape[0])
    qmin = min(min_eig(cq * (Nr + I) + Qr), min_eig(cq * (Nr + I) - Qr)) if np.isfinite(cq) else -np.inf
    checks.append(_check("Q_ren bounded by N_ren", "q-ren-bound", qmin, -1e-8, relation=">="))
    cg = gronwall_constant(cH, Qr, Nr, Npd)
    gmin = min_eig(cH + Qr + cg * (Nr + I) - Npd) if np.isfinite(cg) else -np.inf
    checks.append(_check("first Gronwall bound", "gronwall-first-bound", gmin, -1e-8, relation=">="))
    fails = 0
    worst = -np.inf
    for _ in range(vc["draws"]):
        phi = rng.normal(size=M) + 1j * rng.normal(size=M)
        phi /= np.linalg.norm(phi)
        psi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
        psi /= np.linalg.norm(psi)
        rows = fock_bounds(psi, basis, phi, rng.normal(size=M) + 1j * rng.normal(size=M),
                           rng.normal(size=M) + 1j * rng.normal(size=M),
                           rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M)))
        fails += sum(not r["holds"] for r in rows)
        worst = max(worst, max(r["lhs"] - r["rhs"] for r in rows))
    checks.append(_check("ladder bounds on random draws", "fock-bounds", fails, 0))
    results = {"M": M, "N": N, "sandwich": [cm, cp], "q_ren_constant": cq,
               "gronwall_constant": cg, "K_ren_min": kmin, "V_ren_min": vmin,
               "fock_bound_worst_margin": worst}
    io.write_csv(out / "checks.csv", {"name": [c["name"] for c in checks],
                                      "value": [c["value"] for c in checks],
                                      "passed": [c["passed"] for c in checks]})
    return results, checks


def _run_experiment(cfg: RunConfig, out: Path):
    ex = cfg["experiment"]
    grid = _grid(cfg)
    V = _potential(cfg)
    rows = trapped_depletion_experiment(grid, V, ex["Ns"], harmonic_trap(grid, ex["trap_omega"]),
                                        ex["strengths"], ex["sampling"], ex["scaling"])
    checks = [_check("depletion two-route identity", "depletion-identity",
                     max(r["identity_defect"] for r in rows), 1e-10)]
    for s in ex["strengths"]:
        nd = [r["n_depletion"] for r in rows if r["strength"] == s]
        if s > 0 and len(nd) > 1:
            ratio = max(nd) / min(nd) if min(nd) > 0 else np.inf
            checks.append(_check(f"N*depletion spread at strength {s}", "depletion-trend", ratio, 2.0))
    for N in ex["Ns"]:
        d = [r["depletion"] for r in sorted(rows, key=lambda r: r["strength"]) if r["N"] == N]
        worst = float(np.max(-np.diff(d), initial=-np.inf))
        checks.append(_check(f"depletion monotone in strength, N={N}", "depletion-trend",
                             worst, 0.0, passed=bool(np.all(np.diff(d) > 0))))
    keys = ["N", "strength", "l1", "g", "depletion", "n_depletion", "energy", "identity_defect"]
    io.write_csv(out / "depletion.csv", {k: [r[k] for r in rows] for k in keys})
    return {"rows": rows}, checks


_PIPELINES = {
    "scatter": _run_scatter,
    "groundstate": _run_groundstate,
    "evolve-gp": _run_evolve_gp,
    "evolve-manybody": _run_evolve_manybody,
    "verify-ops": _run_verify_ops,
    "experiment-trapped-depletion": _run_experiment,
}


def run(cfg: RunConfig, out_dir: str | Path | None = None) -> dict:
    """Execute the configured pipeline and write ``report.json``."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        results, checks = _PIPELINES[cfg.command](cfg, out)
        error = None
    except Exception as exc:  # reported, not swallowed: the run fails
        log.exception("%s failed", cfg.command)
        results, checks, error = {}, [], f"{type(exc).__name__}: {exc}"
    report = {
        "schema": io.REPORT_SCHEMA,
        "command": cfg.command,
        "version": f"gplab {package_version()}",
        "seed": cfg.seed,
        "config": serialize_config(cfg),
        "wall_time": time.perf_counter() - t0,
        "results": results,
        "checks": checks,
        "error": error,
        "passed": error is None and all(c["passed"] for c in checks),
    }
    io.write_report(report, out / "report.json")
    (out / "config.ini").write_text(serialize_config(cfg))
    return report


def _scatter_from_flags(args) -> RunConfig:
    pot = {"dr": args.dr}
    if args.table:
        pot.update(kind="table", file=str(Path(args.table).resolve()))
    else:
        pot.update(depth=args.depth, radius=args.radius)
    if args.r_max is not None:
        pot["r_max"] = args.r_max
    return default_config("scatter", potential=pot)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gplab", description="Dilute Bose gas numerics toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name)
        sp_.add_argument("--config", help="sectioned key = value configuration file")
        sp_.add_argument("--seed", type=int, help="override the configured seed")
        sp_.add_argument("--out", help="output directory")
        sp_.add_argument("-v", "--verbose", action="store_true")
        if name == "scatter":
            sp_.add_argument("--depth", type=float, default=2.0)
            sp_.add_argument("--radius", type=float, default=1.0)
            sp_.add_argument("--dr", type=float, default=1e-3)
            sp_.add_argument("--r-max", type=float, default=None)
            sp_.add_argument("--table", help="two-column r V(r) file")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = parse_config(args.config)
            if cfg.command != args.command:
                raise ConfigError([f"[run] command: config is for {cfg.command!r}, "
                                   f"not {args.command!r}"])
        elif args.command == "scatter":
            cfg = _scatter_from_flags(args)
        else:
            cfg = default_config(args.command)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    report = run(cfg, args.out)
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"{mark} {c['name']}: {c['value']:.3e} {c['relation']} {c['tolerance']:.1e}")
    if report["error"]:
        print(f"ERROR {report['error']}", file=sys.stderr)
    if args.command == "scatter":
        print(json.dumps({k: report["results"].get(k) for k in
                             ("a_ode", "a_variational", "a_integral_identity",
                              "asymptote_residual")}))
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
