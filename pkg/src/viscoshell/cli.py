"""Command line entry point: ``viscoshell <subcommand> [config] [--set key=value ...]``.

Exit codes: 0 when every check passes, 1 when a check fails or a solver
breaks down, 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import build_chart, build_convergence, build_loads, build_material, build_mesh, build_problem2d, \
    load_config
from .errors import ConfigError, ViscoShellError
from .flexural2d import Flexural2D
from .geometry import asymptotic_check, surface_eval
from .harness import run_convergence, limit_strain_probe, verify_identities, volterra_ode_check, volterra_sweep
from .shell3d import Mesh3D, Shell3D, korn_ratio, transverse_average

log = logging.getLogger("viscoshell")

RATIO_GATE = 0.6
ODE_TOL = 1e-7
ODE_DERIV_TOL = 1e-6


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    log.info("wrote %s", path)


def _check_rows(rows):
    return all(bool(r[2]) for r in rows)


# -- subcommands -------------------------------------------------------------------

def cmd_geometry_check(cfg, out: Path) -> bool:
    chart = build_chart(cfg)
    y = cfg["geometry.y"]
    if len(y) != 2:
        raise ConfigError("geometry.y needs two coordinates", "geometry.y")
    try:
        rep = asymptotic_check(chart, y, cfg["geometry.epsilons"])
    except ValueError as exc:
        raise ConfigError(str(exc), "geometry.epsilons") from exc

    def in_band(s, lo, hi):
        return s == "exact" or lo <= s <= hi

    bc = surface_eval(chart, y).b_covder
    # b^s_{be|al} against b^s_{al|be}: both index orders agree when the chart is smooth enough
    codazzi = float(np.max(np.abs(bc - bc.transpose(0, 2, 1))))
    rows = [
        ("gamma3_identity", rep.gamma3_identity_max, rep.gamma3_identity_max < 1e-10),
        ("codazzi_asymmetry", codazzi, codazzi < 1e-10),
        ("slope_g", rep.slopes["g"], in_band(rep.slopes["g"], 0.8, 1.2)),
        ("slope_Gamma_ab", rep.slopes["Gamma_ab"], in_band(rep.slopes["Gamma_ab"], 1.8, 2.2)),
        ("slope_Gamma_a3", rep.slopes["Gamma_a3"], in_band(rep.slopes["Gamma_a3"], 1.8, 2.2)),
    ]
    write_csv(out / "report_geometry.csv", ("name", "residual", "pass"), rows)
    write_csv(out / "report_geometry_residuals.csv", ("quantity", "epsilon", "residual"),
              [(key, float(e), r) for key, res in rep.residuals.items() for e, r in zip(rep.eps, res)])
    return _check_rows(rows)


def cmd_verify_identities(cfg, out: Path) -> bool:
    rows = verify_identities(build_material(cfg), cfg["check.n_draws"], cfg["check.seed"], cfg["check.tol"])
    write_csv(out / "report_identities.csv", ("name", "residual", "pass"), rows)
    for name, res, ok in rows:
        print(f"{name:22s} {res:.3e} {'PASS' if ok else 'FAIL'}")
    return _check_rows(rows)


def cmd_ode_check(cfg, out: Path) -> bool:
    mat = build_material(cfg)
    rows = []
    for label, coeffs in (("m=0", [0.0]), ("m=t", [0.0, 1.0]), ("m=t^2", [0.0, 0.0, 1.0])):
        r = volterra_ode_check(mat, coeffs)
        rows.append((f"{label}:deviation", r.max_dev, r.max_dev < ODE_TOL))
        rows.append((f"{label}:derivative", r.derivative_dev, r.derivative_dev < ODE_DERIV_TOL))
    w = volterra_sweep(cfg["check.ode_draws"], cfg["check.seed"])
    rows.append(("random:deviation", w.max_dev, w.max_dev < ODE_TOL))
    rows.append(("random:derivative", w.derivative_dev, w.derivative_dev < ODE_DERIV_TOL))
    write_csv(out / "report_ode.csv", ("name", "residual", "pass"), rows)
    return _check_rows(rows)


def cmd_solve2d(cfg, out: Path) -> bool:
    solver = Flexural2D(build_problem2d(cfg))
    hist = solver.run()
    layout = solver.layout
    wdofs = slice(layout.W, None, layout.per_node)
    rows = [(t, solver.bending_energy(x), m, r, float(np.max(np.abs(x[wdofs]))))
            for t, x, m, r in zip(hist.times, hist.snapshots, hist.memory_norms, hist.residuals)]
    write_csv(out / "report_solve2d.csv", ("t", "bending_energy", "memory_norm", "residual", "max_abs_w"), rows)
    nodes = layout.mesh.node_coords
    w = hist.final[wdofs]
    write_csv(out / "solution2d.csv", ("y1", "y2", "w"), [(a, b, c) for (a, b), c in zip(nodes, w)])
    return True


def cmd_solve3d(cfg, out: Path) -> bool:
    chart = build_chart(cfg)
    mesh = Mesh3D(build_mesh(cfg, chart), cfg["mesh.nz"])
    sh = Shell3D(chart, build_material(cfg), mesh, cfg["solve3d.epsilon"], cfg["bc.clamped"],
                 cfg["solve3d.shear_sampling"])
    times, hist = sh.run(build_loads(cfg), cfg["time.dt"], cfg["time.T"])
    res = [0.0] + list(sh.residuals)
    rows = []
    for t, u, r in zip(times, hist, res):
        ubar = transverse_average(mesh, u)
        korn = korn_ratio(sh, u) if np.any(u) else float("nan")
        rows.append((t, sh.energy(u), korn, r, float(np.max(np.abs(ubar[:, 2])))))
    write_csv(out / "report_solve3d.csv", ("t", "energy", "korn_ratio", "residual", "max_abs_ubar3"), rows)
    ubar = transverse_average(mesh, hist[-1])
    nodes = mesh.base.node_coords
    write_csv(out / "solution3d_average.csv", ("y1", "y2", "ubar1", "ubar2", "ubar3"),
              [(*y, *u) for y, u in zip(nodes, ubar)])
    return True


def convergence_verdict(rows) -> dict:
    """Pass/fail gates recomputed from the report columns alone."""
    def dec(col):
        v = [r[col] for r in rows]
        return all(b < a for a, b in zip(v, v[1:]))

    e = [r["err_h1st"] for r in rows]
    return {
        "err_h1st_decreasing": dec("err_h1st"),
        "err_h1st_ratio": e[-1] / e[0] < RATIO_GATE,
        "err_shear_decreasing": dec("err_shear"),
        "upsilon_decreasing": dec("upsilon_norm"),
    }


def _plot(rows, cols, path: Path):
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    eps = [r["epsilon"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    for c in cols:
        ax.loglog(eps, [r[c] for r in rows], "o-", label=c)
    ax.set_xlabel("epsilon")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def cmd_converge(cfg, out: Path) -> bool:
    setup = build_convergence(cfg)
    rep = run_convergence(setup)
    cols = rep.COLUMNS
    write_csv(out / "report_convergence.csv", cols, [[r[c] for c in cols] for r in rep.rows])
    verdict = convergence_verdict(rep.rows)
    _, probe_ok = limit_strain_probe(rep)
    for r in rep.rows:
        print("  ".join(f"{c}={r[c]:.4g}" for c in cols))
    for k, v in verdict.items():
        print(f"{k:22s} {'PASS' if v else 'FAIL'}")
    print(f"{'limit_strain_probe':22s} {'PASS' if probe_ok else 'FAIL'} (report only)")
    if cfg["output.svg"]:
        _plot(rep.rows, ("err_h1st", "err_shear", "upsilon_norm"), out / "convergence.svg")
    return all(verdict.values())


COMMANDS = {
    "geometry-check": cmd_geometry_check,
    "verify-identities": cmd_verify_identities,
    "ode-check": cmd_ode_check,
    "solve2d": cmd_solve2d,
    "solve3d": cmd_solve3d,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscoshell", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", nargs="?", help="flat key = value file (defaults when omitted)")
    p.add_argument("-o", "--out", help="output directory (overrides output.dir)")
    p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; may be repeated")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.set)
        out = Path(args.out or cfg["output.dir"])
        ok = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"viscoshell: error{key}: {exc}", file=sys.stderr)
        return 2
    except ViscoShellError as exc:
        print(f"viscoshell: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
