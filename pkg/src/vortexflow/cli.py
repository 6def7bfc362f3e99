"""Command line interface: ``vortexflow <subcommand> --config <file> --out <dir>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .diagnostics import (AtomicSignedMeasure, KineticAccumulator, current_difference,
                          equipartition_check, eta, excess_energy, hodge_decompose,
                          locate_vortices, w_minus_one_one)
from .errors import VortexFlowError
from .field import PolarGrid, load_field, save_field
from .initial_data import DensityGrid, build_field, place_vortices
from .kernels import (DISK, KernelContext, VortexConfiguration, dirichlet_green_G,
                      harmonic_part_H, neumann_N, rho_star)
from .point_vortex import integrate as ode_integrate
from .tdgl import SolverConfig, run as tdgl_run

log = logging.getLogger("vortexflow")


def _points(text: str) -> list:
    return [[float(c) for c in p.split(",")] for p in text.split(";") if p.strip()]


def _ints(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _emit(obj, out: str | None, name: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=harness._json_default)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text + "\n")
    print(text)


def _out_dir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _echo(cfg, d: Path) -> None:
    (d / "config.resolved.txt").write_text(harness.echo_config(cfg))


def _ctx(kind: str) -> KernelContext:
    return DISK if kind == "neumann" else KernelContext(kernel_kind=kind)


# -- subcommands ------------------------------------------------------------------

def cmd_tdgl_run(args) -> int:
    cfg = harness.load_config(args.config, "tdgl")
    d = _out_dir(args)
    _echo(cfg, d)
    ctx = harness.context_for_bc(cfg["bc"])
    vc = VortexConfiguration(cfg["positions"], cfg["degrees"])
    f0 = build_field(ctx, vc, cfg["epsilon"], PolarGrid(cfg["n_r"], cfg["n_theta"]))
    sc = SolverConfig(cfg["epsilon"], cfg["dt"], cfg["bc"], cfg["t_end"], dt_guard=cfg["dt_guard"])
    traj = tdgl_run(f0, sc, probes=np.linspace(0, cfg["t_end"], cfg["n_probes"]))
    rows = [{"t": t, "E": E, "dissipation": D, "residual": r} for t, E, D, r in traj.ledger.rows()]
    (d / "ledger.csv").write_text(harness.table_csv(rows))
    for k, f in enumerate(traj.snapshots):
        save_field(f, d / f"snapshot_{k:03d}.vxf")
    summary = {"max_residual": traj.ledger.max_residual, "monotone": traj.ledger.is_monotone(),
               "snapshots": len(traj.snapshots), "provenance": harness.provenance(cfg)}
    _emit(summary, str(d), "summary.json")
    return 0


def cmd_pvortex_run(args) -> int:
    cfg = harness.load_config(args.config, "pvortex")
    vc = VortexConfiguration(cfg["positions"], cfg["degrees"])
    traj = ode_integrate(_ctx(cfg["kernel_kind"]), vc, cfg["t_end"], cfg["rho_stop"],
                         probes=np.linspace(0, cfg["t_end"], cfg["n_probes"]), rtol=cfg["rtol"])
    rows = [dict(zip(traj.header(), r)) for r in traj.rows()]
    text = harness.table_csv(rows, traj.header())
    if args.out:
        d = _out_dir(args)
        _echo(cfg, d)
        (d / "trajectory.csv").write_text(text)
    else:
        sys.stdout.write(text)
    log.info("stop reason %s at t=%g", traj.stop_reason, traj.t_stop)
    return 0


def cmd_mkdata(args) -> int:
    cfg = harness.load_config(args.config, "mkdata")
    d = _out_dir(args)
    _echo(cfg, d)
    if cfg["density_csv"]:
        dens = DensityGrid.from_csv(cfg["density_csv"]).normalized()
    else:
        dens = DensityGrid.uniform_patch(cfg["patch_radius"])
    vc = place_vortices(dens, cfg["n"])
    rows = [{"x": p[0], "y": p[1], "degree": int(k)} for p, k in zip(vc.positions, vc.degrees)]
    (d / "configuration.csv").write_text(harness.table_csv(rows, ["x", "y", "degree"]))
    info = {"n_requested": cfg["n"], "n_placed": vc.n}
    if cfg["field"]:
        f = build_field(_ctx(cfg["kernel_kind"]), vc, cfg["epsilon"],
                        PolarGrid(cfg["n_r"], cfg["n_theta"]))
        save_field(f, d / "field.vxf")
        info["excess_energy"] = f.meta["excess_energy"]
    _emit(info, str(d), "mkdata.json")
    return 0


def cmd_kernel_table(args) -> int:
    cfg = harness.load_config(args.config, "kernel_table")
    k = cfg["points_per_axis"]
    s = np.linspace(-cfg["extent"], cfg["extent"], k)
    X, Y = np.meshgrid(s, s)
    z = (X + 1j * Y).ravel()
    z = z[np.abs(z) < 1]
    rows = []
    for x in z:
        for y in z:
            if x == y:
                continue
            rows.append({"x1": x.real, "x2": x.imag, "y1": y.real, "y2": y.imag,
                         "N": float(neumann_N(DISK, x, y)), "H": float(harmonic_part_H(DISK, x, y)),
                         "G": float(dirichlet_green_G(DISK, x, y))})
    text = harness.table_csv(rows, ["x1", "x2", "y1", "y2", "N", "H", "G"])
    if args.out:
        d = _out_dir(args)
        _echo(cfg, d)
        (d / "kernel_table.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_experiment(args) -> int:
    cfg = harness.load_config(args.config)
    result = harness.run_experiment(cfg)
    harness.write_outputs(args.out, cfg["_schema"], result)
    sys.stdout.write(harness.table_csv(result["rows"]))
    if result["flagged"]:
        log.warning("flagged rows: %s", result["flagged"])
        return 1
    return 0


def cmd_validate(args) -> int:
    cfg = harness.load_config(args.config, "validate")
    if args.kernel_bias is not None:
        cfg["kernel_bias"] = args.kernel_bias
    if args.n_r is not None:
        cfg["n_r"] = args.n_r
    rep = harness.validate_all(n_r=cfg["n_r"], kernel_bias=cfg["kernel_bias"],
                               n_random=cfg["n_random"], seed=cfg["seed"])
    if args.out:
        _echo(cfg, _out_dir(args))
    _emit(rep, args.out, "validate.json")
    return 0 if rep["passed"] else 1


# -- diag --------------------------------------------------------------------------

def _measure_csv(path) -> AtomicSignedMeasure:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.size == 0:
        return AtomicSignedMeasure.empty()
    return AtomicSignedMeasure(arr[:, :2], arr[:, 2])


def _cfg_from_args(args) -> VortexConfiguration:
    return VortexConfiguration(_points(args.positions), _ints(args.degrees))


def cmd_diag(args) -> int:
    kind = args.diag
    if kind == "dist":
        val = w_minus_one_one(_measure_csv(args.mu), _measure_csv(args.nu))
        _emit({"distance": val}, args.out, "dist.json")
        return 0
    if kind == "kinetic":
        cfg = harness.load_config(args.config, "tdgl")
        ctx = harness.context_for_bc(cfg["bc"])
        vc = VortexConfiguration(cfg["positions"], cfg["degrees"])
        ode = ode_integrate(ctx, vc, cfg["t_end"], 1e-3, probes=np.linspace(0, cfg["t_end"], 101))
        rs = rho_star(ode.configurations(), ctx)
        f0 = build_field(ctx, vc, cfg["epsilon"], PolarGrid(cfg["n_r"], cfg["n_theta"]))
        acc = KineticAccumulator(ode, rs, (0.0, min(cfg["t_end"], ode.t_stop)))
        tdgl_run(f0, SolverConfig(cfg["epsilon"], cfg["dt"], cfg["bc"], cfg["t_end"],
                                  dt_guard=cfg["dt_guard"]), callback=acc)
        rep = acc.report()
        rep["rho_star"] = rs
        _emit(rep, args.out, "kinetic.json")
        return 0
    f = load_field(args.field)
    if kind == "track":
        rep = locate_vortices(f, args.merge_radius, args.ball_radius).as_dict()
    elif kind == "excess":
        ctx = harness.context_for_bc(f.bc_kind)
        rep = {"excess_energy": excess_energy(f, ctx, _cfg_from_args(args))}
    elif kind == "eta":
        a = np.array(_points(args.positions))
        val, vec = eta(f, a[:, 0] + 1j * a[:, 1], args.rho_star)
        rep = {"eta": val, "vectors": vec.tolist()}
    elif kind == "equip":
        c = [float(v) for v in args.center.split(",")]
        rep = equipartition_check(f, complex(c[0], c[1]), args.sigma)
    elif kind == "hodge":
        ctx = harness.context_for_bc(f.bc_kind)
        jr, jt = current_difference(f, ctx, _cfg_from_args(args))
        rep = hodge_decompose(f.grid, (jr, jt), args.bc or f.bc_kind).norms
    else:  # pragma: no cover - argparse restricts choices
        raise AssertionError(kind)
    _emit(rep, args.out, f"{kind}.json")
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vortexflow", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", default=None, help="key = value config file")
        sp.add_argument("--out", required=out_required, default=None, help="output directory")

    t = sub.add_parser("tdgl", help="PDE runs").add_subparsers(dest="action", required=True)
    common(t.add_parser("run"), out_required=True)
    t.choices["run"].set_defaults(func=cmd_tdgl_run)

    pv = sub.add_parser("pvortex", help="point-vortex runs").add_subparsers(dest="action", required=True)
    common(pv.add_parser("run"))
    pv.choices["run"].set_defaults(func=cmd_pvortex_run)

    md = sub.add_parser("mkdata", help="vortex placement and well-prepared fields")
    common(md, out_required=True)
    md.set_defaults(func=cmd_mkdata)

    kt = sub.add_parser("kernel", help="kernel tables").add_subparsers(dest="action", required=True)
    common(kt.add_parser("table"))
    kt.choices["table"].set_defaults(func=cmd_kernel_table)

    ex = sub.add_parser("experiment", help="convergence experiments")
    common(ex, out_required=True)
    ex.set_defaults(func=cmd_experiment)

    va = sub.add_parser("validate", help="invariant suite")
    common(va)
    va.add_argument("--kernel-bias", type=float, default=None)
    va.add_argument("--n-r", type=int, default=None)
    va.set_defaults(func=cmd_validate)

    dg = sub.add_parser("diag", help="diagnostics on stored fields and measures")
    ds = dg.add_subparsers(dest="diag", required=True)
    for name in ("track", "excess", "eta", "equip", "hodge"):
        sp = ds.add_parser(name)
        sp.add_argument("field", help="field snapshot (.vxf)")
        sp.add_argument("--out", default=None)
        sp.set_defaults(func=cmd_diag)
    ds.choices["track"].add_argument("--merge-radius", type=float, default=None)
    ds.choices["track"].add_argument("--ball-radius", type=float, default=None)
    for name in ("excess", "hodge"):
        ds.choices[name].add_argument("--positions", required=True, help="x,y;x,y")
        ds.choices[name].add_argument("--degrees", required=True, help="d1,d2")
    ds.choices["hodge"].add_argument("--bc", choices=["dirichlet", "neumann"], default=None)
    ds.choices["eta"].add_argument("--positions", required=True)
    ds.choices["eta"].add_argument("--rho-star", type=float, required=True)
    ds.choices["equip"].add_argument("--center", default="0,0")
    ds.choices["equip"].add_argument("--sigma", type=float, required=True)
    sp = ds.add_parser("dist")
    sp.add_argument("mu", help="CSV with header and columns x, y, w")
    sp.add_argument("nu")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_diag)
    sp = ds.add_parser("kinetic")
    common(sp)
    sp.set_defaults(func=cmd_diag)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VortexFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
