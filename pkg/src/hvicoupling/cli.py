"""Command line front end.

    hvicoupling list
    hvicoupling solve --fixture square-nonmonotone --out runs/a
    hvicoupling stability --fixture square-nonmonotone --kind obstacle --N 8
    hvicoupling control --fixture ocp1-inverse-crime
    hvicoupling field --fixture square-nonmonotone
    hvicoupling spectra

Exit codes: 0 success, 2 invalid configuration, 3 solver failure.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np
import yaml

from . import bem, config, control, exterior, hvi, stability
from .geometry import MeshError, write_mesh

log = logging.getLogger("hvicoupling")

EXIT_CONFIG = 2
EXIT_SOLVE = 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])


def load_config(args):
    user = {}
    if args.fixture:
        if args.fixture not in config.FIXTURES:
            raise config.ConfigError(f"unknown fixture {args.fixture!r}; run 'list' for the registry")
        user = config.FIXTURES[args.fixture][1]
    cfg = config.resolve_config(user)
    if args.config:
        try:
            with open(args.config) as fh:
                text = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise config.ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(text, dict):
            raise config.ConfigError("config file must hold a mapping")
        base = _jsonable(cfg)
        cfg = config.resolve_config(_deep_update(base, text))
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _deep_update(base, over):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict) and k != "friction":
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _echo(cfg, out):
    with open(os.path.join(out, "resolved_config.yaml"), "w") as fh:
        yaml.safe_dump(_jsonable(cfg), fh, sort_keys=True)


# -- subcommands ----------------------------------------------------------------

def cmd_list(args, cfg=None):
    rows = config.list_fixtures()
    width = max(len(n) for n, _ in rows)
    for name, desc in rows:
        print(f"{name:<{width}}  {desc}")
    return 0


def cmd_solve(args, cfg):
    out = _out(args)
    _echo(cfg, out)
    mesh = config.build_mesh_from_config(cfg)
    if args.export_mesh:
        write_mesh(mesh, args.export_mesh)
    prob = config.build_problem(cfg, mesh)
    rep = prob.smallness_check(warn=True)
    sv = cfg["solver"]
    sol = prob.solve(tol=sv["tol"], inner_tol=sv["inner_tol"], max_outer=sv["max_outer"], check_residual=False)
    sol.residual = hvi.hvi_residual(prob, sol, n_dirs=sv["residual_directions"], seed=cfg["seed"])
    result = {
        "u": sol.u, "v": sol.v, "converged": sol.converged,
        "diagnostics": {"smallness": rep.as_dict(), "margin": rep.margin,
                        "theta": sol.contraction_factors, "outer_iterations": sol.outer_iterations,
                        "residual": sol.residual, "scale": prob.scale, "dofs": config.dof_summary(prob),
                        "dg_lipschitz_empirical": prob.interior.lipschitz_estimate(
                            np.random.default_rng(cfg["seed"]), samples=10)},
    }
    if prob.F.lower is not None and np.any(np.isfinite(prob.F.lower) | np.isfinite(prob.F.upper)):
        comp = hvi.obstacle_complementarity(prob, sol)
        comp.pop("residual")
        result["diagnostics"]["complementarity"] = comp
    write_json(os.path.join(out, "solution.json"), result)
    print(f"converged={sol.converged} margin={rep.margin:.6g} outer={sol.outer_iterations} "
          f"residual={sol.residual:.3e}")
    return 0


def cmd_stability(args, cfg):
    st = cfg["stability"]
    if args.kind:
        st["kind"] = args.kind
    if args.N:
        st["N"] = args.N
    cfg = config.resolve_config(cfg)
    st = cfg["stability"]
    out = _out(args)
    _echo(cfg, out)
    prob = config.build_problem(cfg)
    decay = stability.geometric(st["decay"])
    if st["kind"] == "linear":
        seq = stability.make_linear_sequence(prob.f_load, prob.q_nodal, decay, st["N"], seed=cfg["seed"])
    else:
        peak = float(np.max(prob.solve(check_residual=False).u))
        n = prob.mesh.n_nodes
        seq = stability.make_obstacle_sequence(np.full(n, -np.inf), np.full(n, st["level"] * peak), decay,
                                               st["N"], seed=cfg["seed"], mode=st["mode"])
    rep = stability.run_stability_experiment(prob, seq, workers=args.workers)
    rep.write_csv(os.path.join(out, "stability.csv"))
    write_json(os.path.join(out, "stability.json"), rep.as_dict())
    print(f"kind={rep.kind} first={rep.errors[0]:.3e} last={rep.errors[-1]:.3e} monotone={rep.monotone_tail}")
    return 0


def _control_spec(cfg, prob):
    from .control import patch_prolongation, segment_prolongation

    cc = cfg["control"]
    kw = {}
    if cc["kind"] in ("distributed", "distributed_boundary"):
        kw["P_f"] = patch_prolongation(prob.mesh.nodes, *cc["patches"])
    if cc["kind"] in ("boundary", "distributed_boundary"):
        kw["P_q"] = segment_prolongation(prob.steklov.ops.bmesh.points, cc["segments"])
    if cc["kind"] == "obstacle":
        kw["P_obs"] = patch_prolongation(prob.mesh.nodes, *cc["obstacle_patches"])
        kw["obstacle_sides"] = tuple(cc["obstacle_sides"])
    return control.ControlSpec(cc["kind"], prob, np.zeros(prob.size), cc["rho"], **kw)


def cmd_control(args, cfg):
    cc = cfg["control"]
    if args.kind:
        cc["kind"] = args.kind
    if args.rho:
        cc["rho"] = args.rho
    cfg = config.resolve_config(cfg)
    cc = cfg["control"]
    out = _out(args)
    _echo(cfg, out)
    prob = config.build_problem(cfg)
    probe = _control_spec(cfg, prob)
    c_true = np.asarray(cc["true_control"], float) if cc["true_control"] is not None else control.default_true_control(probe, cfg["seed"])
    spec = control.inverse_crime_setup(prob, cc["kind"], c_true, rho=cc["rho"], P_f=probe.P_f, P_q=probe.P_q,
                                       P_obs=probe.P_obs, obstacle_sides=probe.obstacle_sides)
    c0 = np.zeros(spec.n_controls)
    if spec.kind == "obstacle":
        c0 = spec.project(np.full(spec.n_controls, float(np.max(prob.solve(check_residual=False).u))))
    res = control.minimize(spec, c0, max_evals=cc["max_evals"])
    result = res.as_dict()
    result["true_control"] = c_true
    result["relative_errors"] = control.part_errors(spec, res.control, c_true)
    if spec.kind == "obstacle":
        result["active_set_match"] = bool(np.array_equal(control.active_set(spec, res.control),
                                                         control.active_set(spec, c_true)))
    rows = control.rho_sweep(spec, c_true, cc["rho_sweep"], max_evals=cc["max_evals"]) if cc["rho_sweep"] else []
    write_rows(os.path.join(out, "rho_sweep.csv"), ["rho", "error", "cost", "misfit"],
               [[r["rho"], r["error"], r["cost"], r["misfit"]] for r in rows])
    if cc["restarts"]:
        rs = control.ControlSpec(spec.kind, prob, spec.target, cc["restart_rho"], spec.P_f, spec.P_q, spec.P_obs,
                                 spec.obstacle_sides)
        costs, spread = control.restarts(rs, cc["restarts"], seed=cfg["seed"], max_evals=cc["max_evals"])
        result["restarts"] = {"rho": cc["restart_rho"], "best_costs": costs, "spread": spread}
    write_json(os.path.join(out, "control.json"), result)
    print(f"kind={spec.kind} misfit={res.misfit:.3e} errors={['%.3e' % e for e in result['relative_errors']]}")
    return 0


def cmd_field(args, cfg):
    out = _out(args)
    _echo(cfg, out)
    prob = config.build_problem(cfg)
    sol = prob.solve(check_residual=False)
    data = exterior.reconstruct_u2(sol, prob)
    fc = cfg["field"]
    c = data.bmesh.points.mean(axis=0)
    if fc["points"] is not None:
        pts = np.asarray(fc["points"], float)
    else:
        r = fc["grid"]["radius"] * data.bmesh.diameter()
        th = 2 * np.pi * np.arange(fc["grid"]["n"]) / fc["grid"]["n"]
        pts = c + r * np.column_stack([np.cos(th), np.sin(th)])
    exterior.write_field_csv(data, pts, os.path.join(out, "field.csv"))
    lap = exterior.fd_laplacian(data, pts, fc["delta"])
    res = exterior.transmission_residuals(sol, prob, data)
    rad = exterior.radiation_check(data)
    write_json(os.path.join(out, "field.json"), {"a": data.a, "total_flux": data.total_flux,
                                                  "max_fd_laplacian": float(np.max(np.abs(lap))),
                                                  "transmission": res, "radiation": rad})
    print(f"a={data.a:.6g} flux={data.total_flux:.6g} max|lap|={np.max(np.abs(lap)):.2e}")
    return 0


def cmd_spectra(args, cfg):
    out = _out(args)
    _echo(cfg, out)
    sc = cfg["spectra"]
    rows = []
    for n in sc["panels"]:
        ops = bem.assemble_boundary_operators(bem.BoundaryMesh.circle(sc["radius"], n))
        st = bem.assemble_steklov(ops)
        ev = bem.steklov_mode_eigenvalues(st, tuple(sc["modes"]))
        for m in sc["modes"]:
            exact = bem.circle_steklov_oracle(sc["radius"], m)
            rows.append([n, m, ev[m], exact, abs(ev[m] - exact) / exact])
    write_rows(os.path.join(out, "spectra.csv"), ["panels", "mode", "discrete", "exact", "rel_error"], rows)
    write_json(os.path.join(out, "spectra.json"), {"radius": sc["radius"], "rows": rows})
    for r in rows:
        print(f"panels={r[0]} mode={r[1]} rel_error={r[4]:.3e}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--fixture", help="named fixture (see 'list')")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="hvi_out", help="output directory")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hvicoupling", description="FEM-BEM hemivariational inequality experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", parents=[common], help="list shipped fixtures")
    s = sub.add_parser("solve", parents=[common], help="solve one problem")
    s.add_argument("--export-mesh", help="write the mesh in plain-text format")
    s = sub.add_parser("stability", parents=[common], help="perturbation stability study")
    s.add_argument("--kind", choices=["linear", "obstacle"])
    s.add_argument("--N", type=int)
    s = sub.add_parser("control", parents=[common], help="inverse-crime optimal control")
    s.add_argument("--kind", choices=list(control.KINDS))
    s.add_argument("--rho", type=float)
    sub.add_parser("field", parents=[common], help="evaluate the exterior field")
    sub.add_parser("spectra", parents=[common], help="Steklov spectrum on the circle")
    return p


COMMANDS = {"list": cmd_list, "solve": cmd_solve, "stability": cmd_stability, "control": cmd_control,
            "field": cmd_field, "spectra": cmd_spectra}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list":
        return cmd_list(args)
    try:
        cfg = load_config(args)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, cfg)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (hvi.SolverError, MeshError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":
    sys.exit(main())
