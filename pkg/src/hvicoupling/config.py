"""Run configuration: defaults, validation, fixture registry and problem assembly.

A configuration is a nested mapping (read from YAML by the CLI). Validation
fills every default and raises ConfigError before any computation starts.
"""

import copy

import numpy as np

from .fem import NonlinearityP
from .geometry import (Mesh2D, PolygonSpec, build_mesh, dof_maps, read_mesh, refine_uniform,
                       regular_polygon_spec, rescale_for_capacity, square_spec)
from .hvi import ExtendedF, assemble_problem
from .superpotential import FrictionLaw


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "geometry": {"kind": "square", "side": 0.6, "gamma_s_sides": [0], "n": 8, "radius": 0.35,
                 "gamma_s_arc": [0, 3], "vertices": None, "path": None, "h": 0.1, "refine": 0},
    "nonlinearity": {"kind": "rational", "a": 2.0, "b": 1.0},
    "friction": {"mu1": 2.0, "mu2": 1.0, "alpha": 1.0},
    "data": {"f": "5", "q": "3*cos(7*x) + 2*y"},
    "obstacle": {"lower": None, "upper": None},
    "solver": {"tol": 1e-11, "inner_tol": 1e-11, "max_outer": 200, "residual_directions": 200},
    "stability": {"kind": "linear", "N": 8, "decay": 10.0, "mode": "widen", "level": 0.6},
    "control": {"kind": "distributed", "rho": 1e-8, "true_control": None, "patches": [4, 4], "segments": 8,
                "obstacle_patches": [2, 2], "obstacle_sides": ["upper"], "max_evals": 1500, "restarts": 0, "restart_rho": 1e-3,
                "rho_sweep": [1e-2, 1e-4, 1e-8]},
    "field": {"points": None, "grid": {"radius": 1.0, "n": 32}, "delta": 0.01},
    "spectra": {"radius": 0.25, "panels": [32, 64, 128, 256], "modes": [1, 2, 3, 4]},
    "seed": 0,
}

_SAFE = {k: getattr(np, k) for k in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "tanh",
                                      "arctan", "arctan2", "minimum", "maximum", "where", "hypot")}


def field_function(expr):
    """Number or expression string in x, y (numpy functions, no builtins)."""
    if expr is None:
        return None
    if isinstance(expr, (int, float)):
        val = float(expr)
        return lambda x, y: np.full(np.shape(x), val)
    if not isinstance(expr, str):
        raise ConfigError(f"field must be a number or an expression string, got {expr!r}")
    try:
        code = compile(expr, "<field>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse field expression {expr!r}: {exc.msg}") from exc
    bad = set(code.co_names) - set(_SAFE) - {"x", "y"}
    if bad:
        raise ConfigError(f"unknown names in field expression {expr!r}: {sorted(bad)}")

    def fn(x, y):
        return np.broadcast_to(eval(code, {"__builtins__": {}}, dict(_SAFE, x=x, y=y)), np.shape(x)).astype(float)

    return fn


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + str(k)!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("friction",):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(cfg, *keys):
    for k in keys:
        sec, name = k.split(".")
        val = cfg[sec][name]
        if not isinstance(val, (int, float)) or not val > 0:
            raise ConfigError(f"{k} must be positive (got {val!r})")


def resolve_config(user=None):
    """Merge with defaults and validate; returns a fully populated config."""
    if user is not None and not isinstance(user, dict):
        raise ConfigError("config must be a mapping")
    user = dict(user or {})
    cfg = _merge(DEFAULTS, user)
    if "friction" in user and user["friction"] is not None:
        cfg["friction"] = _merge({"mu1": None, "mu2": None, "alpha": None}, user["friction"], "friction.")
    g = cfg["geometry"]
    if g["kind"] not in ("square", "polygon", "vertices", "mesh_file"):
        raise ConfigError(f"geometry.kind must be square, polygon, vertices or mesh_file (got {g['kind']!r})")
    _positive(cfg, "geometry.h", "solver.tol", "solver.inner_tol", "solver.max_outer", "control.rho")
    if not isinstance(g["refine"], int) or g["refine"] < 0:
        raise ConfigError("geometry.refine must be a nonnegative integer")
    nl = cfg["nonlinearity"]
    try:
        NonlinearityP(nl["kind"], float(nl["a"]), float(nl.get("b", 0.0) or 0.0))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"nonlinearity: {exc}") from exc
    fr = cfg["friction"]
    if fr is not None:
        try:
            FrictionLaw(float(fr["mu1"]), float(fr["mu2"]), float(fr["alpha"]))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"friction: {exc}") from exc
    for key in ("f", "q"):
        field_function(cfg["data"][key])
    for key in ("lower", "upper"):
        field_function(cfg["obstacle"][key])
    st = cfg["stability"]
    if st["kind"] not in ("linear", "obstacle"):
        raise ConfigError("stability.kind must be linear or obstacle")
    if not isinstance(st["N"], int) or st["N"] < 1:
        raise ConfigError("stability.N must be a positive integer")
    if not float(st["decay"]) > 1:
        raise ConfigError("stability.decay is the base b of decay(n) = b^-n and must exceed 1")
    from .control import KINDS
    if cfg["control"]["kind"] not in KINDS:
        raise ConfigError(f"control.kind must be one of {KINDS}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    return cfg


# -- fixtures -------------------------------------------------------------------

FIXTURES = {
    "square-nonmonotone": ("canonical HVI fixture: square, rational p, nonmonotone friction on one side", {}),
    "square-linear": ("square, p = 1, J = 0 (linear FEM-BEM coupling oracle)",
                      {"nonlinearity": {"kind": "linear", "a": 1.0, "b": 0.0}, "friction": None}),
    "square-smooth": ("square, rational p, J = 0 (smooth nonlinear)", {"friction": None}),
    "square-obstacle": ("square, nonmonotone friction, upper obstacle u <= 0.3",
                        {"obstacle": {"upper": 0.3}}),
    "circle-nonmonotone": ("16-gon of radius 0.35 with friction on a 6-edge arc",
                           {"geometry": {"kind": "polygon", "n": 16, "radius": 0.35, "gamma_s_arc": [0, 6], "h": 0.1}}),
    "octagon-smooth": ("octagon, rational p, J = 0",
                       {"geometry": {"kind": "polygon", "n": 8, "radius": 0.35, "gamma_s_arc": [0, 3]},
                        "friction": None}),
    "circle-spectral": ("circle of radius 0.25, boundary elements only (Steklov spectrum oracle)",
                        {"geometry": {"kind": "polygon", "n": 128, "radius": 0.25, "gamma_s_arc": [0, 8], "h": 0.05}}),
    "refinement-square": ("nested uniform refinements of a coarse square for residual studies",
                          {"geometry": {"h": 0.17, "refine": 1}}),
    "ocp1-inverse-crime": ("distributed control inverse crime on a coarse square, 4x4 control patches",
                           {"geometry": {"h": 0.15}, "control": {"kind": "distributed", "rho": 1e-8}}),
    "ocp2-inverse-crime": ("boundary control inverse crime, 8 boundary segments",
                           {"geometry": {"h": 0.15}, "control": {"kind": "boundary", "rho": 1e-8}}),
    "ocp3-inverse-crime": ("joint load and boundary control inverse crime",
                           {"geometry": {"h": 0.15}, "control": {"kind": "distributed_boundary", "rho": 1e-8}}),
    "ocp4-obstacle": ("obstacle control with a binding upper obstacle, 2x2 patches",
                      {"geometry": {"h": 0.15}, "control": {"kind": "obstacle", "rho": 1e-8}}),
}

TINY = {
    "tiny-quadratic": "five-node square, p = 1, J = 0 (convex quadratic)",
    "tiny-kink": "five-node square, friction with load balanced inside [-mu1, mu1] (stick)",
    "tiny-slip": "five-node square, friction with a large boundary datum (slip)",
    "tiny-triangle": "four-node triangle, rational p, friction",
    "tiny-pinned": "five-node square, friction, all nodes pinned by u_lo = u_hi = 0",
}


def list_fixtures():
    rows = [(k, v[0]) for k, v in FIXTURES.items()] + list(TINY.items())
    return sorted(rows)


def fixture_config(name):
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; try 'list'")
    return resolve_config(FIXTURES[name][1])


def build_mesh_from_config(cfg):
    g = cfg["geometry"]
    if g["kind"] == "mesh_file":
        if not g["path"]:
            raise ConfigError("geometry.path is required for mesh_file")
        mesh = read_mesh(g["path"])
    else:
        if g["kind"] == "square":
            spec = square_spec(float(g["side"]), tuple(g["gamma_s_sides"]))
        elif g["kind"] == "polygon":
            spec = regular_polygon_spec(int(g["n"]), float(g["radius"]), tuple(g["gamma_s_arc"]))
        else:
            spec = PolygonSpec(np.asarray(g["vertices"], float), [tuple(a) for a in g["gamma_s_arcs"]])
        mesh = build_mesh(spec, float(g["h"]))
    for _ in range(g["refine"]):
        mesh = refine_uniform(mesh)
    mesh, _ = rescale_for_capacity(mesh)
    return mesh


def build_problem(cfg, mesh=None):
    mesh = build_mesh_from_config(cfg) if mesh is None else mesh
    nl = cfg["nonlinearity"]
    p = NonlinearityP(nl["kind"], float(nl["a"]), float(nl.get("b", 0.0) or 0.0))
    fr = cfg["friction"]
    law = None if fr is None else FrictionLaw(float(fr["mu1"]), float(fr["mu2"]), float(fr["alpha"]))
    ob = cfg["obstacle"]
    F = None
    if ob["lower"] is not None or ob["upper"] is not None:
        x, y = mesh.nodes.T
        lo = field_function(ob["lower"])(x, y) if ob["lower"] is not None else None
        hi = field_function(ob["upper"])(x, y) if ob["upper"] is not None else None
        F = ExtendedF(lower=lo, upper=hi)
    return assemble_problem(mesh, nl=p, law=law, f=field_function(cfg["data"]["f"]),
                            q=field_function(cfg["data"]["q"]), extended_F=F)


# -- tiny fixtures (at most six unknowns) ----------------------------------------

def _tiny_square():
    nodes = np.array([[0.0, 0.0], [0.25, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
    tris = np.array([[0, 1, 4], [1, 3, 4], [1, 2, 3]])
    be = np.column_stack([np.arange(5), (np.arange(5) + 1) % 5])
    return Mesh2D(nodes, tris, be, np.array(["S", "S", "T", "T", "T"]))


def _tiny_triangle():
    nodes = np.array([[0.0, 0.0], [0.3, 0.0], [0.6, 0.0], [0.3, 0.5]])
    tris = np.array([[0, 1, 3], [1, 2, 3]])
    be = np.column_stack([np.arange(4), (np.arange(4) + 1) % 4])
    return Mesh2D(nodes, tris, be, np.array(["S", "S", "T", "T"]))


def tiny_problem(name):
    """Problems with at most six unknowns for the brute-force oracle."""
    law = FrictionLaw(1.0, 0.5, 0.5)
    if name == "tiny-quadratic":
        return assemble_problem(_tiny_square(), f=lambda x, y: 1.0 + x, q=lambda x, y: 0.5 - y)
    if name == "tiny-kink":
        return assemble_problem(_tiny_square(), nl=NonlinearityP.rational(2.0, 1.0), law=law,
                                f=lambda x, y: 1.0 + 0 * x, q=lambda x, y: 0.2 + 0 * x)
    if name == "tiny-slip":
        return assemble_problem(_tiny_square(), nl=NonlinearityP.rational(2.0, 1.0), law=law,
                                f=lambda x, y: 1.0 + 0 * x, q=lambda x, y: 12.0 * (0.5 - y) + 8.0 * x)
    if name == "tiny-triangle":
        return assemble_problem(_tiny_triangle(), nl=NonlinearityP.rational(2.0, 1.0), law=law,
                                f=lambda x, y: 2.0 + 0 * x, q=lambda x, y: 5.0 * (1.0 - 3.0 * y))
    if name == "tiny-pinned":
        m = _tiny_square()
        z = np.zeros(m.n_nodes)
        return assemble_problem(m, nl=NonlinearityP.rational(2.0, 1.0), law=law,
                                f=lambda x, y: 1.0 + 0 * x, q=lambda x, y: 6.0 * (0.5 - y),
                                extended_F=ExtendedF(lower=z, upper=z))
    raise ConfigError(f"unknown tiny fixture {name!r}")


def dof_summary(prob):
    d = dof_maps(prob.mesh)
    return {"nodes": prob.mesh.n_nodes, "gamma_s_dofs": d.n_gamma_s, "unknowns": prob.size}
