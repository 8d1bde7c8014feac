"""Command-line front end.

Verbs: `mesh gen`, `check`, `dot`, `compose`, `simulate`, `export`.
Exit codes: 0 success, 1 I/O error, 2 model or validation error,
3 numerical divergence.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import compiler, dec, figures, ir, solver
from .compose import OpenModel, apply_pattern, load_pattern
from .errors import DecsimError, DivergedError, NotCompilableError
from .mesh import BARYCENTRIC, build_dual, generate_grid, load_obj, save_obj
from .parser import parse_equations

EXIT_OK = 0
EXIT_IO = 1
EXIT_MODEL = 2
EXIT_DIVERGED = 3


def load_model(path):
    """A model file is either equation source (.eqs) or a table dump (.json)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return ir.loads(text)
    return parse_equations(text)


def _split_names(values):
    names = []
    for v in values:
        names.extend(x for x in v.split(",") if x)
    return names


# ---------------------------------------------------------------------------
# mesh

def cmd_mesh_gen(args):
    try:
        mesh = generate_grid(args.nx, args.ny, args.lx, args.ly)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    save_obj(mesh, args.out)
    print(f"V={mesh.n_vertices} E={mesh.n_edges} F={mesh.n_triangles}")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check / dot

def cmd_check(args):
    model = load_model(args.model)
    state = _split_names(args.state)
    report = ir.validate(model, state)
    if not report.ok:
        for v in report.violations:
            print(v.message)
        return EXIT_MODEL
    schedule = compiler.build_schedule(model, state, validated=True)
    print(f"ok: {len(schedule.calls)} calls")
    print(schedule.listing(), end="")
    if args.emit_schedule:
        text = schedule.to_json() + "\n"
        if args.emit_schedule == "-":
            sys.stdout.write(text)
        else:
            with open(args.emit_schedule, "w", encoding="utf-8") as fh:
                fh.write(text)
            print(f"wrote {args.emit_schedule}")
    return EXIT_OK


def cmd_dot(args):
    model = load_model(args.model)
    text = ir.to_dot(model)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# compose

def load_component(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    if "model" in doc:
        system = load_model(os.path.join(base, doc["model"]))
    elif "equations" in doc:
        system = parse_equations("\n".join(doc["equations"]))
    else:
        raise ValueError(f"{path}: component needs a 'model' path or 'equations'")
    return OpenModel(system, list(doc["exposed"]))


def cmd_compose(args):
    pattern = load_pattern(args.pattern)
    components = [load_component(p) for p in args.components]
    composite = apply_pattern(pattern, components)
    text = ir.dumps(composite) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out} ({len(composite.vars)} variables)")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

_EXPR_NAMES = {
    "pi": math.pi, "e": math.e,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "log": np.log,
}


def _eval_expr(expr, mesh, form, t):
    """Evaluate an expression over simplex centroid coordinates."""
    if form.dual:
        raise ValueError("expression initialization is for primal forms")
    if form.degree == 0:
        pts = mesh.vertices
    elif form.degree == 1:
        pts = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    else:
        pts = mesh.vertices[mesh.triangles].mean(axis=1)
    names = dict(_EXPR_NAMES)
    names["x"] = pts[:, 0]
    names["y"] = pts[:, 1]
    names["t"] = t
    values = eval(expr, {"__builtins__": {}}, names)  # noqa: S307 - restricted namespace
    return np.broadcast_to(np.asarray(values, dtype=np.float64), (len(pts),)).copy()


def _field_values(spec, mesh, form, t):
    if isinstance(spec, dict) and "expr" in spec:
        return _eval_expr(spec["expr"], mesh, form, t)
    if isinstance(spec, dict) and "constant" in spec:
        return np.full(form.dim(mesh), float(spec["constant"]))
    if isinstance(spec, dict) and "values" in spec:
        v = np.asarray(spec["values"], dtype=np.float64)
        if len(v) != form.dim(mesh):
            raise ValueError(f"init values length {len(v)} != {form.dim(mesh)}")
        return v
    if isinstance(spec, (int, float)):
        return np.full(form.dim(mesh), float(spec))
    raise ValueError(f"cannot interpret field spec {spec!r}")


def _mask_indices(where, mesh, form):
    if isinstance(where, list):
        return np.asarray(where, dtype=np.int64)
    if where == "boundary_vertices":
        return np.nonzero(mesh.boundary_vertex_flags)[0]
    if where == "boundary_edges":
        return np.nonzero(mesh.boundary_edge_flags)[0]
    raise ValueError(f"unknown mask selector {where!r}")


def _resolve_mask_target(name, schedule):
    """Allow `∂ₜ(X)` / `dt(X)` to address the tangent variable of X."""
    for prefix in ("∂ₜ(", "dt("):
        if name.startswith(prefix) and name.endswith(")"):
            state = name[len(prefix):-1]
            for tangent, s in schedule.tangent_vars:
                if s == state:
                    return tangent
            raise ValueError(f"no tangent variable for state {state!r}")
    return name


def _manifest_mesh(doc, base):
    spec = doc["mesh"]
    if "grid" in spec:
        g = spec["grid"]
        return generate_grid(g["nx"], g["ny"], g.get("lx", 1.0), g.get("ly", 1.0))
    if "obj" in spec:
        return load_obj(os.path.join(base, spec["obj"]))
    raise ValueError("manifest mesh needs a 'grid' or 'obj' entry")


def _manifest_model(doc, base):
    if "model" in doc:
        return load_model(os.path.join(base, doc["model"]))
    if "compose" in doc:
        comp = doc["compose"]
        pattern = load_pattern(os.path.join(base, comp["pattern"]))
        components = [load_component(os.path.join(base, p))
                      for p in comp["components"]]
        return apply_pattern(pattern, components)
    raise ValueError("manifest needs a 'model' path or a 'compose' entry")


def run_manifest(path, emit_dot=False):
    """Execute a simulation manifest; returns (exit code, summary lines)."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)

    mesh = _manifest_mesh(doc, base)
    dual = build_dual(mesh, doc.get("dual", BARYCENTRIC))
    variant = doc.get("hodge", dec.GEOMETRIC)
    model = _manifest_model(doc, base)
    state_names = list(doc["state"])
    params = doc.get("params", {})

    report = ir.validate(model, state_names)
    if not report.ok:
        return EXIT_MODEL, [v.message for v in report.violations]
    schedule = compiler.build_schedule(model, state_names, validated=True)

    masks = []
    for m in doc.get("masks", []):
        target = _resolve_mask_target(m["target"], schedule)
        ty = schedule.var_types.get(target, "Infer")
        form = dec.FORM_TYPES.get(ty, dec.FormType(0))
        indices = _mask_indices(m.get("where", "boundary_vertices"), mesh, form)
        mode = m.get("mode", compiler.SET_ZERO)
        values = m.get("value")
        if mode == compiler.SET_VALUE and values is not None \
                and not isinstance(values, list):
            values = np.full(len(indices), float(values))
        masks.append(compiler.BoundaryMask(target, indices, mode, values))
    schedule = compiler.attach_masks(schedule, masks, mesh)

    registry = compiler.default_registry(mesh, dual, variant)
    program = compiler.bind(schedule, registry, mesh, dual, params)

    solver_doc = dict(doc.get("solver", {}))
    dt = solver_doc.get("dt", 1e-3)
    if isinstance(dt, dict):
        k_name = dt.get("diffusivity_param", "k")
        k = float(params.get(k_name, 1.0))
        dt = solver.diffusion_cfl_dt(mesh, k, dt.get("cfl", 0.2))
    cfg = solver.SolverConfig(
        method=solver_doc.get("method", solver.RK4),
        dt=float(dt),
        t_end=float(solver_doc.get("t_end", 1.0)),
        record_every=int(solver_doc.get("record_every", 1)),
        divergence_threshold=float(solver_doc.get("divergence_threshold", 1e12)),
    )

    init_doc = doc.get("init", {})
    cochains = {}
    for name in state_names:
        ty = schedule.var_types.get(name, "Form0")
        form = dec.FORM_TYPES.get(ty, dec.FormType(0))
        if name in init_doc:
            values = _field_values(init_doc[name], mesh, form, 0.0)
        else:
            values = np.zeros(form.dim(mesh))
        cochains[name] = dec.Cochain(form, values)
    init = solver.SimState(cochains, 0.0)

    summary = [f"mesh: V={mesh.n_vertices} E={mesh.n_edges} F={mesh.n_triangles}",
               f"schedule: {len(schedule.calls)} calls, dt={cfg.dt!r}, "
               f"t_end={cfg.t_end!r}, method={cfg.method}"]

    try:
        traj = solver.integrate(program, init, cfg)
    except DivergedError as exc:
        return EXIT_DIVERGED, summary + [f"diverged: {exc}"]

    out_doc = doc.get("output", {})
    out_csv = os.path.join(base, out_doc.get("csv", "trajectory.csv"))
    os.makedirs(os.path.dirname(out_csv) or ".", exist_ok=True)
    solver.write_csv(traj, out_csv)
    summary.append(f"wrote {out_csv}")

    if out_doc.get("vtk"):
        vtk_dir = os.path.join(base, out_doc["vtk"])
        paths = solver.write_vtk_series(traj, mesh, vtk_dir)
        summary.append(f"wrote {len(paths)} VTK snapshots to {vtk_dir}")

    fig_dir = out_doc.get("figures")
    if fig_dir is not None:
        fig_dir = os.path.join(base, fig_dir)
        os.makedirs(fig_dir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(out_csv))[0]
        final = traj.final()
        for name in state_names:
            c = final.cochains[name]
            if c.form.degree == 0 and not c.form.dual:
                p = figures.save_field_figure(
                    mesh, c.values, os.path.join(fig_dir, f"{stem}_{name}_final.png"),
                    title=f"{name} at t={traj.times[-1]:g}")
                summary.append(f"wrote {p}")
            series = figures.trajectory_series(traj, name)
            p = figures.save_series_figure(
                traj.times, series, os.path.join(fig_dir, f"{stem}_{name}_series.png"))
            summary.append(f"wrote {p}")

    if emit_dot or out_doc.get("dot"):
        dot_path = os.path.join(base, out_doc.get(
            "dot", os.path.splitext(out_csv)[0] + ".dot"))
        with open(dot_path, "w", encoding="utf-8") as fh:
            fh.write(ir.to_dot(model))
        summary.append(f"wrote {dot_path}")

    final = traj.final()
    star0 = dec.hodge_star(dual, 0, dec.DIAGONAL)
    for name in state_names:
        c = final.cochains[name]
        line = (f"final {name}: min={float(np.min(c.values))!r} "
                f"max={float(np.max(c.values))!r}")
        if c.form.degree == 0 and not c.form.dual:
            line += f" total={solver.total_quantity(final, name, star0)!r}"
        summary.append(line)

    for name, spec in doc.get("reference", {}).items():
        c = final.cochains[name]
        ref = _field_values(spec, mesh, c.form, traj.times[-1])
        denom = float(np.linalg.norm(ref))
        rel = float(np.linalg.norm(c.values - ref)) / denom if denom else float("nan")
        summary.append(f"relative L2 error vs reference [{name}]: {rel:.6f}")

    return EXIT_OK, summary


def cmd_simulate(args):
    code, lines = run_manifest(args.manifest, emit_dot=args.emit_dot)
    for line in lines:
        print(line)
    return code


# ---------------------------------------------------------------------------
# export

def _export_mesh_from_args(args):
    if args.grid:
        nx, ny = args.grid
        return generate_grid(nx, ny, args.lx, args.ly)
    if args.mesh:
        return load_obj(args.mesh)
    raise ValueError("need --grid NX NY or --mesh FILE")


_EXPORT_OPS = ("d0", "d1", "dual_d0", "dual_d1", "star0", "star1", "star2",
               "inv_star0", "inv_star1", "inv_star2", "laplacian0")


def cmd_export(args):
    mesh = _export_mesh_from_args(args)
    if args.what == "mesh":
        save_obj(mesh, args.out)
        print(f"wrote {args.out}")
        return EXIT_OK
    dual = build_dual(mesh, args.dual)
    variant = args.variant
    name = args.op
    if name in ("d0", "d1"):
        op = dec.exterior_derivative(mesh, int(name[-1]))
    elif name in ("dual_d0", "dual_d1"):
        op = dec.dual_derivative(mesh, int(name[-1]))
    elif name.startswith("inv_star"):
        op = dec.inverse_hodge_star(dual, int(name[-1]), variant)
    elif name.startswith("star"):
        op = dec.hodge_star(dual, int(name[-1]), variant)
    elif name == "laplacian0":
        op = dec.laplacian0(mesh, dual, variant)
    else:
        raise ValueError(f"unknown operator {name!r}")
    dec.write_matrix_market(op, args.out)
    print(f"wrote {args.out} ({op.matrix.shape[0]}x{op.matrix.shape[1]}, "
          f"{op.matrix.nnz} nonzeros)")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="decsim",
        description="Compile diagrammatic exterior-calculus equations into "
                    "executable simulations on triangle meshes.")
    sub = p.add_subparsers(dest="verb", required=True)

    mesh_p = sub.add_parser("mesh", help="mesh utilities")
    mesh_sub = mesh_p.add_subparsers(dest="mesh_verb", required=True)
    gen = mesh_sub.add_parser("gen", help="generate a structured grid OBJ")
    gen.add_argument("--nx", type=int, required=True)
    gen.add_argument("--ny", type=int, required=True)
    gen.add_argument("--lx", type=float, default=1.0)
    gen.add_argument("--ly", type=float, default=1.0)
    gen.add_argument("--out", default="mesh.obj")
    gen.set_defaults(fn=cmd_mesh_gen)

    check = sub.add_parser("check", help="validate a model and print its schedule")
    check.add_argument("model")
    check.add_argument("--state", action="append", required=True,
                       help="state variable name (repeatable or comma-separated)")
    check.add_argument("--emit-schedule", metavar="PATH",
                       help="write the schedule as a JSON call array ('-' = stdout)")
    check.set_defaults(fn=cmd_check)

    dot = sub.add_parser("dot", help="render a model as DOT")
    dot.add_argument("model")
    dot.add_argument("--out")
    dot.set_defaults(fn=cmd_dot)

    comp = sub.add_parser("compose", help="glue component models along a pattern")
    comp.add_argument("pattern")
    comp.add_argument("components", nargs="+")
    comp.add_argument("--out")
    comp.set_defaults(fn=cmd_compose)

    sim = sub.add_parser("simulate", help="run a simulation manifest")
    sim.add_argument("manifest")
    sim.add_argument("--emit-dot", action="store_true",
                     help="also write the model graph as DOT")
    sim.set_defaults(fn=cmd_simulate)

    exp = sub.add_parser("export", help="write meshes or operator matrices")
    exp.add_argument("what", choices=("mesh", "matrix"))
    exp.add_argument("--grid", nargs=2, type=int, metavar=("NX", "NY"))
    exp.add_argument("--lx", type=float, default=1.0)
    exp.add_argument("--ly", type=float, default=1.0)
    exp.add_argument("--mesh", help="input OBJ path")
    exp.add_argument("--dual", default=BARYCENTRIC,
                     choices=("barycentric", "circumcentric"))
    exp.add_argument("--variant", default=dec.DIAGONAL,
                     choices=(dec.DIAGONAL, dec.GEOMETRIC))
    exp.add_argument("--op", choices=_EXPORT_OPS, default="laplacian0")
    exp.add_argument("--out", required=True)
    exp.set_defaults(fn=cmd_export)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergedError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NotCompilableError as exc:
        for v in exc.report.violations:
            print(v.message, file=sys.stderr)
        return EXIT_MODEL
    except (DecsimError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
