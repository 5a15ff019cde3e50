"""Command-line front end.

    isotet extract --field sphere:r=1 --tau 1e-3 --seed 7 -o out.obj
    isotet compare --field torus:R=1,r=0.25 --ref-mc 256 \
        --methods mcgrids:1e-3,mc:128,mt:64 -o results/

Field specs: sphere:r=..[,cx=..,cy=..,cz=..]; box:hx=..,hy=..,hz=..;
torus:R=..,r=..; gyroid:scale=..,thickness=..; bumps:amplitude=..,freq=..;
mesh:path=..[,sign=winding-number|pseudo-normal]; grid:path=..;
csg:union(a;b) with ';' separating child specs (also intersection,
difference).

Exit codes: 0 success, 1 I/O error, 2 usage/config error,
3 success with the refinement residual still above tau.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fields, meshio
from .errors import ConfigError, IsotetError
from .extract import TriangleMesh
from .mesh_sdf import MeshSdf
from .metrics import evaluate_mesh, render_table, write_report
from .metrics import baseline_marching_cubes, baseline_marching_tets_uniform
from .pipeline import PipelineConfig, run

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NONCONVERGED = 3


def _parse_kv(spec):
    out = {}
    if not spec:
        return out
    for part in spec.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_field(spec):
    """Build a field from its CLI spec string."""
    spec = spec.strip()
    if ":" not in spec:
        raise ConfigError(f"field spec {spec!r} needs a kind prefix like 'sphere:'")
    kind, rest = spec.split(":", 1)
    kind = kind.strip().lower()

    if kind == "csg":
        if "(" not in rest or not rest.endswith(")"):
            raise ConfigError("csg spec must look like csg:union(a;b)")
        op, inner = rest.split("(", 1)
        children = []
        depth = 0
        cur = []
        for ch in inner[:-1]:
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            if ch == ";" and depth == 0:
                children.append("".join(cur))
                cur = []
            else:
                cur.append(ch)
        if cur:
            children.append("".join(cur))
        return fields.Csg(op.strip(), [parse_field(c) for c in children])

    kv = _parse_kv(rest)

    def f(key, default=None):
        if key in kv:
            return float(kv[key])
        if default is None:
            raise ConfigError(f"field spec {spec!r} is missing {key}=")
        return default

    if kind == "sphere":
        return fields.Sphere(
            center=(f("cx", 0.0), f("cy", 0.0), f("cz", 0.0)), radius=f("r")
        )
    if kind == "box":
        return fields.Box(
            center=(f("cx", 0.0), f("cy", 0.0), f("cz", 0.0)),
            half_extents=(f("hx"), f("hy", kv.get("hx")), f("hz", kv.get("hx"))),
        )
    if kind == "torus":
        return fields.Torus(
            center=(f("cx", 0.0), f("cy", 0.0), f("cz", 0.0)),
            major_radius=f("R"),
            minor_radius=f("r"),
        )
    if kind == "gyroid":
        g = fields.Gyroid(scale=f("scale", np.pi), thickness=f("thickness", 0.0))
        g.closed_surface = False
        return g
    if kind == "bumps":
        b = fields.BumpSlab(
            amplitude=f("amplitude", 0.15),
            frequency=f("freq", 8.0),
            blend_width=f("blend", 0.25),
        )
        b.closed_surface = False
        return b
    if kind == "mesh":
        if "path" not in kv:
            raise ConfigError("mesh field needs path=")
        verts, tris = meshio.load_mesh(kv["path"])
        return MeshSdf(verts, tris, sign_policy=kv.get("sign"))
    if kind == "grid":
        if "path" not in kv:
            raise ConfigError("grid field needs path=")
        g = fields.SampledGrid.load(kv["path"])
        g.closed_surface = False
        return g
    raise ConfigError(f"unknown field kind {kind!r}")


def _parse_domain(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) == 1:
        h = parts[0]
        return (-h, -h, -h), (h, h, h)
    if len(parts) == 6:
        return tuple(parts[:3]), tuple(parts[3:])
    raise ConfigError("domain must be 'h' (for [-h,h]^3) or 'x0,y0,z0,x1,y1,z1'")


def _read_config_file(path):
    out = {}
    for line in open(path):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_CONFIG_KEYS = {
    "field": str, "domain": str, "alpha": float, "gamma": float, "tau": float,
    "vmin": float, "iters": int, "batch": int, "cvt_iters": int,
    "seed": int, "max_passes": int, "eps_merge": float, "eps_cvt": float,
    "no_cvt": bool, "no_midpoint": bool, "no_domain_check": bool,
}


def _make_config(args):
    values = {}
    if args.config:
        raw = _read_config_file(args.config)
        for k, v in raw.items():
            if k not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {k!r}")
            typ = _CONFIG_KEYS[k]
            values[k] = (v.lower() in ("1", "true", "yes")) if typ is bool else typ(v)
    # CLI flags override the file
    for k in _CONFIG_KEYS:
        flag = getattr(args, k, None)
        if flag is not None and flag is not False:
            values[k] = flag

    if "field" not in values:
        raise ConfigError("a field spec is required (--field or config file)")
    field = parse_field(values["field"])
    dmin, dmax = _parse_domain(values.get("domain", "1.5"))
    cfg = PipelineConfig(
        domain_min=dmin,
        domain_max=dmax,
        alpha=values.get("alpha", field.iso_value),
        gamma=values.get("gamma"),
        tau=values.get("tau", 1e-3),
        v_min=values.get("vmin"),
        generation_iters=values.get("iters", 20),
        batch_size=values.get("batch", 64),
        cvt_iters=values.get("cvt_iters", 3),
        seed=values.get("seed", 0),
        max_refine_passes=values.get("max_passes", 64),
        eps_merge=values.get("eps_merge"),
        eps_cvt=values.get("eps_cvt"),
        use_cvt=not values.get("no_cvt", False),
        use_refinement=not values.get("no_midpoint", False),
        validate_domain=not values.get("no_domain_check", False),
    )
    return field, cfg


def _add_common_flags(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--field", help="field spec (see module help)")
    p.add_argument("--domain", help="'h' for [-h,h]^3 or 'x0,y0,z0,x1,y1,z1'")
    p.add_argument("--alpha", type=float, help="iso-value")
    p.add_argument("--gamma", type=float, help="density bandwidth")
    p.add_argument("--tau", help="midpoint residual threshold (or comma list for compare)")
    p.add_argument("--vmin", type=float, help="tet volume floor")
    p.add_argument("--iters", type=int, help="generation iterations")
    p.add_argument("--batch", type=int, help="samples per generation iteration")
    p.add_argument("--cvt-iters", dest="cvt_iters", type=int, help="Lloyd steps per point")
    p.add_argument("--no-cvt", dest="no_cvt", action="store_true", help="disable relaxation")
    p.add_argument("--no-midpoint", dest="no_midpoint", action="store_true",
                   help="skip the refinement phase")
    p.add_argument("--no-domain-check", dest="no_domain_check", action="store_true",
                   help="skip the boundary sign validation")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--max-passes", dest="max_passes", type=int,
                   help="refinement pass cap")


def cmd_extract(args):
    try:
        tau = float(args.tau) if args.tau is not None else None
        if tau is not None:
            args.tau = tau
        field, cfg = _make_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_path = Path(args.output)
    grid_out = {} if args.dump_grid else None
    try:
        mesh, stats, trace = run(field, cfg, grid_out=grid_out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        mesh.save(out_path, with_normals=args.normals)
        report_path = (
            Path(args.report) if args.report else out_path.with_suffix(".report.txt")
        )
        write_report(report_path, stats.deterministic_dict())
        trace_path = out_path.with_suffix(".trace.txt")
        with open(trace_path, "w") as fh:
            fh.write("\n".join(trace) + "\n")
        if args.dump_grid:
            grid_out["tri"].dump_text(out_path.with_suffix(".grid.txt"))
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    print(
        f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles -> {out_path}"
    )
    print(
        f"queries: {stats.queries} (corners {stats.corner_queries}, "
        f"inserted {stats.inserted}, probes {stats.probes}); "
        f"time {stats.wall_time:.2f}s",
        file=sys.stderr,
    )
    if not stats.converged:
        print("warning: residual above tau at the pass cap", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _reference_mesh(args, field, cfg):
    if args.ref_mesh:
        verts, tris = meshio.load_mesh(args.ref_mesh)
        return TriangleMesh(verts, tris, {})
    resolution = args.ref_mc or 256
    with field.counting("reference"):
        mesh, _ = baseline_marching_cubes(
            field, resolution, cfg.domain_min, cfg.domain_max, cfg.alpha
        )
    return mesh


def cmd_compare(args):
    try:
        taus = [float(t) for t in str(args.tau).split(",")] if args.tau else [1e-3]
        args.tau = taus[0]
        field, cfg = _make_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    methods = []
    for m in (args.methods or "mcgrids").split(","):
        m = m.strip()
        if not m:
            continue
        if m.startswith("mcgrids"):
            if ":" in m:
                for t in m.split(":", 1)[1].split("+"):
                    methods.append(("mcgrids", float(t)))
            else:
                methods.extend(("mcgrids", t) for t in taus)
        elif m.startswith(("mc:", "mt:")):
            kind, res = m.split(":", 1)
            methods.append((kind, int(res)))
        else:
            print(f"error: unknown method {m!r}", file=sys.stderr)
            return EXIT_USAGE

    out_dir = Path(args.output or "compare-out")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        reference = _reference_mesh(args, field, cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_USAGE

    rows = []
    for kind, param in methods:
        import dataclasses

        if kind == "mcgrids":
            run_cfg = dataclasses.replace(cfg, tau=float(param))
            mesh, stats, _ = run(field, run_cfg)
            name = f"mcgrids:{param:g}" + ("" if cfg.use_cvt else ":no-cvt")
            queries = stats.queries
            wall = stats.wall_time
            memory = stats.peak_memory
        else:
            with field.counting("baseline"):
                fn = (
                    baseline_marching_cubes
                    if kind == "mc"
                    else baseline_marching_tets_uniform
                )
                mesh, rep = fn(
                    field, int(param), cfg.domain_min, cfg.domain_max, cfg.alpha
                )
            name = f"{kind}:{param}"
            queries = rep.queries
            wall = rep.wall_time
            memory = rep.peak_memory
        if mesh.n_triangles == 0:
            print(f"warning: {name} produced an empty mesh; skipped", file=sys.stderr)
            continue
        with field.counting("metrics"):
            report = evaluate_mesh(mesh, reference, seed=cfg.seed)
        mesh.save(out_dir / (name.replace(":", "_") + ".obj"))
        rows.append(
            {
                "method": name,
                "cd": report.cd,
                "nc": report.nc,
                "ecd": report.ecd,
                "f1": report.f1,
                "ef1": report.ef1,
                "queries": queries,
                "time_s": wall,
                "memory_mb": memory / 1e6,
            }
        )

    table = render_table(rows)
    print(table)
    try:
        with open(out_dir / "comparison.txt", "w") as fh:
            fh.write(table + "\n")
        with open(out_dir / "comparison.tsv", "w") as fh:
            if rows:
                keys = list(rows[0])
                fh.write("\t".join(keys) + "\n")
                for row in rows:
                    fh.write("\t".join(str(row[k]) for k in keys) + "\n")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="isotet",
        description="Adaptive tetrahedral-grid iso-surface extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ext = sub.add_parser("extract", help="extract a mesh from an implicit field")
    _add_common_flags(p_ext)
    p_ext.add_argument("-o", "--output", required=True, help="output mesh (.obj/.ply)")
    p_ext.add_argument("--report", help="report path (default: alongside the mesh)")
    p_ext.add_argument("--normals", action="store_true", help="write vertex normals")
    p_ext.add_argument("--dump-grid", dest="dump_grid", action="store_true",
                       help="dump the tetrahedral grid as text")
    p_ext.set_defaults(func=cmd_extract)

    p_cmp = sub.add_parser("compare", help="compare methods against a reference")
    _add_common_flags(p_cmp)
    p_cmp.add_argument("-o", "--output", help="output directory")
    p_cmp.add_argument("--methods", help="comma list: mcgrids[:tau], mc:N, mt:N")
    p_cmp.add_argument("--ref-mesh", dest="ref_mesh", help="reference mesh file")
    p_cmp.add_argument("--ref-mc", dest="ref_mc", type=int,
                       help="build reference by dense MC at this resolution")
    p_cmp.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IsotetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
