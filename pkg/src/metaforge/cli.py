"""Command-line surface: precompute / fit / discover / sample / eval / export.

Every command is deterministic under a fixed --seed (no timestamps, sorted
directory listings, seeded sampling). Exit codes: 0 success, 2 I/O or file
format, 3 violated precondition or bad configuration, 4 quality gate.
"""

from __future__ import annotations

import argparse
import sys
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import bundle_from_parts, read_bundle, write_bundle, write_bundle_text
from .config import load_config
from .deform import combine_handles, sample_coefficients
from .discover import discover_subspace
from .errors import (
    BundleFormatError,
    DegenerateGeometryError,
    DivergenceError,
    EmptyMeshError,
    MeshFormatError,
    PreconditionError,
    QualityGateError,
    RankDeficiencyError,
)
from .fit import fit_full_offsets, fit_subspace_coefficients
from .handles import (
    ControlPointSet,
    DeformCoordinates,
    compute_biharmonic_coordinates,
    geodesic_fps,
    interpolate_coordinates,
)
from .losses import chamfer
from .mesh import cotangent_laplacian, edge_graph, load_mesh, sample_surface, save_obj
from .metrics import EvalReport

_MESH_SUFFIXES = (".obj", ".off")


def _fmt(x):
    return repr(float(x))


def _write_record(path, lines):
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _source_cloud(mesh, coords, config):
    """Point samples on the source surface plus interpolated coordinates."""
    cloud = sample_surface(mesh, config.p, np.random.SeedSequence([config.seed, 0]))
    return cloud, interpolate_coordinates(mesh, coords, cloud)


def _target_points(path, config, stream=1):
    target_mesh = load_mesh(path)
    cloud = sample_surface(target_mesh, config.p, np.random.SeedSequence([config.seed, stream]))
    return cloud.points


def _list_meshes(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(
        (p for p in directory.iterdir() if p.suffix.lower() in _MESH_SUFFIXES),
        key=lambda p: p.name,
    )


# -- precompute -----------------------------------------------------------


def _load_external_coords(path, mesh):
    """Coordinates injected from a .npz with arrays 'W' (n,c) and 'control_indices' (c,)."""
    with np.load(path) as data:
        if "W" not in data or "control_indices" not in data:
            raise PreconditionError(f"{path}: needs arrays 'W' and 'control_indices'")
        W = np.asarray(data["W"], dtype=np.float64)
        indices = np.asarray(data["control_indices"], dtype=np.int64)
    controls = ControlPointSet.from_mesh(mesh, indices)
    if W.shape != (mesh.n_vertices, controls.count):
        raise PreconditionError(
            f"{path}: W is {W.shape}, expected ({mesh.n_vertices}, {controls.count})"
        )
    return DeformCoordinates(W, controls)


def cmd_precompute(args):
    config = load_config(args.config, args.overrides, args.seed)
    mesh = load_mesh(args.mesh)
    if args.coords_file:
        coords = _load_external_coords(args.coords_file, mesh)
    else:
        if config.c > mesh.n_vertices:
            raise PreconditionError(
                f"c={config.c} exceeds the mesh's {mesh.n_vertices} vertices"
            )
        controls = geodesic_fps(mesh, edge_graph(mesh), config.c)
        coords = compute_biharmonic_coordinates(mesh, cotangent_laplacian(mesh), controls)
    metadata = {
        "tool": f"metaforge {__version__}",
        "command": "precompute",
        "source": Path(args.mesh).name,
        "seed": str(config.seed),
        "c": str(coords.control_count),
    }
    if args.coords_file:
        metadata["coords_source"] = Path(args.coords_file).name
    bundle = bundle_from_parts(mesh, coords, metadata=metadata)
    out = Path(args.out) if args.out else Path(args.mesh).with_suffix(
        ".json" if args.text else ".bundle"
    )
    (write_bundle_text if args.text else write_bundle)(bundle, out)
    print(f"wrote {out} (n={mesh.n_vertices} c={coords.control_count})")
    return 0


# -- fit -------------------------------------------------------------------


def cmd_fit(args):
    config = load_config(args.config, args.overrides, args.seed)
    bundle = read_bundle(args.bundle)
    mesh = bundle.mesh()
    coords = bundle.coords()
    cloud, coords = _source_cloud(mesh, coords, config)
    target = _target_points(args.target, config)
    fit_config = config.fit_config()

    if args.mode == "subspace":
        if bundle.handle_count == 0:
            raise PreconditionError(
                "bundle has no meta-handles; run discover first or use --mode full"
            )
        subspace = bundle.subspace()
        result = fit_subspace_coefficients(mesh, cloud, subspace, target, fit_config, coords)
        delta = combine_handles(subspace, result.solution)
    else:
        result = fit_full_offsets(mesh, cloud, coords, target, fit_config)
        delta = result.solution
    deformed = mesh.with_vertices(mesh.vertices + coords.W_vertices @ delta)

    out = Path(args.out) if args.out else Path(args.target).with_suffix("").with_name(
        Path(args.target).stem + "_fit.obj"
    )
    save_obj(deformed, out)
    record = out.with_suffix(".record.txt")
    lines = [
        "command = fit",
        f"mode = {args.mode}",
        f"bundle = {Path(args.bundle).name}",
        f"target = {Path(args.target).name}",
        f"seed = {config.seed}",
        f"converged = {str(result.converged).lower()}",
        f"outer_iterations = {len(result.objective_trace) - 1}",
    ]
    for key in ("objective", "chamfer", "symmetry", "normal", "laplacian", "geometric"):
        lines.append(f"{key} = {_fmt(result.breakdown[key])}")
    if args.mode == "subspace":
        lines.append("coefficients = " + " ".join(_fmt(v) for v in result.solution))
    lines.append("trace = " + " ".join(_fmt(v) for v in result.objective_trace))
    _write_record(record, lines)
    print(f"wrote {out} and {record}")
    print(f"objective = {_fmt(result.breakdown['objective'])}")
    return 0


# -- discover ---------------------------------------------------------------


def cmd_discover(args):
    config = load_config(args.config, args.overrides, args.seed)
    bundle = read_bundle(args.bundle)
    mesh = bundle.mesh()
    coords = bundle.coords()
    cloud, coords = _source_cloud(mesh, coords, config)

    paths = _list_meshes(args.targets)
    if len(paths) < config.m:
        raise QualityGateError(
            f"need at least m={config.m} target meshes in {args.targets}, found {len(paths)}"
        )
    targets = [_target_points(p, config, stream=k + 1) for k, p in enumerate(paths)]

    subspace, report = discover_subspace(mesh, cloud, coords, targets, config.discovery_config())

    metadata = dict(bundle.metadata)
    metadata.update(
        {
            "discover_seed": str(config.seed),
            "m": str(config.m),
            "targets": str(len(paths)),
        }
    )
    updated = bundle_from_parts(mesh, bundle.coords(), subspace, metadata)
    out = Path(args.out) if args.out else Path(args.bundle)
    (write_bundle_text if args.text else write_bundle)(updated, out)

    report_path = out.with_suffix(out.suffix + ".report.txt")
    lines = [
        "command = discover",
        f"seed = {config.seed}",
        f"m = {config.m}",
        f"targets = {report['targets']}",
        "dropped = " + (" ".join(str(i) for i in report["dropped_targets"]) or "none"),
        f"init_rank = {report['init_rank']}",
        f"factorization_converged = {str(report['factorization_converged']).lower()}",
        f"tau_geo = {_fmt(report['tau_geo'])}",
        f"shrink_rounds = {report['shrink_rounds']}",
        f"mean_geo = {_fmt(report['mean_geo'])}",
    ]
    for i, (lo, hi) in enumerate(subspace.ranges):
        lines.append(f"range {i} = {_fmt(lo)} {_fmt(hi)}")
    lines.append(
        "factorization_trace = "
        + " ".join(_fmt(v) for v in report["factorization_trace"])
    )
    _write_record(report_path, lines)
    print(f"wrote {out} and {report_path}")
    print(f"m = {config.m}, shrink_rounds = {report['shrink_rounds']}")
    return 0


# -- sample ------------------------------------------------------------------


def _read_coefficients(path, m):
    vectors = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        try:
            vec = np.array([float(tok) for tok in stripped.split()])
        except ValueError as exc:
            raise PreconditionError(f"{path}:{lineno}: not a coefficient line") from exc
        if vec.size != m:
            raise PreconditionError(
                f"{path}:{lineno}: expected {m} coefficients, got {vec.size}"
            )
        vectors.append(vec)
    if not vectors:
        raise PreconditionError(f"{path}: no coefficient lines")
    return vectors


def cmd_sample(args):
    config = load_config(args.config, args.overrides, args.seed)
    bundle = read_bundle(args.bundle)
    if bundle.handle_count == 0:
        raise PreconditionError("bundle has no meta-handles; run discover first")
    mesh = bundle.mesh()
    subspace = bundle.subspace()

    if args.coeffs:
        vectors = _read_coefficients(args.coeffs, subspace.m)
    else:
        vectors = [
            sample_coefficients(
                subspace, np.random.default_rng(np.random.SeedSequence([config.seed, k]))
            )
            for k in range(args.count)
        ]

    out_dir = Path(args.out) if args.out else Path("samples")
    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(vectors) - 1)))
    coeff_lines = ["# one line per sample: coefficient values in handle order"]
    for k, a in enumerate(vectors):
        delta = combine_handles(subspace, a)
        deformed = mesh.with_vertices(mesh.vertices + bundle.coordinates @ delta)
        save_obj(deformed, out_dir / f"sample_{k:0{width}d}.obj")
        coeff_lines.append(" ".join(_fmt(v) for v in a))
    (out_dir / "coefficients.txt").write_text("\n".join(coeff_lines) + "\n", encoding="ascii")
    print(f"wrote {len(vectors)} meshes to {out_dir}")
    return 0


# -- eval ---------------------------------------------------------------------


def _load_cloud_set(directory, config):
    clouds, names, skipped = [], [], []
    for path in _list_meshes(directory):
        try:
            mesh = load_mesh(path)
        except (MeshFormatError, EmptyMeshError, DegenerateGeometryError, OSError) as exc:
            skipped.append((path.name, str(exc)))
            continue
        seed = np.random.SeedSequence([config.seed, zlib.crc32(path.name.encode("utf-8"))])
        clouds.append(sample_surface(mesh, config.eval_samples, seed).points)
        names.append(path.name)
    return clouds, names, skipped


def cmd_eval(args):
    config = load_config(args.config, args.overrides, args.seed)
    gen_clouds, gen_names, gen_skipped = _load_cloud_set(args.generated, config)
    ref_clouds, ref_names, ref_skipped = _load_cloud_set(args.reference, config)
    for name, reason in gen_skipped + ref_skipped:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    if not gen_clouds or not ref_clouds:
        raise PreconditionError("both directories need at least one readable mesh")

    matrix = np.array(
        [[chamfer(g, r, squared=config.chamfer_squared) for r in ref_clouds] for g in gen_clouds]
    )
    matched = {int(i) for i in matrix.argmin(axis=1)}
    report = EvalReport(
        coverage=len(matched) / len(ref_clouds),
        mmd=float(matrix.min(axis=0).mean()),
        pairs=tuple(
            (gen_names[i], ref_names[j], float(matrix[i, j]))
            for i in range(len(gen_names))
            for j in range(len(ref_names))
        ),
    )

    lines = [
        "command = eval",
        f"generated = {len(gen_clouds)}",
        f"reference = {len(ref_clouds)}",
        f"pairs = {matrix.size}",
        f"samples_per_mesh = {config.eval_samples}",
        f"coverage = {_fmt(report.coverage)}",
        f"mmd = {_fmt(report.mmd)}",
    ]
    for name, reason in gen_skipped + ref_skipped:
        lines.append(f"skipped = {name}")
    best_gen = matrix.argmin(axis=0)
    for j, name in enumerate(ref_names):
        lines.append(f"best {name} = {gen_names[int(best_gen[j])]} {_fmt(matrix[best_gen[j], j])}")
    out = Path(args.out) if args.out else Path("eval_report.txt")
    _write_record(out, lines)
    print(f"coverage = {_fmt(report.coverage)}")
    print(f"mmd = {_fmt(report.mmd)}")
    print(f"wrote {out}")
    return 0


# -- export ---------------------------------------------------------------------


def cmd_export(args):
    bundle = read_bundle(args.bundle)
    out = Path(args.out) if args.out else Path(args.bundle).with_suffix(".json")
    write_bundle_text(bundle, out)
    print(f"wrote {out} (n={bundle.n_vertices} c={bundle.control_count} m={bundle.handle_count})")
    return 0


# -- wiring -----------------------------------------------------------------------


def _add_common(sub, out_help):
    sub.add_argument("--config", default=None, help="key=value config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    sub.add_argument("--out", default=None, help=out_help)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="metaforge",
        description="Handle-based mesh deformation: precompute, fit, discover, sample, eval.",
    )
    parser.add_argument("--version", action="version", version=f"metaforge {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("precompute", help="select controls and solve coordinates")
    sub.add_argument("mesh", help="source mesh (.obj or .off)")
    _add_common(sub, "bundle output path")
    sub.add_argument("--text", action="store_true", help="write the JSON text variant")
    sub.add_argument(
        "--coords-file", default=None, help=".npz with externally computed W and control_indices"
    )
    sub.set_defaults(func=cmd_precompute)

    sub = commands.add_parser("fit", help="deform the bundle mesh onto a target")
    sub.add_argument("bundle")
    sub.add_argument("target", help="target mesh (.obj or .off)")
    sub.add_argument("--mode", choices=("full", "subspace"), default="full")
    _add_common(sub, "deformed mesh output path (.obj)")
    sub.set_defaults(func=cmd_fit)

    sub = commands.add_parser("discover", help="learn meta-handles from a target directory")
    sub.add_argument("bundle")
    sub.add_argument("targets", help="directory of target meshes")
    _add_common(sub, "output bundle path (default: update in place)")
    sub.add_argument("--text", action="store_true", help="write the JSON text variant")
    sub.set_defaults(func=cmd_discover)

    sub = commands.add_parser("sample", help="write random in-range deformations")
    sub.add_argument("bundle")
    sub.add_argument("--count", type=int, default=20)
    sub.add_argument("--coeffs", default=None, help="replay coefficients from a text file")
    _add_common(sub, "output directory")
    sub.set_defaults(func=cmd_sample)

    sub = commands.add_parser("eval", help="coverage/MMD between two mesh directories")
    sub.add_argument("generated")
    sub.add_argument("reference")
    _add_common(sub, "report output path")
    sub.set_defaults(func=cmd_eval)

    sub = commands.add_parser("export", help="convert a bundle to the JSON text variant")
    sub.add_argument("bundle")
    sub.add_argument("--out", default=None, help="output path (.json)")
    sub.set_defaults(func=cmd_export)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BundleFormatError, MeshFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        PreconditionError,
        EmptyMeshError,
        DegenerateGeometryError,
        RankDeficiencyError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (QualityGateError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - last-resort diagnostic
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entry():
    return main()
