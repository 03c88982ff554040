"""Command-line benchmark harness.

Subcommands mirror the solver-robustness experiments: ``sweep-h`` (mesh
refinement), ``sweep-alpha`` (augmentation scaling), ``sweep-k``
(permeability heterogeneity grid), ``sweep-fractures`` (random network
growth), plus ``mesh-gen``, ``verify``, ``solve``, ``export-mtx`` and
``bench-kernels``.

Configuration is a single JSON file with ``--set key=value`` dotted
overrides; unknown keys are rejected. Machine CSV output contains only
deterministic fields (identical config + seed reproduces it bit for bit);
wall times and the derived time-vs-DOF rate column appear in the Markdown
tables only. ``MDAUX_THREADS`` caps worker processes for sweep rows.

Exit codes: 0 ok, 2 invariant failure, 3 non-convergence.
"""

import argparse
import copy
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import kernels
from .darcy import (
    DarcyProblem,
    assemble,
    inf_sup_estimate,
    linear_pressure_drop,
    mass_balance_report,
    solve,
    write_vtk,
)
from .mdfem import (
    MdSpace,
    PermeabilityField,
    assemble_divergence,
    assemble_mass,
    complex_report,
    pressure_mass,
)
from .mdgeom import validate as validate_geometry
from .mdmesh import (
    CapacityError,
    build_random_network,
    build_structured,
    check_matching,
    mesh_from_json,
    mesh_to_json,
    refine,
)
from .mdprecond import build_augmented_block, precond_quality, recommended_alpha
from .solvers import KrylovConfig
from .sparsela import write_mtx

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_NOCONV = 3

SINGLE = [((0.0, 0.5), (1.0, 0.5))]
CROSS = [((0.0, 0.5), (1.0, 0.5)), ((0.5, 0.0), (0.5, 1.0))]
REGULAR = [
    ((0.0, 0.5), (1.0, 0.5)),
    ((0.5, 0.0), (0.5, 1.0)),
    ((0.5, 0.75), (1.0, 0.75)),
    ((0.75, 0.5), (0.75, 1.0)),
    ((0.5, 0.625), (0.75, 0.625)),
    ((0.625, 0.5), (0.625, 0.75)),
]
BUILTIN_FRACTURES = {"empty": [], "single": SINGLE, "cross": CROSS,
                     "regular": REGULAR}

DEFAULT_CONFIG = {
    "geometry": {"kind": "single", "m": 8, "count": 5, "seed": 1, "path": "",
                 "fractures": []},
    "permeability": {"k_m": 1.0, "k_f": 1.0, "k_nu": 1.0},
    "alpha": 1.0,
    "alphas": [1.0, 1e1, 1e2, 1e3, 1e4],
    "k_values": [1e-4, 1.0, 1e4],
    "counts": [1, 5, 10, 20],
    "levels": 3,
    "precond": "D",
    "bc": "linear_x",
    "outer_tol": 1e-6,
    "outer_max": 500,
    "inner_tol": 1e-3,
    "inner_max": 100,
    "true_left": False,
    "seed": 0,
    "output": "mdaux_out",
}


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as f:
            user = json.load(f)
        _merge_checked(cfg, user, prefix="")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        _apply_override(cfg, key.strip(), raw.strip())
    return cfg


def _merge_checked(base, user, prefix):
    for key, value in user.items():
        if key not in base:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {prefix + key!r} must be an object")
            _merge_checked(base[key], value, prefix + key + ".")
        else:
            base[key] = value


def _apply_override(cfg, dotted, raw):
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[p]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    try:
        node[leaf] = json.loads(raw)
    except json.JSONDecodeError:
        node[leaf] = raw  # bare string


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]


def build_mesh(cfg):
    g = cfg["geometry"]
    kind = g["kind"]
    if kind in BUILTIN_FRACTURES:
        return build_structured(BUILTIN_FRACTURES[kind], g["m"])
    if kind == "random":
        return build_random_network(g["seed"], g["count"], g["m"])
    if kind == "fractures":
        frs = [((a, b), (c, d)) for a, b, c, d in g["fractures"]]
        return build_structured(frs, g["m"])
    if kind == "file":
        with open(g["path"]) as f:
            return mesh_from_json(f.read())
    raise ConfigError(f"unknown geometry kind {kind!r}")


def permeability(cfg, geom):
    p = cfg["permeability"]
    return PermeabilityField.uniform(geom, k_m=p["k_m"], k_f=p["k_f"],
                                     k_nu=p["k_nu"])


def boundary_conditions(cfg):
    if cfg["bc"] == "linear_x":
        return linear_pressure_drop, None
    if cfg["bc"] == "left_right":
        return (lambda x, y: 1.0 - x,
                lambda x, y: y < 1e-12 or y > 1.0 - 1e-12)
    raise ConfigError(f"unknown bc {cfg['bc']!r}")


def krylov_configs(cfg):
    outer = KrylovConfig(tol_rel=cfg["outer_tol"], max_iter=cfg["outer_max"])
    inner = KrylovConfig(tol_rel=cfg["inner_tol"], max_iter=cfg["inner_max"])
    return outer, inner


def run_single_solve(cfg, mesh):
    K = permeability(cfg, mesh.geom)
    pbc, noflux = boundary_conditions(cfg)
    system = assemble(DarcyProblem(mesh, K, pressure_bc=pbc, noflux=noflux))
    outer, inner = krylov_configs(cfg)
    sol = solve(system, cfg["precond"], alpha=cfg["alpha"], outer_cfg=outer,
                inner_cfg=inner, true_left=cfg["true_left"])
    return system, sol


# ---------------------------------------------------------------------------
# table output
# ---------------------------------------------------------------------------

def write_tables(rows, columns, md_columns, out_prefix, title, cfg):
    """CSV with deterministic columns; Markdown with the full set."""
    chash = config_hash(cfg)
    csv_path = out_prefix + ".csv"
    with open(csv_path, "w") as f:
        f.write(",".join(columns + ["config_hash"]) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row.get(c, "")) for c in columns)
                    + f",{chash}\n")
    md_path = out_prefix + ".md"
    with open(md_path, "w") as f:
        f.write(f"# {title}\n\nconfig hash: `{chash}`\n\n")
        f.write("| " + " | ".join(md_columns) + " |\n")
        f.write("|" + "---|" * len(md_columns) + "\n")
        for row in rows:
            f.write("| " + " | ".join(_fmt(row.get(c, "")) for c in md_columns)
                    + " |\n")
    return csv_path, md_path


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _print_rows(rows, columns):
    print(" | ".join(columns))
    for row in rows:
        print(" | ".join(_fmt(row.get(c, "")) for c in columns))


def _rate_column(rows):
    prev = None
    for row in rows:
        if prev is not None and row.get("t_wall") and prev.get("t_wall"):
            num = np.log(row["t_wall"] / prev["t_wall"])
            den = np.log(row["n_dof"] / prev["n_dof"])
            row["rate"] = float(num / den) if den != 0 else float("nan")
        else:
            row["rate"] = ""
        prev = row


def _solve_row(cfg, mesh, label_key, label_value):
    try:
        system, sol = run_single_solve(cfg, mesh)
    except CapacityError as exc:
        return {label_key: label_value, "status": f"skipped ({exc})",
                "converged": False}
    rep = sol.report
    return {
        label_key: label_value,
        "n_dof": rep["n_dof"],
        "outer": rep["outer_iterations"],
        "inner_avg": round(rep["inner_average"], 2),
        "converged": rep["converged"],
        "t_wall": rep["wall_time"],
        "status": "ok" if rep["converged"] else "no convergence",
    }


def _alpha_row(args):
    cfg, alpha = args
    sub = copy.deepcopy(cfg)
    sub["alpha"] = alpha
    return _solve_row(sub, build_mesh(sub), "alpha", alpha)


def _fracture_row(args):
    cfg, count = args
    sub = copy.deepcopy(cfg)
    sub["geometry"]["kind"] = "random"
    sub["geometry"]["count"] = count
    try:
        mesh = build_mesh(sub)
    except CapacityError as exc:
        return {"count": count, "status": f"skipped ({exc})"}
    return _solve_row(sub, mesh, "count", count)


def _k_row(args):
    cfg, kval, alpha = args
    sub = copy.deepcopy(cfg)
    sub["permeability"]["k_f"] = kval
    sub["permeability"]["k_nu"] = kval
    sub["alpha"] = alpha
    row = _solve_row(sub, build_mesh(sub), "alpha", alpha)
    row["k_f"] = kval
    return row


def _pool_map(func, items):
    """Run sweep rows, optionally in worker processes capped by
    MDAUX_THREADS (each row rebuilds its mesh, so rows are independent)."""
    workers = int(os.environ.get("MDAUX_THREADS", "1"))
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    import multiprocessing as mp
    with mp.Pool(min(workers, len(items))) as pool:
        return pool.map(func, items)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_mesh_gen(cfg, args):
    mesh = build_mesh(cfg)
    path = args.out or (cfg["output"] + "_mesh.json")
    with open(path, "w") as f:
        f.write(mesh_to_json(mesh))
    print(f"wrote {path}: {mesh!r}")
    return EXIT_OK


def cmd_verify(cfg, args):
    failures = []
    notes = []
    geoms = args.geometries or ["single", "cross", "regular"]
    for name in geoms:
        if name in BUILTIN_FRACTURES:
            m = 8 if name == "regular" else 4
            mesh = build_structured(BUILTIN_FRACTURES[name], m)
        else:
            with open(name) as f:
                mesh = mesh_from_json(f.read())
        bad_geom = validate_geometry(mesh.geom)
        if bad_geom:
            failures.append(f"{name}: geometry invalid: {bad_geom}")
        mism = check_matching(mesh)
        if mism:
            failures.append(f"{name}: matching violations: {mism[:3]}")
            continue  # downstream assembly assumes matched interfaces
        rep = complex_report(mesh)
        if rep["dd_max"] > 1e-13:
            failures.append(f"{name}: d∘d defect {rep['dd_max']:.2e}")
        if rep["commuting_max"] > 1e-12:
            failures.append(f"{name}: commuting residual {rep['commuting_max']:.2e}")
        K = permeability(cfg, mesh.geom)
        a_q = assemble_mass(MdSpace(mesh, 1), K)
        if a_q.symmetry_error() > 1e-13:
            failures.append(f"{name}: flux mass not symmetric")
        alpha = recommended_alpha(K, mesh.geom, cfg["alpha"])
        q = precond_quality(mesh, K, alpha)
        if not np.isfinite(q["kappa"]) or q["kappa"] > 500.0 or q["lambda_min"] <= 0:
            failures.append(f"{name}: preconditioner quality {q}")
        notes.append(f"{name}: dd={rep['dd_max']:.1e} "
                     f"commuting={rep['commuting_max']:.1e} "
                     f"kappa={q['kappa']:.1f}")
        if MdSpace(mesh, 1).total_dofs <= 2000:
            gamma = inf_sup_estimate(mesh, K, alpha=alpha)
            if gamma <= 0.05:
                failures.append(f"{name}: inf-sup estimate {gamma:.3e}")
            notes.append(f"{name}: gamma_B={gamma:.3f}")
    for n in notes:
        print(n)
    if failures:
        for fail in failures:
            print("FAIL:", fail, file=sys.stderr)
        return EXIT_INVARIANT
    print("verify: all checks passed")
    return EXIT_OK


def cmd_solve(cfg, args):
    mesh = build_mesh(cfg)
    system, sol = run_single_solve(cfg, mesh)
    balance = mass_balance_report(sol, system)
    rep = dict(sol.report)
    rep["mass_balance_global"] = balance["global"]
    out = cfg["output"]
    with open(out + "_report.json", "w") as f:
        json.dump(rep, f, indent=1)
    if args.vtk:
        write_vtk(sol, system, out)
    if args.residuals:
        with open(out + "_residuals.csv", "w") as f:
            f.write("iter,residual\n")
            for i, r in enumerate(rep["residual_history"]):
                f.write(f"{i},{r!r}\n")
    print(f"outer {rep['outer_iterations']} (inner avg "
          f"{rep['inner_average']:.1f}), converged={rep['converged']}, "
          f"n_dof={rep['n_dof']}")
    return EXIT_OK if rep["converged"] else EXIT_NOCONV


def cmd_sweep_h(cfg, args):
    if cfg["levels"] < 2:
        raise ConfigError("sweep-h needs at least 2 levels")
    mesh = build_mesh(cfg)
    rows = []
    for level in range(cfg["levels"]):
        row = _solve_row(cfg, mesh, "level", level)
        row["h"] = mesh.h
        rows.append(row)
        if level + 1 < cfg["levels"]:
            mesh = refine(mesh)
    _rate_column(rows)
    cols = ["level", "h", "n_dof", "outer", "inner_avg", "converged"]
    write_tables(rows, cols, cols + ["t_wall", "rate"],
                 cfg["output"] + "_sweep_h", "mesh refinement sweep", cfg)
    _print_rows(rows, cols + ["rate"])
    dofs = [r["n_dof"] for r in rows if "n_dof" in r]
    if any(b <= a for a, b in zip(dofs, dofs[1:])):
        return EXIT_INVARIANT
    return EXIT_OK if all(r.get("converged") for r in rows) else EXIT_NOCONV


def cmd_sweep_alpha(cfg, args):
    if len(cfg["alphas"]) < 2:
        raise ConfigError("sweep-alpha needs at least 2 values")
    rows = _pool_map(_alpha_row, [(cfg, a) for a in cfg["alphas"]])
    cols = ["alpha", "n_dof", "outer", "inner_avg", "converged"]
    write_tables(rows, cols, cols + ["t_wall"],
                 cfg["output"] + "_sweep_alpha", "alpha sweep", cfg)
    _print_rows(rows, cols)
    return EXIT_OK if all(r.get("converged") for r in rows) else EXIT_NOCONV


def cmd_sweep_k(cfg, args):
    grid = []
    skipped = {}
    for kval in cfg["k_values"]:
        for alpha in cfg["alphas"]:
            kmin = min(1.0, kval)
            if alpha >= max(1.0, 1.0 / kmin):
                grid.append((cfg, kval, alpha))
            else:
                skipped[(kval, alpha)] = {
                    "k_f": kval, "alpha": alpha,
                    "status": "skipped (alpha below policy)", "converged": ""}
    solved = {(r["k_f"], r["alpha"]): r for r in _pool_map(_k_row, grid)}
    rows = []
    ok = True
    for kval in cfg["k_values"]:
        for alpha in cfg["alphas"]:
            if (kval, alpha) in skipped:
                rows.append(skipped[(kval, alpha)])
            else:
                row = solved[(kval, alpha)]
                rows.append(row)
                ok = ok and row.get("converged", False)
    cols = ["k_f", "alpha", "n_dof", "outer", "inner_avg", "converged", "status"]
    write_tables(rows, cols, cols + ["t_wall"],
                 cfg["output"] + "_sweep_k", "heterogeneity sweep", cfg)
    _print_rows(rows, cols)
    return EXIT_OK if ok else EXIT_NOCONV


def cmd_sweep_fractures(cfg, args):
    counts = cfg["counts"]
    if sorted(counts) != list(counts):
        raise ConfigError("fracture counts must be ascending")
    rows = _pool_map(_fracture_row, [(cfg, c) for c in counts])
    cols = ["count", "n_dof", "outer", "inner_avg", "converged"]
    write_tables(rows, cols, cols + ["t_wall", "status"],
                 cfg["output"] + "_sweep_fractures", "fracture count sweep", cfg)
    _print_rows(rows, cols)
    solved = [r for r in rows if "outer" in r]
    return EXIT_OK if solved and all(r["converged"] for r in solved) \
        else EXIT_NOCONV


def cmd_export_mtx(cfg, args):
    mesh = build_mesh(cfg)
    K = permeability(cfg, mesh.geom)
    flux = MdSpace(mesh, 1)
    pres = MdSpace(mesh, 2)
    a_q = assemble_mass(flux, K)
    d = assemble_divergence(flux, pres)
    m_p = pressure_mass(pres)
    alpha = recommended_alpha(K, mesh.geom, cfg["alpha"])
    aug, _ = build_augmented_block(mesh, K, alpha,
                                   spaces={"flux": flux, "pressure": pres})
    out = cfg["output"]
    for name, mat in [("a_q", a_q), ("d", d), ("m_p", m_p),
                      ("augmented", aug.matrix)]:
        write_mtx(mat, f"{out}_{name}.mtx")
        print(f"wrote {out}_{name}.mtx ({mat.rows}x{mat.cols}, nnz {mat.nnz})")
    from .mdfem import dof_map_json
    for name, space in [("flux", flux), ("pressure", pres)]:
        with open(f"{out}_dofs_{name}.json", "w") as f:
            f.write(dof_map_json(space, name))
    return EXIT_OK


def cmd_bench_kernels(cfg, args):
    from . import _kernels_py
    try:
        from . import _kernels_c
        backends = [("cython", _kernels_c), ("python", _kernels_py)]
    except ImportError:
        backends = [("python", _kernels_py)]
    mesh = build_structured(REGULAR, args.m)
    K = permeability(cfg, mesh.geom)
    aug, _ = build_augmented_block(mesh, K, 1.0)
    a = aug.matrix
    x = np.random.default_rng(0).standard_normal(a.cols)
    rows = []
    for name, impl in backends:
        out = np.zeros(a.rows)
        reps = max(3, args.reps)
        t0 = time.perf_counter()
        for _ in range(reps):
            impl.csr_matvec(a.row_ptr, a.col_idx, a.values, x, out)
        t_mv = (time.perf_counter() - t0) / reps
        t0 = time.perf_counter()
        for _ in range(reps):
            z = np.zeros(a.rows)
            impl.gs_forward(a.row_ptr, a.col_idx, a.values, z, out)
            impl.gs_backward(a.row_ptr, a.col_idx, a.values, z, out)
        t_sgs = (time.perf_counter() - t0) / reps
        rows.append({"backend": name, "n": a.rows, "nnz": a.nnz,
                     "matvec_ms": 1e3 * t_mv, "sgs_ms": 1e3 * t_sgs})
    if len(rows) == 2:
        rows.append({"backend": "speedup", "n": "", "nnz": "",
                     "matvec_ms": rows[1]["matvec_ms"] / rows[0]["matvec_ms"],
                     "sgs_ms": rows[1]["sgs_ms"] / rows[0]["sgs_ms"]})
    cols = ["backend", "n", "nnz", "matvec_ms", "sgs_ms"]
    write_tables(rows, ["backend", "n", "nnz"], cols,
                 cfg["output"] + "_bench", "kernel benchmark", cfg)
    _print_rows(rows, cols)
    print(f"active backend: {kernels.BACKEND}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mdaux",
        description="mixed-dimensional Darcy benchmarks with nodal "
                    "auxiliary-space preconditioners")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override a config entry (dotted key)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("mesh-gen").add_argument("--out", default=None)
    p = sub.add_parser("verify")
    p.add_argument("geometries", nargs="*",
                   help="builtin names or mesh files (default: all builtins)")
    p = sub.add_parser("solve")
    p.add_argument("--vtk", action="store_true")
    p.add_argument("--residuals", action="store_true")
    sub.add_parser("sweep-h")
    sub.add_parser("sweep-alpha")
    sub.add_parser("sweep-k")
    sub.add_parser("sweep-fractures")
    sub.add_parser("export-mtx")
    p = sub.add_parser("bench-kernels")
    p.add_argument("--m", type=int, default=32)
    p.add_argument("--reps", type=int, default=5)

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    handler = {
        "mesh-gen": cmd_mesh_gen,
        "verify": cmd_verify,
        "solve": cmd_solve,
        "sweep-h": cmd_sweep_h,
        "sweep-alpha": cmd_sweep_alpha,
        "sweep-k": cmd_sweep_k,
        "sweep-fractures": cmd_sweep_fractures,
        "export-mtx": cmd_export_mtx,
        "bench-kernels": cmd_bench_kernels,
    }[args.command]
    try:
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
