import json
import os

import pytest

from mdaux.cli import (
    ConfigError,
    EXIT_INVARIANT,
    EXIT_OK,
    config_hash,
    load_config,
    main,
)


def run(tmp_path, *argv):
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        return main(list(argv))
    finally:
        os.chdir(cwd)


def test_config_defaults_and_overrides():
    cfg = load_config(None, ["geometry.m=16", "alpha=2.5", 'precond="L"'])
    assert cfg["geometry"]["m"] == 16
    assert cfg["alpha"] == 2.5
    assert cfg["precond"] == "L"


def test_config_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"geometri": {}}))
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(None, ["no.such.key=1"])


def test_config_hash_stable():
    a = load_config(None, ["geometry.m=8"])
    b = load_config(None, ["geometry.m=8"])
    assert config_hash(a) == config_hash(b)
    c = load_config(None, ["geometry.m=16"])
    assert config_hash(a) != config_hash(c)


def test_mesh_gen_roundtrip(tmp_path):
    code = run(tmp_path, "--set", "geometry.kind=cross", "--set",
               "geometry.m=4", "mesh-gen", "--out", "mesh.json")
    assert code == EXIT_OK
    from mdaux.mdmesh import check_matching, mesh_from_json
    mesh = mesh_from_json((tmp_path / "mesh.json").read_text())
    assert check_matching(mesh) == []
    # solving from the exported file reproduces the builtin run
    code = run(tmp_path, "--set", 'geometry.kind="file"', "--set",
               "geometry.path=mesh.json", "solve")
    assert code == EXIT_OK


def test_verify_passes_on_builtins(tmp_path):
    assert run(tmp_path, "verify", "single", "cross") == EXIT_OK


def test_verify_detects_broken_mesh(tmp_path):
    from mdaux.mdmesh import build_structured, mesh_to_json
    mesh = build_structured([((0.0, 0.5), (1.0, 0.5))], 2)
    mesh.submeshes[2].vertices[1, 0] += 1e-3
    (tmp_path / "broken.json").write_text(mesh_to_json(mesh))
    assert run(tmp_path, "verify", "broken.json") == EXIT_INVARIANT


def test_solve_writes_reports(tmp_path):
    code = run(tmp_path, "--set", "geometry.m=4", "solve", "--vtk",
               "--residuals")
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "mdaux_out_report.json").read_text())
    assert rep["converged"] is True
    assert (tmp_path / "mdaux_out_residuals.csv").exists()
    assert (tmp_path / "mdaux_out_sub0.vtk").exists()


def test_sweep_h_outputs_and_determinism(tmp_path):
    args = ["--set", "geometry.kind=single", "--set", "geometry.m=4",
            "--set", "levels=2", "sweep-h"]
    assert run(tmp_path, *args) == EXIT_OK
    csv1 = (tmp_path / "mdaux_out_sweep_h.csv").read_bytes()
    md = (tmp_path / "mdaux_out_sweep_h.md").read_text()
    assert "rate" in md
    assert b"t_wall" not in csv1  # machine output is timing-free
    assert run(tmp_path, *args) == EXIT_OK
    assert (tmp_path / "mdaux_out_sweep_h.csv").read_bytes() == csv1


def test_sweep_h_rejects_single_level(tmp_path):
    assert run(tmp_path, "--set", "levels=1", "sweep-h") == 1


def test_sweep_alpha(tmp_path):
    code = run(tmp_path, "--set", "geometry.m=4", "--set", "alphas=[1.0,100.0]",
               "sweep-alpha")
    assert code == EXIT_OK
    lines = (tmp_path / "mdaux_out_sweep_alpha.csv").read_text().splitlines()
    assert len(lines) == 3


def test_sweep_k_skips_policy_violations(tmp_path):
    code = run(tmp_path, "--set", "geometry.m=4",
               "--set", "alphas=[1.0,10000.0]",
               "--set", "k_values=[0.0001,1.0]", "sweep-k")
    assert code == EXIT_OK
    text = (tmp_path / "mdaux_out_sweep_k.csv").read_text()
    assert "skipped (alpha below policy)" in text


def test_sweep_fractures(tmp_path):
    code = run(tmp_path, "--set", "geometry.m=8", "--set", "counts=[1,3]",
               "--set", "geometry.seed=2", "sweep-fractures")
    assert code == EXIT_OK
    lines = (tmp_path / "mdaux_out_sweep_fractures.csv").read_text().splitlines()
    assert len(lines) == 3


def test_export_mtx(tmp_path):
    code = run(tmp_path, "--set", "geometry.m=2", "--set",
               "geometry.kind=single", "export-mtx")
    assert code == EXIT_OK
    from mdaux.sparsela import read_mtx
    a = read_mtx(tmp_path / "mdaux_out_a_q.mtx")
    assert a.rows == a.cols and a.nnz > 0
    dofs = json.loads((tmp_path / "mdaux_out_dofs_flux.json").read_text())
    assert dofs[0].keys() == {"space", "k", "subdomain", "entity",
                              "global_index"}
    assert sorted(r["global_index"] for r in dofs) == list(range(a.rows))


def test_sweep_parallel_rows_match_sequential(tmp_path, monkeypatch):
    args = ["--set", "geometry.m=4", "--set", "alphas=[1.0,100.0]",
            "sweep-alpha"]
    assert run(tmp_path, *args) == EXIT_OK
    seq = (tmp_path / "mdaux_out_sweep_alpha.csv").read_bytes()
    monkeypatch.setenv("MDAUX_THREADS", "2")
    assert run(tmp_path, *args) == EXIT_OK
    assert (tmp_path / "mdaux_out_sweep_alpha.csv").read_bytes() == seq


def test_bench_kernels(tmp_path):
    code = run(tmp_path, "bench-kernels", "--m", "8", "--reps", "2")
    assert code == EXIT_OK
    md = (tmp_path / "mdaux_out_bench.md").read_text()
    assert "python" in md
