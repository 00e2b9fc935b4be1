import json
import shutil
from pathlib import Path

import pytest

from czdg.cli import EXIT_ABORTED, EXIT_IO, EXIT_OK, main

DATA = Path(__file__).resolve().parent / "data"


def test_mesh_gen_and_info(tmp_path, capsys):
    f = tmp_path / "plate.mesh"
    assert main(["mesh", "gen", "--rect", "2", "1", "4", "2", "-o", str(f)]) == EXIT_OK
    capsys.readouterr()
    assert main(["mesh", "info", str(f)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["triangles"] == 16 and info["nodes"] == 15
    assert info["interior_faces"] + info["boundary_faces"] == info["faces"]
    assert info["boundary_tags"] == [1, 2, 3, 4]
    assert info["h_F_min"] <= info["h_F_max"]


def test_mesh_gen_sen(tmp_path, capsys):
    f = tmp_path / "sen.mesh"
    assert main(["mesh", "gen", "--sen", "--nx", "5", "-o", str(f)]) == EXIT_OK
    capsys.readouterr()
    main(["mesh", "info", str(f)])
    info = json.loads(capsys.readouterr().out)
    assert info["triangles"] == 200
    assert set(info["regions"]) <= {"0", "1", "2"}


def test_mesh_errors(tmp_path, capsys):
    assert main(["mesh", "info", str(tmp_path / "missing.mesh")]) == EXIT_IO
    (tmp_path / "bad.mesh").write_text("nodes 1\n0 0\n")
    assert main(["mesh", "info", str(tmp_path / "bad.mesh")]) == EXIT_IO
    assert main(["mesh", "gen", "--rect", "1", "1", "0", "1", "-o", str(tmp_path / "x")]) == EXIT_IO


def test_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    shutil.copy(DATA / "tiny.cfg", cfg)
    assert main(["run", str(cfg)]) == EXIT_OK
    assert "status = complete" in capsys.readouterr().out
    assert (tmp_path / "out_tiny" / "steps.csv").exists()
    assert main(["run", str(cfg), "--out", str(tmp_path / "elsewhere")]) == EXIT_OK
    assert (tmp_path / "elsewhere" / "steps.csv").read_bytes() == \
        (tmp_path / "out_tiny" / "steps.csv").read_bytes()


def test_run_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text((DATA / "tiny.cfg").read_text().replace("nu = 0.3", "nu = 0.3\nrho = 1"))
    assert main(["run", str(cfg)]) == EXIT_IO
    err = capsys.readouterr().err
    assert "unknown key" in err and "line" in err
    assert main(["run", str(tmp_path / "nope.cfg")]) == EXIT_IO


def test_run_aborted_step(tmp_path, capsys):
    cfg = tmp_path / "tight.cfg"
    cfg.write_text((DATA / "tiny.cfg").read_text().replace(
        "max_iter = 200", "max_iter = 1\nmax_bisections = 0"))
    assert main(["run", str(cfg)]) == EXIT_ABORTED
    assert "status = aborted" in capsys.readouterr().out


def test_threads_env(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "tiny.cfg"
    shutil.copy(DATA / "tiny.cfg", cfg)
    monkeypatch.setenv("CZDG_THREADS", "2")
    assert main(["run", str(cfg)]) == EXIT_OK
    for bad in ("0", "many"):
        monkeypatch.setenv("CZDG_THREADS", bad)
        with pytest.raises(SystemExit, match="CZDG_THREADS"):
            main(["run", str(cfg)])


def test_verify_patch(capsys):
    assert main(["verify", "patch"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["suite"] == "patch" and report["passed"]


def test_unknown_suite_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "everything"])
    assert info.value.code == 2
