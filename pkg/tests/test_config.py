from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czdg.config import (ConfigError, Ramp, Scenario, format_config, load_config, parse_config,
                         with_output_dir)
from czdg.mesh import BOTTOM, LEFT, RIGHT, TOP, generate_rect, write_mesh

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
[mesh]
kind = rect
width = 1
height = 1
nx = 2
ny = 2

[material.0]
E = 10
nu = 0.3

[cohesive]
sigma_max = inf

[bc.1]
type = clamped
[bc.2]
type = free
[bc.3]
type = displacement
uy = delta
[bc.4]
type = free

[schedule]
delta_max = 0.01
steps = 4
"""


def test_minimal_elastic_config():
    sc = parse_config(MINIMAL)
    assert sc.cohesive is None
    assert sc.schedule.deltas == pytest.approx((0.0025, 0.005, 0.0075, 0.01))
    assert sc.bcs[TOP].mask == (False, True)
    assert sc.bcs[BOTTOM].mask == (True, True)
    assert sc.reaction_tag() == TOP
    assert sc.reaction_component() == 1
    mesh, crack = sc.build_mesh()
    assert mesh.n_triangles == 8 and len(crack) == 0
    loads = sc.loads_at(0.004)
    assert loads.dirichlet[TOP].value == (0.0, 0.004)
    assert set(loads.dirichlet) == {BOTTOM, TOP}


def test_missing_cohesive_section_is_elastic():
    text = MINIMAL.replace("[cohesive]\nsigma_max = inf\n", "")
    assert parse_config(text).cohesive is None


def test_specimen_configs():
    s1 = load_config(CONFIGS / "sen1.cfg")
    s2 = load_config(CONFIGS / "sen2.cfg")
    assert s1.mesh.kind == s2.mesh.kind == "sen"
    assert {t: m.E for t, m in s1.materials.items()} == {0: 10.0, 1: 10.0, 2: 10.0}
    assert {t: m.E for t, m in s2.materials.items()} == {0: 10.0, 1: 1000.0, 2: 1000.0}
    assert s1.cohesive == s2.cohesive
    assert s1.cohesive.normal.sigma_max == 1.0 and s1.cohesive.u_nc == 0.02
    mesh, crack = s1.build_mesh()
    assert mesh.n_triangles == 5000
    assert mesh.region_tags == {0, 1, 2}
    assert len(crack) > 0
    assert s1.bcs[TOP].mask == (True, True)
    assert s1.loads_at(0.1).dirichlet[TOP].value == (0.0, 0.1)


def test_elastic_config_file():
    sc = load_config(CONFIGS / "elastic.cfg")
    assert sc.cohesive is None and sc.mesh.kind == "rect"


def test_ramp():
    assert Ramp(0.0, 2.5).at(0.1) == pytest.approx(0.25)
    assert str(Ramp(0.0, 1.0)) == "delta"
    assert str(Ramp(0.0, -1.0)) == "-delta"
    assert str(Ramp(0.0, 0.5)) == "0.5*delta"
    assert str(Ramp(0.3, 0.0)) == "0.3"


def error_line(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.line, str(info.value)


def line_of(text, needle):
    return next(i for i, l in enumerate(text.splitlines(), 1) if needle in l)


@pytest.mark.parametrize("old, new, needle, match", [
    ("nu = 0.3", "nu = 0.3\npoisson = 0.2", "poisson", "unknown key"),
    ("nx = 2", "nx = two", "nx = two", "bad value"),
    ("nx = 2", "nx = 0", "nx = 0", "must be >= 1"),
    ("type = free\n\n[schedule]", "type = sliding\n\n[schedule]", "type = sliding", "expected one of"),
    ("steps = 4", "steps = 4\nsteps = 5", "steps = 5", "duplicate key"),
    ("[schedule]", "[scheduel]", "[scheduel]", "unknown section"),
    ("E = 10", "E = -10", "E = -10", "must be positive"),
    ("uy = delta", "uy = delta\ntx = 1", "tx = 1", "does not apply"),
    ("kind = rect", "kind = disc", "kind = disc", "expected one of"),
    ("width = 1", "width = 1 mm", "width = 1 mm", "bad value"),
])
def test_errors_carry_line_numbers(old, new, needle, match):
    text = MINIMAL.replace(old, new, 1)
    line, msg = error_line(text)
    assert line == line_of(text, needle)
    assert match in msg and f"line {line}" in msg


def test_missing_required_key_points_at_section():
    text = MINIMAL.replace("nu = 0.3\n", "")
    line, msg = error_line(text)
    assert line == line_of(text, "[material.0]") and "'nu'" in msg


def test_unbound_boundary_tag():
    text = MINIMAL.replace("[bc.4]\ntype = free\n", "")
    line, msg = error_line(text)
    assert "[4]" in msg and line == line_of(text, "[mesh]")


def test_unbound_tag_in_mesh_file(tmp_path):
    (tmp_path / "m.mesh").write_text(write_mesh(generate_rect(1, 1, 1, 1)))
    text = MINIMAL.replace("kind = rect\nwidth = 1\nheight = 1\nnx = 2\nny = 2",
                           "kind = file\nfile = m.mesh")
    text = text.replace("[bc.4]\ntype = free\n", "")
    sc = parse_config(text)
    with pytest.raises(ConfigError, match=r"tag\(s\) \[4\]"):
        sc.build_mesh(tmp_path)


def test_material_must_cover_regions():
    text = MINIMAL.replace("kind = sen" if False else "kind = rect\nwidth = 1\nheight = 1\nnx = 2\nny = 2",
                           "kind = sen\nnx = 4")
    sc = parse_config(text)
    with pytest.raises(KeyError, match="region tag"):
        sc.build_mesh()


def test_schedule_errors():
    line, msg = error_line(MINIMAL.replace("delta_max = 0.01\nsteps = 4", "deltas = 0.02, 0.01"))
    assert "non-decreasing" in msg
    line, msg = error_line(MINIMAL.replace("delta_max = 0.01\nsteps = 4", "steps = 4"))
    assert "needs deltas" in msg


def test_missing_u_c():
    text = MINIMAL.replace("sigma_max = inf", "sigma_max = 1")
    line, msg = error_line(text)
    assert "u_c" in msg and line == line_of(text, "[cohesive]")


def test_solver_section():
    text = MINIMAL + "\n[solver]\ngamma0 = 20\nmax_iter = 7\nseparation = jump\n"
    sc = parse_config(text)
    assert sc.gamma0 == 20 and sc.solver.max_iter == 7 and sc.solver.separation == "jump"
    line, msg = error_line(MINIMAL + "\n[solver]\nrelaxation = 2\n")
    assert "relaxation" in msg


def test_round_trip_of_shipped_configs():
    for name in ("sen1.cfg", "sen2.cfg", "elastic.cfg"):
        sc = load_config(CONFIGS / name)
        assert parse_config(format_config(sc)) == sc
        assert format_config(parse_config(format_config(sc))) == format_config(sc)


def test_with_output_dir():
    sc = with_output_dir(parse_config(MINIMAL), "elsewhere")
    assert sc.output.dir == "elsewhere"


finite = st.floats(-10, 10, allow_nan=False).map(lambda x: round(x, 6))
positive = st.floats(1e-3, 1e3).map(lambda x: float(f"{x:.6g}"))


@st.composite
def scenarios(draw):
    lines = ["[mesh]", "kind = rect", f"width = {draw(positive)}", f"height = {draw(positive)}",
             f"nx = {draw(st.integers(1, 5))}", f"ny = {draw(st.integers(1, 5))}",
             f"crossed = {draw(st.sampled_from(['true', 'false']))}"]
    for tag in draw(st.sets(st.integers(0, 3), min_size=1, max_size=3)):
        lines += [f"[material.{tag}]", f"E = {draw(positive)}", f"nu = {draw(st.floats(0, 0.49)):.4f}"]
    if draw(st.booleans()):
        lines += ["[cohesive]", f"sigma_max = {draw(positive)}", f"u_c = {draw(positive)}"]
        if draw(st.booleans()):
            lines.append(f"u_tc = {draw(positive)}")
    for tag in (1, 2, 3, 4):
        t = draw(st.sampled_from(["clamped", "free", "displacement", "traction"]))
        lines += [f"[bc.{tag}]", f"type = {t}"]
        if t == "displacement":
            lines.append(f"ux = {draw(finite)}")
            lines.append(f"uy = {draw(st.sampled_from(['delta', '-delta', '2.5*delta', '0']))}")
        elif t == "traction":
            lines.append(f"ty = {draw(st.sampled_from(['delta', '1.5', '-0.5*delta']))}")
    deltas = sorted(draw(st.lists(st.floats(0, 1).map(lambda x: round(x, 5)), min_size=1, max_size=5)))
    lines += ["[schedule]", "deltas = " + ", ".join(map(str, deltas))]
    if draw(st.booleans()):
        lines += ["[solver]", f"gamma0 = {draw(positive)}", f"max_iter = {draw(st.integers(1, 99))}"]
    lines += ["[output]", f"vtk_every = {draw(st.integers(0, 5))}"]
    return "\n".join(lines) + "\n"


@settings(max_examples=60, deadline=None)
@given(scenarios())
def test_round_trip_property(text):
    sc = parse_config(text)
    again = parse_config(format_config(sc))
    assert again == sc
    assert isinstance(again, Scenario)
