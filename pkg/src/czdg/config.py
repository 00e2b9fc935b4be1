"""Scenario configuration files.

The format is plain ``key = value`` lines grouped in ``[section]`` blocks;
``#`` starts a comment. Sections::

    [mesh]              kind = rect | sen | file, plus geometry keys
    [material.<tag>]    E, nu for one region tag
    [cohesive]          sigma_max, u_c (optional sigma_max_t, u_tc)
    [bc.<tag>]          type = clamped | displacement | traction | free
    [schedule]          delta_max and steps, or an explicit list ``deltas``
    [solver]            gamma0 and nonlinear iteration controls
    [output]            dir, vtk_every, reaction_tag

Displacement and traction components accept a number, ``delta`` or
``k*delta``; ``delta`` is the current level of the load schedule. A
``[cohesive]`` section with ``sigma_max = inf`` (or no section at all) gives
a purely elastic run.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .cohesive import CohesiveParams, PureModeLaw
from .dg import Dirichlet, Loads
from .material import IsotropicElastic, MaterialField
from .mesh import BOTTOM, DIRICHLET, LEFT, NEUMANN, RIGHT, TOP, Mesh, generate_rect, \
    mark_initial_crack, read_mesh
from .scenarios import SenSpec
from .solver import NonlinearSettings


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


# ---------------------------------------------------------------------------
# values


@dataclass(frozen=True)
class Ramp:
    """``value + coef * delta``; only one of the two may be non-zero."""

    value: float = 0.0
    coef: float = 0.0

    def at(self, delta: float) -> float:
        return self.value + self.coef * delta

    def __str__(self):
        if self.coef == 0.0:
            return _fmt(self.value)
        if self.coef == 1.0:
            return "delta"
        if self.coef == -1.0:
            return "-delta"
        return f"{_fmt(self.coef)}*delta"


_RAMP = re.compile(r"^\s*(?:([-+]?[0-9.eE+-]+)\s*\*\s*)?([-+])?delta\s*$")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "inf" if math.isinf(x) and x > 0 else repr(x)
    if isinstance(x, tuple):
        return ", ".join(_fmt(v) for v in x)
    if isinstance(x, list):
        return ", ".join(_fmt(v) for v in x)
    return str(x)


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _positive(s: str) -> float:
    v = _float(s)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _int(s: str) -> int:
    return int(s)


def _count(s: str) -> int:
    v = int(s)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _pair(s: str) -> tuple[float, float]:
    parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return (_float(parts[0]), _float(parts[1]))


def _floats(s: str) -> list[float]:
    return [_float(p) for p in re.split(r"[,\s]+", s.strip()) if p]


def _ramp(s: str) -> Ramp:
    m = _RAMP.match(s)
    if m:
        k = float(m.group(1)) if m.group(1) else 1.0
        if m.group(2) == "-":
            k = -k
        return Ramp(0.0, k)
    return Ramp(_float(s), 0.0)


def _choice(*options: str) -> Callable[[str], str]:
    def conv(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return conv


def _text(s: str) -> str:
    return s


# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True)
class MeshConfig:
    """Mesh source: a generated rectangle, the notched specimen, or a file."""

    kind: str
    options: tuple[tuple[str, object], ...] = ()

    def get(self, key, default=None):
        return dict(self.options).get(key, default)


_CRACK_KEYS = {"crack_center": _pair, "crack_length": _positive, "crack_angle": _float}
_MESH_KEYS = {
    "rect": {"width": _positive, "height": _positive, "nx": _count, "ny": _count,
             "crossed": _bool, **_CRACK_KEYS},
    "sen": {"W": _positive, "H": _positive, "D": _positive, "a": _positive,
            "inclusion1": _pair, "inclusion2": _pair, "crack_center": _pair,
            "crack_angle": _float, "nx": _count, "ny": _count},
    "file": {"file": _text, **_CRACK_KEYS},
}
_MESH_REQUIRED = {"rect": ("width", "height", "nx", "ny"), "sen": (), "file": ("file",)}


@dataclass(frozen=True)
class BoundaryCondition:
    """``clamped`` fixes both components; ``displacement`` fixes the given ones."""

    type: str
    ux: Ramp | None = None
    uy: Ramp | None = None
    tx: Ramp | None = None
    ty: Ramp | None = None

    @property
    def is_dirichlet(self) -> bool:
        return self.type in ("clamped", "displacement")

    @property
    def mask(self) -> tuple[bool, bool]:
        if self.type == "clamped":
            return (True, True)
        return (self.ux is not None, self.uy is not None)

    def displacement(self, delta: float) -> tuple[float, float]:
        return tuple(c.at(delta) if c is not None else 0.0 for c in (self.ux, self.uy))

    def traction(self, delta: float) -> tuple[float, float]:
        return tuple(c.at(delta) if c is not None else 0.0 for c in (self.tx, self.ty))


@dataclass(frozen=True)
class Schedule:
    deltas: tuple[float, ...]
    stop_drop: float = 0.0

    def __post_init__(self):
        if any(b < a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("schedule must be non-decreasing")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    vtk_every: int = 1
    reaction_tag: int | None = None


@dataclass(frozen=True)
class Scenario:
    mesh: MeshConfig
    materials: dict
    cohesive: CohesiveParams | None
    bcs: dict
    schedule: Schedule
    solver: NonlinearSettings = NonlinearSettings()
    gamma0: float = 10.0
    output: OutputConfig = OutputConfig()

    # -- construction of the numerical objects ---------------------------------

    def build_mesh(self, base: Path | str = ".") -> tuple[Mesh, np.ndarray]:
        """Mesh with boundary kinds from the BC map, and the pre-cracked faces."""
        kinds = {t: (DIRICHLET if bc.is_dirichlet else NEUMANN) for t, bc in self.bcs.items()}
        m = self.mesh
        if m.kind == "sen":
            spec = sen_spec(m)
            mesh = spec.mesh().with_boundary_kinds(kinds)
            crack = spec.crack_faces(mesh)
        else:
            if m.kind == "rect":
                mesh = generate_rect(m.get("width"), m.get("height"), m.get("nx"), m.get("ny"),
                                     crossed=m.get("crossed", False), boundary_kinds=kinds)
            else:
                path = Path(base) / m.get("file")
                mesh = read_mesh(path.read_text(), kinds)
            crack = np.zeros(0, dtype=np.int64)
            if m.get("crack_center") is not None:
                if m.get("crack_length") is None or m.get("crack_angle") is None:
                    raise ConfigError("crack_center needs crack_length and crack_angle")
                crack = mark_initial_crack(mesh, m.get("crack_center"), m.get("crack_length"),
                                           m.get("crack_angle"))
        unbound = mesh.boundary_tags - set(self.bcs)
        if unbound:
            raise ConfigError(f"boundary tag(s) {sorted(unbound)} have no [bc.<tag>] section")
        extra = set(self.bcs) - mesh.boundary_tags
        if extra:
            raise ConfigError(f"[bc.<tag>] given for tag(s) {sorted(extra)} absent from the mesh")
        self.material_field().check_covers(mesh.region_tags)
        return mesh, crack

    def material_field(self) -> MaterialField:
        return MaterialField(self.materials)

    def dirichlet_masks(self) -> dict[int, tuple[bool, bool]]:
        return {t: bc.mask for t, bc in self.bcs.items() if bc.is_dirichlet}

    def loads_at(self, delta: float) -> Loads:
        dirichlet, traction = {}, {}
        for t, bc in sorted(self.bcs.items()):
            if bc.is_dirichlet:
                dirichlet[t] = Dirichlet(bc.displacement(delta), bc.mask)
            elif bc.type == "traction":
                traction[t] = bc.traction(delta)
        return Loads(traction=traction, dirichlet=dirichlet)

    def reaction_tag(self) -> int | None:
        """Tag whose support reaction is reported: explicit, else the driven one."""
        if self.output.reaction_tag is not None:
            return self.output.reaction_tag
        for t, bc in sorted(self.bcs.items()):
            if bc.is_dirichlet and any(c is not None and c.coef for c in (bc.ux, bc.uy)):
                return t
        dirichlet = [t for t, bc in sorted(self.bcs.items()) if bc.is_dirichlet]
        return dirichlet[0] if dirichlet else None

    def reaction_component(self) -> int:
        """1 (y) unless the reported boundary is driven only along x."""
        tag = self.reaction_tag()
        bc = self.bcs.get(tag)
        if bc is None:
            return 1
        cx = abs(bc.ux.coef) if bc.ux is not None else 0.0
        cy = abs(bc.uy.coef) if bc.uy is not None else 0.0
        return 0 if cx > cy else 1


def sen_spec(m: MeshConfig) -> SenSpec:
    kw = dict(m.options)
    if "nx" in kw and "ny" not in kw:
        kw["ny"] = 2 * kw["nx"]
    return SenSpec(**kw)


# ---------------------------------------------------------------------------
# parsing


@dataclass
class _Section:
    name: str
    line: int
    items: dict = field(default_factory=dict)  # key -> (value text, line)


def _lex(text: str) -> list[_Section]:
    sections: list[_Section] = []
    seen = set()
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", n)
            name = line[1:-1].strip()
            if name in seen:
                raise ConfigError(f"duplicate section [{name}]", n)
            seen.add(name)
            sections.append(_Section(name, n))
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n)
        if not sections:
            raise ConfigError("key outside of any section", n)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", n)
        if key in sections[-1].items:
            raise ConfigError(f"duplicate key {key!r} in [{sections[-1].name}]", n)
        sections[-1].items[key] = (value, n)
    return sections


def _convert(sec: _Section, schema: dict, required=()) -> dict:
    out = {}
    for key, (value, n) in sec.items.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{sec.name}]", n)
        try:
            out[key] = schema[key](value)
        except ValueError as err:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({err})", n) from None
    for key in required:
        if key not in out:
            raise ConfigError(f"[{sec.name}] is missing required key {key!r}", sec.line)
    return out


def _tag(sec: _Section, prefix: str) -> int:
    try:
        return int(sec.name[len(prefix):])
    except ValueError:
        raise ConfigError(f"section [{sec.name}] needs an integer tag", sec.line) from None


_SOLVER_KEYS = {"gamma0": _positive, "tol_rel": _positive, "tol_coupling": _positive,
                "max_iter": _count, "relaxation": _positive, "max_bisections": _int, "anderson_depth": _int,
                "separation": _choice("cohesive", "jump"),
                "failure": _choice("equilibrium", "immediate")}
_BC_KEYS = {"type": _choice("clamped", "displacement", "traction", "free"),
            "ux": _ramp, "uy": _ramp, "tx": _ramp, "ty": _ramp}


def parse_config(text: str) -> Scenario:
    """Parse and validate a configuration; errors carry the offending line."""
    sections = _lex(text)
    by_name = {s.name: s for s in sections}
    known = {"mesh", "cohesive", "schedule", "solver", "output"}
    for s in sections:
        if s.name not in known and not s.name.startswith(("material.", "bc.")):
            raise ConfigError(f"unknown section [{s.name}]", s.line)

    if "mesh" not in by_name:
        raise ConfigError("missing [mesh] section")
    msec = by_name["mesh"]
    kind = _convert(_Section("mesh", msec.line, {k: v for k, v in msec.items.items()
                                                 if k == "kind"}),
                    {"kind": _choice(*_MESH_KEYS)}, ("kind",))["kind"]
    rest = _Section("mesh", msec.line, {k: v for k, v in msec.items.items() if k != "kind"})
    mopts = _convert(rest, _MESH_KEYS[kind], _MESH_REQUIRED[kind])
    mesh = MeshConfig(kind, tuple(sorted(mopts.items())))

    materials = {}
    for s in sections:
        if s.name.startswith("material."):
            v = _convert(s, {"E": _positive, "nu": _float}, ("E", "nu"))
            try:
                materials[_tag(s, "material.")] = IsotropicElastic(v["E"], v["nu"])
            except ValueError as err:
                raise ConfigError(str(err), s.line) from None
    if not materials:
        raise ConfigError("at least one [material.<tag>] section is required")

    cohesive = None
    if "cohesive" in by_name:
        s = by_name["cohesive"]
        v = _convert(s, {"sigma_max": _positive, "u_c": _positive, "sigma_max_t": _positive,
                         "u_tc": _positive}, ("sigma_max",))
        if not math.isinf(v["sigma_max"]):
            if "u_c" not in v:
                raise ConfigError("[cohesive] is missing required key 'u_c'", s.line)
            try:
                cohesive = CohesiveParams(
                    PureModeLaw(v["sigma_max"], v["u_c"]),
                    PureModeLaw(v.get("sigma_max_t", v["sigma_max"]), v.get("u_tc", v["u_c"])))
            except ValueError as err:
                raise ConfigError(str(err), s.line) from None

    bcs = {}
    for s in sections:
        if not s.name.startswith("bc."):
            continue
        v = _convert(s, _BC_KEYS, ("type",))
        t = v["type"]
        allowed = {"clamped": (), "free": (), "displacement": ("ux", "uy"),
                   "traction": ("tx", "ty")}[t]
        for key, (_, n) in s.items.items():
            if key != "type" and key not in allowed:
                raise ConfigError(f"key {key!r} does not apply to a {t} boundary", n)
        if t == "displacement" and "ux" not in v and "uy" not in v:
            raise ConfigError("a displacement boundary needs ux and/or uy", s.line)
        bcs[_tag(s, "bc.")] = BoundaryCondition(t, **{k: v[k] for k in v if k != "type"})
    if mesh.kind in ("rect", "sen"):
        missing = {BOTTOM, RIGHT, TOP, LEFT} - set(bcs)
        if missing:
            raise ConfigError(f"boundary tag(s) {sorted(missing)} have no [bc.<tag>] section",
                              msec.line)
        extra = set(bcs) - {BOTTOM, RIGHT, TOP, LEFT}
        if extra:
            s = by_name[f"bc.{min(extra)}"]
            raise ConfigError(f"generated meshes only carry boundary tags 1-4", s.line)

    if "schedule" not in by_name:
        raise ConfigError("missing [schedule] section")
    s = by_name["schedule"]
    v = _convert(s, {"delta_max": _float, "steps": _int, "deltas": _floats,
                     "stop_drop": _float})
    if "deltas" in v:
        if "delta_max" in v or "steps" in v:
            raise ConfigError("give either deltas or delta_max/steps, not both", s.line)
        deltas = tuple(v["deltas"])
    elif "delta_max" in v and "steps" in v:
        if v["steps"] < 0:
            raise ConfigError("steps must be >= 0", s.items["steps"][1])
        n = v["steps"]
        deltas = tuple(float(x) for x in v["delta_max"] * np.arange(1, n + 1) / max(n, 1))
    else:
        raise ConfigError("[schedule] needs deltas, or delta_max and steps", s.line)
    if not 0.0 <= v.get("stop_drop", 0.0) < 1.0:
        raise ConfigError("stop_drop must be in [0, 1)", s.items["stop_drop"][1])
    try:
        schedule = Schedule(deltas, v.get("stop_drop", 0.0))
    except ValueError as err:
        raise ConfigError(str(err), s.line) from None

    solver_kw, gamma0 = {}, 10.0
    if "solver" in by_name:
        s = by_name["solver"]
        v = _convert(s, _SOLVER_KEYS)
        gamma0 = v.pop("gamma0", gamma0)
        try:
            solver_kw = v
            NonlinearSettings(**v)
        except ValueError as err:
            raise ConfigError(str(err), s.line) from None

    output = OutputConfig()
    if "output" in by_name:
        v = _convert(by_name["output"], {"dir": _text, "vtk_every": _int, "reaction_tag": _int})
        output = OutputConfig(**v)

    return Scenario(mesh, materials, cohesive, bcs, schedule, NonlinearSettings(**solver_kw),
                    gamma0, output)


def load_config(path: Path | str) -> Scenario:
    return parse_config(Path(path).read_text())


def format_config(sc: Scenario) -> str:
    """Text that parses back to an equal :class:`Scenario`."""
    out = ["[mesh]", f"kind = {sc.mesh.kind}"]
    out += [f"{k} = {_fmt(v)}" for k, v in sc.mesh.options]
    for tag, mat in sorted(sc.materials.items()):
        out += ["", f"[material.{tag}]", f"E = {_fmt(float(mat.E))}", f"nu = {_fmt(float(mat.nu))}"]
    out += ["", "[cohesive]"]
    if sc.cohesive is None:
        out.append("sigma_max = inf")
    else:
        n, t = sc.cohesive.normal, sc.cohesive.tangential
        out += [f"sigma_max = {_fmt(float(n.sigma_max))}", f"u_c = {_fmt(float(n.u_c))}"]
        if t.sigma_max != n.sigma_max:
            out.append(f"sigma_max_t = {_fmt(float(t.sigma_max))}")
        if t.u_c != n.u_c:
            out.append(f"u_tc = {_fmt(float(t.u_c))}")
    for tag, bc in sorted(sc.bcs.items()):
        out += ["", f"[bc.{tag}]", f"type = {bc.type}"]
        out += [f"{k} = {getattr(bc, k)}" for k in ("ux", "uy", "tx", "ty")
                if getattr(bc, k) is not None]
    out += ["", "[schedule]", f"deltas = {_fmt(list(sc.schedule.deltas))}"]
    if sc.schedule.stop_drop:
        out.append(f"stop_drop = {_fmt(sc.schedule.stop_drop)}")
    out += ["", "[solver]", f"gamma0 = {_fmt(float(sc.gamma0))}"]
    out += [f"{f.name} = {_fmt(getattr(sc.solver, f.name))}" for f in fields(sc.solver)]
    out += ["", "[output]", f"dir = {sc.output.dir}", f"vtk_every = {sc.output.vtk_every}"]
    if sc.output.reaction_tag is not None:
        out.append(f"reaction_tag = {sc.output.reaction_tag}")
    return "\n".join(out) + "\n"


def with_output_dir(sc: Scenario, out_dir: str) -> Scenario:
    return replace(sc, output=replace(sc.output, dir=out_dir))
