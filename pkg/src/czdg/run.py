"""Run a configured scenario end to end and write its result files."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import output
from .config import Scenario
from .dg import DGOperator
from .mesh import Mesh
from .scenarios import reaches_edge
from .solver import QuasiStaticSolver, StepFailure, StepResult

log = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    mesh: Mesh
    crack: np.ndarray
    results: list[StepResult] = field(default_factory=list)
    aborted: bool = False
    stopped_early: bool = False

    @property
    def failed_faces(self) -> np.ndarray:
        return self.results[-1].failed_faces if self.results else self.crack


def build(sc: Scenario, base: Path | str = ".", threads: int | None = None):
    mesh, crack = sc.build_mesh(base)
    op = DGOperator(mesh, sc.material_field(), sc.gamma0, sc.dirichlet_masks(), threads=threads)
    solver = QuasiStaticSolver(op, sc.loads_at, sc.cohesive, sc.reaction_tag(), crack, sc.solver)
    return mesh, crack, op, solver


def run_scenario(sc: Scenario, out_dir: Path | str | None = None, base: Path | str = ".",
                 threads: int | None = None) -> RunOutcome:
    """Step through the schedule; writes files when ``out_dir`` is given.

    Stops after a step whose reaction has dropped below ``stop_drop`` times
    the peak, provided faces have failed since the start. A load step that
    cannot be converged ends the run with ``aborted = True``.
    """
    mesh, crack, op, solver = build(sc, base, threads)
    out = RunOutcome(mesh, crack)
    comp = sc.reaction_component()
    table = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for old in list(out_dir.glob("step_*.vtk")) + list(out_dir.glob("failed_faces_*")):
            old.unlink()
        table = output.StepsTable(out_dir / "steps.csv")

    peak = 0.0
    n0 = len(crack)
    for delta in sc.schedule.deltas:
        try:
            res = solver.load_step(delta)
        except StepFailure as err:
            log.error("%s", err)
            res = err.result
            res.step = solver.step_count + 1
            out.aborted = True
        out.results.append(res)
        R = float(res.reaction[comp])
        peak = max(peak, abs(R))
        log.info("step %d delta=%.6g R=%.6g failed=%d iterations=%d", res.step, delta, R,
                 len(res.failed_faces), res.iterations)
        if table is not None:
            table.add(res.step, delta, R, len(res.failed_faces), res.iterations, res.converged)
            every = sc.output.vtk_every
            if every > 0 and (res.step % every == 0 or out.aborted):
                _write_fields(out_dir, res, mesh, op)
        if out.aborted:
            break
        if (sc.schedule.stop_drop > 0 and len(res.failed_faces) > n0
                and abs(R) < sc.schedule.stop_drop * peak):
            out.stopped_early = True
            break

    if out_dir is not None:
        (out_dir / "summary.txt").write_text(summary(sc, out))
    return out


def _write_fields(out_dir: Path, res: StepResult, mesh: Mesh, op: DGOperator) -> None:
    tag = f"{res.step:04d}"
    vm = op.von_mises(res.u)
    title = f"czdg step {res.step} delta={res.delta:.9e}"
    (out_dir / f"step_{tag}.vtk").write_text(output.vtk_text(mesh, res.u, vm, title))
    ids = np.asarray(res.failed_faces, dtype=np.int64)
    lam = np.zeros(len(ids))
    if res.lam_max is not None and len(ids):
        lam = res.lam_max[np.searchsorted(op.interior.ids, ids)]
    (out_dir / f"failed_faces_{tag}.csv").write_text(output.failed_faces_csv(mesh, ids, lam))
    (out_dir / f"failed_faces_{tag}.vtk").write_text(output.failed_faces_vtk(mesh, ids, lam))


def summary(sc: Scenario, out: RunOutcome) -> str:
    comp = sc.reaction_component()
    R = [float(r.reaction[comp]) for r in out.results]
    lines = [
        f"mesh_kind = {sc.mesh.kind}",
        f"triangles = {out.mesh.n_triangles}",
        f"faces = {out.mesh.n_faces}",
        f"initial_crack_faces = {len(out.crack)}",
        f"cohesive = {'no' if sc.cohesive is None else 'yes'}",
        f"steps_run = {len(out.results)}",
        f"steps_scheduled = {len(sc.schedule.deltas)}",
        f"status = {'aborted' if out.aborted else ('stopped' if out.stopped_early else 'complete')}",
    ]
    if R:
        k = int(np.argmax(np.abs(R)))
        lines += [f"peak_reaction_N_per_mm = {R[k]:.9e}",
                  f"delta_at_peak_mm = {out.results[k].delta:.9e}",
                  f"final_failed_faces = {len(out.failed_faces)}",
                  f"dissipated_N_per_mm = {out.results[-1].dissipated:.9e}"]
        if len(out.crack):
            lines.append(f"crack_reaches_side = {reaches_edge(out.mesh, out.failed_faces, out.crack)}")
    return "\n".join(lines) + "\n"
