"""Convergence study of one frozen frame: complete global solves vs a Jacobi sweep.

The reference optimum ``x*`` is the complete local-global solution after
``truth_iters`` iterations (a stand-in for a converged Newton solve; both
reach the same stationary point of the implicit-Euler objective).
"""

from __future__ import annotations

import copy
import csv
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..fem import energy_eval
from ..integrator import Simulator
from .config import ScenarioConfig, parse_scenario

TRUTH_ITERS = 1000
COMPLETE = "complete"
JACOBI = "jacobi"


@dataclass
class ConvergenceRecord:
    method: str
    stiffness: float
    iteration: int
    energy: float
    relative_error: float
    wall_ms: float
    diverged: bool = False


def with_stiffness(config: ScenarioConfig, youngs: float) -> ScenarioConfig:
    raw = copy.deepcopy(config.raw)
    for m in raw["meshes"]:
        m["material"]["E"] = float(youngs)
    return parse_scenario(raw)


class FrozenFrame:
    """The optimization problem of a single frame with fixed ``s`` and pin targets."""

    def __init__(self, sim: Simulator):
        if sim.obstacles or sim.bindings:
            raise ValueError("the convergence study expects a scenario without contacts or bindings")
        self.sim = sim
        self.model = sim.model
        self.h = sim.budget.h
        self.s, self.targets, self.x0 = sim.prepare_frame()
        self.system = sim.system
        A = sp.csr_array(self.system.A)
        self.diag = A.diagonal()
        self.offdiag = A - sp.diags_array(self.diag)

    def energy(self, x: np.ndarray) -> float:
        return energy_eval(self.model, x, self.s, self.h)

    def rhs(self, x: np.ndarray) -> np.ndarray:
        p, _ = self.model.local_step(self.model.deformation_gradients(x))
        return self.system.impose(self.sim._assemble(self.s, p, self.h), self.targets)

    def complete_step(self, x: np.ndarray) -> np.ndarray:
        return self.system.solve(self.rhs(x)).reshape(-1, 3)

    def jacobi_step(self, x: np.ndarray) -> np.ndarray:
        b = self.rhs(x)
        return ((b - self.offdiag @ x.ravel()) / self.diag).reshape(-1, 3)

    def iterate(self, method: str, n: int):
        """Yield ``(k, x^k, wall_ms)`` for ``k = 0..n``."""
        step = self.complete_step if method == COMPLETE else self.jacobi_step
        x = self.x0.copy()
        yield 0, x, 0.0
        t0 = time.perf_counter()
        for k in range(1, n + 1):
            x = step(x)
            yield k, x, (time.perf_counter() - t0) * 1e3


def reference_energy(frame: FrozenFrame, iters: int = TRUTH_ITERS) -> float:
    x = frame.x0
    for _, x, _ in frame.iterate(COMPLETE, iters):
        pass
    return frame.energy(x)


def prepare_frame(config: ScenarioConfig, frame: int) -> FrozenFrame:
    """Advance the scenario ``frame - 1`` frames at its own budget, then freeze the next one."""
    sim = config.simulator(track_energy=False)
    for _ in range(max(frame - 1, 0)):
        sim.step()
    return FrozenFrame(sim)


def convergence_study(
    config: ScenarioConfig,
    stiffness: list[float],
    max_iters: int = 100,
    frame: int = 30,
    truth_iters: int = TRUTH_ITERS,
    methods: tuple[str, ...] = (COMPLETE, JACOBI),
) -> list[ConvergenceRecord]:
    """Relative error ``(eps(x^k) - eps*) / (eps(x^0) - eps*)`` per iteration and stiffness.

    A baseline that diverges (non-finite or exploding energy) is recorded with
    ``diverged=True`` and stopped; it does not abort the study.
    """
    records: list[ConvergenceRecord] = []
    for E in stiffness:
        problem = prepare_frame(with_stiffness(config, E), frame)
        e_star = reference_energy(problem, truth_iters)
        e0 = problem.energy(problem.x0)
        scale = e0 - e_star
        for method in methods:
            for k, x, wall in problem.iterate(method, max_iters):
                e = problem.energy(x) if np.all(np.isfinite(x)) else float("nan")
                rel = (e - e_star) / scale if scale != 0 else 0.0
                diverged = not np.isfinite(e) or rel > 1e6
                records.append(ConvergenceRecord(method, float(E), k, e, float(rel), wall, diverged))
                if diverged:
                    break
    return records


def write_convergence_csv(records: list[ConvergenceRecord], path: str | Path, truth_iters: int = TRUTH_ITERS) -> Path:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# reference x*: complete local-global solution after {truth_iters} iterations\n")
        w = csv.writer(fh)
        w.writerow([f.name for f in fields(ConvergenceRecord)])
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])
    return path


def read_convergence_csv(path: str | Path) -> list[ConvergenceRecord]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [
        ConvergenceRecord(
            r["method"], float(r["stiffness"]), int(r["iteration"]), float(r["energy"]),
            float(r["relative_error"]), float(r["wall_ms"]), r["diverged"] == "True",
        )
        for r in rows
    ]
