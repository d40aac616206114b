"""Per-frame orchestration of the constrained local-global integrator.

One frame runs: detection, linearization, the Delassus operator and the
complementarity preconditioner (once), prediction, then a fixed number of
local-global iterations each ending in a constrained (or plain) global step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .contact import (
    Binding,
    ConstraintSet,
    NcpKind,
    Obstacle,
    PreconditionerKind,
    delassus,
    detect,
    linearize,
    mass_delassus_diagonal,
    preconditioner,
    solve_constraints,
)
from .fem import GRAVITY, FemModel, GlobalSystem, energy_eval, predict, rhs_assembler


class SimulationError(RuntimeError):
    def __init__(self, message: str, frame: int, iteration: int | None = None, last_good_frame: int | None = None):
        where = f"frame {frame}" + ("" if iteration is None else f", L-G iteration {iteration}")
        super().__init__(f"{where}: {message}")
        self.frame = frame
        self.iteration = iteration
        self.last_good_frame = last_good_frame


@dataclass(frozen=True)
class StepBudget:
    lg_iters: int = 5
    cr_iters: int = 10
    h: float = 0.01

    def __post_init__(self):
        if self.lg_iters <= 0 or self.cr_iters <= 0 or not self.h > 0:
            raise ValueError("step budget entries must be positive")


@dataclass(frozen=True)
class ContactSettings:
    ncp_kind: NcpKind = NcpKind.FISCHER_BURMEISTER
    preconditioner: PreconditionerKind = PreconditionerKind.SYSTEM
    margin: float | None = None  # None: 0.2 x mean edge length
    min_separation: float = 0.0
    cr_tol: float = 1e-8
    project_multipliers: bool = True
    warm_start: bool = False  # carry multipliers of persisting constraints across frames

    def __post_init__(self):
        object.__setattr__(self, "ncp_kind", NcpKind(self.ncp_kind))
        object.__setattr__(self, "preconditioner", PreconditionerKind(self.preconditioner))


@dataclass
class IterationRecord:
    frame: int
    lg_iter: int
    cr_iters: int
    cr_residual: float
    max_phi_n: float
    max_cone_violation: float
    active_contacts: int
    energy: float
    wall_ms: float


@dataclass
class FrameReport:
    frame: int
    n_contacts: int
    n_bilateral: int
    records: list[IterationRecord] = field(default_factory=list)
    max_penetration: float = 0.0
    fb_singular: int = 0
    local_unconverged: int = 0


PinScript = Callable[[int], np.ndarray]


class Simulator:
    """Owns the prefactored system and advances a :class:`FemModel` frame by frame.

    ``pin_script(frame)`` returns the ``(p, 3)`` target positions of the
    model's pinned vertices at ``frame``; by default pins stay at rest.
    """

    def __init__(
        self,
        model: FemModel,
        obstacles: Sequence[Obstacle] = (),
        bindings: Sequence[Binding] = (),
        budget: StepBudget = StepBudget(),
        settings: ContactSettings = ContactSettings(),
        pin_script: PinScript | None = None,
        gravity=GRAVITY,
        x0: np.ndarray | None = None,
        v0: np.ndarray | None = None,
        track_energy: bool = True,
    ):
        self.model = model
        self.obstacles = list(obstacles)
        self.bindings = list(bindings)
        pinned = set(model.pins.tolist())
        for b in self.bindings:
            if b.vertex in pinned:
                raise ValueError(f"binding on pinned vertex {b.vertex}")
        self.budget = budget
        self.settings = settings
        rest = model.mesh.vertices.astype(float)
        self.pin_script = pin_script or (lambda frame: rest[model.pins])
        self.gravity = np.asarray(gravity, dtype=float)
        self.track_energy = track_energy
        self.system = GlobalSystem.build(model, budget.h)
        self._checksum = self.system.checksum()
        self._assemble = rhs_assembler(model)
        self.mass_dofs = np.repeat(model.mass, 3)
        if settings.margin is None:
            edge = model.mesh.mean_edge_length() if model.elements.shape[0] else 0.0
            self.margin = 0.2 * edge
        else:
            self.margin = float(settings.margin)
        self.x = rest.copy() if x0 is None else np.array(x0, dtype=float).reshape(-1, 3)
        self.v = np.zeros_like(self.x) if v0 is None else np.array(v0, dtype=float).reshape(-1, 3)
        self.frame = 0
        self.last_constraints: ConstraintSet | None = None
        self.last_lambda: np.ndarray | None = None

    def verify_system(self) -> bool:
        return self.system.checksum() == self._checksum

    def external_forces(self) -> np.ndarray:
        return self.model.mass[:, None] * self.gravity[None, :]

    def prepare_frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Inertial target ``s``, pin targets and the initial iterate ``x^0`` of the next frame."""
        model = self.model
        targets = np.asarray(self.pin_script(self.frame + 1), dtype=float).reshape(-1, 3)
        s = predict(self.x, self.v, self.external_forces(), self.budget.h, model.mass)
        x = self.x.copy()
        if model.pins.size:
            s[model.pins] = targets
            x[model.pins] = targets
        return s, targets, x

    def step(self) -> FrameReport:
        model, h = self.model, self.budget.h
        f_next = self.frame + 1
        x_t = self.x
        s, targets, x = self.prepare_frame()

        cs = self._constraints(x_t, s, f_next)
        report = FrameReport(frame=f_next, n_contacts=cs.n_c, n_bilateral=cs.n_b)
        lam = np.zeros(cs.n_rows)
        if self.settings.warm_start:
            lam = self._warm_lambda(cs)
        if not cs.is_empty:
            D = delassus(cs.J, self.system.K)
            if self.settings.preconditioner is PreconditionerKind.SYSTEM:
                pre = preconditioner(D, h, cs)
            else:
                pre = preconditioner(mass_delassus_diagonal(cs.J, self.mass_dofs), h, cs)

        for k in range(self.budget.lg_iters):
            t0 = time.perf_counter()
            F = model.deformation_gradients(x)
            p, stats = model.local_step(F)
            report.local_unconverged = max(report.local_unconverged, stats.n_unconverged)
            b = self.system.impose(self._assemble(s, p, h), targets)
            if cs.is_empty:
                x_flat = self.system.solve(b)
                info = None
            else:
                try:
                    lam, x_flat, info = solve_constraints(
                        cs,
                        x,
                        lam,
                        b,
                        self.system.K,
                        D,
                        pre,
                        self.settings.ncp_kind,
                        h,
                        self.budget.cr_iters,
                        self.settings.cr_tol,
                        self.settings.project_multipliers,
                    )
                except FloatingPointError as exc:
                    raise SimulationError(str(exc), f_next, k, self.frame) from exc
            x = x_flat.reshape(-1, 3)
            if not np.all(np.isfinite(x)):
                raise SimulationError("non-finite positions", f_next, k, self.frame)
            energy = energy_eval(model, x, s, h) if self.track_energy else float("nan")
            wall = (time.perf_counter() - t0) * 1e3
            if info is None:
                rec = IterationRecord(f_next, k, 0, 0.0, 0.0, 0.0, 0, energy, wall)
            else:
                rec = IterationRecord(
                    f_next, k, info.cr_iters, info.cr_residual, info.max_phi_n,
                    info.max_cone_violation, info.active_contacts, energy, wall,
                )
                report.max_penetration = info.max_penetration
                report.fb_singular += info.fb_singular
            report.records.append(rec)

        self.v = (x - x_t) / h
        self.x = x
        self.frame = f_next
        self.last_constraints = cs
        self.last_lambda = lam
        return report

    def _warm_lambda(self, cs: ConstraintSet) -> np.ndarray:
        """Previous multipliers for bindings and for contacts on the same (vertex, obstacle) pair."""
        lam = np.zeros(cs.n_rows)
        prev, prev_lam = self.last_constraints, self.last_lambda
        if prev is None or prev_lam is None:
            return lam
        if prev.n_b == cs.n_b:
            lam[cs.sl_b] = prev_lam[prev.sl_b]
        old = {(p.vertex, p.obstacle): j for j, p in enumerate(prev.pairs)}
        ln, lf = lam[cs.sl_n], lam[cs.sl_f].reshape(-1, 2)
        pln, plf = prev_lam[prev.sl_n], prev_lam[prev.sl_f].reshape(-1, 2)
        for j, p in enumerate(cs.pairs):
            i = old.get((p.vertex, p.obstacle))
            if i is None:
                continue
            ln[j] = pln[i]
            # re-express the tangential force in the new tangent frame
            f = plf[i, 0] * prev.pairs[i].t1 + plf[i, 1] * prev.pairs[i].t2
            lf[j] = (f @ p.t1, f @ p.t2)
        lam[cs.sl_n] = ln
        lam[cs.sl_f] = lf.ravel()
        return lam

    def _constraints(self, x_t: np.ndarray, s: np.ndarray, frame: int) -> ConstraintSet:
        h = self.budget.h
        pairs = []
        if self.obstacles:
            travel = np.linalg.norm(s - x_t, axis=1)
            pairs = detect(
                x_t,
                self.obstacles,
                self.margin,
                frame=frame,
                h=h,
                min_separation=self.settings.min_separation,
                expansion=travel,
                skip=self.model.pins,
            )
        return linearize(pairs, self.bindings, x_t, h)

    def run(self, frames: int, callback: Callable[[int, np.ndarray, FrameReport], None] | None = None):
        """Advance ``frames`` frames.  Returns ``(trajectory, reports)``."""
        trajectory, reports = [], []
        for _ in range(frames):
            report = self.step()
            trajectory.append(self.x.copy())
            reports.append(report)
            if callback is not None:
                callback(self.frame, self.x, report)
        return trajectory, reports
