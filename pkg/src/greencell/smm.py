"""End-to-end solve: build the instance, run the reweighting loop, round.

``smm_solve`` is the main entry point; ``solve_with_algorithm`` dispatches
between it and the exact / greedy / strongest-signal baselines so the
experiment harness can treat them uniformly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import energy as en
from .discretize import (
    ExactLimits,
    NoFeasibleAssignment,
    assignment_energy,
    consolidate_assignment,
    exact_solve,
    greedy_zoom,
    repair_assignment,
    round_assignment,
    strongest_signal_assignment,
)
from .energy import EnergyModel
from .linkmodel import LinkParams, load_from_assignment
from .lpsolver import LpProblem, solve_lp
from .optimizer import MMConfig, MMTrace, ProblemInstance, build_problem, mm_iterate
from .scenario import Scenario

__all__ = ["SolveResult", "smm_solve", "smm_solve_instance", "solve_with_algorithm"]


@dataclass
class SolveResult:
    x: np.ndarray              # final assignment (binary unless fractional mode)
    binary: bool
    loads: np.ndarray          # per-cell loads at the instance's coefficients
    energy_w: float
    energy_norm: float
    active_cells: np.ndarray
    active_bs: np.ndarray
    iterations: int
    wall_ms: float
    algorithm: str
    mode: str
    feasible: bool = True
    trace: MMTrace | None = None
    proven_optimal: bool | None = None


def _finish(x, binary, inst: ProblemInstance, em: EnergyModel, scenario: Scenario,
            algorithm, mode, t0, iterations=0, trace=None, proven=None) -> SolveResult:
    loads = load_from_assignment(x, inst.d)
    report = en.activity_report(loads, em, scenario.topology)
    return SolveResult(
        x=x,
        binary=binary,
        loads=loads,
        energy_w=en.network_energy(loads, em, scenario.topology),
        energy_norm=en.normalized_energy(loads, em, scenario.topology),
        active_cells=report.active_cells,
        active_bs=report.active_bs,
        iterations=iterations,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        algorithm=algorithm,
        mode=mode,
        trace=trace,
        proven_optimal=proven,
    )


def default_start(gains, inst: ProblemInstance) -> np.ndarray:
    """Strongest-signal assignment, repaired to capacity feasibility.

    Falls back to a minimum-total-load LP vertex when the repair cannot
    place every TP (the LP then also certifies infeasibility).
    """
    from .discretize import RoundingFailure
    from .lpsolver import LpInfeasibleError

    raw = strongest_signal_assignment(gains, inst)
    try:
        return repair_assignment(raw, inst)
    except RoundingFailure:
        sol = solve_lp(LpProblem(w=inst.d, d=inst.d, allowed=inst.allowed_mask()))
        if sol.status != "optimal":
            raise LpInfeasibleError(sol.certificate) from None
        return sol.x


def smm_solve_instance(
    inst: ProblemInstance,
    gains: np.ndarray,
    em: EnergyModel,
    scenario: Scenario,
    cfg: MMConfig | None = None,
    mode: str = "worst_case",
    x0: np.ndarray | None = None,
    consolidate: bool = True,
) -> SolveResult:
    """Reweighting loop plus rounding on an already-built instance.

    ``mode='fractional'`` skips the rounding entirely and returns the
    relaxed assignment, letting several cells share one TP's demand.
    After rounding, a consolidation descent empties cells the relaxation
    could not coordinate (see ``consolidate_assignment``), and the greedy
    packing is evaluated as a floor: whichever refined configuration draws
    less is returned.  Disable both with ``consolidate=False`` to get the
    bare rounded result.
    """
    if cfg is None:
        cfg = MMConfig()
    t0 = time.perf_counter()
    if x0 is None:
        x0 = default_start(gains, inst)
    trace = mm_iterate(inst, x0, cfg)
    if mode == "fractional":
        return _finish(trace.final_x, False, inst, em, scenario,
                       "smm", mode, t0, trace.n_iters, trace)
    x = round_assignment(trace.final_x, inst).x
    if consolidate:
        x = consolidate_assignment(x, inst)
        try:
            alt = consolidate_assignment(greedy_zoom(inst).x, inst)
            if assignment_energy(alt, inst) < assignment_energy(x, inst) - 1e-9:
                x = alt
        except NoFeasibleAssignment:
            pass
    return _finish(x, True, inst, em, scenario,
                   "smm", mode, t0, trace.n_iters, trace)


def smm_solve(
    scenario: Scenario,
    gains: np.ndarray,
    lp: LinkParams,
    em: EnergyModel,
    cfg: MMConfig | None = None,
    mode: str = "worst_case",
    omega: np.ndarray | None = None,
    candidate: np.ndarray | None = None,
    x0: np.ndarray | None = None,
    consolidate: bool = True,
) -> SolveResult:
    if cfg is None:
        cfg = MMConfig()
    inst = build_problem(scenario, gains, lp, em, omega=omega, eps=cfg.eps,
                         candidate=candidate)
    return smm_solve_instance(inst, gains, em, scenario, cfg, mode, x0,
                              consolidate=consolidate)


def solve_with_algorithm(
    scenario: Scenario,
    gains: np.ndarray,
    lp: LinkParams,
    em: EnergyModel,
    algorithm: str = "smm",
    mode: str = "worst_case",
    cfg: MMConfig | None = None,
    exact_limits: ExactLimits | None = None,
) -> SolveResult:
    """Uniform front door for the harness: smm, exact, greedy or strongest."""
    if cfg is None:
        cfg = MMConfig()
    if algorithm == "smm":
        if mode == "load_aware":
            from .loadaware import alternating_solve

            alt = alternating_solve(scenario, gains, lp, em, cfg=cfg)
            return alt.final
        return smm_solve(scenario, gains, lp, em, cfg, mode)

    t0 = time.perf_counter()
    inst = build_problem(scenario, gains, lp, em, eps=cfg.eps)
    if algorithm == "exact":
        assign, _, proven = exact_solve(inst, exact_limits)
        return _finish(assign.x, True, inst, em, scenario, "exact", mode, t0,
                       proven=proven)
    if algorithm == "greedy":
        assign = greedy_zoom(inst)
        return _finish(assign.x, True, inst, em, scenario, "greedy", mode, t0)
    if algorithm == "strongest":
        x = repair_assignment(strongest_signal_assignment(gains, inst), inst)
        return _finish(x, True, inst, em, scenario, "strongest", mode, t0)
    raise ValueError(f"unknown algorithm {algorithm!r}")
