"""Reweighting loop at the core of the energy-minimal assignment search.

The activation count of cells and stations is smoothed by replacing each
count with ``log(eps + aggregate) / log(1 + 1/eps)``, which is concave in
the relaxed assignment.  Minimizing a concave objective over the feasible
polytope proceeds by repeatedly minimizing its tangent plane: each round
solves a linear program whose weights are the gradient at the current
point, which provably never increases the objective.

Natural logarithms are used throughout; the scaled constants make the base
cancel inside the per-round argmin, so only reported objective values
depend on it.  Constant offsets of the objective are dropped, so values may
be negative.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyModel
from .linkmodel import LinkParams, demand_coefficients, worst_case_efficiency
from .lpsolver import LpProblem, LpSolution, LpInfeasibleError, solve_lp
from .scenario import AreaConfig, Scenario

__all__ = [
    "ProblemInstance",
    "MMConfig",
    "MMTrace",
    "build_problem",
    "objective_h",
    "gradient_h",
    "majorizer_g",
    "mm_weights",
    "mm_iterate",
    "check_feasible",
    "unservable_tps",
]


@dataclass
class ProblemInstance:
    """Everything the relaxed problem needs, with scaled energy constants.

    ``candidate`` masks cells that may carry load; variables of masked
    cells are fixed at zero.  Geometry tags along so the rounding step can
    measure cell-to-TP distances.
    """

    d: np.ndarray            # (M, N) demand coefficients at build efficiency
    cell_bs: np.ndarray      # (M,) parent station of each cell
    c_bs: np.ndarray         # (L,) station static energy
    e_cell: np.ndarray       # (M,) cell static energy
    em: EnergyModel          # dynamic-term provider
    eps: float
    candidate: np.ndarray    # (M,) bool
    cell_pos: np.ndarray     # (M, 2)
    tp_pos: np.ndarray       # (N, 2)
    area: AreaConfig
    chat: np.ndarray = field(init=False)
    ehat: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if np.any(self.d <= 0):
            raise ValueError("demand coefficients must be strictly positive")
        m, n = self.d.shape
        if self.cell_bs.shape[0] != m or self.e_cell.shape[0] != m:
            raise ValueError("per-cell arrays disagree with demand matrix")
        if self.cell_pos.shape != (m, 2) or self.tp_pos.shape != (n, 2):
            raise ValueError("geometry arrays disagree with demand matrix")
        if self.candidate.shape[0] != m:
            raise ValueError("candidate mask disagrees with demand matrix")
        scale = np.log(1.0 + 1.0 / self.eps)
        self.chat = self.c_bs / scale
        self.ehat = self.e_cell / scale

    @property
    def M(self) -> int:
        return self.d.shape[0]

    @property
    def N(self) -> int:
        return self.d.shape[1]

    @property
    def L(self) -> int:
        return self.c_bs.shape[0]

    def allowed_mask(self) -> np.ndarray:
        return np.broadcast_to(self.candidate[:, None], self.d.shape).copy()

    def as_matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(self.M, self.N)
        if x.shape != self.d.shape:
            raise ValueError("assignment shape disagrees with instance")
        return x

    def aggregates(self, x):
        """Per-cell TP mass, per-station TP mass and per-cell load."""
        x = self.as_matrix(x)
        s = x.sum(axis=1)
        t = np.bincount(self.cell_bs, weights=s, minlength=self.L)
        rho = (self.d * x).sum(axis=1)
        return s, t, rho


@dataclass
class MMConfig:
    eps: float = 1e-3          # activation smoothing
    eps_star: float = 1e-3     # stop when the objective drop falls below this
    max_iters: int = 200
    store_iterates: bool = True
    lp_max_pivots: int | None = None


@dataclass
class MMTrace:
    """Per-round log of the reweighting loop; h is non-increasing."""

    h_values: list = field(default_factory=list)
    lp_status: list = field(default_factory=list)
    pivots: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    final_x: np.ndarray | None = None
    stop_reason: str = ""

    @property
    def n_iters(self) -> int:
        return len(self.lp_status)

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("iter,h,lp_status,ms\n")
            for k in range(len(self.h_values)):
                status = self.lp_status[k - 1] if k > 0 else "start"
                ms = self.wall_ms[k - 1] if k > 0 else 0.0
                f.write(f"{k},{self.h_values[k]!r},{status},{ms!r}\n")


def build_problem(
    scenario: Scenario,
    gains: np.ndarray,
    lp: LinkParams,
    em: EnergyModel,
    omega: np.ndarray | None = None,
    eps: float = 1e-3,
    candidate: np.ndarray | None = None,
) -> ProblemInstance:
    """Assemble the relaxed instance from a scenario and an efficiency matrix.

    ``omega`` defaults to the fully loaded worst case computed from the
    gains, which keeps the served rates safe under any true load.
    """
    gains = np.asarray(gains, dtype=float)
    m = scenario.topology.n_cells
    n = scenario.tps.n_tps
    if gains.shape != (m, n):
        raise ValueError("gain matrix disagrees with scenario dimensions")
    if omega is None:
        omega = worst_case_efficiency(gains, lp)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (m, n):
        raise ValueError("efficiency matrix disagrees with scenario dimensions")
    d = demand_coefficients(scenario.tps.rates, omega, lp)
    if candidate is None:
        candidate = np.ones(m, dtype=bool)
    else:
        candidate = np.asarray(candidate, dtype=bool).copy()
    if em.e_cell.shape[0] != m or em.c_bs.shape[0] != scenario.topology.n_bs:
        raise ValueError("energy model disagrees with scenario dimensions")
    return ProblemInstance(
        d=d,
        cell_bs=scenario.topology.cell_bs,
        c_bs=em.c_bs,
        e_cell=em.e_cell,
        em=em,
        eps=float(eps),
        candidate=candidate,
        cell_pos=scenario.topology.cell_pos,
        tp_pos=scenario.tps.positions,
        area=scenario.area,
    )


def objective_h(x, inst: ProblemInstance) -> float:
    s, t, rho = inst.aggregates(x)
    eps = inst.eps
    val = float((inst.chat * np.log(eps + t)).sum())
    val += float((inst.ehat * np.log(eps + s)).sum())
    val += float(inst.em.dynamic_value(rho).sum())
    return val


def gradient_h(x, inst: ProblemInstance) -> np.ndarray:
    """Gradient as an (M, N) matrix; entry (i, j) prices x_ij."""
    s, t, rho = inst.aggregates(x)
    eps = inst.eps
    row = inst.chat[inst.cell_bs] / (eps + t[inst.cell_bs])
    row = row + inst.ehat / (eps + s)
    fprime = inst.em.dynamic_deriv(rho)
    return row[:, None] + fprime[:, None] * inst.d


def majorizer_g(x, y, inst: ProblemInstance) -> float:
    """Tangent plane of the objective at y, evaluated at x.

    Concavity makes this an upper bound on the objective everywhere, and it
    matches the objective exactly at x = y.
    """
    xm = inst.as_matrix(x)
    ym = inst.as_matrix(y)
    return objective_h(ym, inst) + float((gradient_h(ym, inst) * (xm - ym)).sum())


def mm_weights(x, inst: ProblemInstance) -> np.ndarray:
    """LP weights of the next round; identical to the gradient at x."""
    return gradient_h(x, inst)


def check_feasible(x, inst: ProblemInstance, tol: float = 1e-6) -> bool:
    x = inst.as_matrix(x)
    if np.any(x < -tol) or np.any(x > 1 + tol):
        return False
    if np.any(np.abs(x.sum(axis=0) - 1.0) > tol):
        return False
    if np.any((inst.d * x).sum(axis=1) > 1 + tol):
        return False
    if np.any(x[~inst.candidate, :] > tol):
        return False
    return True


def unservable_tps(inst: ProblemInstance, fractional: bool = False) -> np.ndarray:
    """TPs that no candidate cell can host (whole-cell mode) or that cannot
    even be split across all candidate capacity (fractional mode)."""
    d = np.where(inst.candidate[:, None], inst.d, np.inf)
    if fractional:
        room = np.minimum(1.0, 1.0 / d)
        return np.flatnonzero(room.sum(axis=0) < 1.0 - 1e-12)
    return np.flatnonzero(d.min(axis=0) > 1.0 + 1e-12)


def mm_iterate(
    inst: ProblemInstance,
    x0,
    cfg: MMConfig | None = None,
    lp_solver=solve_lp,
) -> MMTrace:
    """Run the reweighting loop from a feasible start.

    Each round minimizes the tangent plane over the polytope via
    ``lp_solver`` and stops when the objective drop falls below
    ``eps_star``, at ``max_iters``, or if numerical noise ever breaks the
    tangent-plane descent inequality.  Raises :class:`LpInfeasibleError`
    (with the phase-1 certificate) when the polytope is empty.
    """
    if cfg is None:
        cfg = MMConfig()
    x = inst.as_matrix(x0).copy()
    trace = MMTrace()
    h_cur = objective_h(x, inst)
    trace.h_values.append(h_cur)
    if cfg.store_iterates:
        trace.iterates.append(x.copy())
    allowed = inst.allowed_mask()

    for _ in range(cfg.max_iters):
        w = mm_weights(x, inst)
        t0 = time.perf_counter()
        sol: LpSolution = lp_solver(
            LpProblem(w=w, d=inst.d, allowed=allowed, start=x),
            max_pivots=cfg.lp_max_pivots,
        )
        ms = (time.perf_counter() - t0) * 1e3
        if sol.status != "optimal":
            raise LpInfeasibleError(sol.certificate)
        x_new = sol.x
        # tangent value at the LP optimum can only be below the current one;
        # if rounding noise ever breaks that, stop rather than climb
        if majorizer_g(x_new, x, inst) > h_cur + 1e-9 * (1.0 + abs(h_cur)):
            trace.stop_reason = "majorizer_guard"
            break
        h_new = objective_h(x_new, inst)
        trace.h_values.append(h_new)
        trace.lp_status.append(sol.status)
        trace.pivots.append(sol.pivots)
        trace.wall_ms.append(ms)
        if cfg.store_iterates:
            trace.iterates.append(x_new.copy())
        drop = h_cur - h_new
        x, h_cur = x_new, h_new
        if drop <= cfg.eps_star:
            trace.stop_reason = "eps_star"
            break
    else:
        trace.stop_reason = "max_iters"

    trace.final_x = x
    return trace
