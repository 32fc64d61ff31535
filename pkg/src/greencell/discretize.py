"""From relaxed assignments to whole-cell ones, plus the search baselines.

The rounding heuristic fixes the certain entries first, then greedily
commits the largest fractional entries that still respect capacity, and
finally activates the closest sleeping cell for any TP left over.  The
exact solver and the greedy activation scheme serve as lower and upper
reference points for the main algorithm at small sizes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .linkmodel import Assignment
from .optimizer import ProblemInstance
from .scenario import wrap_distance

__all__ = [
    "RoundingFailure",
    "NoFeasibleAssignment",
    "round_assignment",
    "strongest_signal_assignment",
    "repair_assignment",
    "ExactLimits",
    "exact_solve",
    "greedy_zoom",
    "assignment_energy",
]

ONE_TOL = 1e-9      # entries this close to 0/1 count as integral
CAP_SLACK = 1e-9    # capacity comparisons carry this much slack


class RoundingFailure(Exception):
    """Some TP could not be placed; carries the TP id."""

    def __init__(self, tp, message="could not place TP"):
        super().__init__(f"{message} {tp}")
        self.tp = tp


class NoFeasibleAssignment(Exception):
    pass


def assignment_energy(x, inst: ProblemInstance) -> float:
    """Energy of a binary assignment under the instance's demand matrix."""
    x = inst.as_matrix(x)
    rho = (inst.d * x).sum(axis=1)
    act = rho > 1e-9
    e = float(np.where(act, inst.e_cell + inst.em.dynamic_value(rho), 0.0).sum())
    bs_act = np.bincount(inst.cell_bs, weights=act.astype(float), minlength=inst.L) > 0
    return e + float(inst.c_bs[bs_act].sum())


def _closest_sleeping_cell(j, active, loads, inst: ProblemInstance):
    """Nearest inactive candidate cell that can take TP j alone."""
    ok = inst.candidate & ~active & (loads + inst.d[:, j] <= 1.0 + CAP_SLACK)
    if not np.any(ok):
        return None
    cells = np.flatnonzero(ok)
    dist = wrap_distance(inst.cell_pos[cells], inst.tp_pos[j], inst.area)
    return int(cells[np.lexsort((cells, dist))[0]])


def round_assignment(x_relaxed, inst: ProblemInstance) -> Assignment:
    """Map a relaxed assignment to a whole-cell one.

    Entries already at one are kept.  The remaining fractional entries of
    unassigned TPs are visited from largest to smallest (ties by cell then
    TP id) and committed whenever the cell's capacity still allows it.
    TPs that survive both passes get the closest inactive cell that can
    host them; if none exists, :class:`RoundingFailure` is raised rather
    than returning an infeasible result.
    """
    xr = inst.as_matrix(x_relaxed)
    m, n = xr.shape
    x = np.zeros((m, n))

    ones_i, ones_j = np.nonzero(xr >= 1.0 - ONE_TOL)
    x[ones_i, ones_j] = 1.0
    assigned = np.zeros(n, dtype=bool)
    assigned[ones_j] = True
    loads = (inst.d * x).sum(axis=1)

    fi, fj = np.nonzero((xr > ONE_TOL) & (xr < 1.0 - ONE_TOL))
    keep = ~assigned[fj]
    fi, fj = fi[keep], fj[keep]
    order = np.lexsort((fj, fi, -xr[fi, fj]))
    for k in order:
        i, j = int(fi[k]), int(fj[k])
        if assigned[j]:
            continue
        if loads[i] + inst.d[i, j] <= 1.0 + CAP_SLACK:
            x[i, j] = 1.0
            loads[i] += inst.d[i, j]
            assigned[j] = True

    active = loads > 0
    for j in np.flatnonzero(~assigned):
        i = _closest_sleeping_cell(j, active, loads, inst)
        if i is None:
            raise RoundingFailure(int(j))
        x[i, j] = 1.0
        loads[i] += inst.d[i, j]
        active[i] = True
        assigned[j] = True

    out = Assignment(x=x, binary=True)
    out.validate()
    return out


def strongest_signal_assignment(gains, inst: ProblemInstance | None = None,
                                candidate=None) -> np.ndarray:
    """Each TP on its best-gain cell (ties to the lowest cell id).

    May violate capacity; callers repair it before using it as a start.
    """
    gains = np.asarray(gains, dtype=float)
    if candidate is None and inst is not None:
        candidate = inst.candidate
    if candidate is not None:
        gains = np.where(np.asarray(candidate, bool)[:, None], gains, -np.inf)
    best = np.argmax(gains, axis=0)
    x = np.zeros(gains.shape)
    x[best, np.arange(gains.shape[1])] = 1.0
    return x


def repair_assignment(x_binary, inst: ProblemInstance) -> np.ndarray:
    """Make a whole-cell assignment capacity-feasible.

    TPs keep their cell while it has room (visited in TP order); the rest
    are re-placed on the closest sleeping cell, as in the final rounding
    pass.  Raises :class:`RoundingFailure` when even that fails.
    """
    xb = inst.as_matrix(x_binary)
    m, n = xb.shape
    cells = np.argmax(xb, axis=0)
    x = np.zeros((m, n))
    loads = np.zeros(m)
    dj = inst.d[cells, np.arange(n)]
    deferred = []
    for j in range(n):
        i = int(cells[j])
        if inst.candidate[i] and loads[i] + dj[j] <= 1.0 + CAP_SLACK:
            x[i, j] = 1.0
            loads[i] += dj[j]
        else:
            deferred.append(j)
    active = loads > 0
    for j in deferred:
        i = _closest_sleeping_cell(j, active, loads, inst)
        if i is None:
            raise RoundingFailure(int(j))
        x[i, j] = 1.0
        loads[i] += inst.d[i, j]
        active[i] = True
    return x


@dataclass
class ExactLimits:
    max_cells: int = 9
    max_tps: int = 10
    time_budget_s: float | None = None


def exact_solve(inst: ProblemInstance, limits: ExactLimits | None = None):
    """Globally minimal-energy whole-cell assignment by branch and bound.

    Depth-first over TP choices with an incumbent prune on the energy
    already committed (static parts plus the dynamic draw of the loads so
    far).  Only meant for desk-size instances; the limits guard that.

    Returns ``(Assignment, energy_w, proven_optimal)``.
    """
    if limits is None:
        limits = ExactLimits()
    m, n = inst.M, inst.N
    if m > limits.max_cells or n > limits.max_tps:
        raise ValueError(
            f"instance {m}x{n} beyond exact-search limits "
            f"{limits.max_cells}x{limits.max_tps}"
        )

    d = inst.d
    # dynamic part enters the bound only when it cannot decrease with load
    monotone_dyn = inst.em.f_value is None
    deadline = None
    if limits.time_budget_s is not None:
        deadline = time.monotonic() + limits.time_budget_s

    best = {"energy": np.inf, "assign": None, "proven": True}
    assign = np.full(n, -1, dtype=int)
    loads = np.zeros(m)
    active = np.zeros(m, dtype=bool)
    bs_active_count = np.zeros(inst.L, dtype=int)
    static_now = 0.0

    order = np.argsort(-d.max(axis=0), kind="stable")   # hardest TPs first

    def committed_energy():
        e = static_now
        if monotone_dyn:
            e += float(inst.em.dynamic_value(loads)[active].sum())
        return e

    def recurse(pos):
        nonlocal static_now
        if deadline is not None and time.monotonic() > deadline:
            best["proven"] = False
            return
        if pos == n:
            total = float(
                static_now + inst.em.dynamic_value(loads)[active].sum()
            )
            if total < best["energy"] - 1e-12:
                best["energy"] = total
                best["assign"] = assign.copy()
            return
        if committed_energy() >= best["energy"] - 1e-12:
            return
        j = int(order[pos])
        fits = inst.candidate & (loads + d[:, j] <= 1.0 + CAP_SLACK)
        cells = np.flatnonzero(fits)
        if cells.size == 0:
            return
        # active cells first, then cheapest activations; ties by id
        act_cost = np.where(
            active[cells], 0.0,
            inst.e_cell[cells]
            + np.where(bs_active_count[inst.cell_bs[cells]] == 0,
                       inst.c_bs[inst.cell_bs[cells]], 0.0),
        )
        for k in np.lexsort((cells, act_cost)):
            i = int(cells[k])
            was_active = active[i]
            l = int(inst.cell_bs[i])
            assign[j] = i
            loads[i] += d[i, j]
            if not was_active:
                active[i] = True
                static_now += inst.e_cell[i]
                if bs_active_count[l] == 0:
                    static_now += inst.c_bs[l]
                bs_active_count[l] += 1
            recurse(pos + 1)
            if not was_active:
                bs_active_count[l] -= 1
                if bs_active_count[l] == 0:
                    static_now -= inst.c_bs[l]
                static_now -= inst.e_cell[i]
                active[i] = False
            loads[i] -= d[i, j]
            assign[j] = -1

    recurse(0)
    if best["assign"] is None:
        raise NoFeasibleAssignment(
            "no whole-cell assignment satisfies the capacities"
        )
    x = np.zeros((m, n))
    x[best["assign"], np.arange(n)] = 1.0
    out = Assignment(x=x, binary=True)
    out.validate()
    return out, float(best["energy"]), bool(best["proven"])


def consolidate_assignment(x_binary, inst: ProblemInstance) -> np.ndarray:
    """Hill descent on whole-cell moves after rounding.

    The reweighting loop prices removing load from a cell by its tangent
    slope, which badly understates the saving from emptying the cell
    entirely, so capacity-tight instances are left with shutdowns the
    relaxation cannot see.  This pass repeatedly tries to empty one active
    cell (or a whole station) by re-packing its TPs onto the remaining
    active cells, committing a move only when the network energy strictly
    drops.  Deterministic: cells are tried cheapest-to-empty first and TPs
    re-home to the cell that takes the least extra load.
    """
    x = inst.as_matrix(x_binary).copy()
    d = inst.d

    def energy(loads, act):
        e = float(np.where(act, inst.e_cell + inst.em.dynamic_value(loads), 0.0).sum())
        bs_act = np.bincount(inst.cell_bs, weights=act.astype(float),
                             minlength=inst.L) > 0
        return e + float(inst.c_bs[bs_act].sum())

    def try_empty(cells, x, loads):
        """Re-pack all TPs of ``cells`` onto other active cells, or None."""
        others = np.flatnonzero(
            (loads > 0) & inst.candidate
            & ~np.isin(np.arange(inst.M), cells)
        )
        if others.size == 0:
            return None
        tps = np.flatnonzero(x[cells, :].sum(axis=0) > 0)
        trial_loads = loads.copy()
        trial_loads[cells] = 0.0
        moves = []
        for j in tps[np.argsort(-d[cells][:, tps].max(axis=0), kind="stable")]:
            room = 1.0 + CAP_SLACK - trial_loads[others] - d[others, j]
            ok = np.flatnonzero(room >= 0)
            if ok.size == 0:
                return None
            cand = others[ok]
            pick = cand[np.lexsort((cand, d[cand, j]))[0]]
            trial_loads[pick] += d[pick, j]
            moves.append((int(pick), int(j)))
        return moves, trial_loads

    def best_relocation(x, loads, act, e_now):
        """Move one active cell's whole service set onto another cell."""
        best = None
        for a in np.flatnonzero(act):
            tps = np.flatnonzero(x[a] > 0)
            extra = d[:, tps].sum(axis=1)
            room = inst.candidate & (np.arange(inst.M) != a) & \
                (loads + extra <= 1.0 + CAP_SLACK)
            room[a] = False
            for c in np.flatnonzero(room):
                trial_loads = loads.copy()
                trial_loads[a] = 0.0
                trial_loads[c] += extra[c]
                e_new = energy(trial_loads, trial_loads > 1e-9)
                if e_new < e_now - 1e-9 and (best is None or e_new < best[0] - 1e-12):
                    best = (e_new, int(a), int(c), tps)
        return best

    while True:
        improved = False
        loads = (d * x).sum(axis=1)
        act = loads > 1e-9
        active = np.flatnonzero(act)
        counts = x[active].sum(axis=1)
        # single cells first (fewest TPs first), then whole stations
        targets = [np.array([c]) for c in active[np.lexsort((active, counts))]]
        for l in range(inst.L):
            cells = np.flatnonzero((inst.cell_bs == l) & act)
            if cells.size > 1:
                targets.append(cells)
        for cells in targets:
            loads = (d * x).sum(axis=1)
            e_now = energy(loads, loads > 1e-9)
            got = try_empty(cells, x, loads)
            if got is None:
                continue
            moves, trial_loads = got
            if energy(trial_loads, trial_loads > 1e-9) < e_now - 1e-9:
                for i, j in moves:
                    x[:, j] = 0.0
                    x[i, j] = 1.0
                improved = True
        if not improved:
            loads = (d * x).sum(axis=1)
            act = loads > 1e-9
            move = best_relocation(x, loads, act, energy(loads, act))
            if move is not None:
                _, a, c, tps = move
                x[:, tps] = 0.0
                x[c, tps] = 1.0
                improved = True
        if not improved:
            return x


def greedy_zoom(inst: ProblemInstance) -> Assignment:
    """Activation-greedy baseline.

    Repeatedly wakes the cell that can absorb the most still-unassigned
    TPs within unit capacity (ties: larger absorbed demand, then lower
    id) and assigns them to it.  Deterministic stand-in for cell-zooming
    style schemes.
    """
    m, n = inst.M, inst.N
    x = np.zeros((m, n))
    unassigned = np.ones(n, dtype=bool)
    used = np.zeros(m, dtype=bool)

    while np.any(unassigned):
        best = None   # (count, demand, -i) maximized
        for i in range(m):
            if used[i] or not inst.candidate[i]:
                continue
            dj = inst.d[i, unassigned]
            take = np.sort(dj[dj <= 1.0 + CAP_SLACK])
            cum = np.cumsum(take)
            count = int(np.searchsorted(cum, 1.0 + CAP_SLACK, side="right"))
            demand = float(cum[count - 1]) if count else 0.0
            cand = (count, demand, -i)
            if count > 0 and (best is None or cand > best[0]):
                best = (cand, i)
        if best is None:
            raise NoFeasibleAssignment(
                f"{int(unassigned.sum())} TPs fit no remaining cell"
            )
        i = best[1]
        pend = np.flatnonzero(unassigned)
        order = pend[np.lexsort((pend, inst.d[i, pend]))]
        load = 0.0
        for j in order:
            if load + inst.d[i, j] <= 1.0 + CAP_SLACK:
                x[i, j] = 1.0
                load += inst.d[i, j]
                unassigned[j] = False
        used[i] = True

    out = Assignment(x=x, binary=True)
    out.validate()
    return out
