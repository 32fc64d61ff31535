"""Exact deterministic solver for the assignment-with-capacities LP.

The problem solved here is::

    minimize    sum_ij w_ij x_ij
    subject to  sum_j d_ij x_ij <= 1      for every cell i      (capacity)
                sum_i x_ij       = 1      for every TP j        (assignment)
                0 <= x_ij <= 1, entries outside the allowed mask fixed at 0

A general-purpose simplex would carry an (M+N)-row basis; here the N
assignment rows are generalized upper bounds, so one member of each column
is kept as its *key* variable and eliminated.  What remains is a working
basis of only M columns (capacity slacks, overflow artificials and the
fractional non-key entries), small enough for a dense explicit inverse.

The solver is a bounded-variable primal simplex on that reduced system:
Dantzig pricing with a refreshed shortlist, a permanent switch to Bland's
rule after a stall to rule out cycling, Sherman-Morrison updates of the
working-basis inverse with periodic refactorization, and a phase 1 with
per-row overflow columns whose positive optimum yields an infeasibility
certificate.  On instances beyond ``SIFT_LIMIT`` variables, pricing runs
over a growing candidate subset; optimality is only declared after a full
reduced-cost sweep over every allowed variable, so the returned point is
the exact LP optimum either way, and a vertex (at most M + N fractional
entries).

Identical input bytes produce identical output bytes: every choice
(entering, leaving, re-keying) breaks ties by index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LpProblem", "LpSolution", "LpInfeasibleError", "solve_lp", "dump_problem"]

RC_TOL = 1e-9          # reduced-cost tolerance, relative to term magnitudes
FEAS_TOL = 1e-8        # primal feasibility tolerance
PIV_TOL = 1e-11        # smallest usable ratio-test rate
REFRESH_EVERY = 100    # pivots between working-basis refactorizations
SIFT_LIMIT = 300_000   # price all variables when M*N is at most this
SHORTLIST = 64         # entering candidates cached between pricing sweeps

_SLACK = -1            # wb_kind marker: capacity slack (+e_i column)
_OVER = -2             # wb_kind marker: overflow artificial (-e_i column)


@dataclass
class LpProblem:
    """Objective weights, capacity coefficients and the allowed-entry mask.

    ``allowed`` plays the role of the box bounds: True entries have bounds
    [0, 1], False entries are fixed at 0.  ``start`` optionally provides a
    feasible assignment whose vertex seeds the simplex; it is part of the
    problem input, so determinism is preserved.
    """

    w: np.ndarray
    d: np.ndarray
    allowed: np.ndarray | None = None
    start: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=float)
        self.d = np.ascontiguousarray(self.d, dtype=float)
        if self.w.ndim != 2 or self.w.shape != self.d.shape:
            raise ValueError("w and d must be matrices of equal shape")
        if not np.all(np.isfinite(self.w)) or not np.all(np.isfinite(self.d)):
            raise ValueError("coefficients must be finite")
        if np.any(self.d < 0):
            raise ValueError("capacity coefficients must be nonnegative")
        if self.allowed is not None:
            self.allowed = np.asarray(self.allowed, dtype=bool)
            if self.allowed.shape != self.w.shape:
                raise ValueError("allowed mask shape mismatch")
        if self.start is not None:
            self.start = np.asarray(self.start, dtype=float)
            if self.start.shape != self.w.shape:
                raise ValueError("start shape mismatch")


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str                    # "optimal" or "infeasible"
    pivots: int
    certificate: dict | None = None
    dual_capacity: np.ndarray | None = None   # y <= 0, one per capacity row
    dual_assign: np.ndarray | None = None     # mu, one per assignment column


class LpInfeasibleError(Exception):
    """Raised by callers that cannot proceed; carries the certificate."""

    def __init__(self, certificate):
        super().__init__(f"LP infeasible: {certificate}")
        self.certificate = certificate


class _Numerics(RuntimeError):
    pass


class _Simplex:
    def __init__(self, p: LpProblem, use_start: bool = True):
        self.w = p.w
        self.d = p.d
        self.M, self.N = p.d.shape
        self.allowed = (
            p.allowed if p.allowed is not None
            else np.ones((self.M, self.N), dtype=bool)
        )
        if not np.all(self.allowed.any(axis=0)):
            bad = np.flatnonzero(~self.allowed.any(axis=0))
            raise LpInfeasibleError({"unservable_tps": bad.tolist()})
        start = p.start if use_start else None
        self.pivots = 0
        self.bland = False
        self.stall = 0
        self.updates_since_refresh = 0
        self.phase = 1
        self._queue_i = np.zeros(0, dtype=int)
        self._queue_j = np.zeros(0, dtype=int)
        self._init_candidates(start)
        self._init_basis(start)

    # -- candidate management --------------------------------------------------

    def _init_candidates(self, start):
        m, n = self.M, self.N
        if m * n <= SIFT_LIMIT:
            self.sifting = False
            ci, cj = np.nonzero(self.allowed)
        else:
            self.sifting = True
            mask = np.zeros((m, n), dtype=bool)
            cols = np.arange(n)[None, :]
            dd = np.where(self.allowed, self.d, np.inf)
            k = min(10, m)
            mask[np.argpartition(dd, k - 1, axis=0)[:k, :], cols] = True
            ww = np.where(self.allowed, self.w, np.inf)
            k = min(6, m)
            mask[np.argpartition(ww, k - 1, axis=0)[:k, :], cols] = True
            if start is not None:
                mask |= start > 0
            mask &= self.allowed
            self.in_cand = mask
            ci, cj = np.nonzero(mask)
        self.cand_i = ci
        self.cand_j = cj
        self.cand_idx = ci * n + cj     # global variable ids for Bland's rule

    def _add_candidates(self, ii, jj) -> int:
        keep = ~self.in_cand[ii, jj]
        ii, jj = ii[keep], jj[keep]
        if ii.size == 0:
            return 0
        self.in_cand[ii, jj] = True
        self.cand_i = np.concatenate([self.cand_i, ii])
        self.cand_j = np.concatenate([self.cand_j, jj])
        self.cand_idx = np.concatenate([self.cand_idx, ii * self.N + jj])
        return ii.size

    # -- basis construction ------------------------------------------------------

    def _init_basis(self, start):
        m, n = self.M, self.N
        if start is None:
            dd = np.where(self.allowed, self.d, np.inf)
            self.keys = np.argmin(dd, axis=0)
            frac_i = frac_j = np.zeros(0, dtype=int)
        else:
            xs = np.where(self.allowed, start, 0.0)
            if np.any(xs.sum(axis=0) <= 0):
                raise _Numerics("start assigns nothing to some TP")
            self.keys = np.argmax(xs, axis=0)
            nonkey = xs > 1e-12
            nonkey[self.keys, np.arange(n)] = False
            frac_i, frac_j = np.nonzero(nonkey)

        # independent fractional columns first (modified Gram-Schmidt),
        # then capacity slacks, until the working basis has M members
        kinds, sets = [], []
        q = np.zeros((m, m))
        k = 0
        for i, j in zip(frac_i, frac_j):
            if k >= m:
                break
            col = np.zeros(m)
            col[i] += self.d[i, j]
            col[self.keys[j]] -= self.d[self.keys[j], j]
            r = col - q[:, :k] @ (q[:, :k].T @ col)
            nrm = np.linalg.norm(r)
            if nrm > 1e-9 * max(1.0, np.linalg.norm(col)):
                q[:, k] = r / nrm
                k += 1
                kinds.append(i)
                sets.append(j)
        for i in range(m):
            if k >= m:
                break
            col = np.zeros(m)
            col[i] = 1.0
            r = col - q[:, :k] @ (q[:, :k].T @ col)
            nrm = np.linalg.norm(r)
            if nrm > 1e-9:
                q[:, k] = r / nrm
                k += 1
                kinds.append(_SLACK)
                sets.append(i)
        if k < m:
            raise _Numerics("could not assemble a working basis")

        self.wb_kind = np.array(kinds, dtype=int)   # cell id, _SLACK or _OVER
        self.wb_j = np.array(sets, dtype=int)       # TP id, or row id for aux
        self._refresh(first=True)

    def _basis_matrix(self) -> np.ndarray:
        m = self.M
        w_mat = np.zeros((m, m))
        for r in range(m):
            kind = self.wb_kind[r]
            if kind == _SLACK:
                w_mat[self.wb_j[r], r] = 1.0
            elif kind == _OVER:
                w_mat[self.wb_j[r], r] = -1.0
            else:
                j = self.wb_j[r]
                w_mat[kind, r] += self.d[kind, j]
                w_mat[self.keys[j], r] -= self.d[self.keys[j], j]
        return w_mat

    def _refresh(self, first: bool = False):
        """Rebuild the inverse and all values from the basis description."""
        m, n = self.M, self.N
        w_mat = self._basis_matrix()
        try:
            self.winv = np.linalg.inv(w_mat)
        except np.linalg.LinAlgError as exc:
            raise _Numerics("singular working basis") from exc
        bhat = np.ones(m) - np.bincount(
            self.keys, weights=self.d[self.keys, np.arange(n)], minlength=m
        )
        self.wb_val = self.winv @ bhat
        self.key_val = np.ones(n)
        struct = self.wb_kind >= 0
        np.add.at(self.key_val, self.wb_j[struct], -self.wb_val[struct])
        self.updates_since_refresh = 0
        if first:
            # rows driven over capacity by the keys become overflow columns
            neg = (self.wb_val < -FEAS_TOL) & (self.wb_kind == _SLACK)
            if np.any(neg):
                self.wb_kind[neg] = _OVER
                self._refresh()
                neg2 = self.wb_val < -FEAS_TOL
                if np.any(neg2):
                    raise _Numerics("infeasible start basis")
        if np.any(self.wb_val < -1e-6) or np.any(self.key_val < -1e-6):
            raise _Numerics("basis values drifted negative")
        np.maximum(self.wb_val, 0.0, out=self.wb_val)
        np.maximum(self.key_val, 0.0, out=self.key_val)
        self._mark_basics()

    def _mark_basics(self):
        self.is_basic = np.zeros((self.M, self.N), dtype=bool)
        self.is_basic[self.keys, np.arange(self.N)] = True
        struct = self.wb_kind >= 0
        self.is_basic[self.wb_kind[struct], self.wb_j[struct]] = True

    # -- pricing -------------------------------------------------------------------

    def _duals(self):
        n = self.N
        cb = np.zeros(self.M)
        struct = self.wb_kind >= 0
        ar = np.arange(n)
        if self.phase == 1:
            cb[self.wb_kind == _OVER] = 1.0
            y = self.winv.T @ cb
            mu = -y[self.keys] * self.d[self.keys, ar]
        else:
            i_arr = self.wb_kind[struct]
            j_arr = self.wb_j[struct]
            cb[struct] = self.w[i_arr, j_arr] - self.w[self.keys[j_arr], j_arr]
            y = self.winv.T @ cb
            mu = self.w[self.keys, ar] - y[self.keys] * self.d[self.keys, ar]
        return y, mu

    def _rc_batch(self, ii, jj, y, mu):
        """Scaled reduced costs of structural variables (basics -> +inf)."""
        wv = self.w[ii, jj] if self.phase == 2 else 0.0
        yterm = y[ii] * self.d[ii, jj]
        rc = wv - yterm - mu[jj]
        scale = np.maximum(1.0, np.abs(wv) + np.abs(yterm) + np.abs(mu[jj]))
        out = rc / scale
        out[self.is_basic[ii, jj]] = np.inf
        return out

    def _slack_rc(self, y):
        rc = -y.copy()
        aux = self.wb_kind < 0
        basic_slack = np.zeros(self.M, dtype=bool)
        basic_slack[self.wb_j[aux]] = True
        rc[basic_slack] = np.inf
        return rc

    def _select_entering(self, y, mu):
        """Return ('x', i, j), ('s', i, None) or None when candidate-optimal."""
        rc_slack = self._slack_rc(y)
        if self.bland:
            rc = self._rc_batch(self.cand_i, self.cand_j, y, mu)
            neg = rc < -RC_TOL
            if neg.any():
                pos = np.flatnonzero(neg)
                best = pos[np.argmin(self.cand_idx[pos])]
                return ("x", int(self.cand_i[best]), int(self.cand_j[best]))
            negs = np.flatnonzero(rc_slack < -RC_TOL)
            if negs.size:
                return ("s", int(negs[0]), None)
            return None

        # try the cached shortlist before rescanning every candidate
        if self._queue_i.size:
            rc = self._rc_batch(self._queue_i, self._queue_j, y, mu)
            keep = rc < -RC_TOL
            self._queue_i = self._queue_i[keep]
            self._queue_j = self._queue_j[keep]
            rc = rc[keep]
            if rc.size:
                b = int(np.argmin(rc))
                i, j = int(self._queue_i[b]), int(self._queue_j[b])
                keep = np.ones(rc.size, dtype=bool)
                keep[b] = False
                self._queue_i = self._queue_i[keep]
                self._queue_j = self._queue_j[keep]
                min_s = rc_slack.min() if rc_slack.size else np.inf
                if min_s < rc[b]:
                    return ("s", int(np.argmin(rc_slack)), None)
                return ("x", i, j)

        rc = self._rc_batch(self.cand_i, self.cand_j, y, mu)
        neg = np.flatnonzero(rc < -RC_TOL)
        min_s = rc_slack.min() if rc_slack.size else np.inf
        if neg.size == 0 and min_s >= -RC_TOL:
            return None
        if neg.size:
            order = neg[np.argsort(rc[neg], kind="stable")][:SHORTLIST]
            self._queue_i = self.cand_i[order].copy()
            self._queue_j = self.cand_j[order].copy()
            best = order[0]
            if rc[best] <= min_s:
                self._queue_i = self._queue_i[1:]
                self._queue_j = self._queue_j[1:]
                return ("x", int(self.cand_i[best]), int(self.cand_j[best]))
        return ("s", int(np.argmin(rc_slack)), None)

    def _full_price(self):
        """Sweep every allowed variable; returns violating entries."""
        y, mu = self._duals()
        yterm = y[:, None] * self.d
        if self.phase == 1:
            rc = -yterm - mu[None, :]
            scale = np.maximum(1.0, np.abs(yterm) + np.abs(mu)[None, :])
        else:
            rc = self.w - yterm - mu[None, :]
            scale = np.maximum(1.0, np.abs(self.w) + np.abs(yterm) + np.abs(mu)[None, :])
        bad = (rc < -RC_TOL * scale) & self.allowed & ~self.is_basic
        return np.nonzero(bad)

    # -- pivoting ----------------------------------------------------------------------

    def _pivot(self, kind, ei, ej, rc_mag):
        m, n = self.M, self.N
        col = np.zeros(m)
        if kind == "s":
            col[ei] = 1.0
        else:
            col[ei] += self.d[ei, ej]
            col[self.keys[ej]] -= self.d[self.keys[ej], ej]
        alpha = self.winv @ col

        struct = self.wb_kind >= 0
        rate_key = np.zeros(n)
        np.add.at(rate_key, self.wb_j[struct], alpha[struct])
        if kind == "x":
            rate_key[ej] -= 1.0

        ratios_wb = np.full(m, np.inf)
        dec = alpha > PIV_TOL
        ratios_wb[dec] = self.wb_val[dec] / alpha[dec]
        if self.phase == 2:
            # overflow members are pinned at zero once phase 1 is done
            inc = (self.wb_kind == _OVER) & (alpha < -PIV_TOL)
            ratios_wb[inc] = self.wb_val[inc] / alpha[inc]
            np.maximum(ratios_wb, 0.0, out=ratios_wb)

        blocking = rate_key < -PIV_TOL
        ratios_key = np.full(n, np.inf)
        ratios_key[blocking] = self.key_val[blocking] / -rate_key[blocking]

        t = min(ratios_wb.min(initial=np.inf), ratios_key.min(initial=np.inf))
        if not np.isfinite(t):
            raise _Numerics("unbounded direction in a bounded problem")
        t = max(t, 0.0)

        window = t + max(1e-12, 1e-9 * t)
        wb_ties = np.flatnonzero(ratios_wb <= window)
        key_ties = np.flatnonzero(ratios_key <= window)

        use_wb = use_key = None
        if self.bland:
            best = None
            for r in wb_ties:
                if self.wb_kind[r] >= 0:
                    idx = self.wb_kind[r] * n + self.wb_j[r]
                else:
                    idx = m * n + self.wb_j[r]
                if best is None or idx < best[0]:
                    best = (idx, "wb", int(r))
            for qq in key_ties:
                idx = self.keys[qq] * n + qq
                if best is None or idx < best[0]:
                    best = (idx, "key", int(qq))
            if best[1] == "wb":
                use_wb = best[2]
            else:
                use_key = best[2]
        else:
            mag_wb = np.abs(alpha[wb_ties]) if wb_ties.size else np.zeros(0)
            mag_key = np.abs(rate_key[key_ties]) if key_ties.size else np.zeros(0)
            if (mag_wb.max() if mag_wb.size else -1.0) >= \
               (mag_key.max() if mag_key.size else -1.0):
                use_wb = int(wb_ties[np.argmax(mag_wb)])
            else:
                use_key = int(key_ties[np.argmax(mag_key)])

        self.wb_val -= t * alpha
        self.key_val += t * rate_key
        np.maximum(self.wb_val, 0.0, out=self.wb_val)
        np.maximum(self.key_val, 0.0, out=self.key_val)

        if use_wb is not None:
            r = use_wb
            leaving = self.wb_kind[r]
            if leaving >= 0:
                self.is_basic[leaving, self.wb_j[r]] = False
            self.wb_kind[r] = ei if kind == "x" else _SLACK
            self.wb_j[r] = ej if kind == "x" else ei
            self.wb_val[r] = t
            if kind == "x":
                self.is_basic[ei, ej] = True
            piv = alpha[r]
            if abs(piv) < 1e-9:
                self._refresh()
            else:
                u = alpha.copy()
                row = self.winv[r, :] / piv
                self.winv -= np.outer(u, row)
                self.winv[r, :] = row
                self.updates_since_refresh += 1
                if self.updates_since_refresh >= REFRESH_EVERY:
                    self._refresh()
        elif kind == "x" and use_key == ej:
            # entering takes over as key of its own set
            q = use_key
            old_key = self.keys[q]
            self.is_basic[old_key, q] = False
            self.keys[q] = ei
            self.is_basic[ei, q] = True
            self.key_val[q] = t
            slots = np.flatnonzero((self.wb_kind >= 0) & (self.wb_j == q))
            if slots.size:
                # member columns of this set reference the key: rebuild
                self._refresh()
        else:
            # a foreign key died: promote one of its working members
            q = use_key
            old_key = self.keys[q]
            slots = np.flatnonzero((self.wb_kind >= 0) & (self.wb_j == q))
            if slots.size == 0:
                raise _Numerics("key left without a promotable member")
            if self.bland:
                r = int(slots[np.argmin(self.wb_kind[slots])])
            else:
                r = int(slots[np.argmax(self.wb_val[slots])])
            promoted = self.wb_kind[r]
            self.is_basic[old_key, q] = False
            self.keys[q] = promoted
            self.key_val[q] = self.wb_val[r]
            self.wb_kind[r] = ei if kind == "x" else _SLACK
            self.wb_j[r] = ej if kind == "x" else ei
            self.wb_val[r] = t
            if kind == "x":
                self.is_basic[ei, ej] = True
            self._refresh()

        self.pivots += 1
        if rc_mag * t > 1e-13:
            self.stall = 0
        else:
            self.stall += 1
            if self.stall > self.stall_limit and not self.bland:
                self.bland = True
                self._queue_i = np.zeros(0, dtype=int)
                self._queue_j = np.zeros(0, dtype=int)

    # -- main loop ------------------------------------------------------------------------

    def _objective(self) -> float:
        n = self.N
        if self.phase == 1:
            return float(self.wb_val[self.wb_kind == _OVER].sum())
        struct = self.wb_kind >= 0
        obj = float((self.w[self.keys, np.arange(n)] * self.key_val).sum())
        i_arr = self.wb_kind[struct]
        j_arr = self.wb_j[struct]
        return obj + float((self.w[i_arr, j_arr] * self.wb_val[struct]).sum())

    def _run_phase(self, max_pivots):
        while True:
            y, mu = self._duals()
            choice = self._select_entering(y, mu)
            if choice is None:
                if self.sifting:
                    ii, jj = self._full_price()
                    if len(ii):
                        order = np.argsort(ii * self.N + jj, kind="stable")
                        self._add_candidates(ii[order], jj[order])
                        self._queue_i = np.zeros(0, dtype=int)
                        self._queue_j = np.zeros(0, dtype=int)
                        continue
                return
            kind, i, j = choice
            if kind == "x":
                rc = self._rc_batch(np.array([i]), np.array([j]), y, mu)[0]
            else:
                rc = self._slack_rc(y)[i]
            if rc >= -RC_TOL:
                # shortlist gave a stale candidate; force a fresh sweep
                self._queue_i = np.zeros(0, dtype=int)
                self._queue_j = np.zeros(0, dtype=int)
                continue
            self._pivot(kind, i, j, -rc)
            if self.pivots > max_pivots:
                raise _Numerics("pivot limit exceeded")

    def solve(self, max_pivots=None) -> LpSolution:
        m, n = self.M, self.N
        if max_pivots is None:
            max_pivots = 200 * (m + n) + 100_000
        self.stall_limit = max(1000, 4 * m)

        if np.any(self.wb_kind == _OVER):
            self.phase = 1
            self._run_phase(max_pivots)
            excess = self._objective()
            if excess > 1e-7:
                over = self.wb_kind == _OVER
                rows = self.wb_j[over][self.wb_val[over] > 1e-9]
                cert = {
                    "excess_load": float(excess),
                    "overloaded_cells": sorted(int(r) for r in rows),
                }
                return LpSolution(
                    x=self._solution_x(), objective=np.inf, status="infeasible",
                    pivots=self.pivots, certificate=cert,
                )
        self.phase = 2
        self.bland = False
        self.stall = 0
        self._queue_i = np.zeros(0, dtype=int)
        self._queue_j = np.zeros(0, dtype=int)
        self._run_phase(max_pivots)

        x = self._solution_x()
        y, mu = self._duals()
        return LpSolution(
            x=x,
            objective=float((self.w * x).sum()),
            status="optimal",
            pivots=self.pivots,
            dual_capacity=y,
            dual_assign=mu,
        )

    def _solution_x(self) -> np.ndarray:
        x = np.zeros((self.M, self.N))
        x[self.keys, np.arange(self.N)] = self.key_val
        struct = self.wb_kind >= 0
        x[self.wb_kind[struct], self.wb_j[struct]] = self.wb_val[struct]
        return x


def solve_lp(problem: LpProblem, max_pivots: int | None = None) -> LpSolution:
    """Solve the assignment LP exactly; deterministic for identical input.

    Returns a vertex optimum or an ``infeasible`` solution whose certificate
    names unservable TPs or the capacity rows that cannot absorb the demand
    forced onto them.
    """
    try:
        try:
            return _Simplex(problem).solve(max_pivots=max_pivots)
        except _Numerics:
            if problem.start is None:
                raise
            # retry once from a cold basis; still deterministic
            return _Simplex(problem, use_start=False).solve(max_pivots=max_pivots)
    except LpInfeasibleError as exc:
        return LpSolution(
            x=np.zeros_like(problem.w), objective=np.inf,
            status="infeasible", pivots=0, certificate=exc.certificate,
        )


def dump_problem(problem: LpProblem, path) -> None:
    """Plain-text tabular dump (one variable per line) for cross-checking."""
    m, n = problem.d.shape
    allowed = problem.allowed if problem.allowed is not None else np.ones((m, n), bool)
    with open(path, "w") as f:
        f.write(f"# assignment-lp m={m} n={n}\n")
        f.write("# capacity rhs 1 per cell, column sums 1 per tp, box [0,1]\n")
        f.write("cell tp weight demand allowed\n")
        for i in range(m):
            for j in range(n):
                f.write(f"{i} {j} {problem.w[i, j]!r} {problem.d[i, j]!r} "
                        f"{int(allowed[i, j])}\n")
