"""Base-station and network power consumption.

A station draws power only while at least one of its cells carries load:
a shared static part per active station, a static part per active cell, and
a load-dependent dynamic part per cell.  Activity is decided against a tiny
threshold so floating-point dust cannot toggle a station on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import Topology

__all__ = [
    "ACTIVITY_EPS",
    "EnergyModel",
    "ActivityReport",
    "active_cells",
    "bs_energy",
    "network_energy",
    "full_load_energy",
    "normalized_energy",
    "activity_report",
]

# loads above this count as activity; below, the cell is asleep
ACTIVITY_EPS = 1e-9


@dataclass
class EnergyModel:
    """Per-station and per-cell power parameters, in watts.

    The dynamic term defaults to the linear map ``k_cell * rho``.  Supplying
    ``f_value``/``f_deriv`` (vectorized over a per-cell load array) swaps in
    any concave continuously differentiable alternative; both must be given
    together.  ``cell_type`` tags cells (1 or 2) for heterogeneous setups;
    it only affects reporting, the arrays already carry the actual values.
    """

    c_bs: np.ndarray       # (L,) static draw of an active station
    e_cell: np.ndarray     # (M,) static draw of an active cell
    k_cell: np.ndarray     # (M,) linear dynamic slope, watts per unit load
    f_value: object = None
    f_deriv: object = None
    cell_type: np.ndarray = field(default=None)

    def __post_init__(self):
        self.c_bs = np.atleast_1d(np.asarray(self.c_bs, dtype=float))
        self.e_cell = np.atleast_1d(np.asarray(self.e_cell, dtype=float))
        self.k_cell = np.broadcast_to(
            np.asarray(self.k_cell, dtype=float), self.e_cell.shape
        ).copy()
        if np.any(self.c_bs < 0) or np.any(self.e_cell < 0) or np.any(self.k_cell < 0):
            raise ValueError("energy parameters must be nonnegative")
        if (self.f_value is None) != (self.f_deriv is None):
            raise ValueError("custom dynamic terms need both value and derivative")
        if self.cell_type is None:
            self.cell_type = np.ones(self.e_cell.shape[0], dtype=int)
        else:
            self.cell_type = np.asarray(self.cell_type, dtype=int)

    @classmethod
    def uniform(cls, topo: Topology, c: float = 500.0, e: float = 280.0,
                k: float = 564.0) -> "EnergyModel":
        """Same parameters for every station and cell (3-sector defaults)."""
        return cls(
            c_bs=np.full(topo.n_bs, float(c)),
            e_cell=np.full(topo.n_cells, float(e)),
            k_cell=np.full(topo.n_cells, float(k)),
        )

    @classmethod
    def two_type(cls, topo: Topology, e_base: float, beta: float,
                 scheme: str = "colocated_pairs", c: float = 0.0,
                 k: float = 0.0) -> "EnergyModel":
        """Half the cells at ``e_base`` (type 1), half at ``beta * e_base``
        (type 2).

        ``colocated_pairs`` expects two cells per station and makes the
        second of each pair type 2; ``split_half`` tags the upper half of
        the cell ids.
        """
        m = topo.n_cells
        if scheme == "colocated_pairs":
            order = np.zeros(m, dtype=int)
            for cells in topo.sector_map():
                for rank, i in enumerate(cells):
                    order[i] = rank
            types = np.where(order == 0, 1, 2)
        elif scheme == "split_half":
            types = np.where(np.arange(m) < m // 2, 1, 2)
        else:
            raise ValueError(f"unknown type scheme {scheme!r}")
        e = np.where(types == 1, e_base, beta * e_base)
        return cls(
            c_bs=np.full(topo.n_bs, float(c)),
            e_cell=e.astype(float),
            k_cell=np.full(m, float(k)),
            cell_type=types,
        )

    def dynamic_value(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.f_value is not None:
            return np.asarray(self.f_value(rho), dtype=float)
        return self.k_cell * rho

    def dynamic_deriv(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.f_deriv is not None:
            return np.asarray(self.f_deriv(rho), dtype=float)
        return np.broadcast_to(self.k_cell, rho.shape).copy()


@dataclass
class ActivityReport:
    active_cells: np.ndarray   # sorted cell ids with load above threshold
    active_bs: np.ndarray      # sorted station ids with an active cell
    bs_energy_w: np.ndarray    # (L,) per-station draw, 0 for inactive


def active_cells(rho) -> np.ndarray:
    return np.asarray(rho, dtype=float) > ACTIVITY_EPS


def _per_bs_energy(rho, em: EnergyModel, topo: Topology) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("loads must be nonnegative")
    act = active_cells(rho)
    per_cell = np.where(act, em.e_cell + em.dynamic_value(rho), 0.0)
    cell_sum = np.bincount(topo.cell_bs, weights=per_cell, minlength=topo.n_bs)
    bs_active = np.bincount(topo.cell_bs, weights=act.astype(float),
                            minlength=topo.n_bs) > 0
    return np.where(bs_active, em.c_bs + cell_sum, 0.0)


def bs_energy(l: int, rho, em: EnergyModel, topo: Topology) -> float:
    """Power draw of station ``l``: zero when asleep, otherwise the shared
    static part plus the static and dynamic parts of its active cells."""
    return float(_per_bs_energy(rho, em, topo)[l])


def network_energy(rho, em: EnergyModel, topo: Topology) -> float:
    """Total power draw of the network at loads ``rho``."""
    return float(_per_bs_energy(rho, em, topo).sum())


def full_load_energy(em: EnergyModel, topo: Topology) -> float:
    """Draw with every cell active and fully loaded; the normalization base."""
    ones = np.ones(topo.n_cells)
    return float(em.c_bs.sum() + em.e_cell.sum() + em.dynamic_value(ones).sum())


def normalized_energy(rho, em: EnergyModel, topo: Topology) -> float:
    """Network energy as a fraction of the all-active fully loaded draw."""
    base = full_load_energy(em, topo)
    if base <= 0:
        raise ValueError("energy model is identically zero")
    return network_energy(rho, em, topo) / base


def activity_report(rho, em: EnergyModel, topo: Topology) -> ActivityReport:
    per_bs = _per_bs_energy(rho, em, topo)
    act = active_cells(rho)
    return ActivityReport(
        active_cells=np.flatnonzero(act),
        active_bs=np.flatnonzero(per_bs > 0),
        bs_energy_w=per_bs,
    )
