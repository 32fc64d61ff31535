"""SINR, spectral efficiency and the cell load induced by an assignment.

The downlink interference seen by a TP scales with the loads of the other
cells: a fully loaded interferer transmits on all its resources.  Holding
the load vector fixed therefore fixes every link's spectral efficiency, and
the load each TP puts on its serving cell becomes a constant coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinkParams",
    "Assignment",
    "dbm_to_watts",
    "watts_to_dbm",
    "sinr_matrix",
    "sinr",
    "spectral_efficiency_matrix",
    "spectral_efficiency",
    "worst_case_efficiency",
    "demand_coefficients",
    "load_from_assignment",
]


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


# Default noise: thermal floor over 180 kHz plus a 9 dB receiver noise figure.
DEFAULT_NOISE_W = float(dbm_to_watts(-174.0 + 10.0 * np.log10(180e3) + 9.0))


@dataclass
class LinkParams:
    """Radio-link constants.

    ``tx_power`` (W) and ``bandwidth`` (Hz) may be scalars or per-cell
    arrays; the efficiency factors ``eff_bw`` and ``eff_sinr`` may be
    scalars or per-link (M, N) arrays.  ``bandwidth`` is the share left
    after any signaling reserve (see :meth:`with_signaling_reserve`).
    """

    tx_power: float | np.ndarray = 10.0           # 40 dBm
    noise: float = DEFAULT_NOISE_W
    bandwidth: float | np.ndarray = 20e6
    eff_bw: float | np.ndarray = 0.83
    eff_sinr: float | np.ndarray = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.tx_power) <= 0):
            raise ValueError("tx_power must be positive")
        if self.noise <= 0:
            raise ValueError("noise must be positive")
        if np.any(np.asarray(self.bandwidth) <= 0):
            raise ValueError("bandwidth must be positive")
        if np.any(np.asarray(self.eff_bw) <= 0) or np.any(np.asarray(self.eff_sinr) <= 0):
            raise ValueError("efficiency factors must be positive")

    @classmethod
    def with_signaling_reserve(cls, total_bandwidth, reserve, **kwargs):
        """Build params from gross bandwidth minus the signaling reserve."""
        net = np.asarray(total_bandwidth, dtype=float) - np.asarray(reserve, dtype=float)
        if np.any(net <= 0):
            raise ValueError("signaling reserve leaves no usable bandwidth")
        if net.ndim == 0:
            net = float(net)
        return cls(bandwidth=net, **kwargs)

    def power_vector(self, m: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.tx_power, dtype=float), (m,))

    def bandwidth_vector(self, m: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.bandwidth, dtype=float), (m,))


@dataclass
class Assignment:
    """TP-to-cell assignment matrix; every column sums to one.

    Entries live in [0, 1]; with ``binary`` set they are exactly 0/1 and each
    TP has a single serving cell.
    """

    x: np.ndarray
    binary: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            raise ValueError("assignment must be a matrix")

    def validate(self, tol: float = 1e-6) -> None:
        col = self.x.sum(axis=0)
        if np.any(np.abs(col - 1.0) > tol):
            raise ValueError("assignment columns must sum to 1")
        if np.any(self.x < -tol) or np.any(self.x > 1 + tol):
            raise ValueError("assignment entries must lie in [0, 1]")
        if self.binary:
            if np.any((self.x > tol) & (self.x < 1 - tol)):
                raise ValueError("binary assignment has fractional entries")

    @property
    def serving_cell(self) -> np.ndarray:
        """Per-TP argmax cell (meaningful for binary assignments)."""
        return np.argmax(self.x, axis=0)


def sinr_matrix(rho, gains, lp: LinkParams) -> np.ndarray:
    """SINR of every (cell, TP) link at interferer loads ``rho``.

    Link (i, j) sees the full power of cell i and the load-scaled power of
    every other cell::

        sinr[i, j] = P_i G[i, j] / (sum_{k != i} P_k G[k, j] rho_k + noise)
    """
    gains = np.asarray(gains, dtype=float)
    m = gains.shape[0]
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (m,))
    if np.any(rho < 0):
        raise ValueError("loads must be nonnegative")
    p = lp.power_vector(m)
    received = p[:, None] * gains
    total = (p * rho) @ gains                       # (N,) all-cell interference
    denom = total[None, :] - received * rho[:, None] + lp.noise
    return received / denom


def sinr(i: int, j: int, rho, gains, lp: LinkParams) -> float:
    return float(sinr_matrix(rho, gains, lp)[i, j])


def spectral_efficiency_matrix(rho, gains, lp: LinkParams) -> np.ndarray:
    """Link rates per bandwidth unit: ``eff_bw * log2(1 + sinr / eff_sinr)``."""
    s = sinr_matrix(rho, gains, lp)
    return np.asarray(lp.eff_bw) * np.log2(1.0 + s / np.asarray(lp.eff_sinr))


def spectral_efficiency(i: int, j: int, rho, gains, lp: LinkParams) -> float:
    return float(spectral_efficiency_matrix(rho, gains, lp)[i, j])


def worst_case_efficiency(gains, lp: LinkParams) -> np.ndarray:
    """Spectral efficiency with every interferer fully loaded (rho = 1).

    A uniform lower bound on the efficiency at any load vector in [0, 1]^M.
    """
    return spectral_efficiency_matrix(1.0, gains, lp)


def demand_coefficients(rates, omega, lp: LinkParams) -> np.ndarray:
    """Fraction of cell i's resources TP j would consume: r_j / (B_i w_ij)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("spectral efficiency must be strictly positive")
    rates = np.asarray(rates, dtype=float)
    b = lp.bandwidth_vector(omega.shape[0])
    return rates[None, :] / (b[:, None] * omega)


def load_from_assignment(x, d) -> np.ndarray:
    """Per-cell load of an assignment at fixed demand coefficients."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != d.shape:
        raise ValueError("assignment and demand matrix shapes differ")
    return (d * x).sum(axis=1)
