"""Seeded generation of network layouts, test-point traffic and link gains.

A scenario is a set of base stations placed in a rectangular service area,
the sector cells they host, and a set of test points (TPs).  Each TP is the
centroid of a small subarea and carries the aggregate rate demand of the
users inside it.  Everything here is a pure function of the configuration
and the seed, so regenerating with the same seed gives bit-identical data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

__all__ = [
    "AreaConfig",
    "Topology",
    "TestPointSet",
    "TrafficConfig",
    "PropagationConfig",
    "Scenario",
    "generate_scenario",
    "wrap_delta",
    "wrap_distance",
    "path_loss",
    "scenario_to_json",
    "scenario_from_json",
    "save_gains_csv",
    "load_gains_csv",
]


@dataclass(frozen=True)
class AreaConfig:
    """Rectangular service area; distances wrap around the edges by default."""

    width_m: float = 2000.0
    height_m: float = 2000.0
    wrap_around: bool = True

    def __post_init__(self):
        if self.width_m <= 0 or self.height_m <= 0:
            raise ValueError("area dimensions must be positive")


@dataclass
class TrafficConfig:
    """Test-point population and rate-demand model.

    Rates are drawn from a normal distribution and clamped below at
    ``rate_floor`` so the demand vector stays strictly positive.  A TP is a
    hot-spot TP with probability ``hotspot_prob``; hot-spot TPs cluster
    around one of ``hotspot_count`` randomly placed centers with a
    half-normal radial offset of scale ``hotspot_radius_m / 2``.
    """

    n_tps: int = 100
    hotspot_count: int = 3
    hotspot_prob: float = 0.3
    hotspot_radius_m: float = 250.0
    rate_mean: float = 128e3     # bits/s
    rate_spread: float = 32e3    # bits/s (std dev of the normal draw)
    rate_floor: float = 1e3      # bits/s

    def __post_init__(self):
        if not (0.0 <= self.hotspot_prob <= 1.0):
            raise ValueError("hotspot_prob must be in [0, 1]")
        if self.rate_floor <= 0:
            raise ValueError("rate_floor must be positive")
        if self.n_tps < 1:
            raise ValueError("need at least one test point")


@dataclass
class PropagationConfig:
    """Long-term fading model: log-distance path loss, sector antenna
    pattern and log-normal shadowing.

    ``pathloss_intercept``/``pathloss_slope`` give the loss in dB at 1 km
    and per decade of distance.  The sector pattern attenuates by
    ``12 * (theta / antenna_theta3db)**2`` dB, capped at
    ``antenna_max_atten`` dB; omnidirectional cells skip it entirely.
    """

    pathloss_intercept: float = 128.1   # dB at 1 km
    pathloss_slope: float = 37.6        # dB per decade
    shadowing_sigma: float = 8.0        # dB
    antenna_theta3db: float = 70.0      # degrees
    antenna_max_atten: float = 20.0     # dB
    min_distance_m: float = 10.0

    def __post_init__(self):
        if self.shadowing_sigma < 0:
            raise ValueError("shadowing_sigma must be >= 0")
        if self.min_distance_m <= 0:
            raise ValueError("min_distance_m must be positive")


@dataclass
class Topology:
    """Base stations and the sector cells they host.

    ``cell_azimuth_deg`` holds the boresight bearing of each cell;
    ``nan`` marks an omnidirectional cell.
    """

    bs_pos: np.ndarray           # (L, 2) site coordinates in meters
    cell_bs: np.ndarray          # (M,) parent site index of each cell
    cell_azimuth_deg: np.ndarray  # (M,) boresight, nan = omni

    def __post_init__(self):
        self.bs_pos = np.asarray(self.bs_pos, dtype=float)
        self.cell_bs = np.asarray(self.cell_bs, dtype=int)
        self.cell_azimuth_deg = np.asarray(self.cell_azimuth_deg, dtype=float)
        if self.bs_pos.ndim != 2 or self.bs_pos.shape[1] != 2:
            raise ValueError("bs_pos must be (L, 2)")
        if self.cell_bs.shape != self.cell_azimuth_deg.shape:
            raise ValueError("cell arrays must have matching length")
        if self.cell_bs.min(initial=0) < 0 or self.cell_bs.max(initial=0) >= len(self.bs_pos):
            raise ValueError("cell_bs references unknown base station")

    @property
    def n_bs(self) -> int:
        return self.bs_pos.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cell_bs.shape[0]

    @property
    def cell_pos(self) -> np.ndarray:
        """(M, 2) cell coordinates (cells sit at their parent site)."""
        return self.bs_pos[self.cell_bs]

    def sector_map(self) -> list[np.ndarray]:
        """Cells of each base station, indexed by station id."""
        return [np.flatnonzero(self.cell_bs == l) for l in range(self.n_bs)]


@dataclass
class TestPointSet:
    positions: np.ndarray   # (N, 2) meters
    rates: np.ndarray       # (N,) bits/s, strictly positive

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        if len(self.positions) != len(self.rates):
            raise ValueError("positions and rates must have equal length")
        if np.any(self.rates <= 0):
            raise ValueError("rate demands must be strictly positive")

    @property
    def n_tps(self) -> int:
        return self.rates.shape[0]


@dataclass
class Scenario:
    """A complete generated instance: geometry, traffic and fading config."""

    area: AreaConfig
    topology: Topology
    tps: TestPointSet
    prop: PropagationConfig
    traffic: TrafficConfig
    seed: int
    hotspot_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    tp_is_hotspot: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def wrap_delta(p, q, area: AreaConfig) -> np.ndarray:
    """Displacement q - p under the minimum-image convention.

    With wrap-around, each axis delta is shifted by a multiple of the area
    size so it lands in [-L/2, L/2]; without, it is the plain difference.
    Broadcasts over leading dimensions of ``p`` and ``q``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    delta = q - p
    if area.wrap_around:
        size = np.array([area.width_m, area.height_m])
        delta = delta - size * np.round(delta / size)
    return delta


def wrap_distance(p, q, area: AreaConfig):
    """Distance between points under the area's torus metric.

    Per axis the separation is ``min(|dx|, L - |dx|)``; the two axes combine
    as a Euclidean norm.  Never exceeds the plain Euclidean distance.
    """
    delta = wrap_delta(p, q, area)
    return np.hypot(delta[..., 0], delta[..., 1])


def _default_azimuths(sectors_per_bs: int, omni: bool) -> np.ndarray:
    if omni or sectors_per_bs == 1:
        return np.full(sectors_per_bs, np.nan)
    return 360.0 * np.arange(sectors_per_bs) / sectors_per_bs


def generate_scenario(
    area: AreaConfig,
    n_bs: int,
    sectors_per_bs: int,
    traffic: TrafficConfig,
    seed: int,
    prop: PropagationConfig | None = None,
    omni: bool | None = None,
) -> Scenario:
    """Draw a random scenario; identical inputs give bit-identical output.

    Base stations are i.i.d. uniform over the area.  Each cell of a
    multi-sector station points at ``360 k / sectors_per_bs`` degrees;
    single-sector stations are omnidirectional unless ``omni`` overrides.
    """
    if n_bs < 1:
        raise ValueError("need at least one base station")
    if sectors_per_bs < 1:
        raise ValueError("need at least one sector per base station")
    if prop is None:
        prop = PropagationConfig()
    if omni is None:
        omni = sectors_per_bs == 1

    rng = np.random.default_rng(seed)
    size = np.array([area.width_m, area.height_m])

    bs_pos = rng.uniform(0.0, 1.0, size=(n_bs, 2)) * size
    cell_bs = np.repeat(np.arange(n_bs), sectors_per_bs)
    cell_az = np.tile(_default_azimuths(sectors_per_bs, omni), n_bs)
    topo = Topology(bs_pos=bs_pos, cell_bs=cell_bs, cell_azimuth_deg=cell_az)

    n = traffic.n_tps
    centers = rng.uniform(0.0, 1.0, size=(max(traffic.hotspot_count, 0), 2)) * size
    use_hotspots = traffic.hotspot_count > 0 and traffic.hotspot_prob > 0
    is_htp = rng.random(n) < traffic.hotspot_prob if use_hotspots else np.zeros(n, dtype=bool)
    if use_hotspots:
        which = rng.integers(0, traffic.hotspot_count, size=n)
        radius = np.abs(rng.normal(0.0, traffic.hotspot_radius_m / 2.0, size=n))
        angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
        offs = radius[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)
        hot_pos = centers[which] + offs
    else:
        hot_pos = np.zeros((n, 2))
    uni_pos = rng.uniform(0.0, 1.0, size=(n, 2)) * size
    pos = np.where(is_htp[:, None], hot_pos, uni_pos)
    if area.wrap_around:
        pos = np.mod(pos, size)
    else:
        pos = np.clip(pos, 0.0, size)

    rates = rng.normal(traffic.rate_mean, traffic.rate_spread, size=n)
    rates = np.maximum(rates, traffic.rate_floor)

    return Scenario(
        area=area,
        topology=topo,
        tps=TestPointSet(positions=pos, rates=rates),
        prop=prop,
        traffic=traffic,
        seed=seed,
        hotspot_centers=centers if use_hotspots else np.zeros((0, 2)),
        tp_is_hotspot=is_htp,
    )


def path_loss(
    topology: Topology,
    tps: TestPointSet,
    prop: PropagationConfig,
    seed: int,
    area: AreaConfig | None = None,
) -> np.ndarray:
    """Linear-scale gain matrix G, shape (M cells, N TPs), strictly positive.

    Per link::

        G[i, j] = 10 ** (-(PL(dist) + A(theta) + X) / 10)

    where ``PL(d) = intercept + slope * log10(max(d, min_dist) / 1 km)``,
    ``A`` is the sector antenna attenuation at the azimuth offset ``theta``
    (zero for omni cells) and ``X`` is i.i.d. normal shadowing in dB drawn
    from ``seed``.  Distances and bearings use the wrap-around geometry.
    """
    if area is None:
        area = AreaConfig()
    rng = np.random.default_rng(seed)

    cell_pos = topology.cell_pos           # (M, 2)
    delta = wrap_delta(cell_pos[:, None, :], tps.positions[None, :, :], area)
    dist = np.hypot(delta[..., 0], delta[..., 1])
    dist = np.maximum(dist, prop.min_distance_m)

    pl_db = prop.pathloss_intercept + prop.pathloss_slope * np.log10(dist / 1000.0)

    az = topology.cell_azimuth_deg
    sector = ~np.isnan(az)
    atten_db = np.zeros_like(dist)
    if np.any(sector):
        bearing = np.degrees(np.arctan2(delta[..., 1], delta[..., 0]))
        theta = bearing - np.where(sector, az, 0.0)[:, None]
        theta = np.mod(theta + 180.0, 360.0) - 180.0   # offset in (-180, 180]
        pattern = np.minimum(12.0 * (theta / prop.antenna_theta3db) ** 2,
                             prop.antenna_max_atten)
        atten_db = np.where(sector[:, None], pattern, 0.0)

    shadow_db = rng.normal(0.0, prop.shadowing_sigma, size=dist.shape)

    gains = 10.0 ** (-(pl_db + atten_db + shadow_db) / 10.0)
    return gains


# --- serialization -----------------------------------------------------------
#
# Scenario documents are JSON with the sections
#   area, base_stations, cells, tps, rates, traffic, propagation,
#   hotspots, seed, and optionally energy
# (see README for the full schema).  Floats are written with repr precision
# so a round trip reproduces the arrays exactly.

SCENARIO_SCHEMA = "greencell-scenario-v1"


def scenario_to_json(sc: Scenario, energy: dict | None = None) -> str:
    doc = {
        "schema": SCENARIO_SCHEMA,
        "seed": sc.seed,
        "area": asdict(sc.area),
        "base_stations": [
            {"id": l, "x": float(x), "y": float(y)}
            for l, (x, y) in enumerate(sc.topology.bs_pos)
        ],
        "cells": [
            {
                "id": i,
                "bs": int(sc.topology.cell_bs[i]),
                "azimuth_deg": None if np.isnan(a) else float(a),
            }
            for i, a in enumerate(sc.topology.cell_azimuth_deg)
        ],
        "tps": [[float(x), float(y)] for x, y in sc.tps.positions],
        "rates": [float(r) for r in sc.tps.rates],
        "tp_is_hotspot": [bool(b) for b in sc.tp_is_hotspot],
        "hotspots": [[float(x), float(y)] for x, y in sc.hotspot_centers],
        "traffic": asdict(sc.traffic),
        "propagation": asdict(sc.prop),
    }
    if energy is not None:
        doc["energy"] = energy
    return json.dumps(doc, indent=1, sort_keys=True)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    if doc.get("schema") != SCENARIO_SCHEMA:
        raise ValueError(f"unknown scenario schema: {doc.get('schema')!r}")
    topo = Topology(
        bs_pos=np.array([[b["x"], b["y"]] for b in doc["base_stations"]]),
        cell_bs=np.array([c["bs"] for c in doc["cells"]], dtype=int),
        cell_azimuth_deg=np.array(
            [np.nan if c["azimuth_deg"] is None else c["azimuth_deg"] for c in doc["cells"]]
        ),
    )
    return Scenario(
        area=AreaConfig(**doc["area"]),
        topology=topo,
        tps=TestPointSet(
            positions=np.array(doc["tps"], dtype=float).reshape(-1, 2),
            rates=np.array(doc["rates"], dtype=float),
        ),
        prop=PropagationConfig(**doc["propagation"]),
        traffic=TrafficConfig(**doc["traffic"]),
        seed=doc["seed"],
        hotspot_centers=np.array(doc["hotspots"], dtype=float).reshape(-1, 2),
        tp_is_hotspot=np.array(doc["tp_is_hotspot"], dtype=bool),
    )


def save_gains_csv(gains: np.ndarray, path) -> None:
    """Dense CSV dump of the gain matrix: one row per cell, one column per TP."""
    np.savetxt(path, gains, delimiter=",", fmt="%.17g")


def load_gains_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
