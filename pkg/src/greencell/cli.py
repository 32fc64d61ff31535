"""Experiment harness: seeded runs, parameter sweeps, result aggregation.

Configs are single JSON documents with sections mirroring the library's
dataclasses (area, topology, traffic, propagation, link, energy, algorithm,
sweep; see README).  Results land in a fixed, versioned CSV schema; given
the same config and seed base every output byte except ``wall_ms`` is
reproducible.

Verbs: ``generate`` (write a scenario document), ``solve`` (single run),
``sweep`` (full experiment), ``compare`` (aggregate result files with
bootstrap confidence intervals).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .discretize import ExactLimits, NoFeasibleAssignment, RoundingFailure
from .energy import EnergyModel
from .linkmodel import LinkParams
from .lpsolver import LpInfeasibleError
from .optimizer import MMConfig
from .scenario import (
    AreaConfig,
    PropagationConfig,
    TrafficConfig,
    generate_scenario,
    path_loss,
    save_gains_csv,
    scenario_to_json,
)
from .smm import solve_with_algorithm

__all__ = [
    "TopologySpec",
    "EnergySpec",
    "AlgorithmSpec",
    "SweepSpec",
    "ExperimentConfig",
    "ResultRow",
    "RESULT_COLUMNS",
    "RESULT_SCHEMA",
    "run_experiment",
    "bootstrap_ci",
    "compare",
    "read_results",
    "main",
]

RESULT_SCHEMA = "greencell-results-v1"
RESULT_COLUMNS = [
    "seed", "n_bs", "n_cells", "n_tps", "algorithm", "mode", "sweep_value",
    "energy_w", "energy_norm", "active_cells", "active_bs", "active_type1",
    "active_type2", "iterations", "wall_ms", "feasible",
]
SWEEP_AXES = ("n_tps", "beta", "cprime", "mu_d")
WORKERS_ENV = "GREENCELL_WORKERS"


@dataclass
class TopologySpec:
    n_bs: int = 34
    sectors_per_bs: int = 3
    omni: bool | None = None


@dataclass
class EnergySpec:
    """Energy-model section: per-station c, per-cell e, dynamic f and the
    heterogeneity knobs (type-2 multiplier beta, dynamic weight cprime)."""

    c: float = 500.0
    e: float = 280.0
    f_kind: str = "linear"
    f_coeff: float = 564.0
    cprime: float = 1.0
    beta: float = 1.0
    cell_types: str = "all1"    # all1 | split_half | colocated_pairs

    def build(self, topo) -> EnergyModel:
        if self.f_kind != "linear":
            raise ValueError("config files support the linear dynamic term")
        k = self.f_coeff * self.cprime
        if self.cell_types == "all1":
            return EnergyModel.uniform(topo, c=self.c, e=self.e, k=k)
        em = EnergyModel.two_type(
            topo, e_base=self.e, beta=self.beta,
            scheme=self.cell_types, c=self.c, k=k,
        )
        return em


@dataclass
class AlgorithmSpec:
    algorithm: str = "smm"      # smm | exact | greedy | strongest
    mode: str = "worst_case"    # worst_case | load_aware | fractional
    eps: float = 1e-3
    eps_star: float = 1e-3
    max_iters: int = 200
    z_iterations: int = 10
    exact_max_cells: int = 9
    exact_max_tps: int = 10


@dataclass
class SweepSpec:
    axis: str = "n_tps"
    values: list = field(default_factory=lambda: [100])
    repeats: int = 100
    seed_base: int = 0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not self.values:
            raise ValueError("sweep needs at least one value")


@dataclass
class ExperimentConfig:
    area: AreaConfig = field(default_factory=AreaConfig)
    topology: TopologySpec = field(default_factory=TopologySpec)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    link: LinkParams = field(default_factory=LinkParams)
    energy: EnergySpec = field(default_factory=EnergySpec)
    algorithm: AlgorithmSpec = field(default_factory=AlgorithmSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def validate(self) -> None:
        if self.algorithm.algorithm == "exact":
            n_cells = self.topology.n_bs * self.topology.sectors_per_bs
            n_tps = max(
                self.traffic.n_tps if self.sweep.axis != "n_tps"
                else max(self.sweep.values), self.traffic.n_tps,
            )
            if n_cells > self.algorithm.exact_max_cells:
                raise ValueError(
                    f"exact search limited to {self.algorithm.exact_max_cells} "
                    f"cells, config asks for {n_cells}"
                )
            if n_tps > self.algorithm.exact_max_tps:
                raise ValueError(
                    f"exact search limited to {self.algorithm.exact_max_tps} "
                    f"TPs, config asks for {n_tps}"
                )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        kw = {}
        sections = {
            "area": AreaConfig, "topology": TopologySpec, "traffic": TrafficConfig,
            "propagation": PropagationConfig, "link": LinkParams,
            "energy": EnergySpec, "algorithm": AlgorithmSpec, "sweep": SweepSpec,
        }
        for name, typ in sections.items():
            if name in doc:
                kw[name] = typ(**doc[name])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


@dataclass
class ResultRow:
    seed: int
    n_bs: int
    n_cells: int
    n_tps: int
    algorithm: str
    mode: str
    sweep_value: float
    energy_w: float
    energy_norm: float
    active_cells: int
    active_bs: int
    active_type1: int
    active_type2: int
    iterations: int
    wall_ms: float
    feasible: bool

    def to_csv_line(self) -> str:
        vals = []
        for c in RESULT_COLUMNS:
            v = getattr(self, c)
            if isinstance(v, bool):
                vals.append("true" if v else "false")
            elif isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v))
        return ",".join(vals)


def _apply_sweep(cfg: ExperimentConfig, value) -> ExperimentConfig:
    axis = cfg.sweep.axis
    if axis == "n_tps":
        return replace(cfg, traffic=replace(cfg.traffic, n_tps=int(value)))
    if axis == "beta":
        return replace(cfg, energy=replace(cfg.energy, beta=float(value)))
    if axis == "cprime":
        return replace(cfg, energy=replace(cfg.energy, cprime=float(value)))
    if axis == "mu_d":
        return replace(cfg, traffic=replace(cfg.traffic, rate_mean=float(value)))
    raise ValueError(f"unknown sweep axis {axis!r}")


def _run_single(args):
    """One (sweep value, repeat) cell; returns a ResultRow."""
    cfg, value, seed = args
    cfg = _apply_sweep(cfg, value)
    sc = generate_scenario(
        cfg.area, cfg.topology.n_bs, cfg.topology.sectors_per_bs,
        cfg.traffic, seed, prop=cfg.propagation, omni=cfg.topology.omni,
    )
    gains = path_loss(sc.topology, sc.tps, sc.prop, seed, area=sc.area)
    em = cfg.energy.build(sc.topology)
    mm = MMConfig(eps=cfg.algorithm.eps, eps_star=cfg.algorithm.eps_star,
                  max_iters=cfg.algorithm.max_iters, store_iterates=False)
    base = dict(
        seed=seed, n_bs=sc.topology.n_bs, n_cells=sc.topology.n_cells,
        n_tps=sc.tps.n_tps, algorithm=cfg.algorithm.algorithm,
        mode=cfg.algorithm.mode, sweep_value=float(value),
    )
    try:
        res = solve_with_algorithm(
            sc, gains, cfg.link, em,
            algorithm=cfg.algorithm.algorithm, mode=cfg.algorithm.mode, cfg=mm,
            exact_limits=ExactLimits(cfg.algorithm.exact_max_cells,
                                     cfg.algorithm.exact_max_tps),
        )
    except (LpInfeasibleError, RoundingFailure, NoFeasibleAssignment):
        return ResultRow(**base, energy_w=float("nan"), energy_norm=float("nan"),
                         active_cells=-1, active_bs=-1, active_type1=-1,
                         active_type2=-1, iterations=0, wall_ms=0.0,
                         feasible=False)
    types = em.cell_type[res.active_cells] if res.active_cells.size else np.zeros(0)
    return ResultRow(
        **base,
        energy_w=res.energy_w,
        energy_norm=res.energy_norm,
        active_cells=int(res.active_cells.size),
        active_bs=int(res.active_bs.size),
        active_type1=int(np.sum(types == 1)),
        active_type2=int(np.sum(types == 2)),
        iterations=res.iterations,
        wall_ms=res.wall_ms,
        feasible=res.feasible,
    )


def run_experiment(cfg: ExperimentConfig, out_path) -> list[ResultRow]:
    """Run every (sweep value, repeat) cell and stream rows to ``out_path``.

    Per-run failures become rows with ``feasible=false``; they never abort
    the sweep.  Rows are written in (value, repeat) order regardless of
    how many worker processes computed them (``GREENCELL_WORKERS``).
    """
    cfg.validate()
    tasks = [
        (cfg, value, cfg.sweep.seed_base + rep)
        for value in cfg.sweep.values
        for rep in range(cfg.sweep.repeats)
    ]
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    rows: list[ResultRow] = []
    with open(out_path, "w") as f:
        f.write(f"# {RESULT_SCHEMA}\n")
        f.write(",".join(RESULT_COLUMNS) + "\n")
        f.flush()
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for row in pool.map(_run_single, tasks, chunksize=1):
                    rows.append(row)
                    f.write(row.to_csv_line() + "\n")
                    f.flush()
        else:
            for task in tasks:
                row = _run_single(task)
                rows.append(row)
                f.write(row.to_csv_line() + "\n")
                f.flush()
    return rows


def read_results(path) -> list[dict]:
    """Parse a results CSV back into typed dicts (lossless round trip)."""
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    body = [ln for ln in lines if not ln.startswith("#")]
    header = body[0].split(",")
    if header != RESULT_COLUMNS:
        raise ValueError(f"unexpected results schema in {path}")
    out = []
    ints = {"seed", "n_bs", "n_cells", "n_tps", "active_cells", "active_bs",
            "active_type1", "active_type2", "iterations"}
    floats = {"sweep_value", "energy_w", "energy_norm", "wall_ms"}
    for ln in body[1:]:
        parts = ln.split(",")
        row = {}
        for name, raw in zip(header, parts):
            if name in ints:
                row[name] = int(raw)
            elif name in floats:
                row[name] = float(raw)
            elif name == "feasible":
                row[name] = raw == "true"
            else:
                row[name] = raw
        out.append(row)
    return out


def bootstrap_ci(samples, level: float = 0.95, resamples: int = 2000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of ``samples``."""
    samples = np.asarray(list(samples), dtype=float)
    if samples.size < 1:
        raise ValueError("bootstrap needs at least one sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, samples.size, size=(resamples, samples.size))
    means = samples[idx].mean(axis=1)
    lo = float(np.quantile(means, (1.0 - level) / 2.0))
    hi = float(np.quantile(means, 1.0 - (1.0 - level) / 2.0))
    return lo, hi


def compare(paths, ref: str | None = None, ci_level: float = 0.95,
            ci_seed: int = 0) -> list[dict]:
    """Aggregate result files per (algorithm, mode) group.

    Reports mean normalized energy with a percentile-bootstrap interval
    and mean wall time normalized to the reference group (the first group
    unless ``ref`` names one as ``algorithm`` or ``algorithm:mode``).
    """
    rows = []
    for p in paths:
        rows.extend(read_results(p))
    rows = [r for r in rows if r["feasible"]]
    if not rows:
        raise ValueError("no feasible rows to compare")
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["mode"]), []).append(r)
    order = sorted(groups)

    def matches(key, spec):
        if spec is None:
            return False
        parts = spec.split(":")
        if len(parts) == 1:
            return key[0] == parts[0]
        return key == (parts[0], parts[1])

    ref_key = next((k for k in order if matches(k, ref)), order[0])
    ref_wall = float(np.mean([r["wall_ms"] for r in groups[ref_key]]))
    table = []
    for key in order:
        g = groups[key]
        en = [r["energy_norm"] for r in g]
        wall = float(np.mean([r["wall_ms"] for r in g]))
        if len(en) >= 2:
            lo, hi = bootstrap_ci(en, level=ci_level, seed=ci_seed)
        else:
            lo = hi = float(en[0])
        table.append({
            "algorithm": key[0],
            "mode": key[1],
            "runs": len(g),
            "mean_energy_norm": float(np.mean(en)),
            "ci_lo": lo,
            "ci_hi": hi,
            "ci_method": "percentile-bootstrap",
            "mean_wall_ms": wall,
            "time_ratio": wall / ref_wall if ref_wall > 0 else float("nan"),
        })
    return table


def _format_table(table) -> str:
    cols = ["algorithm", "mode", "runs", "mean_energy_norm", "ci_lo", "ci_hi",
            "mean_wall_ms", "time_ratio"]
    lines = ["  ".join(f"{c:>16}" for c in cols)]
    for row in table:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:>16.6g}" if isinstance(v, float) else f"{v:>16}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def _load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as f:
        return ExperimentConfig.from_json(f.read())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="greencell",
        description="energy-minimal network configuration experiments",
    )
    sub = ap.add_subparsers(dest="verb", required=True)

    p_gen = sub.add_parser("generate", help="write a scenario document")
    p_gen.add_argument("--config", default=None)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--gains", default=None,
                       help="also export the gain matrix to this CSV")

    p_solve = sub.add_parser("solve", help="solve one seeded scenario")
    p_solve.add_argument("--config", default=None)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--algo", default=None,
                         choices=["smm", "exact", "greedy", "strongest"])
    p_solve.add_argument("--mode", default=None,
                         choices=["worst_case", "load_aware", "fractional"])
    p_solve.add_argument("--eps", type=float, default=None)
    p_solve.add_argument("--eps-star", type=float, default=None)
    p_solve.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="run the configured sweep")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--seed", type=int, default=None,
                         help="override the sweep seed base")
    p_sweep.add_argument("--repeats", type=int, default=None)
    p_sweep.add_argument("--algo", default=None)
    p_sweep.add_argument("--mode", default=None)
    p_sweep.add_argument("--eps", type=float, default=None)
    p_sweep.add_argument("--eps-star", type=float, default=None)
    p_sweep.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="aggregate result files")
    p_cmp.add_argument("files", nargs="+")
    p_cmp.add_argument("--ref", default=None,
                       help="reference group, algorithm or algorithm:mode")
    p_cmp.add_argument("--out", default=None)

    args = ap.parse_args(argv)

    if args.verb == "generate":
        cfg = _load_config(args.config)
        sc = generate_scenario(
            cfg.area, cfg.topology.n_bs, cfg.topology.sectors_per_bs,
            cfg.traffic, args.seed, prop=cfg.propagation, omni=cfg.topology.omni,
        )
        with open(args.out, "w") as f:
            f.write(scenario_to_json(sc, energy=asdict(cfg.energy)))
        if args.gains:
            gains = path_loss(sc.topology, sc.tps, sc.prop, args.seed, area=sc.area)
            save_gains_csv(gains, args.gains)
        return 0

    if args.verb in ("solve", "sweep"):
        cfg = _load_config(args.config)
        algo = cfg.algorithm
        if args.algo:
            algo = replace(algo, algorithm=args.algo)
        if args.mode:
            algo = replace(algo, mode=args.mode)
        if args.eps is not None:
            algo = replace(algo, eps=args.eps)
        if args.eps_star is not None:
            algo = replace(algo, eps_star=args.eps_star)
        cfg = replace(cfg, algorithm=algo)
        if args.verb == "solve":
            sweep = SweepSpec(axis="n_tps", values=[cfg.traffic.n_tps],
                              repeats=1, seed_base=args.seed)
        else:
            sweep = cfg.sweep
            if args.seed is not None:
                sweep = replace(sweep, seed_base=args.seed)
            if args.repeats is not None:
                sweep = replace(sweep, repeats=args.repeats)
        cfg = replace(cfg, sweep=sweep)
        out = args.out or "/dev/stdout"
        rows = run_experiment(cfg, out)
        failed = sum(not r.feasible for r in rows)
        if args.out is None:
            pass
        return 1 if failed else 0

    if args.verb == "compare":
        table = compare(args.files, ref=args.ref)
        text = _format_table(table)
        print(text)
        if args.out:
            with open(args.out, "w") as f:
                keys = list(table[0].keys())
                f.write(",".join(keys) + "\n")
                for row in table:
                    f.write(",".join(
                        repr(v) if isinstance(v, float) else str(v)
                        for v in row.values()) + "\n")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
