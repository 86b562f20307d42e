"""Dataset ingestion and reproducible sweep runners.

Sweeps fan out over a thread pool (numpy releases the GIL in the heavy
kernels); VOLTGAME_THREADS caps the pool size.  Rows are emitted in job
order so a fixed spec and seed reproduce the CSV byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import acflow, dynamics, equilibrium
from .controls import ControlSpec
from .netio import SCHEMA_COMMENT, ParseError, topology_hash
from .sensitivity import SensitivitySet, build_sensitivity
from .topology import (
    BusData,
    DegreeDistribution,
    Line,
    RadialNetwork,
    chain_network,
    random_instance,
    validate_tree,
)

V_BASE_KV = 12.35
S_BASE_KVA = 1000.0
Z_BASE_OHM = 152.52


@dataclass(frozen=True)
class Sce42Dataset:
    net: RadialNetwork
    ctrl: ControlSpec
    pv_buses: tuple[int, ...]          # original table numbering
    pv_capacity_pu: tuple[float, ...]

    @property
    def actuator_idx(self) -> np.ndarray:
        return self.net.actuator_indices()


def _read_data_csv(name: str, path=None):
    if path is not None:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    text = resources.files("voltgame.data").joinpath(name).read_text()
    return list(csv.DictReader(io.StringIO(text)))


def load_sce42(lines_path=None, loads_path=None, pv_path=None, *,
               loading_factor: float = 1.0, power_factor: float = 0.9,
               pv_output_factor: float = 0.5, capacity_constraint: bool = True,
               alpha: float = 9.0, delta: float = 0.02,
               min_x_ohm: float = 0.001, v0: float = 1.0) -> Sce42Dataset:
    """Build the SCE 42-bus feeder in per-unit with droop defaults.

    Table bus 1 (the substation) maps to internal id 0, so table bus k is
    node k-1 everywhere downstream.  Loads are peak MVA split by
    ``power_factor`` (lagging) and scaled by ``loading_factor``; PV buses
    generate ``pv_output_factor`` of nameplate with the reactive box
    |q| <= sqrt(cap^2 - p_g^2) when ``capacity_constraint`` is set.
    Reactances are floored at ``min_x_ohm`` (the published table lists one
    zero-X line).
    """
    line_rows = _read_data_csv("sce42_lines.csv", lines_path)
    load_rows = _read_data_csv("sce42_loads.csv", loads_path)
    pv_rows = _read_data_csv("sce42_pv.csv", pv_path)

    if len(line_rows) != 41:
        raise ParseError(f"expected 41 lines, found {len(line_rows)}")
    if len(pv_rows) != 5:
        raise ParseError(f"expected 5 PV generators, found {len(pv_rows)}")

    peak = {}
    for k, row in enumerate(load_rows, start=2):
        try:
            peak[int(row["bus"])] = float(row["peak_mva"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"loads row {k}: {exc}") from exc
    pv = {}
    for k, row in enumerate(pv_rows, start=2):
        try:
            pv[int(row["bus"])] = float(row["capacity_mw"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"pv row {k}: {exc}") from exc

    s_base_mva = S_BASE_KVA / 1000.0
    pf_angle = math.acos(power_factor)
    n = 41
    lines = []
    for k, row in enumerate(line_rows, start=2):
        try:
            f, t = int(row["from"]), int(row["to"])
            r = float(row["r_ohm"]) / Z_BASE_OHM
            x = max(float(row["x_ohm"]), min_x_ohm) / Z_BASE_OHM
        except (KeyError, ValueError) as exc:
            raise ParseError(f"lines row {k}: {exc}") from exc
        lines.append(Line(from_node=f - 1, to_node=t - 1, r=r, x=x))

    buses = []
    pv_caps = []
    for bus in range(2, 43):
        mva = peak.get(bus, 0.0) * loading_factor / s_base_mva
        p_c = mva * power_factor
        q_c = mva * math.sin(pf_angle)
        if bus in pv:
            cap = pv[bus] / s_base_mva
            p_g = cap * pv_output_factor
            q_lim = math.sqrt(max(cap * cap - p_g * p_g, 0.0)) if capacity_constraint else math.inf
            buses.append(BusData(p_c=p_c, p_g=p_g, q_c=q_c, q_min=-q_lim, q_max=q_lim,
                                 is_actuator=True))
            pv_caps.append(cap)
        else:
            buses.append(BusData(p_c=p_c, q_c=q_c, is_actuator=False))

    net = RadialNetwork(n=n, lines=tuple(lines), buses=tuple(buses), v0=v0)
    validate_tree(net)

    act = net.actuator_indices()
    ctrl = ControlSpec(
        alpha=np.full(act.size, alpha),
        delta=np.full(act.size, delta),
        q_min=np.array([net.buses[i].q_min for i in act]),
        q_max=np.array([net.buses[i].q_max for i in act]),
    )
    pv_tuple = tuple(sorted(pv))
    return Sce42Dataset(net=net, ctrl=ctrl, pv_buses=pv_tuple,
                        pv_capacity_pu=tuple(pv[b] / s_base_mva for b in pv_tuple))


def restricted_model(net: RadialNetwork, S: SensitivitySet | None = None):
    """Sensitivities and operating constants reduced to the actuator buses."""
    if S is None:
        S = build_sensitivity(net)
    vt = dynamics.operating_constants(net, S)
    idx = net.actuator_indices()
    return S.restrict(idx), vt.restrict(idx), idx


@dataclass
class SweepSpec:
    """Declarative description of one experiment sweep.

    kind:
      chain-size        uniform or randomized linear feeders over ``sizes``
      random-tree-depth random feeders per depth in ``depths``
      cost-coefficient  PoSA on the SCE feeder over ``y_values``
      alpha             closed-loop AC verdicts on the SCE feeder over ``alphas``
    """

    kind: str
    seed: int = 0
    repetitions: int = 1
    sizes: list = field(default_factory=list)
    depths: list = field(default_factory=list)
    dist_probs: dict = field(default_factory=dict)
    x: float = 1.0
    y: float = 1.0
    x_range: tuple | None = None
    y_range: tuple | None = None
    y_values: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    delta: float = 0.02
    ac: bool = True
    max_nodes: int = 4000
    loading_factor: float = 1.0
    pv_output_factor: float = 0.5
    capacity_constraint: bool = True

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> "SweepSpec":
        doc = json.loads(text)
        if "dist_probs" in doc:
            doc["dist_probs"] = {int(k): float(v) for k, v in doc["dist_probs"].items()}
        for key in ("x_range", "y_range"):
            if doc.get(key) is not None:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_json(self) -> str:
        doc = {k: v for k, v in self.__dict__.items()}
        doc["dist_probs"] = {str(k): v for k, v in self.dist_probs.items()}
        return json.dumps(doc, indent=1)


def _threads() -> int:
    env = os.environ.get("VOLTGAME_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _posa_row(S: SensitivitySet, y_diag, vt=None) -> dict:
    rep = equilibrium.posa_report(S, y_diag, vt=vt, want_direction=False)
    if not rep.ordering_ok():
        raise AssertionError("bound ordering violated at emission")
    return {
        "posa_max": rep.posa_max, "upper": rep.upper, "refined_upper": rep.refined_upper,
        "lower": rep.lower, "lower_clamped": rep.lower_clamped, "gap_bound": rep.gap_bound,
        "d": rep.d, "y_min": rep.y,
    }


def _chain_size_job(spec: SweepSpec, n: int, rep: int, seed: int) -> dict:
    if spec.x_range is None:
        xs = np.full(n, spec.x)
        ys = np.full(n, spec.y)
    else:
        rng = np.random.default_rng(seed)
        lo, hi = spec.x_range
        xs = hi - (hi - lo) * rng.random(n)
        ylo, yhi = spec.y_range if spec.y_range else spec.x_range
        ys = yhi - (yhi - ylo) * rng.random(n)
    net = chain_network(xs)
    S = build_sensitivity(net)
    row = {"kind": "chain-size", "n": n, "rep": rep, "seed": seed}
    row.update(_posa_row(S, ys))
    if spec.x_range is None:
        row["chain_bound_uniform"] = equilibrium.chain_upper_bound_uniform(n, spec.x, spec.y)
    else:
        row["chain_bound_range"] = equilibrium.chain_upper_bound_range(
            n, spec.x_range[0] if spec.x_range[0] > 0 else min(xs), spec.x_range[1],
            d=float(np.max(np.diag(S.X))), y=float(np.min(ys)),
        )
    return row


def _tree_depth_job(spec: SweepSpec, depth: int, rep: int, seed: int) -> dict:
    dist = DegreeDistribution(
        probabilities=spec.dist_probs or {1: 0.5, 2: 0.5},
        max_depth=depth,
        x_range=spec.x_range or (0.0, 200.0),
        y_range=spec.y_range or (0.0, 100.0),
    )
    redraws = 0
    while True:
        net, ys = random_instance(dist, seed + redraws)
        if net.n <= spec.max_nodes:
            break
        redraws += 1
        if redraws > 50:
            raise RuntimeError(f"cannot draw a tree under {spec.max_nodes} nodes at depth {depth}")
    S = build_sensitivity(net)
    row = {"kind": "random-tree-depth", "depth": depth, "rep": rep, "seed": seed,
           "redraws": redraws, "n": net.n, "topology_hash": topology_hash(net)}
    row.update(_posa_row(S, ys))
    return row


def _cost_sweep_job(data: Sce42Dataset, y_value: float, delta: float) -> dict:
    S_act, vt_act, _ = restricted_model(data.net)
    k = S_act.n
    row = {"kind": "cost-coefficient", "y": y_value, "n": k}
    row.update(_posa_row(S_act, np.full(k, y_value), vt=vt_act))
    ctrl = ControlSpec(
        alpha=np.full(k, 1.0 / y_value), delta=np.full(k, delta),
        q_min=data.ctrl.q_min, q_max=data.ctrl.q_max,
    )
    row["posa_constrained"] = equilibrium.posa_constrained(S_act, ctrl, vt_act)
    return row


def _alpha_sweep_job(data: Sce42Dataset, alpha: float, delta: float, ac: bool) -> list[dict]:
    S_act, vt_act, _ = restricted_model(data.net)
    k = S_act.n
    ctrl = ControlSpec(alpha=np.full(k, alpha), delta=np.full(k, delta),
                       q_min=data.ctrl.q_min, q_max=data.ctrl.q_max)
    cond = dynamics.condition_report(S_act, ctrl)
    rows = []
    for law in ("taking", "anticipating"):
        row = {
            "kind": "alpha", "alpha": alpha, "law": law, "ac": ac,
            "sigma_taking": cond.sigma_taking,
            "sigma_anticipating": cond.sigma_anticipating,
        }
        try:
            if ac:
                trace = acflow.closed_loop_ac(data.net, S_act, ctrl, law, max_iter=400)
            else:
                step = (dynamics.taking_stepper if law == "taking"
                        else dynamics.anticipating_stepper)(S_act, ctrl, vt_act)
                trace = dynamics.run(step, np.zeros(k), tol=1e-8, max_iter=2000)
            row["status"] = trace.status
            row["iterations"] = trace.iterations
            row["final_residual"] = trace.final_residual
        except (acflow.NoConvergenceError, acflow.VoltageCollapseError) as exc:
            row["status"] = "diverged"
            row["iterations"] = -1
            row["final_residual"] = float("inf")
            row["error"] = type(exc).__name__
        rows.append(row)
    return rows


def run_sweep(spec: SweepSpec) -> list[dict]:
    """Execute a sweep; one output row per instance x repetition (x law)."""
    jobs = []
    if spec.kind == "chain-size":
        if not spec.sizes:
            raise ValueError("chain-size sweep needs sizes")
        idx = 0
        for n in spec.sizes:
            reps = spec.repetitions if spec.x_range is not None else 1
            for rep in range(reps):
                seed = spec.seed + 7919 * idx
                jobs.append((_chain_size_job, (spec, int(n), rep, seed)))
                idx += 1
    elif spec.kind == "random-tree-depth":
        if not spec.depths:
            raise ValueError("random-tree-depth sweep needs depths")
        idx = 0
        for depth in spec.depths:
            for rep in range(spec.repetitions):
                seed = spec.seed + 7919 * idx
                jobs.append((_tree_depth_job, (spec, int(depth), rep, seed)))
                idx += 1
    elif spec.kind == "cost-coefficient":
        if not spec.y_values:
            raise ValueError("cost-coefficient sweep needs y_values")
        data = load_sce42(loading_factor=spec.loading_factor,
                          pv_output_factor=spec.pv_output_factor,
                          capacity_constraint=spec.capacity_constraint)
        jobs = [(_cost_sweep_job, (data, float(y), spec.delta)) for y in spec.y_values]
    elif spec.kind == "alpha":
        if not spec.alphas:
            raise ValueError("alpha sweep needs alphas")
        data = load_sce42(loading_factor=spec.loading_factor,
                          pv_output_factor=spec.pv_output_factor,
                          capacity_constraint=spec.capacity_constraint)
        jobs = [(_alpha_sweep_job, (data, float(a), spec.delta, spec.ac)) for a in spec.alphas]
    else:
        raise ValueError(f"unknown sweep kind {spec.kind!r}")

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda job: job[0](*job[1]), jobs))

    rows = []
    for res in results:
        if isinstance(res, list):
            rows.extend(res)
        else:
            rows.append(res)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    """Serialize sweep rows with the versioned schema comment."""
    buf = io.StringIO()
    buf.write(SCHEMA_COMMENT + "\n")
    if not rows:
        return buf.getvalue()
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    writer = csv.DictWriter(buf, fieldnames=columns, restval="")
    writer.writeheader()
    for row in rows:
        out = {}
        for key, val in row.items():
            out[key] = f"{val:.17g}" if isinstance(val, float) else val
        writer.writerow(out)
    return buf.getvalue()
