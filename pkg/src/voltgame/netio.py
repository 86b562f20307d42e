"""File formats: network JSON / CSV pair, matrix dumps, traces, reports.

Network JSON schema:

    {"v0": 1.0,
     "control": {"alpha": 9.0, "delta": 0.02, "q_min": null, "q_max": null},
     "buses": [{"id": 1, "p_c": 0.1, "p_g": 0, "q_c": 0.05, "v_nom": 1.0,
                "q_min": null, "q_max": null, "actuator": true,
                "control": {...}},   # optional per-bus override
               ...],
     "lines": [{"from": 0, "to": 1, "r": 0.01, "x": 0.02}, ...]}

Bus ids may be arbitrary labels; they are remapped to dense 0..n on load
(the root is the bus labelled 0 if present, otherwise the unique bus that is
never a line's child end).  Infinite box limits serialize as null in JSON
and as "inf"/"-inf" in CSV.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict

import numpy as np

from .controls import ControlSpec
from .dynamics import SimulationTrace
from .topology import BusData, Line, RadialNetwork, validate_tree

SCHEMA_COMMENT = "# voltgame-schema=1"


class ParseError(ValueError):
    pass


def _num(value, default=None):
    if value is None or value == "":
        return default
    return float(value)


def _bound(value, default):
    if value is None or value == "" or (isinstance(value, float) and math.isnan(value)):
        return default
    return float(value)


def _remap_ids(bus_ids, line_rows):
    """Map arbitrary labels to dense ids with the substation at 0."""
    ids = list(bus_ids)
    child_labels = {row["to"] for row in line_rows}
    if 0 in ids:
        root = 0
    elif "0" in ids:
        root = "0"
    else:
        roots = [i for i in ids if i not in child_labels]
        if len(roots) != 1:
            raise ParseError(f"cannot identify a unique root bus (candidates: {roots})")
        root = roots[0]
    order = [root] + [i for i in ids if i != root]
    return {label: k for k, label in enumerate(order)}


def _build(v0, bus_rows, line_rows, default_ctrl) -> tuple[RadialNetwork, ControlSpec | None]:
    mapping = _remap_ids([row["id"] for row in bus_rows], line_rows)
    n = len(bus_rows) - 1

    buses = [None] * n
    ctrl_rows = [None] * n
    for row in bus_rows:
        k = mapping[row["id"]]
        if k == 0:
            continue
        buses[k - 1] = BusData(
            p_c=_num(row.get("p_c"), 0.0),
            p_g=_num(row.get("p_g"), 0.0),
            q_c=_num(row.get("q_c"), 0.0),
            v_nom=_num(row.get("v_nom"), 1.0),
            q_min=_bound(row.get("q_min"), -math.inf),
            q_max=_bound(row.get("q_max"), math.inf),
            is_actuator=bool(row.get("actuator", True)),
        )
        ctrl_rows[k - 1] = row.get("control")

    lines = []
    for row in line_rows:
        try:
            lines.append(Line(
                from_node=mapping[row["from"]],
                to_node=mapping[row["to"]],
                r=float(row["r"]),
                x=float(row["x"]),
            ))
        except KeyError as exc:
            raise ParseError(f"line {row!r} references unknown bus {exc}") from exc

    net = RadialNetwork(n=n, lines=tuple(lines), buses=tuple(buses), v0=float(v0))
    validate_tree(net)

    ctrl = None
    if default_ctrl is not None or any(c is not None for c in ctrl_rows):
        base = default_ctrl or {}
        alpha, delta, qmin, qmax = [], [], [], []
        for k, bus in enumerate(buses):
            if not bus.is_actuator:
                continue
            over = ctrl_rows[k] or {}
            alpha.append(_num(over.get("alpha", base.get("alpha")), 0.0))
            delta.append(_num(over.get("delta", base.get("delta")), 0.0))
            qmin.append(_bound(over.get("q_min", base.get("q_min")), bus.q_min))
            qmax.append(_bound(over.get("q_max", base.get("q_max")), bus.q_max))
        if alpha:
            ctrl = ControlSpec(np.array(alpha), np.array(delta), np.array(qmin), np.array(qmax))
    return net, ctrl


def load_network_json(path_or_text) -> tuple[RadialNetwork, ControlSpec | None]:
    """Load a network (and optional control block) from JSON text or a path."""
    text = path_or_text
    if "\n" not in str(path_or_text) and not str(path_or_text).lstrip().startswith("{"):
        with open(path_or_text) as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}") from exc
    for key in ("buses", "lines"):
        if key not in doc:
            raise ParseError(f"missing top-level key {key!r}")
    return _build(doc.get("v0", 1.0), doc["buses"], doc["lines"], doc.get("control"))


def save_network_json(net: RadialNetwork, ctrl: ControlSpec | None = None) -> str:
    def bound_out(v):
        return None if math.isinf(v) else v

    buses = [{"id": 0}]
    act_k = 0
    for i, b in enumerate(net.buses, start=1):
        row = {
            "id": i, "p_c": b.p_c, "p_g": b.p_g, "q_c": b.q_c, "v_nom": b.v_nom,
            "q_min": bound_out(b.q_min), "q_max": bound_out(b.q_max),
            "actuator": b.is_actuator,
        }
        if ctrl is not None and b.is_actuator:
            row["control"] = {
                "alpha": float(ctrl.alpha[act_k]),
                "delta": float(ctrl.delta[act_k]),
                "q_min": bound_out(float(ctrl.q_min[act_k])),
                "q_max": bound_out(float(ctrl.q_max[act_k])),
            }
            act_k += 1
        buses.append(row)
    lines = [{"from": ln.from_node, "to": ln.to_node, "r": ln.r, "x": ln.x}
             for ln in net.lines]
    return json.dumps({"v0": net.v0, "buses": buses, "lines": lines}, indent=1)


_BUS_COLUMNS = ["id", "p_c", "p_g", "q_c", "v_nom", "q_min", "q_max", "actuator"]
_LINE_COLUMNS = ["from", "to", "r", "x"]


def load_network_csv(buses_path, lines_path) -> tuple[RadialNetwork, ControlSpec | None]:
    """Load from a buses.csv / lines.csv pair sharing the JSON column names."""
    def read_rows(path, int_cols):
        with open(path, newline="") as fh:
            rows = []
            for lineno, raw in enumerate(csv.DictReader(fh), start=2):
                try:
                    row = dict(raw)
                    for col in int_cols:
                        row[col] = int(row[col])
                    rows.append(row)
                except (KeyError, ValueError) as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from exc
        return rows

    bus_rows = read_rows(buses_path, ["id"])
    for row in bus_rows:
        row["actuator"] = str(row.get("actuator", "true")).strip().lower() in ("1", "true", "yes")
        for col in ("q_min", "q_max"):
            if row.get(col, "") != "":
                row[col] = float(row[col])
            else:
                row[col] = None
    line_rows = read_rows(lines_path, ["from", "to"])
    return _build(1.0, bus_rows, line_rows, None)


def save_network_csv(net: RadialNetwork) -> tuple[str, str]:
    bus_buf = io.StringIO()
    w = csv.writer(bus_buf)
    w.writerow(_BUS_COLUMNS)
    w.writerow([0, 0.0, 0.0, 0.0, net.v0, "", "", "false"])
    for i, b in enumerate(net.buses, start=1):
        w.writerow([i, b.p_c, b.p_g, b.q_c, b.v_nom,
                    "" if math.isinf(b.q_min) else b.q_min,
                    "" if math.isinf(b.q_max) else b.q_max,
                    "true" if b.is_actuator else "false"])
    line_buf = io.StringIO()
    w = csv.writer(line_buf)
    w.writerow(_LINE_COLUMNS)
    for ln in net.lines:
        w.writerow([ln.from_node, ln.to_node, ln.r, ln.x])
    return bus_buf.getvalue(), line_buf.getvalue()


def dump_matrix_csv(M: np.ndarray, kind: str) -> str:
    """Dense matrix dump with a `# n=<n> kind=<X|R|Xinv>` header (golden files)."""
    buf = io.StringIO()
    buf.write(f"# n={M.shape[0]} kind={kind}\n")
    np.savetxt(buf, M, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def load_matrix_csv(text: str) -> tuple[np.ndarray, str]:
    lines = text.strip().splitlines()
    header = lines[0]
    if not header.startswith("# n="):
        raise ParseError("matrix dump must start with '# n=<n> kind=<kind>'")
    kind = header.split("kind=")[1].strip()
    M = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    return M, kind


def dump_trace_csv(trace: SimulationTrace, with_voltages: bool = False) -> str:
    """Trace as CSV rows (t, residual, q_1..q_n[, v_1..v_n])."""
    k = trace.q_hist.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf)
    header = ["t", "residual"] + [f"q_{i}" for i in range(1, k + 1)]
    if with_voltages and trace.v_hist is not None:
        header += [f"v_{i}" for i in range(1, trace.v_hist.shape[1] + 1)]
    w.writerow(header)
    for t in range(trace.q_hist.shape[0]):
        row = [t, "" if t == 0 else f"{trace.residuals[t - 1]:.17g}"]
        row += [f"{v:.17g}" for v in trace.q_hist[t]]
        if with_voltages and trace.v_hist is not None and t < trace.v_hist.shape[0]:
            row += [f"{v:.17g}" for v in trace.v_hist[t]]
        w.writerow(row)
    return buf.getvalue()


def topology_hash(net: RadialNetwork) -> str:
    """Stable short hash of the feeder structure and parameters."""
    h = hashlib.sha256()
    h.update(f"v0={net.v0:.12g};n={net.n}".encode())
    for ln in net.lines:
        h.update(f"L{ln.from_node},{ln.to_node},{ln.r:.12g},{ln.x:.12g}".encode())
    for b in net.buses:
        h.update(json.dumps(asdict(b), sort_keys=True).encode())
    return h.hexdigest()[:16]


def report_json(report, net: RadialNetwork | None = None, seed=None, extra=None) -> str:
    """PoSA report plus instance metadata as JSON."""
    doc = {
        "posa_max": report.posa_max,
        "upper": report.upper,
        "refined_upper": report.refined_upper,
        "lower": report.lower,
        "lower_clamped": report.lower_clamped,
        "gap_bound": report.gap_bound,
        "d": report.d,
        "y": report.y,
        "posa": report.posa,
    }
    if report.worst_direction is not None:
        doc["worst_direction"] = [float(v) for v in report.worst_direction]
    if net is not None:
        doc["n"] = net.n
        doc["topology_hash"] = topology_hash(net)
    if seed is not None:
        doc["seed"] = seed
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1)
