"""Scenario files (YAML) and trace directories (CSV + JSON).

Scenario files mirror :class:`ScenarioSpec` field for field.  Unknown keys
are rejected, every default is written out on dump, and loading reports
parse errors by line/column and schema errors by field path.

Trace floats are written with ``repr`` (shortest round-trip form), so a
trace read back is bit-identical to the one written.
"""

from __future__ import annotations

import json
import math
import os
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .adversary import KINDS, AdversaryPolicy
from .scenario import ALGORITHMS, RULES, SCHEMA_VERSION, TRACE_MODES, AgentSpec, ScenarioSpec, TargetSpec
from .simulator import NO_READING, SimulationTrace, compute_metrics, decode_reading


class ScenarioFileError(ValueError):
    pass


class ScenarioParseError(ScenarioFileError):
    def __init__(self, source: str, line: int, column: int, problem: str):
        super().__init__(f"{source}:{line}:{column}: {problem}")
        self.line, self.column = line, column


class SchemaError(ScenarioFileError):
    def __init__(self, field_path: str, problem: str):
        super().__init__(f"{field_path}: {problem}")
        self.field_path = field_path
        self.source = None


class DanglingReference(SchemaError):
    pass


# --- bundled scenarios ---------------------------------------------------

def bundled_names() -> list[str]:
    root = resources.files("dhtsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled_path(name: str) -> Path:
    path = Path(str(resources.files("dhtsim") / "scenarios" / f"{name}.yaml"))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario {name!r}; available: {', '.join(bundled_names())}")
    return path


def resolve_scenario(ref: str | os.PathLike) -> Path:
    """A path if it exists, else a bundled scenario name."""
    p = Path(ref)
    if p.is_file():
        return p
    return bundled_path(str(ref))


# --- schema helpers ------------------------------------------------------

def _mapping(obj, where, required=(), optional=()):
    if not isinstance(obj, dict):
        raise SchemaError(where, f"expected a mapping, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(required) - set(optional), key=str)
    if unknown:
        raise SchemaError(f"{where}.{unknown[0]}" if where else str(unknown[0]), "unknown key")
    for key in required:
        if key not in obj:
            raise SchemaError(f"{where}.{key}" if where else key, "required key missing")
    return obj


def _join(where, key):
    return f"{where}.{key}" if where else key


def _int(v, where, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(where, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise SchemaError(where, f"must be >= {lo}, got {v}")
    return v


def _float(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(where, f"expected a finite number, got {v!r}")
    return float(v)


def _choice(v, where, options):
    if v not in options:
        raise SchemaError(where, f"expected one of {list(options)}, got {v!r}")
    return v


def _cell(v, where):
    if not isinstance(v, list) or len(v) != 2:
        raise SchemaError(where, f"expected a cell [x, y], got {v!r}")
    return (_int(v[0], f"{where}[0]"), _int(v[1], f"{where}[1]"))


def _cycle(v, where):
    if not isinstance(v, list) or not v:
        raise SchemaError(where, "expected a non-empty list of cells")
    return tuple(_cell(c, f"{where}[{k}]") for k, c in enumerate(v))


def _bits(v, where):
    if not isinstance(v, list) or not v:
        raise SchemaError(where, f"expected a list of 0/1 bits, got {v!r}")
    for k, b in enumerate(v):
        if b not in (0, 1) or isinstance(b, bool):
            raise SchemaError(f"{where}[{k}]", f"expected 0 or 1, got {b!r}")
    return tuple(v)


def _prior(v, where):
    if v == "uniform":
        return v
    if not isinstance(v, list) or not v:
        raise SchemaError(where, "expected 'uniform' or a list of probabilities")
    return tuple(_float(x, f"{where}[{k}]") for k, x in enumerate(v))


def _adversary(v, where):
    if v is None:
        return None
    d = _mapping(v, where, required=("kind",), optional=("false_hypothesis", "group", "script"))
    kind = _choice(d["kind"], _join(where, "kind"), KINDS)
    false = d.get("false_hypothesis")
    group = d.get("group", [])
    if not isinstance(group, list):
        raise SchemaError(_join(where, "group"), "expected a list of agent ids")
    script = d.get("script", [])
    if not isinstance(script, list):
        raise SchemaError(_join(where, "script"), "expected a list of belief rows")
    try:
        return AdversaryPolicy(
            kind,
            None if false is None else _bits(false, _join(where, "false_hypothesis")),
            tuple(_int(g, f"{where}.group[{k}]", 0) for k, g in enumerate(group)),
            tuple(tuple(_float(x, f"{where}.script[{r}][{c}]") for c, x in enumerate(row))
                  for r, row in enumerate(script)))
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(where, str(exc)) from None


_AGENT_KEYS = ("id", "good_cycle", "bad_cycle")
_AGENT_OPTIONAL = ("identity", "comm_radius", "sensing_radius", "adversary", "prior_local", "prior_actual")
_TOP_REQUIRED = ("schema_version", "name", "grid", "f", "sigma", "agents")
_TOP_OPTIONAL = ("algorithm", "rule", "horizon", "seed", "tau", "targets", "hypotheses", "true_hypothesis",
                 "motion_edges", "tie_rule", "trace")


def _agent(v, where):
    d = _mapping(v, where, _AGENT_KEYS, _AGENT_OPTIONAL)
    return AgentSpec(
        id=_int(d["id"], _join(where, "id"), 0),
        good_cycle=_cycle(d["good_cycle"], _join(where, "good_cycle")),
        bad_cycle=_cycle(d["bad_cycle"], _join(where, "bad_cycle")),
        identity=_choice(d.get("identity", "good"), _join(where, "identity"), ("good", "bad")),
        comm_radius=_int(d.get("comm_radius", 3), _join(where, "comm_radius"), 0),
        sensing_radius=_int(d.get("sensing_radius", 3), _join(where, "sensing_radius"), 0),
        adversary=_adversary(d.get("adversary"), _join(where, "adversary")),
        prior_local=_prior(d.get("prior_local", "uniform"), _join(where, "prior_local")),
        prior_actual=_prior(d.get("prior_actual", "uniform"), _join(where, "prior_actual")),
    )


def _target(v, where):
    d = _mapping(v, where, ("name", "good_cycle", "bad_cycle"), ("true_bit",))
    if not isinstance(d["name"], str):
        raise SchemaError(_join(where, "name"), "expected a string")
    bit = d.get("true_bit", 1)
    if bit not in (0, 1) or isinstance(bit, bool):
        raise SchemaError(_join(where, "true_bit"), f"expected 0 or 1, got {bit!r}")
    return TargetSpec(d["name"], _cycle(d["good_cycle"], _join(where, "good_cycle")),
                      _cycle(d["bad_cycle"], _join(where, "bad_cycle")), bit)


def spec_from_dict(doc) -> ScenarioSpec:
    d = _mapping(doc, "", _TOP_REQUIRED, _TOP_OPTIONAL)
    version = _int(d["schema_version"], "schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version}; this build reads {SCHEMA_VERSION}")
    if not isinstance(d["name"], str) or not d["name"]:
        raise SchemaError("name", "expected a non-empty string")
    grid = d["grid"]
    if not isinstance(grid, list) or len(grid) != 2:
        raise SchemaError("grid", "expected [width, height]")
    grid = (_int(grid[0], "grid[0]", 1), _int(grid[1], "grid[1]", 1))
    sigma = _float(d["sigma"], "sigma")
    if sigma <= 0:
        raise SchemaError("sigma", f"must be positive, got {sigma}")
    tau = _float(d.get("tau", 0.99), "tau")
    if not 0 < tau <= 1:
        raise SchemaError("tau", f"must lie in (0, 1], got {tau}")
    if not isinstance(d["agents"], list) or not d["agents"]:
        raise SchemaError("agents", "expected a non-empty list")
    agents = tuple(_agent(a, f"agents[{k}]") for k, a in enumerate(d["agents"]))
    for k, a in enumerate(agents):
        if a.id != k:
            raise SchemaError(f"agents[{k}].id", f"ids must be 0..N-1 in order, got {a.id}")
    targets = d.get("targets", [])
    if not isinstance(targets, list):
        raise SchemaError("targets", "expected a list")
    targets = tuple(_target(t, f"targets[{k}]") for k, t in enumerate(targets))
    hyps = d.get("hypotheses", "product")
    if hyps != "product":
        if not isinstance(hyps, list) or not hyps:
            raise SchemaError("hypotheses", "expected 'product' or a list of bit labels")
        hyps = tuple(_bits(h, f"hypotheses[{k}]") for k, h in enumerate(hyps))
    true = d.get("true_hypothesis")
    true = None if true is None else _bits(true, "true_hypothesis")
    edges = d.get("motion_edges")
    if edges is not None:
        if not isinstance(edges, list):
            raise SchemaError("motion_edges", "expected a list of [cell, cell] pairs")
        for k, e in enumerate(edges):
            if not isinstance(e, list) or len(e) != 2:
                raise SchemaError(f"motion_edges[{k}]", "expected [cell, cell]")
        edges = tuple((_cell(a, f"motion_edges[{k}][0]"), _cell(b, f"motion_edges[{k}][1]"))
                      for k, (a, b) in enumerate(edges))
    try:
        spec = ScenarioSpec(
            name=d["name"], grid=grid, agents=agents, f=_int(d["f"], "f", 0), sigma=sigma,
            algorithm=_choice(d.get("algorithm", "adht"), "algorithm", ALGORITHMS),
            rule=_choice(d.get("rule", "min"), "rule", RULES),
            horizon=_int(d.get("horizon", 50), "horizon", 0),
            seed=_int(d.get("seed", 0), "seed", 0),
            tau=tau, targets=targets, hypotheses=hyps, true_hypothesis=true, motion_edges=edges,
            tie_rule=_choice(d.get("tie_rule", "ascending-id"), "tie_rule", ("ascending-id",)),
            trace=_choice(d.get("trace", "full"), "trace", TRACE_MODES),
        )
    except ValueError as exc:
        raise SchemaError("scenario", str(exc)) from None
    _check_references(spec)
    return spec


def _check_references(spec: ScenarioSpec) -> None:
    n = spec.n_agents
    if len(spec.true_hypothesis) != spec.n_subjects:
        raise DanglingReference("true_hypothesis", f"has {len(spec.true_hypothesis)} bits, "
                                                   f"expected one per subject ({spec.n_subjects})")
    hyps = spec.hypothesis_set()
    try:
        hyps.index(spec.true_hypothesis)
    except KeyError:
        raise DanglingReference("true_hypothesis", f"{spec.true_hypothesis} is not in the hypothesis set") from None
    for a in spec.agents:
        pol = a.adversary
        if pol is None:
            continue
        where = f"agents[{a.id}].adversary"
        for g in pol.group:
            if g >= n:
                raise DanglingReference(f"{where}.group", f"agent {g} does not exist")
        if pol.false_hypothesis is not None:
            try:
                hyps.index(pol.false_hypothesis)
            except KeyError:
                raise DanglingReference(f"{where}.false_hypothesis",
                                        f"{pol.false_hypothesis} is not in the hypothesis set") from None


def parse_scenario(text: str, source: str = "<string>") -> ScenarioSpec:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (0, 0)
        raise ScenarioParseError(source, line, col, exc.problem or str(exc)) from None
    except yaml.YAMLError as exc:
        raise ScenarioParseError(source, 0, 0, str(exc)) from None
    try:
        return spec_from_dict(doc)
    except SchemaError as exc:
        exc.source = source
        raise


def load_scenario(path: str | os.PathLike) -> ScenarioSpec:
    path = resolve_scenario(path)
    return parse_scenario(path.read_text(encoding="utf-8"), str(path))


# --- dumping -------------------------------------------------------------

class _Dumper(yaml.SafeDumper):
    """Lists without nested mappings go on one line: cycles stay readable."""


def _represent_list(dumper, data):
    flow = not any(isinstance(x, dict) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_Dumper.add_representer(list, _represent_list)


def _cells(cycle):
    return [list(c) for c in cycle]


def _adversary_dict(pol: AdversaryPolicy | None):
    if pol is None:
        return None
    out = {"kind": pol.kind}
    if pol.false_hypothesis is not None:
        out["false_hypothesis"] = list(pol.false_hypothesis)
    if pol.group:
        out["group"] = list(pol.group)
    if pol.script:
        out["script"] = [list(r) for r in pol.script]
    return out


def spec_to_dict(spec: ScenarioSpec) -> dict:
    prior = lambda p: p if p == "uniform" else list(p)  # noqa: E731
    return {
        "schema_version": spec.schema_version,
        "name": spec.name,
        "grid": list(spec.grid),
        "f": spec.f,
        "sigma": float(spec.sigma),
        "algorithm": spec.algorithm,
        "rule": spec.rule,
        "horizon": spec.horizon,
        "seed": spec.seed,
        "tau": float(spec.tau),
        "tie_rule": spec.tie_rule,
        "trace": spec.trace,
        "hypotheses": spec.hypotheses if spec.hypotheses == "product" else [list(h) for h in spec.hypotheses],
        "true_hypothesis": list(spec.true_hypothesis),
        "motion_edges": None if spec.motion_edges is None else [[list(a), list(b)] for a, b in spec.motion_edges],
        "agents": [{
            "id": a.id,
            "identity": a.identity,
            "comm_radius": a.comm_radius,
            "sensing_radius": a.sensing_radius,
            "prior_local": prior(a.prior_local),
            "prior_actual": prior(a.prior_actual),
            "adversary": _adversary_dict(a.adversary),
            "good_cycle": _cells(a.good_cycle),
            "bad_cycle": _cells(a.bad_cycle),
        } for a in spec.agents],
        "targets": [{"name": t.name, "true_bit": t.true_bit, "good_cycle": _cells(t.good_cycle),
                     "bad_cycle": _cells(t.bad_cycle)} for t in spec.targets],
    }


def dump_scenario(spec: ScenarioSpec) -> str:
    return yaml.dump(spec_to_dict(spec), Dumper=_Dumper, sort_keys=False, width=4096, default_flow_style=False)


def save_scenario(spec: ScenarioSpec, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(dump_scenario(spec), encoding="utf-8")
    return path


# --- traces --------------------------------------------------------------

def run_dir_name(spec: ScenarioSpec) -> str:
    return f"{spec.name}_seed{spec.seed}_{spec.algorithm}_{spec.rule}"


def _label(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def _f(x) -> str:
    return repr(float(x))


def _write_lines(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def write_trace(trace: SimulationTrace, out_dir: str | os.PathLike) -> Path:
    """Write the trace files into ``out_dir`` (created if needed); returns the directory.

    beliefs.csv     t,agent,kind,hyp,value  (summary traces keep the theta* column only)
    events.csv      t,agent,hyp,algorithm   one row per case-one update (full traces)
    case_one.csv    t,agent,count
    broadcasts.csv  t,agent,hyp,value       what bad agents shared (full traces)
    observations.csv t,agent,subject,x,y    good agents' readings; empty window -> x,y blank
    topology.csv    t,agent,x,y,neighbors   neighbors joined with ';'
    series.csv      t,mean_ab_true,mean_lb_true,case_one_cumulative
    metrics.json, scenario.yaml
    """
    spec = trace.spec
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_trace_files(trace, spec, out)
    except OSError as exc:
        raise OSError(f"could not write trace to {out}: {exc}") from exc
    return out


def _write_trace_files(trace: SimulationTrace, spec: ScenarioSpec, out: Path) -> None:
    hyps = spec.hypothesis_set()
    labels = [_label(h) for h in hyps.labels]
    T, n = trace.horizon, spec.n_agents
    (out / "scenario.yaml").write_text(dump_scenario(spec), encoding="utf-8")

    def belief_rows():
        for t in range(T + 1):
            for i in range(n):
                if trace.full:
                    for kind, arr in (("local", trace.local), ("actual", trace.actual)):
                        row = arr[t, i]
                        for h, lab in enumerate(labels):
                            yield f"{t},{i},{kind},{lab},{_f(row[h])}"
                else:
                    lab = labels[spec.true_index]
                    yield f"{t},{i},local,{lab},{_f(trace.local_true[t, i])}"
                    yield f"{t},{i},actual,{lab},{_f(trace.actual_true[t, i])}"
    _write_lines(out / "beliefs.csv", "t,agent,kind,hyp,value", belief_rows())

    def event_rows():
        if not trace.full:
            return
        for t, i, h in zip(*np.nonzero(trace.case_one)):
            yield f"{t},{i},{labels[h]},{spec.algorithm}"
    _write_lines(out / "events.csv", "t,agent,hyp,algorithm", event_rows())

    _write_lines(out / "case_one.csv", "t,agent,count",
                 (f"{t},{i},{int(trace.case_one_counts[t, i])}" for t in range(T + 1) for i in range(n)))

    def broadcast_rows():
        if not trace.full:
            return
        for t in range(T):
            for i in spec.bad_ids:
                for h, lab in enumerate(labels):
                    yield f"{t},{i},{lab},{_f(trace.shared[t, i, h])}"
    _write_lines(out / "broadcasts.csv", "t,agent,hyp,value", broadcast_rows())

    width = spec.grid[0]

    def observation_rows():
        for t, i, k in zip(*np.nonzero(trace.readings != NO_READING)):
            s = decode_reading(trace.readings[t, i, k], width)
            yield f"{t},{i},{k}," + ("," if s is None else f"{s[0]},{s[1]}")
    _write_lines(out / "observations.csv", "t,agent,subject,x,y", observation_rows())

    _write_lines(out / "topology.csv", "t,agent,x,y,neighbors", (
        f"{t},{i},{trace.positions[t, i, 0]},{trace.positions[t, i, 1]},"
        + ";".join(str(j) for j in np.flatnonzero(trace.neighbors[t, i]))
        for t in range(T + 1) for i in range(n)))

    m = trace.metrics
    _write_lines(out / "series.csv", "t,mean_ab_true,mean_lb_true,case_one_cumulative", (
        f"{t},{_f(m.mean_ab_true[t])},{_f(m.mean_lb_true[t])},{int(m.case_one_cumulative[t])}"
        for t in range(T + 1)))

    doc = {"scenario": spec.name, "seed": spec.seed, "algorithm": spec.algorithm, "rule": spec.rule,
           "sigma": float(spec.sigma), "f": spec.f, "horizon": T, "tau": float(spec.tau), "trace": spec.trace,
           "true_hypothesis": labels[spec.true_index], **m.summary()}
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _rows(path: Path):
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            yield line.rstrip("\n").split(",")


def read_trace(run_dir: str | os.PathLike) -> SimulationTrace:
    """Rebuild a :class:`SimulationTrace` from a directory written by :func:`write_trace`."""
    run_dir = Path(run_dir)
    spec = parse_scenario((run_dir / "scenario.yaml").read_text(encoding="utf-8"), str(run_dir / "scenario.yaml"))
    hyps = spec.hypothesis_set()
    index = {_label(h): k for k, h in enumerate(hyps.labels)}
    n, n_sub, m = spec.n_agents, spec.n_subjects, hyps.count
    width = spec.grid[0]

    topo = list(_rows(run_dir / "topology.csv"))
    T = max(int(r[0]) for r in topo)
    positions = np.zeros((T + 1, n, 2), dtype=np.int64)
    neighbors = np.zeros((T + 1, n, n), dtype=bool)
    for t, i, x, y, nb in topo:
        t, i = int(t), int(i)
        positions[t, i] = (int(x), int(y))
        for j in nb.split(";"):
            if j:
                neighbors[t, i, int(j)] = True

    readings = np.full((T + 1, n, n_sub), NO_READING, dtype=np.int32)
    for t, i, k, x, y in _rows(run_dir / "observations.csv"):
        readings[int(t), int(i), int(k)] = -1 if x == "" else int(y) * width + int(x)

    counts = np.zeros((T + 1, n), dtype=np.int64)
    for t, i, c in _rows(run_dir / "case_one.csv"):
        counts[int(t), int(i)] = int(c)

    full = spec.trace == "full"
    local_true = np.empty((T + 1, n))
    actual_true = np.empty((T + 1, n))
    if full:
        local = np.empty((T + 1, n, m))
        actual = np.empty((T + 1, n, m))
    true_lab = _label(spec.true_hypothesis)
    for t, i, kind, lab, v in _rows(run_dir / "beliefs.csv"):
        t, i, v = int(t), int(i), float(v)
        if full:
            (local if kind == "local" else actual)[t, i, index[lab]] = v
        if lab == true_lab:
            (local_true if kind == "local" else actual_true)[t, i] = v

    trace = SimulationTrace(spec, positions, neighbors, readings, local_true, actual_true, counts)
    if full:
        shared = actual[:-1].copy()
        for t, i, lab, v in _rows(run_dir / "broadcasts.csv"):
            shared[int(t), int(i), index[lab]] = float(v)
        case_one = np.zeros((T + 1, n, m), dtype=bool)
        for t, i, lab, _alg in _rows(run_dir / "events.csv"):
            case_one[int(t), int(i), index[lab]] = True
        trace.local, trace.actual, trace.shared, trace.case_one = local, actual, shared, case_one
    trace.metrics = compute_metrics(spec, actual_true, local_true, counts)
    return trace
