"""Experiment configs, file formats and parameter sweeps.

Config files are TOML::

    [graph]
    path = "k4.json"              # {"n": 4, "edges": [[0, 1], ...]}

    [objectives]
    path = "balls.json"           # [{"family": "ball_hinge", "center": [0], "radius": 1}, ...]

    [adversary.3]                 # agent id -> strategy
    kind = "constant"
    point = [1e6]

    [run]
    d = 1
    beta = 1
    T = 2000
    seed = 7
    schedule = "harmonic"         # or "fixed", or {kind = "harmonic", a0 = 0.5}
    pick_policy = "auto"
    require_resilient = false
    require_redundant = false
    init_box = [-5.0, 5.0]        # or init_states = [[...], ...] (one row per agent)

Relative paths are resolved against the config file's directory.  Agent
ids are zero-based everywhere.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from byzgrad.errors import ByzGradError, ConfigInvalid, HypothesisFailed
from byzgrad.graphlib import DiGraph
from byzgrad.objectives import FAMILIES, ObjectiveSet, ObjectiveSpec
from byzgrad.protocol import (
    STRATEGY_KINDS,
    ByzantineStrategy,
    HypothesisReport,
    StepSchedule,
    check_hypotheses,
    run_experiment,
)
from byzgrad.trace import RunTrace

SUMMARY_COLUMNS = (
    "index",
    "label",
    "axis",
    "value",
    "seed",
    "T",
    "outcome",
    "final_diameter",
    "final_max_dist_to_Xstar",
    "gap_at_T",
    "error",
)

SWEEP_AXES = ("T", "seed", "beta", "d", "adversary", "pick_policy", "a0")


@dataclass
class ExperimentConfig:
    graph: DiGraph
    objectives: ObjectiveSet
    byzantine: dict[int, ByzantineStrategy] = field(default_factory=dict)
    d: int = 1
    beta: int = 1
    T: int = 100
    seed: int = 0
    schedule: StepSchedule = field(default_factory=StepSchedule.harmonic)
    pick_policy: str = "auto"
    require_resilient: bool = False
    require_redundant: bool = False
    init_states: Any = None
    init_box: tuple[float, float] = (-1.0, 1.0)
    engine: str = "resilient"
    allow_excess_byzantine: bool = False
    record_picks: bool = False
    check_containment: bool = False
    label: str = ""
    out_csv: str | None = None
    out_jsonl: str | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigInvalid(f"d must be >= 1, got {self.d}")
        if self.beta < 0:
            raise ConfigInvalid(f"beta must be >= 0, got {self.beta}")
        if self.T < 0:
            raise ConfigInvalid(f"T must be >= 0, got {self.T}")
        if self.schedule.kind == "fixed" and self.schedule.horizon != self.T and self.T > 0:
            raise ConfigInvalid(f"fixed schedule horizon {self.schedule.horizon} differs from T={self.T}")
        if self.graph.n != self.objectives.n:
            raise ConfigInvalid(f"graph has {self.graph.n} agents, objectives list has {self.objectives.n}")
        lo, hi = self.init_box
        if not lo <= hi:
            raise ConfigInvalid(f"init_box must satisfy lo <= hi, got {self.init_box}")

    def with_(self, **changes) -> ExperimentConfig:
        """Copy with changes; a fixed schedule follows a changed T."""
        if "T" in changes and "schedule" not in changes and self.schedule.kind == "fixed":
            changes["schedule"] = StepSchedule.fixed(max(int(changes["T"]), 1))
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# file formats


def _read_json(path: Path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from exc


def graph_from_dict(data: Mapping[str, Any]) -> DiGraph:
    try:
        n = int(data["n"])
        edges = [(int(a), int(b)) for a, b in data["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"graph needs integer 'n' and a list of [from, to] 'edges': {exc}") from exc
    try:
        return DiGraph.from_edges(n, edges)
    except ByzGradError as exc:
        raise ConfigInvalid(f"bad graph: {exc}") from exc


def graph_to_dict(g: DiGraph) -> dict[str, Any]:
    return {"n": g.n, "edges": [list(e) for e in g.sorted_edges()]}


def load_graph(path: str | Path) -> DiGraph:
    return graph_from_dict(_read_json(Path(path)))


def objectives_from_list(data: Sequence[Mapping[str, Any]]) -> ObjectiveSet:
    if not isinstance(data, list) or not data:
        raise ConfigInvalid("objectives file must hold a nonempty JSON array")
    specs = []
    for k, rec in enumerate(data):
        fam = rec.get("family")
        if fam not in FAMILIES:
            raise ConfigInvalid(f"objective {k}: unknown family {fam!r}")
        try:
            specs.append(ObjectiveSpec(fam, rec["center"], float(rec.get("radius", 0.0))))
        except (KeyError, ByzGradError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"objective {k}: {exc}") from exc
    try:
        return ObjectiveSet(tuple(specs))
    except ByzGradError as exc:
        raise ConfigInvalid(str(exc)) from exc


def load_objectives(path: str | Path) -> ObjectiveSet:
    return objectives_from_list(_read_json(Path(path)))


def _schedule(raw: Any, T: int) -> StepSchedule:
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, Mapping):
        raise ConfigInvalid(f"schedule must be a string or table, got {raw!r}")
    kind = raw.get("kind", "harmonic")
    try:
        if kind == "harmonic":
            return StepSchedule.harmonic(float(raw.get("a0", 1.0)))
        if kind == "fixed":
            return StepSchedule.fixed(max(T, 1))
    except ByzGradError as exc:
        raise ConfigInvalid(str(exc)) from exc
    raise ConfigInvalid(f"unknown schedule kind {kind!r}")


def _strategy(agent: str, raw: Mapping[str, Any]) -> tuple[int, ByzantineStrategy]:
    try:
        ident = int(agent)
    except ValueError as exc:
        raise ConfigInvalid(f"adversary key {agent!r} is not an agent id") from exc
    params = dict(raw)
    kind = params.pop("kind", None)
    if kind not in STRATEGY_KINDS:
        raise ConfigInvalid(f"adversary {ident}: unknown strategy {kind!r} (choose from {', '.join(STRATEGY_KINDS)})")
    return ident, ByzantineStrategy(kind, params)


def config_from_dict(data: Mapping[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
    """Build a config from parsed TOML; file paths are relative to ``base_dir``."""
    base = Path(base_dir)
    for section in ("graph", "objectives", "run"):
        if section not in data:
            raise ConfigInvalid(f"missing [{section}] section")
    try:
        graph = load_graph(base / data["graph"]["path"])
        objectives = load_objectives(base / data["objectives"]["path"])
    except KeyError as exc:
        raise ConfigInvalid("[graph] and [objectives] need a 'path' key") from exc
    run = dict(data["run"])
    known = {
        "d", "beta", "T", "seed", "schedule", "pick_policy", "require_resilient", "require_redundant",
        "init_box", "init_states", "engine", "allow_excess_byzantine", "record_picks",
        "check_containment", "label",
    }
    unknown = set(run) - known
    if unknown:
        raise ConfigInvalid(f"unknown [run] keys: {sorted(unknown)}")
    T = int(run.get("T", 100))
    byz = dict(_strategy(k, v) for k, v in data.get("adversary", {}).items())
    out = data.get("output", {})
    try:
        return ExperimentConfig(
            graph=graph,
            objectives=objectives,
            byzantine=byz,
            d=int(run.get("d", objectives.dim)),
            beta=int(run.get("beta", 1)),
            T=T,
            seed=int(run.get("seed", 0)),
            schedule=_schedule(run.get("schedule", "harmonic"), T),
            pick_policy=str(run.get("pick_policy", "auto")),
            require_resilient=bool(run.get("require_resilient", False)),
            require_redundant=bool(run.get("require_redundant", False)),
            init_states=run.get("init_states"),
            init_box=tuple(float(v) for v in run.get("init_box", (-1.0, 1.0))),
            engine=str(run.get("engine", "resilient")),
            allow_excess_byzantine=bool(run.get("allow_excess_byzantine", False)),
            record_picks=bool(run.get("record_picks", False)),
            check_containment=bool(run.get("check_containment", False)),
            label=str(run.get("label", "")),
            out_csv=out.get("csv"),
            out_jsonl=out.get("jsonl"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad [run] value: {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a TOML experiment config.

    Raises:
        ConfigInvalid: unreadable file, bad TOML, missing sections or bad values.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"config not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid TOML ({exc})") from exc
    return config_from_dict(data, path.parent)


def validate_config(cfg: ExperimentConfig) -> tuple[ExperimentConfig, HypothesisReport]:
    """Structural checks plus the advisory hypothesis report.

    Raises:
        ConfigInvalid: Byzantine ids out of range, too few neighbors, or an
            agent with more than ``beta`` Byzantine neighbors (unless
            ``allow_excess_byzantine``).
        HypothesisFailed: only when a ``require_*`` flag is set and fails.
    """
    n = cfg.graph.n
    bad = [b for b in cfg.byzantine if not 0 <= b < n]
    if bad:
        raise ConfigInvalid(f"Byzantine ids {bad} outside [0, {n})")
    if cfg.objectives.dim != cfg.d:
        raise ConfigInvalid(f"objectives have dimension {cfg.objectives.dim}, run has d={cfg.d}")
    need = (cfg.d + 1) * cfg.beta + 1
    for i in range(n):
        if i in cfg.byzantine:
            continue
        nbrs = cfg.graph.in_neighbors[i]
        if cfg.engine == "resilient" and len(nbrs) < need:
            raise ConfigInvalid(f"agent {i} has {len(nbrs)} neighbors; d={cfg.d}, beta={cfg.beta} needs {need}")
        faulty = sum(1 for j in nbrs if j in cfg.byzantine)
        if faulty > cfg.beta and not cfg.allow_excess_byzantine:
            raise ConfigInvalid(f"agent {i} has {faulty} Byzantine neighbors, more than beta={cfg.beta}")
    if cfg.init_states is not None:
        try:
            rows = [list(r) if isinstance(r, (list, tuple)) else [r] for r in cfg.init_states]
        except TypeError as exc:
            raise ConfigInvalid("init_states must be a list of rows") from exc
        if len(rows) != n or any(len(r) != cfg.d for r in rows):
            raise ConfigInvalid(f"init_states must have {n} rows of length {cfg.d}")
    report = check_hypotheses(cfg.graph, cfg.objectives, cfg.d, cfg.beta)
    if cfg.require_resilient and not report.resilient:
        raise HypothesisFailed(f"graph is not ({cfg.beta}, {cfg.d * cfg.beta})-resilient; witness {report.witness}")
    if cfg.require_redundant and not report.redundant:
        raise HypothesisFailed(
            f"objectives are not {report.required_redundancy}-redundant; witness {report.redundancy_witness}"
        )
    return cfg, report


# ---------------------------------------------------------------------------
# sweeps


def axis_config(template: ExperimentConfig, axis: str, value: Any, index: int) -> ExperimentConfig:
    """Config for one sweep point; the seed is always ``template.seed + index``."""
    seed = template.seed + index
    if axis == "T":
        return template.with_(T=int(value), seed=seed)
    if axis == "seed":
        return template.with_(seed=int(value))
    if axis in ("beta", "d"):
        return template.with_(**{axis: int(value)}, seed=seed)
    if axis == "pick_policy":
        return template.with_(pick_policy=str(value), seed=seed)
    if axis == "a0":
        return template.with_(schedule=StepSchedule.harmonic(float(value)), seed=seed)
    if axis == "adversary":
        spec = value if isinstance(value, Mapping) else {"kind": value}
        strat = _strategy("0", spec)[1]
        return template.with_(byzantine={b: strat for b in template.byzantine}, seed=seed)
    raise ConfigInvalid(f"unknown sweep axis {axis!r} (choose from {', '.join(SWEEP_AXES)})")


@dataclass
class SweepResult:
    traces: list[RunTrace | None]
    rows: list[dict[str, Any]]

    @property
    def errors(self) -> list[str]:
        return [r["error"] for r in self.rows if r["error"]]

    def write_summary(self, path: str | Path) -> None:
        write_summary(self.rows, path)


def _value_label(value: Any) -> str:
    if isinstance(value, Mapping):
        return str(value.get("kind", json.dumps(dict(value), sort_keys=True)))
    return str(value)


def _run_one(cfg: ExperimentConfig) -> RunTrace:
    return run_experiment(cfg)


def _summary_row(index: int, cfg: ExperimentConfig | None, axis: str, value: Any, trace: RunTrace | None, error: str):
    fm = trace.final_metrics if trace is not None else {}
    return {
        "index": index,
        "label": "" if cfg is None else cfg.label,
        "axis": axis,
        "value": _value_label(value),
        "seed": "" if cfg is None else cfg.seed,
        "T": "" if cfg is None else cfg.T,
        "outcome": "error" if error else trace.outcome,
        "final_diameter": fm.get("diameter", math.nan),
        "final_max_dist_to_Xstar": fm.get("max_dist_to_Xstar", math.nan),
        "gap_at_T": fm.get("gap", math.nan),
        "error": error,
    }


def max_workers() -> int:
    raw = os.environ.get("BYZGRAD_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def sweep(
    template: ExperimentConfig,
    axis: str | None = None,
    values: Sequence[Any] = (),
    workers: int | None = None,
    out_dir: str | Path | None = None,
) -> SweepResult:
    """Run the template once per axis value (an empty axis means one run).

    Per-run errors are recorded in the summary, never raised.  When
    ``out_dir`` is given each run writes ``run_<index>.csv`` there.
    """
    if not axis or not values:
        points: list[tuple[str, Any]] = [("", "")]
    else:
        points = [(axis, v) for v in values]
    configs: list[ExperimentConfig | None] = []
    errors: list[str] = []
    for index, (ax, v) in enumerate(points):
        try:
            configs.append(template if not ax else axis_config(template, ax, v, index))
            errors.append("")
        except ByzGradError as exc:
            configs.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")

    workers = min(workers or max_workers(), max(1, len(configs)))
    traces: list[RunTrace | None] = [None] * len(configs)
    runnable = [k for k, c in enumerate(configs) if c is not None]
    if workers == 1 or len(runnable) <= 1:
        for k in runnable:
            try:
                traces[k] = _run_one(configs[k])
            except ByzGradError as exc:
                errors[k] = f"{type(exc).__name__}: {exc}"
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {k: pool.submit(_run_one, configs[k]) for k in runnable}
            for k, fut in futures.items():
                try:
                    traces[k] = fut.result()
                except ByzGradError as exc:
                    errors[k] = f"{type(exc).__name__}: {exc}"

    rows = [_summary_row(k, configs[k], points[k][0], points[k][1], traces[k], errors[k]) for k in range(len(points))]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for k, tr in enumerate(traces):
            if tr is not None:
                tr.write_csv(out / f"run_{k}.csv")
    return SweepResult(traces, rows)


def write_summary(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    """Summary CSV with the fixed column set ``SUMMARY_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row.get(c, "")) for c in SUMMARY_COLUMNS})


def _fmt(v: Any) -> Any:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v
