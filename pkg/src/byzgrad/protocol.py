"""Synchronous round engine for the resilient subgradient update.

Every round, each Byzantine agent chooses one value per out-edge (so
different neighbors may see different values), every normal agent
broadcasts its true state, and all normal agents then update from the same
time-t snapshot:

1. for every A-set of its neighbors, pick a point common to the convex hulls
   of all B-sets of received values;
2. average its own state with those picks;
3. take a subgradient step from the average.

Normal agents never learn who is Byzantine: :func:`normal_update` only sees
neighbor values.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from byzgrad import metrics
from byzgrad.errors import (
    ConfigInvalid,
    HorizonExceeded,
    HypothesisFailed,
    Infeasible,
    InvalidParams,
    NotResilient,
    PickInfeasible,
    TooFewNeighbors,
    UnsupportedFamily,
    EmptyZeroSet,
)
from byzgrad.geometry import HullSystem, PickCertificate, family_positions, pick_intersection_point
from byzgrad.graphlib import DiGraph, count_reduced_graphs, eta_bound, is_resilient, kappa_rs
from byzgrad.objectives import ObjectiveSet, ObjectiveSpec, check_k_redundant, optimal_set, subgradient
from byzgrad.trace import RoundRecord, RunTrace

if TYPE_CHECKING:
    from byzgrad.experiments import ExperimentConfig


# ---------------------------------------------------------------------------
# step sizes


@dataclass(frozen=True)
class StepSchedule:
    """``harmonic``: a0 / (t + 1).  ``fixed``: 1 / sqrt(horizon) for t < horizon."""

    kind: str = "harmonic"
    a0: float = 1.0
    horizon: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("harmonic", "fixed"):
            raise InvalidParams(f"unknown step schedule {self.kind!r}")
        if self.kind == "harmonic" and not self.a0 > 0:
            raise InvalidParams("harmonic schedule needs a0 > 0")
        if self.kind == "fixed" and (self.horizon is None or self.horizon <= 0):
            raise InvalidParams("fixed schedule needs a positive horizon")

    @classmethod
    def harmonic(cls, a0: float = 1.0) -> StepSchedule:
        return cls("harmonic", a0=a0)

    @classmethod
    def fixed(cls, horizon: int) -> StepSchedule:
        return cls("fixed", horizon=horizon)


def stepsize(s: StepSchedule, t: int) -> float:
    if t < 0:
        raise InvalidParams(f"round must be nonnegative, got {t}")
    if s.kind == "harmonic":
        return s.a0 / (t + 1)
    if t >= s.horizon:
        raise HorizonExceeded(f"fixed schedule has horizon {s.horizon}, asked for t={t}")
    return 1.0 / math.sqrt(s.horizon)


# ---------------------------------------------------------------------------
# adversaries

STRATEGY_KINDS = ("constant", "uniform_noise", "target_pull", "coordinated", "split_brain", "mimic")


@dataclass(frozen=True)
class WorldView:
    """What an omniscient adversary may read at emission time."""

    t: int
    normal: tuple[int, ...]
    states: np.ndarray  # rows follow ``normal``
    seed: int

    def state_of(self, agent: int) -> np.ndarray:
        return self.states[self.normal.index(agent)]


@dataclass(frozen=True)
class ByzantineStrategy:
    """How a Byzantine agent chooses the value placed in each out-neighbor's inbox.

    Kinds and their parameters:

    * ``constant`` (``point``): same value everywhere, every round.
    * ``uniform_noise`` (``low``, ``high``): fresh uniform draw per edge and
      round, seeded from (seed, t, sender, receiver).
    * ``target_pull`` (``target``, ``gain``): victim state moved toward
      ``target`` by ``gain``.
    * ``coordinated`` (``direction``, ``push``): every Byzantine agent sends
      the shared target centroid(normal states) + push * direction.
    * ``split_brain`` (``base``, ``delta``): ``base + delta`` to even-ranked
      out-neighbors, ``base - delta`` to odd-ranked ones.
    * ``mimic`` (``leader``, ``offset``): echo the leader's current state to
      everyone except the leader, who receives state + offset.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise InvalidParams(f"unknown Byzantine strategy {self.kind!r}")

    def _vec(self, key: str, d: int, default: float | None = None) -> np.ndarray:
        raw = self.params.get(key, default)
        if raw is None:
            raise InvalidParams(f"strategy {self.kind!r} needs parameter {key!r}")
        v = np.atleast_1d(np.asarray(raw, dtype=float))
        if v.shape == (1,) and d > 1:
            v = np.full(d, v[0])
        if v.shape != (d,):
            raise InvalidParams(f"parameter {key!r} of {self.kind!r} must have dimension {d}")
        return v

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **{k: _plain(v) for k, v in self.params.items()}}


def _plain(v: Any) -> Any:
    return v.tolist() if isinstance(v, np.ndarray) else v


def strategy_emit(
    s: ByzantineStrategy, view: WorldView, sender: int, receiver: int, rank: int, d: int
) -> np.ndarray:
    """Value the Byzantine ``sender`` places in ``receiver``'s inbox this round.

    ``rank`` is the receiver's position among the sender's sorted out-neighbors.
    """
    kind = s.kind
    if kind == "constant":
        return s._vec("point", d)
    if kind == "uniform_noise":
        low, high = s._vec("low", d, -1.0), s._vec("high", d, 1.0)
        rng = np.random.default_rng([view.seed, view.t, sender, receiver])
        return rng.uniform(low, high)
    if kind == "target_pull":
        target = s._vec("target", d)
        gain = float(s.params.get("gain", 1.0))
        x = view.state_of(receiver) if receiver in view.normal else target
        return x + gain * (target - x)
    if kind == "coordinated":
        direction = s._vec("direction", d, 1.0)
        push = float(s.params.get("push", 10.0))
        return view.states.mean(axis=0) + push * direction
    if kind == "split_brain":
        base, delta = s._vec("base", d, 0.0), s._vec("delta", d, 1.0)
        return base + delta if rank % 2 == 0 else base - delta
    if kind == "mimic":
        leader = int(s.params["leader"])
        offset = s._vec("offset", d, -1e3)
        x = view.state_of(leader)
        return x + offset if receiver == leader else x.copy()
    raise InvalidParams(f"unknown Byzantine strategy {kind!r}")


# ---------------------------------------------------------------------------
# the update rule


@dataclass
class UpdateResult:
    x_next: np.ndarray
    v: np.ndarray
    picks: np.ndarray  # (a_i, d)
    certificates: list[PickCertificate] | None = None


def normal_update(
    x_i,
    inbox: Mapping[int, np.ndarray],
    alpha: float,
    objective: ObjectiveSpec,
    d: int,
    beta: int,
    policy: str = "auto",
    with_certificates: bool = False,
) -> UpdateResult:
    """One normal agent's update from its own state and received values.

    Raises:
        TooFewNeighbors: fewer than ``(d+1)*beta + 1`` neighbors.
        Infeasible: a hull intersection came out empty (never happens when
            the inputs are finite; see the feasibility suite).
    """
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    ids = sorted(inbox)
    values = np.array([np.atleast_1d(inbox[j]) for j in ids], dtype=float).reshape(len(ids), d)
    a_pos, b_pos = family_positions(len(ids), d, beta)
    if d == 1 and policy in ("auto", "midpoint") and not with_certificates:
        groups = values[:, 0][b_pos]  # (a, b, k)
        lo = groups.min(axis=2).max(axis=1)
        hi = groups.max(axis=2).min(axis=1)
        gap = lo - hi
        if (gap > 1e-8 * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))).any():
            raise Infeasible("hull intervals do not meet", float(gap.max()))
        picks = (0.5 * (lo + hi))[:, None]
        certs = None
    else:
        id_arr = np.asarray(ids)
        certs = []
        for j in range(len(a_pos)):
            hs = HullSystem(values[b_pos[j]], id_arr[b_pos[j]])
            certs.append(pick_intersection_point(hs, policy))
        picks = np.array([c.point for c in certs]).reshape(len(a_pos), d)
    v = (x_i + picks.sum(axis=0)) / (1 + len(a_pos))
    x_next = v - alpha * subgradient(objective, v)
    return UpdateResult(x_next, v, picks, certs if with_certificates else None)


def raw_average_update(x_i, inbox: Mapping[int, np.ndarray], alpha: float, objective: ObjectiveSpec) -> UpdateResult:
    """Deliberately non-resilient averaging of raw neighbor values (negative control)."""
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    vals = np.array([np.atleast_1d(inbox[j]) for j in sorted(inbox)], dtype=float)
    v = (x_i + vals.sum(axis=0)) / (1 + len(inbox))
    return UpdateResult(v - alpha * subgradient(objective, v), v, vals)


# ---------------------------------------------------------------------------
# world state


@dataclass
class AgentWorld:
    graph: DiGraph
    objectives: ObjectiveSet
    byzantine: Mapping[int, ByzantineStrategy]
    states: np.ndarray  # (|H|, d), rows follow ``normal``
    d: int
    beta: int
    schedule: StepSchedule
    seed: int = 0
    policy: str = "auto"
    engine: str = "resilient"
    allow_excess_byzantine: bool = False
    t: int = 0
    normal: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        n = self.graph.n
        if self.objectives.n != n:
            raise ConfigInvalid(f"graph has {n} agents but {self.objectives.n} objectives were given")
        if self.objectives.dim != self.d:
            raise ConfigInvalid(f"objectives have dimension {self.objectives.dim}, run has d={self.d}")
        bad = [b for b in self.byzantine if not 0 <= b < n]
        if bad:
            raise ConfigInvalid(f"Byzantine ids {bad} outside [0, {n})")
        if self.engine not in ("resilient", "raw_average"):
            raise ConfigInvalid(f"unknown engine {self.engine!r}")
        self.normal = tuple(i for i in range(n) if i not in self.byzantine)
        if not self.normal:
            raise ConfigInvalid("at least one normal agent is required")
        self.states = np.array(self.states, dtype=float).reshape(len(self.normal), self.d)
        need = (self.d + 1) * self.beta + 1
        for i in self.normal:
            nbrs = self.graph.in_neighbors[i]
            if self.engine == "resilient" and len(nbrs) < need:
                raise TooFewNeighbors(f"agent {i} has {len(nbrs)} neighbors, needs {need}")
            faulty = sum(1 for j in nbrs if j in self.byzantine)
            if faulty > self.beta and not self.allow_excess_byzantine:
                raise ConfigInvalid(
                    f"agent {i} has {faulty} Byzantine neighbors, more than beta={self.beta}"
                )
        self._row = {a: k for k, a in enumerate(self.normal)}

    def state_of(self, agent: int) -> np.ndarray:
        return self.states[self._row[agent]]

    def view(self) -> WorldView:
        return WorldView(self.t, self.normal, self.states.copy(), self.seed)


def build_inboxes(world: AgentWorld) -> dict[int, dict[int, np.ndarray]]:
    """Messages for round t: true states from normal agents, strategy output from Byzantine ones."""
    view = world.view()
    inbox: dict[int, dict[int, np.ndarray]] = {i: {} for i in world.normal}
    for j in range(world.graph.n):
        outs = world.graph.out_neighbors[j]
        if j in world.byzantine:
            strat = world.byzantine[j]
            for rank, i in enumerate(outs):
                if i in inbox:
                    inbox[i][j] = np.asarray(strategy_emit(strat, view, j, i, rank, world.d), dtype=float)
        else:
            x = view.states[world._row[j]]
            for i in outs:
                if i in inbox:
                    inbox[i][j] = x
    return inbox


def run_round(
    world: AgentWorld,
    update_order: Sequence[int] | None = None,
    record_picks: bool = False,
    record_certificates: bool = False,
    record_inbox: bool = False,
) -> RoundRecord:
    """Advance every normal agent by one synchronous round.

    All updates read the time-t snapshot, so ``update_order`` (a permutation
    of the normal agents) cannot change the outcome.

    Raises:
        PickInfeasible: an agent's hull intersection was empty.
    """
    t = world.t
    alpha = stepsize(world.schedule, t)
    inbox = build_inboxes(world)
    snapshot = world.states.copy()
    order = world.normal if update_order is None else tuple(update_order)
    if sorted(order) != list(world.normal):
        raise InvalidParams("update_order must be a permutation of the normal agents")
    new = np.empty_like(snapshot)
    v = np.empty_like(snapshot)
    picks: dict[int, np.ndarray] = {}
    certs: dict[int, list] = {}
    for i in order:
        k = world._row[i]
        f = world.objectives[i]
        if world.engine == "raw_average":
            res = raw_average_update(snapshot[k], inbox[i], alpha, f)
        else:
            try:
                res = normal_update(
                    snapshot[k], inbox[i], alpha, f, world.d, world.beta,
                    world.policy, with_certificates=record_certificates,
                )
            except Infeasible as exc:
                raise PickInfeasible(f"agent {i} could not pick at round {t}: {exc}", i, t, exc.max_residual) from exc
        new[k] = res.x_next
        v[k] = res.v
        picks[i] = res.picks
        if res.certificates is not None:
            certs[i] = res.certificates
    world.states = new
    world.t = t + 1
    return RoundRecord(
        t=t,
        alpha=alpha,
        states=snapshot,
        v=v,
        picks=picks if (record_picks or record_certificates) else None,
        certificates=certs if record_certificates else None,
        inbox=inbox if record_inbox else None,
    )


# ---------------------------------------------------------------------------
# hypotheses and experiments


@dataclass
class HypothesisReport:
    resilient: bool
    witness: Any
    kappa: int | None
    required_redundancy: int | None
    redundant: bool | None
    redundancy_witness: Any = None
    note: str = ""

    @property
    def all_pass(self) -> bool:
        return bool(self.resilient and self.redundant)

    def to_dict(self) -> dict[str, Any]:
        w = self.witness
        rw = self.redundancy_witness
        return {
            "resilient": self.resilient,
            "witness": None if w is None else {
                "kept_vertices": list(w.kept_vertices),
                "removed_edges": [[list(e) for e in grp] for grp in w.removed_edges],
            },
            "kappa": self.kappa,
            "required_redundancy": self.required_redundancy,
            "redundant": self.redundant,
            "redundancy_witness": None if rw is None else [list(rw[0]), list(rw[1])],
            "note": self.note,
        }


def check_hypotheses(graph: DiGraph, objectives: ObjectiveSet, d: int, beta: int) -> HypothesisReport:
    """Graph must be (beta, d*beta)-resilient; objectives (n - kappa)-redundant."""
    r, s = beta, d * beta
    if r + s > graph.n - 1:
        return HypothesisReport(False, None, None, None, None, note=f"r+s={r + s} exceeds n-1")
    res = is_resilient(graph, r, s)
    if not res:
        return HypothesisReport(False, res.witness, None, None, None)
    kap = kappa_rs(graph, r, s)
    need = graph.n - kap
    try:
        red = check_k_redundant(objectives, need)
        return HypothesisReport(True, None, kap, need, red.redundant, red.witness)
    except (UnsupportedFamily, EmptyZeroSet) as exc:
        return HypothesisReport(True, None, kap, need, None, note=f"redundancy not decidable: {exc}")


def initial_states(config: ExperimentConfig, normal: Sequence[int]) -> tuple[np.ndarray, list[float]]:
    if config.init_states is not None:
        init = np.asarray(config.init_states, dtype=float).reshape(config.graph.n, config.d)
        return init[list(normal)].copy(), []
    lo, hi = config.init_box
    rng = np.random.default_rng(config.seed)
    return rng.uniform(lo, hi, size=(len(normal), config.d)), [float(lo), float(hi)]


def run_experiment(config: ExperimentConfig, record_picks: bool | None = None) -> RunTrace:
    """Run ``config.T`` rounds and return the full trace.

    The result depends only on the config (the seed drives initial states
    and noisy adversaries).  A pick failure halts the run and is recorded
    as ``outcome = "pick_infeasible"``.

    Raises:
        HypothesisFailed: a ``require_*`` flag is set and its hypothesis fails.
    """
    report = None
    if config.require_resilient or config.require_redundant:
        report = check_hypotheses(config.graph, config.objectives, config.d, config.beta)
        if config.require_resilient and not report.resilient:
            raise HypothesisFailed(
                f"graph is not ({config.beta}, {config.d * config.beta})-resilient; witness {report.witness}"
            )
        if config.require_redundant and not report.redundant:
            raise HypothesisFailed(
                f"objectives are not {report.required_redundancy}-redundant; witness {report.redundancy_witness}"
            )

    normal = tuple(i for i in range(config.graph.n) if i not in config.byzantine)
    states, box = initial_states(config, normal)
    world = AgentWorld(
        graph=config.graph,
        objectives=config.objectives,
        byzantine=dict(config.byzantine),
        states=states,
        d=config.d,
        beta=config.beta,
        schedule=config.schedule,
        seed=config.seed,
        policy=config.pick_policy,
        engine=config.engine,
        allow_excess_byzantine=config.allow_excess_byzantine,
    )

    header = experiment_header(config, world, report)
    header["init_box"] = box
    xstar = _try_optimal_set(config.objectives)
    header["xstar"] = None if xstar is None else describe_set(xstar)
    trace = RunTrace(header=header, normal=world.normal)

    keep_picks = config.record_picks if record_picks is None else record_picks
    tracker = metrics.RunningGap(config.objectives, world.normal, xstar)
    try:
        for _ in range(config.T):
            rec = run_round(world, record_picks=keep_picks or config.check_containment)
            rec.metrics = tracker.observe(rec.states)
            if config.check_containment:
                rec.containment = metrics.round_containment(rec, world.graph, world.normal)
                if not keep_picks:
                    rec.picks = None
            trace.rounds.append(rec)
    except PickInfeasible as exc:
        trace.outcome = "pick_infeasible"
        trace.message = str(exc)
    trace.final_states = world.states.copy()
    trace.final_metrics = tracker.peek(world.states)
    return trace


def _try_optimal_set(objectives: ObjectiveSet):
    try:
        return optimal_set(objectives)
    except (UnsupportedFamily, EmptyZeroSet):
        return None


def describe_set(opt) -> dict[str, Any]:
    if opt.kind == "interval":
        return {"kind": "interval", "lo": opt.lo, "hi": opt.hi}
    if opt.kind == "point":
        return {"kind": "point", "point": opt.point.tolist()}
    return {"kind": "balls", "centers": opt.centers.tolist(), "radii": opt.radii.tolist()}


# kappa is exponential to compute; the trace header only reports it when cheap
HEADER_KAPPA_BUDGET = 200_000


def experiment_header(config: ExperimentConfig, world: AgentWorld, report: HypothesisReport | None) -> dict[str, Any]:
    sizes = [world.graph.in_degree(i) for i in world.normal]
    header: dict[str, Any] = {
        "label": config.label,
        "n": world.graph.n,
        "edges": [list(e) for e in world.graph.sorted_edges()],
        "byzantine": {str(b): s.to_dict() for b, s in sorted(config.byzantine.items())},
        "objectives": [f.to_dict() for f in config.objectives],
        "d": config.d,
        "beta": config.beta,
        "T": config.T,
        "seed": config.seed,
        "schedule": {"kind": config.schedule.kind, "a0": config.schedule.a0, "horizon": config.schedule.horizon},
        "pick_policy": config.pick_policy,
        "engine": config.engine,
        "subgradient_bound": config.objectives.subgradient_bound,
    }
    try:
        eta = eta_bound(sizes, config.d, config.beta)
    except TooFewNeighbors:
        eta = None
    header["eta"] = eta
    kap = report.kappa if report is not None else None
    if kap is None:
        r, s = config.beta, config.d * config.beta
        try:
            count = count_reduced_graphs(world.graph, r, s)
            if count <= HEADER_KAPPA_BUDGET:
                kap = kappa_rs(world.graph, r, s)
            else:
                header["kappa_note"] = f"skipped: {count} reduced graphs exceed the header budget"
        except (NotResilient, InvalidParams):
            kap = None
    header["kappa"] = kap
    if eta is not None and kap is not None and len(world.normal) >= 2:
        l, lam, eta_l = metrics.bound_constants(len(world.normal), kap, eta)
        header.update({"l": l, "lambda": lam, "eta_l": eta_l})
    if report is not None:
        header["hypotheses"] = report.to_dict()
    return header
