"""Explicit-state checker for the map-merge protocol.

Explores every interleaving of the shared transition rules over a scripted
sighting schedule and checks the properties the protocol is trusted for:
no deadlocks, a reachable (and, strongly, inevitable) done state where all
agents share one leader, specific traces being performable, and confluence
of all terminal states. Fault injections (dropped notifies, a broken leader
decision) exist to prove the checks can fail loudly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

from .merge_protocol import MergeProtocol, ProtocolState, Sighting

Trace = tuple[str, ...]


class ExplorationBound(RuntimeError):
    def __init__(self, bound: int, trace: Trace):
        super().__init__(f"state bound {bound} exceeded at trace of length {len(trace)}")
        self.trace = trace


@dataclass
class ProtocolModel:
    """A bounded scenario: agents with fixed world positions, a sighting
    schedule, optional pre-merged groups, optional faults."""

    agents: tuple[str, ...]
    positions: dict[str, tuple[int, int]]
    schedule: tuple[Sighting, ...]
    initial_leaders: Optional[dict[str, str]] = None
    drop_notify: frozenset[str] = frozenset()
    both_claim_victory: bool = False

    def engine(self) -> MergeProtocol:
        return MergeProtocol(
            agents=self.agents,
            schedule=self.schedule,
            drop_notify=self.drop_notify,
            both_claim_victory=self.both_claim_victory,
        )

    def initial_state(self) -> ProtocolState:
        engine = self.engine()
        if self.initial_leaders is None:
            return engine.initial_state()
        offsets = {}
        for a in self.agents:
            leader = self.initial_leaders[a]
            pa, pl = self.positions[a], self.positions[leader]
            offsets[a] = (pa[0] - pl[0], pa[1] - pl[1])
        return engine.initial_state(dict(self.initial_leaders), offsets)

    def alphabet_ok(self, label: str) -> bool:
        parts = label.split()
        kinds = {"sight", "report", "forward", "cancel", "propose", "absorb", "notify", "done"}
        if not parts or parts[0] not in kinds:
            return False
        return all(p in self.agents for p in parts[1:])


def chain_model(
    n_agents: int = 3,
    n_sightings: int = 2,
    spacing: int = 4,
    initial_leaders: Optional[dict[str, str]] = None,
    drop_notify: frozenset[str] = frozenset(),
    both_claim_victory: bool = False,
    pairs: Optional[tuple[tuple[str, str], ...]] = None,
) -> ProtocolModel:
    """Agents on a line sighting each other consecutively. When the schedule
    has fewer sightings than merges needed, the uncovered tail starts
    pre-merged into one group, so a done state (full unification) stays
    reachable and the merge meets a larger group along the way."""
    if not 2 <= n_agents <= 4:
        raise ValueError("the model supports 2 to 4 agents")
    agents = tuple(f"a{i + 1}" for i in range(n_agents))
    positions = {a: (i * spacing, 0) for i, a in enumerate(agents)}
    if pairs is None:
        n_sightings = min(n_sightings, n_agents - 1)
        pairs = tuple((agents[i], agents[i + 1]) for i in range(n_sightings))
        if initial_leaders is None and n_sightings < n_agents - 1:
            head = agents[n_sightings]
            initial_leaders = {a: a for a in agents[: n_sightings]}
            initial_leaders.update({a: head for a in agents[n_sightings:]})
    schedule = tuple(
        Sighting(
            a=a,
            b=b,
            offset=(positions[b][0] - positions[a][0], positions[b][1] - positions[a][1]),
        )
        for a, b in pairs
    )
    return ProtocolModel(
        agents=agents,
        positions=positions,
        schedule=schedule,
        initial_leaders=initial_leaders,
        drop_notify=drop_notify,
        both_claim_victory=both_claim_victory,
    )


@dataclass
class StateGraph:
    states: list[ProtocolState]
    edges: list[list[tuple[str, int]]]  # per state: (label, successor) sorted
    traces: list[Trace]  # one shortest trace per state
    initial: int = 0

    def terminal_ids(self) -> list[int]:
        return [i for i, out in enumerate(self.edges) if not out]

    def done_ids(self) -> list[int]:
        return [i for i, s in enumerate(self.states) if s.done]


def explore(model: ProtocolModel, state_bound: int = 200_000) -> StateGraph:
    """Full reachable state graph under every event interleaving."""
    engine = model.engine()
    init = model.initial_state()
    index = {init: 0}
    states = [init]
    traces: list[Trace] = [()]
    edges: list[list[tuple[str, int]]] = [[]]
    queue = deque([0])
    while queue:
        sid = queue.popleft()
        state = states[sid]
        for event in engine.enabled(state):
            nxt = engine.apply(state, event)
            nid = index.get(nxt)
            if nid is None:
                nid = len(states)
                if nid >= state_bound:
                    raise ExplorationBound(state_bound, traces[sid] + (event.label,))
                index[nxt] = nid
                states.append(nxt)
                traces.append(traces[sid] + (event.label,))
                edges.append([])
                queue.append(nid)
            edges[sid].append((event.label, nid))
        edges[sid].sort()
    return StateGraph(states=states, edges=edges, traces=traces)


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str = ""
    counterexample: Optional[Trace] = None

    def __bool__(self) -> bool:
        return self.passed


def check_deadlock_free(graph: StateGraph) -> Verdict:
    """Every state that is not done must offer at least one transition."""
    for i, state in enumerate(graph.states):
        if not state.done and not graph.edges[i]:
            return Verdict(
                "deadlock-free",
                False,
                f"state {i} has no outgoing transitions",
                graph.traces[i],
            )
    return Verdict("deadlock-free", True, f"{len(graph.states)} states")


def check_reaches_done(graph: StateGraph, strong: bool = False) -> Verdict:
    name = "reaches-done (strong)" if strong else "reaches-done"
    done = set(graph.done_ids())
    if not done:
        return Verdict(name, False, "no done state reachable", graph.traces[graph.initial])
    if not strong:
        return Verdict(name, True, f"{len(done)} done states")
    # Strong: every terminal is done and done stays reachable everywhere.
    for t in graph.terminal_ids():
        if t not in done:
            return Verdict(name, False, f"terminal state {t} is not done", graph.traces[t])
    reach_done = _states_reaching(graph, done)
    for i in range(len(graph.states)):
        if i not in reach_done:
            return Verdict(
                name, False, f"done unreachable from state {i}", graph.traces[i]
            )
    return Verdict(name, True, f"all {len(graph.states)} states lead to done")


def _states_reaching(graph: StateGraph, targets: set[int]) -> set[int]:
    reverse: list[list[int]] = [[] for _ in graph.states]
    for src, out in enumerate(graph.edges):
        for _, dst in out:
            reverse[dst].append(src)
    seen = set(targets)
    queue = deque(targets)
    while queue:
        cur = queue.popleft()
        for prev in reverse[cur]:
            if prev not in seen:
                seen.add(prev)
                queue.append(prev)
    return seen


def check_has_trace(model: ProtocolModel, graph: StateGraph, trace: Trace) -> Verdict:
    """The trace must be performable from the initial state, i.e. a prefix
    of some path with no event refused along the way."""
    engine = model.engine()
    for label in trace:
        if not model.alphabet_ok(label):
            raise ValueError(f"unknown event name in trace: {label!r}")
    frontier = {graph.states[graph.initial]}
    for pos, label in enumerate(trace):
        nxt = set()
        for state in frontier:
            for event in engine.enabled(state):
                if event.label == label:
                    nxt.add(engine.apply(state, event))
        if not nxt:
            return Verdict(
                "has-trace",
                False,
                f"event {label!r} refused at position {pos}",
                tuple(trace[:pos]),
            )
        frontier = nxt
    return Verdict("has-trace", True, f"{len(trace)} events")


def check_confluence(graph: StateGraph) -> Verdict:
    """All terminal states must be done, agree on the final leader, and
    carry pairwise-consistent frame offsets."""
    terminals = graph.terminal_ids()
    if not terminals:
        return Verdict("confluence", False, "no terminal states")
    reference: Optional[tuple] = None
    ref_id = terminals[0]
    for t in terminals:
        state = graph.states[t]
        if not state.done:
            return Verdict("confluence", False, f"terminal {t} not done", graph.traces[t])
        leaders = {l for _, l in state.leaders}
        offsets = dict(state.offsets)
        base = offsets[min(offsets)]
        rel = tuple(
            (a, (off[0] - base[0], off[1] - base[1])) for a, off in sorted(offsets.items())
        )
        signature = (tuple(sorted(leaders)), rel)
        if reference is None:
            reference = signature
            ref_id = t
        elif signature != reference:
            return Verdict(
                "confluence",
                False,
                f"terminals {ref_id} and {t} diverge "
                f"(leaders {reference[0]} vs {signature[0]})",
                graph.traces[t],
            )
    return Verdict("confluence", True, f"{len(terminals)} terminal states agree")


# ----------------------------------------------------------------- scenarios


@dataclass
class Scenario:
    name: str
    model: ProtocolModel
    trace: Trace


def builtin_scenarios() -> list[Scenario]:
    """Six reconstructed protocol runs used as has-trace regression checks."""
    two = chain_model(2, 1)
    seq = chain_model(3, 2)
    grown = chain_model(
        3,
        1,
        initial_leaders={"a1": "a1", "a2": "a1", "a3": "a3"},
        pairs=(("a2", "a3"),),
    )
    cancel = chain_model(2, 1, initial_leaders={"a1": "a1", "a2": "a1"})
    interference = chain_model(3, 2)
    return [
        Scenario(
            "nominal-two-agent",
            two,
            (
                "sight a1 a2",
                "report a1",
                "report a2",
                "propose a2 a1",
                "absorb a1",
                "notify a2",
                "done",
            ),
        ),
        Scenario(
            "reports-reordered",
            two,
            (
                "sight a1 a2",
                "report a2",
                "report a1",
                "propose a2 a1",
                "absorb a1",
                "notify a2",
                "done",
            ),
        ),
        Scenario(
            "sequential-growth",
            seq,
            (
                "sight a1 a2",
                "report a1",
                "report a2",
                "propose a2 a1",
                "absorb a1",
                "notify a2",
                "sight a2 a3",
                "report a2",
                "report a3",
                "propose a3 a1",
                "absorb a1",
                "notify a3",
                "done",
            ),
        ),
        Scenario(
            "interference-overlap",
            interference,
            _interference_trace(),
        ),
        Scenario(
            "larger-group-absorbs",
            grown,
            (
                "sight a2 a3",
                "report a2",
                "report a3",
                "propose a3 a1",
                "absorb a1",
                "notify a3",
                "done",
            ),
        ),
        Scenario(
            "same-group-cancel",
            cancel,
            (
                "sight a1 a2",
                "report a1",
                "report a2",
                "cancel a1 a2",
                "done",
            ),
        ),
    ]


def _interference_trace() -> Trace:
    """Canonical overlapped run of the 3-agent two-sighting model, derived
    from the deterministic execution policy plus the closing done."""
    model = chain_model(3, 2)
    engine = model.engine()
    _, transcript = engine.run_to_quiescence(model.initial_state())
    return tuple(transcript) + ("done",)


def run_standard_checks(model: ProtocolModel) -> list[Verdict]:
    graph = explore(model)
    return [
        check_deadlock_free(graph),
        check_reaches_done(graph),
        check_reaches_done(graph, strong=True),
        check_confluence(graph),
    ]
