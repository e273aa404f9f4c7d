"""Ground-truth synchronous simulator: terrain, facilities, agents, blocks,
actions, clear mechanics, tasks and scoring, all driven by one seeded RNG.

Percepts are immutable snapshots of the 61-cell diamond around an agent and
never leak agent identities, only team names. Actions are applied in
ascending agent-name order, which doubles as the conflict-resolution rule:
the lower name wins a contested cell.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .torus import (
    CARDINALS,
    DIAMOND,
    DIR_OFFSETS,
    Coord,
    Dims,
    Offset,
    add,
    delta,
    manhattan,
    rotate_ccw,
    rotate_cw,
    torus_distance,
    wrap,
)

EMPTY, OBSTACLE, GOAL = "empty", "obstacle", "goal"


class Thing(NamedTuple):
    offset: Offset
    kind: str  # entity | block | dispenser
    detail: str  # team name for entities, block type otherwise


@dataclass(frozen=True)
class Task:
    name: str
    reward: int
    deadline: int
    requirements: frozenset[tuple[Offset, str]]

    def block_count(self) -> int:
        return len(self.requirements)


@dataclass(frozen=True)
class Percept:
    self_energy: int
    self_attached: tuple[tuple[Offset, str], ...]
    things: tuple[Thing, ...]
    terrain: tuple[tuple[Offset, str], ...]
    taskboards: tuple[Offset, ...]
    tasks: tuple[Task, ...]
    last_action_result: Optional[tuple[str, str]]

    def thing_at(self, off: Offset) -> Optional[Thing]:
        for t in self.things:
            if t.offset == off:
                return t
        return None


@dataclass(frozen=True)
class Action:
    kind: str
    direction: Optional[str] = None
    rotation: Optional[str] = None
    offset: Optional[Offset] = None
    task: Optional[str] = None
    partner: Optional[str] = None

    @staticmethod
    def move(direction: str) -> "Action":
        return Action("move", direction=direction)

    @staticmethod
    def rotate(rotation: str) -> "Action":
        return Action("rotate", rotation=rotation)

    @staticmethod
    def attach(direction: str) -> "Action":
        return Action("attach", direction=direction)

    @staticmethod
    def detach(direction: str) -> "Action":
        return Action("detach", direction=direction)

    @staticmethod
    def connect(partner: str, offset: Offset) -> "Action":
        return Action("connect", partner=partner, offset=offset)

    @staticmethod
    def request(direction: str) -> "Action":
        return Action("request", direction=direction)

    @staticmethod
    def accept(task: str) -> "Action":
        return Action("accept", task=task)

    @staticmethod
    def submit(task: str) -> "Action":
        return Action("submit", task=task)

    @staticmethod
    def clear(offset: Offset) -> "Action":
        return Action("clear", offset=offset)

    @staticmethod
    def skip() -> "Action":
        return Action("skip")

    def describe(self) -> str:
        if self.kind == "move":
            return f"move {self.direction}"
        if self.kind == "rotate":
            return f"rotate {self.rotation}"
        if self.kind in ("attach", "detach", "request"):
            return f"{self.kind} {self.direction}"
        if self.kind == "connect":
            return f"connect {self.partner} {self.offset[0]} {self.offset[1]}"
        if self.kind in ("accept", "submit"):
            return f"{self.kind} {self.task}"
        if self.kind == "clear":
            return f"clear {self.offset[0]} {self.offset[1]}"
        return self.kind


SKIP = Action.skip()


@dataclass
class FixedLayout:
    """Explicit layout for scripted scenarios; any field left None falls back
    to seeded generation."""

    obstacles: Optional[list[Coord]] = None
    goals: Optional[list[Coord]] = None
    dispensers: Optional[list[tuple[Coord, str]]] = None
    taskboards: Optional[list[Coord]] = None
    spawns: Optional[dict[str, Coord]] = None  # agent name -> cell
    # (appear_step, name, reward, duration, requirements) tuples
    tasks: Optional[list[tuple[int, str, int, int, list[tuple[Offset, str]]]]] = None


@dataclass
class WorldConfig:
    dims: tuple[int, int] = (40, 40)
    teams: dict[str, int] = field(default_factory=lambda: {"alpha": 15, "beta": 15})
    block_types: tuple[str, ...] = ("b1", "b2")
    dispensers_per_type: int = 2
    taskboard_count: int = 2
    goal_cluster_count: int = 2
    goal_cluster_size: int = 6
    obstacle_density: float = 0.05
    task_interval: int = 20  # 0 disables random task generation
    max_active_tasks: int = 4
    task_size_range: tuple[int, int] = (1, 3)
    task_deadline_range: tuple[int, int] = (80, 200)
    clear_event_rate: float = 0.01
    initial_energy: int = 100
    max_energy: int = 100
    recharge: int = 1
    clear_cost: int = 30
    clear_range: int = 5
    disable_duration: int = 4
    accept_radius: int = 2
    clustered_spawn: bool = True
    fixed: Optional[FixedLayout] = None

    def agent_names(self) -> dict[str, list[str]]:
        return {
            team: [f"{team}{i + 1:02d}" for i in range(n)]
            for team, n in sorted(self.teams.items())
        }


class WorldConfigError(ValueError):
    pass


@dataclass
class Block:
    type: str
    holder: Optional[str] = None


@dataclass
class AgentState:
    name: str
    team: str
    pos: Coord
    energy: int
    held: set[Coord] = field(default_factory=set)
    disabled_until: int = 0
    clear_charge: Optional[tuple[Coord, int]] = None
    accepted: set[str] = field(default_factory=set)
    last_result: Optional[tuple[str, str]] = None

    def attached_offsets(self, world: "World") -> list[tuple[Offset, str]]:
        out = [(delta(self.pos, c, world.dims), world.blocks[c].type) for c in self.held]
        out.sort()
        return out


class World:
    """Mutable ground truth. One coordinator mutates it via step(); percepts
    handed out are frozen snapshots."""

    def __init__(self, config: WorldConfig, seed: int):
        self.config = config
        self.seed = seed
        self.dims = Dims(*config.dims).validate()
        self.rng = random.Random(seed)
        self.step_num = 0
        self.terrain: dict[Coord, str] = {}
        self.dispensers: dict[Coord, str] = {}
        self.taskboards: set[Coord] = set()
        self.blocks: dict[Coord, Block] = {}
        self.links: set[frozenset[Coord]] = set()
        self.agents: dict[str, AgentState] = {}
        self.tasks: dict[str, Task] = {}
        self.scores: dict[str, int] = {t: 0 for t in sorted(config.teams)}
        self.spawns: dict[str, Coord] = {}
        self._task_counter = 0
        self._events: list[dict] = []
        self._pending_clear_event: Optional[Coord] = None
        self._scripted_tasks = list(config.fixed.tasks) if config.fixed and config.fixed.tasks else []
        self._generate()
        self._inject_scripted_tasks()

    # ------------------------------------------------------------------ setup

    def _generate(self) -> None:
        cfg, dims, rng = self.config, self.dims, self.rng
        fixed = cfg.fixed or FixedLayout()
        all_cells = [(x, y) for y in range(dims.h) for x in range(dims.w)]

        if fixed.goals is not None:
            goal_cells = {wrap(*c, dims) for c in fixed.goals}
        else:
            goal_cells = set()
            for _ in range(cfg.goal_cluster_count):
                seed_cell = rng.choice(all_cells)
                cluster = {seed_cell}
                frontier = [seed_cell]
                attempts = cfg.goal_cluster_size * 25
                while len(cluster) < cfg.goal_cluster_size and attempts > 0:
                    attempts -= 1
                    base = frontier[rng.randrange(len(frontier))]
                    nxt = wrap(*add(base, rng.choice(CARDINALS)), dims)
                    if nxt not in cluster:
                        cluster.add(nxt)
                        frontier.append(nxt)
                goal_cells |= cluster

        if fixed.obstacles is not None:
            obstacle_cells = {wrap(*c, dims) for c in fixed.obstacles}
        else:
            obstacle_cells = {
                c for c in all_cells if c not in goal_cells and rng.random() < cfg.obstacle_density
            }

        for c in all_cells:
            self.terrain[c] = GOAL if c in goal_cells else (OBSTACLE if c in obstacle_cells else EMPTY)

        free = [c for c in all_cells if self.terrain[c] != OBSTACLE]
        if fixed.taskboards is not None:
            self.taskboards = {wrap(*c, dims) for c in fixed.taskboards}
        else:
            for _ in range(cfg.taskboard_count):
                self.taskboards.add(rng.choice(free))
        if fixed.dispensers is not None:
            for c, btype in fixed.dispensers:
                self.dispensers[wrap(*c, dims)] = btype
        else:
            taken = set(self.taskboards)
            candidates = [c for c in free if c not in taken]
            for btype in cfg.block_types:
                for _ in range(cfg.dispensers_per_type):
                    if not candidates:
                        raise WorldConfigError("not enough open cells for dispensers")
                    c = candidates.pop(rng.randrange(len(candidates)))
                    self.dispensers[c] = btype

        self._place_agents(fixed)

    def _place_agents(self, fixed: FixedLayout) -> None:
        cfg, dims, rng = self.config, self.dims, self.rng
        names = cfg.agent_names()
        total = sum(len(v) for v in names.values())
        open_cells = [
            (x, y)
            for y in range(dims.h)
            for x in range(dims.w)
            if self.terrain[(x, y)] != OBSTACLE
        ]
        if total > len(open_cells):
            raise WorldConfigError(
                f"cannot place {total} agents on {len(open_cells)} open cells"
            )

        if fixed.spawns is not None:
            for team, team_names in names.items():
                for n in team_names:
                    if n not in fixed.spawns:
                        raise WorldConfigError(f"fixed layout missing spawn for {n}")
                    c = wrap(*fixed.spawns[n], dims)
                    self._spawn_agent(n, team, c)
            return

        used: set[Coord] = set()
        anchors: list[Coord] = []
        for team, team_names in names.items():
            anchor = self._pick_anchor(open_cells, anchors, rng)
            anchors.append(anchor)
            if cfg.clustered_spawn:
                cells = self._cluster_cells(anchor, len(team_names), used)
            else:
                cells = []
                while len(cells) < len(team_names):
                    c = rng.choice(open_cells)
                    if c not in used and c not in cells:
                        cells.append(c)
            for n, c in zip(team_names, cells):
                self._spawn_agent(n, team, c)
                used.add(c)

    def _pick_anchor(self, open_cells: list[Coord], others: list[Coord], rng: random.Random) -> Coord:
        min_gap = (self.dims.w + self.dims.h) // 4
        for _ in range(200):
            c = rng.choice(open_cells)
            if all(torus_distance(c, o, self.dims) >= min_gap for o in others):
                return c
        return rng.choice(open_cells)

    def _cluster_cells(self, anchor: Coord, n: int, used: set[Coord]) -> list[Coord]:
        # Breadth-first flood over open cells so teammates start in a blob.
        out: list[Coord] = []
        seen = {anchor}
        queue = [anchor]
        while queue and len(out) < n:
            c = queue.pop(0)
            if self.terrain[c] != OBSTACLE and c not in used:
                out.append(c)
            for d in CARDINALS:
                nxt = wrap(*add(c, d), self.dims)
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        if len(out) < n:
            raise WorldConfigError("spawn cluster does not fit on the map")
        return out

    def _spawn_agent(self, name: str, team: str, cell: Coord) -> None:
        if self.terrain[cell] == OBSTACLE or self._agent_at(cell) is not None:
            raise WorldConfigError(f"spawn cell {cell} for {name} is not free")
        self.agents[name] = AgentState(name, team, cell, self.config.initial_energy)
        self.spawns[name] = cell

    # ---------------------------------------------------------------- queries

    def _agent_at(self, cell: Coord) -> Optional[AgentState]:
        for a in self.agents.values():
            if a.pos == cell:
                return a
        return None

    def _cell_free(self, cell: Coord, ignore: set[Coord]) -> bool:
        if self.terrain[cell] == OBSTACLE:
            return False
        if cell in self.blocks and cell not in ignore:
            return False
        a = self._agent_at(cell)
        return a is None or a.pos in ignore

    def active_tasks(self) -> list[Task]:
        return [t for _, t in sorted(self.tasks.items()) if t.deadline > self.step_num]

    def layout_digest(self) -> str:
        payload = {
            "dims": list(self.dims),
            "terrain": sorted(f"{x},{y}:{v}" for (x, y), v in self.terrain.items() if v != EMPTY),
            "dispensers": sorted(f"{x},{y}:{t}" for (x, y), t in self.dispensers.items()),
            "taskboards": sorted(f"{x},{y}" for x, y in self.taskboards),
            "spawns": {n: list(c) for n, c in sorted(self.spawns.items())},
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # ---------------------------------------------------------------- percept

    def percept(self, agent_id: str) -> Percept:
        if agent_id not in self.agents:
            raise KeyError(f"unknown agent {agent_id!r}")
        me = self.agents[agent_id]
        things: list[Thing] = []
        terrain: list[tuple[Offset, str]] = []
        boards: list[Offset] = []
        for off in DIAMOND:
            cell = wrap(*add(me.pos, off), self.dims)
            if off != (0, 0):
                other = self._agent_at(cell)
                if other is not None:
                    things.append(Thing(off, "entity", other.team))
            if cell in self.blocks:
                things.append(Thing(off, "block", self.blocks[cell].type))
            if cell in self.dispensers:
                things.append(Thing(off, "dispenser", self.dispensers[cell]))
            t = self.terrain[cell]
            if t != EMPTY:
                terrain.append((off, t))
            if cell in self.taskboards:
                boards.append(off)
        return Percept(
            self_energy=me.energy,
            self_attached=tuple(me.attached_offsets(self)),
            things=tuple(sorted(things)),
            terrain=tuple(sorted(terrain)),
            taskboards=tuple(sorted(boards)),
            tasks=tuple(self.active_tasks()),
            last_action_result=me.last_result,
        )

    def percepts(self) -> dict[str, Percept]:
        return {n: self.percept(n) for n in sorted(self.agents)}

    # ------------------------------------------------------------------- step

    def step(self, actions: dict[str, Action]) -> tuple[dict[str, Percept], list[dict]]:
        events: list[dict] = []
        self._events = events
        for name in sorted(self.agents):
            act = actions.get(name, SKIP)
            result = self._apply(self.agents[name], act)
            self.agents[name].last_result = (act.kind, result)
            events.append(
                {
                    "step": self.step_num,
                    "type": "action",
                    "agent": name,
                    "action": act.describe(),
                    "result": result,
                }
            )
        self._dynamics(events)
        self.step_num += 1
        self._inject_scripted_tasks()
        return self.percepts(), events

    def _dynamics(self, events: list[dict]) -> None:
        cfg = self.config
        for name, task in sorted(self.tasks.items()):
            if task.deadline <= self.step_num + 1:
                events.append({"step": self.step_num, "type": "task_expired", "task": name})
                del self.tasks[name]
        if cfg.task_interval > 0 and self.step_num % cfg.task_interval == 0:
            if len(self.active_tasks()) < cfg.max_active_tasks:
                task = self._random_task()
                self.tasks[task.name] = task
                events.append(
                    {
                        "step": self.step_num,
                        "type": "task_new",
                        "task": task.name,
                        "reward": task.reward,
                        "deadline": task.deadline,
                    }
                )
        if self._pending_clear_event is not None:
            self._apply_area_clear(self._pending_clear_event, radius=2, events=events)
            self._pending_clear_event = None
        if cfg.clear_event_rate > 0 and self.rng.random() < cfg.clear_event_rate:
            center = (self.rng.randrange(self.dims.w), self.rng.randrange(self.dims.h))
            self._pending_clear_event = center
            events.append(
                {"step": self.step_num, "type": "clear_event_warning", "cell": list(center)}
            )
        for a in self.agents.values():
            a.energy = min(cfg.max_energy, a.energy + cfg.recharge)

    def _random_task(self) -> Task:
        cfg, rng = self.config, self.rng
        self._task_counter += 1
        lo, hi = cfg.task_size_range
        n = rng.randint(lo, hi)
        reqs: list[tuple[Offset, str]] = []
        taken = {(0, 0)}
        cur = (0, 1)
        for _ in range(n):
            reqs.append((cur, rng.choice(cfg.block_types)))
            taken.add(cur)
            neighbors = [
                add(cur, d)
                for d in CARDINALS
                if add(cur, d) not in taken and add(cur, d)[1] >= 1
            ]
            if not neighbors:
                break
            cur = rng.choice(neighbors)
        deadline = self.step_num + rng.randint(*cfg.task_deadline_range)
        return Task(
            name=f"task{self._task_counter}",
            reward=10 * len(reqs),
            deadline=deadline,
            requirements=frozenset(reqs),
        )

    def _inject_scripted_tasks(self) -> None:
        for spec in list(self._scripted_tasks):
            step, name, reward, duration, reqs = spec
            if step == self.step_num:
                self.tasks[name] = Task(
                    name=name,
                    reward=reward,
                    deadline=self.step_num + duration,
                    requirements=frozenset((tuple(o), t) for o, t in reqs),
                )
                self._scripted_tasks.remove(spec)

    # --------------------------------------------------------------- actions

    def _apply(self, agent: AgentState, act: Action) -> str:
        if agent.disabled_until > self.step_num and act.kind != "skip":
            agent.clear_charge = None
            return "failed:disabled"
        handler = getattr(self, f"_do_{act.kind}", None)
        if handler is None:
            agent.clear_charge = None
            return "failed:invalid"
        if act.kind != "clear":
            agent.clear_charge = None
        return handler(agent, act)

    def _do_skip(self, agent: AgentState, act: Action) -> str:
        return "success"

    def _move_structure(self, agent: AgentState, shift_fn) -> bool:
        """Relocate agent plus held blocks; shift_fn maps old cell -> new cell.
        Returns False (no mutation) on any collision."""
        old_cells = {agent.pos} | agent.held
        moves = {c: shift_fn(c) for c in old_cells}
        for tgt in moves.values():
            if not self._cell_free(tgt, ignore=old_cells):
                return False
        new_blocks = {}
        for c in agent.held:
            new_blocks[moves[c]] = self.blocks.pop(c)
        self.blocks.update(new_blocks)
        new_links = set()
        for link in self.links:
            new_links.add(frozenset(moves.get(c, c) for c in link))
        self.links = new_links
        agent.held = {moves[c] for c in agent.held}
        agent.pos = moves[agent.pos]
        return True

    def _do_move(self, agent: AgentState, act: Action) -> str:
        if act.direction not in DIR_OFFSETS:
            return "failed:invalid"
        off = DIR_OFFSETS[act.direction]
        ok = self._move_structure(agent, lambda c: wrap(*add(c, off), self.dims))
        return "success" if ok else "failed:blocked"

    def _do_rotate(self, agent: AgentState, act: Action) -> str:
        if act.rotation not in ("cw", "ccw"):
            return "failed:invalid"
        rot = rotate_cw if act.rotation == "cw" else rotate_ccw
        pivot = agent.pos

        def shift(c: Coord) -> Coord:
            if c == pivot:
                return c
            return wrap(*add(pivot, rot(delta(pivot, c, self.dims))), self.dims)

        ok = self._move_structure(agent, shift)
        return "success" if ok else "failed:blocked"

    def _ground_component(self, start: Coord) -> set[Coord]:
        comp = {start}
        frontier = [start]
        while frontier:
            c = frontier.pop()
            for link in self.links:
                if c in link:
                    (other,) = link - {c}
                    if other not in comp:
                        comp.add(other)
                        frontier.append(other)
        return comp

    def _do_attach(self, agent: AgentState, act: Action) -> str:
        if act.direction not in DIR_OFFSETS:
            return "failed:invalid"
        cell = wrap(*add(agent.pos, DIR_OFFSETS[act.direction]), self.dims)
        if cell not in self.blocks:
            return "failed:no_block"
        holder = self.blocks[cell].holder
        if holder == agent.name:
            return "failed:already_attached"
        if holder is not None:
            other = self.agents[holder]
            return "failed:enemy_attached" if other.team != agent.team else "failed:held"
        comp = self._ground_component(cell)
        for c in comp:
            self.blocks[c].holder = agent.name
        agent.held |= comp
        return "success"

    def _release(self, agent: AgentState, cells: Iterable[Coord]) -> None:
        for c in cells:
            self.blocks[c].holder = None
            agent.held.discard(c)

    def _reachable_held(self, agent: AgentState, severed: Optional[Coord] = None) -> set[Coord]:
        roots = {
            c
            for c in agent.held
            if delta(agent.pos, c, self.dims) in CARDINALS and c != severed
        }
        reach = set(roots)
        frontier = list(roots)
        while frontier:
            c = frontier.pop()
            for link in self.links:
                if c in link:
                    (other,) = link - {c}
                    if other in agent.held and other not in reach:
                        reach.add(other)
                        frontier.append(other)
        return reach

    def _do_detach(self, agent: AgentState, act: Action) -> str:
        if act.direction not in DIR_OFFSETS:
            return "failed:invalid"
        cell = wrap(*add(agent.pos, DIR_OFFSETS[act.direction]), self.dims)
        if cell not in agent.held:
            return "failed:no_block"
        keep = self._reachable_held(agent, severed=cell)
        self._release(agent, agent.held - keep)
        return "success"

    def _do_connect(self, agent: AgentState, act: Action) -> str:
        if act.offset is None or act.partner is None:
            return "failed:invalid"
        if len(agent.held) != 1:
            return "failed:multi_block"
        cell = wrap(*add(agent.pos, act.offset), self.dims)
        if cell not in agent.held:
            return "failed:no_block"
        if act.partner not in self.agents:
            return "failed:unknown_agent"
        partner = self.agents[act.partner]
        if partner.team != agent.team:
            return "failed:not_teammate"
        adjacent_to_partner = delta(partner.pos, cell, self.dims) in CARDINALS
        adjacent_blocks = {
            b for b in partner.held if delta(b, cell, self.dims) in CARDINALS
        }
        if not adjacent_to_partner and not adjacent_blocks:
            return "failed:not_adjacent"
        agent.held.discard(cell)
        self.blocks[cell].holder = partner.name
        partner.held.add(cell)
        for b in adjacent_blocks:
            self.links.add(frozenset((cell, b)))
        return "success"

    def _do_request(self, agent: AgentState, act: Action) -> str:
        if act.direction not in DIR_OFFSETS:
            return "failed:invalid"
        cell = wrap(*add(agent.pos, DIR_OFFSETS[act.direction]), self.dims)
        if cell not in self.dispensers:
            return "failed:no_dispenser"
        if cell in self.blocks or self._agent_at(cell) is not None:
            return "failed:blocked"
        self.blocks[cell] = Block(self.dispensers[cell])
        return "success"

    def _task_active(self, name: Optional[str]) -> Optional[Task]:
        if name is None or name not in self.tasks:
            return None
        task = self.tasks[name]
        return task if task.deadline > self.step_num else None

    def _do_accept(self, agent: AgentState, act: Action) -> str:
        task = self._task_active(act.task)
        if task is None:
            return "failed:unknown_task"
        near = any(
            torus_distance(agent.pos, b, self.dims) <= self.config.accept_radius
            for b in self.taskboards
        )
        if not near:
            return "failed:too_far"
        agent.accepted.add(task.name)
        return "success"

    def _do_submit(self, agent: AgentState, act: Action) -> str:
        task = self._task_active(act.task)
        if task is None:
            return "failed:unknown_task"
        if task.name not in agent.accepted:
            return "failed:not_accepted"
        if self.terrain[agent.pos] != GOAL:
            return "failed:not_on_goal"
        held = frozenset(
            (delta(agent.pos, c, self.dims), self.blocks[c].type) for c in agent.held
        )
        if held != task.requirements:
            return "failed:requirements_mismatch"
        for c in list(agent.held):
            self._remove_block(c)
        self.scores[agent.team] += task.reward
        del self.tasks[task.name]
        self._events.append(
            {
                "step": self.step_num,
                "type": "task_completed",
                "agent": agent.name,
                "task": task.name,
                "team": agent.team,
                "reward": task.reward,
                "blocks": task.block_count(),
            }
        )
        return "success"

    def _do_clear(self, agent: AgentState, act: Action) -> str:
        if act.offset is None:
            agent.clear_charge = None
            return "failed:invalid"
        if manhattan(act.offset) > self.config.clear_range:
            agent.clear_charge = None
            return "failed:out_of_range"
        if agent.energy < self.config.clear_cost:
            agent.clear_charge = None
            return "failed:no_energy"
        target = wrap(*add(agent.pos, act.offset), self.dims)
        if agent.clear_charge and agent.clear_charge[0] == target:
            count = agent.clear_charge[1] + 1
        else:
            count = 1
        if count < 3:
            agent.clear_charge = (target, count)
            return "success"
        agent.clear_charge = None
        agent.energy -= self.config.clear_cost
        removed = self._clear_cell(target)
        self._events.append(
            {
                "step": self.step_num,
                "type": "clear_completed",
                "agent": agent.name,
                "cell": list(target),
                "removed": removed,
            }
        )
        return "success"

    # ----------------------------------------------------------- clear plumbing

    def _remove_block(self, cell: Coord) -> None:
        block = self.blocks.pop(cell)
        if block.holder is not None:
            holder = self.agents[block.holder]
            holder.held.discard(cell)
        self.links = {l for l in self.links if cell not in l}
        if block.holder is not None:
            holder = self.agents[block.holder]
            keep = self._reachable_held(holder)
            self._release(holder, holder.held - keep)

    def _clear_cell(self, cell: Coord) -> list[str]:
        removed = []
        if self.terrain[cell] == OBSTACLE:
            self.terrain[cell] = EMPTY
            removed.append("obstacle")
        if cell in self.blocks:
            self._remove_block(cell)
            removed.append("block")
        victim = self._agent_at(cell)
        if victim is not None:
            victim.disabled_until = self.step_num + 1 + self.config.disable_duration
            self._release(victim, set(victim.held))
            removed.append("agent_disabled")
        return removed

    def _apply_area_clear(self, center: Coord, radius: int, events: list[dict]) -> None:
        removed = []
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if abs(dx) + abs(dy) <= radius:
                    removed.extend(self._clear_cell(wrap(*add(center, (dx, dy)), self.dims)))
        events.append(
            {
                "step": self.step_num,
                "type": "clear_event",
                "cell": list(center),
                "removed": sorted(removed),
            }
        )

    # ------------------------------------------------------------- invariants

    def check_invariants(self) -> None:
        """Exhaustive consistency check; used by tests after every tick."""
        seen: dict[Coord, str] = {}
        for a in self.agents.values():
            assert a.pos == wrap(*a.pos, self.dims)
            assert self.terrain[a.pos] != OBSTACLE, f"{a.name} standing in an obstacle"
            assert a.pos not in seen, f"two agents on {a.pos}"
            seen[a.pos] = a.name
            assert a.pos not in self.blocks, f"{a.name} shares a cell with a block"
        for c, b in self.blocks.items():
            assert self.terrain[c] != OBSTACLE
            if b.holder is not None:
                assert c in self.agents[b.holder].held
        for a in self.agents.values():
            for c in a.held:
                assert self.blocks[c].holder == a.name
            if a.held:
                assert a.held == self._reachable_held(a), f"{a.name} holds a detached block"
        for link in self.links:
            ca, cb = tuple(link)
            assert manhattan(delta(ca, cb, self.dims)) == 1, "link between non-adjacent cells"


def new_world(config: WorldConfig, seed: int) -> World:
    return World(config, seed)
