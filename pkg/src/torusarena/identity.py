"""Teammate identification: broadcast on sighting, thing-list replies,
symmetric-offset matching with a full-context consistency check, and
conservative ambiguity handling with retry.

Matching is requester-side only. A responder's reply always contains its
complete thing list; the requester filters it down to the overlap of the two
vision diamonds before demanding agreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .torus import VISION_RADIUS, Offset, add, neg
from .world import Percept, Thing


@dataclass(frozen=True)
class IdRequest:
    requester: str
    step: int


@dataclass(frozen=True)
class IdReply:
    responder: str
    step: int
    things: tuple[Thing, ...]


@dataclass
class IdentityBook:
    """Per-agent identification state for the current round, plus the
    sightings left ambiguous (retried simply because every round re-checks)."""

    known: dict[Offset, str] = field(default_factory=dict)
    pending: set[Offset] = field(default_factory=set)

    def start_round(self) -> None:
        self.known.clear()
        self.pending.clear()


@dataclass(frozen=True)
class Identification:
    observer: str
    observed: str
    offset: Offset
    step: int


def build_reply(responder: str, step: int, percept: Percept) -> IdReply:
    return IdReply(responder=responder, step=step, things=percept.things)


def unknown_team_entities(percept: Percept, team: str) -> list[Offset]:
    return sorted(t.offset for t in percept.things if t.kind == "entity" and t.detail == team)


def matches_at(my_things: tuple[Thing, ...], reply: IdReply, offset: Offset, team: str) -> bool:
    """True iff the responder could be the entity I see at `offset`.

    Requires the reply to contain me (entity of my team at the mirrored
    offset) and every reply thing that maps into my vision diamond to have an
    exact counterpart in my own things.
    """
    mirrored = neg(offset)
    mine = set(my_things)
    found_me = False
    for t in reply.things:
        if t.offset == mirrored and t.kind == "entity":
            if t.detail != team:
                return False
            found_me = True
            continue
        mapped = add(t.offset, offset)
        if abs(mapped[0]) + abs(mapped[1]) <= VISION_RADIUS:
            if Thing(mapped, t.kind, t.detail) not in mine:
                return False
    return found_me


def match_candidate(my_things: tuple[Thing, ...], reply: IdReply, team: str) -> Optional[Offset]:
    """Offset of the responder relative to me, if it is unambiguous.

    None when no observed teammate matches the reply, and also when more than
    one does (the conservative choice: an uncertain match is no match)."""
    offsets = sorted(t.offset for t in my_things if t.kind == "entity" and t.detail == team)
    hits = [off for off in offsets if matches_at(my_things, reply, off, team)]
    return hits[0] if len(hits) == 1 else None


@dataclass(frozen=True)
class Resolution:
    status: str  # identified | ambiguous | no_match
    responder: Optional[str] = None
    offset: Optional[Offset] = None


def resolve(candidates: list[tuple[str, Offset]]) -> Resolution:
    """Combine all candidate responders for one observed entity."""
    if not candidates:
        return Resolution("no_match")
    if len(candidates) == 1:
        responder, offset = candidates[0]
        return Resolution("identified", responder, offset)
    return Resolution("ambiguous")


@dataclass
class RoundStats:
    broadcasts: int = 0
    replies: int = 0
    identifications: int = 0
    ambiguous: int = 0


def identification_round(
    team: str,
    percepts: dict[str, Percept],
    books: dict[str, IdentityBook],
    step: int,
) -> tuple[list[Identification], RoundStats]:
    """Simulate one synchronous broadcast/reply exchange for a whole team.

    `percepts` maps every live team member to its percept for this step;
    the per-step mailbox is collapsed into direct dict access, which is safe
    because replies are pure functions of the responder's percept."""
    stats = RoundStats()
    events: list[Identification] = []
    replies = {
        name: build_reply(name, step, percepts[name]) for name in sorted(percepts)
    }
    for name in sorted(percepts):
        book = books[name]
        book.start_round()
        my_things = percepts[name].things
        sightings = unknown_team_entities(percepts[name], team)
        if not sightings:
            continue
        request = IdRequest(requester=name, step=step)  # one broadcast per agent per step
        stats.broadcasts += 1
        stats.replies += len(percepts) - 1
        per_offset: dict[Offset, list[tuple[str, Offset]]] = {off: [] for off in sightings}
        for responder in sorted(percepts):
            if responder == name:
                continue
            reply = replies[responder]
            if reply.step != request.step:
                continue  # stale replies are discarded
            # A responder matching at several offsets stays a candidate at
            # each of them; discarding it could leave a wrong unique
            # candidate standing at the true offset.
            for off in sightings:
                if matches_at(my_things, reply, off, team):
                    per_offset[off].append((responder, off))
        for off in sightings:
            res = resolve(per_offset[off])
            if res.status == "identified":
                book.known[off] = res.responder
                events.append(Identification(name, res.responder, off, step))
                stats.identifications += 1
            elif res.status == "ambiguous":
                book.pending.add(off)
                stats.ambiguous += 1
    return events, stats


def mutual_pairs(events: list[Identification]) -> list[tuple[Identification, Identification]]:
    """Pairs (a identified b, b identified a) with mirrored offsets."""
    index = {(e.observer, e.observed, e.offset): e for e in events}
    out = []
    for e in events:
        if e.observer < e.observed:
            back = index.get((e.observed, e.observer, neg(e.offset)))
            if back is not None:
                out.append((e, back))
    return out
