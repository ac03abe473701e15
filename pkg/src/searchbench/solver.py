"""Exact solvers that emit machine-readable search traces.

Two trace modes exist for every task kind:

* ``dfs``    -- depth-first search with explicit pruning.  The trace records
  every tried transition (kept or pruned), every backtrack, and the final
  outcome.
* ``greedy`` -- a straight-line commit trace: the solution path replayed as
  kept steps with local evaluation commentary and no backtracking.  On
  unsolvable inputs greedy performs a first-feasible descent and stops at the
  dead end without a Success event.

All traces share one event protocol so renderers and tests can stay mostly
task-agnostic:

* the first event is always ``Initialization``;
* ``Expansion`` marks a kept transition (a push onto the search stack),
  ``Prune`` a rejected one with a reason drawn from :data:`PRUNE_REASONS`;
* ``Backtrack`` pops the most recent kept transition;
* ``Evaluation`` checks a complete candidate;
* a trace ends with ``Success`` if and only if a solution was found, and
  replaying pushes/pops up to that point reconstructs the returned solution.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .tasks import (
    CoverSet,
    Matching,
    Meeting,
    MeetingPayload,
    MeetingSchedule,
    Payload,
    ProblemInstance,
    Solution,
    TaskError,
    TaskKind,
    ThreeDMPayload,
    TripLeg,
    TripPayload,
    TripPlan,
    VertexCoverPayload,
    minutes_to_clock,
    payload_kind,
)


class TooLargeError(TaskError):
    """The instance exceeds the exhaustive-enumeration guard."""


class Action(str, Enum):
    INITIALIZATION = "Initialization"
    EXPANSION = "Expansion"
    EVALUATION = "Evaluation"
    PRUNE = "Prune"
    BACKTRACK = "Backtrack"
    SUCCESS = "Success"


PRUNE_REASONS = ("window", "flight", "visited", "budget", "coverage")


class SearchMode(str, Enum):
    GREEDY = "greedy"
    DFS = "dfs"


@dataclass(frozen=True)
class TraceEvent:
    """One step of a search trace.

    ``move`` is the machine token of the transition (a city, ``V3``, a triple,
    a friend name); ``detail`` is the human transition text and
    ``state_summary`` the "preview & test" commentary rendered into prompts.
    """

    step_label: str
    action: Action
    reason: str = ""
    move: str = ""
    detail: str = ""
    state_summary: str = ""
    depth: int = 0

    def __post_init__(self) -> None:
        if self.action is Action.PRUNE and self.reason not in PRUNE_REASONS:
            raise ValueError(f"invalid prune reason: {self.reason!r}")
        if self.action is not Action.PRUNE and self.reason:
            raise ValueError("reason is only meaningful on Prune events")


@dataclass(frozen=True)
class SearchTrace:
    kind: TaskKind
    mode: SearchMode
    events: tuple[TraceEvent, ...]
    solution: Solution | None
    explored_count: int

    @property
    def succeeded(self) -> bool:
        return self.solution is not None


class _Tracer:
    def __init__(self) -> None:
        self.events: list[TraceEvent] = []
        self.explored = 0

    def emit(
        self,
        label: str,
        action: Action,
        reason: str = "",
        move: str = "",
        detail: str = "",
        state: str = "",
        depth: int = 0,
    ) -> None:
        if action is Action.EXPANSION:
            self.explored += 1
        self.events.append(
            TraceEvent(
                step_label=label,
                action=action,
                reason=reason,
                move=move,
                detail=detail,
                state_summary=state,
                depth=depth,
            )
        )

    def finish(self, kind: TaskKind, mode: SearchMode, solution: Solution | None) -> SearchTrace:
        return SearchTrace(
            kind=kind,
            mode=mode,
            events=tuple(self.events),
            solution=solution,
            explored_count=self.explored,
        )


def _letters(index: int, alphabet: str) -> str:
    """1-based index to letters: 1->A, 26->Z, 27->AA ..."""
    out = ""
    while index > 0:
        index, rem = divmod(index - 1, 26)
        out = alphabet[rem] + out
    return out


def _child_label(parent: str, rel_depth: int, index: int) -> str:
    """Step labels alternate letter/number by depth below the first branching.

    rel_depth 0 yields uppercase letters (A, B, ...), odd depths append a
    number, positive even depths append a lowercase letter — producing the
    C / C4 / C4c / C4c4 / C4c4a family of labels.
    """
    if rel_depth == 0:
        return _letters(index, "ABCDEFGHIJKLMNOPQRSTUVWXYZ")
    if rel_depth % 2 == 1:
        return f"{parent}{index}"
    return f"{parent}{_letters(index, 'abcdefghijklmnopqrstuvwxyz')}"


# ---------------------------------------------------------------------------
# Trip planning
# ---------------------------------------------------------------------------


def trip_legs_for_order(payload: TripPayload, order: Sequence[str]) -> tuple[TripLeg, ...]:
    """Build day-stamped legs for a visit order (closed intervals, shared
    transition days); validity is not checked."""
    legs = []
    day = 1
    for city in order:
        end = day + payload.stay_of(city) - 1
        legs.append(TripLeg(city=city, day_from=day, day_to=end))
        day = end
    return tuple(legs)


def check_trip_order(payload: TripPayload, order: Sequence[str]) -> bool:
    """Full validity check of a visit order against every trip constraint."""
    if sorted(order) != sorted(payload.cities):
        return False
    legs = trip_legs_for_order(payload, order)
    if legs[-1].day_to != payload.total_days:
        return False
    for prev, cur in zip(order, order[1:]):
        if not payload.has_flight(prev, cur):
            return False
    for leg in legs:
        w = payload.window_of(leg.city)
        if w and not (leg.day_from <= w.start and w.end <= leg.day_to):
            return False
    return True


def _trip_try(
    payload: TripPayload,
    path: Sequence[str],
    end_day: int,
    cand: str,
) -> tuple[bool, str, str, int]:
    """Feasibility tests for extending ``path`` with ``cand``.

    Returns (keep, prune_reason, preview_text, new_end_day).  Test order:
    flight, visited, calendar budget, own window, then reachability of every
    other unvisited window.
    """
    start = end_day if path else 1
    end = start + payload.stay_of(cand) - 1
    if path and not payload.has_flight(path[-1], cand):
        return False, "flight", f"no direct flight {path[-1]} → {cand}", end
    if cand in path:
        return False, "visited", "revisit city", end
    remaining = [c for c in payload.cities if c != cand and c not in path]
    final_end = end + sum(payload.stay_of(c) - 1 for c in remaining)
    if final_end != payload.total_days:
        return (
            False,
            "budget",
            f"calendar arithmetic fails: final day would be {final_end}, not {payload.total_days}",
            end,
        )
    own = payload.window_of(cand)
    if own and not (start <= own.start and own.end <= end):
        return (
            False,
            "window",
            f"{cand} Day {start}-{end} vs {own.label} Day {own.start}-{own.end}",
            end,
        )
    for other in remaining:
        w = payload.window_of(other)
        if w and end > w.start:
            return (
                False,
                "window",
                f"{cand} Day {start}-{end} → {other} cannot cover {w.label} (Day {w.start}-{w.end})",
                end,
            )
    if own:
        preview = f"{cand} Day {start}-{end} covers {own.label} (Day {own.start}-{own.end})"
    else:
        preview = f"{cand} Day {start}-{end} (no window)"
    return True, "", preview, end


def _trip_dfs(payload: TripPayload) -> SearchTrace:
    tracer = _Tracer()
    cities = payload.cities
    n = len(cities)
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail=(
            "state = (path, UD, start); try start cities in declaration order, "
            "children in name order"
        ),
        state="(path=[], UD=0, start=1)",
        depth=0,
    )
    solution: TripPlan | None = None

    def descend(path: list[str], end_day: int, parent_label: str, depth: int) -> bool:
        nonlocal solution
        if len(path) == n:
            tracer.emit(
                parent_label,
                Action.EVALUATION,
                detail="all cities placed",
                state=f"UD = {end_day} (check)",
                depth=depth - 1,
            )
            solution = TripPlan(legs=trip_legs_for_order(payload, path))
            tracer.emit(
                parent_label,
                Action.SUCCESS,
                detail=" → ".join(path),
                state=f"UD = {end_day}",
                depth=depth - 1,
            )
            return True
        index = 0
        for cand in sorted(cities):
            if cand == path[-1]:
                continue
            index += 1
            label = _child_label(parent_label, depth - 2, index)
            keep, reason, preview, new_end = _trip_try(payload, path, end_day, cand)
            transition = f"{path[-1]}→**{cand}**"
            if not keep:
                tracer.emit(
                    label, Action.PRUNE, reason=reason, move=cand,
                    detail=transition, state=preview, depth=depth,
                )
                continue
            tracer.emit(
                label, Action.EXPANSION, move=cand, detail=transition,
                state=f"{preview} → UD = {new_end}", depth=depth,
            )
            path.append(cand)
            if descend(path, new_end, label, depth + 1):
                return True
            path.pop()
            tracer.emit(
                label, Action.BACKTRACK,
                detail=f"dead end under {cand}; backtrack", depth=depth,
            )
        return False

    for start in cities:
        keep, reason, preview, end = _trip_try(payload, [], 0, start)
        if not keep:
            tracer.emit(
                "S0", Action.PRUNE, reason=reason, move=start,
                detail=f"**Start {start}**", state=preview, depth=1,
            )
            continue
        tracer.emit(
            "S0", Action.EXPANSION, move=start,
            detail=f"**Start {start}**", state=preview, depth=1,
        )
        if descend([start], end, "", 2):
            break
        tracer.emit(
            "", Action.BACKTRACK,
            detail=f"No child of the {start} root survives; backtrack to choose a new start city.",
            depth=1,
        )
    return tracer.finish(TaskKind.TRIP_PLANNING, SearchMode.DFS, solution)


def _trip_greedy(payload: TripPayload) -> SearchTrace:
    tracer = _Tracer()
    target = _trip_dfs(payload).solution
    if target is not None:
        order = [leg.city for leg in target.legs]
        first = order[0]
        d0 = payload.stay_of(first)
        tracer.emit(
            "",
            Action.INITIALIZATION,
            detail=f"{first} spans Day 1-{d0}",
            state=f"(path=[{first}], UD={d0}, start=1)",
            depth=0,
        )
        path: list[str] = []
        end_day = 0
        for i, city in enumerate(order):
            keep, _, preview, new_end = _trip_try(payload, path, end_day, city)
            assert keep, "replayed solution step must be feasible"
            transition = f"**Start {city}**" if i == 0 else f"{path[-1]}→**{city}**"
            state = preview if i == 0 else f"{preview} → UD = {new_end}"
            tracer.emit(
                f"G{i}", Action.EXPANSION, move=city,
                detail=transition, state=state, depth=i + 1,
            )
            path.append(city)
            end_day = new_end
        tracer.emit(
            f"G{len(order) - 1}",
            Action.EVALUATION,
            detail="all cities placed",
            state=f"UD = {end_day} (check)",
            depth=len(order),
        )
        tracer.emit(
            f"G{len(order) - 1}",
            Action.SUCCESS,
            detail=" → ".join(order),
            state=f"UD = {end_day}",
            depth=len(order),
        )
        return tracer.finish(TaskKind.TRIP_PLANNING, SearchMode.GREEDY, target)

    # No solution exists: honest first-feasible descent, ends without Success.
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail="no committed start; take the first feasible step at each point",
        state="(path=[], UD=0, start=1)",
        depth=0,
    )
    path = []
    end_day = 0
    step = 0
    while len(path) < len(payload.cities):
        candidates = list(payload.cities) if not path else sorted(payload.cities)
        picked = None
        for cand in candidates:
            if path and cand == path[-1]:
                continue
            keep, _, preview, new_end = _trip_try(payload, path, end_day, cand)
            if keep:
                picked = (cand, preview, new_end)
                break
        if picked is None:
            tracer.emit(
                "",
                Action.EVALUATION,
                detail="no feasible next city",
                state=f"{len(path)} of {len(payload.cities)} cities placed",
                depth=len(path),
            )
            break
        cand, preview, new_end = picked
        transition = f"**Start {cand}**" if not path else f"{path[-1]}→**{cand}**"
        tracer.emit(
            f"G{step}", Action.EXPANSION, move=cand, detail=transition,
            state=f"{preview} → UD = {new_end}", depth=step + 1,
        )
        path.append(cand)
        end_day = new_end
        step += 1
    return tracer.finish(TaskKind.TRIP_PLANNING, SearchMode.GREEDY, None)


def count_trip_plans(payload: TripPayload, limit: int = 2) -> int:
    """Count valid plans with a pruned exact search, stopping at ``limit``.

    Complete (it only prunes provably-dead branches), so a return of 1 proves
    uniqueness; used by the generator where full enumeration would be wasteful.
    """
    found = 0

    def descend(path: list[str], end_day: int) -> bool:
        nonlocal found
        if len(path) == len(payload.cities):
            found += 1
            return found >= limit
        for cand in sorted(payload.cities):
            if path and cand == path[-1]:
                continue
            keep, _, _, new_end = _trip_try(payload, path, end_day, cand)
            if not keep:
                continue
            path.append(cand)
            if descend(path, new_end):
                return True
            path.pop()
        return False

    for start in payload.cities:
        keep, _, _, end = _trip_try(payload, [], 0, start)
        if keep and descend([start], end):
            break
    return found


# ---------------------------------------------------------------------------
# Vertex cover
# ---------------------------------------------------------------------------


def _fmt_vertices(vertices: Iterable[int]) -> str:
    return "[" + ", ".join(f"V{v}" for v in sorted(vertices)) + "]"


def _matching_bound(edges: Sequence[tuple[int, int]], covered: set[int]) -> int:
    """Greedy maximal matching over uncovered edges: each matched edge needs at
    least one extra cover vertex, so the matching size lower-bounds the work left."""
    used: set[int] = set()
    count = 0
    for u, v in edges:
        if u in covered or v in covered or u in used or v in used:
            continue
        used.add(u)
        used.add(v)
        count += 1
    return count


def _cover_dfs(payload: VertexCoverPayload) -> SearchTrace:
    tracer = _Tracer()
    k = payload.target_size
    edges = sorted(payload.edges)
    m = len(edges)
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail=(
            "state = (cover, uncovered edges); branch on the first uncovered "
            "edge, endpoints in id order"
        ),
        state=f"(cover=[], uncovered={m}, budget={k})",
        depth=0,
    )
    chosen: list[int] = []
    chosen_set: set[int] = set()
    solution: CoverSet | None = None

    def first_uncovered() -> tuple[int, int] | None:
        for u, v in edges:
            if u not in chosen_set and v not in chosen_set:
                return (u, v)
        return None

    def uncovered_count() -> int:
        return sum(1 for u, v in edges if u not in chosen_set and v not in chosen_set)

    def descend(parent_label: str, rel_depth: int) -> bool:
        nonlocal solution
        edge = first_uncovered()
        if edge is None:
            tracer.emit(
                parent_label, Action.EVALUATION,
                detail="coverage check",
                state=f"all {m} edges covered, size = {len(chosen)}",
                depth=len(chosen),
            )
            solution = CoverSet(vertices=frozenset(chosen))
            tracer.emit(
                parent_label, Action.SUCCESS,
                detail=f"cover {_fmt_vertices(chosen)}",
                state=f"size = {len(chosen)} (target {k})",
                depth=len(chosen),
            )
            return True
        u, v = edge
        for index, x in enumerate((u, v), start=1):
            label = _child_label(parent_label, rel_depth, index)
            transition = f"Add **V{x}** (for edge V{u}-V{v})"
            if len(chosen) + 1 > k:
                tracer.emit(
                    label, Action.PRUNE, reason="budget", move=f"V{x}",
                    detail=transition,
                    state=f"size budget {k} exhausted",
                    depth=len(chosen) + 1,
                )
                continue
            chosen.append(x)
            chosen_set.add(x)
            need = _matching_bound(edges, chosen_set)
            if len(chosen) + need > k:
                chosen.pop()
                chosen_set.discard(x)
                tracer.emit(
                    label, Action.PRUNE, reason="budget", move=f"V{x}",
                    detail=transition,
                    state=f"still needs ≥ {need} more vertices; budget {k}",
                    depth=len(chosen) + 1,
                )
                continue
            tracer.emit(
                label, Action.EXPANSION, move=f"V{x}", detail=transition,
                state=f"cover size {len(chosen)}, uncovered edges {uncovered_count()}",
                depth=len(chosen),
            )
            if descend(label, rel_depth + 1):
                return True
            chosen.pop()
            chosen_set.discard(x)
            tracer.emit(
                label, Action.BACKTRACK,
                detail=f"dead end after adding V{x}; remove it",
                depth=len(chosen) + 1,
            )
        return False

    descend("", 0)
    return tracer.finish(TaskKind.VERTEX_COVER, SearchMode.DFS, solution)


def min_cover_size(vertex_count: int, edges: Sequence[tuple[int, int]]) -> int:
    """Exact minimum vertex cover size via iterative-deepening branch and bound."""
    edges = sorted(edges)

    def exists(budget: int, covered: set[int]) -> bool:
        edge = next(
            ((u, v) for u, v in edges if u not in covered and v not in covered),
            None,
        )
        if edge is None:
            return True
        if budget == 0 or _matching_bound(edges, covered) > budget:
            return False
        u, v = edge
        for x in (u, v):
            covered.add(x)
            if exists(budget - 1, covered):
                covered.discard(x)
                return True
            covered.discard(x)
        return False

    lower = _matching_bound(edges, set())
    for k in range(lower, vertex_count + 1):
        if exists(k, set()):
            return k
    return vertex_count


def _cover_greedy(payload: VertexCoverPayload) -> SearchTrace:
    tracer = _Tracer()
    edges = sorted(payload.edges)
    m = len(edges)
    k = payload.target_size
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail="state = (cover, uncovered edges); commit one vertex per step",
        state=f"(cover=[], uncovered={m}, budget={k})",
        depth=0,
    )
    target = _cover_dfs(payload).solution
    chosen: set[int] = set()

    def covers_now(x: int) -> int:
        return sum(
            1
            for u, v in edges
            if (u == x or v == x) and u not in chosen and v not in chosen
        )

    if target is not None:
        degree = {x: 0 for x in target.vertices}
        for u, v in edges:
            if u in degree:
                degree[u] += 1
            if v in degree:
                degree[v] += 1
        order = sorted(target.vertices, key=lambda x: (-degree[x], x))
        for i, x in enumerate(order):
            gained = covers_now(x)
            chosen.add(x)
            left = sum(1 for u, v in edges if u not in chosen and v not in chosen)
            tracer.emit(
                f"G{i}", Action.EXPANSION, move=f"V{x}",
                detail=f"Add **V{x}**",
                state=f"covers {gained} uncovered edges → uncovered {left}",
                depth=i + 1,
            )
        final_label = f"G{len(order) - 1}" if order else ""
        tracer.emit(
            final_label, Action.EVALUATION,
            detail="coverage check",
            state=f"all {m} edges covered, size = {len(order)} (target {k})",
            depth=len(order),
        )
        tracer.emit(
            final_label, Action.SUCCESS,
            detail=f"cover {_fmt_vertices(target.vertices)}",
            state=f"size = {len(order)}",
            depth=len(order),
        )
        return tracer.finish(TaskKind.VERTEX_COVER, SearchMode.GREEDY, target)

    # Budget below optimum: classic highest-degree greedy, honest failure.
    step = 0
    while len(chosen) < k:
        best_x, best_gain = -1, 0
        for x in range(payload.vertex_count):
            if x in chosen:
                continue
            gain = covers_now(x)
            if gain > best_gain:
                best_x, best_gain = x, gain
        if best_x < 0:
            break
        gained = covers_now(best_x)
        chosen.add(best_x)
        left = sum(1 for u, v in edges if u not in chosen and v not in chosen)
        tracer.emit(
            f"G{step}", Action.EXPANSION, move=f"V{best_x}",
            detail=f"Add **V{best_x}**",
            state=f"covers {gained} uncovered edges → uncovered {left}",
            depth=step + 1,
        )
        step += 1
    left = sum(1 for u, v in edges if u not in chosen and v not in chosen)
    tracer.emit(
        "", Action.EVALUATION,
        detail="budget spent",
        state=f"{left} edges remain uncovered with size budget {k}",
        depth=step,
    )
    return tracer.finish(TaskKind.VERTEX_COVER, SearchMode.GREEDY, None)


# ---------------------------------------------------------------------------
# Three-dimensional matching
# ---------------------------------------------------------------------------


def _fmt_triple(t: tuple[int, int, int]) -> str:
    return f"(x{t[0]}, y{t[1]}, z{t[2]})"


def _threedm_dfs(payload: ThreeDMPayload) -> SearchTrace:
    tracer = _Tracer()
    n = payload.n
    by_x: dict[int, list[tuple[int, int, int]]] = {}
    for t in sorted(payload.triples):
        by_x.setdefault(t[0], []).append(t)
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail=(
            "state = (matched triples, free elements); always extend the "
            "smallest unmatched x, candidates in triple order"
        ),
        state=f"(matched=0 of {n})",
        depth=0,
    )
    picked: list[tuple[int, int, int]] = []
    used_y: set[int] = set()
    used_z: set[int] = set()
    solution: Matching | None = None

    def descend(parent_label: str, rel_depth: int) -> bool:
        nonlocal solution
        if len(picked) == n:
            tracer.emit(
                parent_label, Action.EVALUATION,
                detail="matching check",
                state=f"all 3×{n} elements matched, {n} disjoint triples",
                depth=n,
            )
            solution = Matching(triples=frozenset(picked))
            tracer.emit(
                parent_label, Action.SUCCESS,
                detail=", ".join(_fmt_triple(t) for t in sorted(picked)),
                state=f"{n} triples",
                depth=n,
            )
            return True
        x = len(picked)
        candidates = by_x.get(x, [])
        if not candidates:
            tracer.emit(
                parent_label, Action.PRUNE, reason="coverage",
                detail=f"x{x} has no candidate triple",
                state="dead end",
                depth=len(picked) + 1,
            )
            return False
        for index, t in enumerate(candidates, start=1):
            label = _child_label(parent_label, rel_depth, index)
            transition = f"Pick **{_fmt_triple(t)}** for x{x}"
            if t[1] in used_y:
                tracer.emit(
                    label, Action.PRUNE, reason="visited", move=_fmt_triple(t),
                    detail=transition, state=f"y{t[1]} already matched",
                    depth=len(picked) + 1,
                )
                continue
            if t[2] in used_z:
                tracer.emit(
                    label, Action.PRUNE, reason="visited", move=_fmt_triple(t),
                    detail=transition, state=f"z{t[2]} already matched",
                    depth=len(picked) + 1,
                )
                continue
            picked.append(t)
            used_y.add(t[1])
            used_z.add(t[2])
            tracer.emit(
                label, Action.EXPANSION, move=_fmt_triple(t), detail=transition,
                state=f"y{t[1]}, z{t[2]} free → matched {len(picked)} of {n}",
                depth=len(picked),
            )
            if descend(label, rel_depth + 1):
                return True
            picked.pop()
            used_y.discard(t[1])
            used_z.discard(t[2])
            tracer.emit(
                label, Action.BACKTRACK,
                detail=f"dead end after {_fmt_triple(t)}; drop it",
                depth=len(picked) + 1,
            )
        return False

    descend("", 0)
    return tracer.finish(TaskKind.THREE_DM, SearchMode.DFS, solution)


def _threedm_greedy(payload: ThreeDMPayload) -> SearchTrace:
    tracer = _Tracer()
    n = payload.n
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail="commit one triple per step, covering x elements in order",
        state=f"(matched=0 of {n})",
        depth=0,
    )
    target = _threedm_dfs(payload).solution
    if target is not None:
        order = sorted(target.triples)
        for i, t in enumerate(order):
            tracer.emit(
                f"G{i}", Action.EXPANSION, move=_fmt_triple(t),
                detail=f"Pick **{_fmt_triple(t)}** for x{t[0]}",
                state=f"y{t[1]}, z{t[2]} free → matched {i + 1} of {n}",
                depth=i + 1,
            )
        final_label = f"G{n - 1}" if n else ""
        tracer.emit(
            final_label, Action.EVALUATION,
            detail="matching check",
            state=f"all 3×{n} elements matched, {n} disjoint triples",
            depth=n,
        )
        tracer.emit(
            final_label, Action.SUCCESS,
            detail=", ".join(_fmt_triple(t) for t in order),
            state=f"{n} triples",
            depth=n,
        )
        return tracer.finish(TaskKind.THREE_DM, SearchMode.GREEDY, target)

    picked: list[tuple[int, int, int]] = []
    used_y: set[int] = set()
    used_z: set[int] = set()
    by_x: dict[int, list[tuple[int, int, int]]] = {}
    for t in sorted(payload.triples):
        by_x.setdefault(t[0], []).append(t)
    step = 0
    while len(picked) < n:
        x = len(picked)
        pick = next(
            (t for t in by_x.get(x, []) if t[1] not in used_y and t[2] not in used_z),
            None,
        )
        if pick is None:
            tracer.emit(
                "", Action.EVALUATION,
                detail=f"no usable triple for x{x}",
                state=f"matched {len(picked)} of {n}",
                depth=len(picked),
            )
            break
        picked.append(pick)
        used_y.add(pick[1])
        used_z.add(pick[2])
        tracer.emit(
            f"G{step}", Action.EXPANSION, move=_fmt_triple(pick),
            detail=f"Pick **{_fmt_triple(pick)}** for x{x}",
            state=f"y{pick[1]}, z{pick[2]} free → matched {len(picked)} of {n}",
            depth=step + 1,
        )
        step += 1
    return tracer.finish(TaskKind.THREE_DM, SearchMode.GREEDY, None)


# ---------------------------------------------------------------------------
# Meeting planning
# ---------------------------------------------------------------------------


def optimal_schedule(payload: MeetingPayload) -> tuple[int, MeetingSchedule]:
    """Exact maximum-friends schedule.

    Meetings run at minimum duration from the earliest feasible start.  Among
    maximum-count schedules the canonical one finishes earliest, with remaining
    ties broken by the lexicographically smallest friend-name sequence.
    """
    friends = sorted(payload.friends, key=lambda f: f.name)
    best_key: tuple[int, int, tuple[str, ...]] | None = None
    best_sched: tuple[Meeting, ...] = ()

    def rec(loc: str, time: int, met: set[str], sched: list[Meeting]) -> None:
        nonlocal best_key, best_sched
        finish = sched[-1].end if sched else payload.day_start
        key = (-len(sched), finish, tuple(m.friend for m in sched))
        if best_key is None or key < best_key:
            best_key = key
            best_sched = tuple(sched)
        optimistic = len(sched) + sum(
            1
            for f in friends
            if f.name not in met and max(time, f.avail_start) + f.min_minutes <= f.avail_end
        )
        if best_key is not None and optimistic < -best_key[0]:
            return
        for f in friends:
            if f.name in met:
                continue
            arrive = time + payload.travel(loc, f.location)
            start = max(arrive, f.avail_start)
            end = start + f.min_minutes
            if end > f.avail_end:
                continue
            sched.append(Meeting(friend=f.name, location=f.location, start=start, end=end))
            met.add(f.name)
            rec(f.location, end, met, sched)
            met.discard(f.name)
            sched.pop()

    rec(payload.start_location, payload.day_start, set(), [])
    return len(best_sched), MeetingSchedule(meetings=best_sched)


def _meeting_dfs(payload: MeetingPayload) -> SearchTrace:
    target_count, _ = optimal_schedule(payload)
    tracer = _Tracer()
    friends = sorted(payload.friends, key=lambda f: f.name)
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail="state = (location, clock, met set); try friends in name order",
        state=(
            f"(at {payload.start_location}, {minutes_to_clock(payload.day_start)}, "
            f"met 0; best reachable = {target_count})"
        ),
        depth=0,
    )
    if target_count == 0:
        tracer.emit(
            "", Action.EVALUATION,
            detail="no friend can be met at all",
            state="met 0",
            depth=0,
        )
        return tracer.finish(TaskKind.MEETING_PLANNING, SearchMode.DFS, None)

    sched: list[Meeting] = []
    met: set[str] = set()
    solution: MeetingSchedule | None = None

    def optimistic_from(time: int) -> int:
        return len(sched) + sum(
            1
            for f in friends
            if f.name not in met and max(time, f.avail_start) + f.min_minutes <= f.avail_end
        )

    def descend(loc: str, time: int, parent_label: str, rel_depth: int) -> bool:
        nonlocal solution
        if len(sched) == target_count:
            tracer.emit(
                parent_label, Action.EVALUATION,
                detail="count check",
                state=f"met {target_count} friends — the optimum",
                depth=len(sched),
            )
            solution = MeetingSchedule(meetings=tuple(sched))
            tracer.emit(
                parent_label, Action.SUCCESS,
                detail="meet " + ", ".join(m.friend for m in sched),
                state=f"finish {minutes_to_clock(sched[-1].end)}",
                depth=len(sched),
            )
            return True
        index = 0
        for f in friends:
            if f.name in met:
                continue
            index += 1
            label = _child_label(parent_label, rel_depth, index)
            transition = f"Meet **{f.name}** at {f.location}"
            travel = payload.travel(loc, f.location)
            arrive = time + travel
            start = max(arrive, f.avail_start)
            end = start + f.min_minutes
            if end > f.avail_end:
                tracer.emit(
                    label, Action.PRUNE, reason="window", move=f.name,
                    detail=transition,
                    state=(
                        f"arrive {minutes_to_clock(arrive)}; window closes "
                        f"{minutes_to_clock(f.avail_end)}, needs {f.min_minutes} min"
                    ),
                    depth=len(sched) + 1,
                )
                continue
            sched.append(Meeting(friend=f.name, location=f.location, start=start, end=end))
            met.add(f.name)
            reachable = optimistic_from(end)
            if reachable < target_count:
                sched.pop()
                met.discard(f.name)
                tracer.emit(
                    label, Action.PRUNE, reason="budget", move=f.name,
                    detail=transition,
                    state=f"at most {reachable} friends reachable this way; need {target_count}",
                    depth=len(sched) + 1,
                )
                continue
            tracer.emit(
                label, Action.EXPANSION, move=f.name, detail=transition,
                state=(
                    f"travel {travel} min → meet {minutes_to_clock(start)}-"
                    f"{minutes_to_clock(end)}"
                ),
                depth=len(sched),
            )
            if descend(f.location, end, label, rel_depth + 1):
                return True
            sched.pop()
            met.discard(f.name)
            tracer.emit(
                label, Action.BACKTRACK,
                detail=f"dead end after meeting {f.name}; undo it",
                depth=len(sched) + 1,
            )
        return False

    descend(payload.start_location, payload.day_start, "", 0)
    return tracer.finish(TaskKind.MEETING_PLANNING, SearchMode.DFS, solution)


def _meeting_greedy(payload: MeetingPayload) -> SearchTrace:
    tracer = _Tracer()
    count, schedule = optimal_schedule(payload)
    tracer.emit(
        "",
        Action.INITIALIZATION,
        detail="commit one meeting per step",
        state=(
            f"(at {payload.start_location}, {minutes_to_clock(payload.day_start)}, met 0)"
        ),
        depth=0,
    )
    if count > 0:
        loc = payload.start_location
        for i, mtg in enumerate(schedule.meetings):
            travel = payload.travel(loc, mtg.location)
            tracer.emit(
                f"G{i}", Action.EXPANSION, move=mtg.friend,
                detail=f"Meet **{mtg.friend}** at {mtg.location}",
                state=(
                    f"travel {travel} min → meet {minutes_to_clock(mtg.start)}-"
                    f"{minutes_to_clock(mtg.end)}"
                ),
                depth=i + 1,
            )
            loc = mtg.location
        tracer.emit(
            f"G{count - 1}", Action.EVALUATION,
            detail="count check",
            state=f"met {count} friends",
            depth=count,
        )
        tracer.emit(
            f"G{count - 1}", Action.SUCCESS,
            detail="meet " + ", ".join(m.friend for m in schedule.meetings),
            state=f"finish {minutes_to_clock(schedule.meetings[-1].end)}",
            depth=count,
        )
        return tracer.finish(TaskKind.MEETING_PLANNING, SearchMode.GREEDY, schedule)

    tracer.emit(
        "", Action.EVALUATION,
        detail="no feasible first meeting",
        state="met 0",
        depth=0,
    )
    return tracer.finish(TaskKind.MEETING_PLANNING, SearchMode.GREEDY, None)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


_DFS: dict[TaskKind, Callable] = {
    TaskKind.TRIP_PLANNING: _trip_dfs,
    TaskKind.VERTEX_COVER: _cover_dfs,
    TaskKind.THREE_DM: _threedm_dfs,
    TaskKind.MEETING_PLANNING: _meeting_dfs,
}

_GREEDY: dict[TaskKind, Callable] = {
    TaskKind.TRIP_PLANNING: _trip_greedy,
    TaskKind.VERTEX_COVER: _cover_greedy,
    TaskKind.THREE_DM: _threedm_greedy,
    TaskKind.MEETING_PLANNING: _meeting_greedy,
}


def solve_payload(payload: Payload, mode: SearchMode = SearchMode.DFS) -> SearchTrace:
    kind = payload_kind(payload)
    table = _GREEDY if mode is SearchMode.GREEDY else _DFS
    return table[kind](payload)


def solve(instance: ProblemInstance, mode: SearchMode = SearchMode.DFS) -> SearchTrace:
    """Solve an instance from its payload alone (ground truth is never read)."""
    return solve_payload(instance.payload, mode)


_ENUM_GUARDS = {
    TaskKind.TRIP_PLANNING: ("cities", 8),
    TaskKind.VERTEX_COVER: ("vertices", 16),
    TaskKind.THREE_DM: ("element axis size", 6),
    TaskKind.MEETING_PLANNING: ("friends", 7),
}


def enumerate_all(instance: ProblemInstance | Payload) -> list[Solution]:
    """Brute-force enumeration of every valid solution, as an independent oracle.

    No pruning beyond direct constraint checks.  For optimization tasks
    (VertexCover, MeetingPlanning) "valid" means optimal: all minimum-size
    covers / all maximum-count canonical schedules.  Raises TooLargeError
    beyond the per-task size guards.
    """
    payload = instance.payload if isinstance(instance, ProblemInstance) else instance
    kind = payload_kind(payload)

    if kind is TaskKind.TRIP_PLANNING:
        assert isinstance(payload, TripPayload)
        if len(payload.cities) > _ENUM_GUARDS[kind][1]:
            raise TooLargeError(
                f"{len(payload.cities)} cities exceeds the enumeration guard "
                f"of {_ENUM_GUARDS[kind][1]}"
            )
        plans = []
        for order in itertools.permutations(payload.cities):
            if check_trip_order(payload, order):
                plans.append(TripPlan(legs=trip_legs_for_order(payload, order)))
        return plans

    if kind is TaskKind.VERTEX_COVER:
        assert isinstance(payload, VertexCoverPayload)
        n = payload.vertex_count
        if n > _ENUM_GUARDS[kind][1]:
            raise TooLargeError(
                f"{n} vertices exceeds the enumeration guard of {_ENUM_GUARDS[kind][1]}"
            )
        for size in range(0, n + 1):
            covers = [
                CoverSet(vertices=frozenset(combo))
                for combo in itertools.combinations(range(n), size)
                if all(u in combo or v in combo for u, v in payload.edges)
            ]
            if covers:
                return covers
        return []

    if kind is TaskKind.THREE_DM:
        assert isinstance(payload, ThreeDMPayload)
        n = payload.n
        if n > _ENUM_GUARDS[kind][1]:
            raise TooLargeError(
                f"axis size {n} exceeds the enumeration guard of {_ENUM_GUARDS[kind][1]}"
            )
        by_x: dict[int, list[tuple[int, int, int]]] = {}
        for t in sorted(payload.triples):
            by_x.setdefault(t[0], []).append(t)
        matchings: list[Solution] = []

        def extend(x: int, used_y: set[int], used_z: set[int], picked: list) -> None:
            if x == n:
                matchings.append(Matching(triples=frozenset(picked)))
                return
            for t in by_x.get(x, []):
                if t[1] in used_y or t[2] in used_z:
                    continue
                picked.append(t)
                extend(x + 1, used_y | {t[1]}, used_z | {t[2]}, picked)
                picked.pop()

        extend(0, set(), set(), [])
        return matchings

    assert isinstance(payload, MeetingPayload)
    if len(payload.friends) > _ENUM_GUARDS[kind][1]:
        raise TooLargeError(
            f"{len(payload.friends)} friends exceeds the enumeration guard "
            f"of {_ENUM_GUARDS[kind][1]}"
        )
    friends = sorted(payload.friends, key=lambda f: f.name)
    schedules: list[tuple[Meeting, ...]] = []

    def walk(loc: str, time: int, met: set[str], sched: list[Meeting]) -> None:
        schedules.append(tuple(sched))
        for f in friends:
            if f.name in met:
                continue
            arrive = time + payload.travel(loc, f.location)
            start = max(arrive, f.avail_start)
            end = start + f.min_minutes
            if end > f.avail_end:
                continue
            sched.append(Meeting(friend=f.name, location=f.location, start=start, end=end))
            met.add(f.name)
            walk(f.location, end, met, sched)
            met.discard(f.name)
            sched.pop()

    walk(payload.start_location, payload.day_start, set(), [])
    best = max(len(s) for s in schedules)
    return [MeetingSchedule(meetings=s) for s in schedules if len(s) == best]


# ---------------------------------------------------------------------------
# Trace utilities
# ---------------------------------------------------------------------------


def replay_moves(trace: SearchTrace) -> tuple[str, ...]:
    """Replay pushes/pops over the events; returns the kept move stack.

    For a Success trace this reconstructs the solution path.
    """
    stack: list[str] = []
    for event in trace.events:
        if event.action is Action.EXPANSION:
            stack.append(event.move)
        elif event.action is Action.BACKTRACK:
            if not stack:
                raise ValueError("Backtrack with empty stack: unmatched pop")
            stack.pop()
    return tuple(stack)


def trace_to_records(trace: SearchTrace) -> list[dict]:
    records = []
    for e in trace.events:
        records.append(
            {
                "step": e.step_label,
                "action": e.action.value,
                "reason": e.reason or None,
                "move": e.move,
                "detail": e.detail,
                "state": e.state_summary,
                "depth": e.depth,
            }
        )
    return records


def write_trace(path: str | Path, trace: SearchTrace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in trace_to_records(trace):
            fh.write(json.dumps(record, sort_keys=True) + "\n")
